"""Local subproblem solves for the coordination engines.

Each engine asks a region to minimize

    f_i(x) + c'x + (rho/2) (x - z)' M (x - z)   over the local feasible set,

with ``M = A_i' A_i`` (ADMM) or ``M = diag(Sigma_i)`` (ALADIN).  This module
wraps the interior-point solver for that problem, extracts ALADIN's
sensitivities at the solution, and provides the bounded nonlinear least
squares used for feasible initialization.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import Optional

import numpy as np
import scipy.optimize as sopt
import scipy.sparse as sp

from .errors import DimensionError
from .ipm import NLP, IPMOptions, interior_point
from .linalg import floor_eigenvalues, independent_rows, null_space_basis
from .problem import SmoothFunction, Subproblem, _dense

__all__ = [
    "AugmentedLocalProblem",
    "LocalSolveResult",
    "SensitivityPack",
    "LeastSquaresResult",
    "solve_local",
    "extract_sensitivities",
    "solve_constrained_least_squares",
    "local_kkt_residual",
]

COUPLING = "coupling"
SCALED_IDENTITY = "scaled_identity"


@dataclass(frozen=True, eq=False)
class AugmentedLocalProblem:
    """One region's augmented subproblem.

    ``linear_term`` is the vector ``A_i' lambda``; ``prox_metric`` selects
    ``rho A_i' A_i`` (``"coupling"``) or ``rho diag(Sigma_i)``
    (``"scaled_identity"``).
    """

    base: Subproblem
    linear_term: np.ndarray
    prox_center: np.ndarray
    prox_weight: float
    prox_metric: str = COUPLING

    def __post_init__(self):
        n = self.base.n_xi
        c = np.asarray(self.linear_term, dtype=float)
        z = np.asarray(self.prox_center, dtype=float)
        if c.shape != (n,) or z.shape != (n,):
            raise DimensionError(f"linear_term and prox_center must have length {n}")
        if not self.prox_weight >= 0:
            raise ValueError("prox_weight must be nonnegative")
        if self.prox_metric not in (COUPLING, SCALED_IDENTITY):
            raise ValueError(f"unknown prox metric {self.prox_metric!r}")
        object.__setattr__(self, "linear_term", c)
        object.__setattr__(self, "prox_center", z)
        object.__setattr__(self, "prox_weight", float(self.prox_weight))

    def metric(self) -> np.ndarray:
        """Dense ``M`` such that the proximal term is ``rho/2 (x-z)'M(x-z)``."""
        if self.prox_metric == COUPLING:
            A = self.base.A
            return (A.T @ A).toarray()
        return np.diag(self.base.scaling_diag)

    def objective_gradient(self, x) -> np.ndarray:
        """Gradient of the full augmented objective."""
        M = self.metric()
        return (self.base.objective.gradient(x) + self.linear_term
                + self.prox_weight * (M @ (x - self.prox_center)))


@dataclass
class LocalSolveResult:
    x_opt: np.ndarray
    eq_duals: np.ndarray
    ineq_duals: np.ndarray
    bound_duals: tuple
    status: str
    iterations: int
    stationarity: float = np.nan
    primal: float = np.nan
    complementarity: float = np.nan

    @property
    def optimal(self) -> bool:
        return self.status == "optimal"


@dataclass
class SensitivityPack:
    """Hessian approximation ``B``, gradient ``g`` and active Jacobian ``C``."""

    B: np.ndarray
    g: np.ndarray
    C: np.ndarray
    active_ineq: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    active_lower: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    active_upper: np.ndarray = field(default_factory=lambda: np.zeros(0, dtype=int))
    licq: bool = True


_STATUS = {"optimal": "optimal", "max_iter": "max_iter", "infeasible": "infeasible-detected"}


def _make_nlp(problem: AugmentedLocalProblem) -> NLP:
    base = problem.base
    M = problem.metric()
    rho = problem.prox_weight
    c, z = problem.linear_term, problem.prox_center
    f, g, h = base.objective, base.eq_constraints, base.ineq_constraints

    def fun(x):
        d = x - z
        return f.value(x) + c @ x + 0.5 * rho * (d @ M @ d)

    def grad(x):
        return f.gradient(x) + c + rho * (M @ (x - z))

    def hess(x, sigma, ye, yi):
        H = sigma * (f.hessian(x) + rho * M)
        if ye.size:
            H = H + g.hessian_vlp(x, ye)
        if yi.size:
            H = H + h.hessian_vlp(x, yi)
        return H

    return NLP(
        n=base.n_xi, f=fun, grad=grad, hess=hess,
        c_eq=g.eval, jac_eq=lambda x: _dense(g.jacobian(x)),
        c_in=h.eval, jac_in=lambda x: _dense(h.jacobian(x)),
        lower=base.lower, upper=base.upper, m_eq=g.dim_out, m_in=h.dim_out,
    )


def solve_local(problem: AugmentedLocalProblem, warm_start=None,
                options: Optional[IPMOptions] = None) -> LocalSolveResult:
    """Solve one augmented subproblem with the interior-point method.

    Parameters
    ----------
    problem : AugmentedLocalProblem
    warm_start : ndarray, optional
        Initial point; defaults to ``problem.prox_center``.
    options : IPMOptions, optional
        Defaults cap the solver at 200 iterations with tolerance 1e-8.

    Returns
    -------
    LocalSolveResult
        ``status`` is ``"optimal"``, ``"max_iter"`` or
        ``"infeasible-detected"``.
    """
    x0 = problem.prox_center if warm_start is None else np.asarray(warm_start, dtype=float)
    if x0.shape != (problem.base.n_xi,):
        raise DimensionError(f"warm start must have length {problem.base.n_xi}")
    res = interior_point(_make_nlp(problem), x0, options)
    return LocalSolveResult(
        x_opt=res.x, eq_duals=res.y_eq, ineq_duals=res.y_in,
        bound_duals=(res.z_lower, res.z_upper), status=_STATUS[res.status],
        iterations=res.iterations, stationarity=res.stationarity, primal=res.primal,
        complementarity=res.complementarity,
    )


def local_kkt_residual(problem: AugmentedLocalProblem, result: LocalSolveResult) -> dict:
    """Unscaled KKT residuals of the augmented subproblem at ``result``."""
    base, x = problem.base, result.x_opt
    r = problem.objective_gradient(x)
    if result.eq_duals.size:
        r += _dense(base.eq_constraints.jacobian(x)).T @ result.eq_duals
    if result.ineq_duals.size:
        r += _dense(base.ineq_constraints.jacobian(x)).T @ result.ineq_duals
    zl, zu = result.bound_duals
    r += zu - zl
    g = base.eq_constraints.eval(x)
    h = base.ineq_constraints.eval(x)
    primal = max(np.max(np.abs(g), initial=0.0), np.max(h, initial=0.0),
                 np.max(base.lower - x, initial=0.0), np.max(x - base.upper, initial=0.0))
    comp = np.max(np.abs(result.ineq_duals * h), initial=0.0)
    fl, fu = np.isfinite(base.lower), np.isfinite(base.upper)
    comp = max(comp, np.max(np.abs(zl[fl] * (x - base.lower)[fl]), initial=0.0),
               np.max(np.abs(zu[fu] * (base.upper - x)[fu]), initial=0.0))
    return {"stationarity": float(np.max(np.abs(r), initial=0.0)), "primal": float(primal),
            "complementarity": float(comp)}


def extract_sensitivities(problem: AugmentedLocalProblem, result: LocalSolveResult,
                          active_tol: float = 1e-6, floor: float = 1e-6,
                          hessian: str = "full") -> SensitivityPack:
    """ALADIN sensitivities at a local solution.

    ``g`` is the gradient of ``f_i``; ``C`` stacks all rows of the equality
    Jacobian, the inequality rows with ``|h_j| <= active_tol`` and unit rows
    for bounds within ``active_tol``.  ``B`` is built from the Hessian ``H``
    of ``f_i + y_g' g_i + gamma' h_i`` (the local Lagrangian without the
    augmentation terms) according to ``hessian``:

    ``"full"``
        eigenvalues of ``H`` raised to ``floor``;
    ``"reduced"``
        with ``Z`` an orthonormal basis of ``null(C)``, the eigenvalues of
        ``Z'HZ`` are raised to ``floor`` and ``B = Z (Z'HZ)_floored Z' + (I - ZZ')``.
        Only ``Z'BZ`` enters a QP step restricted to ``C dx = 0``, so
        positive curvature of ``H`` along the feasible directions is kept
        exactly;
    ``"exact"``
        ``H`` itself, possibly indefinite.
    """
    if not result.optimal:
        raise ValueError(f"sensitivities need an optimal local solution, got {result.status!r}")
    base, x = problem.base, result.x_opt
    H = base.objective.hessian(x)
    if result.eq_duals.size:
        H = H + base.eq_constraints.hessian_vlp(x, result.eq_duals)
    if result.ineq_duals.size:
        H = H + base.ineq_constraints.hessian_vlp(x, result.ineq_duals)
    if hessian not in ("full", "reduced", "exact"):
        raise ValueError(f"unknown hessian mode {hessian!r}")
    g = base.objective.gradient(x)
    rows = [_dense(base.eq_constraints.jacobian(x))]
    h = base.ineq_constraints.eval(x)
    act_h = np.flatnonzero(np.abs(h) <= active_tol)
    rows.append(_dense(base.ineq_constraints.jacobian(x))[act_h])
    act_l = np.flatnonzero(np.abs(x - base.lower) <= active_tol)
    act_u = np.flatnonzero((np.abs(base.upper - x) <= active_tol) & ~np.isin(np.arange(base.n_xi), act_l))
    eye = np.eye(base.n_xi)
    rows.append(eye[act_l])
    rows.append(eye[act_u])
    C = np.vstack(rows)
    keep = independent_rows(C)
    licq = keep.size == C.shape[0]
    H = 0.5 * (H + H.T)
    if hessian == "full":
        B = floor_eigenvalues(H, floor)
    elif hessian == "reduced":
        Z = null_space_basis(C[keep])
        w, V = np.linalg.eigh(Z.T @ H @ Z)
        P = Z @ V
        B = (P * np.maximum(w, floor)) @ P.T + (np.eye(base.n_xi) - Z @ Z.T)
        B = 0.5 * (B + B.T)
    else:
        B = H
    return SensitivityPack(B=B, g=g, C=C, active_ineq=act_h, active_lower=act_l,
                           active_upper=act_u, licq=licq)


@dataclass
class LeastSquaresResult:
    x: np.ndarray
    residual: float
    converged: bool
    nfev: int = 0


def solve_constrained_least_squares(residual: SmoothFunction, lower, upper, start,
                                    tol: float = 1e-8, max_nfev: int = 500) -> LeastSquaresResult:
    """Find a point in ``[lower, upper]`` with ``||residual||_inf <= tol``.

    Minimizes ``0.5 ||r(x)||^2`` with scipy's bound-respecting dogbox
    method, retrying with trust-region reflective if that stalls; fixed variables (``lower == upper``) are held at
    their value.  Non-convergence is reported through ``converged=False``
    together with the best point found.
    """
    n = residual.dim_in
    lo = np.broadcast_to(np.asarray(lower, dtype=float), (n,)).copy()
    hi = np.broadcast_to(np.asarray(upper, dtype=float), (n,)).copy()
    x0 = np.clip(np.asarray(start, dtype=float), lo, hi)
    fixed = np.isfinite(lo) & np.isfinite(hi) & (hi - lo <= 1e-14 * np.maximum(1.0, np.abs(lo)))
    free = np.flatnonzero(~fixed)
    base = np.where(fixed, lo, x0)

    def full(v):
        x = base.copy()
        x[free] = v
        return x

    def fun(v):
        return residual.eval(full(v))

    def jac(v):
        J = residual.jacobian(full(v))
        return (J.tocsc()[:, free] if sp.issparse(J) else J[:, free])

    if free.size == 0:
        r = residual.eval(base)
        res_norm = float(np.max(np.abs(r), initial=0.0))
        return LeastSquaresResult(base, res_norm, res_norm <= tol, 1)
    v0 = x0[free]
    best, nfev = None, 0
    # dogbox copes better with solutions on the box boundary; trf is the fallback
    for method in ("dogbox", "trf"):
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            sol = sopt.least_squares(fun, v0, jac=jac, bounds=(lo[free], hi[free]), method=method,
                                     xtol=1e-15, ftol=1e-15, gtol=1e-15, max_nfev=max_nfev,
                                     x_scale="jac")
        nfev += int(sol.nfev)
        x = full(np.clip(sol.x, lo[free], hi[free]))
        res_norm = float(np.max(np.abs(residual.eval(x)), initial=0.0))
        if best is None or res_norm < best[1]:
            best = (x, res_norm)
        if res_norm <= tol:
            break
    return LeastSquaresResult(best[0], best[1], best[1] <= tol, nfev)
