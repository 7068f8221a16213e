"""Full-step ALADIN for affinely coupled separable NLPs.

One iteration:

1. every region solves
   ``min f_i(x) + lambda' A_i x + rho/2 ||x - z_i||^2_{Sigma_i}`` over its
   local set;
2. at each local solution the region reports the floored Hessian ``B_i`` of
   its Lagrangian, the gradient ``g_i`` of ``f_i`` and the Jacobian ``C_i`` of
   its active constraints;
3. the coordinator solves the equality constrained QP

   ``min sum_i 1/2 dx_i' B_i dx_i + g_i' dx_i + lambda' s + mu/2 ||s||^2``
   s.t. ``sum_i A_i (x_i + dx_i) = s`` and ``C_i dx_i = 0``;

4. ``z = x + dx`` and ``lambda`` becomes the multiplier of the coupling
   row.

No line search is performed.
"""

from __future__ import annotations

import math
import time
import warnings
from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .admm import RunResult, _dist
from .errors import CoordinationError, DimensionError, LocalSolveError
from .ipm import IPMOptions
from .linalg import LDLFactor, independent_rows
from .local import (AugmentedLocalProblem, SensitivityPack,
                    extract_sensitivities, solve_local)
from .problem import (IterateState, PartitionedProblem, consensus_gap, constraint_violation,
                      objective_value, primal_gap)
from .trace import ConvergenceTrace, IterationRecord

__all__ = [
    "AladinConfig",
    "CoordinationResult",
    "aladin_local_step",
    "aladin_coordination",
    "aladin_run",
    "similarity_packs",
]


@dataclass(frozen=True)
class AladinConfig:
    """ALADIN parameters.

    ``mu = inf`` removes the slack from the coordination QP.  The
    ``Sigma_i`` weights live on the subproblems (``scaling_diag``).

    ``hessian`` selects the model ``B_i`` (see
    :func:`~dopf.local.extract_sensitivities`).  ``"auto"`` uses the
    null-space floored Hessian until
    ``max(||A x^k||_inf, ||x^k - z^k||_inf) <= exact_switch_tol`` and the
    exact Hessian from then on; exact Hessians far from a solution make the
    full step unreliable, while the floored model alone only converges
    linearly.
    """

    rho: float
    mu: float
    max_iter: int = 100
    termination_eps: float = 1e-6
    active_tol: float = 1e-6
    hessian_floor: float = 1e-6
    hessian: str = "auto"
    exact_switch_tol: float = 1e-4
    min_iter: int = 0
    local_options: Optional[IPMOptions] = None

    def __post_init__(self):
        if self.hessian not in ("auto", "reduced", "full", "exact"):
            raise ValueError(f"unknown hessian mode {self.hessian!r}")
        if not self.rho > 0 or not self.mu > 0:
            raise ValueError("rho and mu must be positive")
        if not self.termination_eps > 0:
            raise ValueError("termination_eps must be positive")
        if self.max_iter < 0:
            raise ValueError("max_iter must be >= 0")


@dataclass
class CoordinationResult:
    """Solution of the coordination QP.

    ``slack`` is ``sum_i A_i (x_i + dx_i)`` and ``lambda_qp`` the multiplier
    of that row.  ``dropped`` holds ``(region, rows)`` pairs naming the rows
    of ``C_i`` removed as linearly dependent.
    """

    delta_x: list
    slack: np.ndarray
    lambda_qp: np.ndarray
    kkt_residual: float = 0.0
    dropped: tuple = ()
    regularization: float = 0.0


def aladin_local_step(problem: PartitionedProblem, state: IterateState,
                      config: AladinConfig) -> list:
    """Solve every region's ``Sigma``-scaled subproblem, warm started at ``z_i``.

    Raises
    ------
    LocalSolveError
        With the region index when a solve does not reach optimality.
    """
    if state.lambda_global is None:
        raise ValueError("ALADIN needs the global multiplier")
    lam = state.lambda_global
    out = []
    for i, (reg, zi) in enumerate(zip(problem.regions, state.z)):
        aug = _augmented(reg, zi, lam, config.rho)
        try:
            res = solve_local(aug, warm_start=zi, options=config.local_options)
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            raise LocalSolveError(str(exc), region=i) from exc
        if not res.optimal:
            raise LocalSolveError(f"local solve ended with status {res.status!r}", region=i, result=res)
        out.append(res)
    return out


def _augmented(reg, zi, lam, rho):
    return AugmentedLocalProblem(base=reg, linear_term=reg.A.T @ lam, prox_center=zi,
                                 prox_weight=rho, prox_metric="scaled_identity")


def aladin_coordination(problem: PartitionedProblem, x, packs, lam, config: AladinConfig,
                        check_tol: float = 1e-10) -> CoordinationResult:
    """Solve the coordination QP through one sparse KKT factorization.

    With ``w = lambda_qp`` the system is::

        [ B   A'     C' ] [dx]   [ -g               ]
        [ A  -I/mu   0  ] [w ] = [ -A x - lambda/mu ]
        [ C   0      0  ] [eta]  [ 0                ]

    and ``s = (w - lambda) / mu``.  When some ``B_i`` is not positive
    definite, ``delta I`` is added to every ``B_i`` with the smallest
    ``delta`` in ``{0, 1e-4, 1e-3, ...}`` for which the matrix has exactly
    ``n`` positive eigenvalues, so that the QP is convex on its feasible
    set.

    Raises
    ------
    CoordinationError
        If the KKT matrix is singular after dropping dependent ``C_i`` rows,
        or the solution misses the scaled residual bound ``check_tol``.
    """
    xs = problem._check(x)
    if len(packs) != len(xs):
        raise DimensionError("one sensitivity pack per region is required")
    lam = np.asarray(lam, dtype=float)
    n_c = problem.n_c
    if lam.shape != (n_c,):
        raise DimensionError("lambda must have length n_c")
    mu = float(config.mu)
    offs = problem.offsets
    n = int(offs[-1])
    B_blocks, C_blocks, g, dropped = [], [], [], []
    for i, (reg, pk) in enumerate(zip(problem.regions, packs)):
        if pk.B.shape != (reg.n_xi, reg.n_xi) or pk.g.shape != (reg.n_xi,):
            raise DimensionError(f"region {i}: B and g do not match the region size")
        C = np.asarray(pk.C, dtype=float).reshape(-1, reg.n_xi)
        keep = independent_rows(C)
        if keep.size < C.shape[0]:
            lost = np.setdiff1d(np.arange(C.shape[0]), keep)
            warnings.warn(f"region {i}: dropped {lost.size} linearly dependent active "
                          "constraint rows (LICQ violated)", RuntimeWarning, stacklevel=2)
            dropped.append((i, lost))
            C = C[keep]
        B_blocks.append(sp.csr_matrix(pk.B))
        C_blocks.append(sp.csr_matrix(C))
        g.append(pk.g)
    B = sp.block_diag(B_blocks, format="csr") if B_blocks else sp.csr_matrix((0, 0))
    C = sp.block_diag(C_blocks, format="csr") if C_blocks else sp.csr_matrix((0, n))
    C = sp.csr_matrix(C, shape=(C.shape[0], n))
    A = sp.csr_matrix(problem.coupling_matrix())
    m_c = C.shape[0]
    inv_mu = 0.0 if math.isinf(mu) else 1.0 / mu
    K = sp.bmat([[B, A.T, C.T],
                 [A, -inv_mu * sp.identity(n_c), None],
                 [C, None, sp.csr_matrix((m_c, m_c))]], format="csc")
    delta = _inertia_shift(K, B, n) if not all(_is_pd(pk.B) for pk in packs) else 0.0
    if delta:
        K = K + sp.diags(np.r_[np.full(n, delta), np.zeros(K.shape[0] - n)], format="csc")
    x_all = problem.gather(xs)
    Ax = A @ x_all
    g_all = np.concatenate(g) if g else np.zeros(0)
    rhs = np.concatenate([-g_all, -Ax - inv_mu * lam, np.zeros(m_c)])
    try:
        lu = spla.splu(K)
    except RuntimeError as exc:
        raise CoordinationError(f"coordination KKT matrix is singular: {exc}") from exc
    sol = lu.solve(rhs)
    # one refinement step against cancellation in the large multipliers
    sol = sol + lu.solve(rhs - K @ sol)
    if not np.all(np.isfinite(sol)):
        raise CoordinationError("coordination KKT solve produced non-finite values")
    dx_all, w = sol[:n], sol[n:n + n_c]
    res = rhs - K @ sol
    scale = max(1.0, float(np.max(np.abs(rhs), initial=0.0)),
                float(np.max(np.abs(K @ np.abs(sol)), initial=0.0)) if sol.size else 1.0)
    kkt = float(np.max(np.abs(res), initial=0.0)) / scale
    if kkt > check_tol:
        raise CoordinationError(f"coordination KKT residual {kkt:.3e} exceeds tolerance")
    s = A @ (x_all + dx_all)
    return CoordinationResult(delta_x=problem.scatter(dx_all), slack=s, lambda_qp=w,
                              kkt_residual=kkt, dropped=tuple(dropped), regularization=delta)


def _is_pd(B) -> bool:
    try:
        np.linalg.cholesky(np.asarray(B, dtype=float))
    except np.linalg.LinAlgError:
        return False
    return True


def _inertia_shift(K, B, n, delta_max: float = 1e10) -> float:
    Kd = K.toarray()
    delta = 0.0
    while True:
        Kt = Kd.copy()
        Kt[np.arange(n), np.arange(n)] += delta
        pos, _, zero = LDLFactor(Kt).inertia
        if pos == n and zero == 0:
            return delta
        delta = 1e-4 if delta == 0.0 else 10.0 * delta
        if delta > delta_max:
            raise CoordinationError("coordination QP could not be convexified")


def similarity_packs(problem: PartitionedProblem, lambdas, rho: float, floor: float = 0.0,
                     sign: float = -1.0) -> list:
    """Sensitivities that turn the coordination QP into ADMM's consensus QP.

    ``B_i = rho A_i' A_i + floor I``, ``g_i = sign A_i' lambda_i`` and no
    active rows; combine with ``mu = inf``.  With full column rank ``A_i``
    the substitution is exact at ``floor = 0``; a positive ``floor`` makes
    ``B_i`` invertible otherwise, at an ``O(floor / rho)`` deviation.  ``sign`` must match the ADMM
    consensus sign, and ``lambdas`` are ADMM's multipliers after the dual
    update.
    """
    out = []
    for reg, l in zip(problem.regions, lambdas):
        A = reg.A.toarray()
        B = rho * (A.T @ A) + floor * np.eye(reg.n_xi)
        out.append(SensitivityPack(B=B, g=sign * (A.T @ np.asarray(l, dtype=float)),
                                   C=np.zeros((0, reg.n_xi))))
    return out


def aladin_run(problem: PartitionedProblem, initial: IterateState, config: AladinConfig,
               reference=None, keep_history: bool = True) -> RunResult:
    """Run full-step ALADIN from ``initial``.

    Stops once ``max(||A x^k||_inf, ||x^k - z^k||_inf) <= termination_eps``.
    Record ``k`` pairs ``x^k`` with ``z^k``, as in the ADMM trace.  A failed
    local solve or coordination ends the run with status
    ``"local-failure"`` or ``"coordination-failure"``.
    """
    if initial.lambda_global is None:
        raise ValueError("initial state must carry the global multiplier")
    ref = None if reference is None else np.asarray(reference, dtype=float)
    state = initial
    trace = ConvergenceTrace()
    steps, fz, hist = [], [], []
    prev = None
    status, error = "max_iter", None
    mode = "reduced" if config.hessian == "auto" else config.hessian
    for k in range(config.max_iter + 1):
        t0 = time.perf_counter()
        try:
            results = aladin_local_step(problem, state, config)
        except LocalSolveError as exc:
            status, error = "local-failure", str(exc)
            break
        xs = [r.x_opt for r in results]
        cg = consensus_gap(problem, xs)
        dxz = float(np.max(np.abs(problem.gather(xs) - problem.gather(state.z)), initial=0.0))
        if config.hessian == "auto" and max(cg, dxz) <= config.exact_switch_tol:
            mode = "exact"
        packs = [extract_sensitivities(_augmented(reg, zi, state.lambda_global, config.rho), r,
                                       active_tol=config.active_tol, floor=config.hessian_floor,
                                       hessian=mode)
                 for reg, zi, r in zip(problem.regions, state.z, results)]
        t1 = time.perf_counter()
        trace.append(IterationRecord(
            k=k, consensus_gap=cg, objective=objective_value(problem, xs),
            dist_to_ref=_dist(problem, xs, ref), violation=constraint_violation(problem, state.z),
            primal_gap=primal_gap(problem, xs, state.z), local_ms=1e3 * (t1 - t0), coord_ms=0.0))
        fz.append(objective_value(problem, state.z))
        steps.append(float("nan") if prev is None else
                     float(np.max(np.abs(problem.gather(xs) - problem.gather(prev)))))
        if keep_history:
            hist.append([xi.copy() for xi in xs])
        prev = xs
        if max(cg, dxz) <= config.termination_eps and k + 1 >= config.min_iter:
            state = IterateState(z=state.z, x=tuple(xs), lambda_global=state.lambda_global, k=k)
            status = "converged"
            break
        try:
            co = aladin_coordination(problem, xs, packs, state.lambda_global, config)
        except CoordinationError as exc:
            status, error = "coordination-failure", str(exc)
            break
        t2 = time.perf_counter()
        trace.records[-1] = IterationRecord(*trace[-1].values()[:7], coord_ms=1e3 * (t2 - t1))
        z = [xi + d for xi, d in zip(xs, co.delta_x)]
        state = IterateState(z=tuple(z), x=tuple(xs), lambda_global=co.lambda_qp, k=k + 1)
    return RunResult(trace=trace, state=state, status=status, iterations=len(trace),
                     step_norms=steps, objective_at_z=fz, x_history=hist, error=error,
                     problem=problem)
