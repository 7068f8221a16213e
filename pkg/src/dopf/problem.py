"""Affinely coupled separable NLPs.

A problem is a list of regions, each with its own smooth objective,
equality and inequality constraints, box bounds and a coupling matrix
``A_i``.  The regions only interact through the affine constraint
``sum_i A_i x_i = 0``::

    min   sum_i f_i(x_i)
    s.t.  g_i(x_i) = 0,  h_i(x_i) <= 0,  lower_i <= x_i <= upper_i
          sum_i A_i x_i = 0
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence

import numpy as np
import scipy.sparse as sp

from .errors import DimensionError, PoisonedEvaluationError

__all__ = [
    "SmoothFunction",
    "Subproblem",
    "PartitionedProblem",
    "IterateState",
    "KKTDuals",
    "KKTResidual",
    "consensus_gap",
    "primal_gap",
    "constraint_violation",
    "kkt_residual",
    "estimate_duals",
    "objective_value",
]


def _dense(M) -> np.ndarray:
    if sp.issparse(M):
        return M.toarray()
    return np.asarray(M, dtype=float)


class SmoothFunction:
    """Value, Jacobian and weighted Hessian of a C^2 map R^n -> R^m.

    Parameters
    ----------
    dim_in, dim_out : int
        Input and output dimensions.
    fun : callable
        ``x -> (dim_out,)`` array.
    jac : callable
        ``x -> (dim_out, dim_in)`` dense array or sparse matrix.
    hess : callable
        ``(x, w) -> (dim_in, dim_in)`` array holding ``sum_j w_j * Hess f_j(x)``.

    All three callbacks must be reentrant.  Any NaN or Inf they return
    raises :class:`PoisonedEvaluationError`.
    """

    __slots__ = ("dim_in", "dim_out", "_fun", "_jac", "_hess", "name")

    def __init__(self, dim_in: int, dim_out: int, fun: Callable, jac: Callable,
                 hess: Callable, name: str = ""):
        self.dim_in = int(dim_in)
        self.dim_out = int(dim_out)
        self._fun = fun
        self._jac = jac
        self._hess = hess
        self.name = name

    def __repr__(self):
        return f"SmoothFunction({self.name or '?'}: R^{self.dim_in} -> R^{self.dim_out})"

    def _check(self, what, arr):
        if not np.all(np.isfinite(arr.data if sp.issparse(arr) else arr)):
            raise PoisonedEvaluationError(f"{self.name or 'function'} {what} is not finite")
        return arr

    def eval(self, x) -> np.ndarray:
        val = np.atleast_1d(np.asarray(self._fun(x), dtype=float))
        if val.shape != (self.dim_out,):
            raise DimensionError(f"{self!r}: value has shape {val.shape}")
        return self._check("value", val)

    def jacobian(self, x):
        J = self._jac(x)
        if not sp.issparse(J):
            J = np.asarray(J, dtype=float).reshape(self.dim_out, self.dim_in)
        elif J.shape != (self.dim_out, self.dim_in):
            raise DimensionError(f"{self!r}: Jacobian has shape {J.shape}")
        return self._check("Jacobian", J)

    def hessian_vlp(self, x, weights) -> np.ndarray:
        weights = np.atleast_1d(np.asarray(weights, dtype=float))
        H = _dense(self._hess(x, weights))
        return self._check("Hessian", H)

    # scalar conveniences
    def value(self, x) -> float:
        return float(self.eval(x)[0])

    def gradient(self, x) -> np.ndarray:
        return _dense(self.jacobian(x))[0]

    def hessian(self, x) -> np.ndarray:
        return self.hessian_vlp(x, np.ones(1))

    @classmethod
    def empty(cls, n: int) -> "SmoothFunction":
        """Map with no outputs, used for absent constraint blocks."""
        return cls(n, 0, lambda x: np.zeros(0), lambda x: np.zeros((0, n)),
                   lambda x, w: np.zeros((n, n)), name="empty")

    @classmethod
    def quadratic(cls, Q, c=None, c0: float = 0.0) -> "SmoothFunction":
        """Scalar ``0.5 x'Qx + c'x + c0`` (``Q`` is symmetrized)."""
        Q = np.atleast_2d(np.asarray(Q, dtype=float))
        Q = 0.5 * (Q + Q.T)
        n = Q.shape[0]
        c = np.zeros(n) if c is None else np.asarray(c, dtype=float)
        return cls(
            n, 1,
            lambda x: np.array([0.5 * x @ Q @ x + c @ x + c0]),
            lambda x: (Q @ x + c)[None, :],
            lambda x, w: w[0] * Q,
            name="quadratic",
        )

    @classmethod
    def affine(cls, M, b=None) -> "SmoothFunction":
        """Vector map ``M x + b``."""
        M = np.atleast_2d(np.asarray(M, dtype=float))
        m, n = M.shape
        b = np.zeros(m) if b is None else np.asarray(b, dtype=float)
        return cls(n, m, lambda x: M @ x + b, lambda x: M,
                   lambda x, w: np.zeros((n, n)), name="affine")


@dataclass(frozen=True, eq=False)
class Subproblem:
    """Data of one region.

    Attributes
    ----------
    objective : SmoothFunction
        Scalar local cost ``f_i``.
    eq_constraints, ineq_constraints : SmoothFunction
        ``g_i(x) = 0`` and ``h_i(x) <= 0``.
    lower, upper : ndarray
        Box bounds, infinite entries allowed.  ``lower == upper`` fixes a
        variable.
    A : scipy.sparse.csc_matrix
        Coupling block of shape ``(n_c, n_xi)``.
    scaling_diag : ndarray
        Positive diagonal of the ALADIN proximal metric.
    """

    objective: SmoothFunction
    A: sp.csc_matrix
    eq_constraints: Optional[SmoothFunction] = None
    ineq_constraints: Optional[SmoothFunction] = None
    lower: Optional[np.ndarray] = None
    upper: Optional[np.ndarray] = None
    scaling_diag: Optional[np.ndarray] = None
    name: str = ""

    def __post_init__(self):
        n = self.objective.dim_in
        if self.objective.dim_out != 1:
            raise DimensionError("objective must be scalar valued")
        A = sp.csc_matrix(self.A, dtype=float)
        if A.shape[1] != n:
            raise DimensionError(f"A has {A.shape[1]} columns, expected {n}")
        set_ = lambda k, v: object.__setattr__(self, k, v)  # noqa: E731
        set_("A", A)
        for key in ("eq_constraints", "ineq_constraints"):
            fn = getattr(self, key)
            if fn is None:
                set_(key, SmoothFunction.empty(n))
            elif fn.dim_in != n:
                raise DimensionError(f"{key} expects {fn.dim_in} inputs, region has {n}")
        lo = np.full(n, -np.inf) if self.lower is None else np.asarray(self.lower, dtype=float).copy()
        hi = np.full(n, np.inf) if self.upper is None else np.asarray(self.upper, dtype=float).copy()
        if lo.shape != (n,) or hi.shape != (n,):
            raise DimensionError("bounds must have length n_xi")
        if np.any(lo > hi):
            raise ValueError("lower bound exceeds upper bound")
        sc = np.ones(n) if self.scaling_diag is None else np.asarray(self.scaling_diag, dtype=float).copy()
        if sc.shape != (n,):
            raise DimensionError("scaling_diag must have length n_xi")
        if np.any(sc <= 0):
            raise ValueError("scaling_diag entries must be strictly positive")
        for arr in (lo, hi, sc):
            arr.flags.writeable = False
        set_("lower", lo)
        set_("upper", hi)
        set_("scaling_diag", sc)

    @property
    def n_xi(self) -> int:
        return self.objective.dim_in

    @property
    def n_c(self) -> int:
        return self.A.shape[0]

    def replace(self, **changes) -> "Subproblem":
        kw = {k: getattr(self, k) for k in self.__dataclass_fields__}
        kw.update(changes)
        return Subproblem(**kw)


@dataclass(frozen=True, eq=False)
class PartitionedProblem:
    """Ordered collection of regions sharing ``n_c`` consensus rows."""

    regions: tuple
    n_c: int = field(init=False)

    def __post_init__(self):
        regions = tuple(self.regions)
        if not regions:
            raise ValueError("at least one region is required")
        rows = {r.A.shape[0] for r in regions}
        if len(rows) != 1:
            raise DimensionError(f"coupling blocks disagree on row count: {sorted(rows)}")
        object.__setattr__(self, "regions", regions)
        object.__setattr__(self, "n_c", rows.pop())
        sizes = [r.n_xi for r in regions]
        object.__setattr__(self, "_offsets", np.concatenate([[0], np.cumsum(sizes)]).astype(int))

    def __len__(self):
        return len(self.regions)

    @property
    def n_x(self) -> int:
        return int(self._offsets[-1])

    @property
    def offsets(self) -> np.ndarray:
        return self._offsets.copy()

    def gather(self, xs: Sequence[np.ndarray]) -> np.ndarray:
        """Stack per-region vectors into one vector of length ``n_x``."""
        xs = self._check(xs)
        return np.concatenate(xs) if xs else np.zeros(0)

    def scatter(self, x: np.ndarray) -> list:
        x = np.asarray(x, dtype=float)
        if x.shape != (self.n_x,):
            raise DimensionError(f"expected a vector of length {self.n_x}, got {x.shape}")
        o = self._offsets
        return [x[o[i]:o[i + 1]].copy() for i in range(len(self.regions))]

    def coupling_matrix(self) -> sp.csc_matrix:
        """Horizontal stack ``[A_1 ... A_R]``."""
        return sp.hstack([r.A for r in self.regions], format="csc")

    def _check(self, xs):
        if len(xs) != len(self.regions):
            raise DimensionError(f"expected {len(self.regions)} region vectors, got {len(xs)}")
        out = []
        for i, (r, xi) in enumerate(zip(self.regions, xs)):
            xi = np.asarray(xi, dtype=float)
            if xi.shape != (r.n_xi,):
                raise DimensionError(f"region {i}: expected length {r.n_xi}, got {xi.shape}")
            out.append(xi)
        return out


@dataclass(frozen=True, eq=False)
class IterateState:
    """Algorithm state at iteration ``k``.

    ADMM fills ``lambda_local`` (one length-``n_c`` vector per region),
    ALADIN fills ``lambda_global``.  ``x`` may be None before the first
    local step.
    """

    z: tuple
    x: Optional[tuple] = None
    lambda_local: Optional[tuple] = None
    lambda_global: Optional[np.ndarray] = None
    k: int = 0

    def __post_init__(self):
        if (self.lambda_local is None) == (self.lambda_global is None):
            raise ValueError("exactly one of lambda_local / lambda_global must be set")
        object.__setattr__(self, "z", tuple(np.asarray(v, dtype=float) for v in self.z))
        if self.x is not None:
            object.__setattr__(self, "x", tuple(np.asarray(v, dtype=float) for v in self.x))
        if self.lambda_local is not None:
            object.__setattr__(self, "lambda_local",
                               tuple(np.asarray(v, dtype=float) for v in self.lambda_local))
        else:
            object.__setattr__(self, "lambda_global", np.asarray(self.lambda_global, dtype=float))

    @classmethod
    def for_admm(cls, problem: PartitionedProblem, z, lambdas=None) -> "IterateState":
        z = problem._check(z)
        if lambdas is None:
            lambdas = [np.zeros(problem.n_c) for _ in problem.regions]
        lam = [np.asarray(l, dtype=float) for l in lambdas]
        if len(lam) != len(problem.regions) or any(l.shape != (problem.n_c,) for l in lam):
            raise DimensionError("one length-n_c multiplier per region is required")
        return cls(z=tuple(z), lambda_local=tuple(lam))

    @classmethod
    def for_aladin(cls, problem: PartitionedProblem, z, lam=None) -> "IterateState":
        z = problem._check(z)
        lam = np.zeros(problem.n_c) if lam is None else np.asarray(lam, dtype=float)
        if lam.shape != (problem.n_c,):
            raise DimensionError("lambda must have length n_c")
        return cls(z=tuple(z), lambda_global=lam)


def consensus_gap(problem: PartitionedProblem, x) -> float:
    """``||sum_i A_i x_i||_inf``."""
    xs = problem._check(x)
    r = np.zeros(problem.n_c)
    for reg, xi in zip(problem.regions, xs):
        r += reg.A @ xi
    return float(np.max(np.abs(r))) if r.size else 0.0


def primal_gap(problem: PartitionedProblem, x, z) -> float:
    """``max_i ||A_i (x_i - z_i)||_inf``, the ADMM termination quantity."""
    xs, zs = problem._check(x), problem._check(z)
    out = 0.0
    for reg, xi, zi in zip(problem.regions, xs, zs):
        d = reg.A @ (xi - zi)
        if d.size:
            out = max(out, float(np.max(np.abs(d))))
    return out


def _region_violation(reg: Subproblem, zi: np.ndarray) -> float:
    parts = [0.0]
    g = reg.eq_constraints.eval(zi)
    if g.size:
        parts.append(np.max(np.abs(g)))
    h = reg.ineq_constraints.eval(zi)
    if h.size:
        parts.append(np.max(h))
    parts.append(np.max(reg.lower - zi, initial=0.0))
    parts.append(np.max(zi - reg.upper, initial=0.0))
    return float(max(parts))


def constraint_violation(problem: PartitionedProblem, z) -> float:
    """Largest local constraint violation over all regions.

    Covers ``|g_i|``, ``max(h_i, 0)`` and box-bound excess.
    """
    zs = problem._check(z)
    worst = 0.0
    for i, (reg, zi) in enumerate(zip(problem.regions, zs)):
        try:
            worst = max(worst, _region_violation(reg, zi))
        except PoisonedEvaluationError as exc:
            raise PoisonedEvaluationError(str(exc), region=i) from exc
    return worst


def objective_value(problem: PartitionedProblem, x) -> float:
    xs = problem._check(x)
    total = 0.0
    for i, (reg, xi) in enumerate(zip(problem.regions, xs)):
        try:
            total += reg.objective.value(xi)
        except PoisonedEvaluationError as exc:
            raise PoisonedEvaluationError(str(exc), region=i) from exc
    return total


@dataclass
class KKTDuals:
    """Multipliers of the full problem.

    ``consensus`` belongs to ``sum_i A_i x_i = 0``; the per-region lists
    hold the multipliers of ``g_i``, ``h_i`` (nonnegative) and of the lower
    and upper bounds (nonnegative, zero for infinite bounds).
    """

    consensus: np.ndarray
    eq: list
    ineq: list
    lower: list
    upper: list

    @classmethod
    def zeros(cls, problem: PartitionedProblem) -> "KKTDuals":
        regs = problem.regions
        return cls(
            consensus=np.zeros(problem.n_c),
            eq=[np.zeros(r.eq_constraints.dim_out) for r in regs],
            ineq=[np.zeros(r.ineq_constraints.dim_out) for r in regs],
            lower=[np.zeros(r.n_xi) for r in regs],
            upper=[np.zeros(r.n_xi) for r in regs],
        )


@dataclass(frozen=True)
class KKTResidual:
    stationarity: float
    primal: float
    complementarity: float

    def max(self) -> float:
        return max(self.stationarity, self.primal, self.complementarity)


def kkt_residual(problem: PartitionedProblem, x, duals: KKTDuals) -> KKTResidual:
    """Infinity norms of the three KKT residual blocks of the full problem.

    The complementarity block also absorbs sign violations of the
    inequality and bound multipliers.
    """
    xs = problem._check(x)
    nu = np.asarray(duals.consensus, dtype=float)
    if nu.shape != (problem.n_c,):
        raise DimensionError("consensus multiplier must have length n_c")
    stat = comp = 0.0
    for i, (reg, xi) in enumerate(zip(problem.regions, xs)):
        try:
            r = reg.objective.gradient(xi) + reg.A.T @ nu
            yg, yh = np.asarray(duals.eq[i], float), np.asarray(duals.ineq[i], float)
            zl, zu = np.asarray(duals.lower[i], float), np.asarray(duals.upper[i], float)
            if yg.size:
                r += _dense(reg.eq_constraints.jacobian(xi)).T @ yg
            if yh.size:
                h = reg.ineq_constraints.eval(xi)
                r += _dense(reg.ineq_constraints.jacobian(xi)).T @ yh
                comp = max(comp, np.max(np.abs(yh * h)), np.max(-yh, initial=0.0))
            r += zu - zl
            fin_l, fin_u = np.isfinite(reg.lower), np.isfinite(reg.upper)
            comp = max(comp,
                       np.max(np.abs(zl[fin_l] * (xi - reg.lower)[fin_l]), initial=0.0),
                       np.max(np.abs(zu[fin_u] * (reg.upper - xi)[fin_u]), initial=0.0),
                       np.max(-zl, initial=0.0), np.max(-zu, initial=0.0),
                       np.max(np.abs(zl[~fin_l]), initial=0.0),
                       np.max(np.abs(zu[~fin_u]), initial=0.0))
            stat = max(stat, float(np.max(np.abs(r), initial=0.0)))
        except PoisonedEvaluationError as exc:
            raise PoisonedEvaluationError(str(exc), region=i) from exc
    primal = max(consensus_gap(problem, xs), constraint_violation(problem, xs))
    return KKTResidual(float(stat), float(primal), float(comp))


def estimate_duals(problem: PartitionedProblem, x, active_tol: float = 1e-6) -> KKTDuals:
    """Least-squares multiplier estimate at ``x``.

    Equalities, consensus rows, inequalities with ``h_j >= -active_tol`` and
    bounds within ``active_tol`` enter the fit; all other multipliers are
    zero.  Signs of the active inequality multipliers are not enforced, so
    the resulting stationarity residual is a lower bound on the true one.
    """
    xs = problem._check(x)
    n_c = problem.n_c
    blocks, grads, meta = [], [], []
    col = n_c
    for reg, xi in zip(problem.regions, xs):
        grads.append(reg.objective.gradient(xi))
        cols = []
        Jg = _dense(reg.eq_constraints.jacobian(xi))
        cols.append(Jg.T)
        h = reg.ineq_constraints.eval(xi)
        act_h = np.flatnonzero(h >= -active_tol)
        Jh = _dense(reg.ineq_constraints.jacobian(xi))[act_h]
        cols.append(Jh.T)
        lo_act = np.flatnonzero(np.isfinite(reg.lower) & (xi - reg.lower <= active_tol))
        up_act = np.flatnonzero(np.isfinite(reg.upper) & (reg.upper - xi <= active_tol)
                                & ~np.isin(np.arange(reg.n_xi), lo_act))
        bnd = np.zeros((reg.n_xi, lo_act.size + up_act.size))
        bnd[lo_act, np.arange(lo_act.size)] = -1.0
        bnd[up_act, lo_act.size + np.arange(up_act.size)] = 1.0
        cols.append(bnd)
        M = np.hstack(cols) if cols else np.zeros((reg.n_xi, 0))
        blocks.append(M)
        meta.append((col, Jg.shape[0], act_h, lo_act, up_act))
        col += M.shape[1]
    G = np.zeros((problem.n_x, col))
    o = problem.offsets
    for i, (reg, M) in enumerate(zip(problem.regions, blocks)):
        G[o[i]:o[i + 1], :n_c] = reg.A.T.toarray()
        c0 = meta[i][0]
        G[o[i]:o[i + 1], c0:c0 + M.shape[1]] = M
    rhs = -np.concatenate(grads)
    sol = np.linalg.lstsq(G, rhs, rcond=None)[0] if col else np.zeros(0)
    duals = KKTDuals.zeros(problem)
    duals.consensus = sol[:n_c].copy()
    for i, (c0, m_g, act_h, lo_act, up_act) in enumerate(meta):
        duals.eq[i] = sol[c0:c0 + m_g].copy()
        c = c0 + m_g
        duals.ineq[i][act_h] = sol[c:c + act_h.size]
        c += act_h.size
        duals.lower[i][lo_act] = sol[c:c + lo_act.size]
        c += lo_act.size
        duals.upper[i][up_act] = sol[c:c + up_act.size]
    return duals
