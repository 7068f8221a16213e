"""ADMM for affinely coupled separable NLPs.

One iteration:

1. every region solves
   ``min f_i(x) + lambda_i' A_i x + rho/2 ||A_i (x - z_i)||^2`` over its
   local set;
2. ``lambda_i <- lambda_i + rho A_i (x_i - z_i)``;
3. the coordinator solves the consensus QP
   ``min sum_i rho/2 ||A_i dx_i||^2 - lambda_i' A_i dx_i``
   s.t. ``sum_i A_i (x_i + dx_i) = 0`` and sets ``z = x + dx``.

The minus sign is what minimizing the augmented Lagrangian
``sum_i f_i + lambda_i' A_i (x_i - z_i) + rho/2 ||A_i (x_i - z_i)||^2``
over ``z`` produces.  With a plus sign the iteration diverges even on
strictly convex QPs; ``AdmmConfig.consensus_sign = +1`` reproduces that
variant for experiments.

``A_i' A_i`` is singular whenever region ``i`` has variables outside the
coupling, so the QP is solved for the minimum-norm ``dx``.
"""

from __future__ import annotations

import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .errors import CoordinationError, DimensionError, LocalSolveError
from .ipm import IPMOptions
from .local import AugmentedLocalProblem, LocalSolveResult, solve_local
from .problem import (IterateState, PartitionedProblem, consensus_gap, constraint_violation,
                      estimate_duals, kkt_residual, objective_value, primal_gap)
from .trace import ConvergenceTrace, IterationRecord

__all__ = [
    "AdmmConfig",
    "ConsensusOperator",
    "ConsensusStep",
    "RunResult",
    "StallReport",
    "admm_local_step",
    "dual_update",
    "admm_consensus_step",
    "admm_run",
    "detect_stall",
]


@dataclass(frozen=True)
class AdmmConfig:
    """ADMM parameters.

    ``min_iter`` keeps the loop running after the termination test passes,
    which the fixed-length studies rely on.
    """

    rho: float
    max_iter: int = 300
    termination_eps: float = 1e-6
    stall_window: int = 10
    stall_tol: float = 1e-6
    min_iter: int = 0
    consensus_sign: float = -1.0
    local_options: Optional[IPMOptions] = None

    def __post_init__(self):
        if self.consensus_sign not in (-1.0, 1.0):
            raise ValueError("consensus_sign must be -1 or +1")
        if not self.rho > 0:
            raise ValueError("rho must be positive")
        if not self.termination_eps > 0:
            raise ValueError("termination_eps must be positive")
        if self.max_iter < 0 or self.stall_window < 1:
            raise ValueError("max_iter must be >= 0 and stall_window >= 1")


class ConsensusOperator:
    """Precomputed projectors for the minimum-norm consensus QP.

    For the QP ``min sum_i rho/2 ||y_i||^2 + l_i' y_i`` s.t.
    ``sum_i y_i = r`` with ``y_i = A_i dx_i`` restricted to ``range(A_i)``:
    ``y_i = -Q_i (l_i + nu) / rho`` where ``Q_i`` is the orthogonal
    projector onto ``range(A_i)`` and ``nu`` solves
    ``(sum_i Q_i) nu = -rho r - sum_i Q_i l_i`` for the residual
    ``r = -sum_i A_i x_i``.  The minimum-norm step is ``dx_i = pinv(A_i) y_i``.
    """

    def __init__(self, problem: PartitionedProblem):
        self.problem = problem
        self.pinv = []
        self.Q = []
        for reg in problem.regions:
            A = reg.A.toarray()
            P = np.linalg.pinv(A) if A.size else np.zeros((reg.n_xi, problem.n_c))
            self.pinv.append(P)
            self.Q.append(A @ P if A.size else np.zeros((problem.n_c, problem.n_c)))
        M = sum(self.Q) if self.Q else np.zeros((0, 0))
        self.M = M
        self.M_pinv = np.linalg.pinv(M, hermitian=True) if problem.n_c else M
        # rows no region can move
        self.dead = np.flatnonzero(np.abs(np.diag(M)) <= 1e-12) if problem.n_c else np.zeros(0, int)


@dataclass
class ConsensusStep:
    delta_x: list
    z: list
    nu: np.ndarray
    kkt_residual: float


def _as_list(problem, xs):
    if isinstance(xs, (list, tuple)) and xs and isinstance(xs[0], LocalSolveResult):
        xs = [r.x_opt for r in xs]
    return problem._check(xs)


def admm_local_step(problem: PartitionedProblem, state: IterateState, config: AdmmConfig) -> list:
    """Solve every region's augmented subproblem, warm started at ``z_i``.

    Raises
    ------
    LocalSolveError
        With the region index when a solve does not reach optimality.
    """
    if state.lambda_local is None:
        raise ValueError("ADMM needs per-region multipliers")
    out = []
    for i, (reg, zi, li) in enumerate(zip(problem.regions, state.z, state.lambda_local)):
        aug = AugmentedLocalProblem(base=reg, linear_term=reg.A.T @ li, prox_center=zi,
                                    prox_weight=config.rho, prox_metric="coupling")
        try:
            res = solve_local(aug, warm_start=zi, options=config.local_options)
        except (FloatingPointError, np.linalg.LinAlgError) as exc:
            raise LocalSolveError(str(exc), region=i) from exc
        if not res.optimal:
            raise LocalSolveError(f"local solve ended with status {res.status!r}", region=i, result=res)
        out.append(res)
    return out


def dual_update(problem: PartitionedProblem, state: IterateState, x, config: AdmmConfig) -> list:
    """``lambda_i + rho A_i (x_i - z_i)`` for every region."""
    xs = _as_list(problem, x)
    return [li + config.rho * (reg.A @ (xi - zi))
            for reg, xi, zi, li in zip(problem.regions, xs, state.z, state.lambda_local)]


def admm_consensus_step(problem: PartitionedProblem, x, lambda_next, rho: float,
                        operator: Optional[ConsensusOperator] = None, check_tol: float = 1e-8,
                        sign: float = -1.0) -> ConsensusStep:
    """Minimum-norm solution of the consensus QP and the new ``z = x + dx``.

    Parameters
    ----------
    x : list of ndarray or list of LocalSolveResult
    lambda_next : list of ndarray
        The multipliers after the dual update.
    rho : float
    operator : ConsensusOperator, optional
        Reused across iterations when given.
    sign : float
        Sign of the linear term ``lambda_i' A_i dx_i``; ``-1`` is standard
        ADMM.
    check_tol : float
        Bound on the scaled KKT residual; exceeding it raises.

    Raises
    ------
    CoordinationError
        When the residual cannot be removed because a nonzero row of
        ``sum_i A_i x_i`` touches no region's range.
    """
    xs = _as_list(problem, x)
    lam = [sign * np.asarray(l, dtype=float) for l in lambda_next]
    if len(lam) != len(xs) or any(l.shape != (problem.n_c,) for l in lam):
        raise DimensionError("one length-n_c multiplier per region is required")
    op = operator or ConsensusOperator(problem)
    n_c = problem.n_c
    if n_c == 0:
        return ConsensusStep([np.zeros_like(xi) for xi in xs], [xi.copy() for xi in xs],
                             np.zeros(0), 0.0)
    r = -sum(reg.A @ xi for reg, xi in zip(problem.regions, xs))
    if op.dead.size and np.max(np.abs(r[op.dead])) > 1e-12:
        raise CoordinationError(f"consensus rows {op.dead.tolist()} are violated but not adjustable")
    Ql = sum(Q @ l for Q, l in zip(op.Q, lam))
    # split nu = rho * nu1 + nu2 to avoid forming rho * r for large rho
    nu1 = -(op.M_pinv @ r)
    nu2 = -(op.M_pinv @ Ql)
    ys = [-(Q @ nu1) - Q @ (l + nu2) / rho for Q, l in zip(op.Q, lam)]
    dx = [P @ y for P, y in zip(op.pinv, ys)]
    z = [xi + d for xi, d in zip(xs, dx)]
    # scaled KKT residual: stationarity A_i'(A_i dx_i + (lambda_i + nu)/rho) and feasibility
    stat = 0.0
    for reg, d, l in zip(problem.regions, dx, lam):
        g = reg.A.T @ (reg.A @ d + nu1 + (l + nu2) / rho)
        stat = max(stat, float(np.max(np.abs(g), initial=0.0)))
    feas = float(np.max(np.abs(sum(reg.A @ d for reg, d in zip(problem.regions, dx)) - r)))
    res = max(stat, feas)
    if res > check_tol * max(1.0, float(np.max(np.abs(r))), max(float(np.max(np.abs(l))) for l in lam) / rho):
        raise CoordinationError(f"consensus QP residual {res:.3e} exceeds tolerance")
    return ConsensusStep(dx, z, rho * nu1 + nu2, res)


@dataclass
class RunResult:
    """Outcome of an engine run.

    ``step_norms[k] = ||x^k - x^{k-1}||_inf`` (NaN for ``k = 0``).
    ``status`` is ``"converged"``, ``"max_iter"`` or ``"local-failure"``.
    """

    trace: ConvergenceTrace
    state: IterateState
    status: str
    iterations: int
    step_norms: list = field(default_factory=list)
    objective_at_z: list = field(default_factory=list)
    x_history: list = field(default_factory=list)
    error: Optional[str] = None
    problem: Optional[PartitionedProblem] = None

    @property
    def converged(self) -> bool:
        return self.status == "converged"


def _dist(problem, xs, reference):
    if reference is None:
        return float("nan")
    return float(np.max(np.abs(problem.gather(xs) - reference)))


def admm_run(problem: PartitionedProblem, initial: IterateState, config: AdmmConfig,
             reference=None, keep_history: bool = True) -> RunResult:
    """Run ADMM from ``initial`` until the primal gap is below ``termination_eps``.

    Record ``k`` holds the local solutions ``x^k`` (computed from ``z^k``
    and ``lambda^k``) next to ``z^k`` itself.  A local failure ends the run
    with ``status="local-failure"`` and the partial trace.
    """
    if initial.lambda_local is None:
        raise ValueError("initial state must carry per-region multipliers")
    ref = None if reference is None else np.asarray(reference, dtype=float)
    op = ConsensusOperator(problem)
    state = initial
    trace = ConvergenceTrace()
    steps, fz, hist = [], [], []
    prev = None
    status, error = "max_iter", None
    k = 0
    for k in range(config.max_iter + 1):
        t0 = time.perf_counter()
        try:
            results = admm_local_step(problem, state, config)
        except LocalSolveError as exc:
            status, error = "local-failure", str(exc)
            break
        t1 = time.perf_counter()
        xs = [r.x_opt for r in results]
        lam = dual_update(problem, state, xs, config)
        step = admm_consensus_step(problem, xs, lam, config.rho, operator=op,
                                   sign=config.consensus_sign)
        t2 = time.perf_counter()
        pg = primal_gap(problem, xs, state.z)
        trace.append(IterationRecord(
            k=k, consensus_gap=consensus_gap(problem, xs), objective=objective_value(problem, xs),
            dist_to_ref=_dist(problem, xs, ref), violation=constraint_violation(problem, state.z),
            primal_gap=pg, local_ms=1e3 * (t1 - t0), coord_ms=1e3 * (t2 - t1)))
        fz.append(objective_value(problem, state.z))
        steps.append(float("nan") if prev is None else
                     float(np.max(np.abs(problem.gather(xs) - problem.gather(prev)))))
        if keep_history:
            hist.append([xi.copy() for xi in xs])
        prev = xs
        state = IterateState(z=tuple(step.z), x=tuple(xs), lambda_local=tuple(lam), k=k + 1)
        if pg < config.termination_eps and k + 1 >= config.min_iter:
            status = "converged"
            break
    return RunResult(trace=trace, state=state, status=status, iterations=len(trace),
                     step_norms=steps, objective_at_z=fz, x_history=hist, error=error,
                     problem=problem)


@dataclass(frozen=True)
class StallReport:
    """``stalled`` means frozen iterates at a non-stationary point."""

    stalled: bool
    since_iter: Optional[int]
    objective_drift: float
    max_step: float
    stationarity: float


def detect_stall(result: RunResult, config: AdmmConfig, problem: Optional[PartitionedProblem] = None,
                 active_tol: float = 1e-6) -> StallReport:
    """Check whether the last ``stall_window`` iterations froze away from a KKT point.

    Stalled iff ``max ||x^k - x^{k-1}||_inf <= stall_tol`` over the window
    and the full problem's stationarity residual at the last ``x`` (with
    least-squares multipliers) exceeds ``100 * stall_tol``.
    """
    problem = problem or result.problem
    steps = np.asarray(result.step_norms[1:], dtype=float)
    W = config.stall_window
    if steps.size < W or result.state.x is None:
        return StallReport(False, None, float("nan"), float("nan"), float("nan"))
    window = steps[-W:]
    max_step = float(np.max(window))
    obj = result.trace.column("objective")
    drift = float(abs(obj[-1] - obj[-W - 1]))
    xs = list(result.state.x)
    duals = estimate_duals(problem, xs, active_tol=active_tol)
    stat = kkt_residual(problem, xs, duals).stationarity
    frozen = max_step <= config.stall_tol
    stalled = bool(frozen and stat > 100 * config.stall_tol)
    since = None
    if stalled:
        # first iteration from which every later step stays below stall_tol
        big = np.flatnonzero(steps > config.stall_tol)
        since = int(big[-1] + 2) if big.size else 1
    return StallReport(stalled, since, drift, max_step, float(stat))
