"""Monolithic solve of a partitioned problem.

All regions are merged into one NLP with the consensus rows as linear
equalities and handed to the interior-point method.  The result provides
the reference minimizer ``x*`` against which the distributed engines are
measured.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np
import scipy.linalg as sla

from .errors import ConvergenceError
from .ipm import NLP, IPMOptions, interior_point
from .problem import KKTDuals, KKTResidual, PartitionedProblem, _dense, kkt_residual

__all__ = ["CentralizedResult", "merged_nlp", "centralized_solve"]


@dataclass
class CentralizedResult:
    x: np.ndarray
    xs: list
    f: float
    kkt: KKTResidual
    duals: KKTDuals
    status: str
    iterations: int


def merged_nlp(problem: PartitionedProblem) -> NLP:
    """The full problem as one NLP over the stacked vector."""
    regs = problem.regions
    A = _dense(problem.coupling_matrix())
    m_eq = [r.eq_constraints.dim_out for r in regs]
    m_in = [r.ineq_constraints.dim_out for r in regs]
    eo = np.concatenate([[0], np.cumsum(m_eq)]).astype(int)
    io = np.concatenate([[0], np.cumsum(m_in)]).astype(int)
    split = problem.scatter

    def f(x):
        return sum(r.objective.value(xi) for r, xi in zip(regs, split(x)))

    def grad(x):
        return np.concatenate([r.objective.gradient(xi) for r, xi in zip(regs, split(x))])

    def c_eq(x):
        return np.concatenate([r.eq_constraints.eval(xi) for r, xi in zip(regs, split(x))] + [A @ x])

    def jac_eq(x):
        return np.vstack([sla.block_diag(*[_dense(r.eq_constraints.jacobian(xi))
                                           for r, xi in zip(regs, split(x))]), A])

    def c_in(x):
        return np.concatenate([r.ineq_constraints.eval(xi) for r, xi in zip(regs, split(x))])

    def jac_in(x):
        return sla.block_diag(*[_dense(r.ineq_constraints.jacobian(xi))
                                for r, xi in zip(regs, split(x))]).reshape(io[-1], problem.n_x)

    def hess(x, sigma, ye, yi):
        blocks = []
        for i, (r, xi) in enumerate(zip(regs, split(x))):
            H = sigma * r.objective.hessian(xi)
            if m_eq[i]:
                H = H + r.eq_constraints.hessian_vlp(xi, ye[eo[i]:eo[i + 1]])
            if m_in[i]:
                H = H + r.ineq_constraints.hessian_vlp(xi, yi[io[i]:io[i + 1]])
            blocks.append(H)
        return sla.block_diag(*blocks)

    return NLP(n=problem.n_x, f=f, grad=grad, hess=hess, c_eq=c_eq, jac_eq=jac_eq, c_in=c_in,
               jac_in=jac_in, lower=np.concatenate([r.lower for r in regs]),
               upper=np.concatenate([r.upper for r in regs]), m_eq=eo[-1] + problem.n_c,
               m_in=io[-1])


def centralized_solve(problem: PartitionedProblem, start=None,
                      options: Optional[IPMOptions] = None) -> CentralizedResult:
    """Solve the merged problem and certify the result with KKT residuals.

    Parameters
    ----------
    problem : PartitionedProblem
    start : list of ndarray or ndarray, optional
        Initial point; defaults to the midpoint of finite bounds, zero
        elsewhere.
    options : IPMOptions, optional

    Raises
    ------
    ConvergenceError
        If the interior-point method does not report optimality.
    """
    regs = problem.regions
    if start is None:
        lo = np.concatenate([r.lower for r in regs])
        hi = np.concatenate([r.upper for r in regs])
        x0 = np.where(np.isfinite(lo) & np.isfinite(hi), 0.5 * (lo + hi),
                      np.where(np.isfinite(lo), lo, np.where(np.isfinite(hi), hi, 0.0)))
    elif isinstance(start, (list, tuple)):
        x0 = problem.gather(start)
    else:
        x0 = np.asarray(start, dtype=float)
    res = interior_point(merged_nlp(problem), x0, options)
    xs = problem.scatter(res.x)
    m_eq = np.cumsum([0] + [r.eq_constraints.dim_out for r in regs])
    m_in = np.cumsum([0] + [r.ineq_constraints.dim_out for r in regs])
    o = problem.offsets
    duals = KKTDuals(
        consensus=res.y_eq[m_eq[-1]:].copy(),
        eq=[res.y_eq[m_eq[i]:m_eq[i + 1]].copy() for i in range(len(regs))],
        ineq=[res.y_in[m_in[i]:m_in[i + 1]].copy() for i in range(len(regs))],
        lower=[res.z_lower[o[i]:o[i + 1]].copy() for i in range(len(regs))],
        upper=[res.z_upper[o[i]:o[i + 1]].copy() for i in range(len(regs))],
    )
    if res.status != "optimal":
        raise ConvergenceError(f"centralized solve ended with status {res.status!r}", best=res.x,
                               residual=max(res.stationarity, res.primal))
    kkt = kkt_residual(problem, xs, duals)
    return CentralizedResult(x=res.x, xs=xs, f=float(res.objective), kkt=kkt, duals=duals,
                             status=res.status, iterations=res.iterations)
