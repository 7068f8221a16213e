"""Starting points for the distributed OPF runs."""

from __future__ import annotations

import numpy as np

from ..errors import ConvergenceError
from ..local import solve_constrained_least_squares
from ..problem import IterateState, PartitionedProblem
from .matpower import CaseData
from .model import OpfVariableLayout, build_partitioned_opf
from .partition import RegionSpec, single_region

__all__ = ["feasible_point", "feasible_init", "flat_init"]


def feasible_point(case: CaseData, tol: float = 1e-8):
    """Power-flow feasible ``(Vm, Va, Pg, Qg)`` within all box limits.

    Solves the bus mismatch equations of the whole network as a
    bound-constrained least-squares problem, starting from the case's
    stored voltages (generator set points where present) and dispatch.

    Raises
    ------
    ConvergenceError
        When the mismatch cannot be driven below ``tol`` inside the box.
    """
    problem, layout = build_partitioned_opf(case, single_region(case))
    reg = problem.regions[0]
    idx = case.bus_index()
    Vm = case.Vm.copy()
    for g in np.flatnonzero(case.gen_status):
        Vm[idx[int(case.gen_bus[g])]] = case.Vg[g]
    Va = case.Va - case.Va[idx[case.ref_bus]]
    start = layout.scatter_network(Vm, Va, case.Pg, case.Qg)[0]
    res = solve_constrained_least_squares(reg.eq_constraints, reg.lower, reg.upper, start, tol=tol)
    if not res.converged:
        raise ConvergenceError("feasible initialization did not converge", best=res.x,
                               residual=res.residual)
    return layout.network_point([res.x])


def feasible_init(problem: PartitionedProblem, case: CaseData, spec: RegionSpec,
                  layout: OpfVariableLayout = None, tol: float = 1e-8) -> IterateState:
    """ADMM/ALADIN start ``z0`` that is power-flow feasible and consensus feasible.

    The network-wide solution is scattered to the regions so every copy and
    transfer variable agrees exactly with its owner; ``lambda0 = 0``.
    """
    if layout is None:
        _, layout = build_partitioned_opf(case, spec)
    zs = layout.scatter_network(*feasible_point(case, tol=tol))
    return IterateState.for_admm(problem, zs)


def flat_init(problem: PartitionedProblem, layout: OpfVariableLayout) -> IterateState:
    return IterateState.for_admm(problem, layout.flat_start())
