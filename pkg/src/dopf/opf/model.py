"""Partitioned AC-OPF in polar coordinates.

Every region owns the angle and magnitude of its buses and its
generators.  For each tie line ``(a, b)`` with ``a`` in region ``i`` and
``b`` in region ``j``:

* region ``i`` holds a copy ``(theta_b, V_b)`` and region ``j`` a copy
  ``(theta_a, V_a)``;
* both regions hold transfer variables ``(P_ab, Q_ab, P_ba, Q_ba)``, the
  power entering the line at either end, tied by local equalities to the
  voltages they see;
* consensus rows equate every copy with the owner's variables and the two
  regions' transfer variables (``+1`` in one block, ``-1`` in the other).

Bus balances use the transfer variable of the local end, so the regions
only see each other through the consensus rows.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from ..errors import ModelBuildError
from ..problem import PartitionedProblem, SmoothFunction, Subproblem
from .matpower import CaseData
from .partition import RegionSpec
from .power import FlowTerms, branch_admittances, branch_flows, power_flow_function

__all__ = ["RegionLayout", "OpfVariableLayout", "build_partitioned_opf", "ANGLE_VOLTAGE_SCALING",
           "POWER_SCALING"]

ANGLE_VOLTAGE_SCALING = 100.0
POWER_SCALING = 1.0


@dataclass
class RegionLayout:
    """Variable ordering of one region.

    Blocks, in order: owned angles, owned magnitudes, copied angles, copied
    magnitudes, generator P, generator Q, then ``(P_from, Q_from, P_to,
    Q_to)`` per tie line.
    """

    region: object
    buses: list
    copies: list
    gens: list
    ties: list
    theta: dict = field(default_factory=dict)
    vm: dict = field(default_factory=dict)
    pg: dict = field(default_factory=dict)
    qg: dict = field(default_factory=dict)
    transfer: dict = field(default_factory=dict)
    names: list = field(default_factory=list)

    @property
    def n(self) -> int:
        return len(self.names)

    def _add(self, name):
        self.names.append(name)
        return len(self.names) - 1


@dataclass
class OpfVariableLayout:
    case: CaseData
    spec: RegionSpec
    regions: list
    owner: dict
    ties: list
    internal: list

    def scatter_network(self, Vm, Va, Pg, Qg) -> list:
        """Region vectors for a network state; copies and transfers agree exactly."""
        idx = self.case.bus_index()
        Sf, St = branch_flows(self.case, Vm, Va)
        out = []
        for lay in self.regions:
            x = np.zeros(lay.n)
            for b, k in lay.theta.items():
                x[k] = Va[idx[b]]
            for b, k in lay.vm.items():
                x[k] = Vm[idx[b]]
            for g, k in lay.pg.items():
                x[k] = Pg[g]
            for g, k in lay.qg.items():
                x[k] = Qg[g]
            for br, (kpf, kqf, kpt, kqt) in lay.transfer.items():
                x[[kpf, kqf, kpt, kqt]] = Sf[br].real, Sf[br].imag, St[br].real, St[br].imag
            out.append(x)
        return out

    def network_point(self, xs):
        """``(Vm, Va, Pg, Qg)`` read from the owned variables."""
        case = self.case
        idx = case.bus_index()
        Vm, Va = np.zeros(case.n_bus), np.zeros(case.n_bus)
        Pg, Qg = np.zeros(case.n_gen), np.zeros(case.n_gen)
        for lay, x in zip(self.regions, xs):
            for b in lay.buses:
                Va[idx[b]] = x[lay.theta[b]]
                Vm[idx[b]] = x[lay.vm[b]]
            for g in lay.gens:
                Pg[g] = x[lay.pg[g]]
                Qg[g] = x[lay.qg[g]]
        return Vm, Va, Pg, Qg

    def flat_start(self) -> list:
        """``V = 1``, ``theta = 0``, generators at the case dispatch (clipped)."""
        case = self.case
        Vm = np.ones(case.n_bus)
        Va = np.zeros(case.n_bus)
        Pg = np.clip(case.Pg, case.Pmin, case.Pmax)
        Qg = np.clip(case.Qg, case.Qmin, case.Qmax)
        return self.scatter_network(Vm, Va, Pg, Qg)

    def kinds(self, r) -> np.ndarray:
        """Per-variable kind labels of region ``r`` (``theta``, ``vm``, ``pg``...)."""
        return np.array([nm.split("[")[0] for nm in self.regions[r].names])


def _check_partition(case: CaseData, spec: RegionSpec):
    ids = {int(b) for b in case.bus_ids}
    unknown = set(spec.assignment) - ids
    if unknown:
        raise ModelBuildError(f"partition names unknown buses {sorted(unknown)}")
    missing = ids - set(spec.assignment)
    if missing:
        raise ModelBuildError(f"buses without a region: {sorted(missing)}")
    for g in np.flatnonzero(case.gen_status):
        if int(case.gen_bus[g]) not in spec.assignment:
            raise ModelBuildError(f"generator {g + 1} sits on a bus outside every region")
    adj = {b: set() for b in ids}
    for f, t, on in zip(case.br_from, case.br_to, case.br_status):
        if on:
            adj[int(f)].add(int(t))
            adj[int(t)].add(int(f))
    for r in spec.regions:
        buses = set(spec.buses_of(r))
        if not buses:
            raise ModelBuildError(f"region {r} is empty")
        start = min(buses)
        seen, stack = {start}, [start]
        while stack:
            u = stack.pop()
            for v in adj[u]:
                if v in buses and v not in seen:
                    seen.add(v)
                    stack.append(v)
        if seen != buses:
            raise ModelBuildError(f"region {r} is disconnected")


def build_partitioned_opf(case: CaseData, spec: RegionSpec):
    """Build the partitioned OPF and its variable layout.

    Returns
    -------
    problem : PartitionedProblem
    layout : OpfVariableLayout
    """
    _check_partition(case, spec)
    owner = {int(b): spec.assignment[int(b)] for b in case.bus_ids}
    on = np.flatnonzero(case.br_status)
    ties = [int(k) for k in on if owner[int(case.br_from[k])] != owner[int(case.br_to[k])]]
    internal = [int(k) for k in on if owner[int(case.br_from[k])] == owner[int(case.br_to[k])]]
    gens = [int(g) for g in np.flatnonzero(case.gen_status)]
    ref = case.ref_bus

    layouts = []
    for r in spec.regions:
        buses = spec.buses_of(r)
        rties = [k for k in ties if owner[int(case.br_from[k])] == r or owner[int(case.br_to[k])] == r]
        copies = sorted({int(case.br_to[k]) if owner[int(case.br_from[k])] == r else int(case.br_from[k])
                         for k in rties})
        lay = RegionLayout(region=r, buses=buses, copies=copies,
                           gens=[g for g in gens if owner[int(case.gen_bus[g])] == r], ties=rties)
        for b in buses:
            lay.theta[b] = lay._add(f"theta[{b}]")
        for b in buses:
            lay.vm[b] = lay._add(f"vm[{b}]")
        for b in copies:
            lay.theta[b] = lay._add(f"theta_copy[{b}]")
        for b in copies:
            lay.vm[b] = lay._add(f"vm_copy[{b}]")
        for g in lay.gens:
            lay.pg[g] = lay._add(f"pg[{g}]")
        for g in lay.gens:
            lay.qg[g] = lay._add(f"qg[{g}]")
        for k in rties:
            lay.transfer[k] = tuple(lay._add(f"{q}[{k}]") for q in ("p_from", "q_from", "p_to", "q_to"))
        layouts.append(lay)

    # consensus rows
    rows = []  # (region position, var index, sign) triples grouped per row
    pos = {r: i for i, r in enumerate(spec.regions)}
    for i, lay in enumerate(layouts):
        for b in lay.copies:
            o = layouts[pos[owner[b]]]
            rows.append(((i, lay.theta[b], 1.0), (pos[owner[b]], o.theta[b], -1.0)))
            rows.append(((i, lay.vm[b], 1.0), (pos[owner[b]], o.vm[b], -1.0)))
    for k in ties:
        i = pos[owner[int(case.br_from[k])]]
        j = pos[owner[int(case.br_to[k])]]
        for q in range(4):
            rows.append(((i, layouts[i].transfer[k][q], 1.0), (j, layouts[j].transfer[k][q], -1.0)))
    n_c = len(rows)
    A_blocks = []
    for i, lay in enumerate(layouts):
        ri, ci, vi = [], [], []
        for row, entries in enumerate(rows):
            for (reg, var, sign) in entries:
                if reg == i:
                    ri.append(row)
                    ci.append(var)
                    vi.append(sign)
        A_blocks.append(sp.csc_matrix((vi, (ri, ci)), shape=(n_c, lay.n)))

    Yff, Yft, Ytf, Ytt = branch_admittances(case)
    bidx = case.bus_index()
    regions = []
    for i, lay in enumerate(layouts):
        n = lay.n
        brow = {b: 2 * k for k, b in enumerate(lay.buses)}  # P row; Q row is +1
        m = 2 * len(lay.buses) + 4 * len(lay.ties)
        lin = np.zeros((m, n))
        const = np.zeros(m)
        qr, qi, qc = [], [], []
        terms = []
        for b in lay.buses:
            p, q = brow[b], brow[b] + 1
            k = bidx[b]
            const[p] -= case.Pd[k]
            const[q] -= case.Qd[k]
            if case.Gs[k]:
                qr.append(p), qi.append(lay.vm[b]), qc.append(-case.Gs[k])
            if case.Bs[k]:
                qr.append(q), qi.append(lay.vm[b]), qc.append(case.Bs[k])
        for g in lay.gens:
            b = int(case.gen_bus[g])
            lin[brow[b], lay.pg[g]] += 1.0
            lin[brow[b] + 1, lay.qg[g]] += 1.0

        def end_terms(k, frm, row_p, sign):
            f, t = int(case.br_from[k]), int(case.br_to[k])
            if frm:
                Yii, Yij, bi, bj = Yff[k], Yft[k], f, t
            else:
                Yii, Yij, bi, bj = Ytt[k], Ytf[k], t, f
            vars4 = (lay.theta[bi], lay.vm[bi], lay.theta[bj], lay.vm[bj])
            for kind in (0, 1):
                terms.append((row_p + kind, sign, kind, Yii.real, Yii.imag, Yij.real, Yij.imag, vars4))

        for k in internal:
            f, t = int(case.br_from[k]), int(case.br_to[k])
            if owner[f] != lay.region:
                continue
            end_terms(k, True, brow[f], -1.0)
            end_terms(k, False, brow[t], -1.0)
        base_row = 2 * len(lay.buses)
        for j, k in enumerate(lay.ties):
            f, t = int(case.br_from[k]), int(case.br_to[k])
            kpf, kqf, kpt, kqt = lay.transfer[k]
            local_end_from = owner[f] == lay.region
            b = f if local_end_from else t
            kp, kq = (kpf, kqf) if local_end_from else (kpt, kqt)
            lin[brow[b], kp] -= 1.0
            lin[brow[b] + 1, kq] -= 1.0
            r0 = base_row + 4 * j
            lin[r0, kpf] += 1.0
            lin[r0 + 1, kqf] += 1.0
            lin[r0 + 2, kpt] += 1.0
            lin[r0 + 3, kqt] += 1.0
            end_terms(k, True, r0, -1.0)
            end_terms(k, False, r0 + 2, -1.0)

        eq = power_flow_function(n, m, lin, const, (qr, qi, qc), FlowTerms.from_list(terms),
                                 name=f"power_flow[{lay.region}]")
        Q = np.zeros((n, n))
        c = np.zeros(n)
        c0 = 0.0
        for g in lay.gens:
            c2, c1, cc = case.gen_cost[g]
            Q[lay.pg[g], lay.pg[g]] = 2 * c2
            c[lay.pg[g]] = c1
            c0 += cc
        obj = SmoothFunction.quadratic(Q, c, c0)
        obj.name = f"cost[{lay.region}]"

        lo = np.full(n, -np.inf)
        hi = np.full(n, np.inf)
        scale = np.full(n, POWER_SCALING)
        for b, k in lay.vm.items():
            lo[k], hi[k] = case.Vmin[bidx[b]], case.Vmax[bidx[b]]
            scale[k] = ANGLE_VOLTAGE_SCALING
        for b, k in lay.theta.items():
            scale[k] = ANGLE_VOLTAGE_SCALING
        if ref in lay.buses:
            lo[lay.theta[ref]] = hi[lay.theta[ref]] = 0.0
        for g in lay.gens:
            lo[lay.pg[g]], hi[lay.pg[g]] = case.Pmin[g], case.Pmax[g]
            lo[lay.qg[g]], hi[lay.qg[g]] = case.Qmin[g], case.Qmax[g]
        regions.append(Subproblem(objective=obj, A=A_blocks[i], eq_constraints=eq, lower=lo, upper=hi,
                                  scaling_diag=scale, name=str(lay.region)))

    layout = OpfVariableLayout(case=case, spec=spec, regions=layouts, owner=owner, ties=ties,
                               internal=internal)
    return PartitionedProblem(regions=tuple(regions)), layout
