"""Small problem generators shared by the tests."""

import numpy as np
import scipy.sparse as sp

from dopf.opf import parse_case
from dopf.problem import PartitionedProblem, SmoothFunction, Subproblem


def random_qp(rng, n_regions=3, n_c=None, full_column_rank=False, local_eq=False):
    """Separable strictly convex QP coupled by ``sum A_i x_i = 0``.

    Returns ``(problem, Qs, cs, As, Es, es)``.  With ``full_column_rank``
    every ``A_i`` is square-or-tall with independent columns.
    """
    sizes = rng.integers(2, 5, size=n_regions)
    if n_c is None:
        n_c = int(max(sizes) + 1) if full_column_rank else int(rng.integers(2, 4))
    regions, Qs, cs, As, Es, es = [], [], [], [], [], []
    for n in sizes:
        M = rng.standard_normal((n, n))
        Q = M @ M.T + n * np.eye(n)
        c = rng.standard_normal(n)
        if full_column_rank:
            A = rng.standard_normal((n_c, n))
        else:
            # consensus-like: a few shared entries with +-1 pattern
            A = np.zeros((n_c, n))
            for r in range(n_c):
                A[r, rng.integers(n)] = rng.choice([-1.0, 1.0])
        eq = None
        if local_eq:
            E = rng.standard_normal((1, n))
            e = rng.standard_normal(1)
            eq = SmoothFunction.affine(E, -e)
            Es.append(E)
            es.append(e)
        regions.append(Subproblem(objective=SmoothFunction.quadratic(Q, c), A=sp.csc_matrix(A),
                                  eq_constraints=eq))
        Qs.append(Q)
        cs.append(c)
        As.append(A)
    return (PartitionedProblem(tuple(regions)), Qs, cs, As, (Es or None), (es or None))


TWO_BUS = """function mpc = two_bus
mpc.version = '2';
mpc.baseMVA = 100;
%% bus_i type Pd Qd Gs Bs area Vm Va baseKV zone Vmax Vmin
mpc.bus = [
  1 3 0   0  0 0 1 1 0 135 1 1.1 0.9;
  2 1 {pd} {qd} 0 0 1 1 0 135 1 1.1 0.9;
];
%% bus Pg Qg Qmax Qmin Vg mBase status Pmax Pmin
mpc.gen = [
  1 0 0 300 -300 1 100 1 250 0;
];
%% fbus tbus r x b rateA rateB rateC ratio angle status angmin angmax
mpc.branch = [
  1 2 {r} {x} 0 0 0 0 0 0 1 -360 360;
];
%% model startup shutdown n c2 c1 c0
mpc.gencost = [
  2 0 0 3 {c2} {c1} 0;
];
"""


def two_bus_case(pd=100.0, qd=0.0, r=0.01, x=0.1, c2=0.01, c1=10.0):
    return parse_case(TWO_BUS.format(pd=pd, qd=qd, r=r, x=x, c2=c2, c1=c1), name="two_bus")
