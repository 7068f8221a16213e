"""ADMM freezes at a non-optimal point when rho is huge.

From the power-flow feasible start, a penalty of 1e12 makes every local
step return (almost) its own consensus point, so x barely moves although
the point is far from a KKT point of the full problem.

    python3 demos/stall.py
"""

import numpy as np

from dopf import AdmmConfig, IterateState, admm_run, detect_stall
from dopf.centralized import centralized_solve
from dopf.opf import DATA_DIR, build_partitioned_opf, load_case, load_partition
from dopf.opf.init import feasible_init


def main():
    case = load_case(DATA_DIR / "case57.m")
    spec = load_partition(DATA_DIR / "case57_4regions.txt")
    problem, layout = build_partitioned_opf(case, spec)
    z0 = feasible_init(problem, case, spec, layout).z
    f_star = centralized_solve(problem, layout.flat_start()).f

    for rho in (1e4, 1e12):
        cfg = AdmmConfig(rho=rho, max_iter=50, min_iter=51)
        res = admm_run(problem, IterateState.for_admm(problem, list(z0)), cfg)
        x0 = problem.gather(res.x_history[0])
        drift = max(np.max(np.abs(problem.gather(x) - x0)) for x in res.x_history)
        rep = detect_stall(res, cfg)
        print(f"rho = {rho:.0e}")
        print(f"  f^50 - f*            {res.trace[-1].objective - f_star:+.4e}")
        print(f"  max ||x^k - x^0||    {drift:.3e}")
        print(f"  max step, last 10    {rep.max_step:.3e}")
        print(f"  stationarity         {rep.stationarity:.3e}")
        print(f"  stalled              {rep.stalled} (since k = {rep.since_iter})")


if __name__ == "__main__":
    main()
