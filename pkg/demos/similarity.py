"""ALADIN with substituted sensitivities takes exactly the ADMM step.

With B_i = rho A_i^T A_i, the gradient built from the updated ADMM
multiplier, no active constraints and no slack, the ALADIN coordination QP
returns the ADMM consensus point when every A_i has full column rank.

    python3 demos/similarity.py
"""

import math

import numpy as np
import scipy.sparse as sp

from dopf import (AdmmConfig, AladinConfig, IterateState, PartitionedProblem, SmoothFunction,
                  Subproblem, admm_consensus_step, admm_local_step, aladin_coordination,
                  dual_update, similarity_packs)


def random_problem(rng, sizes=(2, 3, 2), n_c=4):
    regions = []
    for n in sizes:
        M = rng.standard_normal((n, n))
        f = SmoothFunction.quadratic(M @ M.T + n * np.eye(n), rng.standard_normal(n))
        regions.append(Subproblem(objective=f, A=sp.csc_matrix(rng.standard_normal((n_c, n)))))
    return PartitionedProblem(tuple(regions))


def main():
    rng = np.random.default_rng(1)
    problem = random_problem(rng)
    rho = 3.0
    cfg = AdmmConfig(rho=rho)
    state = IterateState.for_admm(problem, [rng.standard_normal(r.n_xi) for r in problem.regions],
                                  [rng.standard_normal(problem.n_c) for _ in problem.regions])
    xs = [r.x_opt for r in admm_local_step(problem, state, cfg)]
    lam = dual_update(problem, state, xs, cfg)
    z_admm = admm_consensus_step(problem, xs, lam, rho).z
    co = aladin_coordination(problem, xs, similarity_packs(problem, lam, rho),
                             np.zeros(problem.n_c), AladinConfig(rho=rho, mu=math.inf))
    for i, (x, d, z) in enumerate(zip(xs, co.delta_x, z_admm)):
        print(f"region {i}: ADMM z = {np.array2string(z, precision=6)}")
        print(f"          ALADIN   {np.array2string(x + d, precision=6)}")
    diff = max(np.max(np.abs(x + d - z)) for x, d, z in zip(xs, co.delta_x, z_admm))
    print(f"max difference {diff:.2e}")


if __name__ == "__main__":
    main()
