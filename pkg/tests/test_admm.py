import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from dopf import (AdmmConfig, ConsensusOperator, IterateState, PartitionedProblem,
                  SmoothFunction, Subproblem, admm_consensus_step, admm_local_step, admm_run,
                  consensus_gap, detect_stall, dual_update)

from instances import random_qp
from oracles import separable_qp_kkt


def scalar(A, f=None):
    return Subproblem(objective=f or SmoothFunction.quadratic([[0.0]]), A=sp.csc_matrix([[A]]))


def pair_qp():
    """min 1/2 (x1-1)^2 + 1/2 (x2+1)^2  s.t.  x1 - x2 = 0, solution 0."""
    return PartitionedProblem((
        Subproblem(objective=SmoothFunction.quadratic([[1.0]], [-1.0], 0.5), A=sp.csc_matrix([[1.0]])),
        Subproblem(objective=SmoothFunction.quadratic([[1.0]], [1.0], 0.5), A=sp.csc_matrix([[-1.0]])),
    ))


def consensus_feasible(problem, rng):
    """Random x with sum_i A_i x_i = 0 (projection onto null(A))."""
    A = problem.coupling_matrix().toarray()
    x = rng.standard_normal(problem.n_x)
    x -= np.linalg.pinv(A) @ (A @ x)
    return problem.scatter(x)


class TestLocalStep:
    def test_zero_objective_returns_center(self, rng):
        A = rng.standard_normal((4, 3))
        reg = Subproblem(objective=SmoothFunction.quadratic(np.zeros((3, 3))), A=sp.csc_matrix(A))
        problem = PartitionedProblem((reg,))
        z = rng.standard_normal(3)
        x = admm_local_step(problem, IterateState.for_admm(problem, [z]), AdmmConfig(rho=2.0))
        np.testing.assert_allclose(x[0].x_opt, z, atol=1e-10)

    def test_scalar_hand_solution(self):
        # 1/2 x^2 + x + 1/2 x^2 is minimized at -1/2
        problem = PartitionedProblem((scalar(1.0, SmoothFunction.quadratic([[1.0]])),))
        state = IterateState.for_admm(problem, [np.zeros(1)], [np.ones(1)])
        x = admm_local_step(problem, state, AdmmConfig(rho=1.0))
        assert x[0].x_opt[0] == pytest.approx(-0.5, abs=1e-10)


class TestDualUpdate:
    def test_zero_residual_keeps_multiplier(self, rng):
        problem, *_ = random_qp(rng)
        z = [rng.standard_normal(r.n_xi) for r in problem.regions]
        lam = [rng.standard_normal(problem.n_c) for _ in problem.regions]
        state = IterateState.for_admm(problem, z, lam)
        out = dual_update(problem, state, z, AdmmConfig(rho=5.0))
        for a, b in zip(out, lam):
            np.testing.assert_array_equal(a, b)

    def test_scalar_substitution(self):
        problem = PartitionedProblem((scalar(1.0),))
        state = IterateState.for_admm(problem, [np.zeros(1)])
        out = dual_update(problem, state, [np.array([0.1])], AdmmConfig(rho=10.0))
        assert out[0][0] == pytest.approx(1.0, abs=1e-15)

    def test_matches_dense_arithmetic(self, rng):
        problem, Qs, cs, As, *_ = random_qp(rng)
        z = [rng.standard_normal(r.n_xi) for r in problem.regions]
        x = [rng.standard_normal(r.n_xi) for r in problem.regions]
        lam = [rng.standard_normal(problem.n_c) for _ in problem.regions]
        out = dual_update(problem, IterateState.for_admm(problem, z, lam), x, AdmmConfig(rho=3.0))
        for o, l, A, xi, zi in zip(out, lam, As, x, z):
            np.testing.assert_array_equal(o, l + 3.0 * (A @ (xi - zi)))


class TestConsensusStep:
    def test_feasible_point_is_fixed(self, rng):
        problem, *_ = random_qp(rng)
        x = consensus_feasible(problem, rng)
        step = admm_consensus_step(problem, x, [np.zeros(problem.n_c)] * len(x), rho=1.0)
        for d in step.delta_x:
            np.testing.assert_allclose(d, 0.0, atol=1e-14)

    def test_two_scalar_regions(self):
        problem = PartitionedProblem((scalar(1.0), scalar(-1.0)))
        step = admm_consensus_step(problem, [np.array([1.0]), np.array([0.0])],
                                   [np.zeros(1), np.zeros(1)], rho=1.0)
        np.testing.assert_allclose(np.concatenate(step.delta_x), [-0.5, 0.5], atol=1e-15)
        np.testing.assert_allclose(np.concatenate(step.z), [0.5, 0.5], atol=1e-15)

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), rho=st.floats(1e-2, 1e4))
    def test_minimum_norm_solution(self, seed, rho):
        rng = np.random.default_rng(seed)
        problem, _, _, As, *_ = random_qp(rng, n_regions=int(rng.integers(2, 5)))
        x = [rng.standard_normal(r.n_xi) for r in problem.regions]
        lam = [rng.standard_normal(problem.n_c) for _ in problem.regions]
        step = admm_consensus_step(problem, x, lam, rho=rho)
        # min sum rho/2 |A_i d_i|^2 - lam_i' A_i d_i  s.t. sum A_i d_i = -sum A_i x_i;
        # lstsq on the singular KKT system returns the minimum-norm d
        A = np.hstack(As)
        H = np.zeros((problem.n_x, problem.n_x))
        o = problem.offsets
        for i, Ai in enumerate(As):
            H[o[i]:o[i + 1], o[i]:o[i + 1]] = rho * Ai.T @ Ai
        K = np.block([[H, A.T], [A, np.zeros((A.shape[0], A.shape[0]))]])
        rhs = np.r_[np.concatenate([Ai.T @ l for Ai, l in zip(As, lam)]), -A @ np.concatenate(x)]
        sol = np.linalg.lstsq(K, rhs, rcond=None)[0]
        np.testing.assert_allclose(np.concatenate(step.delta_x), sol[:problem.n_x],
                                   atol=1e-8 * max(1.0, np.abs(sol).max()))

    @settings(max_examples=25, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), log_rho=st.floats(-2, 12))
    def test_consensus_variables_are_feasible(self, seed, log_rho):
        rng = np.random.default_rng(seed)
        problem, *_ = random_qp(rng, n_regions=int(rng.integers(2, 5)))
        x = [rng.standard_normal(r.n_xi) for r in problem.regions]
        lam = [rng.standard_normal(problem.n_c) for _ in problem.regions]
        step = admm_consensus_step(problem, x, lam, rho=10.0 ** log_rho)
        assert consensus_gap(problem, step.z) <= 1e-10

    def test_large_rho_moves_only_in_null_space(self, rng):
        for _ in range(10):
            problem, *_ = random_qp(rng, n_regions=int(rng.integers(2, 5)))
            x = consensus_feasible(problem, rng)
            lam = [rng.uniform(-1, 1, problem.n_c) for _ in problem.regions]
            step = admm_consensus_step(problem, x, lam, rho=1e12)
            bound = 1e-9 * max(np.abs(l).max() for l in lam)
            for reg, d in zip(problem.regions, step.delta_x):
                assert np.max(np.abs(reg.A @ d), initial=0.0) <= bound

    def test_operator_reuse(self, rng):
        problem, *_ = random_qp(rng)
        op = ConsensusOperator(problem)
        x = [rng.standard_normal(r.n_xi) for r in problem.regions]
        lam = [rng.standard_normal(problem.n_c) for _ in problem.regions]
        a = admm_consensus_step(problem, x, lam, 2.0, operator=op)
        b = admm_consensus_step(problem, x, lam, 2.0)
        for u, v in zip(a.z, b.z):
            np.testing.assert_array_equal(u, v)


class TestRun:
    def test_convex_pair_converges(self):
        problem = pair_qp()
        z0 = [np.array([3.0]), np.array([-2.0])]
        res = admm_run(problem, IterateState.for_admm(problem, z0),
                       AdmmConfig(rho=1.0, max_iter=100, termination_eps=1e-6))
        assert res.converged
        assert res.iterations <= 100
        np.testing.assert_allclose(np.concatenate(res.state.z), 0.0, atol=1e-5)
        assert res.trace[-1].primal_gap < 1e-6

    def test_random_qp_reaches_kkt_solution(self, rng):
        problem, Qs, cs, As, Es, es = random_qp(rng, local_eq=True)
        x_star, _ = separable_qp_kkt(Qs, cs, As, Es, es)
        z0 = [np.zeros(r.n_xi) for r in problem.regions]
        res = admm_run(problem, IterateState.for_admm(problem, z0),
                       AdmmConfig(rho=1.0, max_iter=2000, termination_eps=1e-9), reference=x_star)
        assert res.converged
        assert res.trace[-1].dist_to_ref <= 1e-6

    def test_trace_indices_and_history(self):
        problem = pair_qp()
        res = admm_run(problem, IterateState.for_admm(problem, [np.ones(1), np.ones(1)]),
                       AdmmConfig(rho=1.0, max_iter=5, termination_eps=1e-12))
        assert res.status == "max_iter"
        np.testing.assert_array_equal(res.trace.column("k"), np.arange(6))
        assert len(res.x_history) == len(res.step_norms) == 6
        assert np.isnan(res.step_norms[0])

    def test_config_validation(self):
        with pytest.raises(ValueError):
            AdmmConfig(rho=0.0)
        with pytest.raises(ValueError):
            AdmmConfig(rho=1.0, termination_eps=-1.0)


class TestStallDetection:
    def test_converged_run_is_not_stalled(self):
        problem = pair_qp()
        cfg = AdmmConfig(rho=1.0, max_iter=200, termination_eps=1e-10, min_iter=30)
        res = admm_run(problem, IterateState.for_admm(problem, [np.ones(1), np.ones(1)]), cfg)
        rep = detect_stall(res, cfg)
        assert res.converged
        assert rep.max_step <= cfg.stall_tol
        assert not rep.stalled

    def test_moving_iterates_are_not_stalled(self):
        problem = pair_qp()
        cfg = AdmmConfig(rho=1e-2, max_iter=20, termination_eps=1e-12)
        res = admm_run(problem, IterateState.for_admm(problem, [np.array([5.0]), np.array([5.0])]),
                       cfg)
        # local solutions undercut f* = 1 and approach it monotonically
        obj = res.trace.column("objective")
        assert np.all(np.diff(obj[1:]) > 0) and obj[-1] < 1.0
        rep = detect_stall(res, cfg)
        assert rep.max_step > cfg.stall_tol
        assert not rep.stalled

    def test_short_trace_is_inconclusive(self):
        problem = pair_qp()
        cfg = AdmmConfig(rho=1.0, max_iter=3)
        res = admm_run(problem, IterateState.for_admm(problem, [np.ones(1), np.ones(1)]), cfg)
        rep = detect_stall(res, cfg)
        assert not rep.stalled and rep.since_iter is None
