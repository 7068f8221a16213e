import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from dopf import (DimensionError, KKTDuals, PartitionedProblem, PoisonedEvaluationError,
                  SmoothFunction, Subproblem, centralized_solve, consensus_gap,
                  constraint_violation, kkt_residual, objective_value, primal_gap)
from dopf.problem import estimate_duals

from instances import random_qp
from oracles import mismatch


def scalar_region(A, f=None, h=None, **kw):
    return Subproblem(objective=f or SmoothFunction.quadratic([[0.0]]), A=sp.csc_matrix([[A]]),
                      ineq_constraints=h, **kw)


def pair_problem(with_bound=False):
    """min 1/2 (x1-1)^2 + 1/2 (x2+1)^2  s.t.  x1 - x2 = 0  [and x1 >= 1/2]."""
    h = SmoothFunction.affine([[-1.0]], [0.5]) if with_bound else None
    r1 = Subproblem(objective=SmoothFunction.quadratic([[1.0]], [-1.0], 0.5),
                    A=sp.csc_matrix([[1.0]]), ineq_constraints=h)
    r2 = Subproblem(objective=SmoothFunction.quadratic([[1.0]], [1.0], 0.5),
                    A=sp.csc_matrix([[-1.0]]))
    return PartitionedProblem((r1, r2))


class TestConsensusGap:
    def test_zero_point(self, rng):
        problem, *_ = random_qp(rng)
        zeros = [np.zeros(r.n_xi) for r in problem.regions]
        assert consensus_gap(problem, zeros) == 0.0

    def test_scalar_pair(self):
        problem = PartitionedProblem((scalar_region(1.0), scalar_region(-1.0)))
        assert consensus_gap(problem, [np.array([1.0]), np.array([0.0])]) == 1.0

    def test_case57_flat_start_matches_dense_product(self, opf57):
        problem, layout = opf57
        xs = layout.flat_start()
        A = problem.coupling_matrix().toarray()
        expected = np.max(np.abs(A @ np.concatenate(xs)))
        assert consensus_gap(problem, xs) == pytest.approx(expected, rel=0, abs=1e-14)

    def test_dimension_mismatch(self, rng):
        problem, *_ = random_qp(rng)
        with pytest.raises(DimensionError):
            consensus_gap(problem, [np.zeros(1)])

    @settings(max_examples=30, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), t=st.floats(-1e3, 1e3))
    def test_primal_gap_is_homogeneous(self, seed, t):
        rng = np.random.default_rng(seed)
        problem, *_ = random_qp(rng)
        x = [rng.standard_normal(r.n_xi) for r in problem.regions]
        z = [rng.standard_normal(r.n_xi) for r in problem.regions]
        scaled = [zi + t * (xi - zi) for xi, zi in zip(x, z)]
        assert primal_gap(problem, scaled, z) == pytest.approx(
            abs(t) * primal_gap(problem, x, z), rel=1e-12, abs=1e-12)


class TestConstraintViolation:
    def test_scalar_inequality(self):
        h = SmoothFunction.affine([[1.0]], [-1.0])
        problem = PartitionedProblem((scalar_region(1.0, h=h),))
        assert constraint_violation(problem, [np.array([2.0])]) == 1.0

    def test_interior_feasible_point(self):
        h = SmoothFunction.affine([[1.0]], [-1.0])
        problem = PartitionedProblem((scalar_region(1.0, h=h, lower=[-5.0], upper=[5.0]),))
        assert constraint_violation(problem, [np.array([0.0])]) == 0.0

    def test_bound_excess(self):
        problem = PartitionedProblem((scalar_region(1.0, lower=[0.0], upper=[1.0]),))
        assert constraint_violation(problem, [np.array([1.25])]) == 0.25
        assert constraint_violation(problem, [np.array([-0.5])]) == 0.5

    def test_case57_flat_start_matches_mismatch_oracle(self, opf57, case57):
        problem, layout = opf57
        xs = layout.flat_start()
        Vm, Va, Pg, Qg = layout.network_point(xs)
        dS = mismatch(case57, Vm, Va, Pg, Qg)
        expected = max(np.max(np.abs(dS.real)), np.max(np.abs(dS.imag)))
        assert constraint_violation(problem, xs) == pytest.approx(expected, rel=1e-10)

    def test_nan_names_region(self):
        bad = SmoothFunction(1, 1, lambda x: np.array([np.nan]), lambda x: np.zeros((1, 1)),
                             lambda x, w: np.zeros((1, 1)))
        problem = PartitionedProblem((scalar_region(1.0), scalar_region(-1.0, f=bad)))
        with pytest.raises(PoisonedEvaluationError) as info:
            objective_value(problem, [np.zeros(1), np.zeros(1)])
        assert info.value.region == 1
        h_bad = SmoothFunction(1, 1, lambda x: np.array([np.inf]), lambda x: np.zeros((1, 1)),
                               lambda x, w: np.zeros((1, 1)))
        problem = PartitionedProblem((scalar_region(1.0, h=h_bad),))
        with pytest.raises(PoisonedEvaluationError) as info:
            constraint_violation(problem, [np.zeros(1)])
        assert info.value.region == 0


class TestKKTResidual:
    def test_unconstrained_identity_case(self):
        problem = PartitionedProblem((Subproblem(objective=SmoothFunction.quadratic(2 * np.eye(2)),
                                                 A=sp.csc_matrix((0, 2))),))
        res = kkt_residual(problem, [np.zeros(2)], KKTDuals.zeros(problem))
        assert (res.stationarity, res.primal, res.complementarity) == (0.0, 0.0, 0.0)

    def test_centralized_solution_of_pair(self):
        problem = pair_problem()
        ref = centralized_solve(problem, [np.array([3.0]), np.array([-2.0])])
        np.testing.assert_allclose(ref.x, [0.0, 0.0], atol=1e-8)
        np.testing.assert_allclose(ref.duals.consensus, [1.0], atol=1e-8)
        assert ref.kkt.max() <= 1e-8

    def test_hand_duals_with_active_inequality(self):
        # x = 1/2, consensus multiplier 3/2, inequality multiplier 1
        problem = pair_problem(with_bound=True)
        x = [np.array([0.5]), np.array([0.5])]
        duals = KKTDuals.zeros(problem)
        duals.consensus = np.array([1.5])
        duals.ineq[0] = np.array([1.0])
        assert kkt_residual(problem, x, duals).max() == pytest.approx(0.0, abs=1e-15)
        ref = centralized_solve(problem, [np.array([2.0]), np.array([2.0])])
        assert ref.kkt.max() <= 1e-8
        np.testing.assert_allclose(ref.x, [0.5, 0.5], atol=1e-8)
        np.testing.assert_allclose(ref.duals.ineq[0], [1.0], atol=1e-7)

    def test_perturbed_point_is_detected(self):
        problem = pair_problem(with_bound=True)
        ref = centralized_solve(problem, [np.array([2.0]), np.array([2.0])])
        xs = [xi + 1e-2 for xi in ref.xs]
        duals = estimate_duals(problem, xs)
        assert kkt_residual(problem, xs, duals).stationarity > 1e-4
        assert kkt_residual(problem, xs, ref.duals).stationarity > 1e-4


class TestLayoutRoundTrip:
    def test_gather_scatter(self, rng):
        problem, *_ = random_qp(rng, n_regions=4)
        x = rng.standard_normal(problem.n_x)
        np.testing.assert_array_equal(problem.gather(problem.scatter(x)), x)

    def test_network_state_is_consensus_feasible(self, opf57, ref57):
        problem, layout = opf57
        xs = layout.scatter_network(*layout.network_point(ref57.xs))
        assert consensus_gap(problem, xs) <= 1e-12
