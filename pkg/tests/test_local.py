import math

import numpy as np
import pytest
import scipy.sparse as sp
from hypothesis import given, settings, strategies as st

from dopf import SmoothFunction, Subproblem
from dopf.linalg import LDLFactor, floor_eigenvalues, independent_rows, null_space_basis
from dopf.local import (AugmentedLocalProblem, extract_sensitivities, local_kkt_residual,
                        solve_constrained_least_squares, solve_local)


def circle_region():
    """min x1 + x2  s.t.  x1^2 + x2^2 <= 1."""
    h = SmoothFunction(2, 1, lambda x: np.array([x @ x - 1.0]), lambda x: 2 * x[None, :],
                       lambda x, w: 2 * w[0] * np.eye(2))
    return Subproblem(objective=SmoothFunction.quadratic(np.zeros((2, 2)), [1.0, 1.0]),
                      A=sp.csc_matrix((0, 2)), ineq_constraints=h)


def aug(region, z=None, lin=None, rho=0.0, metric="coupling"):
    n = region.n_xi
    return AugmentedLocalProblem(base=region, linear_term=np.zeros(n) if lin is None else lin,
                                 prox_center=np.zeros(n) if z is None else z, prox_weight=rho,
                                 prox_metric=metric)


class TestSolveLocal:
    def test_linear_term_shifts_minimizer(self):
        reg = Subproblem(objective=SmoothFunction.quadratic([[1.0]]), A=sp.csc_matrix([[1.0]]))
        res = solve_local(aug(reg, lin=np.array([1.0])))
        assert res.optimal
        assert res.x_opt[0] == pytest.approx(-1.0, abs=1e-10)

    @pytest.mark.parametrize("f", [SmoothFunction.quadratic([[0.0]]),
                                   SmoothFunction.quadratic([[0.0]], [1.0])])
    def test_proximal_term_dominates(self, f):
        reg = Subproblem(objective=f, A=sp.csc_matrix([[1.0]]))
        z = np.array([0.7])
        res = solve_local(aug(reg, z=z, rho=1e6))
        assert abs(res.x_opt[0] - z[0]) <= 1e-6 + 1e-12

    def test_circle_kkt_point(self):
        res = solve_local(aug(circle_region()))
        assert res.optimal
        np.testing.assert_allclose(res.x_opt, [-math.sqrt(0.5)] * 2, atol=1e-7)
        assert res.ineq_duals[0] == pytest.approx(math.sqrt(0.5), abs=1e-7)
        kkt = local_kkt_residual(aug(circle_region()), res)
        assert max(kkt.values()) <= 1e-7

    def test_rejects_wrong_warm_start(self):
        with pytest.raises(ValueError):
            solve_local(aug(circle_region()), warm_start=np.zeros(3))

    def test_repeated_solves_are_identical(self, rng):
        Q = rng.standard_normal((3, 3))
        reg = Subproblem(objective=SmoothFunction.quadratic(Q @ Q.T + np.eye(3), [1.0, -2.0, 0.5]),
                         A=sp.csc_matrix(rng.standard_normal((2, 3))),
                         lower=-np.ones(3), upper=np.ones(3))
        p = aug(reg, z=rng.uniform(-1, 1, 3), rho=3.0)
        a, b = solve_local(p), solve_local(p)
        np.testing.assert_array_equal(a.x_opt, b.x_opt)
        np.testing.assert_array_equal(a.bound_duals[0], b.bound_duals[0])

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1), r1=st.floats(1e-2, 1e3), factor=st.floats(1.0, 1e3))
    def test_distance_to_center_shrinks_with_rho(self, seed, r1, factor):
        rng = np.random.default_rng(seed)
        n = 3
        M = rng.standard_normal((n, n))
        reg = Subproblem(objective=SmoothFunction.quadratic(M @ M.T + 0.1 * np.eye(n),
                                                            rng.standard_normal(n)),
                         A=sp.csc_matrix(np.eye(n)), lower=-2 * np.ones(n), upper=2 * np.ones(n))
        z = rng.uniform(-1, 1, n)
        d = [np.linalg.norm(solve_local(aug(reg, z=z, rho=r)).x_opt - z) for r in (r1, r1 * factor)]
        assert d[1] <= d[0] + 1e-7


class TestSensitivities:
    def test_convex_quadratic_unconstrained(self, rng):
        M = rng.standard_normal((3, 3))
        Q = M @ M.T + np.eye(3)
        reg = Subproblem(objective=SmoothFunction.quadratic(Q, [1.0, 0.0, -1.0]),
                         A=sp.csc_matrix((0, 3)))
        p = aug(reg)
        pack = extract_sensitivities(p, solve_local(p))
        np.testing.assert_allclose(pack.B, Q, atol=1e-12)
        assert pack.C.shape == (0, 3)
        np.testing.assert_allclose(pack.g, Q @ solve_local(p).x_opt + [1.0, 0.0, -1.0], atol=1e-12)

    def test_circle_active_jacobian(self):
        p = aug(circle_region())
        res = solve_local(p)
        pack = extract_sensitivities(p, res, active_tol=1e-6)
        np.testing.assert_allclose(pack.C, 2 * res.x_opt[None, :], atol=1e-12)
        assert pack.licq

    def test_indefinite_hessian_is_floored(self):
        # saddle 1/2 x1^2 - 1/2 x2^2 with x2 pushed onto its upper bound
        reg = Subproblem(objective=SmoothFunction.quadratic(np.diag([1.0, -1.0])),
                         A=sp.csc_matrix((0, 2)), lower=[-1.0, -1.0], upper=[1.0, 1.0])
        p = aug(reg)
        res = solve_local(p, warm_start=np.array([0.3, 0.5]))
        assert res.optimal
        pack = extract_sensitivities(p, res, floor=1e-6, hessian="full")
        np.testing.assert_allclose(pack.B, np.diag([1.0, 1e-6]), atol=1e-15)
        exact = extract_sensitivities(p, res, hessian="exact")
        np.testing.assert_allclose(exact.B, np.diag([1.0, -1.0]))
        # on null(C) only x1 moves, where curvature is already positive
        red = extract_sensitivities(p, res, hessian="reduced")
        np.testing.assert_allclose(red.B, np.eye(2), atol=1e-12)

    def test_rejects_failed_solve(self):
        p = aug(circle_region())
        res = solve_local(p)
        res.status = "max_iter"
        with pytest.raises(ValueError):
            extract_sensitivities(p, res)


class TestLeastSquares:
    def test_linear_residual(self):
        r = SmoothFunction.affine([[1.0]], [-3.0])
        res = solve_constrained_least_squares(r, [0.0], [10.0], [0.0])
        assert res.converged
        assert res.x[0] == pytest.approx(3.0, abs=1e-10)

    def test_root_inside_box(self):
        r = SmoothFunction(1, 1, lambda x: x ** 2 - 4.0, lambda x: 2 * x[None, :],
                           lambda x, w: 2 * w[0] * np.eye(1))
        res = solve_constrained_least_squares(r, [0.0], [10.0], [1.0])
        assert res.x[0] == pytest.approx(2.0, abs=1e-9)

    def test_infeasible_box_reports_best_point(self):
        r = SmoothFunction.affine([[1.0]], [-3.0])
        res = solve_constrained_least_squares(r, [0.0], [1.0], [0.5])
        assert not res.converged
        assert res.x[0] == pytest.approx(1.0)
        assert res.residual == pytest.approx(2.0)


def symmetric_matrices(max_n=7):
    return st.integers(1, max_n).flatmap(lambda n: st.lists(
        st.floats(-10, 10, allow_nan=False), min_size=n * n, max_size=n * n).map(
        lambda v: (lambda M: M + M.T)(np.array(v).reshape(n, n))))


class TestLinearAlgebra:
    @settings(max_examples=60, deadline=None)
    @given(K=symmetric_matrices())
    def test_inertia_matches_eigenvalues(self, K):
        w = np.linalg.eigvalsh(K)
        scale = max(1.0, np.max(np.abs(w)))
        # skip matrices with eigenvalues too close to zero to classify robustly
        if np.any(np.abs(w) < 1e-6 * scale):
            return
        pos, neg, zero = LDLFactor(K).inertia
        assert (pos, neg, zero) == (int(np.sum(w > 0)), int(np.sum(w < 0)), 0)

    def test_inertia_of_singular_matrix(self):
        K = np.diag([2.0, -3.0, 0.0])
        assert LDLFactor(K).inertia == (1, 1, 1)

    @settings(max_examples=40, deadline=None)
    @given(seed=st.integers(0, 2**31 - 1))
    def test_kkt_solve(self, seed):
        rng = np.random.default_rng(seed)
        n, m = 5, 2
        M = rng.standard_normal((n, n))
        A = rng.standard_normal((m, n))
        K = np.block([[M @ M.T + np.eye(n), A.T], [A, np.zeros((m, m))]])
        b = rng.standard_normal(n + m)
        np.testing.assert_allclose(LDLFactor(K).solve(b), np.linalg.solve(K, b), atol=1e-9)
        assert LDLFactor(K).inertia == (n, m, 0)

    @settings(max_examples=40, deadline=None)
    @given(K=symmetric_matrices(5), floor=st.floats(1e-8, 1.0))
    def test_floor_eigenvalues(self, K, floor):
        w, V = np.linalg.eigh(K)
        expected = (V * np.maximum(w, floor)) @ V.T
        np.testing.assert_allclose(floor_eigenvalues(K, floor), expected, atol=1e-9 * max(1, abs(w).max()))

    def test_independent_rows_and_null_space(self):
        C = np.array([[1.0, 0.0, 0.0], [2.0, 0.0, 0.0], [0.0, 1.0, 1.0]])
        keep = independent_rows(C)
        assert keep.size == 2
        Z = null_space_basis(C[keep])
        assert Z.shape == (3, 1)
        np.testing.assert_allclose(C @ Z, 0.0, atol=1e-14)
        np.testing.assert_allclose(Z.T @ Z, np.eye(1), atol=1e-14)
