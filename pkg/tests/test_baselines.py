import numpy as np
import pytest

from otmanifold import (
    CouplingSpace,
    lp_exact,
    north_west_corner,
    sinkhorn_entropic,
    sinkhorn_knopp_project,
)

# optimal cost of the 8x5 synthetic instance; frozen from the transportation
# simplex and cross-checked against an independent LP solver below
SYNTH85_LP_COST = 3.6


class TestSinkhornEntropic:
    def test_zero_cost_gives_independence(self, synth85):
        p, q, _ = synth85
        for lam in [0.1, 1.0, 10.0]:
            res = sinkhorn_entropic(np.zeros((p.size, q.size)), p, q, lam)
            assert res.ok
            np.testing.assert_allclose(res.plan, np.outer(p, q) / p.sum(),
                                       atol=1e-9)

    def test_synth85_converges_tightly(self, synth85):
        p, q, C = synth85
        res = sinkhorn_entropic(C, p, q, lam=1.0)
        assert res.ok
        assert np.abs(res.plan.sum(axis=1) - p).max() < 1e-10
        assert np.abs(res.plan.sum(axis=0) - q).max() < 1e-10
        assert np.all(res.u > 0) and np.all(res.v > 0)

    def test_scalings_reproduce_plan(self, synth85):
        p, q, C = synth85
        res = sinkhorn_entropic(C, p, q, lam=2.0)
        K = np.exp(-C / 2.0)
        np.testing.assert_allclose(res.plan,
                                   res.u[:, None] * K * res.v[None, :])

    def test_tiny_lambda_raises_flag(self, synth85):
        p, q, C = synth85
        res = sinkhorn_entropic(C, p, q, lam=1e-4)
        assert res.kernel_underflow
        assert res.status != "converged"

    def test_instability_at_milli_lambda(self, synth85):
        p, q, C = synth85
        res = sinkhorn_entropic(C, p, q, lam=0.001)
        assert res.status == "unstable"
        assert not res.ok

    def test_fixed_point_property(self, synth85):
        p, q, C = synth85
        res = sinkhorn_entropic(C, p, q, lam=1.0, tol=1e-12)
        K = np.exp(-C / 1.0)
        u2 = p / (K @ res.v)
        v2 = q / (K.T @ u2)
        assert np.abs(u2 - res.u).max() < 1e-10 * res.u.max()
        assert np.abs(v2 - res.v).max() < 1e-10 * res.v.max()

    def test_log_domain_agrees(self, synth85):
        p, q, C = synth85
        res = sinkhorn_entropic(C, p, q, lam=1.0)
        res_log = sinkhorn_entropic(C, p, q, lam=1.0, log_domain=True)
        assert res_log.status == "converged"
        assert np.abs(res.plan - res_log.plan).max() < 1e-8

    def test_log_domain_survives_small_lambda(self, synth85):
        p, q, C = synth85
        res = sinkhorn_entropic(C, p, q, lam=0.01, log_domain=True)
        assert res.status == "converged"
        assert np.abs(res.plan.sum(axis=1) - p).max() < 1e-10


class TestNorthWestCorner:
    def test_unit_identity(self):
        np.testing.assert_array_equal(
            north_west_corner(np.ones(2), np.ones(2)), np.eye(2))

    def test_hand_example(self):
        plan = north_west_corner(np.array([3.0, 1.0]), np.array([2.0, 2.0]))
        np.testing.assert_array_equal(plan, np.array([[2.0, 1.0], [0.0, 1.0]]))

    def test_exact_marginals_random(self, rng):
        for _ in range(20):
            n, m = rng.integers(2, 9, 2)
            p = rng.uniform(0.5, 3.0, n)
            q = rng.uniform(0.5, 3.0, m)
            q *= p.sum() / q.sum()
            plan = north_west_corner(p, q)
            np.testing.assert_allclose(plan.sum(axis=1), p, atol=1e-12)
            np.testing.assert_allclose(plan.sum(axis=0), q, atol=1e-12)
            assert (plan > 0).sum() <= n + m - 1

    def test_uncoupled_rejected(self):
        from otmanifold import MarginalError
        with pytest.raises(MarginalError):
            north_west_corner(np.ones(2), np.array([1.0, 2.0]))


class TestLPExact:
    def test_2x2_matching(self):
        res = lp_exact(np.array([[0.0, 1.0], [1.0, 0.0]]), np.ones(2), np.ones(2))
        assert res.status == "optimal"
        assert res.cost == pytest.approx(0.0, abs=1e-12)
        np.testing.assert_allclose(res.plan, np.eye(2), atol=1e-12)

    def test_synth85_frozen_cost(self, synth85):
        p, q, C = synth85
        res = lp_exact(C, p, q)
        assert res.status == "optimal"
        assert res.cost == pytest.approx(SYNTH85_LP_COST, abs=1e-9)
        assert (res.plan > 1e-12).sum() <= p.size + q.size - 1

    def test_optimality_certificate(self, synth85):
        p, q, C = synth85
        res = lp_exact(C, p, q)
        reduced = C - res.u[:, None] - res.v[None, :]
        assert reduced.min() > -1e-9

    def test_lower_bound_over_random_instances(self, rng):
        for _ in range(50):
            n, m = rng.integers(2, 7, 2)
            p = rng.uniform(0.5, 2.0, n)
            q = rng.uniform(0.5, 2.0, m)
            q *= p.sum() / q.sum()
            C = rng.uniform(0.0, 5.0, (n, m))
            res = lp_exact(C, p, q)
            sp = CouplingSpace(p, q)
            feasible = sinkhorn_knopp_project(
                sp, rng.uniform(0.1, 2.0, (n, m))).plan
            assert res.cost <= float(np.sum(C * feasible)) + 1e-9

    def test_against_reference_lp(self, rng):
        linprog = pytest.importorskip("scipy.optimize").linprog
        for _ in range(10):
            n, m = rng.integers(2, 8, 2)
            p = rng.uniform(0.5, 2.0, n)
            q = rng.uniform(0.5, 2.0, m)
            q *= p.sum() / q.sum()
            C = rng.uniform(0.0, 5.0, (n, m))
            res = lp_exact(C, p, q)
            A_eq, b_eq = [], []
            for i in range(n):
                row = np.zeros((n, m)); row[i] = 1
                A_eq.append(row.ravel()); b_eq.append(p[i])
            for j in range(m):
                col = np.zeros((n, m)); col[:, j] = 1
                A_eq.append(col.ravel()); b_eq.append(q[j])
            ref = linprog(C.ravel(), A_eq=np.array(A_eq), b_eq=np.array(b_eq),
                          bounds=(0, None), method="highs")
            assert res.cost == pytest.approx(ref.fun, abs=1e-8)

    def test_synth85_against_reference_lp(self, synth85):
        linprog = pytest.importorskip("scipy.optimize").linprog
        p, q, C = synth85
        n, m = C.shape
        A_eq, b_eq = [], []
        for i in range(n):
            row = np.zeros((n, m)); row[i] = 1
            A_eq.append(row.ravel()); b_eq.append(p[i])
        for j in range(m):
            col = np.zeros((n, m)); col[:, j] = 1
            A_eq.append(col.ravel()); b_eq.append(q[j])
        ref = linprog(C.ravel(), A_eq=np.array(A_eq), b_eq=np.array(b_eq),
                      bounds=(0, None), method="highs")
        assert ref.fun == pytest.approx(SYNTH85_LP_COST, abs=1e-9)

    def test_degenerate_marginals(self):
        # equal partial sums force degenerate pivots
        p = np.array([1.0, 1.0, 2.0])
        q = np.array([2.0, 1.0, 1.0])
        C = np.array([[3.0, 1.0, 4.0], [1.0, 5.0, 9.0], [2.0, 6.0, 5.0]])
        res = lp_exact(C, p, q)
        assert res.status == "optimal"
        np.testing.assert_allclose(res.plan.sum(axis=1), p, atol=1e-12)
        np.testing.assert_allclose(res.plan.sum(axis=0), q, atol=1e-12)

    def test_infeasible(self):
        res = lp_exact(np.ones((2, 2)), np.ones(2), np.array([1.0, 2.0]))
        assert res.status == "infeasible"
        assert res.plan is None

    def test_larger_instance(self, rng):
        n, m = 40, 60
        p = rng.uniform(0.5, 2.0, n)
        q = rng.uniform(0.5, 2.0, m)
        q *= p.sum() / q.sum()
        C = rng.uniform(0.0, 10.0, (n, m))
        res = lp_exact(C, p, q)
        assert res.status == "optimal"
        reduced = C - res.u[:, None] - res.v[None, :]
        assert reduced.min() > -1e-8
        np.testing.assert_allclose(res.plan.sum(axis=1), p, atol=1e-9)


class TestAgreementBridge:
    def test_rgd_matches_sinkhorn_across_lambdas(self, rng):
        from otmanifold import (SolverConfig, independence_point,
                                make_entropic, rgd)
        for lam in [0.2, 1.0, 5.0]:
            p = rng.uniform(0.5, 2.0, 5)
            q = rng.uniform(0.5, 2.0, 5)
            q *= p.sum() / q.sum()
            C = rng.uniform(0.0, 2.0, (5, 5))
            sp = CouplingSpace(p, q, positivity_floor=1e-300)
            rep = rgd(make_entropic(sp, C, lam=lam), independence_point(sp),
                      SolverConfig(grad_tol=1e-11))
            sk = sinkhorn_entropic(C, p, q, lam=lam, tol=1e-12)
            assert sk.ok
            assert np.abs(rep.final_point.X - sk.plan).max() < 1e-5
