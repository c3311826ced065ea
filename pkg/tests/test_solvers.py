import numpy as np
import pytest

from otmanifold import (
    CouplingSpace,
    SolverConfig,
    check_derivatives,
    independence_point,
    make_classic,
    make_entropic,
    make_squared,
    sinkhorn_entropic,
    sinkhorn_knopp_project,
    rgd,
    rtr,
    validate_point,
)


@pytest.fixture
def classic_2x2():
    sp = CouplingSpace(np.ones(2), np.ones(2))
    return make_classic(sp, np.array([[0.0, 1.0], [1.0, 0.0]]))


class TestSolverConfig:
    def test_defaults_valid(self):
        SolverConfig()

    def test_rejects_bad_values(self):
        with pytest.raises(ValueError):
            SolverConfig(armijo_c=1.5)
        with pytest.raises(ValueError):
            SolverConfig(backtrack_factor=0.0)
        with pytest.raises(ValueError):
            SolverConfig(step_mode="magic")


class TestRGD:
    def test_classic_2x2_reaches_matching(self, classic_2x2):
        rep = rgd(classic_2x2, independence_point(classic_2x2.space))
        assert rep.final_objective < 0.02
        diffs = np.diff(rep.objective_trace)
        assert np.all(diffs <= 1e-12)

    def test_armijo_descent_condition(self, classic_2x2):
        cfg = SolverConfig()
        rep = rgd(classic_2x2, independence_point(classic_2x2.space), cfg)
        for k in range(len(rep.step_trace)):
            f_prev = rep.objective_trace[k]
            f_next = rep.objective_trace[k + 1]
            alpha = rep.step_trace[k]
            gn = rep.gradnorm_trace[k]
            assert f_next <= f_prev - cfg.armijo_c * alpha * gn * gn + 1e-12

    def test_entropic_matches_sinkhorn(self, synth85, synth85_space):
        p, q, C = synth85
        pr = make_entropic(synth85_space, C, lam=1.0)
        rep = rgd(pr, independence_point(synth85_space),
                  SolverConfig(grad_tol=1e-10))
        assert rep.status == "converged"
        sk = sinkhorn_entropic(C, p, q, lam=1.0)
        assert float(np.mean((rep.final_point.X - sk.plan) ** 2)) < 1e-6

    def test_stationary_start_converges_immediately(self, synth85, synth85_space):
        p, q, C = synth85
        lam = 1.0
        pr = make_entropic(synth85_space, C, lam=lam)
        # the entropic optimum is the scaling projection of the Gibbs kernel
        res = sinkhorn_knopp_project(synth85_space, np.exp(-C / lam), eps=1e-13)
        x_star = validate_point(synth85_space, res.plan)
        rep = rgd(pr, x_star, SolverConfig(grad_tol=1e-6))
        assert rep.status == "converged"
        assert rep.iterations <= 2

    def test_every_iterate_feasible(self, classic_2x2):
        rep = rgd(classic_2x2, independence_point(classic_2x2.space))
        validate_point(classic_2x2.space, rep.final_point.X)

    def test_determinism(self, synth85, synth85_space):
        _, _, C = synth85
        pr = make_entropic(synth85_space, C, lam=0.5)
        x0 = independence_point(synth85_space)
        r1 = rgd(pr, x0)
        r2 = rgd(pr, x0)
        assert r1.objective_trace == r2.objective_trace
        assert r1.gradnorm_trace == r2.gradnorm_trace
        assert r1.step_trace == r2.step_trace
        np.testing.assert_array_equal(r1.final_point.X, r2.final_point.X)

    def test_line_search_failure_reported(self):
        # a positivity floor exactly at the start leaves no room to move
        sp = CouplingSpace(np.ones(2), np.ones(2), positivity_floor=0.5)
        pr = make_classic(sp, np.array([[0.0, 1.0], [1.0, 0.0]]))
        rep = rgd(pr, independence_point(sp))
        assert rep.status == "line_search_failed"
        validate_point(sp, rep.final_point.X)  # last iterate returned

    def test_constant_step_mode(self, synth85, synth85_space):
        _, _, C = synth85
        pr = make_entropic(synth85_space, C, lam=1.0)
        cfg = SolverConfig(step_mode="constant", initial_step=0.2, max_iter=50,
                           grad_tol=1e-8)
        rep = rgd(pr, independence_point(synth85_space), cfg)
        assert rep.status in ("converged", "max_iter")
        assert all(s == 0.2 for s in rep.step_trace)


class TestRTR:
    def test_squared_superlinear_tail(self, rng):
        # strong regularization keeps the optimum interior, where the
        # Newton model is exact and the tail contracts superlinearly
        sp = CouplingSpace(np.ones(5), np.ones(5))
        C = rng.uniform(0, 1, (5, 5))
        pr = make_squared(sp, C, lam=5.0)
        rep = rtr(pr, independence_point(sp), SolverConfig(grad_tol=1e-6))
        assert rep.status == "converged"
        tail = rep.gradnorm_trace[-3:]
        ratios = [b / a for a, b in zip(tail, tail[1:])]
        assert all(r2 < r1 for r1, r2 in zip(ratios, ratios[1:]))

    def test_entropic_agrees_with_rgd(self, synth85, synth85_space):
        _, _, C = synth85
        pr = make_entropic(synth85_space, C, lam=1.0)
        x0 = independence_point(synth85_space)
        f_rgd = rgd(pr, x0, SolverConfig(grad_tol=1e-9)).final_objective
        f_rtr = rtr(pr, x0, SolverConfig(grad_tol=1e-9)).final_objective
        assert abs(f_rgd - f_rtr) < 1e-8

    def test_start_at_optimum(self, synth85, synth85_space):
        p, q, C = synth85
        lam = 1.0
        pr = make_entropic(synth85_space, C, lam=lam)
        res = sinkhorn_knopp_project(synth85_space, np.exp(-C / lam), eps=1e-13)
        rep = rtr(pr, validate_point(synth85_space, res.plan),
                  SolverConfig(grad_tol=1e-6))
        assert rep.status == "converged"
        assert rep.iterations <= 1

    def test_determinism(self, synth85, synth85_space):
        _, _, C = synth85
        pr = make_entropic(synth85_space, C, lam=2.0)
        x0 = independence_point(synth85_space)
        r1 = rtr(pr, x0)
        r2 = rtr(pr, x0)
        assert r1.objective_trace == r2.objective_trace
        np.testing.assert_array_equal(r1.final_point.X, r2.final_point.X)


class TestCheckDerivatives:
    def test_classic_gradient_error(self, synth85, synth85_space, synth85_x0):
        _, _, C = synth85
        pr = make_classic(synth85_space, C)
        d = check_derivatives(pr, synth85_x0, trials=6)
        assert d.grad_max_error < 1e-6

    def test_entropic_hessian_error(self, synth85, synth85_space, synth85_x0):
        _, _, C = synth85
        pr = make_entropic(synth85_space, C, lam=1.0)
        d = check_derivatives(pr, synth85_x0, trials=6)
        assert d.grad_max_error < 1e-6
        assert d.hess_max_error < 1e-4

    def test_seed_determinism(self, synth85, synth85_space, synth85_x0):
        _, _, C = synth85
        pr = make_entropic(synth85_space, C, lam=1.0)
        d1 = check_derivatives(pr, synth85_x0, trials=3, seed=7)
        d2 = check_derivatives(pr, synth85_x0, trials=3, seed=7)
        assert d1.grad_errors == d2.grad_errors
        assert d1.hess_errors == d2.hess_errors


class TestReport:
    def test_roundtrip_dict(self, classic_2x2):
        rep = rgd(classic_2x2, independence_point(classic_2x2.space))
        d = rep.to_dict()
        assert d["solver"] == "rgd"
        assert len(d["objective_trace"]) == rep.iterations + 1
        d2 = rep.to_dict(include_wall_time=False)
        assert "wall_time" not in d2

    def test_iteration_rows_align(self, classic_2x2):
        rep = rgd(classic_2x2, independence_point(classic_2x2.space))
        rows = rep.iteration_rows()
        assert rows[0][0] == 0
        assert rows[0][1] == rep.objective_trace[0]
        assert len(rows) == len(rep.objective_trace)
