import json
import math

import numpy as np
import pytest

from thermoqp import IterateState, QpProblem, solve_equality_constrained
from thermoqp import kkt
from thermoqp.ipm import (
    MU_FLOOR,
    IpmConfig,
    Status,
    initialize,
    iteration_bound,
    recover_direction,
    select_direction,
    solve,
    step_sizes,
    termination,
    termination_ratios,
)
from thermoqp.qp_core import objective, residuals

from _problems import interior_eq_qp, random_state, spd


def one_dim():
    return QpProblem(Q=[[2.0]], c=[-2.0])


class TestConfig:
    def test_defaults_by_backend(self):
        direct, cg, spu = IpmConfig(), IpmConfig(backend="cg"), IpmConfig(backend="spu")
        assert (direct.alpha0, direct.sigma, direct.max_iters) == (0.99, 0.1, 200)
        assert direct.eps_p == direct.eps_d == direct.eps_o == 1e-6
        assert spu.eps_p == spu.eps_d == spu.eps_o == 1e-4
        assert direct.lambda_reg == 0.0
        assert cg.lambda_reg == spu.lambda_reg == 0.1
        assert direct.recover == "merit"

    @pytest.mark.parametrize("kw", [
        {"alpha0": 1.0}, {"sigma": 0.0}, {"eps_p": 1.5}, {"max_iters": 0},
        {"lambda_reg": -1.0}, {"backend": "gpu"}, {"recover": "maybe"},
    ])
    def test_rejects(self, kw):
        with pytest.raises(ValueError):
            IpmConfig(**kw)

    def test_dict_round_trip(self):
        cfg = IpmConfig(backend="cg", sigma=0.3)
        again = IpmConfig.from_dict(cfg.to_dict())
        assert again == cfg

    def test_unknown_key(self):
        with pytest.raises(ValueError, match="unknown"):
            IpmConfig.from_dict({"sigmaa": 0.1})


class TestInitialize:
    @pytest.mark.parametrize("n", [1, 3, 17])
    def test_mu_is_one(self, n):
        p = QpProblem(Q=np.eye(n), c=np.zeros(n))
        assert initialize(p).mu == 1.0

    def test_default_point(self):
        p = QpProblem(Q=np.eye(3), c=np.zeros(3), A=np.ones((1, 3)), b=[1.0])
        s = initialize(p)
        np.testing.assert_array_equal(s.x, np.ones(3))
        np.testing.assert_array_equal(s.y, np.zeros(1))
        np.testing.assert_array_equal(s.z, np.ones(3))

    def test_warm_start(self):
        p = QpProblem(Q=np.eye(2), c=np.zeros(2))
        warm = IterateState(x=[2.0, 3.0], y=np.zeros(0), z=[0.5, 0.5])
        s = initialize(p, warm_start=warm)
        np.testing.assert_array_equal(s.x, [2.0, 3.0])
        assert s.mu == pytest.approx(1.25)
        assert s is not warm

    def test_warm_start_rejected(self):
        p = QpProblem(Q=np.eye(2), c=np.zeros(2))
        with pytest.raises(ValueError):
            initialize(p, warm_start=IterateState(x=[0.0, 1.0], y=np.zeros(0), z=[1.0, 1.0]))
        with pytest.raises(ValueError):
            initialize(p, warm_start=IterateState(x=[1.0, 1.0, 1.0], y=np.zeros(0), z=[1.0, 1.0, 1.0]))


class TestStepSizes:
    def test_unobstructed(self):
        s = IterateState(x=[1.0, 2.0], y=np.zeros(0), z=[1.0, 1.0])
        assert step_sizes(s, (np.ones(2), None, np.zeros(2)), 0.99) == (0.99, 0.99)

    def test_hand_ratio(self):
        s = IterateState(x=[1.0, 1.0], y=np.zeros(0), z=[1.0, 1.0])
        a_p, a_d = step_sizes(s, (np.array([-2.0, 0.0]), None, np.zeros(2)), 0.99)
        assert a_p == pytest.approx(0.495)
        assert a_d == 0.99

    def test_dual_ratio(self):
        s = IterateState(x=[1.0], y=np.zeros(0), z=[0.3])
        _, a_d = step_sizes(s, (np.zeros(1), None, np.array([-0.6])), 0.9)
        assert a_d == pytest.approx(0.45)

    def test_property_interior(self):
        rng = np.random.default_rng(0)
        for _ in range(500):
            n = int(rng.integers(1, 10))
            s = random_state(rng, n, 0, 1e-6, 5.0)
            dx, dz = 10 * rng.standard_normal(n), 10 * rng.standard_normal(n)
            a_p, a_d = step_sizes(s, (dx, None, dz), 0.99)
            assert 0 < a_p <= 0.99 and 0 < a_d <= 0.99
            assert np.all(s.x + a_p * dx > 0)
            assert np.all(s.z + a_d * dz > 0)


class TestTermination:
    def _problem_and_state(self):
        p = QpProblem(Q=[[2.0]], c=[-2.0], A=[[1.0]], b=[1.0])
        # x = 1 is optimal with y = 0, z = 0 in the limit
        return p, IterateState(x=[1.0], y=[0.0], z=[1e-300])

    def test_all_zero_stops(self):
        p, s = self._problem_and_state()
        assert termination_ratios(p, s)[0] == 0.0
        assert termination(p, s, IpmConfig()) is False

    def test_comp_above_tolerance_continues(self):
        p = QpProblem(Q=[[2.0]], c=[-2.0])
        # obj at x=1 is -1 -> comp ratio = z / 2; dual residual 2x - 2 - z
        cfg = IpmConfig()
        z = 2 * 2 * cfg.eps_o
        s = IterateState(x=[1.0 + z / 2], y=np.zeros(0), z=[z])
        rp, rd, ro = termination_ratios(p, s)
        assert rp == 0.0 and rd == pytest.approx(0.0, abs=1e-15)
        assert ro == pytest.approx(2 * cfg.eps_o, rel=1e-3)
        assert termination(p, s, cfg) is True

    def test_exactly_at_tolerance_stops(self):
        p, s = self._problem_and_state()
        cfg = IpmConfig(eps_p=0.5, eps_d=0.5, eps_o=0.5)
        s.y = np.array([0.0])
        # pick b so the primal ratio is exactly eps_p: |b - x| / (1 + |b|) = 0.5 at b = 3, x = 1
        p3 = QpProblem(Q=[[2.0]], c=[-2.0], A=[[1.0]], b=[3.0])
        assert termination_ratios(p3, s)[0] == 0.5
        assert termination(p3, s, cfg) is False
        cfg2 = IpmConfig(eps_p=0.4999, eps_d=0.5, eps_o=0.5)
        assert termination(p3, s, cfg2) is True

    def test_matches_hand_evaluation_on_trace(self):
        rng = np.random.default_rng(1)
        p, _ = interior_eq_qp(rng, 8, 3)
        states = []
        solve(p, on_iteration=lambda st, ns: states.append(st.copy()))
        cfg = IpmConfig()
        for st in states:
            xi_p = p.b - p.A @ st.x
            xi_d = p.Q @ st.x + p.c - p.A.T @ st.y - st.z
            obj = 0.5 * st.x @ p.Q @ st.x + p.c @ st.x
            hand = (np.sqrt(np.sum(xi_p**2)) / (1 + np.sqrt(np.sum(p.b**2))) > cfg.eps_p
                    or np.sqrt(np.sum(xi_d**2)) / (1 + np.sqrt(np.sum(p.c**2))) > cfg.eps_d
                    or (st.x @ st.z / len(st.x)) / (1 + abs(obj)) > cfg.eps_o)
            assert termination(p, st, cfg) == hand
        assert termination(p, states[-1], cfg) is False


class TestRecoverDirection:
    def test_complementarity_row_restored(self):
        rng = np.random.default_rng(2)
        n, m, sigma = 6, 2, 0.1
        s = random_state(rng, n, m, 1e-3, 10.0)
        dr = rng.standard_normal(2 * n + m)
        target = sigma * s.complementarity() - s.x * s.z
        for mode in ("dz", "split"):
            dx, dy, dz = recover_direction(s, dr, n, m, sigma, mode)
            np.testing.assert_allclose(s.z * dx + s.x * dz, target, atol=1e-10)
            np.testing.assert_array_equal(dy, dr[n:n + m])

    def test_none_is_plain_split(self):
        dr = np.arange(5.0)
        s = IterateState(x=[1.0, 2.0], y=[0.0], z=[3.0, 4.0])
        dx, dy, dz = recover_direction(s, dr, 2, 1, 0.1, "none")
        np.testing.assert_array_equal(np.concatenate([dx, dy, dz]), dr)

    def test_split_keeps_the_large_side(self):
        s = IterateState(x=[10.0, 1e-3], y=np.zeros(0), z=[1e-3, 10.0])
        dr = np.array([0.5, -0.25, 0.125, 0.75])
        dx, _, dz = recover_direction(s, dr, 2, 0, 0.1, "split")
        # x_0 >= z_0: dx_0 kept, dz_0 rewritten; x_1 < z_1: dz_1 kept, dx_1 rewritten
        assert dx[0] == 0.5 and dz[1] == 0.75
        assert dz[0] != 0.125 and dx[1] != -0.25

    def test_exact_newton_step_unchanged(self):
        rng = np.random.default_rng(3)
        p, _ = interior_eq_qp(rng, 6, 2)
        s = random_state(rng, p.n, p.m)
        ksys = kkt.build_jacobian(p, s, 0.1)
        dr = np.linalg.solve(ksys.J, ksys.v)
        dx, dy, dz = recover_direction(s, dr, p.n, p.m, 0.1, "split")
        np.testing.assert_allclose(np.concatenate([dx, dy, dz]), dr, atol=1e-10)


class TestSelectDirection:
    def test_picks_lower_merit(self):
        rng = np.random.default_rng(10)
        p, _ = interior_eq_qp(rng, 8, 2)
        s = random_state(rng, p.n, p.m)
        ksys = kkt.build_jacobian(p, s, 0.1)
        ns = kkt.build_normal_system(p, s, 0.1)
        dr = np.linalg.solve(ns.Jt, kkt.build_normal_rhs(ksys))
        chosen = select_direction(p, s, dr, 0.1, 0.99)

        def score(delta):
            a_p, a_d = step_sizes(s, delta, 0.99)
            trial = IterateState(s.x + a_p * delta[0], s.y + a_d * delta[1], s.z + a_d * delta[2])
            return sum(termination_ratios(p, trial))

        cands = [recover_direction(s, dr, p.n, p.m, 0.1, mode) for mode in ("split", "none")]
        best = min(cands, key=score)
        for got, want in zip(chosen, best):
            np.testing.assert_array_equal(got, want)

    def test_separable_svm_with_regularization(self):
        # every x_i < z_i here; re-imposing complementarity alone collapses x
        from thermoqp.apps.svm import make_blobs, train_svm
        ds = make_blobs(30, separation=6.0, spread=0.5, rng=0)
        merit = train_svm(ds, IpmConfig(backend="direct", lambda_reg=0.1))
        split = train_svm(ds, IpmConfig(backend="direct", lambda_reg=0.1, recover="split"))
        assert merit.train_accuracy == 1.0
        assert split.train_accuracy < merit.train_accuracy


class TestSolve:
    def test_one_dimensional(self):
        rep = solve(one_dim())
        assert rep.status is Status.CONVERGED
        assert rep.x_star[0] == pytest.approx(1.0, abs=1e-4)

    def test_bound_active(self):
        # min x^2 + 2x on x >= 0 -> x* = 0, z* = 2
        rep = solve(QpProblem(Q=[[2.0]], c=[2.0]))
        assert rep.converged
        assert rep.x_star[0] == pytest.approx(0.0, abs=1e-5)
        assert rep.z[0] == pytest.approx(2.0, rel=1e-4)

    def test_svm_toy_grid_search(self):
        lam = 0.1
        yX = np.array([1.0, 1.0])  # y_i x_i for x=(1,-1), y=(+1,-1)
        Q = np.outer(yX, yX) + lam * np.eye(2)
        p = QpProblem(Q=Q, c=-np.ones(2), A=[[1.0, -1.0]], b=[0.0])
        rep = solve(p)
        assert rep.converged
        # feasible slice alpha_1 = alpha_2 = t >= 0
        t = np.arange(0.0, 2.0, 1e-4)
        vals = 0.5 * t**2 * np.sum(Q) - 2 * t
        t_best = t[np.argmin(vals)]
        np.testing.assert_allclose(rep.x_star, [t_best, t_best], atol=1e-3)

    def test_equality_constrained_closed_form(self):
        rng = np.random.default_rng(4)
        for _ in range(10):
            p, x_true = interior_eq_qp(rng, 12, 4)
            rep = solve(p, IpmConfig(eps_p=1e-8, eps_d=1e-8, eps_o=1e-8))
            assert rep.converged
            x_cf, _ = solve_equality_constrained(p.as_potential())
            np.testing.assert_allclose(x_cf, x_true, rtol=1e-8)
            np.testing.assert_allclose(rep.x_star, x_cf, rtol=1e-5, atol=1e-6)

    def test_converged_meets_tolerances(self):
        rng = np.random.default_rng(5)
        p, _ = interior_eq_qp(rng, 15, 4)
        cfg = IpmConfig()
        rep = solve(p, cfg)
        st = IterateState(rep.x_star, rep.y, rep.z)
        rp, rd, ro = termination_ratios(p, st)
        assert rp <= cfg.eps_p and rd <= cfg.eps_d and ro <= cfg.eps_o

    def test_trace_invariants(self):
        rng = np.random.default_rng(6)
        p, _ = interior_eq_qp(rng, 10, 3)
        cfg = IpmConfig()
        seen = []
        rep = solve(p, cfg, on_iteration=lambda st, ns: seen.append(st.copy()))
        assert len(rep.trace) == rep.iterations == len(seen)
        mu = 1.0
        for rec, st in zip(rep.trace, seen):
            mu = max(cfg.sigma * mu, MU_FLOOR)
            assert rec.mu == pytest.approx(mu, rel=1e-12)
            assert st.x.min() > 0 and st.z.min() > 0
            res = residuals(p, st)
            assert rec.primal_res == pytest.approx(res.primal_norm)
            assert rec.dual_res == pytest.approx(res.dual_norm)
            assert rec.mu_realized == pytest.approx(st.x @ st.z / p.n)
            assert 0 < rec.alpha_p <= cfg.alpha0 and 0 < rec.alpha_d <= cfg.alpha0
            assert rec.objective == pytest.approx(objective(p, st.x))

    def test_iter_limit(self):
        rep = solve(one_dim(), IpmConfig(max_iters=2))
        assert rep.status is Status.ITER_LIMIT
        assert rep.iterations == 2

    def test_infeasible_is_not_converged(self):
        # x >= 0 with x_1 + x_2 = -1 is empty
        p = QpProblem(Q=np.eye(2), c=np.zeros(2), A=[[1.0, 1.0]], b=[-1.0])
        rep = solve(p, IpmConfig(max_iters=50))
        assert rep.status is not Status.CONVERGED

    def test_singular_direct_is_numerical_failure(self):
        # duplicated equality rows make J singular when lambda = 0
        p = QpProblem(Q=np.eye(2), c=-np.ones(2), A=[[1.0, 1.0], [1.0, 1.0]], b=[1.0, 1.0])
        rep = solve(p)
        assert rep.status is Status.NUMERICAL_FAILURE
        assert "solve" in rep.message

    @pytest.mark.parametrize("backend", ["cg", "spu"])
    def test_regularized_backends(self, backend):
        rng = np.random.default_rng(7)
        p, x_true = interior_eq_qp(rng, 6, 2)
        rep = solve(p, IpmConfig(backend=backend, spu={"seed": 1} if backend == "spu" else {}))
        assert rep.converged
        np.testing.assert_allclose(rep.x_star, x_true, rtol=2e-2, atol=1e-2)
        if backend == "spu":
            assert rep.modeled_spu_time is not None
            assert len(rep.timing) == rep.iterations
        else:
            assert rep.modeled_spu_time is None

    def test_deterministic(self):
        rng = np.random.default_rng(8)
        p, _ = interior_eq_qp(rng, 6, 2)
        a = solve(p, IpmConfig(backend="spu"))
        b = solve(p, IpmConfig(backend="spu"))
        np.testing.assert_array_equal(a.x_star, b.x_star)

    def test_json(self):
        rep = solve(one_dim(), IpmConfig(backend="spu"))
        data = json.loads(rep.to_json())
        assert data["status"] == "Converged"
        assert len(data["trace"]) == data["iterations"]
        assert data["modeled_spu_time"]["total_s"] > 0

    def test_warm_start_near_optimum_is_fast(self):
        rng = np.random.default_rng(9)
        p, x_true = interior_eq_qp(rng, 10, 3)
        cold = solve(p)
        warm = solve(p, warm_start=IterateState(x=cold.x_star, y=cold.y, z=np.full(p.n, 1e-4) + cold.z))
        assert warm.converged
        assert warm.iterations < cold.iterations


def test_iteration_bound():
    assert iteration_bound(10, 6, 1e-6) == pytest.approx(4 * math.log(1e6))
