import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import solve_ivp
from scipy.optimize import lsq_linear

from fleetsim.nmpc import (HorizonProblem, NmpcLeader, NmpcWeights, PredictionModel,
                           leader_dynamics, solve_box_qp, solve_horizon, stage_cost,
                           terminal_cost, tracking_error)
from fleetsim.structure import StructureConfig
from fleetsim.vessel import DEFAULT_PARAMS

VP = DEFAULT_PARAMS
W65 = NmpcWeights(n_fleet=65)


def rest_window(w=NmpcWeights(), x=0.0):
    ref = np.zeros((w.knots + 1, 6))
    ref[:, 0] = x
    return ref


def cruise_window(w, speed=0.3):
    t = np.arange(w.knots + 1) * w.control_dt
    ref = np.zeros((w.knots + 1, 6))
    ref[:, 0] = speed * t
    ref[:, 3] = speed
    return ref


class TestBoxQP:
    @given(st.integers(0, 10_000))
    @settings(max_examples=40, deadline=None)
    def test_matches_bounded_least_squares(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(2, 12))
        A = rng.normal(size=(n + 3, n))
        b = rng.normal(size=n + 3) * 3
        lb, ub = -rng.uniform(0.1, 1.0, n), rng.uniform(0.1, 1.0, n)
        res = solve_box_qp(A.T @ A, -A.T @ b, lb, ub)
        ref = lsq_linear(A, b, bounds=(lb, ub), tol=1e-14, method="bvls")
        assert res.converged
        assert np.all(res.z >= lb) and np.all(res.z <= ub)
        f = lambda z: 0.5 * np.sum((A @ z - b) ** 2)  # noqa: E731
        assert f(res.z) <= f(ref.x) + 1e-9

    def test_unconstrained_newton(self):
        H = np.array([[2.0, 0.5], [0.5, 1.0]])
        g = np.array([-1.0, 0.3])
        res = solve_box_qp(H, g, [-10, -10], [10, 10])
        np.testing.assert_allclose(res.z, np.linalg.solve(H, -g), atol=1e-12)
        assert res.iterations <= 2

    def test_active_bound(self):
        res = solve_box_qp(np.eye(2), np.array([-5.0, 1.0]), [-1, -1], [1, 1])
        np.testing.assert_allclose(res.z, (1.0, -1.0))


class TestDynamicsAndCosts:
    def test_rest_equilibrium(self):
        np.testing.assert_array_equal(leader_dynamics(np.zeros(6), (0, 0, 0, 0), VP), 0)

    def test_surge_pair(self):
        np.testing.assert_allclose(leader_dynamics(np.zeros(6), (1, 1, 0, 0), VP),
                                   (0, 0, 0, 2 / VP.m11, 0, 0))

    def test_model_rate_agrees(self):
        rng = np.random.default_rng(3)
        m = PredictionModel.single_vessel(VP)
        for _ in range(20):
            q, u = rng.normal(size=6), rng.uniform(-6, 6, 4)
            np.testing.assert_allclose(m.rate(q[None], u[None])[0], leader_dynamics(q, u, VP),
                                       rtol=1e-12, atol=1e-12)

    def test_stage_cost_examples(self):
        q_r = np.zeros(6)
        assert stage_cost(q_r, np.zeros(4), q_r, W65) == 0.0
        assert stage_cost(np.eye(6)[0], np.zeros(4), q_r, W65) == pytest.approx(1300.0)
        assert stage_cost(q_r, np.ones(4), q_r, W65) == pytest.approx(4.0)

    def test_terminal_cost_examples(self):
        q_r = np.zeros(6)
        assert terminal_cost(q_r, q_r, W65) == 0.0
        assert terminal_cost(np.eye(6)[0], q_r, W65) == pytest.approx(1300.0)
        assert terminal_cost(np.eye(6)[5], q_r, W65) == pytest.approx(2600.0)

    def test_heading_error_takes_short_way(self):
        e = tracking_error((0, 0, math.pi - 0.05, 0, 0, 0), (0, 0, -math.pi + 0.05, 0, 0, 0))
        assert e[2] == pytest.approx(-0.1)

    def test_weights_validation(self):
        with pytest.raises(ValueError):
            NmpcWeights(Qm=(1.0,) * 5)
        with pytest.raises(ValueError):
            NmpcWeights(horizon_T=0.0)
        assert NmpcWeights().knots == 40

    def test_structure_model_scales_inputs(self):
        cfg = StructureConfig.grid(3, 1, VP)
        m = PredictionModel.structure(VP, cfg)
        acc = m.rate(np.zeros((1, 6)), np.array([[1.0, 1.0, 0.0, 0.0]]))[0, 3]
        assert acc == pytest.approx(3 * 2.0 / (3 * VP.m11))


class TestSensitivities:
    def test_rk4_jacobians_vs_finite_differences(self):
        rng = np.random.default_rng(0)
        m = PredictionModel.single_vessel(VP)
        X, U, h, eps = rng.normal(size=(1, 6)) * 0.5, rng.uniform(-6, 6, (1, 4)), 0.1, 1e-6
        _, A, B = m.rk4_sensitivities(X, U, h)
        for j in range(6):
            dx = np.zeros((1, 6))
            dx[0, j] = eps
            fd = (m.rk4(X + dx, U, h) - m.rk4(X - dx, U, h))[0] / (2 * eps)
            np.testing.assert_allclose(A[0, :, j], fd, atol=1e-8)
        for j in range(4):
            du = np.zeros((1, 4))
            du[0, j] = eps
            fd = (m.rk4(X, U + du, h) - m.rk4(X, U - du, h))[0] / (2 * eps)
            np.testing.assert_allclose(B[0, :, j], fd, atol=1e-8)

    def test_objective_gradient_vs_central_differences(self):
        rng = np.random.default_rng(7)
        w = NmpcWeights(horizon_T=0.5, n_fleet=3)
        prob = HorizonProblem(w, PredictionModel.single_vessel(VP))
        worst = 0.0
        for _ in range(100):
            X = rng.normal(size=(w.knots + 1, 6)) * 0.5
            U = rng.uniform(-6, 6, (w.knots, 4))
            ref = rng.normal(size=(w.knots + 1, 6)) * 0.5
            gX, gU = prob.objective_gradient(X, U, ref)
            z = np.concatenate([X.ravel(), U.ravel()])
            g = np.concatenate([gX.ravel(), gU.ravel()])
            k = int(rng.integers(z.size))
            eps = 1e-6

            def J(zz):
                return prob.objective(zz[:X.size].reshape(X.shape), zz[X.size:].reshape(U.shape), ref)

            zp, zm = z.copy(), z.copy()
            zp[k] += eps
            zm[k] -= eps
            fd = (J(zp) - J(zm)) / (2 * eps)
            worst = max(worst, abs(fd - g[k]) / max(abs(g[k]), 1e-8))
        assert worst < 1e-5

    def test_reduced_gradient_vs_rollout_differences(self):
        rng = np.random.default_rng(11)
        w = NmpcWeights(horizon_T=0.5)
        prob = HorizonProblem(w, PredictionModel.single_vessel(VP))
        x0 = np.array([0.1, -0.2, 0.3, 0.2, 0.0, 0.05])
        U = rng.uniform(-3, 3, (w.knots, 4))
        ref = cruise_window(w)
        _, X = prob.rollout_objective(x0, U, ref)
        g = prob.reduced_gradient(X, U, ref)
        eps = 1e-6
        for k in rng.choice(U.size, 10, replace=False):
            up, um = U.copy().ravel(), U.copy().ravel()
            up[k] += eps
            um[k] -= eps
            fd = (prob.rollout_objective(x0, up.reshape(U.shape), ref)[0]
                  - prob.rollout_objective(x0, um.reshape(U.shape), ref)[0]) / (2 * eps)
            assert fd == pytest.approx(g[k], rel=1e-5, abs=1e-7)


class TestSolveHorizon:
    def test_rest_stays_at_rest(self):
        sol = solve_horizon(np.zeros(6), rest_window(W65), W65, VP)
        assert np.linalg.norm(sol.inputs[0]) < 1e-3
        assert sol.objective == pytest.approx(0.0, abs=1e-9)
        assert sol.converged

    def test_pushes_toward_reference_ahead(self):
        sol = solve_horizon(np.zeros(6), rest_window(W65, x=1.0), W65, VP)
        f = sol.first_command()
        assert f.f1 + f.f2 > 0

    def test_box_respected_and_defects_small(self):
        q = np.array([0.0, 2.0, 0.8, 0.0, 0.0, 0.0])
        sol = solve_horizon(q, cruise_window(W65, 0.4), W65, VP, max_iter=20)
        assert np.all(sol.inputs >= VP.f_min) and np.all(sol.inputs <= VP.f_max)
        dt = W65.control_dt
        for k in range(W65.knots):
            out = solve_ivp(lambda t, y: leader_dynamics(y, sol.inputs[k], VP), (0, dt), sol.states[k],
                            rtol=1e-11, atol=1e-12)
            assert np.max(np.abs(out.y[:, -1] - sol.states[k + 1])) < 1e-4

    def test_never_worse_than_warm_start(self):
        w = W65
        ldr = NmpcLeader(w, VP)
        q = np.array([0.5, -0.3, 0.2, 0.1, 0.0, 0.0])
        ref = cruise_window(w)
        ldr.step(q, ref, 0.0)
        warm = ldr.warm
        prob = HorizonProblem(w, ldr.model)
        q_next = warm.states[0]
        warm_J, _ = prob.rollout_objective(q_next, warm.inputs, ref)
        sol = solve_horizon(q_next, ref, w, VP, warm, max_iter=3)
        assert sol.objective <= warm_J + 1e-9

    def test_warm_start_reuses_work(self):
        w = W65
        q = np.array([0.0, 0.5, 0.0, 0.0, 0.0, 0.0])
        ref = cruise_window(w)
        first = solve_horizon(q, ref, w, VP, max_iter=30)
        second = solve_horizon(q, ref, w, VP, first, max_iter=30)
        assert second.iterations <= first.iterations

    def test_weight_scaling_leaves_argmin(self):
        n = 5
        q = np.array([0.0, 0.3, 0.1, 0.0, 0.0, 0.0])
        ref = cruise_window(NmpcWeights(), 0.2)
        a = solve_horizon(q, ref, NmpcWeights(n_fleet=n), VP, max_iter=40, kkt_tol=1e-9)
        base = NmpcWeights()
        b = solve_horizon(q, ref, NmpcWeights(Qm=base.Qm, Rm=tuple(r / n for r in base.Rm),
                                              QNm=base.QNm), VP, max_iter=40, kkt_tol=1e-9)
        np.testing.assert_allclose(a.inputs, b.inputs, atol=1e-4)

    def test_bad_window_shape(self):
        with pytest.raises(ValueError):
            solve_horizon(np.zeros(6), np.zeros((3, 6)), W65, VP)


class TestLeaderLoop:
    def test_stationary_command_near_zero(self):
        ldr = NmpcLeader(W65, VP)
        cmd = ldr.step(np.zeros(6), rest_window(W65), 0.0)
        assert max(abs(f) for f in cmd) < 1e-3

    def test_nonconverged_event(self):
        ldr = NmpcLeader(W65, VP, max_iter=0, nonconverged_limit=2)
        for k in range(3):
            ldr.step(np.array([3.0, 0, 0, 0, 0, 0]), rest_window(W65), 0.1 * k)
        assert len(ldr.events) == 1

    def test_commands_within_box(self):
        ldr = NmpcLeader(W65, VP)
        for k in range(5):
            cmd = ldr.step(np.array([-20.0, 5.0, 2.0, 0, 0, 0]), rest_window(W65), 0.1 * k)
            assert all(VP.f_min <= f <= VP.f_max for f in cmd)
