"""Receding-horizon leader controller.

The optimal control problem

    min  sum_k dt (e_kᵀ Q e_k + u_kᵀ R u_k) + e_Kᵀ Q_N e_K
    s.t. x_{k+1} = RK4(x_k, u_k),  x_0 = measured state,  f_min <= u_k <= f_max

is transcribed by direct multiple shooting and solved with a Gauss-Newton
SQP.  Each iteration linearises the shooting intervals, condenses the state
increments out of the subproblem, and solves the remaining bound-constrained
least-squares QP in the input increments with :func:`solve_box_qp`.

State layout: q = (x, y, psi, u, v, omega); input: four thruster forces.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable, NamedTuple

import numpy as np

from ..structure import StructureConfig, StructureParams
from ..vessel import (ThrusterCommand, VesselParams, allocate_wrench, allocation_matrix,
                      kinematics, vessel_acceleration, wrap_angle)
from .boxqp import solve_box_qp

log = logging.getLogger(__name__)

NX, NU = 6, 4


@dataclass(frozen=True)
class NmpcWeights:
    Qm: tuple = (20.0, 20.0, 20.0, 40.0, 40.0, 40.0)
    Rm: tuple = (1.0, 1.0, 1.0, 1.0)
    QNm: tuple = (20.0, 20.0, 20.0, 40.0, 40.0, 40.0)
    horizon_T: float = 4.0
    control_dt: float = 0.1
    n_fleet: int = 1

    def __post_init__(self):
        if len(self.Qm) != NX or len(self.QNm) != NX or len(self.Rm) != NU:
            raise ValueError("weight diagonals must have lengths 6, 4, 6")
        if min(self.Qm) < 0 or min(self.Rm) < 0 or min(self.QNm) < 0:
            raise ValueError("weights must be non-negative")
        if self.horizon_T <= 0 or self.control_dt <= 0:
            raise ValueError("horizon_T and control_dt must be positive")
        if self.n_fleet < 1:
            raise ValueError("n_fleet must be >= 1")

    @property
    def Q(self) -> np.ndarray:
        return self.n_fleet * np.asarray(self.Qm, dtype=float)

    @property
    def R(self) -> np.ndarray:
        return np.asarray(self.Rm, dtype=float)

    @property
    def QN(self) -> np.ndarray:
        return self.n_fleet * np.asarray(self.QNm, dtype=float)

    @property
    def knots(self) -> int:
        return int(round(self.horizon_T / self.control_dt))


@dataclass(frozen=True)
class PredictionModel:
    """Diagonal-mass planar hull used for prediction inside the horizon."""

    mass: np.ndarray
    drag: np.ndarray
    m11: float
    m22: float
    coriolis_scale: float
    input_matrix: np.ndarray  # 3 x 4, thrusters -> body wrench
    f_min: float
    f_max: float

    @classmethod
    def single_vessel(cls, vp: VesselParams) -> "PredictionModel":
        return cls(vp.mass, vp.drag, vp.m11, vp.m22, 1.0, allocation_matrix(vp), vp.f_min, vp.f_max)

    @classmethod
    def structure(cls, vp: VesselParams, cfg: StructureConfig) -> "PredictionModel":
        """Ablation model: whole structure, all modules assumed to copy the leader."""
        sp = StructureParams.from_config(vp, cfg)
        return cls(sp.mass, sp.drag, vp.m11, vp.m22, float(cfg.n),
                   cfg.n * allocation_matrix(vp), vp.f_min, vp.f_max)

    def rate(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        """Batched dynamics: X (K, 6), U (K, 4) -> (K, 6)."""
        psi, u, v, w = X[:, 2], X[:, 3], X[:, 4], X[:, 5]
        c, s = np.cos(psi), np.sin(psi)
        cs = self.coriolis_scale
        cor = cs * np.stack([-self.m22 * v * w, self.m11 * u * w, (self.m22 - self.m11) * u * v], axis=1)
        acc = (U @ self.input_matrix.T - cor - self.drag * X[:, 3:]) / self.mass
        return np.column_stack([u * c - v * s, u * s + v * c, w, acc])

    def jacobians(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        K = X.shape[0]
        psi, u, v, w = X[:, 2], X[:, 3], X[:, 4], X[:, 5]
        c, s = np.cos(psi), np.sin(psi)
        Fx = np.zeros((K, NX, NX))
        Fx[:, 0, 2] = -u * s - v * c
        Fx[:, 0, 3] = c
        Fx[:, 0, 4] = -s
        Fx[:, 1, 2] = u * c - v * s
        Fx[:, 1, 3] = s
        Fx[:, 1, 4] = c
        Fx[:, 2, 5] = 1.0
        cs, m11, m22 = self.coriolis_scale, self.m11, self.m22
        Jc = np.zeros((K, 3, 3))
        Jc[:, 0, 1] = -m22 * w
        Jc[:, 0, 2] = -m22 * v
        Jc[:, 1, 0] = m11 * w
        Jc[:, 1, 2] = m11 * u
        Jc[:, 2, 0] = (m22 - m11) * v
        Jc[:, 2, 1] = (m22 - m11) * u
        Jc *= cs
        Jc[:, [0, 1, 2], [0, 1, 2]] += self.drag
        Fx[:, 3:, 3:] = -Jc / self.mass[None, :, None]
        Fu = np.zeros((K, NX, NU))
        Fu[:, 3:, :] = self.input_matrix / self.mass[:, None]
        return Fx, Fu

    def rk4(self, X: np.ndarray, U: np.ndarray, h: float) -> np.ndarray:
        k1 = self.rate(X, U)
        k2 = self.rate(X + 0.5 * h * k1, U)
        k3 = self.rate(X + 0.5 * h * k2, U)
        k4 = self.rate(X + h * k3, U)
        return X + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)

    def rk4_sensitivities(self, X: np.ndarray, U: np.ndarray, h: float):
        """RK4 step and its exact Jacobians with respect to state and input."""
        I = np.eye(NX)
        k1 = self.rate(X, U)
        F1, G1 = self.jacobians(X)
        X2 = X + 0.5 * h * k1
        k2 = self.rate(X2, U)
        F2, G2 = self.jacobians(X2)
        X3 = X + 0.5 * h * k2
        k3 = self.rate(X3, U)
        F3, G3 = self.jacobians(X3)
        X4 = X + h * k3
        k4 = self.rate(X4, U)
        F4, G4 = self.jacobians(X4)

        P1, Q1 = F1, G1
        P2 = F2 @ (I + 0.5 * h * P1)
        Q2 = F2 @ (0.5 * h * Q1) + G2
        P3 = F3 @ (I + 0.5 * h * P2)
        Q3 = F3 @ (0.5 * h * Q2) + G3
        P4 = F4 @ (I + h * P3)
        Q4 = F4 @ (h * Q3) + G4
        phi = X + h / 6.0 * (k1 + 2 * k2 + 2 * k3 + k4)
        A = I + h / 6.0 * (P1 + 2 * P2 + 2 * P3 + P4)
        B = h / 6.0 * (Q1 + 2 * Q2 + 2 * Q3 + Q4)
        return phi, A, B

    def rollout(self, x0: np.ndarray, U: np.ndarray, h: float) -> np.ndarray:
        X = np.empty((U.shape[0] + 1, NX))
        X[0] = x0
        for k in range(U.shape[0]):
            X[k + 1] = self.rk4(X[k:k + 1], U[k:k + 1], h)[0]
        return X


def leader_dynamics(q1, u1, vp: VesselParams) -> np.ndarray:
    """State rate of a single vessel: kinematics stacked on hydrodynamics."""
    q1 = np.asarray(q1, dtype=float)
    wrench = allocate_wrench(u1, vp)
    return np.concatenate([kinematics(q1[:3], q1[3:]), vessel_acceleration(q1[3:], wrench, vp)])


def tracking_error(q, q_ref) -> np.ndarray:
    e = np.asarray(q, dtype=float) - np.asarray(q_ref, dtype=float)
    e[..., 2] = wrap_angle(e[..., 2])
    return e


def stage_cost(q1, u1, q_r, w: NmpcWeights) -> float:
    e = tracking_error(q1, q_r)
    u1 = np.asarray(u1, dtype=float)
    return float(e @ (w.Q * e) + u1 @ (w.R * u1))


def terminal_cost(q1, q_r, w: NmpcWeights) -> float:
    e = tracking_error(q1, q_r)
    return float(e @ (w.QN * e))


class HorizonSolution(NamedTuple):
    inputs: np.ndarray      # (K, 4)
    states: np.ndarray      # (K + 1, 6), rollout of ``inputs`` from x0
    objective: float
    iterations: int
    converged: bool
    kkt: float
    max_defect: float       # shooting defect of the last SQP iterate

    def first_command(self) -> ThrusterCommand:
        return ThrusterCommand(*(float(f) for f in self.inputs[0]))

    def shifted(self, model: PredictionModel, dt: float) -> "HorizonSolution":
        U = np.vstack([self.inputs[1:], self.inputs[-1:]])
        last = model.rk4(self.states[-1:], self.inputs[-1:], dt)
        X = np.vstack([self.states[1:], last])
        return self._replace(inputs=U, states=X)


@dataclass
class HorizonProblem:
    weights: NmpcWeights
    model: PredictionModel

    @property
    def dt(self) -> float:
        return self.weights.control_dt

    @property
    def K(self) -> int:
        return self.weights.knots

    def state_weights(self) -> np.ndarray:
        """Per-knot diagonal weights for x_1 .. x_K."""
        W = np.tile(self.dt * self.weights.Q, (self.K, 1))
        W[-1] = self.weights.QN
        return W

    def objective(self, X: np.ndarray, U: np.ndarray, ref: np.ndarray) -> float:
        """Discretised cost on a (possibly infeasible) shooting trajectory."""
        w, dt = self.weights, self.dt
        E = tracking_error(X, ref)
        J = dt * np.sum(E[:-1] ** 2 * w.Q) + dt * np.sum(U ** 2 * w.R)
        return float(J + np.sum(E[-1] ** 2 * w.QN))

    def objective_gradient(self, X: np.ndarray, U: np.ndarray, ref: np.ndarray):
        """Gradient of :meth:`objective` with respect to (X, U)."""
        w, dt = self.weights, self.dt
        E = tracking_error(X, ref)
        gX = 2.0 * dt * E * w.Q
        gX[-1] = 2.0 * E[-1] * w.QN
        gU = 2.0 * dt * U * w.R
        return gX, gU

    def defects(self, X: np.ndarray, U: np.ndarray) -> np.ndarray:
        return self.model.rk4(X[:-1], U, self.dt) - X[1:]

    def rollout_objective(self, x0, U, ref) -> tuple[float, np.ndarray]:
        X = self.model.rollout(x0, U, self.dt)
        return self.objective(X, U, ref), X

    def condense(self, X: np.ndarray, U: np.ndarray):
        """Linearised increments dx_{1..K} = G du + h around (X, U)."""
        K = self.K
        phi, A, B = self.model.rk4_sensitivities(X[:-1], U, self.dt)
        c = phi - X[1:]
        G = np.zeros((K, NX, K * NU))
        h = np.zeros((K, NX))
        prev_G = np.zeros((NX, K * NU))
        prev_h = np.zeros(NX)
        for k in range(K):
            cur = A[k] @ prev_G
            cur[:, NU * k:NU * (k + 1)] += B[k]
            prev_h = A[k] @ prev_h + c[k]
            G[k], h[k] = cur, prev_h
            prev_G = cur
        return G, h, c

    def reduced_gradient(self, X: np.ndarray, U: np.ndarray, ref: np.ndarray,
                         G: np.ndarray | None = None) -> np.ndarray:
        """d(objective)/dU along the linearised dynamics (exact when defects vanish)."""
        if G is None:
            G, _, _ = self.condense(X, U)
        gX, gU = self.objective_gradient(X, U, ref)
        return np.einsum("ki,kij->j", gX[1:], G) + gU.ravel()


def _align_heading(X: np.ndarray, psi0: float) -> np.ndarray:
    X = X.copy()
    X[:, 2] += 2 * math.pi * np.round((psi0 - X[0, 2]) / (2 * math.pi))
    return X


def solve_horizon(q1_now, reference: np.ndarray, weights: NmpcWeights, vp: VesselParams,
                  warm_start: HorizonSolution | None = None, *, model: PredictionModel | None = None,
                  max_iter: int = 10, kkt_tol: float = 1e-4, defect_tol: float = 1e-6) -> HorizonSolution:
    """Solve the tracking OCP from the current leader state.

    ``reference`` holds the reference state at the K + 1 knots of the
    horizon.  Returns the best iterate by rollout cost, the warm start
    included, so the result never does worse than the warm start.
    """
    model = model or PredictionModel.single_vessel(vp)
    prob = HorizonProblem(weights, model)
    K, dt = prob.K, prob.dt
    x0 = np.asarray(q1_now, dtype=float)
    ref = np.asarray(reference, dtype=float)
    if ref.shape != (K + 1, NX):
        raise ValueError(f"reference window must have shape {(K + 1, NX)}, got {ref.shape}")
    lb = np.full(K * NU, model.f_min)
    ub = np.full(K * NU, model.f_max)

    if warm_start is None:
        U = np.zeros((K, NU))
        X = model.rollout(x0, U, dt)
    else:
        U = np.clip(np.array(warm_start.inputs, dtype=float), model.f_min, model.f_max)
        X = _align_heading(np.array(warm_start.states, dtype=float), x0[2])
    X[0] = x0

    W = prob.state_weights()
    sqrtW = np.sqrt(W)
    rdiag = np.tile(dt * weights.R, K) + 1e-12
    best_J, best_X = prob.rollout_objective(x0, U, ref)
    best_U = U
    kkt = math.inf
    defect = float(np.max(np.abs(prob.defects(X, U))))
    it = 0
    for it in range(max_iter + 1):
        G, h, c = prob.condense(X, U)
        defect = float(np.max(np.abs(c)))
        E = tracking_error(X[1:], ref[1:])
        grad = 2.0 * (np.einsum("ki,kij->j", W * E, G) + rdiag * U.ravel())
        pg = U.ravel() - np.clip(U.ravel() - grad, lb, ub)
        kkt = max(defect, float(np.max(np.abs(pg))))
        if kkt < kkt_tol or it == max_iter:
            break
        Gw = (sqrtW[:, :, None] * G).reshape(K * NX, K * NU)
        rx = (sqrtW * (E + h)).ravel()
        H = Gw.T @ Gw
        H[np.diag_indices_from(H)] += rdiag
        g = Gw.T @ rx + rdiag * U.ravel()
        du = solve_box_qp(H, g, lb - U.ravel(), ub - U.ravel()).z
        dX = (G @ du) + h
        U = np.clip(U + du.reshape(K, NU), model.f_min, model.f_max)
        X = X.copy()
        X[1:] += dX
        J, Xr = prob.rollout_objective(x0, U, ref)
        if J < best_J:
            best_J, best_X, best_U = J, Xr, U
    converged = kkt < kkt_tol and defect < defect_tol
    return HorizonSolution(best_U, best_X, best_J, it, converged, kkt, defect)


@dataclass
class NmpcLeader:
    """Receding-horizon loop: solve, apply first input, shift, warm start."""

    weights: NmpcWeights
    vp: VesselParams
    model: PredictionModel | None = None
    max_iter: int = 10
    kkt_tol: float = 1e-4
    nonconverged_limit: int = 20
    warm: HorizonSolution | None = field(default=None, init=False)
    last: HorizonSolution | None = field(default=None, init=False)
    nonconverged_streak: int = field(default=0, init=False)
    events: list = field(default_factory=list, init=False)

    def __post_init__(self):
        if self.model is None:
            self.model = PredictionModel.single_vessel(self.vp)

    def step(self, q1, reference: np.ndarray, t: float) -> ThrusterCommand:
        sol = solve_horizon(q1, reference, self.weights, self.vp, self.warm, model=self.model,
                            max_iter=self.max_iter, kkt_tol=self.kkt_tol)
        self.last = sol
        self.warm = sol.shifted(self.model, self.weights.control_dt)
        if sol.converged:
            self.nonconverged_streak = 0
        else:
            self.nonconverged_streak += 1
            if self.nonconverged_streak == self.nonconverged_limit:
                msg = f"NMPC not converged for {self.nonconverged_streak} consecutive steps at t={t:.2f}"
                log.warning(msg)
                self.events.append((t, msg))
        u = np.clip(sol.inputs[0], self.vp.f_min, self.vp.f_max)
        return ThrusterCommand(*(float(f) for f in u))


ReferenceFn = Callable[[float], np.ndarray]
