"""Linear error-state models for inertial-frame alignment and their checks.

Error state layout (15): attitude, velocity, position, gyro bias, accel bias.
The meaning of the first nine components depends on :class:`ModelKind`:

* ``RSO``: inertial-frame attitude error ``exp(phi) = C C~^T``; velocity and
  position errors ``v~ - v`` and ``r~ - r``.
* ``LSO``: body-frame attitude error ``exp(phi) = C~^T C``; velocity and
  position errors as for RSO.
* ``RSE``: ``log(T T~^-1)`` on SE_2(3).
* ``LSE``: ``log(T~^-1 T)`` on SE_2(3).

Here ``~`` marks the mechanized estimate and plain symbols the truth. Sensor
errors are ``gyro~ - gyro = gyro_bias + noise`` and likewise for the
accelerometer.
"""

from __future__ import annotations

import enum
from dataclasses import dataclass

import numpy as np

from .se23 import (
    GroupElement,
    se23_compose,
    se23_exp,
    se23_inverse,
    se23_log,
    skew,
    so3_exp,
    so3_log,
)
from .strapdown import NavStateI

ATT = slice(0, 3)
VEL = slice(3, 6)
POS = slice(6, 9)
GB = slice(9, 12)
AB = slice(12, 15)
NAV = slice(0, 9)
N_STATE = 15
N_NOISE = 6


class ModelKind(str, enum.Enum):
    RSO = "rso"
    LSO = "lso"
    RSE = "rse"
    LSE = "lse"

    @classmethod
    def parse(cls, value):
        if isinstance(value, cls):
            return value
        try:
            return cls(str(value).strip().lower())
        except ValueError:
            raise ValueError(f"unknown model kind {value!r}; expected one of rso, lso, rse, lse") from None


@dataclass(frozen=True)
class SystemMatrices:
    F: np.ndarray  # (..., 15, 15) continuous-time
    G: np.ndarray  # (..., 15, 6) noise input
    H: np.ndarray  # (..., 3, 15)


def _batch(state: NavStateI):
    return np.shape(state.C)[:-2]


def _blank(batch):
    return np.zeros(batch + (N_STATE, N_STATE)), np.zeros(batch + (N_STATE, N_NOISE)), np.zeros(batch + (3, N_STATE))


def build_rso(state: NavStateI, gyro, accel) -> SystemMatrices:
    """Inertial-frame attitude error with Euclidean velocity/position errors.

    ``F[vel, abias]`` is ``+C~``: the velocity error grows as ``C~ (accel~ - accel)``.
    """
    C = np.asarray(state.C, float)
    F, G, H = _blank(_batch(state))
    f_i = np.einsum("...ij,...j->...i", C, np.asarray(accel, float))
    F[..., ATT, GB] = -C
    F[..., VEL, ATT] = skew(f_i)
    F[..., VEL, AB] = C
    F[..., POS, VEL] = np.eye(3)
    G[..., ATT, 0:3] = -C
    G[..., VEL, 3:6] = -C
    H[..., :, VEL] = np.eye(3)
    return SystemMatrices(F, G, H)


def build_lso(state: NavStateI, gyro, accel) -> SystemMatrices:
    C = np.asarray(state.C, float)
    F, G, H = _blank(_batch(state))
    F[..., ATT, ATT] = -skew(gyro)
    F[..., ATT, GB] = -np.eye(3)
    F[..., VEL, ATT] = C @ skew(accel)
    F[..., VEL, AB] = C
    F[..., POS, VEL] = np.eye(3)
    G[..., ATT, 0:3] = -np.eye(3)
    G[..., VEL, 3:6] = C
    H[..., :, VEL] = np.eye(3)
    return SystemMatrices(F, G, H)


def build_rse(state: NavStateI, gyro, accel, g_i) -> SystemMatrices:
    C = np.asarray(state.C, float)
    F, G, H = _blank(_batch(state))
    vx = skew(state.v)
    rx = skew(state.r)
    F[..., ATT, GB] = -C
    F[..., VEL, ATT] = skew(g_i)
    F[..., VEL, GB] = -vx @ C
    F[..., VEL, AB] = -C
    F[..., POS, VEL] = np.eye(3)
    F[..., POS, GB] = -rx @ C
    G[..., ATT, 0:3] = -C
    G[..., VEL, 0:3] = -vx @ C
    G[..., VEL, 3:6] = -C
    G[..., POS, 0:3] = -rx @ C
    H[..., :, ATT] = vx
    H[..., :, VEL] = -np.eye(3)
    return SystemMatrices(F, G, H)


def build_lse(state: NavStateI, gyro, accel, transformed=False) -> SystemMatrices:
    """Left SE_2(3) error model.

    ``F`` and ``G`` depend on the IMU readings only. With ``transformed`` the
    measurement matrix is the constant ``[0 -I 0]``, to be paired with the
    innovation premultiplied by ``C~^T`` (see :func:`lse_transform_innovation`).
    """
    batch = _batch(state)
    F, G, H = _blank(batch)
    wx = skew(np.broadcast_to(gyro, batch + (3,)))
    F[..., ATT, ATT] = -wx
    F[..., ATT, GB] = -np.eye(3)
    F[..., VEL, ATT] = -skew(np.broadcast_to(accel, batch + (3,)))
    F[..., VEL, VEL] = -wx
    F[..., VEL, AB] = -np.eye(3)
    F[..., POS, VEL] = np.eye(3)
    F[..., POS, POS] = -wx
    G[..., ATT, 0:3] = -np.eye(3)
    G[..., VEL, 3:6] = -np.eye(3)
    H[..., :, VEL] = -np.eye(3) if transformed else -np.asarray(state.C, float)
    return SystemMatrices(F, G, H)


def build(kind, state: NavStateI, gyro, accel, g_i, transformed=False) -> SystemMatrices:
    kind = ModelKind.parse(kind)
    if kind is ModelKind.RSO:
        return build_rso(state, gyro, accel)
    if kind is ModelKind.LSO:
        return build_lso(state, gyro, accel)
    if kind is ModelKind.RSE:
        return build_rse(state, gyro, accel, g_i)
    return build_lse(state, gyro, accel, transformed)


def lse_transform_innovation(state: NavStateI, y):
    """Premultiply a velocity innovation by ``C~^T`` (and its covariance alike)."""
    return np.einsum("...ji,...j->...i", state.C, y)


# --- nonlinear error definitions -------------------------------------------------


def nonlinear_error(kind, est: NavStateI, truth: NavStateI):
    """Exact 9-vector navigation error of ``est`` w.r.t. ``truth`` for ``kind``."""
    kind = ModelKind.parse(kind)
    Ct = np.swapaxes(est.C, -1, -2)
    if kind is ModelKind.RSO:
        phi = so3_log(truth.C @ Ct)
        return np.concatenate([phi, est.v - truth.v, est.r - truth.r], axis=-1)
    if kind is ModelKind.LSO:
        phi = so3_log(Ct @ truth.C)
        return np.concatenate([phi, est.v - truth.v, est.r - truth.r], axis=-1)
    T, Tt = truth.as_group(), est.as_group()
    if kind is ModelKind.RSE:
        return se23_log(se23_compose(T, se23_inverse(Tt)))
    return se23_log(se23_compose(se23_inverse(Tt), T))


def inject_error(kind, est: NavStateI, dx9) -> NavStateI:
    """Truth state whose :func:`nonlinear_error` relative to ``est`` is ``dx9``."""
    kind = ModelKind.parse(kind)
    dx9 = np.asarray(dx9, float)
    if kind in (ModelKind.RSO, ModelKind.LSO):
        dC = so3_exp(dx9[..., ATT])
        C = dC @ est.C if kind is ModelKind.RSO else est.C @ dC
        return NavStateI(C, est.v - dx9[..., VEL], est.r - dx9[..., POS], est.t)
    dT = se23_exp(dx9[..., NAV])
    Tt = est.as_group()
    T = se23_compose(dT, Tt) if kind is ModelKind.RSE else se23_compose(Tt, dT)
    return NavStateI.from_group(T, est.t)


def propagate_exact(state: NavStateI, gyro, accel, g_i, duration, substeps=20):
    """Integrate the inertial-frame dynamics with constant inputs (RK4).

    ``duration`` may be negative. Used as a reference trajectory generator.
    """
    gyro, accel, g_i = (np.asarray(x, float) for x in (gyro, accel, g_i))
    h = duration / substeps
    wx = skew(gyro)

    def deriv(C, v, r):
        return C @ wx, np.einsum("...ij,...j->...i", C, accel) + g_i, v

    C, v, r = np.asarray(state.C, float), np.asarray(state.v, float), np.asarray(state.r, float)
    for _ in range(substeps):
        k1 = deriv(C, v, r)
        k2 = deriv(*(x + 0.5 * h * k for x, k in zip((C, v, r), k1)))
        k3 = deriv(*(x + 0.5 * h * k for x, k in zip((C, v, r), k2)))
        k4 = deriv(*(x + h * k for x, k in zip((C, v, r), k3)))
        C, v, r = (
            x + h / 6.0 * (a + 2 * b + 2 * c + d)
            for x, a, b, c, d in zip((C, v, r), k1, k2, k3, k4)
        )
    return NavStateI(C, v, r, state.t + duration)


def random_rotation(rng, max_angle=np.pi):
    axis = rng.normal(size=3)
    axis /= np.linalg.norm(axis)
    return so3_exp(axis * rng.uniform(0.0, max_angle))


def random_nav_scenario(rng):
    """A realistic estimate state and IMU/gravity inputs near the earth's surface."""
    C = random_rotation(rng)
    r_dir = rng.normal(size=3)
    r = 6.37e6 * r_dir / np.linalg.norm(r_dir)
    v = rng.normal(scale=250.0, size=3)
    g_i = -9.8 * r / np.linalg.norm(r)
    accel = C.T @ (-g_i) + rng.normal(scale=0.5, size=3)
    gyro = rng.normal(scale=0.02, size=3)
    return NavStateI(C, v, r, 0.0), gyro, accel, g_i


BLOCKS = (("att", ATT), ("vel", VEL), ("pos", POS), ("gb", GB), ("ab", AB))


def _fd_rate(kind, est, gyro, accel, g_i, dx0, dt):
    truth = inject_error(kind, est, dx0[NAV])
    gyro_true = gyro - dx0[GB]
    accel_true = accel - dx0[AB]
    est_p = propagate_exact(est, gyro, accel, g_i, dt)
    est_m = propagate_exact(est, gyro, accel, g_i, -dt)
    tru_p = propagate_exact(truth, gyro_true, accel_true, g_i, dt)
    tru_m = propagate_exact(truth, gyro_true, accel_true, g_i, -dt)
    return (nonlinear_error(kind, est_p, tru_p) - nonlinear_error(kind, est_m, tru_m)) / (2 * dt)


def _random_dx(rng, perturbation):
    scale = np.repeat(np.broadcast_to(np.asarray(perturbation, float), (5,)), 3)
    return scale * rng.choice([-1.0, 1.0], size=N_STATE) * rng.uniform(0.5, 1.0, size=N_STATE)


def finite_difference_check(kind, perturbation=1e-4, dt=0.01, seed=0, builder=None, scenario=None):
    """Compare the linear model with two propagated trajectories.

    A truth trajectory is built from the estimate by injecting an error of size
    ``perturbation`` in every component (biases enter through the truth IMU).
    Both are propagated over ``+-dt`` and the exact nonlinear error is
    evaluated. Returned relative errors:

    ``"step"``
        forward step, ``e(dt)`` against ``(I + F dt) dx0``.
    ``"att"``, ``"vel"``, ``"pos"``
        central difference ``(e(dt) - e(-dt)) / 2dt`` against ``F dx0``,
        scored for each navigation block on its own so that the large
        position rate does not hide an attitude or velocity mistake.
    """
    kind = ModelKind.parse(kind)
    rng = np.random.default_rng(seed)
    est, gyro, accel, g_i = scenario if scenario is not None else random_nav_scenario(rng)
    dx0 = _random_dx(rng, perturbation)
    F = np.asarray((builder or build)(kind, est, gyro, accel, g_i).F)

    truth = inject_error(kind, est, dx0[NAV])
    gyro_true, accel_true = gyro - dx0[GB], accel - dx0[AB]
    e_p = nonlinear_error(
        kind,
        propagate_exact(est, gyro, accel, g_i, dt),
        propagate_exact(truth, gyro_true, accel_true, g_i, dt),
    )
    e_m = nonlinear_error(
        kind,
        propagate_exact(est, gyro, accel, g_i, -dt),
        propagate_exact(truth, gyro_true, accel_true, g_i, -dt),
    )
    stepped = (dx0 + dt * (F @ dx0))[NAV]
    out = {"step": float(np.linalg.norm(e_p - stepped) / np.linalg.norm(stepped))}
    rate = (e_p - e_m) / (2 * dt)
    predicted = (F @ dx0)[NAV]
    for name, sl in BLOCKS[:3]:
        out[name] = float(np.linalg.norm(rate[sl] - predicted[sl]) / np.linalg.norm(predicted[sl]))
    return out


COUPLING_PERTURBATION = (1e-4, 1e-4, 1e-2, 1e-4, 1e-4)
"""Per-block error sizes for :func:`coupling_check`. Position is larger because
a 1e-4 m offset on a 6.4e6 m radius keeps too few digits for a rate estimate."""


def coupling_check(kind, perturbation=COUPLING_PERTURBATION, dt=0.02, seed=0, builder=None, scenario=None):
    """Finite-difference test of every ``F`` block column on its own.

    Only one input block (``att``, ``vel``, ``pos``, ``gb``, ``ab``) is
    perturbed at a time and each navigation output block is scored. Keys read
    ``"vel<-ab"``. The residual is divided by the predicted response, or by the
    all-block response of that output when the model predicts no coupling, so
    a missing term is caught as well as a wrong one.
    """
    kind = ModelKind.parse(kind)
    rng = np.random.default_rng(seed)
    est, gyro, accel, g_i = scenario if scenario is not None else random_nav_scenario(rng)
    dx0 = _random_dx(rng, perturbation)
    F = np.asarray((builder or build)(kind, est, gyro, accel, g_i).F)
    full = (F @ dx0)[NAV]

    out = {}
    for in_name, in_sl in BLOCKS:
        dx = np.zeros(N_STATE)
        dx[in_sl] = dx0[in_sl]
        rate = _fd_rate(kind, est, gyro, accel, g_i, dx, dt)
        pred = (F @ dx)[NAV]
        for out_name, sl in BLOCKS[:3]:
            pred_norm = np.linalg.norm(pred[sl])
            denom = pred_norm if pred_norm > 0 else np.linalg.norm(full[sl])
            out[f"{out_name}<-{in_name}"] = float(np.linalg.norm(rate[sl] - pred[sl]) / denom)
    return out


# --- group-affine and log-linear verification ------------------------------------


def gamma_u(T: GroupElement, gyro, accel, g_i):
    """Inertial-frame dynamics as a 5x5 matrix function of the group state."""
    rot = T.C @ skew(gyro)
    acc = np.einsum("...ij,...j->...i", T.C, np.asarray(accel, float)) + g_i
    batch = np.broadcast_shapes(rot.shape[:-2], acc.shape[:-1], T.v.shape[:-1])
    out = np.zeros(batch + (5, 5))
    out[..., :3, :3] = rot
    out[..., :3, 3] = acc
    out[..., :3, 4] = T.v
    return out


def group_affine_residual(T1: GroupElement, T2: GroupElement, gyro, accel, g_i, dynamics=gamma_u):
    """Relative Frobenius residual of the group-affine identity.

    ``dyn(T1 T2) - dyn(T1) T2 - T1 dyn(T2) + T1 dyn(I) T2``, divided by the
    sum of the norms of the four terms.
    """
    M1, M2 = T1.as_matrix(), T2.as_matrix()
    I5 = GroupElement.identity()
    terms = (
        dynamics(se23_compose(T1, T2), gyro, accel, g_i),
        dynamics(T1, gyro, accel, g_i) @ M2,
        M1 @ dynamics(T2, gyro, accel, g_i),
        M1 @ dynamics(I5, gyro, accel, g_i) @ M2,
    )
    res = terms[0] - terms[1] - terms[2] + terms[3]
    scale = sum(np.linalg.norm(x, axis=(-2, -1)) for x in terms)
    num = np.linalg.norm(res, axis=(-2, -1))
    return np.where(scale > 0, num / np.where(scale > 0, scale, 1.0), 0.0)


def _rk4_linear_step(L, h):
    """RK4 step operator for the linear autonomous ODE ``x' = L x``."""
    A = h * L
    A2 = A @ A
    A3 = A2 @ A
    return np.eye(L.shape[0]) + A + A2 / 2.0 + A3 / 6.0 + A3 @ A / 24.0


def log_linear_check(omega_ib, phi0, duration=600.0, dt=0.01):
    """Max deviation (rad) between the integrated attitude error and its closed form.

    The left attitude error obeys ``dE/dt = E (w x) - (w x) E``. It is
    integrated with RK4 from ``E0 = exp(phi0)`` and compared at every step with
    ``phi_t = R_t^T phi0``, where ``R_t`` is the body attitude relative to
    ``t = 0``. ``omega_ib`` is a constant body rate or a callable of time.
    """
    phi0 = np.asarray(phi0, float)
    n = int(round(duration / dt))
    ts = dt * np.arange(n + 1)
    E = np.empty((n + 1, 3, 3))
    E[0] = so3_exp(phi0)

    if callable(omega_ib):
        R = np.empty((n + 1, 3, 3))
        R[0] = np.eye(3)

        def f(Ek, Rk, t):
            wx = skew(omega_ib(t))
            return Ek @ wx - wx @ Ek, Rk @ wx

        for k in range(n):
            t = ts[k]
            a1, b1 = f(E[k], R[k], t)
            a2, b2 = f(E[k] + 0.5 * dt * a1, R[k] + 0.5 * dt * b1, t + 0.5 * dt)
            a3, b3 = f(E[k] + 0.5 * dt * a2, R[k] + 0.5 * dt * b2, t + 0.5 * dt)
            a4, b4 = f(E[k] + dt * a3, R[k] + dt * b3, t + dt)
            E[k + 1] = E[k] + dt / 6.0 * (a1 + 2 * a2 + 2 * a3 + a4)
            R[k + 1] = R[k] + dt / 6.0 * (b1 + 2 * b2 + 2 * b3 + b4)
    else:
        w = np.asarray(omega_ib, float)
        wx = skew(w)
        # vec(E wx - wx E) for row-major vec
        L = np.kron(np.eye(3), wx.T) - np.kron(wx, np.eye(3))
        step = _rk4_linear_step(L, dt)
        e = E[0].reshape(9)
        for k in range(n):
            e = step @ e
            E[k + 1] = e.reshape(3, 3)
        R = so3_exp(ts[:, None] * w)

    # RK4 leaves E slightly off SO(3); take the nearest rotation before the log
    U, _, Vt = np.linalg.svd(E)
    E = U @ Vt
    phi_t = np.einsum("kji,j->ki", R, phi0)
    return float(np.max(np.linalg.norm(so3_log(E) - phi_t, axis=-1)))
