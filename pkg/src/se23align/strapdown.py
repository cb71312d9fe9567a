"""Strapdown mechanization in the inertial frame frozen at alignment start."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import earth
from .earth import FrameChain, GeoPosition
from .se23 import GroupElement, so3_exp

REORTHO_EVERY = 100


@dataclass(frozen=True)
class ImuSample:
    t: float
    gyro: np.ndarray
    accel: np.ndarray


@dataclass(frozen=True)
class ImuData:
    """A stream of instantaneous IMU samples, rad/s and m/s^2, body axes.

    ``gyro`` and ``accel`` are ``(K, 3)``, or ``(N, K, 3)`` for ``N`` trials
    sharing one time grid.
    """

    t: np.ndarray
    gyro: np.ndarray
    accel: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        gyro = np.asarray(self.gyro, dtype=float)
        accel = np.asarray(self.accel, dtype=float)
        if t.ndim != 1 or gyro.shape != accel.shape or gyro.shape[-2:] != (t.size, 3):
            raise ValueError("ImuData needs t (K,), gyro/accel (..., K, 3)")
        if not (np.all(np.isfinite(t)) and np.all(np.isfinite(gyro)) and np.all(np.isfinite(accel))):
            raise ValueError("ImuData contains non-finite values")
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            raise ValueError(f"IMU timestamps not strictly increasing at sample {bad[0] + 1}")
        object.__setattr__(self, "t", t)
        object.__setattr__(self, "gyro", gyro)
        object.__setattr__(self, "accel", accel)

    def __len__(self):
        return self.t.size

    def sample(self, k):
        return ImuSample(self.t[k], self.gyro[..., k, :], self.accel[..., k, :])


@dataclass(frozen=True)
class NavStateI:
    """Attitude C_b^i, velocity v^i and position r^i in the frozen inertial frame."""

    C: np.ndarray
    v: np.ndarray
    r: np.ndarray
    t: float = 0.0

    def as_group(self):
        return GroupElement(self.C, self.v, self.r)

    @classmethod
    def from_group(cls, T: GroupElement, t=0.0):
        return cls(T.C, T.v, T.r, t)


def orthonormalize(C):
    """One symmetric correction step ``(3I - C C^T) C / 2``."""
    return 0.5 * (3.0 * np.eye(3) - C @ np.swapaxes(C, -1, -2)) @ C


def init_state(p0: GeoPosition, v0, c_b_n, chain: FrameChain, t=None):
    """Initial inertial-frame state from GNSS position/velocity and an attitude guess."""
    t = chain.t0 if t is None else t
    cni = earth.c_n_i(t, p0, chain)
    c_b_n = np.asarray(c_b_n, dtype=float)
    C = cni @ c_b_n
    return NavStateI(
        C=C,
        v=earth.v_i_from_ground(v0, p0, t, chain),
        r=earth.r_i_from_geo(p0, t, chain),
        t=float(t),
    )


def _mechanize(C, v, r, gyro0, gyro1, accel0, accel1, g_i, dt):
    """Array kernel of :func:`mechanize_step`; broadcasts over batch dimensions."""
    w = 0.5 * (gyro0 + gyro1) * dt
    f = 0.5 * (accel0 + accel1)
    C_mid = C @ so3_exp(0.5 * w)
    C_new = C @ so3_exp(w)
    dv = (np.einsum("...ij,...j->...i", C_mid, f) + g_i) * dt
    r_new = r + (v + 0.5 * dv) * dt
    return C_new, v + dv, r_new


def mechanize_step(state: NavStateI, imu0: ImuSample, imu1: ImuSample, g_i):
    """Advance ``state`` from ``imu0.t`` to ``imu1.t``.

    Attitude uses the rotation vector of the mean rate over the interval,
    velocity uses the specific force rotated by the mid-interval attitude, and
    position is integrated with the trapezoidal rule. ``g_i`` is the gravity
    input in the inertial frame at the interval midpoint.
    """
    dt = float(imu1.t) - float(imu0.t)
    if not dt > 0:
        raise ValueError(f"non-monotonic IMU timestamps: {imu0.t} -> {imu1.t}")
    C, v, r = _mechanize(
        state.C, state.v, state.r,
        np.asarray(imu0.gyro, float), np.asarray(imu1.gyro, float),
        np.asarray(imu0.accel, float), np.asarray(imu1.accel, float),
        np.asarray(g_i, float), dt,
    )
    return NavStateI(C, v, r, float(imu1.t))


def compose_attitude(c_n_i, c_b_i):
    """C_b^n = (C_n^i)^T C_b^i."""
    return np.swapaxes(np.asarray(c_n_i), -1, -2) @ np.asarray(c_b_i)


def euler_to_dcm(pitch, roll, yaw):
    """C_b^n = Rz(yaw) Rx(pitch) Ry(roll) for ENU navigation axes (radians)."""
    sp, cp = np.sin(pitch), np.cos(pitch)
    sr, cr = np.sin(roll), np.cos(roll)
    sy, cy = np.sin(yaw), np.cos(yaw)
    return np.array(
        [
            [cy * cr - sy * sp * sr, -sy * cp, cy * sr + sy * sp * cr],
            [sy * cr + cy * sp * sr, cy * cp, sy * sr - cy * sp * cr],
            [-cp * sr, sp, cp * cr],
        ]
    )


def dcm_to_euler(C, lock_tol=1e-9):
    """Inverse of :func:`euler_to_dcm`: ``(pitch, roll, yaw)`` in radians.

    Yaw lies in ``(-pi, pi]``. At gimbal lock roll is set to zero.
    """
    C = np.asarray(C, dtype=float)
    pitch = np.arcsin(np.clip(C[..., 2, 1], -1.0, 1.0))
    locked = np.sqrt(C[..., 2, 0] ** 2 + C[..., 2, 2] ** 2) < lock_tol
    roll = np.where(locked, 0.0, np.arctan2(-C[..., 2, 0], C[..., 2, 2]))
    yaw = np.where(
        locked,
        np.arctan2(C[..., 1, 0], C[..., 0, 0]),
        np.arctan2(-C[..., 0, 1], C[..., 1, 1]),
    )
    yaw = np.where(yaw <= -np.pi, yaw + 2 * np.pi, yaw)
    return pitch, roll, yaw
