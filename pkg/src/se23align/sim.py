"""Static IMU simulation, Monte Carlo harness and alignment error metrics."""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from . import earth
from .earth import WGS84, GeoPosition
from .errmodel import ModelKind
from .kf import AidingData, FilterConfig, align_run
from .strapdown import ImuData, dcm_to_euler, euler_to_dcm

G0 = 9.80665
DEG = np.pi / 180.0

UNITS = {
    "rad/s": 1.0,
    "deg/s": DEG,
    "deg/h": DEG / 3600.0,
    "deg/sqrt(h)": DEG / 60.0,  # angle random walk -> rad/sqrt(s)
    "rad/sqrt(s)": 1.0,
    "m/s^2": 1.0,
    "ug": 1e-6 * G0,
    "mg": 1e-3 * G0,
    "ug/sqrt(Hz)": 1e-6 * G0,  # -> m/s^2/sqrt(Hz) = m/s/sqrt(s)
    "m/s/sqrt(s)": 1.0,
}
"""Multipliers from the named unit to SI (rad, m, s)."""


def to_si(value, unit):
    try:
        return np.asarray(value, dtype=float) * UNITS[unit]
    except KeyError:
        raise ValueError(f"unknown unit {unit!r}") from None


@dataclass(frozen=True)
class MisalignmentSpec:
    """Initial attitude error in degrees, ``(pitch, roll, yaw)``.

    ``mode="fixed"`` always returns ``values``; ``mode="uniform"`` draws each
    channel from ``[-bounds, bounds]``.
    """

    mode: str = "uniform"
    values: tuple = (0.0, 0.0, 0.0)
    bounds: tuple = (90.0, 90.0, 180.0)

    def __post_init__(self):
        if self.mode not in ("fixed", "uniform"):
            raise ValueError(f"misalignment mode must be 'fixed' or 'uniform', got {self.mode!r}")
        if len(self.values) != 3 or len(self.bounds) != 3:
            raise ValueError("misalignment values and bounds need three entries")
        if not all(np.isfinite(self.values)) or not all(b >= 0 and np.isfinite(b) for b in self.bounds):
            raise ValueError("misalignment values must be finite and bounds non-negative")


@dataclass(frozen=True)
class SimConfig:
    site: GeoPosition = field(default_factory=lambda: GeoPosition.from_degrees(34.0, 108.0, 0.0))
    attitude: tuple = (0.0, 0.0, 0.0)  # true (pitch, roll, yaw), rad
    duration: float = 600.0
    imu_rate: float = 100.0
    aiding_rate: float = 1.0
    gyro_bias: tuple = tuple(np.full(3, to_si(0.01, "deg/h")))
    gyro_noise: float = float(to_si(0.001, "deg/sqrt(h)"))
    accel_bias: tuple = tuple(np.full(3, to_si(100.0, "ug")))
    accel_noise: float = float(to_si(10.0, "ug/sqrt(Hz)"))
    gnss_vel_noise: float = 0.0
    misalignment: MisalignmentSpec = field(default_factory=MisalignmentSpec)
    seed: int = 0

    def __post_init__(self):
        if not (self.duration > 0 and self.imu_rate > 0 and self.aiding_rate > 0):
            raise ValueError("duration and rates must be positive")
        if self.gyro_noise < 0 or self.accel_noise < 0 or self.gnss_vel_noise < 0:
            raise ValueError("noise densities must be non-negative")
        if np.shape(self.gyro_bias) != (3,) or np.shape(self.accel_bias) != (3,):
            raise ValueError("biases need three components")

    @property
    def c_b_n(self):
        return euler_to_dcm(*self.attitude)

    def filter_config(self, **overrides) -> FilterConfig:
        """Filter tuning matched to this sensor grade."""
        base = dict(
            gyro_noise=self.gyro_noise,
            accel_noise=self.accel_noise,
            p0_gyro_bias=2.0 * float(np.max(np.abs(self.gyro_bias))) or 1e-9,
            p0_accel_bias=2.0 * float(np.max(np.abs(self.accel_bias))) or 1e-6,
            meas_rate=self.aiding_rate,
        )
        base.update(overrides)
        return FilterConfig(**base)


def static_truth(cfg: SimConfig):
    """Noise-free body rate and specific force of a vehicle at rest."""
    C = cfg.c_b_n
    w_n = earth.earth_rate_n(cfg.site.lat)
    g_n = earth.gravity_n(cfg.site)
    return C.T @ w_n, -C.T @ g_n


def simulate_static_imu(cfg: SimConfig, rng=None):
    """IMU and aiding streams for one static run.

    Measurements are truth plus constant bias plus white noise with standard
    deviation ``density * sqrt(rate)``. Returns ``(ImuData, AidingData)``.
    """
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    n = int(round(cfg.duration * cfg.imu_rate))
    t = np.arange(n + 1) / cfg.imu_rate
    w_b, f_b = static_truth(cfg)
    sq = np.sqrt(cfg.imu_rate)
    gyro = w_b + np.asarray(cfg.gyro_bias) + cfg.gyro_noise * sq * rng.standard_normal((t.size, 3))
    accel = f_b + np.asarray(cfg.accel_bias) + cfg.accel_noise * sq * rng.standard_normal((t.size, 3))
    return ImuData(t, gyro, accel), static_aiding(cfg, rng)


def static_aiding(cfg: SimConfig, rng=None):
    m = int(np.floor(cfg.duration * cfg.aiding_rate + 1e-9))
    ta = np.arange(m + 1) / cfg.aiding_rate
    vel = np.zeros((ta.size, 3))
    if cfg.gnss_vel_noise > 0:
        rng = np.random.default_rng(cfg.seed) if rng is None else rng
        vel = cfg.gnss_vel_noise * rng.standard_normal(vel.shape)
    ones = np.ones(ta.size)
    return AidingData(ta, cfg.site.lat * ones, cfg.site.lon * ones, cfg.site.h * ones, vel)


def sample_misalignment(rng, spec: MisalignmentSpec):
    """One ``(pitch, roll, yaw)`` misalignment draw in degrees."""
    if spec.mode == "fixed":
        return np.asarray(spec.values, dtype=float).copy()
    b = np.asarray(spec.bounds, dtype=float)
    return rng.uniform(-b, b)


def initial_guess(cfg: SimConfig, misalignment_deg):
    """Attitude guess whose Euler angles are ``truth - misalignment``."""
    guess = np.asarray(cfg.attitude) - np.radians(misalignment_deg)
    return euler_to_dcm(*np.moveaxis(guess, -1, 0)) if guess.ndim == 1 else np.stack(
        [euler_to_dcm(*g) for g in guess]
    )


def utmost_precision(accel_bias, gyro_bias, lat, gamma=None, earth_model=WGS84):
    """Bias-limited static alignment accuracy ``(phi_x, phi_y, phi_z)`` in rad.

    ``accel_bias`` and ``gyro_bias`` are ENU-axis components (a scalar is
    used on every axis).
    """
    if abs(np.pi / 2 - abs(lat)) < earth.POLE_EPS:
        raise ValueError("utmost precision undefined at the poles")
    gamma = earth.normal_gravity(lat) if gamma is None else gamma
    acc = np.broadcast_to(np.asarray(accel_bias, float), (3,))
    gyr = np.broadcast_to(np.asarray(gyro_bias, float), (3,))
    phi_x = -acc[1] / gamma
    phi_y = acc[0] / gamma
    phi_z = np.tan(lat) * acc[0] / gamma - gyr[0] / (earth_model.omega_ie * np.cos(lat))
    return np.array([phi_x, phi_y, phi_z])


def wrap_deg(a):
    """Wrap degrees to ``(-180, 180]``."""
    a = np.asarray(a, dtype=float)
    w = np.mod(a + 180.0, 360.0) - 180.0
    return np.where(w == -180.0, 180.0, w)


def attitude_error(c_true, c_est):
    """``(d_pitch, d_roll, d_yaw)`` in degrees, truth minus estimate, wrapped."""
    a = np.degrees(np.stack(dcm_to_euler(c_true), axis=-1))
    b = np.degrees(np.stack(dcm_to_euler(c_est), axis=-1))
    return wrap_deg(a - b)


@dataclass
class McResult:
    """Monte Carlo outcome for one filter kind; angles in degrees."""

    kind: ModelKind
    t: np.ndarray  # (M,)
    errors: np.ndarray  # (N, M, 3) pitch, roll, yaw
    misalignment: np.ndarray  # (N, 3)
    steady_mean: np.ndarray  # (N, 3)
    steady_std: np.ndarray  # (N, 3)
    converged: np.ndarray  # (N,) bool
    warnings: list = field(default_factory=list)

    @property
    def trials(self):
        return self.errors.shape[0]

    @property
    def converged_fraction(self):
        return float(np.mean(self.converged))

    @property
    def mean_abs_yaw(self):
        return float(np.mean(np.abs(self.steady_mean[:, 2])))


def steady_stats(t, errors, window=100.0):
    sel = t >= t[-1] - window
    e = errors[..., sel, :]
    return e.mean(axis=-2), e.std(axis=-2)


def summarize(kind, run, c_true, misalignment, window=100.0, yaw_tol=1.0):
    errors = attitude_error(c_true, run.c_b_n)
    mean, std = steady_stats(run.t, errors, window)
    converged = np.abs(errors[:, -1, 2]) < yaw_tol
    return McResult(ModelKind.parse(kind), run.t, errors, np.atleast_2d(misalignment), mean, std,
                    converged, list(run.warnings))


def draw_trials(cfg: SimConfig, trials):
    """Per-trial misalignments (deg) and batched IMU data.

    Trial ``k`` uses the generator seeded by the ``k``-th child of
    ``SeedSequence(cfg.seed)``: first the misalignment is drawn, then the
    sensor noise, so results do not depend on how trials are batched.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    children = np.random.SeedSequence(cfg.seed).spawn(trials)
    mis, gyro, accel = [], [], []
    imu = aiding = None
    for child in children:
        rng = np.random.default_rng(child)
        mis.append(sample_misalignment(rng, cfg.misalignment))
        imu, aiding = simulate_static_imu(cfg, rng)
        gyro.append(imu.gyro)
        accel.append(imu.accel)
    batched = ImuData(imu.t, np.stack(gyro), np.stack(accel))
    return np.array(mis), batched, aiding


def p0_attitude(misalignment_deg, floor_deg=1.0):
    """Per-channel one-sigma attitude uncertainty (rad): a third of the misalignment."""
    return np.radians(np.maximum(np.abs(misalignment_deg), floor_deg)) / 3.0


def monte_carlo(cfg: SimConfig, kinds, trials, **filter_overrides):
    """Run every kind on identical sensor data; returns ``{kind: McResult}``."""
    mis, imu, aiding = draw_trials(cfg, trials)
    guess = initial_guess(cfg, mis)
    c_true = cfg.c_b_n
    out = {}
    for kind in kinds:
        kind = ModelKind.parse(kind)
        overrides = dict(filter_overrides)
        overrides.setdefault("p0_att", p0_attitude(mis))
        fcfg = cfg.filter_config(**overrides)
        run = align_run(imu, aiding, kind, fcfg, guess)
        out[kind] = summarize(kind, run, c_true, mis)
    return out


def with_misalignment(cfg: SimConfig, values_deg) -> SimConfig:
    return replace(cfg, misalignment=MisalignmentSpec("fixed", tuple(float(v) for v in values_deg)))
