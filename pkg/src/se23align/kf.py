"""Error-state Kalman filter and the alignment loop.

The loop runs any number of trials at once: every array carries a leading
trial axis ``N`` and all trials share one IMU time grid and one aiding
stream. Each trial has its own IMU readings, attitude guess and ``P0``.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from . import earth
from .earth import FrameChain, GeoPosition
from .errmodel import AB, ATT, GB, N_STATE, NAV, VEL, ModelKind, build, inject_error
from .se23 import left_jacobian, so3_exp
from .strapdown import REORTHO_EVERY, ImuData, NavStateI, _mechanize, compose_attitude, orthonormalize

log = logging.getLogger(__name__)

COND_MAX = 1e12
SNAP_TOL = 0.1


@dataclass(frozen=True)
class AidingData:
    """GNSS-style aiding: geodetic position (rad, m) and ENU velocity (m/s)."""

    t: np.ndarray
    lat: np.ndarray
    lon: np.ndarray
    h: np.ndarray
    vel: np.ndarray

    def __post_init__(self):
        t = np.asarray(self.t, dtype=float)
        arrays = {k: np.asarray(getattr(self, k), dtype=float) for k in ("lat", "lon", "h", "vel")}
        if t.ndim != 1 or any(arrays[k].shape != t.shape for k in ("lat", "lon", "h")):
            raise ValueError("aiding t, lat, lon, h must be 1-D of equal length")
        if arrays["vel"].shape != t.shape + (3,):
            raise ValueError("aiding vel must have shape (M, 3)")
        if t.size == 0:
            raise ValueError("aiding stream is empty")
        if not all(np.all(np.isfinite(a)) for a in (t, *arrays.values())):
            raise ValueError("aiding contains non-finite values")
        bad = np.flatnonzero(np.diff(t) <= 0)
        if bad.size:
            raise ValueError(f"aiding timestamps not strictly increasing at sample {bad[0] + 1}")
        if np.any(np.abs(arrays["lat"]) > np.pi / 2):
            raise ValueError("aiding latitude outside [-90, 90] deg")
        object.__setattr__(self, "t", t)
        for k, a in arrays.items():
            object.__setattr__(self, k, a)

    def __len__(self):
        return self.t.size

    def position(self, k) -> GeoPosition:
        return GeoPosition(self.lat[k], self.lon[k], self.h[k])

    def interp_position(self, t):
        """Linear interpolation of ``lat, lon, h`` (held constant outside the stream)."""
        lon = np.unwrap(self.lon)
        return (
            np.interp(t, self.t, self.lat),
            np.interp(t, self.t, lon),
            np.interp(t, self.t, self.h),
        )


@dataclass
class FilterConfig:
    """Tuning of the alignment filter.

    Noise densities are square roots of continuous PSDs: ``gyro_noise`` in
    rad/sqrt(s), ``accel_noise`` in m/s/sqrt(s). ``p0_att`` is the one-sigma
    attitude uncertainty in rad, a scalar, a 3-vector, or ``(N, 3)`` for one
    row per trial.
    """

    gyro_noise: float
    accel_noise: float
    p0_att: object = np.radians(30.0)
    p0_vel: float = 0.1
    p0_pos: float = 1.0
    p0_gyro_bias: float = 2 * np.radians(0.01) / 3600.0
    p0_accel_bias: float = 2 * 100e-6 * 9.80665
    gyro_bias_rw: float = 0.0
    accel_bias_rw: float = 0.0
    r_vel: float = 0.05
    meas_rate: float = 1.0
    compensate: bool = True
    lse_transformed: bool = False
    max_gap: float = 2.5
    reortho_every: int = REORTHO_EVERY

    def __post_init__(self):
        for name in ("gyro_noise", "accel_noise", "p0_vel", "p0_pos", "p0_gyro_bias", "p0_accel_bias",
                     "gyro_bias_rw", "accel_bias_rw"):
            if not (np.isfinite(getattr(self, name)) and getattr(self, name) >= 0):
                raise ValueError(f"{name} must be finite and non-negative")
        for name in ("r_vel", "meas_rate", "max_gap"):
            if not getattr(self, name) > 0:
                raise ValueError(f"{name} must be positive")
        if int(self.reortho_every) < 1:
            raise ValueError("reortho_every must be >= 1")
        p0 = np.asarray(self.p0_att, dtype=float)
        if not (np.all(np.isfinite(p0)) and np.all(p0 > 0)):
            raise ValueError("p0_att must be positive")

    def q_continuous(self):
        return np.diag(np.r_[np.full(3, self.gyro_noise**2), np.full(3, self.accel_noise**2)])

    def p0(self, n_trials):
        sig = np.empty((n_trials, N_STATE))
        sig[:, ATT] = np.broadcast_to(np.asarray(self.p0_att, float), (n_trials, 3))
        sig[:, VEL] = self.p0_vel
        sig[:, 6:9] = self.p0_pos
        sig[:, GB] = self.p0_gyro_bias
        sig[:, AB] = self.p0_accel_bias
        return np.einsum("ni,ij->nij", sig**2, np.eye(N_STATE))


@dataclass
class FilterState:
    dx: np.ndarray  # (..., 15)
    P: np.ndarray  # (..., 15, 15)
    kind: ModelKind = ModelKind.LSE


@dataclass
class AlignmentRun:
    """Per-epoch log of an alignment; arrays have a leading trial axis."""

    kind: ModelKind
    t: np.ndarray  # (M,)
    c_b_n: np.ndarray  # (N, M, 3, 3)
    p_att: np.ndarray  # (N, M, 3) attitude-error variances in the model's own frame
    dx: np.ndarray  # (N, M, 15) posterior before the feedback reset
    bias: np.ndarray  # (N, M, 6) gyro then accel bias estimate
    final: NavStateI
    filter: FilterState
    chain: FrameChain
    warnings: list = field(default_factory=list)


def discretize(F, G, Q, dt):
    """Second-order transition matrix and trapezoidal process noise."""
    if not dt > 0:
        raise ValueError("dt must be positive")
    F = np.asarray(F, float)
    G = np.asarray(G, float)
    Fdt = F * dt
    Phi = np.eye(F.shape[-1]) + Fdt + 0.5 * (Fdt @ Fdt)
    GQG = G @ np.asarray(Q, float) @ np.swapaxes(G, -1, -2)
    Qk = 0.5 * (Phi @ GQG @ np.swapaxes(Phi, -1, -2) + GQG) * dt
    return Phi, 0.5 * (Qk + np.swapaxes(Qk, -1, -2))


def symmetrize(P):
    return 0.5 * (P + np.swapaxes(P, -1, -2))


def kf_predict(fs: FilterState, Phi, Qk, compensate=True):
    """Propagate ``dx`` and ``P``.

    With ``compensate`` the bias estimates have already been removed from the
    IMU, so the navigation error is propagated without them and the bias
    states carry over unchanged.
    """
    if compensate:
        dx = fs.dx.copy()
        dx[..., NAV] = np.einsum("...ij,...j->...i", Phi[..., NAV, NAV], fs.dx[..., NAV])
    else:
        dx = np.einsum("...ij,...j->...i", Phi, fs.dx)
    P = symmetrize(Phi @ fs.P @ np.swapaxes(Phi, -1, -2) + Qk)
    return FilterState(dx, P, fs.kind)


def kf_update(fs: FilterState, H, y, R):
    """Joseph-form measurement update; returns ``(state, n_regularized)``."""
    H = np.asarray(H, float)
    R = np.asarray(R, float)
    y = np.asarray(y, float)
    Ht = np.swapaxes(H, -1, -2)
    S = H @ fs.P @ Ht + R
    S = symmetrize(S)
    cond = np.linalg.cond(S)
    bad = ~np.isfinite(cond) | (cond > COND_MAX)
    n_reg = int(np.count_nonzero(bad))
    if n_reg:
        eps = 1e-12 * np.maximum(np.trace(S, axis1=-2, axis2=-1), 1.0)
        S = S + np.where(bad, eps, 0.0)[..., None, None] * np.eye(S.shape[-1])
        log.warning("innovation covariance ill-conditioned in %d trial(s); regularized", n_reg)
    K = np.swapaxes(np.linalg.solve(S, H @ fs.P), -1, -2)
    innov = y - np.einsum("...ij,...j->...i", H, fs.dx)
    dx = fs.dx + np.einsum("...ij,...j->...i", K, innov)
    A = np.eye(fs.P.shape[-1]) - K @ H
    P = A @ fs.P @ np.swapaxes(A, -1, -2) + K @ R @ np.swapaxes(K, -1, -2)
    return FilterState(dx, symmetrize(P), fs.kind), n_reg


def kf_step(fs: FilterState, Phi, Qk, H, y, R, compensate=True):
    """Prediction followed by an update; ``H=None`` skips the update."""
    fs = kf_predict(fs, Phi, Qk, compensate)
    if H is None:
        return fs
    return kf_update(fs, H, y, R)[0]


def retract_right(s: NavStateI, dx9) -> NavStateI:
    """Apply an RSE estimate: ``T = exp(dx) T~``."""
    dx9 = np.asarray(dx9, float)
    phi = dx9[..., ATT]
    E = so3_exp(phi)
    J = left_jacobian(phi)
    mv = lambda A, x: np.einsum("...ij,...j->...i", A, x)  # noqa: E731
    return NavStateI(E @ s.C, mv(E, s.v) + mv(J, dx9[..., VEL]), mv(E, s.r) + mv(J, dx9[..., 6:9]), s.t)


def retract_left(s: NavStateI, dx9) -> NavStateI:
    """Apply an LSE estimate: ``T = T~ exp(dx)``."""
    dx9 = np.asarray(dx9, float)
    phi = dx9[..., ATT]
    J = left_jacobian(phi)
    CJ = s.C @ J
    mv = lambda A, x: np.einsum("...ij,...j->...i", A, x)  # noqa: E731
    return NavStateI(s.C @ so3_exp(phi), s.v + mv(CJ, dx9[..., VEL]), s.r + mv(CJ, dx9[..., 6:9]), s.t)


def retract_so3(s: NavStateI, dx9, kind) -> NavStateI:
    kind = ModelKind.parse(kind)
    if kind not in (ModelKind.RSO, ModelKind.LSO):
        raise ValueError("retract_so3 handles rso and lso only")
    return inject_error(kind, s, dx9)


def retract(kind, s: NavStateI, dx9) -> NavStateI:
    kind = ModelKind.parse(kind)
    if kind is ModelKind.RSE:
        return retract_right(s, dx9)
    if kind is ModelKind.LSE:
        return retract_left(s, dx9)
    return retract_so3(s, dx9, kind)


def measurement_schedule(imu_t, aiding: AidingData, meas_rate, max_gap):
    """Pick aiding epochs at ``meas_rate`` and map them to the nearest IMU sample.

    Returns ``(imu_index, aiding_index, warnings)``. IMU index 0 is never
    used (nothing has been propagated yet) and epochs off the IMU time span
    are dropped.
    """
    warnings = []
    # snap aiding epochs to a grid at meas_rate anchored at the first one and
    # keep the sample nearest to each grid point, if within a tenth of a period
    offset = (aiding.t - aiding.t[0]) * meas_rate
    slot = np.round(offset)
    dist = np.abs(offset - slot)
    keep = []
    for g in np.unique(slot[dist <= SNAP_TOL]):
        members = np.flatnonzero(slot == g)
        keep.append(members[np.argmin(dist[members])])
    keep = np.asarray(keep, dtype=int)
    ta = aiding.t[keep]
    inside = (ta >= imu_t[0]) & (ta <= imu_t[-1])
    if np.any(~inside):
        warnings.append(f"{int(np.count_nonzero(~inside))} aiding epoch(s) outside the IMU time span ignored")
    keep, ta = keep[inside], ta[inside]
    idx = np.clip(np.searchsorted(imu_t, ta), 1, imu_t.size - 1)
    prev = idx - 1
    idx = np.where(np.abs(imu_t[prev] - ta) < np.abs(imu_t[idx] - ta), prev, idx)
    ok = idx > 0
    keep, idx = keep[ok], idx[ok]
    if keep.size:
        _, first = np.unique(idx, return_index=True)
        keep, idx = keep[first], idx[first]
    times = np.r_[imu_t[0], aiding.t[keep], imu_t[-1]]
    n_gaps = int(np.count_nonzero(np.diff(times) > max_gap))
    if n_gaps:
        warnings.append(f"{n_gaps} aiding gap(s) longer than {max_gap} s; prediction only")
    return idx, keep, warnings


def align_run(imu: ImuData, aiding: AidingData, kind, cfg: FilterConfig, c_b_n0) -> AlignmentRun:
    """Run the alignment filter over the whole IMU stream.

    ``c_b_n0`` is the initial attitude guess, ``(3, 3)`` or ``(N, 3, 3)``.
    ``imu.gyro`` may be ``(K, 3)`` or ``(N, K, 3)``.
    """
    kind = ModelKind.parse(kind)
    gyro_all = imu.gyro if imu.gyro.ndim == 3 else imu.gyro[None]
    accel_all = imu.accel if imu.accel.ndim == 3 else imu.accel[None]
    c_b_n0 = np.asarray(c_b_n0, float)
    n = max(gyro_all.shape[0], c_b_n0.reshape(-1, 3, 3).shape[0])
    gyro_all = np.broadcast_to(gyro_all, (n,) + gyro_all.shape[1:])
    accel_all = np.broadcast_to(accel_all, (n,) + accel_all.shape[1:])
    c_b_n0 = np.broadcast_to(c_b_n0.reshape(-1, 3, 3), (n, 3, 3))

    t = imu.t
    chain = FrameChain(aiding.position(0), t0=float(t[0]))
    meas_idx, meas_aid, warnings = measurement_schedule(t, aiding, cfg.meas_rate, cfg.max_gap)
    for w in warnings:
        log.warning(w)

    # known inputs, shared by all trials
    t_mid = 0.5 * (t[1:] + t[:-1])
    lat_m, lon_m, h_m = aiding.interp_position(t_mid)
    g_mid = earth.gravity_i_arrays(t_mid, lat_m, lon_m, h_m, chain)
    ta = aiding.t[meas_aid]
    v_gps = earth.v_i_arrays(
        aiding.vel[meas_aid], ta, aiding.lat[meas_aid], aiding.lon[meas_aid], aiding.h[meas_aid], chain
    )
    c_n_i_meas = earth.c_n_i_arrays(ta, aiding.lat[meas_aid], aiding.lon[meas_aid], chain)

    p_start = GeoPosition(*aiding.interp_position(t[0]))
    v0 = np.array([np.interp(t[0], aiding.t, aiding.vel[:, i]) for i in range(3)])
    s0 = earth.c_n_i(t[0], p_start, chain)
    nav = NavStateI(
        C=s0 @ c_b_n0,
        v=np.broadcast_to(earth.v_i_from_ground(v0, p_start, t[0], chain), (n, 3)).copy(),
        r=np.broadcast_to(earth.r_i_from_geo(p_start, t[0], chain), (n, 3)).copy(),
        t=float(t[0]),
    )
    fs = FilterState(np.zeros((n, N_STATE)), cfg.p0(n), kind)
    Qc = cfg.q_continuous()
    R = cfg.r_vel**2 * np.eye(3)
    bias_q = np.r_[np.full(3, cfg.gyro_bias_rw**2), np.full(3, cfg.accel_bias_rw**2)]

    m = meas_idx.size
    out_c = np.empty((n, m, 3, 3))
    out_p = np.empty((n, m, 3))
    out_dx = np.empty((n, m, N_STATE))
    out_b = np.empty((n, m, 6))
    slot = np.full(t.size, -1, dtype=int)
    slot[meas_idx] = np.arange(m)
    n_reg_total = 0

    C, v, r = nav.C, nav.v, nav.r
    for k in range(t.size - 1):
        dt = t[k + 1] - t[k]
        g0, g1 = gyro_all[:, k], gyro_all[:, k + 1]
        a0, a1 = accel_all[:, k], accel_all[:, k + 1]
        if cfg.compensate:
            bg, ba = fs.dx[:, GB], fs.dx[:, AB]
            g0, g1, a0, a1 = g0 - bg, g1 - bg, a0 - ba, a1 - ba
        gm, am = 0.5 * (g0 + g1), 0.5 * (a0 + a1)

        sysm = build(kind, NavStateI(C, v, r), gm, am, g_mid[k], transformed=cfg.lse_transformed)
        Phi, Qk = discretize(sysm.F, sysm.G, Qc, dt)
        if bias_q.any():
            Qk[:, 9:, 9:] += np.diag(bias_q) * dt
        fs = kf_predict(fs, Phi, Qk, cfg.compensate)

        C, v, r = _mechanize(C, v, r, g0, g1, a0, a1, g_mid[k], dt)
        if (k + 1) % cfg.reortho_every == 0:
            C = orthonormalize(C)

        j = slot[k + 1]
        if j < 0:
            continue
        cur = NavStateI(C, v, r, t[k + 1])
        y = v - v_gps[j]
        if kind is ModelKind.LSE:
            H = build(kind, cur, gm, am, g_mid[k], transformed=cfg.lse_transformed).H
            if cfg.lse_transformed:
                Ct = np.swapaxes(C, -1, -2)
                y = np.einsum("nij,nj->ni", Ct, y)
                Rk = Ct @ R @ C
            else:
                Rk = R
        else:
            H = build(kind, cur, gm, am, g_mid[k]).H
            Rk = R
        fs, n_reg = kf_update(fs, H, y, Rk)
        n_reg_total += n_reg

        out_dx[:, j] = fs.dx
        cur = retract(kind, cur, fs.dx[:, NAV])
        C, v, r = cur.C, cur.v, cur.r
        fs.dx[:, NAV] = 0.0

        out_c[:, j] = compose_attitude(c_n_i_meas[j], C)
        out_p[:, j] = np.diagonal(fs.P[:, ATT, ATT], axis1=-2, axis2=-1)
        out_b[:, j] = fs.dx[:, 9:15]

    if n_reg_total:
        warnings.append(f"innovation covariance regularized {n_reg_total} time(s)")
    return AlignmentRun(
        kind=kind,
        t=t[meas_idx],
        c_b_n=out_c,
        p_att=out_p,
        dx=out_dx,
        bias=out_b,
        final=NavStateI(C, v, r, float(t[-1])),
        filter=fs,
        chain=chain,
        warnings=warnings,
    )

