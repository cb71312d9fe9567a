"""WGS-84 earth model and the frame chain tying the local ENU frame to the
inertial frame frozen at the start of alignment.

Frames: ``b`` body, ``n`` local East-North-Up, ``e`` earth-fixed, ``e0`` the
earth frame frozen at ``t0``, ``i`` the navigation frame frozen at ``t0``.
Matrices are named ``c_<to>_<from>`` in the docstrings' sense: ``C_a^b``
maps coordinates in ``a`` to coordinates in ``b``.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np


@dataclass(frozen=True)
class EarthConstants:
    a: float = 6378137.0
    e2: float = 6.69437999014e-3
    omega_ie: float = 7.292115e-5
    f: float = 1.0 / 298.257223563
    gm: float = 3.986004418e14
    gamma_e: float = 9.7803253359
    gamma_p: float = 9.8321849378

    @property
    def b(self):
        return self.a * (1.0 - self.f)

    @property
    def somigliana_k(self):
        return self.b * self.gamma_p / (self.a * self.gamma_e) - 1.0

    @property
    def m(self):
        return self.omega_ie**2 * self.a**2 * self.b / self.gm


WGS84 = EarthConstants()
POLE_EPS = 1e-9


@dataclass(frozen=True)
class GeoPosition:
    """Geodetic latitude and longitude (rad) and ellipsoidal height (m)."""

    lat: float
    lon: float
    h: float = 0.0

    def __post_init__(self):
        lat, lon, h = float(self.lat), float(self.lon), float(self.h)
        if not all(np.isfinite([lat, lon, h])):
            raise ValueError("GeoPosition components must be finite")
        if abs(lat) > np.pi / 2:
            raise ValueError(f"latitude {lat} rad outside [-pi/2, pi/2]")
        lon = -((-lon + np.pi) % (2 * np.pi) - np.pi)  # wrap to (-pi, pi]
        object.__setattr__(self, "lat", lat)
        object.__setattr__(self, "lon", lon)
        object.__setattr__(self, "h", h)

    @classmethod
    def from_degrees(cls, lat_deg, lon_deg, h=0.0):
        return cls(np.radians(lat_deg), np.radians(lon_deg), h)

    def as_array(self):
        return np.array([self.lat, self.lon, self.h])


@dataclass(frozen=True)
class FrameChain:
    """Alignment epoch ``t0`` and start position ``p0``; caches C_e0^n0."""

    p0: GeoPosition
    t0: float = 0.0
    c_n0_e0: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        object.__setattr__(self, "c_n0_e0", c_n0_e0(self.p0))


def radii(lat, earth=WGS84):
    """Meridian and transverse radii of curvature ``(R_M, R_N)``."""
    s2 = np.sin(lat) ** 2
    w = 1.0 - earth.e2 * s2
    rn = earth.a / np.sqrt(w)
    rm = earth.a * (1.0 - earth.e2) / w**1.5
    return rm, rn


def earth_rate_n(lat, earth=WGS84):
    lat = np.asarray(lat, dtype=float)
    z = np.zeros_like(lat)
    return np.stack([z, earth.omega_ie * np.cos(lat), earth.omega_ie * np.sin(lat)], axis=-1)


def _check_pole(lat):
    if np.any(np.abs(np.pi / 2 - np.abs(lat)) < POLE_EPS):
        raise ValueError("latitude too close to a pole for transport-rate terms")


def transport_rate(v, p: GeoPosition, earth=WGS84):
    """Angular rate of ENU w.r.t. earth frame due to motion over the ellipsoid."""
    _check_pole(p.lat)
    ve, vn, _ = np.asarray(v, dtype=float)
    rm, rn = radii(p.lat, earth)
    return np.array(
        [-vn / (rm + p.h), ve / (rn + p.h), ve * np.tan(p.lat) / (rn + p.h)]
    )


def curvature_matrix(p: GeoPosition, earth=WGS84):
    """Matrix mapping ENU velocity to ``(dL/dt, dlambda/dt, dh/dt)``."""
    _check_pole(p.lat)
    rm, rn = radii(p.lat, earth)
    return np.array(
        [
            [0.0, 1.0 / (rm + p.h), 0.0],
            [1.0 / (np.cos(p.lat) * (rn + p.h)), 0.0, 0.0],
            [0.0, 0.0, 1.0],
        ]
    )


def geo_to_ecef(p: GeoPosition, earth=WGS84):
    return _geo_to_ecef(p.lat, p.lon, p.h, earth)


def _geo_to_ecef(lat, lon, h, earth=WGS84):
    _, rn = radii(lat, earth)
    cl = np.cos(lat)
    return np.stack(
        [
            (rn + h) * cl * np.cos(lon),
            (rn + h) * cl * np.sin(lon),
            (rn * (1.0 - earth.e2) + h) * np.sin(lat),
        ],
        axis=-1,
    )


def c_e0_e(t, earth=WGS84):
    """Earth rotation since ``t0`` as the matrix C_e0^e (z-rotation by ``omega_ie * t``)."""
    wt = earth.omega_ie * np.asarray(t, dtype=float)
    c, s = np.cos(wt), np.sin(wt)
    out = np.zeros(wt.shape + (3, 3))
    out[..., 0, 0] = c
    out[..., 0, 1] = s
    out[..., 1, 0] = -s
    out[..., 1, 1] = c
    out[..., 2, 2] = 1.0
    return out


def c_e_n(lat, lon):
    """ECEF to ENU rotation C_e^n at geodetic ``(lat, lon)``."""
    lat = np.asarray(lat, dtype=float)
    lon = np.asarray(lon, dtype=float)
    sL, cL = np.sin(lat), np.cos(lat)
    sl, cl = np.sin(lon), np.cos(lon)
    out = np.zeros(np.broadcast(lat, lon).shape + (3, 3))
    out[..., 0, 0] = -sl
    out[..., 0, 1] = cl
    out[..., 1, 0] = -sL * cl
    out[..., 1, 1] = -sL * sl
    out[..., 1, 2] = cL
    out[..., 2, 0] = cL * cl
    out[..., 2, 1] = cL * sl
    out[..., 2, 2] = sL
    return out


def c_n0_e0(p0: GeoPosition):
    """C_e0^n0: the ECEF-to-ENU rotation at the start position."""
    return c_e_n(p0.lat, p0.lon)


def c_e_i(t, chain: FrameChain, earth=WGS84):
    """C_e^i = C_e0^n0 C_e^e0, with C_e^e0 the transpose of :func:`c_e0_e`."""
    rot = c_e0_e(np.asarray(t, dtype=float) - chain.t0, earth)
    return chain.c_n0_e0 @ np.swapaxes(rot, -1, -2)


def c_n_i(t, p: GeoPosition, chain: FrameChain, earth=WGS84):
    """C_n^i at time ``t`` for a vehicle at ``p``; the identity at ``t0, p0``."""
    return c_n_i_arrays(t, p.lat, p.lon, chain, earth)


def c_n_i_arrays(t, lat, lon, chain: FrameChain, earth=WGS84):
    """Vectorised :func:`c_n_i` over arrays of times and coordinates."""
    return c_e_i(t, chain, earth) @ np.swapaxes(c_e_n(lat, lon), -1, -2)


def r_i_from_geo(p: GeoPosition, t, chain: FrameChain, earth=WGS84):
    return np.einsum("...ij,...j->...i", c_e_i(t, chain, earth), geo_to_ecef(p, earth))


def v_i_from_ground(v, p: GeoPosition, t, chain: FrameChain, earth=WGS84):
    """Inertial velocity from ENU ground velocity ``v`` at position ``p``."""
    return v_i_arrays(v, t, p.lat, p.lon, p.h, chain, earth)


def v_i_arrays(v, t, lat, lon, h, chain: FrameChain, earth=WGS84):
    cei = c_e_i(t, chain, earth)
    re = _geo_to_ecef(lat, lon, h, earth)
    w = np.array([0.0, 0.0, earth.omega_ie])
    rot_term = np.cross(w, re)
    cni = cei @ np.swapaxes(c_e_n(lat, lon), -1, -2)
    return np.einsum("...ij,...j->...i", cei, rot_term) + np.einsum(
        "...ij,...j->...i", cni, np.asarray(v, dtype=float)
    )


def normal_gravity(lat, h=0.0, earth=WGS84):
    """Somigliana normal gravity with the WGS-84 second-order height correction."""
    s2 = np.sin(lat) ** 2
    g0 = earth.gamma_e * (1.0 + earth.somigliana_k * s2) / np.sqrt(1.0 - earth.e2 * s2)
    hc = 1.0 - 2.0 * h / earth.a * (1.0 + earth.f + earth.m - 2.0 * earth.f * s2) + 3.0 * h**2 / earth.a**2
    return g0 * hc


def gravity_n(p: GeoPosition, earth=WGS84):
    """Plumb-line gravity in ENU: ``[0, 0, -gamma]``."""
    return np.array([0.0, 0.0, -normal_gravity(p.lat, p.h, earth)])


def gravitation_n_arrays(lat, lon, h, earth=WGS84):
    """Mass attraction in ENU: plumb gravity plus the removed centripetal term.

    A non-rotating frame sees gravitation, not gravity; a static accelerometer
    reads ``-gravity`` and the difference is ``omega x (omega x r)``.
    """
    lat = np.asarray(lat, dtype=float)
    g = np.zeros(np.broadcast(lat, lon, h).shape + (3,))
    g[..., 2] = -normal_gravity(lat, h, earth)
    re = _geo_to_ecef(lat, lon, h, earth)
    w = np.array([0.0, 0.0, earth.omega_ie])
    centripetal_e = np.cross(w, np.cross(w, re))
    return g + np.einsum("...ij,...j->...i", c_e_n(lat, lon), centripetal_e)


def gravitation_n(p: GeoPosition, earth=WGS84):
    return gravitation_n_arrays(p.lat, p.lon, p.h, earth)


def gravity_i(t, p: GeoPosition, chain: FrameChain, earth=WGS84):
    """The known gravity input of the inertial-frame mechanization, in ``i``."""
    return gravity_i_arrays(t, p.lat, p.lon, p.h, chain, earth)


def gravity_i_arrays(t, lat, lon, h, chain: FrameChain, earth=WGS84):
    cni = c_n_i_arrays(t, lat, lon, chain, earth)
    return np.einsum("...ij,...j->...i", cni, gravitation_n_arrays(lat, lon, h, earth))
