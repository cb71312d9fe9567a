"""SO(3) and SE_2(3) group operations.

All functions broadcast over leading batch dimensions: a rotation vector of
shape ``(..., 3)`` maps to rotation matrices of shape ``(..., 3, 3)``.
Elements of SE_2(3) are held as explicit ``(C, v, r)`` blocks and only
materialised as 5x5 matrices on request.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

ANGLE_EPS = 1e-7
"""Below this angle (rad) the trigonometric coefficients use Taylor series."""

PI_EPS = 1e-2
"""Within this distance of pi, ``so3_log`` takes the axis from the symmetric part."""

ORTHO_TOL = 1e-9


def _as_vec3(x, name="phi"):
    x = np.asarray(x, dtype=float)
    if x.shape[-1:] != (3,):
        raise ValueError(f"{name} must have trailing dimension 3, got shape {x.shape}")
    if not np.all(np.isfinite(x)):
        raise ValueError(f"{name} must be finite")
    return x


def skew(v):
    """Cross-product matrix ``(v x)`` for ``v`` of shape ``(..., 3)``."""
    v = np.asarray(v, dtype=float)
    out = np.zeros(v.shape + (3,))
    out[..., 0, 1] = -v[..., 2]
    out[..., 0, 2] = v[..., 1]
    out[..., 1, 0] = v[..., 2]
    out[..., 1, 2] = -v[..., 0]
    out[..., 2, 0] = -v[..., 1]
    out[..., 2, 1] = v[..., 0]
    return out


def unskew(M):
    """Inverse of :func:`skew` (takes the antisymmetric part)."""
    M = np.asarray(M, dtype=float)
    return 0.5 * np.stack(
        [M[..., 2, 1] - M[..., 1, 2], M[..., 0, 2] - M[..., 2, 0], M[..., 1, 0] - M[..., 0, 1]],
        axis=-1,
    )


def _coefficients(phi):
    """Return ``angle, sin(a)/a, (1-cos a)/a^2, (a - sin a)/a^3`` with small-angle series."""
    angle = np.linalg.norm(phi, axis=-1)
    small = angle < ANGLE_EPS
    a = np.where(small, 1.0, angle)
    a2 = angle * angle
    s1 = np.where(small, 1.0 - a2 / 6.0, np.sin(a) / a)
    # 1 - cos(a) = 2 sin^2(a/2) avoids cancellation for small a
    s2 = np.where(small, 0.5 - a2 / 24.0, 2.0 * np.sin(0.5 * a) ** 2 / (a * a))
    s3 = np.where(small, 1.0 / 6.0 - a2 / 120.0, (a - np.sin(a)) / a**3)
    return angle, s1, s2, s3


def so3_exp(phi):
    """Rotation matrix for rotation vector ``phi`` (Rodrigues formula)."""
    phi = _as_vec3(phi)
    _, s1, s2, _ = _coefficients(phi)
    K = skew(phi)
    return np.eye(3) + s1[..., None, None] * K + s2[..., None, None] * (K @ K)


def is_rotation(C, tol=ORTHO_TOL):
    C = np.asarray(C, dtype=float)
    if C.shape[-2:] != (3, 3) or not np.all(np.isfinite(C)):
        return False
    err = np.abs(np.swapaxes(C, -1, -2) @ C - np.eye(3)).max()
    return bool(err <= tol and np.all(np.linalg.det(C) > 0))


def so3_log(C):
    """Rotation vector of ``C`` with angle in ``[0, pi]``.

    Near pi the axis comes from the symmetric part of ``C``; its sign is
    chosen to agree with the antisymmetric part, and at exactly pi the first
    nonzero axis component is made positive.
    """
    C = np.asarray(C, dtype=float)
    if C.shape[-2:] != (3, 3):
        raise ValueError(f"expected (..., 3, 3) rotation matrices, got shape {C.shape}")
    if not is_rotation(C):
        raise ValueError("so3_log: input is not orthonormal with det +1")

    w = unskew(C)  # sin(angle) * axis
    s = np.linalg.norm(w, axis=-1)
    c = 0.5 * (np.trace(C, axis1=-2, axis2=-1) - 1.0)
    angle = np.arctan2(s, c)

    small = angle < ANGLE_EPS
    safe_s = np.where(s > 0, s, 1.0)
    scale = np.where(small, 1.0 + angle * angle / 6.0, angle / safe_s)
    phi = scale[..., None] * w

    near_pi = np.pi - angle < PI_EPS
    if np.any(near_pi):
        sym = 0.5 * (C + np.swapaxes(C, -1, -2))
        aat = (sym - c[..., None, None] * np.eye(3)) / (1.0 - c)[..., None, None]
        diag = np.diagonal(aat, axis1=-2, axis2=-1)
        k = np.argmax(diag, axis=-1)
        col = np.take_along_axis(aat, k[..., None, None], axis=-1)[..., 0]
        pivot = np.take_along_axis(diag, k[..., None], axis=-1)
        axis = col / np.sqrt(pivot)
        dot = np.sum(axis * w, axis=-1)
        # ties at pi: first nonzero component positive
        first = np.take_along_axis(
            axis, np.argmax(np.abs(axis) > 1e-12, axis=-1)[..., None], axis=-1
        )[..., 0]
        sign = np.where(np.abs(dot) > 1e-14, np.sign(dot), np.sign(first))
        sign = np.where(sign == 0, 1.0, sign)
        phi_pi = (sign * angle)[..., None] * axis
        phi = np.where(near_pi[..., None], phi_pi, phi)
    return phi


def left_jacobian(phi):
    """Left Jacobian of SO(3); equals the integral of ``so3_exp(s*phi)`` over ``s`` in [0, 1]."""
    phi = _as_vec3(phi)
    _, _, s2, s3 = _coefficients(phi)
    K = skew(phi)
    return np.eye(3) + s2[..., None, None] * K + s3[..., None, None] * (K @ K)


def left_jacobian_inv(phi):
    """Inverse of :func:`left_jacobian` using the half-angle cotangent closed form."""
    phi = _as_vec3(phi)
    angle = np.linalg.norm(phi, axis=-1)
    if np.any(angle >= 2.0 * np.pi - 1e-9):
        raise ValueError("left_jacobian_inv: rotation angle must be below 2*pi")
    small = angle < ANGLE_EPS
    a = np.where(small, 1.0, angle)
    half = 0.5 * a
    # (1 - (a/2) cot(a/2)) / a^2
    coef = np.where(small, 1.0 / 12.0 + angle * angle / 720.0, (1.0 - half / np.tan(half)) / (a * a))
    K = skew(phi)
    return np.eye(3) - 0.5 * K + coef[..., None, None] * (K @ K)


@dataclass(frozen=True)
class GroupElement:
    """Element of SE_2(3): attitude ``C``, velocity ``v`` and position ``r``.

    Fields may carry matching leading batch dimensions.
    """

    C: np.ndarray
    v: np.ndarray
    r: np.ndarray

    def __post_init__(self):
        C = np.asarray(self.C, dtype=float)
        v = np.asarray(self.v, dtype=float)
        r = np.asarray(self.r, dtype=float)
        if C.shape[-2:] != (3, 3) or v.shape[-1:] != (3,) or r.shape[-1:] != (3,):
            raise ValueError("GroupElement needs C (...,3,3), v (...,3), r (...,3)")
        object.__setattr__(self, "C", C)
        object.__setattr__(self, "v", v)
        object.__setattr__(self, "r", r)

    @classmethod
    def identity(cls):
        return cls(np.eye(3), np.zeros(3), np.zeros(3))

    @classmethod
    def from_matrix(cls, T):
        T = np.asarray(T, dtype=float)
        if T.shape[-2:] != (5, 5):
            raise ValueError(f"expected (..., 5, 5), got {T.shape}")
        return cls(T[..., :3, :3], T[..., :3, 3], T[..., :3, 4])

    def as_matrix(self):
        batch = self.C.shape[:-2]
        T = np.zeros(batch + (5, 5))
        T[..., :3, :3] = self.C
        T[..., :3, 3] = self.v
        T[..., :3, 4] = self.r
        T[..., 3, 3] = 1.0
        T[..., 4, 4] = 1.0
        return T

    def __matmul__(self, other):
        return se23_compose(self, other)

    def inverse(self):
        return se23_inverse(self)


def _matvec(C, x):
    return np.einsum("...ij,...j->...i", C, x)


def se23_compose(T1: GroupElement, T2: GroupElement) -> GroupElement:
    return GroupElement(T1.C @ T2.C, _matvec(T1.C, T2.v) + T1.v, _matvec(T1.C, T2.r) + T1.r)


def se23_inverse(T: GroupElement) -> GroupElement:
    Ct = np.swapaxes(T.C, -1, -2)
    return GroupElement(Ct, -_matvec(Ct, T.v), -_matvec(Ct, T.r))


def wedge(zeta):
    """5x5 Lie algebra matrix of a 9-vector ``(phi, nu, rho)``."""
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape[-1:] != (9,):
        raise ValueError(f"zeta must have trailing dimension 9, got {zeta.shape}")
    X = np.zeros(zeta.shape[:-1] + (5, 5))
    X[..., :3, :3] = skew(zeta[..., 0:3])
    X[..., :3, 3] = zeta[..., 3:6]
    X[..., :3, 4] = zeta[..., 6:9]
    return X


def vee(X):
    X = np.asarray(X, dtype=float)
    return np.concatenate([unskew(X[..., :3, :3]), X[..., :3, 3], X[..., :3, 4]], axis=-1)


def se23_exp(zeta) -> GroupElement:
    zeta = np.asarray(zeta, dtype=float)
    if zeta.shape[-1:] != (9,):
        raise ValueError(f"zeta must have trailing dimension 9, got {zeta.shape}")
    if not np.all(np.isfinite(zeta)):
        raise ValueError("zeta must be finite")
    phi = zeta[..., 0:3]
    J = left_jacobian(phi)
    return GroupElement(so3_exp(phi), _matvec(J, zeta[..., 3:6]), _matvec(J, zeta[..., 6:9]))


def se23_log(T: GroupElement):
    phi = so3_log(T.C)
    Jinv = left_jacobian_inv(phi)
    return np.concatenate([phi, _matvec(Jinv, T.v), _matvec(Jinv, T.r)], axis=-1)
