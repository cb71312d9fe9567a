import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from scipy.integrate import quad_vec
from scipy.linalg import expm

from se23align.se23 import (
    ANGLE_EPS,
    GroupElement,
    is_rotation,
    left_jacobian,
    left_jacobian_inv,
    se23_compose,
    se23_exp,
    se23_inverse,
    se23_log,
    skew,
    so3_exp,
    so3_log,
    unskew,
    vee,
    wedge,
)

finite = st.floats(-10.0, 10.0, allow_nan=False, allow_infinity=False)
vec3 = arrays(np.float64, 3, elements=finite)
vec9 = arrays(np.float64, 9, elements=finite)


def rotvec_with_angle(rng, angle):
    axis = rng.normal(size=3)
    return angle * axis / np.linalg.norm(axis)


def series_expm(X, terms=60):
    """Truncated power series; independent of the closed forms."""
    out = np.eye(X.shape[0])
    term = np.eye(X.shape[0])
    for k in range(1, terms):
        term = term @ X / k
        out = out + term
    return out


@st.composite
def rotvecs(draw, max_angle=np.pi - 1e-3):
    v = draw(arrays(np.float64, 3, elements=st.floats(-1, 1)).filter(lambda x: np.linalg.norm(x) > 1e-3))
    angle = draw(st.floats(0.0, max_angle))
    return angle * v / np.linalg.norm(v)


class TestSkew:
    @given(vec3, vec3)
    def test_cross_product(self, a, b):
        np.testing.assert_allclose(skew(a) @ b, np.cross(a, b), atol=1e-12)

    @given(vec3)
    def test_unskew_inverts(self, a):
        np.testing.assert_array_equal(unskew(skew(a)), a)

    def test_batch_shape(self):
        assert skew(np.zeros((4, 2, 3))).shape == (4, 2, 3, 3)


class TestSO3:
    def test_exp_zero_is_identity(self):
        np.testing.assert_array_equal(so3_exp(np.zeros(3)), np.eye(3))

    def test_exp_quarter_turn_about_z(self):
        C = so3_exp([0.0, 0.0, np.pi / 2])
        np.testing.assert_allclose(C, [[0, -1, 0], [1, 0, 0], [0, 0, 1]], atol=1e-15)

    @pytest.mark.parametrize("angle", [0.0, 1e-12, 1e-8, ANGLE_EPS, 1e-5, 0.3, 2.0, np.pi - 1e-3, np.pi])
    def test_exp_matches_series(self, rng, angle):
        phi = rotvec_with_angle(rng, angle)
        np.testing.assert_allclose(so3_exp(phi), series_expm(skew(phi)), atol=1e-13)

    @given(rotvecs())
    def test_exp_is_rotation(self, phi):
        assert is_rotation(so3_exp(phi))

    @given(rotvecs())
    def test_log_exp_round_trip(self, phi):
        np.testing.assert_allclose(so3_log(so3_exp(phi)), phi, atol=1e-9)

    @pytest.mark.parametrize("gap", [1e-3, 1e-5, 1e-8, 1e-11])
    def test_log_near_pi(self, rng, gap):
        phi = rotvec_with_angle(rng, np.pi - gap)
        back = so3_log(so3_exp(phi))
        np.testing.assert_allclose(so3_exp(back), so3_exp(phi), atol=1e-12)
        np.testing.assert_allclose(back, phi, atol=1e-6)

    def test_log_exactly_pi_sign_rule(self):
        phi = so3_log(so3_exp([0.0, -np.pi, 0.0]))
        np.testing.assert_allclose(phi, [0.0, np.pi, 0.0], atol=1e-12)
        phi = so3_log(np.diag([-1.0, -1.0, 1.0]))
        np.testing.assert_allclose(phi, [0.0, 0.0, np.pi], atol=1e-12)

    @pytest.mark.parametrize("angle", [0.0, 1e-14, 1e-9, 1e-7, 1e-6])
    def test_log_small_angle(self, rng, angle):
        phi = rotvec_with_angle(rng, angle)
        np.testing.assert_allclose(so3_log(so3_exp(phi)), phi, atol=1e-18 + 1e-12 * angle)

    def test_log_rejects_non_rotation(self):
        with pytest.raises(ValueError, match="orthonormal"):
            so3_log(np.diag([1.0, 1.0, -1.0]))
        with pytest.raises(ValueError):
            so3_log(np.eye(3) * 1.001)
        with pytest.raises(ValueError, match="shape"):
            so3_log(np.eye(4))

    def test_exp_rejects_bad_input(self):
        with pytest.raises(ValueError, match="trailing"):
            so3_exp([1.0, 2.0])
        with pytest.raises(ValueError, match="finite"):
            so3_exp([np.nan, 0.0, 0.0])

    def test_batched_log(self, rng):
        phi = rng.normal(size=(7, 5, 3))
        phi *= (rng.uniform(0, 3.0, (7, 5)) / np.linalg.norm(phi, axis=-1))[..., None]
        np.testing.assert_allclose(so3_log(so3_exp(phi)), phi, atol=1e-12)


class TestLeftJacobian:
    @pytest.mark.parametrize("angle", [0.0, 1e-9, 1e-4, 0.5, 2.5, np.pi - 1e-3])
    def test_matches_quadrature(self, rng, angle):
        phi = rotvec_with_angle(rng, angle)
        oracle, _ = quad_vec(lambda s: so3_exp(s * phi), 0.0, 1.0, epsabs=1e-14, epsrel=1e-14)
        np.testing.assert_allclose(left_jacobian(phi), oracle, atol=1e-12)

    @pytest.mark.parametrize("angle", [0.0, 1e-10, 1e-7, 1e-3, 1.0, 3.0, np.pi - 1e-3, 5.0])
    def test_inverse_matches_lu(self, rng, angle):
        phi = rotvec_with_angle(rng, angle)
        np.testing.assert_allclose(left_jacobian_inv(phi), np.linalg.inv(left_jacobian(phi)), atol=1e-10)

    @given(rotvecs())
    def test_product_is_identity(self, phi):
        np.testing.assert_allclose(left_jacobian(phi) @ left_jacobian_inv(phi), np.eye(3), atol=1e-10)

    def test_inverse_singular_at_two_pi(self):
        with pytest.raises(ValueError, match="2\\*pi"):
            left_jacobian_inv([0.0, 0.0, 2 * np.pi])

    def test_identity_with_exp(self, rng):
        # J_l(phi) phi = phi and exp(phi) = I + (phi x) J_l(phi)
        phi = rotvec_with_angle(rng, 1.3)
        np.testing.assert_allclose(left_jacobian(phi) @ phi, phi, atol=1e-14)
        np.testing.assert_allclose(so3_exp(phi), np.eye(3) + skew(phi) @ left_jacobian(phi), atol=1e-14)


class TestSE23:
    def test_exp_zero_is_identity(self):
        T = se23_exp(np.zeros(9))
        np.testing.assert_array_equal(T.as_matrix(), np.eye(5))

    @pytest.mark.parametrize("angle", [0.0, 1e-9, 0.2, 1.7, np.pi - 1e-3])
    def test_exp_matches_series(self, rng, angle):
        zeta = np.r_[rotvec_with_angle(rng, angle), rng.normal(scale=3.0, size=6)]
        oracle = series_expm(wedge(zeta))
        np.testing.assert_allclose(se23_exp(zeta).as_matrix(), oracle, atol=1e-10)
        np.testing.assert_allclose(oracle, expm(wedge(zeta)), atol=1e-10)

    @given(rotvecs(), arrays(np.float64, 6, elements=finite))
    @settings(max_examples=200)
    def test_log_exp_round_trip(self, phi, rest):
        zeta = np.r_[phi, rest]
        np.testing.assert_allclose(se23_log(se23_exp(zeta)), zeta, atol=1e-9)

    @given(vec9)
    def test_wedge_vee(self, zeta):
        np.testing.assert_array_equal(vee(wedge(zeta)), zeta)

    def test_compose_matches_matrix_product(self, rng):
        A = se23_exp(rng.normal(size=9))
        B = se23_exp(rng.normal(size=9))
        np.testing.assert_allclose((A @ B).as_matrix(), A.as_matrix() @ B.as_matrix(), atol=1e-12)
        np.testing.assert_allclose(se23_compose(A, B).as_matrix(), A.as_matrix() @ B.as_matrix(), atol=1e-12)

    def test_inverse_matches_lu(self, rng):
        A = se23_exp(rng.normal(size=9))
        np.testing.assert_allclose(A.inverse().as_matrix(), np.linalg.inv(A.as_matrix()), atol=1e-12)
        np.testing.assert_allclose((A @ se23_inverse(A)).as_matrix(), np.eye(5), atol=1e-12)

    def test_matrix_round_trip(self, rng):
        A = se23_exp(rng.normal(size=(3, 9)))
        B = GroupElement.from_matrix(A.as_matrix())
        np.testing.assert_array_equal(B.C, A.C)
        np.testing.assert_array_equal(B.v, A.v)
        np.testing.assert_array_equal(B.r, A.r)

    def test_group_element_validates(self):
        with pytest.raises(ValueError):
            GroupElement(np.eye(3), np.zeros(2), np.zeros(3))
        with pytest.raises(ValueError):
            GroupElement.from_matrix(np.eye(4))
        with pytest.raises(ValueError, match="trailing"):
            se23_exp(np.zeros(6))
        with pytest.raises(ValueError, match="trailing"):
            wedge(np.zeros(8))

    def test_adjoint_identity(self, rng):
        # exp(Ad_T x) = T exp(x) T^-1 with Ad built from the block form
        T = se23_exp(rng.normal(size=9))
        x = 0.3 * rng.normal(size=9)
        Ad = np.zeros((9, 9))
        for i in range(3):
            Ad[3 * i:3 * i + 3, 3 * i:3 * i + 3] = T.C
        Ad[3:6, 0:3] = skew(T.v) @ T.C
        Ad[6:9, 0:3] = skew(T.r) @ T.C
        lhs = se23_exp(Ad @ x).as_matrix()
        rhs = T.as_matrix() @ se23_exp(x).as_matrix() @ np.linalg.inv(T.as_matrix())
        np.testing.assert_allclose(lhs, rhs, atol=1e-11)
