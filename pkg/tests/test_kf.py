import logging
from dataclasses import replace

import numpy as np
import pytest
from scipy.linalg import expm

from se23align import errmodel as em
from se23align import kf, sim
from se23align.errmodel import ModelKind
from se23align.kf import AidingData, FilterConfig, FilterState
from se23align.se23 import left_jacobian, so3_exp
from se23align.strapdown import NavStateI

KINDS = list(ModelKind)


def random_spd(rng, n):
    A = rng.normal(size=(n, n))
    return A @ A.T + n * np.eye(n)


def quiet_config(**kw):
    base = sim.SimConfig(
        duration=60.0, gyro_noise=0.0, accel_noise=0.0, gyro_bias=(0.0, 0.0, 0.0), accel_bias=(0.0, 0.0, 0.0),
        misalignment=sim.MisalignmentSpec("fixed", (0.0, 0.0, 0.0)),
    )
    return replace(base, **kw)


class TestDiscretize:
    def test_zero_dynamics(self, rng):
        G = rng.normal(size=(15, 6))
        Q = np.diag(rng.uniform(1, 2, 6))
        Phi, Qk = kf.discretize(np.zeros((15, 15)), G, Q, 0.1)
        np.testing.assert_array_equal(Phi, np.eye(15))
        np.testing.assert_allclose(Qk, G @ Q @ G.T * 0.1, atol=1e-15)

    def test_small_dt(self, rng):
        Phi, _ = kf.discretize(rng.normal(size=(15, 15)), np.zeros((15, 6)), np.eye(6), 1e-12)
        np.testing.assert_allclose(Phi, np.eye(15), atol=1e-10)

    def test_rejects_bad_dt(self):
        with pytest.raises(ValueError):
            kf.discretize(np.zeros((2, 2)), np.zeros((2, 1)), np.eye(1), 0.0)

    @staticmethod
    def van_loan(F, G, Q, dt):
        n = F.shape[0]
        M = np.zeros((2 * n, 2 * n))
        M[:n, :n] = -F
        M[:n, n:] = G @ Q @ G.T
        M[n:, n:] = F.T
        E = expm(M * dt)
        Phi = E[n:, n:].T
        return Phi, Phi @ E[:n, n:]

    def test_against_van_loan_random(self, rng):
        A = rng.normal(size=(15, 15))
        F = A / np.linalg.norm(A, 2)
        G = rng.normal(size=(15, 6))
        Q = np.diag(rng.uniform(0.5, 2.0, 6))
        Phi, Qk = kf.discretize(F, G, Q, 0.01)
        Phi_ref, Q_ref = self.van_loan(F, G, Q, 0.01)
        assert np.linalg.norm(Phi - Phi_ref) / np.linalg.norm(Phi_ref) < 1e-6
        assert np.linalg.norm(Qk - Q_ref) / np.linalg.norm(Q_ref) < 1e-4
        np.testing.assert_array_equal(Qk, Qk.T)
        assert np.linalg.eigvalsh(Qk).min() > -1e-14

    @pytest.mark.parametrize("kind", KINDS)
    def test_against_van_loan_error_models(self, rng, kind):
        est, gyro, accel, g_i = em.random_nav_scenario(rng)
        m = em.build(kind, est, gyro, accel, g_i)
        Q = np.diag([1e-10] * 3 + [1e-8] * 3)
        Phi, Qk = kf.discretize(m.F, m.G, Q, 0.01)
        Phi_ref, Q_ref = self.van_loan(m.F, m.G, Q, 0.01)
        assert np.linalg.norm(Phi - Phi_ref) / np.linalg.norm(Phi_ref) < 1e-6
        assert np.linalg.norm(Qk - Q_ref) / np.linalg.norm(Q_ref) < 1e-4


class TestKalmanStep:
    def test_prediction_only(self, rng):
        P = random_spd(rng, 15)
        Phi = np.eye(15) + 0.01 * rng.normal(size=(15, 15))
        Qk = random_spd(rng, 15) * 1e-3
        fs = kf.kf_step(FilterState(np.zeros(15), P), Phi, Qk, None, None, None)
        np.testing.assert_allclose(fs.P, Phi @ P @ Phi.T + Qk, atol=1e-12)

    def test_perfect_velocity_measurement(self, rng):
        P = random_spd(rng, 15)
        H = np.zeros((3, 15))
        H[:, 3:6] = np.eye(3)
        y = rng.normal(size=3)
        fs, _ = kf.kf_update(FilterState(np.zeros(15), P), H, y, np.zeros((3, 3)))
        np.testing.assert_allclose(fs.dx[3:6], y, atol=1e-9)

    def test_scalar_steady_state_gain(self):
        a, q, r = 0.95, 0.2, 1.5
        # stationary prior variance of x+ = a x + w, y = x + v
        b = r - a * a * r - q
        p_prior = (-b + np.sqrt(b * b + 4 * q * r)) / 2
        k_ref = p_prior / (p_prior + r)
        fs = FilterState(np.zeros(1), np.eye(1) * 10.0)
        for _ in range(500):
            fs = kf.kf_predict(fs, np.array([[a]]), np.array([[q]]), compensate=False)
            prior = fs.P[0, 0]
            fs, _ = kf.kf_update(fs, np.eye(1), np.zeros(1), np.array([[r]]))
        assert prior / (prior + r) == pytest.approx(k_ref, rel=1e-12)
        assert fs.P[0, 0] == pytest.approx((1 - k_ref) * p_prior, rel=1e-12)

    def test_joseph_keeps_symmetry(self, rng):
        P = random_spd(rng, 15)
        H = rng.normal(size=(3, 15))
        fs, _ = kf.kf_update(FilterState(np.zeros(15), P), H, rng.normal(size=3), np.eye(3) * 0.01)
        assert np.abs(fs.P - fs.P.T).max() <= 1e-12
        assert np.linalg.eigvalsh(fs.P).min() > 0

    def test_singular_innovation_is_regularized(self, caplog):
        H = np.zeros((3, 15))
        H[:, 3:6] = np.eye(3)
        with caplog.at_level(logging.WARNING):
            fs, n = kf.kf_update(FilterState(np.zeros(15), np.zeros((15, 15))), H, np.ones(3), np.zeros((3, 3)))
        assert n == 1
        assert "regularized" in caplog.text
        assert np.all(np.isfinite(fs.dx))

    def test_compensated_prediction_keeps_bias_mean(self, rng):
        Phi = np.eye(15) + 0.1 * rng.normal(size=(15, 15))
        dx = np.r_[np.zeros(9), rng.normal(size=6)]
        fs = kf.kf_predict(FilterState(dx, np.eye(15)), Phi, np.zeros((15, 15)), compensate=True)
        np.testing.assert_array_equal(fs.dx, dx)
        fs = kf.kf_predict(FilterState(dx, np.eye(15)), Phi, np.zeros((15, 15)), compensate=False)
        np.testing.assert_allclose(fs.dx, Phi @ dx)


class TestRetraction:
    @pytest.mark.parametrize("kind", KINDS)
    def test_zero_is_identity(self, rng, kind):
        s = em.random_nav_scenario(rng)[0]
        out = kf.retract(kind, s, np.zeros(9))
        np.testing.assert_array_equal(out.v, s.v)
        np.testing.assert_array_equal(out.r, s.r)
        np.testing.assert_allclose(out.C, s.C, atol=1e-15)

    @pytest.mark.parametrize("kind", KINDS)
    def test_recovers_injected_truth(self, rng, kind):
        est = em.random_nav_scenario(rng)[0]
        e = np.r_[rng.normal(scale=0.8, size=3), rng.normal(scale=3.0, size=6)]
        truth = em.inject_error(kind, est, e)
        out = kf.retract(kind, est, e)
        np.testing.assert_allclose(out.C, truth.C, atol=1e-14)
        np.testing.assert_allclose(out.v, truth.v, atol=1e-9)
        np.testing.assert_allclose(out.r, truth.r, atol=1e-6)

    def test_right_closed_form(self, rng):
        s = em.random_nav_scenario(rng)[0]
        phi, dv, dr = rng.normal(size=3), rng.normal(size=3), rng.normal(size=3)
        out = kf.retract_right(s, np.r_[phi, dv, dr])
        E, J = so3_exp(phi), left_jacobian(phi)
        np.testing.assert_allclose(out.C, E @ s.C, atol=1e-15)
        np.testing.assert_allclose(out.v, E @ s.v + J @ dv, atol=1e-9)
        np.testing.assert_allclose(out.r, E @ s.r + J @ dr, atol=1e-6)

    def test_left_degenerate(self):
        s = NavStateI(np.eye(3), np.array([1.0, 2.0, 3.0]), np.zeros(3))
        out = kf.retract_left(s, np.r_[0, 0, 0, 0.5, -0.5, 1.0, 0, 0, 0])
        np.testing.assert_allclose(out.v, [1.5, 1.5, 4.0])

    def test_right_degenerate(self, rng):
        s = em.random_nav_scenario(rng)[0]
        out = kf.retract_right(s, np.r_[0, 0, 0, 0.5, -0.5, 1.0, 0, 0, 0])
        np.testing.assert_allclose(out.v, s.v + [0.5, -0.5, 1.0], atol=1e-12)

    def test_so3_velocity_only(self, rng):
        s = em.random_nav_scenario(rng)[0]
        out = kf.retract_so3(s, np.r_[0, 0, 0, 1.0, 0, 0, 0, 0, 0], "rso")
        np.testing.assert_array_equal(out.C, s.C)
        np.testing.assert_array_equal(out.r, s.r)
        np.testing.assert_allclose(out.v, s.v - [1.0, 0, 0])
        with pytest.raises(ValueError):
            kf.retract_so3(s, np.zeros(9), "rse")


class TestSchedule:
    def aiding(self, t):
        t = np.asarray(t, float)
        z = np.zeros_like(t)
        return AidingData(t, z + 0.6, z + 1.9, z, np.zeros((t.size, 3)))

    def test_nearest_sample(self):
        imu_t = np.arange(0, 5.001, 0.01)
        idx, keep, warn = kf.measurement_schedule(imu_t, self.aiding([0.0, 1.004, 2.0, 2.996]), 1.0, 2.5)
        np.testing.assert_array_equal(idx, [100, 200, 300])
        np.testing.assert_array_equal(keep, [1, 2, 3])
        assert warn == []

    def test_gaps_and_outside(self):
        imu_t = np.arange(0, 10.001, 0.01)
        idx, keep, warn = kf.measurement_schedule(imu_t, self.aiding([1.0, 2.0, 7.0, 8.0, 12.0]), 1.0, 2.5)
        assert len(idx) == 4
        assert any("outside" in w for w in warn)
        assert any("gap" in w for w in warn)

    def test_rate_decimation(self):
        imu_t = np.arange(0, 3.001, 0.01)
        idx, _, _ = kf.measurement_schedule(imu_t, self.aiding(np.arange(0.1, 3.0, 0.1)), 1.0, 2.5)
        np.testing.assert_array_equal(idx, [10, 110, 210])

    def test_aiding_validation(self):
        with pytest.raises(ValueError, match="strictly increasing at sample 2"):
            self.aiding([0.0, 1.0, 1.0])
        with pytest.raises(ValueError, match="shape"):
            AidingData([0.0], [0.0], [0.0], [0.0], np.zeros((1, 2)))
        with pytest.raises(ValueError, match="latitude"):
            AidingData([0.0], [2.0], [0.0], [0.0], np.zeros((1, 3)))


class TestFilterConfig:
    def test_p0_layout(self):
        cfg = FilterConfig(gyro_noise=1e-6, accel_noise=1e-5, p0_att=np.array([[0.1, 0.2, 0.3], [1.0, 1.0, 1.0]]))
        P = cfg.p0(2)
        np.testing.assert_allclose(np.diag(P[0])[:3], [0.01, 0.04, 0.09])
        np.testing.assert_allclose(np.diag(P[1])[3:6], 0.01)

    @pytest.mark.parametrize("field, value", [("r_vel", 0.0), ("gyro_noise", -1.0), ("p0_att", 0.0), ("reortho_every", 0)])
    def test_validation(self, field, value):
        kw = dict(gyro_noise=1e-6, accel_noise=1e-5)
        kw[field] = value
        with pytest.raises(ValueError, match=field):
            FilterConfig(**kw)


class TestAlignRun:
    @pytest.mark.parametrize("kind", KINDS)
    def test_exact_start_stays_exact(self, kind):
        cfg = quiet_config()
        mis, imu, aiding = sim.draw_trials(cfg, 1)
        run = kf.align_run(imu, aiding, kind, cfg.filter_config(p0_att=np.radians(1.0)), sim.initial_guess(cfg, mis))
        err = sim.attitude_error(cfg.c_b_n, run.c_b_n)
        assert np.abs(err).max() < 1e-4
        assert run.c_b_n.shape == (1, 60, 3, 3)
        np.testing.assert_array_equal(run.filter.dx[:, :9], 0.0)

    def test_covariance_stays_symmetric_psd(self):
        cfg = replace(sim.SimConfig(duration=60.0), misalignment=sim.MisalignmentSpec("fixed", (30.0, -20.0, 120.0)))
        mis, imu, aiding = sim.draw_trials(cfg, 1)
        run = kf.align_run(imu, aiding, "lse", cfg.filter_config(p0_att=sim.p0_attitude(mis)), sim.initial_guess(cfg, mis))
        P = run.filter.P[0]
        assert np.abs(P - P.T).max() <= 1e-12
        assert np.linalg.eigvalsh(P).min() >= -1e-10 * np.trace(P)
        assert np.all(run.p_att > 0)

    def test_batched_matches_single(self):
        cfg = replace(sim.SimConfig(duration=20.0), misalignment=sim.MisalignmentSpec("uniform"))
        mis, imu, aiding = sim.draw_trials(cfg, 3)
        fcfg = cfg.filter_config(p0_att=sim.p0_attitude(mis))
        many = kf.align_run(imu, aiding, "rse", fcfg, sim.initial_guess(cfg, mis))
        from se23align.strapdown import ImuData

        one = kf.align_run(
            ImuData(imu.t, imu.gyro[1], imu.accel[1]), aiding, "rse",
            cfg.filter_config(p0_att=sim.p0_attitude(mis[1])), sim.initial_guess(cfg, mis[1]),
        )
        np.testing.assert_allclose(many.c_b_n[1], one.c_b_n[0], atol=1e-12)

    def test_aiding_gap_warns_and_predicts(self):
        cfg = quiet_config(duration=30.0)
        mis, imu, aiding = sim.draw_trials(cfg, 1)
        keep = (aiding.t < 10.0) | (aiding.t > 20.0)
        holed = AidingData(aiding.t[keep], aiding.lat[keep], aiding.lon[keep], aiding.h[keep], aiding.vel[keep])
        run = kf.align_run(imu, holed, "lse", cfg.filter_config(), sim.initial_guess(cfg, mis))
        assert any("gap" in w for w in run.warnings)
        assert run.t.size == keep.sum() - 1

    def test_lse_transformed_h_identical_across_trials(self):
        cfg = replace(sim.SimConfig(duration=5.0), misalignment=sim.MisalignmentSpec("uniform"))
        mis, imu, _ = sim.draw_trials(cfg, 2)
        guesses = sim.initial_guess(cfg, mis)
        gyro, accel = imu.gyro[0, 0], imu.accel[0, 0]
        states = [NavStateI(g, np.array([1.0, 2, 3]) * k, np.array([6e6, 1, 2]) * k) for k, g in enumerate(guesses, 1)]
        ms = [em.build_lse(s, gyro, accel, transformed=True) for s in states]
        for a in ("F", "G", "H"):
            assert np.array_equal(getattr(ms[0], a), getattr(ms[1], a))

    def test_no_compensation_variant_runs(self):
        cfg = quiet_config(duration=20.0)
        mis, imu, aiding = sim.draw_trials(cfg, 1)
        run = kf.align_run(imu, aiding, "lse", cfg.filter_config(compensate=False), sim.initial_guess(cfg, mis))
        assert np.abs(sim.attitude_error(cfg.c_b_n, run.c_b_n)).max() < 1e-4
