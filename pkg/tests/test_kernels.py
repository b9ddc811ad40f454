"""The jitted and numpy kernel paths must agree on every kernel."""

import numpy as np
import pytest
from scipy.special import logsumexp

import deltaplan.kernels as K
from conftest import rng_of


def test_active_path_reports():
    assert K.active_path() in ("numba", "numpy")


def test_diag_gauss_logpdf_matches_closed_form():
    rng = rng_of(1)
    diffs = rng.normal(size=(64, 2))
    var = 0.17
    got = np.asarray(K.diag_gauss_logpdf(diffs, var))
    expect = -0.5 * (diffs**2).sum(axis=1) / var - np.log(2 * np.pi * var)
    np.testing.assert_allclose(got, expect, rtol=0, atol=1e-12)


def test_gmm_logpdf_matches_scipy_logsumexp():
    rng = rng_of(2)
    diffs = rng.normal(size=(40, 2)) * 3
    offsets = rng.normal(size=(25, 2))
    w = rng.random(25)
    w /= w.sum()
    var = 0.05
    got = np.asarray(K.shared_cov_gmm_logpdf(diffs, offsets, np.log(w), var))
    comps = (
        np.log(w)[None, :]
        - 0.5 * ((diffs[:, None, :] - offsets[None, :, :]) ** 2).sum(axis=2) / var
        - np.log(2 * np.pi * var)
    )
    np.testing.assert_allclose(got, logsumexp(comps, axis=1), rtol=0, atol=1e-10)


def test_gmm_logpdf_far_from_support_stays_finite():
    diffs = np.full((3, 2), 200.0)
    offsets = np.zeros((4, 2))
    lw = np.log(np.full(4, 0.25))
    out = np.asarray(K.shared_cov_gmm_logpdf(diffs, offsets, lw, 0.01))
    assert np.all(np.isfinite(out))


@pytest.mark.skipif(not K.NUMBA_ACTIVE, reason="numba path disabled")
class TestPathsAgree:
    def test_diag_gauss(self):
        rng = rng_of(3)
        diffs = rng.normal(size=(128, 2))
        np.testing.assert_allclose(
            np.asarray(K.diag_gauss_logpdf(diffs, 0.3)),
            K.diag_gauss_logpdf_np(diffs, 0.3),
            atol=1e-12,
        )

    def test_gmm(self):
        rng = rng_of(4)
        diffs = rng.normal(size=(50, 2))
        offsets = rng.normal(size=(30, 2)) * 0.3
        w = rng.random(30)
        lw = np.log(w / w.sum())
        np.testing.assert_allclose(
            np.asarray(K.shared_cov_gmm_logpdf(diffs, offsets, lw, 0.02)),
            K.shared_cov_gmm_logpdf_np(diffs, offsets, lw, 0.02),
            atol=1e-10,
        )

    def test_min_sq_dist(self):
        rng = rng_of(5)
        pts = rng.normal(size=(200, 2)) * 5
        centers = rng.normal(size=(6, 2))
        np.testing.assert_allclose(
            np.asarray(K.min_sq_dist(pts, centers)),
            K.min_sq_dist_np(pts, centers),
            atol=1e-12,
        )

    def test_bound_sums(self):
        rng = rng_of(6)
        delta_xy = rng.random((100, 2)) * 10
        delta_val = rng.random(100) * 0.1
        center = np.array([5.0, 5.0])
        args = (delta_xy, delta_val, center, 1.2, 0.0225, 1.0 / 152)
        assert K.bound_increment_sum(*args) == pytest.approx(
            K.bound_increment_sum_np(*args), rel=1e-12
        )
        particles = rng.random((30, 2)) * 10
        shift = np.array([1.0, 0.0])
        args_b = (particles, shift, delta_xy, delta_val, 1.2, 0.0225, 1.0 / 152)
        assert K.bound_belief_sum(*args_b) == pytest.approx(
            K.bound_belief_sum_np(*args_b), rel=1e-12
        )

    def test_rollout_paths_agree_on_shared_noise(self):
        from deltaplan.beacons import BeaconsConfig

        c = BeaconsConfig()
        rng = rng_of(7)
        states = rng.normal(size=(60, 2)) * 0.3 + np.array([5.0, 2.0])
        weights = np.full(60, 1.0 / 60)
        steps = c.horizon
        normals = rng.normal(size=(steps, 60, 2))
        choice_u = rng.random((steps, 8))
        delta_xy = rng.random((40, 2)) * np.array([14.0, 8.0]) + np.array([-2.0, -1.5])
        delta_val = rng.random(40) * 0.1
        v_max = np.linspace(115, 100, c.horizon + 1)
        args = (
            states, weights, 0, c.horizon, c.gamma,
            np.array([[0.0, 1.0], [0.0, -1.0], [1.0, 0.0], [-1.0, 0.0]]),
            c.sigma_t,
            np.asarray(c.arena), np.asarray(c.goal), c.goal_center(),
            c.r_hit, c.r_collide, c.r_miss_step, c.r_miss_last,
            normals, True, v_max, 512, delta_xy, delta_val, 0.6, 1.0 / 152.0,
            choice_u,
        )
        ret_nb, bound_nb = K.beacons_rollout(*args)
        ret_np, bound_np = K.beacons_rollout_np(*args)
        assert ret_nb == pytest.approx(ret_np, abs=1e-9)
        assert bound_nb == pytest.approx(bound_np, abs=1e-12)
