import warnings

import numpy as np
import pytest

from scwave.channel import (
    ChannelRealization, apply_impairments, draw_noise, estimate_residual_hsnr,
    estimate_residual_lpn, frame_noise_variance, interpolation_matrix, noise_variance,
    ptrs_compensate, receive_chain, residual_phase_variance, split_body, wrap_angle,
)
from scwave.numerics.autodiff import CTensor
from scwave.waveform import FrameConfig, assemble_frame, frame_layout, init_qam, pulse_shape, rrc_taps


def synthetic_pilots(n, sn2, sp2, seed):
    """Unit-modulus pilots with Gaussian phase error and per-dimension noise ``sn2``."""
    rng = np.random.default_rng(seed)
    u = np.exp(2j * np.pi * rng.random(n))
    theta = rng.normal(scale=np.sqrt(sp2), size=n)
    w = np.sqrt(sn2) * (rng.standard_normal(n) + 1j * rng.standard_normal(n))
    return u, u * np.exp(1j * theta) + w


# ==========================================================================
# Noise variance
# ==========================================================================


class TestNoiseVariance:
    def test_degenerate_unit(self):
        assert noise_variance(0.0, 1.0, 1, 64, 0, 0, 0) == 1.0

    def test_full_frame_value(self):
        expect = 1.0 / (10 * 4 * 3968 / 4384)
        assert noise_variance(10.0, 1.0, 4, 4096, 32, 4, 288) == pytest.approx(expect, rel=1e-12)
        assert expect == pytest.approx(2.762e-2, rel=1e-3)

    def test_nonpositive_denominator(self):
        with pytest.raises(ValueError):
            noise_variance(10.0, 0.0, 4, 4096, 32, 4, 288)

    def test_frame_counts_rpn_overhead(self):
        cfg = FrameConfig(k=4, n=4096, q=32, n_p=4, n_r=1, n_cp=288)
        direct = noise_variance(10.0, 1.0, 4, cfg.n_body, 32, 5, 288)
        assert frame_noise_variance(10.0, cfg) == pytest.approx(direct)


# ==========================================================================
# Impairments and receive chain
# ==========================================================================


class TestImpairments:
    def _real(self, n, phase, noise=None):
        return ChannelRealization(np.full(n, phase), np.zeros(n),
                                  np.zeros(n, complex) if noise is None else noise, 0.0)

    def test_identity(self, rng):
        s = rng.normal(size=20) + 1j * rng.normal(size=20)
        np.testing.assert_array_equal(apply_impairments(s, self._real(20, 0.0)), s)

    def test_constant_rotation(self, rng):
        s = rng.normal(size=20) + 1j * rng.normal(size=20)
        out = apply_impairments(s, self._real(20, np.pi / 4))
        np.testing.assert_allclose(np.angle(out / s), np.pi / 4, atol=1e-14)
        np.testing.assert_allclose(np.abs(out), np.abs(s), rtol=1e-14)

    def test_tensor_path(self, rng):
        s = rng.normal(size=8) + 1j * rng.normal(size=8)
        real = self._real(8, 0.3, draw_noise((8,), 0.1, rng))
        np.testing.assert_allclose(apply_impairments(CTensor(s), real).numpy(), apply_impairments(s, real))

    def test_length_mismatch(self):
        with pytest.raises(ValueError, match="length mismatch"):
            apply_impairments(np.zeros(5, complex), self._real(4, 0.0))

    def test_noise_variance_per_row(self):
        rng = np.random.default_rng(0)
        w = draw_noise((2, 200_000), np.array([0.5, 2.0]), rng)
        np.testing.assert_allclose(np.mean(np.abs(w) ** 2, axis=1), [0.5, 2.0], rtol=0.02)


class TestReceiveChain:
    def test_delta_filters_roundtrip(self, small_frame, rng):
        lay = frame_layout(small_frame)
        data = rng.normal(size=small_frame.n_d) + 1j * rng.normal(size=small_frame.n_d)
        frame, _ = assemble_frame(data, small_frame, lay)
        s = pulse_shape(frame, np.ones(1), small_frame.m)
        body = receive_chain(s, np.ones(1), small_frame.m, lay, tx_len=1)
        np.testing.assert_allclose(body, frame[small_frame.n_cp:])

    def test_rrc_loopback_low_isi(self, small_frame, rng):
        lay = frame_layout(small_frame)
        c = init_qam(small_frame.k)
        data = c.points[rng.integers(0, 4, small_frame.n_d)]
        frame, _ = assemble_frame(data, small_frame, lay)
        g = rrc_taps(0.3, 32, small_frame.m)
        body = receive_chain(pulse_shape(frame, g, small_frame.m), g, small_frame.m, lay, g.size)
        d, pt, rp = split_body(body, lay)
        # edge symbols see truncated neighbours; the interior is clean
        np.testing.assert_allclose(d[10:-10], data[10:-10], atol=5e-3)
        assert pt.shape == (small_frame.q, small_frame.n_p)
        assert rp.shape == (small_frame.q, small_frame.n_r)

    def test_too_short(self, small_frame):
        with pytest.raises(ValueError, match="too short"):
            receive_chain(np.zeros(10, complex), np.ones(1), 4, frame_layout(small_frame), 1)


# ==========================================================================
# PTRS compensation
# ==========================================================================


def body_of(cfg, rng):
    lay = frame_layout(cfg)
    data = np.exp(2j * np.pi * rng.random(cfg.n_d))
    frame, _ = assemble_frame(data, cfg, lay)
    return frame[cfg.n_cp:], lay


class TestPtrs:
    def test_constant_offset_removed(self, small_frame, rng):
        body, lay = body_of(small_frame, rng)
        out, rep = ptrs_compensate(body * np.exp(1j * np.pi / 8), lay)
        np.testing.assert_allclose(rep.theta_bar, np.pi / 8, atol=1e-12)
        assert np.max(np.abs(np.angle(out / body))) < 1e-9

    def test_identity_without_impairment(self, small_frame, rng):
        body, lay = body_of(small_frame, rng)
        out, rep = ptrs_compensate(body, lay)
        assert np.max(np.abs(rep.theta_bar)) < 1e-9
        np.testing.assert_allclose(out, body, atol=1e-12)

    def test_linear_ramp(self, rng):
        cfg = FrameConfig(k=2, n=512, q=8, n_p=1, n_r=0, n_cp=0)
        body, lay = body_of(cfg, rng)
        slope = 1e-3
        ramp = slope * np.arange(cfg.n_body)
        _, rep = ptrs_compensate(body * np.exp(1j * ramp), lay)
        centers = lay.ptrs_centers()
        np.testing.assert_allclose(rep.theta_bar, slope * centers, atol=1e-12)
        inside = (np.arange(cfg.n_body) >= centers[0]) & (np.arange(cfg.n_body) <= centers[-1])
        np.testing.assert_allclose(rep.track[inside], ramp[inside], atol=1e-12)
        # outside the outer centers the track is held constant
        gap = max(centers[0], cfg.n_body - 1 - centers[-1])
        assert np.max(np.abs(rep.track - ramp)) <= slope * gap + 1e-12

    def test_no_groups_warns(self, rng):
        cfg = FrameConfig(k=2, n=64, q=0, n_p=0, n_r=0, n_cp=0)
        body, lay = body_of(cfg, rng)
        with pytest.warns(RuntimeWarning, match="no PTRS"):
            out, _ = ptrs_compensate(body, lay)
        np.testing.assert_array_equal(out, body)

    def test_tensor_path(self, small_frame, rng):
        body, lay = body_of(small_frame, rng)
        rx = body * np.exp(1j * 0.2)
        out_np, _ = ptrs_compensate(rx, lay)
        out_t, _ = ptrs_compensate(CTensor(rx), lay)
        np.testing.assert_allclose(out_t.numpy(), out_np)

    def test_interpolation_rows_sum_to_one(self):
        w = interpolation_matrix(np.array([2.0, 10.0, 30.0]), 40)
        np.testing.assert_allclose(w.sum(axis=0), 1.0)
        assert np.all(w >= 0)


# ==========================================================================
# Residual estimators
# ==========================================================================


class TestEstimators:
    @pytest.mark.parametrize("est", [estimate_residual_lpn, estimate_residual_hsnr])
    def test_exact_pilots(self, est, rng):
        u = np.exp(2j * np.pi * rng.random(100))
        assert est(u, u) == pytest.approx((0.0, 0.0), abs=1e-20)

    @pytest.mark.parametrize("est", [estimate_residual_lpn, estimate_residual_hsnr])
    def test_synthetic_recovery(self, est):
        u, v = synthetic_pilots(100_000, 1e-3, 1e-2, seed=11)
        sn2, sp2 = est(u, v)
        assert sn2 == pytest.approx(1e-3, rel=0.1)
        assert sp2 == pytest.approx(1e-2, rel=0.1)

    @pytest.mark.parametrize("est", [estimate_residual_lpn, estimate_residual_hsnr])
    def test_pure_awgn(self, est):
        n, sn2 = 100_000, 1e-3
        u, v = synthetic_pilots(n, sn2, 0.0, seed=12)
        _, sp2 = est(u, v)
        # the squared quadrature noise has std sqrt(2) * sn2 per sample
        assert sp2 < 3 * np.sqrt(2) * sn2 / np.sqrt(n)

    def test_angle_wrap(self):
        u = np.exp(1j * (np.pi - 0.01)) * np.ones(2)
        v = np.exp(1j * (-np.pi + 0.01)) * np.ones(2)
        _, sp2 = estimate_residual_hsnr(u, v)
        assert sp2 == pytest.approx(0.02**2, rel=1e-9)
        assert wrap_angle(np.angle(v[0]) - np.angle(u[0])) == pytest.approx(0.02)

    @pytest.mark.parametrize("est", [estimate_residual_lpn, estimate_residual_hsnr])
    def test_bad_energy(self, est):
        with pytest.raises(ValueError):
            est(np.ones(4), np.ones(4), es=0.0)

    def test_mismatched_lengths(self):
        with pytest.raises(ValueError):
            estimate_residual_lpn(np.ones(4), np.ones(5))

    def test_truth_variance(self):
        err = np.array([[0.1, -0.1, 0.1, -0.1]])
        np.testing.assert_allclose(residual_phase_variance(err + 2.0, np.full((1, 4), 2.0)), [0.01])
