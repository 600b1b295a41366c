import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from hypothesis.extra.numpy import arrays

from scwave import metrics
from scwave.numerics.autodiff import Tensor
from scwave.waveform import FrameConfig, init_qam, rrc_taps

from conftest import central_diff


# ==========================================================================
# PAPR
# ==========================================================================


class TestPaprPenalty:
    def test_huge_target(self, rng):
        assert metrics.papr_penalty(rng.exponential(size=1000), 1e9) == 0.0

    def test_constant_envelope(self):
        # the sample mean of repeated 3.7 differs from 3.7 in the last ulp
        assert metrics.papr_penalty(np.full(50, 3.7), 1.0) == pytest.approx(0.0, abs=1e-12)
        assert metrics.papr_penalty(np.full(50, 4.0), 1.0) == 0.0

    def test_two_samples(self):
        assert metrics.papr_penalty(np.array([1.0, 3.0]), 1.0) == pytest.approx(0.25)

    def test_empty(self):
        with pytest.raises(ValueError):
            metrics.papr_penalty(np.array([]), 1.0)

    def test_nonpositive_target(self):
        with pytest.raises(ValueError):
            metrics.papr_penalty(np.ones(3), 0.0)

    def test_zero_iff_no_exceedance(self, rng):
        p = rng.exponential(size=500)
        eps = np.max(p / p.mean())
        assert metrics.papr_penalty(p, eps) == 0.0
        assert metrics.papr_penalty(p, eps * 0.99) > 0.0

    def test_gradient(self, rng):
        p = rng.exponential(size=20)

        def value():
            return metrics.papr_penalty(p, 1.2)

        t = Tensor(p.copy(), requires_grad=True)
        metrics.papr_penalty(t, 1.2).backward()
        for i in range(p.size):
            assert t.grad[i] == pytest.approx(central_diff(value, p, i), rel=1e-5, abs=1e-9)


class TestCcdf:
    def test_equal_samples_step(self):
        curve = metrics.papr_ccdf(np.full(100, 2.0), nu_db=[-0.1, 0.0, 0.1])
        np.testing.assert_array_equal(curve.ccdf, [1.0, 0.0, 0.0])

    @settings(max_examples=30, deadline=None)
    @given(arrays(np.float64, st.integers(1, 200), elements=st.floats(1e-3, 1e3)))
    def test_monotone(self, p):
        c = metrics.papr_ccdf(p).ccdf
        assert np.all(np.diff(c) <= 0)
        assert c[0] <= 1.0

    def test_papr_at_extremes(self):
        p = np.array([1.0, 1.0, 1.0, 5.0])
        assert metrics.papr_at(p, 0.0) == pytest.approx(metrics.db(5 / 2))
        assert metrics.papr_at(p, 0.25) == pytest.approx(metrics.db(1 / 2))

    @pytest.mark.parametrize("delta", [-0.1, 1.0])
    def test_bad_level(self, delta):
        with pytest.raises(ValueError):
            metrics.papr_at(np.ones(4), delta)

    def test_qam64_rrc_independent_resimulation(self):
        # the library pipeline vs a straightforward numpy chain fed by another RNG
        from scwave.system import SystemConfig, frozen_tensors, param_groups
        from scwave.link import transmit_power
        from scwave.waveform import init_rrc

        frame = FrameConfig(k=6, n=1024, q=8, n_p=4, n_r=1, n_cp=72)
        cfg = SystemConfig(frame=frame)
        g = init_rrc(0.3, 32, 4).taps
        t = frozen_tensors(param_groups(init_qam(6), g, g))
        lib = metrics.papr_at(transmit_power(cfg, t, 2_000_000, seed=3), 1e-3)

        rng = np.random.default_rng(987)
        pts = init_qam(6).points
        powers = []
        for _ in range(500):
            sym = pts[rng.integers(0, 64, 1024)]
            x = np.zeros(4096, complex)
            x[::4] = sym
            y = np.convolve(x, g)
            powers.append(np.abs(y[64:64 + 4096]) ** 2)
        ref = metrics.papr_at(np.concatenate(powers), 1e-3)
        assert lib == pytest.approx(ref, abs=0.15)


# ==========================================================================
# ACLR
# ==========================================================================


class TestAclr:
    def test_diagonal_entry(self):
        form = metrics.stopband_matrix(5, 0.3, 4)
        assert form.phi[0, 0] == pytest.approx(1 - 1.3 / 4)
        assert 1 - 1.3 / 4 == pytest.approx(0.675)

    def test_symmetric_psd_matrix(self):
        phi = metrics.stopband_matrix(40, 0.3, 4).phi
        np.testing.assert_allclose(phi, phi.T)
        eig = np.linalg.eigvalsh(phi)
        assert eig.min() > -1e-10 and eig.max() < 1 + 1e-10

    @pytest.mark.parametrize("seed", range(5))
    def test_quadratic_form_vs_spectrum(self, seed):
        rng = np.random.default_rng(seed)
        g = rrc_taps(0.3, 8, 4) + 0.05 * rng.normal(size=33)
        g /= np.linalg.norm(g)
        form = metrics.stopband_matrix(g.size, 0.3, 4)
        assert metrics.aclr_beta(g, form) == pytest.approx(metrics.aclr_spectrum(g, 0.3, 4), abs=0.2)

    def test_tensor_path(self):
        g = rrc_taps(0.3, 8, 4)
        form = metrics.stopband_matrix(g.size, 0.3, 4)
        assert metrics.aclr_beta(Tensor(g), form).item() == pytest.approx(metrics.aclr_beta(g, form))

    def test_not_unit_energy(self):
        g = 2.0 * (-1.0) ** np.arange(33)  # energy far from one, all of it out of band
        with pytest.raises(ValueError, match="unit-energy"):
            metrics.aclr_linear(g, metrics.stopband_matrix(g.size, 0.3, 4))

    def test_gradient(self, rng):
        g = rng.normal(size=9)
        g /= np.linalg.norm(g)
        form = metrics.stopband_matrix(9, 0.3, 2)

        def value():
            return metrics.aclr_beta(g, form)

        t = Tensor(g.copy(), requires_grad=True)
        metrics.aclr_beta(t, form).backward()
        for i in range(g.size):
            assert t.grad[i] == pytest.approx(central_diff(value, g, i), rel=1e-5)


# ==========================================================================
# Occupied bandwidth
# ==========================================================================


class TestObw:
    def test_brickwall(self, rng):
        n = 1 << 18
        spec = rng.normal(size=n) + 1j * rng.normal(size=n)
        f = np.fft.fftfreq(n)
        spec[np.abs(f) > 0.2] = 0
        x = np.fft.ifft(spec)
        assert metrics.obw_signal(x, 1) == pytest.approx(0.4, abs=2e-3)

    def test_rrc_bounds(self):
        obw = metrics.obw_filter(rrc_taps(0.3, 32, 4), 4)
        assert 1.0 < obw < 1.3

    def test_signal_matches_filter(self, rng):
        g = rrc_taps(0.3, 32, 4)
        x = np.zeros(4 * 50_000, complex)
        x[::4] = np.exp(2j * np.pi * rng.random(50_000))
        assert metrics.obw_signal(np.convolve(x, g), 4) == pytest.approx(metrics.obw_filter(g, 4), abs=0.01)


# ==========================================================================
# BCE and rates
# ==========================================================================


class TestBce:
    def test_zero_logits(self, rng):
        bits = rng.integers(0, 2, size=(50, 4))
        assert metrics.bce_loss(bits, np.zeros((50, 4))) == pytest.approx(4.0)

    def test_confident_correct(self, rng):
        bits = rng.integers(0, 2, size=(50, 4))
        assert metrics.bce_loss(bits, np.where(bits == 1, 30.0, -30.0)) < 1e-8

    def test_single_bit(self):
        # -log2(sigmoid(1)) = log2(1 + e^-1) = 0.45194
        assert metrics.bce_loss(np.array([[1]]), np.array([[1.0]])) == pytest.approx(
            -math.log2(1 / (1 + math.exp(-1))), rel=1e-14)

    def test_monotone_in_confidence(self, rng):
        bits = rng.integers(0, 2, size=(20, 3))
        sign = np.where(bits == 1, 1.0, -1.0)
        losses = [metrics.bce_loss(bits, a * sign) for a in (0.0, 0.5, 1.0, 4.0, 10.0)]
        assert all(x > y for x, y in zip(losses, losses[1:]))

    def test_no_overflow(self):
        assert np.isfinite(metrics.bce_loss(np.array([[0]]), np.array([[1e4]])))

    def test_shape_mismatch(self):
        with pytest.raises(ValueError):
            metrics.bce_loss(np.zeros((2, 3)), np.zeros((3, 2)))


class TestRates:
    def test_rpn_overhead(self):
        base = FrameConfig(k=4, n=4096, q=32, n_p=4, n_r=0, n_cp=288)
        more = FrameConfig(k=4, n=4096, q=32, n_p=4, n_r=4, n_cp=288)
        drop = metrics.data_rate_factor(base) - metrics.data_rate_factor(more)
        assert drop == pytest.approx(4 * 32 * 4 / 4096)

    def test_spectral_efficiency(self):
        cfg = FrameConfig(k=2, n=64, q=0, n_p=0, n_r=0, n_cp=0)
        assert metrics.spectral_efficiency(0.0, cfg, 1.3) == pytest.approx(2 / 1.3)
        assert metrics.spectral_efficiency(1.0, cfg, 1.3) == 0.0

    def test_db_round_trip(self):
        assert metrics.db(metrics.undb(-53.52)) == pytest.approx(-53.52)
