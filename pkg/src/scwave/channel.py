"""Oversampled impairment chain and receiver-side phase-noise processing."""

from dataclasses import dataclass, field
import warnings

import numpy as np

from .numerics import autodiff as ad, buffers
from .numerics.autodiff import CTensor
from .waveform import FrameConfig, FrameLayout, pilot_symbols


def noise_variance(ebn0_db, r, bits_per_symbol, n, q, n_p, n_cp):
    """Per-sample complex AWGN variance for a given Eb/N0.

    ``1 / (Eb/N0 * r * bits_per_symbol * (n - q*n_p) / (n + n_cp))`` where
    ``n`` is the block length without cyclic prefix, so the last factor is the
    fraction of transmitted symbols carrying data.
    """
    if not np.isfinite(ebn0_db):
        raise ValueError("Eb/N0 must be finite")
    denom = 10.0 ** (ebn0_db / 10.0) * r * bits_per_symbol * (n - q * n_p) / (n + n_cp)
    if denom <= 0:
        raise ValueError("noise-variance denominator must be positive")
    return 1.0 / denom


def frame_noise_variance(ebn0_db, cfg: FrameConfig, r=1.0):
    """:func:`noise_variance` for a frame; residual-PN pilots count as overhead."""
    return noise_variance(ebn0_db, r, cfg.k, cfg.n_body, cfg.q, cfg.group_len, cfg.n_cp)


@dataclass
class ChannelRealization:
    """Phases (radians) and AWGN for one or more frames at the oversampled rate."""

    pn_tx: np.ndarray
    pn_rx: np.ndarray
    noise: np.ndarray
    sigma2: np.ndarray | float

    @property
    def total_phase(self):
        return self.pn_tx + self.pn_rx


def draw_noise(shape, sigma2, rng):
    """Circular complex Gaussian with variance ``sigma2`` (broadcast per row)."""
    scale = np.sqrt(np.asarray(sigma2, dtype=np.float64) / 2.0)
    if scale.ndim:
        scale = scale.reshape(scale.shape + (1,) * (len(shape) - scale.ndim))
    return scale * (rng.standard_normal(shape) + 1j * rng.standard_normal(shape))


def apply_impairments(s_hat, real: ChannelRealization):
    """``s_hat * exp(j(theta_tx + theta_rx)) + w``; numpy or :class:`CTensor` input."""
    theta = real.total_phase
    if theta.shape != tuple(s_hat.shape) or real.noise.shape != tuple(s_hat.shape):
        raise ValueError(
            f"impairment length mismatch: signal {tuple(s_hat.shape)}, phase {theta.shape}"
        )
    rot = np.exp(1j * theta)
    if isinstance(s_hat, CTensor):
        return s_hat * rot + CTensor(real.noise)
    return np.asarray(s_hat) * rot + real.noise


def sampling_offset(tx_len, rx_len):
    return (tx_len - 1) // 2 + (rx_len - 1) // 2


def receive_chain(r_hat, g_rx, m, layout: FrameLayout, tx_len):
    """Matched filtering, symbol-rate sampling and CP removal.

    Returns the block body (length ``n - n_cp``) at symbol rate; use
    :func:`split_body` to separate data and pilots.
    """
    taps = g_rx.data if isinstance(g_rx, ad.Tensor) else np.asarray(g_rx)
    cfg = layout.cfg
    offset = sampling_offset(tx_len, taps.size)
    needed = offset + (cfg.n - 1) * m + 1
    if isinstance(r_hat, CTensor):
        if r_hat.shape[-1] + taps.size - 1 < needed:
            raise ValueError("received signal too short for the frame layout")
        y = r_hat.convolve(g_rx).downsample(m, offset, cfg.n)
        return y[..., cfg.n_cp:]
    y = buffers.convolve(np.asarray(r_hat), taps)
    if y.shape[-1] < needed:
        raise ValueError("received signal too short for the frame layout")
    return buffers.downsample(y, m, offset, cfg.n)[..., cfg.n_cp:]


def split_body(body, layout: FrameLayout):
    """``(data, ptrs, rpn)`` from body-coordinate symbols."""
    off = layout.cfg.n_cp
    return (
        body[..., layout.data - off],
        body[..., layout.ptrs - off],
        body[..., layout.rpn - off],
    )


def interpolation_matrix(centers, n):
    """``(Q, n)`` weights so that ``theta_bar @ W`` linearly interpolates
    between group centers with constant extrapolation at both ends."""
    q = len(centers)
    w = np.zeros((q, n))
    pos = np.arange(n)
    if q == 1:
        w[0] = 1.0
        return w
    for i in range(q):
        w[i] = np.interp(pos, centers, np.eye(q)[i])
    return w


@dataclass
class CompensationReport:
    theta_bar: np.ndarray
    track: np.ndarray
    residual: dict = field(default_factory=dict)


def ptrs_compensate(body, layout: FrameLayout):
    """Average-and-interpolate PTRS phase correction over the block body.

    ``body`` is ``(..., n_body)``, numpy or :class:`CTensor`; with a CTensor the
    correction stays differentiable (phase unwrapping offsets are constants).
    """
    cfg = layout.cfg
    if cfg.q == 0 or cfg.n_p == 0:
        warnings.warn("no PTRS groups; phase compensation skipped", RuntimeWarning, stacklevel=2)
        zeros = np.zeros(body.shape[:-1] + (cfg.n_body,))
        return body, CompensationReport(np.zeros(body.shape[:-1] + (0,)), zeros)
    p_tx, _ = pilot_symbols(layout)
    ref = np.conj(p_tx) / np.abs(p_tx) ** 2
    idx = layout.ptrs - cfg.n_cp
    w = interpolation_matrix(layout.ptrs_centers(), cfg.n_body)
    tensor_in = isinstance(body, CTensor)
    if not tensor_in:
        body = CTensor(np.asarray(body, dtype=np.complex128))
    avg = (body[..., idx] * ref).mean(axis=-1)
    theta = avg.angle()
    unwrap = np.unwrap(theta.data, axis=-1) - theta.data
    track = _interp_track(theta + unwrap, w)
    out = body * ad.phasor(-track)
    report = CompensationReport(theta.data.copy(), track.data.copy())
    return (out if tensor_in else out.numpy()), report


def _interp_track(theta_bar, w):
    # (..., Q) @ (Q, n) as a batched matmul with the constant on the right
    return ad.matmul(theta_bar.reshape(theta_bar.shape[:-1] + (1, theta_bar.shape[-1])), w).reshape(
        theta_bar.shape[:-1] + (w.shape[1],)
    )


def wrap_angle(x):
    """Map angles to (-pi, pi]."""
    y = np.mod(np.asarray(x) + np.pi, 2 * np.pi) - np.pi
    return np.where(y == -np.pi, np.pi, y)


def _check_pilots(u, v, es):
    if es <= 0:
        raise ValueError("E_s must be positive")
    u = np.asarray(u).ravel()
    v = np.asarray(v).ravel()
    if u.shape != v.shape or u.size < 2:
        raise ValueError("need at least 2 matched pilot pairs")
    return u, v


def estimate_residual_lpn(u, v, es=1.0):
    """Estimates ``(s_n^2, sigma_p^2)`` under the low-PN model.

    ``s_n^2`` is the noise variance per real dimension, i.e. half the circular
    variance used elsewhere in the chain; with that reading both estimates are
    unbiased to first order in the phase error.
    """
    u, v = _check_pilots(u, v, es)
    z = v * np.exp(-1j * np.angle(u))
    sn2 = float(np.mean((z.real - np.sqrt(es)) ** 2))
    sp2 = float(np.mean(z.imag**2) - sn2 / es)
    return sn2, max(sp2, 0.0)


def estimate_residual_hsnr(u, v, es=1.0):
    """Estimates ``(s_n^2, sigma_p^2)`` from magnitude and wrapped angle errors.

    Same per-dimension noise convention as :func:`estimate_residual_lpn`.
    """
    u, v = _check_pilots(u, v, es)
    sn2 = float(np.mean((np.abs(v) - np.sqrt(es)) ** 2))
    dphi = wrap_angle(np.angle(v) - np.angle(u))
    sp2 = float(np.mean(dphi**2) - sn2 / es)
    return sn2, max(sp2, 0.0)


RESIDUAL_ESTIMATORS = {"lpn": estimate_residual_lpn, "hsnr": estimate_residual_hsnr}


def residual_phase_variance(total_phase_sym, track):
    """Variance of the phase error left after compensation (ground truth)."""
    err = wrap_angle(np.asarray(total_phase_sym) - np.asarray(track))
    err = err - err.mean(axis=-1, keepdims=True)
    return np.mean(err**2, axis=-1)


def symbol_phases(total_phase, layout: FrameLayout, tx_len):
    """Phase at each body symbol's pulse peak in the oversampled Tx signal."""
    cfg = layout.cfg
    pos = (np.arange(cfg.n_cp, cfg.n)) * cfg.m + (tx_len - 1) // 2
    return np.asarray(total_phase)[..., pos]
