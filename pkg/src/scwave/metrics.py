"""PAPR, ACLR, occupied bandwidth, BCE and link-level figures of merit."""

from dataclasses import dataclass
import math

import numpy as np
from scipy import signal

from .numerics import autodiff as ad
from .numerics.autodiff import Tensor

LN2 = math.log(2.0)


def db(x):
    return 10.0 * np.log10(x)


def undb(x):
    return 10.0 ** (np.asarray(x, dtype=np.float64) / 10.0)


# ----------------------------------------------------------------------- PAPR


def papr_penalty(power, eps_p):
    """Mean exceedance ``E[max(p / E[p] - eps_p, 0)]`` of normalized power.

    ``power`` holds instantaneous powers ``|s|^2``; the normalization uses the
    mean of the same samples.  Tensor in, tensor out.
    """
    if eps_p <= 0:
        raise ValueError("PAPR target must be positive (linear)")
    tensor_in = isinstance(power, Tensor)
    p = power if tensor_in else Tensor(np.asarray(power, dtype=np.float64))
    if p.data.size == 0:
        raise ValueError("no power samples")
    norm = p / p.mean()
    out = ad.relu(norm - eps_p).mean()
    return out if tensor_in else float(out.data)


@dataclass(frozen=True)
class CcdfCurve:
    nu_db: np.ndarray
    ccdf: np.ndarray
    n_samples: int


def normalized_power(power):
    p = np.asarray(power, dtype=np.float64).ravel()
    if p.size == 0:
        raise ValueError("no power samples")
    return p / p.mean()


def papr_ccdf(power, nu_db=None):
    """Empirical ``Pr(p / E[p] > nu)`` on a dB grid."""
    x = np.sort(normalized_power(power))
    if nu_db is None:
        nu_db = np.arange(0.0, 12.0 + 1e-9, 0.05)
    nu_db = np.asarray(nu_db, dtype=np.float64)
    above = x.size - np.searchsorted(x, undb(nu_db), side="right")
    return CcdfCurve(nu_db, above / x.size, x.size)


def papr_at(power, delta_p):
    """Smallest threshold (dB) whose exceedance probability is at most ``delta_p``.

    ``delta_p = 0`` gives the peak-to-mean ratio.
    """
    if not 0 <= delta_p < 1:
        raise ValueError("CCDF level must be in [0, 1)")
    x = np.sort(normalized_power(power))
    allowed = int(math.floor(delta_p * x.size))
    return float(db(x[x.size - 1 - allowed]))


# ----------------------------------------------------------------------- ACLR


@dataclass(frozen=True)
class StopbandForm:
    phi: np.ndarray
    beta: float
    m: int


def stopband_matrix(length, beta, m):
    """Quadratic form giving a unit-energy filter's energy outside ``(1+beta)/M``."""
    a = (1.0 + beta) / m
    diff = np.subtract.outer(np.arange(length), np.arange(length))
    phi = -a * np.sinc(a * diff)
    np.fill_diagonal(phi, 1.0 - a)
    return StopbandForm(phi, beta, m)


def stopband_energy(g, form: StopbandForm):
    if isinstance(g, Tensor):
        return ad.tsum(g * ad.matmul(Tensor(form.phi), g))
    g = np.asarray(g, dtype=np.float64)
    return float(g @ form.phi @ g)


def aclr_linear(g, form: StopbandForm):
    xi = stopband_energy(g, form)
    if isinstance(g, Tensor):
        return xi / (1.0 - xi)
    if not 0 <= xi < 1:
        raise ValueError(f"stop-band energy {xi} outside [0, 1); is the filter unit-energy?")
    return xi / (1.0 - xi)


def aclr_beta(g, form: StopbandForm):
    """Leakage outside the ``1+beta`` band relative to inside, in dB."""
    if isinstance(g, Tensor):
        return ad.log(aclr_linear(g, form)) * (10.0 / math.log(10.0))
    return float(db(aclr_linear(g, form)))


def aclr_spectrum(g, beta, m, nfft=1 << 16):
    """Independent check: integrate ``|G(f)|^2`` on a dense grid."""
    g = np.asarray(g, dtype=np.float64)
    spec = np.abs(np.fft.fft(g, nfft)) ** 2
    f = np.abs(np.fft.fftfreq(nfft))
    inside = f <= (1.0 + beta) / (2.0 * m)
    xi_i = spec[inside].sum()
    xi_s = spec[~inside].sum()
    return float(db(xi_s / xi_i))


# ------------------------------------------------------------------------ OBW


def _symmetric_band(freqs, psd, fraction):
    order = np.argsort(np.abs(freqs), kind="stable")
    cum = np.cumsum(psd[order]) / psd.sum()
    cut = np.abs(freqs[order][np.searchsorted(cum, fraction)])
    return 2.0 * cut


def obw_filter(g, m, fraction=0.999, nfft=1 << 16):
    """Occupied bandwidth of a filter's energy spectrum, in units of symbol rate."""
    g = np.asarray(g, dtype=np.float64)
    spec = np.abs(np.fft.fft(g, nfft)) ** 2
    return _symmetric_band(np.fft.fftfreq(nfft), spec, fraction) * m


def obw_signal(x, m, fraction=0.999, nperseg=4096):
    """Occupied bandwidth of an oversampled signal (Welch, Hann, 50% overlap)."""
    x = np.asarray(x).ravel()
    nperseg = min(nperseg, x.size)
    freqs, psd = signal.welch(x, fs=1.0, window="hann", nperseg=nperseg,
                              noverlap=nperseg // 2, return_onesided=False, detrend=False)
    return _symmetric_band(freqs, psd, fraction) * m


# ------------------------------------------------------------------------ BCE


def bce_loss(bits, llrs):
    """Total BCE in bits per symbol: sum over the K bits, mean over symbols.

    ``bits`` and ``llrs`` have shape ``(..., K)``; logits use the
    ``log P(1)/P(0)`` convention.
    """
    bits = np.asarray(bits)
    tensor_in = isinstance(llrs, Tensor)
    l = llrs if tensor_in else Tensor(np.asarray(llrs, dtype=np.float64))
    if bits.shape != l.shape:
        raise ValueError(f"bits {bits.shape} and LLRs {l.shape} differ in shape")
    sign = np.where(bits > 0, -1.0, 1.0)
    per_bit = ad.softplus(l * sign) * (1.0 / LN2)
    n_sym = per_bit.data.size // bits.shape[-1]
    out = per_bit.sum() * (1.0 / n_sym)
    return out if tensor_in else float(out.data)


# ----------------------------------------------------------------- link rates


def data_rate_factor(cfg, r=1.0):
    """Information bits per transmitted symbol, ``r K N_D / N``."""
    return r * cfg.k * cfg.n_d / cfg.n


def spectral_efficiency(bler, cfg, obw_norm, r=1.0):
    """``(1 - BLER) R / BW_eff`` with the symbol rate as the bandwidth unit."""
    return (1.0 - bler) * data_rate_factor(cfg, r) / obw_norm
