"""Plain-array signal primitives: convolution, resampling and a unitary DFT pair.

All functions accept 1-D arrays or batches whose last axis is the time axis.
"""

import numpy as np


def _check_nonempty(x, name):
    if x.ndim == 0 or x.shape[-1] == 0:
        raise ValueError(f"{name} must be non-empty")


def convolve(x, h):
    """Full linear convolution along the last axis.

    Args:
        x: signal, shape ``(..., n)``, real or complex.
        h: 1-D real kernel of length ``m``.

    Returns:
        Array of shape ``(..., n + m - 1)``.
    """
    x = np.asarray(x)
    h = np.asarray(h)
    _check_nonempty(x, "x")
    _check_nonempty(h, "h")
    if h.ndim != 1:
        raise ValueError("kernel must be 1-D")
    if x.ndim == 1:
        if np.iscomplexobj(x):
            return np.convolve(x.real, h) + 1j * np.convolve(x.imag, h)
        return np.convolve(x, h)
    flat = x.reshape(-1, x.shape[-1])
    out = np.stack([convolve(row, h) for row in flat])
    return out.reshape(x.shape[:-1] + (out.shape[-1],))


def correlate_valid(y, h):
    """``out[k] = sum_n y[n] h[n-k]`` for k in range(len(y) - len(h) + 1).

    This is the adjoint of :func:`convolve` with respect to its signal input.
    """
    y = np.asarray(y)
    h = np.asarray(h)
    if y.ndim == 1:
        if np.iscomplexobj(y):
            return np.correlate(y.real, h, "valid") + 1j * np.correlate(y.imag, h, "valid")
        return np.correlate(y, h, "valid")
    flat = y.reshape(-1, y.shape[-1])
    out = np.stack([correlate_valid(row, h) for row in flat])
    return out.reshape(y.shape[:-1] + (out.shape[-1],))


def upsample(x, m):
    """Zero-stuff by ``m``: output index ``k*m`` holds ``x[k]``."""
    if int(m) != m or m < 1:
        raise ValueError(f"upsampling factor must be a positive integer, got {m}")
    x = np.asarray(x)
    _check_nonempty(x, "x")
    out = np.zeros(x.shape[:-1] + (x.shape[-1] * m,), dtype=x.dtype)
    out[..., ::m] = x
    return out


def downsample(x, m, offset=0, count=None):
    """Pick ``x[offset + k*m]``; ``count`` limits the number of outputs."""
    if int(m) != m or m < 1:
        raise ValueError(f"downsampling factor must be a positive integer, got {m}")
    x = np.asarray(x)
    n = x.shape[-1]
    if offset < 0 or offset >= n:
        raise ValueError(f"offset {offset} out of range for length {n}")
    out = x[..., offset::m]
    if count is not None:
        if count > out.shape[-1]:
            raise ValueError(f"only {out.shape[-1]} samples available, {count} requested")
        out = out[..., :count]
    return out


def dft(x):
    """Unitary DFT (scaled by 1/sqrt(N)) along the last axis."""
    x = np.asarray(x)
    _check_nonempty(x, "x")
    return np.fft.fft(x, norm="ortho")


def idft(x):
    """Inverse of :func:`dft`."""
    x = np.asarray(x)
    _check_nonempty(x, "x")
    return np.fft.ifft(x, norm="ortho")
