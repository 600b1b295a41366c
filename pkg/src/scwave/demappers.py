"""Soft demappers producing logits ``log P(b=1)/P(b=0)`` per bit.

Every demapper accepts numpy arrays or :class:`CTensor` inputs.  With numpy
inputs the result is a numpy array; with tensors it is a :class:`Tensor` that
stays on the gradient tape.
"""

from dataclasses import dataclass

import numpy as np

from .numerics import autodiff as ad
from .numerics.autodiff import CTensor, Tensor
from .waveform import label_partition

LLR_CLAMP = 30.0
DEMAPPERS = ("aod", "pnd-lpn", "pnd-hsnr", "nnd")


def _prep(r, points):
    tensor_out = isinstance(r, CTensor) or isinstance(points, CTensor)
    r = r if isinstance(r, CTensor) else CTensor(np.asarray(r, dtype=np.complex128))
    c = points if isinstance(points, CTensor) else CTensor(np.asarray(points, dtype=np.complex128))
    return r, c, tensor_out


def _bcast(v, ndim):
    """Per-frame scalars (shape (B,)) broadcast against (B, ..., 2**K) metrics."""
    v = np.asarray(v, dtype=np.float64)
    return v.reshape(v.shape + (1,) * (ndim - v.ndim)) if v.ndim else v


def _expand(r, c):
    """Pair every received symbol with every point: shapes (..., n, 1) x (2**K,)."""
    rr = CTensor(ad.reshape(r.re, r.shape + (1,)), ad.reshape(r.im, r.shape + (1,)))
    return rr, c


def llrs_from_metrics(metric: Tensor, k, clamp=LLR_CLAMP):
    """Bitwise log-sum-exp over label subsets of per-point log-likelihoods.

    ``metric`` has shape ``(..., 2**K)``; returns ``(..., K)``.
    """
    ones = label_partition(k)
    idx1 = np.array([np.flatnonzero(row) for row in ones])
    idx0 = np.array([np.flatnonzero(~row) for row in ones])
    l1 = ad.logsumexp(metric[..., idx1], axis=-1)
    l0 = ad.logsumexp(metric[..., idx0], axis=-1)
    llr = l1 - l0
    return llr if clamp is None else ad.clip(llr, -clamp, clamp)


def _finish(llr, tensor_out):
    return llr if tensor_out else llr.data


def aod_llrs(r, points, sigma2, clamp=LLR_CLAMP):
    """AWGN-optimal LLRs with Euclidean metric ``-|r - c|^2 / sigma2``."""
    if np.any(np.asarray(sigma2) <= 0):
        raise ValueError("noise variance must be positive")
    r, c, tensor_out = _prep(r, points)
    k = int(np.log2(c.shape[-1]))
    rr, c = _expand(r, c)
    d2 = (rr - c).abs2()
    metric = -d2 * (1.0 / _bcast(sigma2, d2.ndim))
    return _finish(llrs_from_metrics(metric, k, clamp), tensor_out)


def _unit_and_mag(c: CTensor):
    mag = c.abs()
    safe = np.where(mag.data == 0, 1.0, 0.0)
    # zero-magnitude points get the real axis as reference direction
    denom = mag + safe
    return CTensor(c.re / denom + safe, c.im / denom), mag


def pnd_llrs(r, points, sigma2, sigmap2, variant="lpn", clamp=LLR_CLAMP):
    """Phase-noise-aware LLRs (low-PN or high-SNR likelihood approximation).

    Hypothesis-independent constants are dropped; the ``log(sigma_p^2 |c|^2 +
    sigma_n^2)`` term is kept since it depends on the point.
    """
    sigma2 = np.asarray(sigma2, dtype=np.float64)
    sigmap2 = np.asarray(sigmap2, dtype=np.float64)
    if np.any(sigma2 <= 0):
        raise ValueError("noise variance must be positive")
    if np.any(sigmap2 < 0):
        raise ValueError("phase-noise variance must be non-negative")
    r, c, tensor_out = _prep(r, points)
    k = int(np.log2(c.shape[-1]))
    rr, _ = _expand(r, c)
    ndim = rr.re.ndim
    sn2 = _bcast(sigma2, ndim)
    sp2 = _bcast(sigmap2, ndim)
    if variant == "lpn":
        unit, mag = _unit_and_mag(c)
        z = rr * unit.conj()
        spread = ad.square(mag) * sp2 + sn2
        metric = (
            -ad.square(z.re - mag) * (1.0 / sn2)
            - ad.square(z.im) / spread
            - ad.log(spread)
        )
    elif variant == "hsnr":
        mag = c.abs()
        if np.any(mag.data == 0):
            raise ValueError("high-SNR demapper needs non-zero constellation points")
        dphi = rr.angle() - c.angle()
        wrapped = dphi + (np.mod(dphi.data + np.pi, 2 * np.pi) - np.pi - dphi.data)
        mag2 = ad.square(mag)
        metric = (
            -ad.square(rr.abs() - mag) * (1.0 / sn2)
            - ad.square(wrapped) / (sn2 / mag2 + sp2)
            - ad.log(mag2 * sp2 + sn2)
        )
    else:
        raise ValueError(f"unknown PND variant {variant!r}")
    return _finish(llrs_from_metrics(metric, k, clamp), tensor_out)


@dataclass
class NnDemapper:
    """Fully connected 2 -> hidden -> ... -> K network, ReLU hidden layers, linear output."""

    weights: list
    biases: list
    activation: str = "relu"

    @property
    def dims(self):
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    @property
    def k(self):
        return self.weights[-1].shape[1]

    @classmethod
    def init(cls, k, hidden=(64, 64), rng=None):
        rng = np.random.default_rng(0) if rng is None else rng
        dims = [2, *hidden, k]
        ws, bs = [], []
        for fan_in, fan_out in zip(dims[:-1], dims[1:]):
            bound = np.sqrt(6.0 / fan_in)
            ws.append(rng.uniform(-bound, bound, (fan_in, fan_out)))
            bs.append(np.zeros(fan_out))
        return cls(ws, bs)

    def param_groups(self):
        out = {}
        for i, (w, b) in enumerate(zip(self.weights, self.biases)):
            out[f"nn_w{i}"] = w
            out[f"nn_b{i}"] = b
        return out

    @classmethod
    def from_groups(cls, groups):
        n = sum(1 for name in groups if name.startswith("nn_w"))
        return cls([np.asarray(groups[f"nn_w{i}"], dtype=np.float64) for i in range(n)],
                   [np.asarray(groups[f"nn_b{i}"], dtype=np.float64) for i in range(n)])


def nn_forward(r: CTensor, layers, clamp=LLR_CLAMP):
    """Forward pass; ``layers`` is a list of ``(W, b)`` tensors."""
    x = ad.concatenate([ad.reshape(r.re, r.shape + (1,)), ad.reshape(r.im, r.shape + (1,))], axis=-1)
    for i, (w, b) in enumerate(layers):
        x = ad.matmul(x, w) + b
        if i + 1 < len(layers):
            x = ad.relu(x)
    return x if clamp is None else ad.clip(x, -clamp, clamp)


def nn_demap(r, net: NnDemapper, clamp=LLR_CLAMP):
    tensor_out = isinstance(r, CTensor)
    r = r if tensor_out else CTensor(np.asarray(r, dtype=np.complex128))
    layers = [(Tensor(w), Tensor(b)) for w, b in zip(net.weights, net.biases)]
    return _finish(nn_forward(r, layers, clamp), tensor_out)


def hard_bits(llr):
    return (np.asarray(llr) > 0).astype(np.int8)
