"""Constellations, bit mapping, pulse-shaping filters, pilots and frame layout."""

from dataclasses import dataclass
import math

import numpy as np

from .numerics import autodiff as ad, buffers
from .numerics.autodiff import CTensor, Tensor


# ------------------------------------------------------------- constellations


@dataclass(frozen=True)
class Constellation:
    """2**K points; the binary value of a point's index is its bit label."""

    points: np.ndarray
    k: int

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.complex128)
        if pts.shape != (2**self.k,):
            raise ValueError(f"expected {2**self.k} points for K={self.k}, got {pts.shape}")
        if not np.all(np.isfinite(pts)):
            raise ValueError("constellation points must be finite")
        object.__setattr__(self, "points", pts)

    @property
    def size(self):
        return 2**self.k

    def labels(self):
        """``(2**K, K)`` bit matrix, MSB first."""
        return index_to_bits(np.arange(self.size), self.k)


def normalize_constellation(raw):
    """Center and scale raw complex weights to zero mean and unit average energy."""
    raw = np.asarray(raw, dtype=np.complex128)
    k = int(round(math.log2(raw.size)))
    if 2**k != raw.size:
        raise ValueError("number of points must be a power of two")
    centered = raw - raw.mean()
    rms = np.sqrt(np.mean(np.abs(centered) ** 2))
    if rms == 0:
        raise ValueError("degenerate constellation: all points identical")
    return Constellation(centered / rms, k)


def normalize_constellation_t(re: Tensor, im: Tensor) -> CTensor:
    """Differentiable counterpart of :func:`normalize_constellation`."""
    cr = re - re.mean()
    ci = im - im.mean()
    rms = ad.sqrt((ad.square(cr) + ad.square(ci)).mean())
    return CTensor(cr / rms, ci / rms)


def gray_code(n_bits):
    i = np.arange(2**n_bits)
    return i ^ (i >> 1)


def index_to_bits(idx, k):
    idx = np.asarray(idx)
    shifts = np.arange(k - 1, -1, -1)
    return ((idx[..., None] >> shifts) & 1).astype(np.int8)


def bits_to_index(bits):
    bits = np.asarray(bits)
    k = bits.shape[-1]
    weights = 1 << np.arange(k - 1, -1, -1)
    return (bits.astype(np.int64) * weights).sum(axis=-1)


def init_qam(k):
    """Square Gray-labelled QAM; the first K/2 label bits select the I level."""
    if k not in (2, 4, 6):
        raise ValueError(f"square QAM supports K in (2, 4, 6), got {k}")
    half = k // 2
    levels = 2**half
    amp = np.arange(-(levels - 1), levels, 2, dtype=np.float64)
    # PAM level for each half-label so that neighbouring levels differ in one bit
    pam = np.empty(levels)
    pam[gray_code(half)] = amp
    idx = np.arange(2**k)
    pts = pam[idx >> half] + 1j * pam[idx & (levels - 1)]
    return normalize_constellation(pts)


APSK64_RINGS = (8, 16, 20, 20)
APSK64_RADII = (1.0, 2.2, 3.6, 5.2)


# 4-bit label of each first-quadrant point (rings inner to outer, angle
# ascending); chosen by pairwise-swap descent on a nearest-neighbour Hamming
# cost over the full mirrored constellation
APSK64_QUADRANT_LABELS = (2, 0, 3, 1, 5, 4, 6, 7, 15, 13, 12, 14, 10, 11, 9, 8)


def init_apsk64():
    """8+16+20+20 APSK with quasi-Gray labels.

    The two label MSBs select a quadrant in Gray order; quadrants are mirror
    images across the axes (as in Gray QAM) so points facing each other across
    an axis share their four LSBs.
    """
    quad = []
    for n, radius in zip(APSK64_RINGS, APSK64_RADII):
        per_q = n // 4
        ang = (np.arange(per_q) + 0.5) * (np.pi / 2) / per_q
        quad.extend(radius * np.exp(1j * ang))
    quad = np.array(quad)
    lsb = np.array(APSK64_QUADRANT_LABELS)
    pts = np.empty(64, dtype=np.complex128)
    mirror = {0: lambda z: z, 1: lambda z: -np.conj(z), 3: lambda z: -z, 2: np.conj}
    for q_label, f in mirror.items():
        pts[(q_label << 4) | lsb] = f(quad)
    return normalize_constellation(pts)


def label_partition(k):
    """Boolean mask ``(K, 2**K)``: True where bit k of the label is 1."""
    return index_to_bits(np.arange(2**k), k).T.astype(bool)


def map_bits(bits, c: Constellation):
    """Map a ``(K, N_D)`` bit matrix (column = symbol, MSB first) to symbols."""
    bits = np.asarray(bits)
    if bits.ndim != 2 or bits.shape[0] != c.k:
        raise ValueError(f"bits must have shape (K={c.k}, N_D)")
    return c.points[bits_to_index(bits.T)]


# -------------------------------------------------------------------- filters


@dataclass(frozen=True)
class PulseFilter:
    taps: np.ndarray
    span: int
    m: int

    def __post_init__(self):
        taps = np.asarray(self.taps, dtype=np.float64)
        if taps.shape != (self.span * self.m + 1,):
            raise ValueError(f"expected {self.span * self.m + 1} taps, got {taps.shape}")
        object.__setattr__(self, "taps", taps)

    @property
    def length(self):
        return self.taps.size

    @property
    def delay(self):
        return (self.taps.size - 1) // 2


def normalize_taps(taps):
    taps = np.asarray(taps, dtype=np.float64)
    energy = np.sum(taps**2)
    if energy == 0:
        raise ValueError("filter has zero energy")
    return taps / np.sqrt(energy)


def normalize_taps_t(raw: Tensor) -> Tensor:
    return raw / ad.sqrt(ad.square(raw).sum())


def rrc_taps(beta, span, m):
    """Root-raised-cosine impulse response sampled at ``m`` samples per symbol."""
    if not 0 < beta <= 1:
        raise ValueError(f"roll-off must be in (0, 1], got {beta}")
    length = span * m + 1
    t = (np.arange(length) - (length - 1) / 2) / m
    h = np.empty(length)
    for i, ti in enumerate(t):
        if abs(ti) < 1e-12:
            h[i] = 1.0 - beta + 4.0 * beta / np.pi
        elif abs(abs(ti) - 1.0 / (4.0 * beta)) < 1e-12:
            h[i] = beta / np.sqrt(2.0) * (
                (1 + 2 / np.pi) * np.sin(np.pi / (4 * beta))
                + (1 - 2 / np.pi) * np.cos(np.pi / (4 * beta))
            )
        else:
            h[i] = (
                np.sin(np.pi * ti * (1 - beta)) + 4 * beta * ti * np.cos(np.pi * ti * (1 + beta))
            ) / (np.pi * ti * (1 - (4 * beta * ti) ** 2))
    return normalize_taps(h)


def init_rrc(beta, span, m):
    return PulseFilter(rrc_taps(beta, span, m), span, m)


# --------------------------------------------------------------------- pilots


def zadoff_chu(length, root=1):
    """Zadoff-Chu sequence ``exp(-j*pi*u*n*(n + c)/L)``, ``c = L mod 2``."""
    if length < 1:
        raise ValueError("length must be positive")
    if math.gcd(root, length) != 1:
        raise ValueError(f"root {root} is not coprime with length {length}")
    n = np.arange(length)
    return np.exp(-1j * np.pi * root * n * (n + length % 2) / length)


# ---------------------------------------------------------------------- frame


@dataclass(frozen=True)
class FrameConfig:
    """Block of ``n`` symbols: CP, then data with Q pilot groups interleaved.

    Each group holds ``n_p`` PTRS symbols followed by ``n_r`` residual-PN
    pilots.  ``n_d`` is whatever remains.
    """

    k: int = 6
    n: int = 4096
    q: int = 32
    n_p: int = 4
    n_r: int = 1
    n_cp: int = 288
    m: int = 4
    zc_root: int = 1

    def __post_init__(self):
        for name in ("k", "n", "q", "n_p", "n_r", "n_cp", "m"):
            if getattr(self, name) < 0:
                raise ValueError(f"{name} must be non-negative")
        if self.k < 1 or self.m < 1:
            raise ValueError("k and m must be positive")
        if self.n_d < 1:
            raise ValueError("frame has no room for data symbols")
        if self.n_cp > self.n_body:
            raise ValueError("cyclic prefix longer than the block body")
        if self.q and self.n_p + self.n_r == 0:
            raise ValueError("pilot groups must contain at least one symbol")

    @property
    def group_len(self):
        return self.n_p + self.n_r

    @property
    def n_body(self):
        return self.n - self.n_cp

    @property
    def n_d(self):
        return self.n - self.n_cp - self.q * self.group_len

    @property
    def n_pilots(self):
        return self.q * self.group_len


@dataclass(frozen=True)
class FrameLayout:
    """Index sets in frame coordinates ``[0, n)``.

    ``ptrs`` and ``rpn`` are ``(Q, n_p)`` / ``(Q, n_r)`` arrays; ``data`` is
    the sorted data positions; ``source`` maps every frame position to an
    index into ``concat(data_symbols, pilot_symbols)``.
    """

    cfg: FrameConfig
    cp: np.ndarray
    ptrs: np.ndarray
    rpn: np.ndarray
    data: np.ndarray
    source: np.ndarray
    pilots: np.ndarray

    @property
    def group_starts(self):
        """Body-coordinate start index of each pilot group."""
        return _group_starts(self.cfg)

    def body(self, positions):
        return np.asarray(positions) - self.cfg.n_cp

    def ptrs_centers(self):
        """Body-coordinate center of each PTRS group."""
        return self.group_starts + (self.cfg.n_p - 1) / 2.0


def _group_starts(cfg):
    # group q starts at floor(q * n_body / Q): data runs between groups are
    # as equal as integer division allows
    return (np.arange(cfg.q) * cfg.n_body) // cfg.q if cfg.q else np.zeros(0, dtype=int)


def frame_layout(cfg: FrameConfig) -> FrameLayout:
    starts = _group_starts(cfg)
    n_b = cfg.n_body
    kind = np.zeros(n_b, dtype=int)  # 0 data, 1 ptrs, 2 rpn
    pilot_pos = np.full(n_b, -1)
    for q, s in enumerate(starts):
        if s + cfg.group_len > n_b:
            raise ValueError("pilot groups do not fit in the block")
        if q + 1 < len(starts) and s + cfg.group_len > starts[q + 1]:
            raise ValueError("pilot groups overlap")
        kind[s:s + cfg.n_p] = 1
        kind[s + cfg.n_p:s + cfg.group_len] = 2
        pilot_pos[s:s + cfg.group_len] = q * cfg.group_len + np.arange(cfg.group_len)
    data_body = np.flatnonzero(kind == 0)
    source_body = np.empty(n_b, dtype=int)
    source_body[data_body] = np.arange(data_body.size)
    is_pilot = kind > 0
    source_body[is_pilot] = cfg.n_d + pilot_pos[is_pilot]
    source = np.concatenate([source_body[n_b - cfg.n_cp:], source_body])
    off = cfg.n_cp
    ptrs = np.array([np.arange(s, s + cfg.n_p) for s in starts], dtype=int).reshape(cfg.q, cfg.n_p) + off
    rpn = np.array([np.arange(s + cfg.n_p, s + cfg.group_len) for s in starts],
                   dtype=int).reshape(cfg.q, cfg.n_r) + off
    pilots = zadoff_chu(cfg.n_pilots, cfg.zc_root) if cfg.n_pilots else np.zeros(0, complex)
    return FrameLayout(
        cfg=cfg,
        cp=np.arange(cfg.n_cp),
        ptrs=ptrs,
        rpn=rpn,
        data=data_body + off,
        source=source,
        pilots=pilots,
    )


def pilot_symbols(layout: FrameLayout):
    """``(ptrs, rpn)`` transmitted pilot values shaped ``(Q, n_p)`` and ``(Q, n_r)``."""
    cfg = layout.cfg
    groups = layout.pilots.reshape(cfg.q, cfg.group_len)
    return groups[:, :cfg.n_p], groups[:, cfg.n_p:]


def assemble_frame(data, cfg: FrameConfig, layout: FrameLayout = None):
    """Interleave data with pilot groups and prepend the cyclic prefix.

    ``data`` is ``(..., N_D)`` complex, numpy or :class:`CTensor`.
    """
    layout = layout or frame_layout(cfg)
    if data.shape[-1] != cfg.n_d:
        raise ValueError(f"expected {cfg.n_d} data symbols, got {data.shape[-1]}")
    if isinstance(data, CTensor):
        pil = np.broadcast_to(layout.pilots, data.shape[:-1] + layout.pilots.shape)
        table = ad.cconcatenate([data, CTensor(pil)], axis=-1)
        return table[..., layout.source], layout
    data = np.asarray(data, dtype=np.complex128)
    pil = np.broadcast_to(layout.pilots, data.shape[:-1] + layout.pilots.shape)
    table = np.concatenate([data, pil], axis=-1)
    return table[..., layout.source], layout


def pulse_shape(frame, g_tx, m):
    """Upsample by ``m`` and filter with ``g_tx`` (taps array, PulseFilter or Tensor)."""
    taps = g_tx.taps if isinstance(g_tx, PulseFilter) else g_tx
    if isinstance(frame, CTensor):
        return frame.upsample(m).convolve(taps)
    return buffers.convolve(buffers.upsample(np.asarray(frame, dtype=np.complex128), m), np.asarray(taps))
