"""Monte Carlo link evaluation: BER, BLER, spectral efficiency and transmit power statistics."""

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
import math

import numpy as np

from . import metrics
from .bundle import WaveformBundle
from .demappers import NnDemapper, hard_bits
from .system import SystemConfig, Transceiver, frozen_tensors, param_groups, stream


@dataclass(frozen=True)
class LinkPoint:
    ebn0_db: float
    ber: float
    ber_stderr: float
    bler: float
    se: float
    n_bits: int
    n_frames: int


def hard_decision(llr):
    """Default decoder: sign of each logit; any callable ``llr -> bits`` can replace it."""
    return hard_bits(llr)


def bundle_tensors(bundle: WaveformBundle, cfg: SystemConfig):
    """Frozen parameter tensors for a bundle; checks it against the system setup."""
    if bundle.k != cfg.frame.k or bundle.m != cfg.frame.m:
        raise ValueError(
            f"bundle (K={bundle.k}, M={bundle.m}) does not match config "
            f"(K={cfg.frame.k}, M={cfg.frame.m})"
        )
    if bundle.span != cfg.span:
        raise ValueError(f"bundle span {bundle.span} differs from config span {cfg.span}")
    nn = None
    if cfg.demapper == "nnd":
        if bundle.nn is None:
            raise ValueError("the neural demapper needs weights stored in the bundle")
        nn = NnDemapper.from_groups(bundle.nn)
    return frozen_tensors(param_groups(bundle.constellation, bundle.tx_taps, bundle.rx_taps, nn))


def evaluate_link(cfg: SystemConfig, bundle: WaveformBundle, ebn0_grid, n_frames, seed=0,
                  r=1.0, batch=10, decoder=hard_decision, threads=1):
    """BER/BLER/SE over an Eb/N0 grid.

    BLER counts frames with at least one bit error after ``decoder`` (an
    uncoded surrogate unless a real decoder is plugged in).  SE divides the
    rate ``(1 - BLER) r K N_D / N`` by the Tx filter's 99.9% bandwidth.
    Grid points draw from their own substreams, so ``threads`` does not change
    the result.
    """
    if n_frames < 1 or batch < 1:
        raise ValueError("frame and batch counts must be positive")
    tr = Transceiver(cfg)
    t = bundle_tensors(bundle, cfg)
    obw = metrics.obw_filter(bundle.tx_taps, cfg.frame.m)
    grid = [float(e) for e in np.atleast_1d(ebn0_grid)]

    def point(i):
        ebn0 = grid[i]
        errors = block_errors = n_bits = done = j = 0
        while done < n_frames:
            b = min(batch, n_frames - done)
            idx = tr.sample_batch(b, stream(seed, "bits", i, j))
            sigma2 = tr.sigma2_for(np.full(b, ebn0), r)
            real = tr.draw_channel(b, sigma2, stream(seed, "pn_tx", i, j),
                                   stream(seed, "pn_rx", i, j), stream(seed, "awgn", i, j))
            out = tr.forward(t, idx, sigma2, real)
            wrong = np.asarray(decoder(out.llr.data)) != out.bits
            errors += int(wrong.sum())
            block_errors += int(wrong.reshape(b, -1).any(axis=1).sum())
            n_bits += wrong.size
            done += b
            j += 1
        ber = errors / n_bits
        bler = block_errors / done
        return LinkPoint(
            ebn0_db=ebn0,
            ber=ber,
            ber_stderr=math.sqrt(ber * (1 - ber) / n_bits),
            bler=bler,
            se=float(metrics.spectral_efficiency(bler, cfg.frame, obw, r)),
            n_bits=n_bits,
            n_frames=done,
        )

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(point, range(len(grid))))
    return [point(i) for i in range(len(grid))]


def transmit_power(cfg: SystemConfig, t, n_samples, seed=0, counter=0, batch=10):
    """At least ``n_samples`` instantaneous powers ``|s_hat|^2`` of random frames.

    Phase noise leaves the power untouched, so only the transmitter runs.
    """
    tr = Transceiver(cfg)
    per_frame = cfg.frame.m * cfg.frame.n
    n_frames = max(1, math.ceil(n_samples / per_frame))
    chunks, done, j = [], 0, 0
    while done < n_frames:
        b = min(batch, n_frames - done)
        idx = tr.sample_batch(b, stream(seed, "power", counter, j))
        s_hat, _, _ = tr.transmit(t, idx)
        chunks.append(tr.block_power(s_hat).data.ravel())
        done += b
        j += 1
    return np.concatenate(chunks)
