"""End-to-end transceiver forward pass shared by training and evaluation."""

from dataclasses import dataclass, field, replace

import numpy as np

from . import channel, demappers, metrics, phase_noise
from .numerics.autodiff import CTensor, Tensor
from .waveform import (
    Constellation,
    FrameConfig,
    index_to_bits,
    assemble_frame,
    frame_layout,
    normalize_constellation_t,
    normalize_taps_t,
    pilot_symbols,
    pulse_shape,
)

STREAMS = {"init": 0, "bits": 1, "ebn0": 2, "pn_tx": 3, "pn_rx": 4, "awgn": 5,
           "power": 6, "heldout": 7}


def stream(seed, name, *counters):
    """Independent generator for a named random substream.

    ``counters`` (iteration, batch, ...) select further independent children,
    so each consumer can be replayed or ablated without disturbing the others.
    """
    key = [int(seed), STREAMS[name], *(int(c) for c in counters)]
    return np.random.default_rng(np.random.SeedSequence(key))


@dataclass(frozen=True)
class SystemConfig:
    frame: FrameConfig = field(default_factory=FrameConfig)
    span: int = 32
    beta: float = 0.3
    carrier_hz: float = 120e9
    symbol_rate: float = 3.93e9
    pn_tx: str = "tx-lmx2595"  # None disables
    pn_rx: str = "rx-ue1"
    demapper: str = "aod"
    pnd_variances: str = "truth"  # "truth" or "estimated"
    llr_clamp: float = demappers.LLR_CLAMP
    nn_hidden: tuple = (64, 64)

    def __post_init__(self):
        if self.demapper not in demappers.DEMAPPERS:
            raise ValueError(f"demapper must be one of {demappers.DEMAPPERS}")
        if self.pnd_variances not in ("truth", "estimated"):
            raise ValueError("pnd_variances must be 'truth' or 'estimated'")
        for side in (self.pn_tx, self.pn_rx):
            if side is not None and side not in phase_noise.PSD_MODELS:
                raise ValueError(f"unknown PSD model {side!r}; choose from {sorted(phase_noise.PSD_MODELS)}")
        if self.span < 1 or not 0 < self.beta <= 1:
            raise ValueError("filter span must be positive and roll-off in (0, 1]")

    @property
    def filter_len(self):
        return self.span * self.frame.m + 1

    @property
    def sample_rate(self):
        return self.symbol_rate * self.frame.m

    def without_pn(self):
        return replace(self, pn_tx=None, pn_rx=None)


@dataclass
class Forward:
    llr: Tensor
    bits: np.ndarray
    power: Tensor  # |s_hat|^2 over the block's own samples
    constellation: CTensor
    g_tx: Tensor
    g_rx: Tensor
    report: channel.CompensationReport
    sigma2: np.ndarray
    sigmap2: np.ndarray


def param_groups(constellation: Constellation, g_tx, g_rx, nn=None):
    groups = {
        "const_re": constellation.points.real.copy(),
        "const_im": constellation.points.imag.copy(),
        "g_tx": np.asarray(g_tx, dtype=np.float64).copy(),
        "g_rx": np.asarray(g_rx, dtype=np.float64).copy(),
    }
    if nn is not None:
        groups.update(nn.param_groups())
    return groups


def frozen_tensors(groups):
    return {name: Tensor(v) for name, v in groups.items()}


class Transceiver:
    def __init__(self, cfg: SystemConfig):
        self.cfg = cfg
        self.frame = cfg.frame
        self.layout = frame_layout(cfg.frame)
        self.ptrs_tx, self.rpn_tx = pilot_symbols(self.layout)
        self.psd_tx = phase_noise.get_model(cfg.pn_tx, cfg.carrier_hz) if cfg.pn_tx else None
        self.psd_rx = phase_noise.get_model(cfg.pn_rx, cfg.carrier_hz) if cfg.pn_rx else None
        self.stopband = metrics.stopband_matrix(cfg.filter_len, cfg.beta, cfg.frame.m)

    @property
    def n_samples(self):
        return self.frame.m * self.frame.n + self.cfg.filter_len - 1

    def _phases(self, psd, batch, rng):
        n = self.n_samples
        if psd is None:
            return np.zeros((batch, n))
        spec = phase_noise.PnGenSpec(self.cfg.sample_rate, n, n_fft=1 << (n - 1).bit_length())
        return np.stack([phase_noise.generate_pn(psd, spec, rng=rng) for _ in range(batch)])

    def draw_channel(self, batch, sigma2, rng_tx, rng_rx, rng_awgn):
        shape = (batch, self.n_samples)
        return channel.ChannelRealization(
            pn_tx=self._phases(self.psd_tx, batch, rng_tx),
            pn_rx=self._phases(self.psd_rx, batch, rng_rx),
            noise=channel.draw_noise(shape, sigma2, rng_awgn),
            sigma2=np.asarray(sigma2, dtype=np.float64),
        )

    def transmit(self, t, idx):
        """Constellation + Tx filter -> oversampled signal; returns (s_hat, C, g_tx)."""
        c = normalize_constellation_t(t["const_re"], t["const_im"])
        g_tx = normalize_taps_t(t["g_tx"])
        frame, _ = assemble_frame(c[idx], self.frame, self.layout)
        return pulse_shape(frame, g_tx, self.frame.m), c, g_tx

    def block_power(self, s_hat: CTensor):
        """Instantaneous power of the samples spanning the block (no filter tails)."""
        d = (self.cfg.filter_len - 1) // 2
        seg = s_hat[..., d:d + self.frame.m * self.frame.n]
        return seg.abs2()

    def forward(self, t, idx, sigma2, real: channel.ChannelRealization):
        """Full chain for a batch of frames.

        Args:
            t: mapping of parameter name -> Tensor (trainable or frozen).
            idx: ``(B, N_D)`` transmitted point indices.
            sigma2: ``(B,)`` per-sample noise variances.
            real: channel realization for the batch.
        """
        cfg = self.cfg
        k = self.frame.k
        s_hat, c, g_tx = self.transmit(t, idx)
        power = self.block_power(s_hat)
        g_rx = normalize_taps_t(t["g_rx"])
        r_hat = channel.apply_impairments(s_hat, real)
        body = channel.receive_chain(r_hat, g_rx, self.frame.m, self.layout, cfg.filter_len)
        comp, report = channel.ptrs_compensate(body, self.layout)
        data, _, rpn = channel.split_body(comp, self.layout)
        sigma2 = np.asarray(sigma2, dtype=np.float64)
        sigmap2 = np.zeros_like(sigma2)
        kind = cfg.demapper
        if kind.startswith("pnd"):
            sigma2, sigmap2 = self._pnd_variances(real, report, rpn, sigma2)
        if kind == "aod":
            llr = demappers.aod_llrs(data, c, sigma2, clamp=cfg.llr_clamp)
        elif kind.startswith("pnd"):
            llr = demappers.pnd_llrs(data, c, sigma2, sigmap2, kind.split("-")[1], clamp=cfg.llr_clamp)
        else:
            n_layers = sum(1 for name in t if name.startswith("nn_w"))
            layers = [(t[f"nn_w{i}"], t[f"nn_b{i}"]) for i in range(n_layers)]
            llr = demappers.nn_forward(data, layers, clamp=cfg.llr_clamp)
        return Forward(llr, index_to_bits(idx, k), power, c, g_tx, g_rx, report, sigma2, sigmap2)

    def _pnd_variances(self, real, report, rpn, sigma2):
        if self.cfg.pnd_variances == "truth":
            sym = channel.symbol_phases(real.total_phase, self.layout, self.cfg.filter_len)
            return sigma2, channel.residual_phase_variance(sym, report.track)
        if self.frame.n_r * self.frame.q < 2:
            raise ValueError("estimated PND variances need at least 2 residual-PN pilots")
        est = channel.RESIDUAL_ESTIMATORS[self.cfg.demapper.split("-")[1]]
        v = rpn.numpy() if isinstance(rpn, CTensor) else rpn
        pairs = [est(self.rpn_tx, row) for row in v.reshape(v.shape[0], -1)]
        # estimators report per-dimension noise; the demappers take the circular variance
        sn2 = np.array([max(2.0 * p[0], 1e-9) for p in pairs])
        sp2 = np.array([p[1] for p in pairs])
        return sn2, sp2

    # -------------------------------------------------------------- helpers

    def sample_batch(self, batch, rng_bits):
        return rng_bits.integers(0, 2**self.frame.k, size=(batch, self.frame.n_d))

    def sigma2_for(self, ebn0_db, r=1.0):
        return np.array([channel.frame_noise_variance(e, self.frame, r) for e in np.atleast_1d(ebn0_db)])

    def aclr_db(self, g_tx):
        return metrics.aclr_beta(g_tx, self.stopband)
