"""Augmented-Lagrangian training of the constellation, filters and (optionally) a neural demapper."""

from dataclasses import asdict, dataclass, field, replace
import json
import logging
import math
from pathlib import Path

import numpy as np

from . import metrics
from .bundle import WaveformBundle, baseline_bundle, dumps
from .demappers import NnDemapper
from .link import transmit_power
from .numerics import autodiff as ad
from .numerics.autodiff import Tensor
from .numerics.optim import AdamState, ParamSet, adam_step
from .system import SystemConfig, Transceiver, param_groups, stream
from .waveform import normalize_constellation, normalize_taps

log = logging.getLogger(__name__)

CHECKPOINT_FORMAT = "scwave-checkpoint/1"
LOG_FIELDS = ("iteration", "bce", "phi_p", "aclr_db", "papr_db", "mu_p", "mu_a", "lam")


class TrainingDiverged(RuntimeError):
    def __init__(self, message, checkpoint=None):
        super().__init__(message)
        self.checkpoint = checkpoint


@dataclass(frozen=True)
class LagrangianState:
    """Multipliers, penalty weight and constraint targets.

    ``eps_p`` and ``eps_a`` are linear.  The ACLR constraint is measured in
    dB: ``phi_a = ACLR_dB - 10 log10(eps_a)``.
    """

    mu_p: float = 0.0
    mu_a: float = 0.0
    lam: float = 1.0
    tau: float = 2.0
    eps_p: float = float(metrics.undb(6.5))
    eps_a: float = float(metrics.undb(-45.0))
    beta: float = 0.3

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError("penalty weight lambda must be positive")
        if self.tau <= 1:
            raise ValueError("penalty growth tau must exceed 1")
        if self.eps_p <= 0 or self.eps_a <= 0:
            raise ValueError("constraint targets must be positive (linear)")

    @property
    def eps_a_db(self):
        return float(metrics.db(self.eps_a))

    def to_dict(self):
        return asdict(self)


def phi_aclr(aclr_db, st: LagrangianState):
    return aclr_db - st.eps_a_db


def augmented_loss(bce, phi_p, phi_a, st: LagrangianState):
    """``bce + mu_P phi_P + lam/2 phi_P^2 + (max(0, mu_A + lam phi_A)^2 - mu_A^2) / (2 lam)``.

    Works on floats or tensors.
    """
    if st.lam <= 0:
        raise ValueError("penalty weight lambda must be positive")
    lam = st.lam
    if any(isinstance(x, Tensor) for x in (bce, phi_p, phi_a)):
        hinge = ad.relu(ad.as_tensor(phi_a) * lam + st.mu_a)
        return (bce + ad.as_tensor(phi_p) * st.mu_p + ad.square(ad.as_tensor(phi_p)) * (lam / 2)
                + (ad.square(hinge) - st.mu_a**2) * (1.0 / (2 * lam)))
    hinge = max(0.0, st.mu_a + lam * phi_a)
    return bce + st.mu_p * phi_p + lam / 2 * phi_p**2 + (hinge**2 - st.mu_a**2) / (2 * lam)


def update_multipliers(st: LagrangianState, phi_p, phi_a):
    """One outer-iteration update; multipliers use the penalty weight before it grows."""
    return replace(
        st,
        mu_p=st.mu_p + st.lam * phi_p,
        mu_a=max(0.0, st.mu_a + st.lam * phi_a),
        lam=st.tau * st.lam,
    )


@dataclass(frozen=True)
class TrainConfig:
    system: SystemConfig = field(default_factory=SystemConfig)
    ebn0_lo: float = 6.0
    ebn0_hi: float = 18.0
    batch_size: int = 10
    inner_steps: int = 500
    outer_iters: int = 3
    power_samples: int = 400_000
    seed: int = 0
    lr: float = 1e-3
    eps_p: float = float(metrics.undb(6.5))  # linear
    eps_a: float = float(metrics.undb(-45.0))  # linear
    lam0: float = 1.0
    tau: float = 2.0
    heldout_frames: int = 20
    constellation_init: str = None  # apsk64 for K=6, qam otherwise
    divergence_factor: float = 10.0
    divergence_patience: int = 3

    def __post_init__(self):
        if self.ebn0_lo > self.ebn0_hi:
            raise ValueError("Eb/N0 range must satisfy lo <= hi")
        for name in ("batch_size", "inner_steps", "outer_iters", "power_samples", "heldout_frames"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be positive")
        if self.lr <= 0:
            raise ValueError("learning rate must be positive")

    def initial_lagrangian(self):
        return LagrangianState(
            lam=self.lam0, tau=self.tau,
            eps_p=self.eps_p,
            eps_a=self.eps_a,
            beta=self.system.beta,
        )


@dataclass
class TrainResult:
    bundle: WaveformBundle
    log: list
    lagrangian: LagrangianState


class Trainer:
    def __init__(self, cfg: TrainConfig):
        self.cfg = cfg
        sc = cfg.system
        self.tr = Transceiver(sc)
        base = baseline_bundle(sc.frame, sc.span, sc.beta, cfg.constellation_init, cfg.seed)
        nn = None
        if sc.demapper == "nnd":
            nn = NnDemapper.init(sc.frame.k, sc.nn_hidden, stream(cfg.seed, "init"))
        self.params = ParamSet(param_groups(base.constellation, base.tx_taps, base.rx_taps, nn))
        self.adam = AdamState(lr=cfg.lr)
        self.lagrangian = cfg.initial_lagrangian()
        self.outer = 0
        self.log = []
        self._stale = 0
        self._initial_loss = None

    # ---------------------------------------------------------------- state

    def tensors(self):
        return {name: self.params[name] for name in self.params}

    def bundle(self):
        g = {name: t.data for name, t in self.params.items()}
        sc = self.cfg.system
        nn = {n: v.copy() for n, v in g.items() if n.startswith("nn_")} or None
        last = self.log[-1] if self.log else {}
        return WaveformBundle(
            constellation=normalize_constellation(g["const_re"] + 1j * g["const_im"]),
            tx_taps=normalize_taps(g["g_tx"]),
            rx_taps=normalize_taps(g["g_rx"]),
            span=sc.span, m=sc.frame.m, beta=sc.beta, frame=sc.frame, seed=self.cfg.seed,
            training={
                "iterations": self.outer,
                "inner_steps": self.cfg.inner_steps,
                "demapper": sc.demapper,
                "eps_p_db": float(metrics.db(self.cfg.eps_p)),
                "eps_a_db": float(metrics.db(self.cfg.eps_a)),
                "final": last,
            },
            nn=nn,
        )

    def checkpoint_dict(self):
        return {
            "format": CHECKPOINT_FORMAT,
            "outer": self.outer,
            "bundle": self.bundle().to_dict(),
            "lagrangian": self.lagrangian.to_dict(),
            "adam": self.adam.to_dict(),
            "params": {n: {"shape": list(t.data.shape), "values": t.data.ravel().tolist()}
                       for n, t in self.params.items()},
            "log": self.log,
            "stale": self._stale,
            "initial_loss": self._initial_loss,
        }

    def save_checkpoint(self, path):
        Path(path).write_text(dumps(self.checkpoint_dict()) + "\n")

    def load_checkpoint(self, path):
        d = json.loads(Path(path).read_text())
        if d.get("format") != CHECKPOINT_FORMAT:
            raise ValueError(f"not a training checkpoint: {path}")
        if set(d["params"]) != set(self.params.names()):
            raise ValueError("checkpoint parameters do not match the configuration")
        for name, p in d["params"].items():
            arr = np.asarray(p["values"], dtype=np.float64).reshape(p["shape"])
            if arr.shape != self.params[name].data.shape:
                raise ValueError(f"checkpoint shape mismatch for {name}")
            self.params[name].data = arr
        self.adam = AdamState.from_dict(d["adam"])
        self.lagrangian = LagrangianState(**d["lagrangian"])
        self.outer = int(d["outer"])
        self.log = d["log"]
        self._stale = int(d["stale"])
        self._initial_loss = d["initial_loss"]

    # ------------------------------------------------------------- training

    def batch_loss(self, t, counters):
        """Augmented loss and its parts on one freshly drawn batch."""
        cfg = self.cfg
        b = cfg.batch_size
        seed = cfg.seed
        ebn0 = stream(seed, "ebn0", *counters).uniform(cfg.ebn0_lo, cfg.ebn0_hi, b)
        sigma2 = self.tr.sigma2_for(ebn0)
        idx = self.tr.sample_batch(b, stream(seed, "bits", *counters))
        real = self.tr.draw_channel(b, sigma2, stream(seed, "pn_tx", *counters),
                                    stream(seed, "pn_rx", *counters), stream(seed, "awgn", *counters))
        out = self.tr.forward(t, idx, sigma2, real)
        bce = metrics.bce_loss(out.bits, out.llr)
        phi_p = metrics.papr_penalty(out.power, self.lagrangian.eps_p)
        phi_a = phi_aclr(self.tr.aclr_db(out.g_tx), self.lagrangian)
        loss = augmented_loss(bce, phi_p, phi_a, self.lagrangian)
        return loss, {"bce": bce, "phi_p": phi_p, "phi_a": phi_a}

    def inner_sgd(self):
        """``inner_steps`` Adam updates on the augmented loss; returns the mean loss."""
        total = 0.0
        for j in range(self.cfg.inner_steps):
            loss, parts = self.batch_loss(self.tensors(), (self.outer, j))
            value = float(loss.data)
            if not math.isfinite(value):
                raise FloatingPointError(
                    f"non-finite loss at outer {self.outer}, step {j}: "
                    + ", ".join(f"{k}={float(v.data):.6g}" for k, v in parts.items())
                )
            loss.backward()
            adam_step(self.params, self.adam)
            total += value
        return total / self.cfg.inner_steps

    def constraint_values(self):
        """``(phi_p, phi_a, aclr_db, papr_db)`` with fresh power samples (no gradient)."""
        frozen = {n: Tensor(t.data) for n, t in self.params.items()}
        power = transmit_power(self.cfg.system, frozen, self.cfg.power_samples,
                               self.cfg.seed, self.outer, self.cfg.batch_size)
        aclr = metrics.aclr_beta(normalize_taps(self.params["g_tx"].data), self.tr.stopband)
        phi_p = metrics.papr_penalty(power, self.lagrangian.eps_p)
        return phi_p, phi_aclr(aclr, self.lagrangian), aclr, metrics.papr_at(power, 1e-3)

    def heldout_bce(self):
        """BCE on a fixed set of frames spread evenly over the training Eb/N0 range."""
        cfg = self.cfg
        t = {n: Tensor(p.data) for n, p in self.params.items()}
        grid = np.linspace(cfg.ebn0_lo, cfg.ebn0_hi, cfg.heldout_frames)
        total = 0.0
        for j, start in enumerate(range(0, grid.size, cfg.batch_size)):
            ebn0 = grid[start:start + cfg.batch_size]
            sigma2 = self.tr.sigma2_for(ebn0)
            idx = self.tr.sample_batch(ebn0.size, stream(cfg.seed, "heldout", 0, j))
            real = self.tr.draw_channel(ebn0.size, sigma2, stream(cfg.seed, "heldout", 1, j),
                                        stream(cfg.seed, "heldout", 2, j), stream(cfg.seed, "heldout", 3, j))
            out = self.tr.forward(t, idx, sigma2, real)
            total += metrics.bce_loss(out.bits, out.llr.data) * ebn0.size
        return total / grid.size

    def record(self):
        phi_p, phi_a, aclr, papr = self.constraint_values()
        row = {
            "iteration": self.outer,
            "bce": self.heldout_bce(),
            "phi_p": phi_p,
            "aclr_db": aclr,
            "papr_db": papr,
            "mu_p": self.lagrangian.mu_p,
            "mu_a": self.lagrangian.mu_a,
            "lam": self.lagrangian.lam,
        }
        self.log.append(row)
        log.info("iteration %d: %s", self.outer,
                 ", ".join(f"{k}={v:.6g}" for k, v in row.items() if k != "iteration"))
        return phi_p, phi_a

    def train(self, checkpoint_path=None):
        """Outer loop; resumes from the current state (e.g. after ``load_checkpoint``)."""
        if not self.log:
            self.record()
        while self.outer < self.cfg.outer_iters:
            mean_loss = self.inner_sgd()
            if self._initial_loss is None:
                self._initial_loss = mean_loss
            phi_p, phi_a, _, _ = self.constraint_values()
            self.lagrangian = update_multipliers(self.lagrangian, phi_p, phi_a)
            self.outer += 1
            self.record()
            if checkpoint_path is not None:
                self.save_checkpoint(checkpoint_path)
            self._check_divergence(mean_loss, checkpoint_path)
        return TrainResult(self.bundle(), self.log, self.lagrangian)

    def _check_divergence(self, mean_loss, checkpoint_path):
        limit = self.cfg.divergence_factor * abs(self._initial_loss)
        self._stale = self._stale + 1 if mean_loss > limit else 0
        if self._stale >= self.cfg.divergence_patience:
            if checkpoint_path is not None:
                self.save_checkpoint(checkpoint_path)
            raise TrainingDiverged(
                f"loss {mean_loss:.6g} above {limit:.6g} for {self._stale} outer iterations",
                checkpoint_path,
            )


def train(cfg: TrainConfig, checkpoint_path=None):
    return Trainer(cfg).train(checkpoint_path)
