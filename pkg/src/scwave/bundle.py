"""Waveform bundles: learned (or baseline) constellation, filters and frame setup as JSON."""

from dataclasses import asdict, dataclass, field
import json
from pathlib import Path

import numpy as np

from .waveform import Constellation, FrameConfig, init_apsk64, init_qam, init_rrc

FORMAT = "scwave-bundle/1"
LABEL_NOTE = "point i carries bit label binary(i), MSB first"


def _floats(a):
    return [float(x) for x in np.asarray(a, dtype=np.float64).ravel()]


def dumps(obj):
    """JSON text; float repr is the shortest string that round-trips exactly (<= 17 digits)."""
    return json.dumps(obj, indent=1, allow_nan=False)


@dataclass
class WaveformBundle:
    constellation: Constellation
    tx_taps: np.ndarray
    rx_taps: np.ndarray
    span: int
    m: int
    beta: float
    frame: FrameConfig
    seed: int = 0
    training: dict = field(default_factory=dict)
    nn: dict = None  # name -> array for a neural demapper, if any

    def __post_init__(self):
        self.tx_taps = np.asarray(self.tx_taps, dtype=np.float64)
        self.rx_taps = np.asarray(self.rx_taps, dtype=np.float64)
        if self.frame.k != self.constellation.k:
            raise ValueError("frame K differs from constellation K")
        if self.frame.m != self.m:
            raise ValueError("frame M differs from filter M")
        for name, taps in (("tx", self.tx_taps), ("rx", self.rx_taps)):
            if taps.size != self.span * self.m + 1:
                raise ValueError(f"{name} filter has {taps.size} taps, expected {self.span * self.m + 1}")

    @property
    def k(self):
        return self.constellation.k

    def to_dict(self):
        out = {
            "format": FORMAT,
            "K": self.k,
            "constellation_re": _floats(self.constellation.points.real),
            "constellation_im": _floats(self.constellation.points.imag),
            "label_note": LABEL_NOTE,
            "tx_taps": _floats(self.tx_taps),
            "rx_taps": _floats(self.rx_taps),
            "S": self.span,
            "M": self.m,
            "beta": float(self.beta),
            "frame": asdict(self.frame),
            "training": self.training,
            "seed": int(self.seed),
        }
        if self.nn is not None:
            out["nn"] = {name: {"shape": list(np.shape(v)), "values": _floats(v)}
                         for name, v in self.nn.items()}
        return out

    @classmethod
    def from_dict(cls, d):
        if d.get("format") != FORMAT:
            raise ValueError(f"not a waveform bundle (format={d.get('format')!r})")
        pts = np.asarray(d["constellation_re"]) + 1j * np.asarray(d["constellation_im"])
        nn = None
        if "nn" in d:
            nn = {name: np.asarray(v["values"], dtype=np.float64).reshape(v["shape"])
                  for name, v in d["nn"].items()}
        return cls(
            constellation=Constellation(pts, int(d["K"])),
            tx_taps=d["tx_taps"],
            rx_taps=d["rx_taps"],
            span=int(d["S"]),
            m=int(d["M"]),
            beta=float(d["beta"]),
            frame=FrameConfig(**d["frame"]),
            seed=int(d["seed"]),
            training=d.get("training", {}),
            nn=nn,
        )

    def dumps(self):
        return dumps(self.to_dict())

    def save(self, path):
        Path(path).write_text(self.dumps() + "\n")

    @classmethod
    def load(cls, path):
        return cls.from_dict(json.loads(Path(path).read_text()))


def initial_constellation(k, kind=None):
    """APSK 8+16+20+20 for K=6 unless ``kind`` says ``qam``; square QAM otherwise."""
    kind = kind or ("apsk64" if k == 6 else "qam")
    if kind == "apsk64":
        if k != 6:
            raise ValueError("APSK initialization is defined for K=6 only")
        return init_apsk64()
    if kind == "qam":
        return init_qam(k)
    raise ValueError(f"unknown constellation init {kind!r}")


def baseline_bundle(frame: FrameConfig, span=32, beta=0.3, constellation=None, seed=0):
    """Conventional waveform: initial constellation with an RRC pair."""
    g = init_rrc(beta, span, frame.m).taps
    return WaveformBundle(
        constellation=initial_constellation(frame.k, constellation),
        tx_taps=g,
        rx_taps=g.copy(),
        span=span,
        m=frame.m,
        beta=beta,
        frame=frame,
        seed=seed,
        training={"iterations": 0},
    )
