"""Experiment configuration: YAML sections over a documented default set, plus named presets."""

from copy import deepcopy
from dataclasses import dataclass
import hashlib
import json
from pathlib import Path

import yaml

from . import metrics
from .system import SystemConfig
from .trainer import TrainConfig
from .waveform import FrameConfig

DEFAULTS = {
    "scenario": "default",
    "seed": 0,
    "output_dir": "runs",
    "system": {"carrier_ghz": 120.0, "bandwidth_ghz": 3.93, "span": 32, "beta": 0.3},
    "frame": {"k": 6, "n": 4096, "q": 32, "n_p": 4, "n_r": 1, "n_cp": 288, "m": 4, "zc_root": 1},
    "phase_noise": {"tx": "tx-lmx2595", "rx": "rx-ue1"},
    "demapper": {"kind": "aod", "train_variances": "truth", "eval_variances": "estimated",
                 "nn_hidden": [64, 64]},
    "constraints": {"eps_p_db": 6.5, "eps_a_db": -45.0},
    "training": {"ebn0_lo": 6.0, "ebn0_hi": 18.0, "batch_size": 10, "inner_steps": 500,
                 "outer_iters": 3, "power_samples": 400_000, "lr": 1e-3, "lam0": 1.0,
                 "tau": 2.0, "heldout_frames": 20, "constellation_init": None},
    "evaluation": {"ebn0_db": [6.0, 8.0, 10.0, 12.0, 14.0, 16.0, 18.0], "n_frames": 50,
                   "code_rate": 1.0, "batch_size": 10, "ccdf_samples": 2_000_000},
}

# fields whose default is null but which take a value of this type when set
_NULLABLE = {
    ("phase_noise", "tx"): str,
    ("phase_noise", "rx"): str,
    ("training", "constellation_init"): str,
}


class ConfigError(ValueError):
    """Invalid configuration; the message starts with the offending field path."""


def _presets():
    out = {}
    for ghz, n_r in ((120, 1), (220, 4)):
        for p in (5.5, 6.0, 6.5):
            for a in (-45.0, -55.0):
                for beta in (0.3, 0.25):
                    name = f"{ghz}ghz_p{int(p * 10)}_a{int(-a)}" + ("" if beta == 0.3 else "_b25")
                    out[name] = {
                        "scenario": name,
                        "system": {"carrier_ghz": float(ghz), "beta": beta},
                        "frame": {"n_r": n_r},
                        "constraints": {"eps_p_db": p, "eps_a_db": a},
                    }
    return out


PRESETS = _presets()


def _merge(base, override, sources, source, path=()):
    for key, value in override.items():
        here = path + (key,)
        dotted = ".".join(here)
        if key not in base:
            raise ConfigError(f"{dotted}: unknown field")
        if isinstance(base[key], dict):
            if not isinstance(value, dict):
                raise ConfigError(f"{dotted}: expected a section, got {type(value).__name__}")
            _merge(base[key], value, sources, source, here)
            continue
        base[key] = _coerce(here, base[key], value)
        sources[dotted] = source


def _coerce(path, default, value):
    dotted = ".".join(path)
    if value is None:
        if default is None or path in _NULLABLE:
            return None
        raise ConfigError(f"{dotted}: may not be null")
    want = _NULLABLE.get(path) or type(default)
    if want is float and isinstance(value, int) and not isinstance(value, bool):
        return float(value)
    if want is list:
        if not isinstance(value, list):
            raise ConfigError(f"{dotted}: expected a list, got {type(value).__name__}")
        item_type = type(default[0]) if default else float
        for i, item in enumerate(value):
            ok = isinstance(item, (int, float)) if item_type is float else isinstance(item, item_type)
            if not ok or isinstance(item, bool):
                raise ConfigError(f"{dotted}[{i}]: expected {item_type.__name__}, got {item!r}")
        return [float(v) for v in value] if item_type is float else value
    if not isinstance(value, want) or (want is int and isinstance(value, bool)):
        raise ConfigError(f"{dotted}: expected {want.__name__}, got {type(value).__name__} ({value!r})")
    return value


def _leaves(d, path=()):
    for key, value in d.items():
        if isinstance(value, dict):
            yield from _leaves(value, path + (key,))
        else:
            yield ".".join(path + (key,))


@dataclass(frozen=True)
class ExperimentConfig:
    """Resolved configuration with constraint targets already converted to linear."""

    raw: dict
    sources: dict
    eps_p: float
    eps_a: float

    @property
    def seed(self):
        return self.raw["seed"]

    @property
    def output_dir(self):
        return Path(self.raw["output_dir"])

    def frame(self):
        return FrameConfig(**self.raw["frame"])

    def system(self, phase="train"):
        s, pn, dm = self.raw["system"], self.raw["phase_noise"], self.raw["demapper"]
        return SystemConfig(
            frame=self.frame(),
            span=s["span"],
            beta=s["beta"],
            carrier_hz=s["carrier_ghz"] * 1e9,
            symbol_rate=s["bandwidth_ghz"] * 1e9,
            pn_tx=pn["tx"],
            pn_rx=pn["rx"],
            demapper=dm["kind"],
            pnd_variances=dm["train_variances" if phase == "train" else "eval_variances"],
            nn_hidden=tuple(dm["nn_hidden"]),
        )

    def train_config(self):
        t = self.raw["training"]
        return TrainConfig(system=self.system("train"), seed=self.seed,
                           eps_p=self.eps_p, eps_a=self.eps_a, **t)

    def hash(self):
        """Short digest of the resolved settings (sources excluded)."""
        text = json.dumps(self.raw, sort_keys=True, separators=(",", ":"))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def echo(self):
        """YAML of every resolved field, each annotated with where its value came from."""
        lines = [f"# config hash {self.hash()}"]

        def emit(d, path, indent):
            for key, value in d.items():
                here = path + (key,)
                pad = "  " * indent
                if isinstance(value, dict):
                    lines.append(f"{pad}{key}:")
                    emit(value, here, indent + 1)
                else:
                    text = json.dumps(value)  # JSON scalars and lists are valid YAML
                    lines.append(f"{pad}{key}: {text}  # {self.sources['.'.join(here)]}")

        emit(self.raw, (), 0)
        return "\n".join(lines) + "\n"


def resolve(data=None, preset=None, source="config"):
    """Merge defaults, an optional preset and user data into an :class:`ExperimentConfig`."""
    raw = deepcopy(DEFAULTS)
    sources = {leaf: "default" for leaf in _leaves(raw)}
    data = deepcopy(data) if data else {}
    if not isinstance(data, dict):
        raise ConfigError("<root>: expected a mapping")
    file_preset = data.pop("preset", None)
    preset = preset or file_preset  # the command line wins
    if preset is not None:
        if preset not in PRESETS:
            raise ConfigError(f"preset: unknown preset {preset!r}")
        _merge(raw, PRESETS[preset], sources, f"preset {preset}")
    _merge(raw, data, sources, source)
    cfg = ExperimentConfig(
        raw=raw,
        sources=sources,
        eps_p=float(metrics.undb(raw["constraints"]["eps_p_db"])),
        eps_a=float(metrics.undb(raw["constraints"]["eps_a_db"])),
    )
    # build each layer in turn so a semantic error names the section it came from
    for section, build in (("frame", cfg.frame), ("system", cfg.system),
                           ("training", cfg.train_config)):
        try:
            build()
        except (ValueError, TypeError) as err:
            raise ConfigError(f"{section}: {err}") from err
    return cfg


def load(path=None, preset=None):
    if path is None:
        return resolve(None, preset)
    try:
        data = yaml.safe_load(Path(path).read_text())
    except yaml.YAMLError as err:
        raise ConfigError(f"<file>: {path}: not valid YAML ({err})") from err
    return resolve(data, preset, source=str(path))
