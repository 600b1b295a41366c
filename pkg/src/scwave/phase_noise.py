"""Oscillator phase-noise PSD models and filtered-Gaussian phase synthesis."""

from dataclasses import dataclass, replace
import math

import numpy as np
from scipy.integrate import trapezoid


@dataclass(frozen=True)
class PoleZeroPsd:
    """Multi pole-zero PSD referenced to ``f_ref`` and scaled to ``f_c``.

    ``zeros`` and ``poles`` are sequences of ``(frequency_hz, exponent)``.
    """

    psd0: float
    zeros: tuple
    poles: tuple
    f_ref: float
    f_c: float

    def __post_init__(self):
        if self.psd0 <= 0:
            raise ValueError("psd0 must be positive")
        if len(self.zeros) != len(self.poles):
            raise ValueError("zeros and poles must have the same length")

    def at_carrier(self, f_c):
        return replace(self, f_c=float(f_c))

    def __call__(self, f):
        return eval_pole_zero(self, f)


@dataclass(frozen=True)
class OscillatorComponent:
    fom: float  # dB
    f_z: float  # Hz, math.inf for "no zero"
    pow_mw: float
    k: float

    def psd0_db(self, f_c):
        if self.pow_mw <= 0:
            raise ValueError("component power must be positive")
        return self.fom + 20.0 * math.log10(f_c) - 10.0 * math.log10(self.pow_mw)

    def eval_db(self, f, f_c):
        f = np.asarray(f, dtype=np.float64)
        shape = np.log10(1.0 + (f / self.f_z) ** self.k) - np.log10(1.0 + f**self.k)
        return self.psd0_db(f_c) + 10.0 * shape


@dataclass(frozen=True)
class CompositeLogPsd:
    """Log-domain receiver model: Ref+PLL up to the loop bandwidth, VCOs above."""

    ref: OscillatorComponent
    pll: OscillatorComponent
    vco_v2: OscillatorComponent
    vco_v3: OscillatorComponent
    lbw: float
    f_c: float

    def __post_init__(self):
        if self.lbw <= 0:
            raise ValueError("loop bandwidth must be positive")

    def at_carrier(self, f_c):
        return replace(self, f_c=float(f_c))

    def __call__(self, f):
        return eval_composite(self, f)


@dataclass(frozen=True)
class PnGenSpec:
    sample_rate: float
    n_samples: int
    seed: int = 0
    n_fft: int = None  # synthesis grid; defaults to n_samples

    def __post_init__(self):
        if self.n_samples < 1:
            raise ValueError("n_samples must be >= 1")
        if self.sample_rate <= 0:
            raise ValueError("sample_rate must be positive")
        if self.n_fft is not None and self.n_fft < self.n_samples:
            raise ValueError("n_fft must be >= n_samples")


def eval_pole_zero(model: PoleZeroPsd, f):
    """PSD in dBc/Hz at offset(s) ``f`` >= 0."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f < 0):
        raise ValueError("frequency offsets must be non-negative")
    num = np.zeros_like(f)
    den = np.zeros_like(f)
    for fz, az in model.zeros:
        num = num + np.log10(1.0 + (f / fz) ** az)
    for fp, ap in model.poles:
        den = den + np.log10(1.0 + (f / fp) ** ap)
    out = 10.0 * (math.log10(model.psd0) + num - den) + 20.0 * math.log10(model.f_c / model.f_ref)
    return out if out.ndim else float(out)


def db_sum(*levels_db):
    """Add powers given in dB and return the total in dB."""
    return 10.0 * np.log10(sum(10.0 ** (np.asarray(x) / 10.0) for x in levels_db))


def eval_composite(model: CompositeLogPsd, f):
    """PSD in dBc/Hz at offset(s) ``f`` > 0; the low branch includes f == LBW."""
    f = np.asarray(f, dtype=np.float64)
    if np.any(f <= 0):
        raise ValueError("log-domain model is undefined at f <= 0")
    low = db_sum(model.ref.eval_db(f, model.f_c), model.pll.eval_db(f, model.f_c))
    high = db_sum(model.vco_v2.eval_db(f, model.f_c), model.vco_v3.eval_db(f, model.f_c))
    out = np.where(f <= model.lbw, low, high)
    return out if out.ndim else float(out)


# Tx: TI LMX2595 fit measured at 20 GHz. The published first zero (3e-6 Hz)
# makes the PSD rise by ~100 dB above PSD0; TX_LMX2595 uses 3e6 Hz.
TX_LMX2595_TABLE = PoleZeroPsd(
    psd0=6.3096e-8,
    zeros=((3e-6, 1.4), (1.75e7, 2.55)),
    poles=((10.0, 1.0), (3.0e5, 2.95)),
    f_ref=20e9,
    f_c=20e9,
)
TX_LMX2595 = replace(TX_LMX2595_TABLE, zeros=((3e6, 1.4), (1.75e7, 2.55)))

# Rx: UE model 1, loop bandwidth 187 kHz
RX_UE_MODEL1 = CompositeLogPsd(
    ref=OscillatorComponent(fom=-215.0, f_z=math.inf, pow_mw=10.0, k=2.0),
    pll=OscillatorComponent(fom=-240.0, f_z=1.0e4, pow_mw=20.0, k=1.0),
    vco_v2=OscillatorComponent(fom=-175.0, f_z=50.3e6, pow_mw=20.0, k=2.0),
    vco_v3=OscillatorComponent(fom=-130.0, f_z=math.inf, pow_mw=20.0, k=3.0),
    lbw=187e3,
    f_c=120e9,
)

PSD_MODELS = {
    "tx-lmx2595": TX_LMX2595,
    "tx-lmx2595-table": TX_LMX2595_TABLE,
    "rx-ue1": RX_UE_MODEL1,
}


def get_model(name, f_c=None):
    try:
        model = PSD_MODELS[name]
    except KeyError:
        raise ValueError(f"unknown PSD model {name!r}; choose from {sorted(PSD_MODELS)}") from None
    return model if f_c is None else model.at_carrier(f_c)


def _rng(seed):
    if isinstance(seed, np.random.Generator):
        return seed
    return np.random.default_rng(seed)


def generate_pn(psd_db, spec: PnGenSpec, rng=None):
    """Synthesize a real phase sequence (radians) with one-sided PSD ``psd_db``.

    White complex Gaussian samples are shaped on the FFT grid by
    ``sqrt(S(|f|)/2 * fs / n)``, transformed back and the real part scaled by
    ``sqrt(2)``; the resulting one-sided PSD of the phase is ``S(f)``.  The DC
    bin is zeroed.

    Args:
        psd_db: callable mapping positive offsets in Hz to dBc/Hz (``-inf``
            for zero power).
        spec: sample rate, length, seed and optional synthesis grid length.
        rng: optional generator overriding ``spec.seed``.
    """
    if spec.n_samples < 2:
        raise ValueError("need at least 2 samples")
    rng = _rng(spec.seed) if rng is None else rng
    n = spec.n_fft or spec.n_samples
    freqs = np.fft.fftfreq(n, d=1.0 / spec.sample_rate)
    level = np.zeros(n)
    nz = freqs != 0
    with np.errstate(over="ignore"):
        level[nz] = 10.0 ** (np.asarray(psd_db(np.abs(freqs[nz]))) / 10.0)
    amp = np.sqrt(level / 2.0 * spec.sample_rate / n)
    white = (rng.standard_normal(n) + 1j * rng.standard_normal(n)) / np.sqrt(2.0)
    y = np.fft.ifft(white * amp) * n
    return np.sqrt(2.0) * y.real[: spec.n_samples]


def integrated_variance(psd_db, f_lo, f_hi, n=4096):
    """Phase variance (rad^2) of a one-sided PSD integrated over [f_lo, f_hi]."""
    f = np.geomspace(f_lo, f_hi, n)
    return float(trapezoid(10.0 ** (np.asarray(psd_db(f)) / 10.0), f))
