"""Command-line runner: training, evaluation and thin wrappers over the signal-processing blocks."""

import argparse
import csv
import hashlib
import io
import json
import logging
from pathlib import Path
import sys

import numpy as np

from . import __version__, metrics, phase_noise
from .bundle import WaveformBundle, baseline_bundle
from .config import ConfigError, load
from .link import bundle_tensors, evaluate_link, transmit_power
from .system import SystemConfig
from .trainer import LOG_FIELDS, Trainer, TrainingDiverged
from .waveform import FrameConfig, init_rrc

log = logging.getLogger("scwave")

EXIT_CODES = {"usage": 2, "config": 3, "input": 4, "numeric": 5, "diverged": 6}


class CliError(Exception):
    def __init__(self, category, message):
        super().__init__(message)
        self.category = category


def _fmt(x):
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


def write_csv(path, columns, rows, meta):
    """CSV preceded by ``# key: value`` provenance lines (config hash, seed, ...)."""
    buf = io.StringIO()
    for key, value in meta.items():
        buf.write(f"# {key}: {value}\n")
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(columns)
    for row in rows:
        writer.writerow([_fmt(v) for v in row])
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    Path(path).write_text(buf.getvalue())


def args_hash(args, skip=("func", "out", "threads", "verbose")):
    """Digest of a command's effective arguments, for commands without a config file."""
    items = {k: v for k, v in sorted(vars(args).items()) if k not in skip}
    text = json.dumps(items, sort_keys=True, default=str)
    return hashlib.sha256(text.encode()).hexdigest()[:16]


def _meta(command, config_hash, seed, **extra):
    return {"scwave": f"{__version__} {command}", "config_hash": config_hash, "seed": seed, **extra}


def _out_dir(args, cfg=None):
    if args.out:
        return Path(args.out)
    return cfg.output_dir / cfg.raw["scenario"] if cfg is not None else Path(".")


# ------------------------------------------------------------------ commands


def cmd_train(args):
    cfg = load(args.config, args.preset)
    out = _out_dir(args, cfg)
    out.mkdir(parents=True, exist_ok=True)
    (out / "resolved_config.yaml").write_text(cfg.echo())
    trainer = Trainer(cfg.train_config())
    ckpt = out / "checkpoint.json"
    if args.resume:
        trainer.load_checkpoint(args.resume)
    try:
        result = trainer.train(checkpoint_path=ckpt)
    except TrainingDiverged as err:
        raise CliError("diverged", f"{err}; checkpoint at {err.checkpoint}") from err
    except FloatingPointError as err:
        raise CliError("numeric", str(err)) from err
    bundle = result.bundle
    bundle.training["config_hash"] = cfg.hash()
    bundle.save(out / "bundle.json")
    write_csv(out / "train_log.csv", LOG_FIELDS,
              [[row[f] for f in LOG_FIELDS] for row in result.log],
              _meta("train", cfg.hash(), cfg.seed))
    print(f"wrote {out / 'bundle.json'}")


def cmd_eval(args):
    cfg = load(args.config, args.preset)
    out = _out_dir(args, cfg)
    try:
        bundle = WaveformBundle.load(args.bundle)
    except (OSError, ValueError, KeyError) as err:
        raise CliError("input", f"cannot read bundle {args.bundle}: {err}") from err
    sc = cfg.system("eval")
    try:
        t = bundle_tensors(bundle, sc)
    except ValueError as err:
        raise CliError("input", str(err)) from err
    ev = cfg.raw["evaluation"]
    seed = cfg.seed
    meta = _meta("eval", cfg.hash(), seed, bundle=Path(args.bundle).name)
    points = evaluate_link(sc, bundle, ev["ebn0_db"], ev["n_frames"], seed=seed,
                           r=ev["code_rate"], batch=ev["batch_size"], threads=args.threads)
    power = transmit_power(sc, t, ev["ccdf_samples"], seed=seed, counter=1 << 20,
                           batch=ev["batch_size"])
    papr = metrics.papr_at(power, 1e-3)
    form = metrics.stopband_matrix(bundle.tx_taps.size, sc.beta, sc.frame.m)
    aclr = metrics.aclr_beta(bundle.tx_taps, form)
    obw = metrics.obw_filter(bundle.tx_taps, sc.frame.m)
    write_csv(out / "link.csv",
              ("ebn0_db", "ber", "bler", "se_bits_s_hz", "papr_db@1e-3", "aclr_db", "obw"),
              [(p.ebn0_db, p.ber, p.bler, p.se, papr, aclr, obw) for p in points], meta)
    curve = metrics.papr_ccdf(power)
    write_csv(out / "ccdf.csv", ("nu_db", "ccdf"), zip(curve.nu_db, curve.ccdf),
              {**meta, "samples": curve.n_samples})
    write_csv(out / "aclr.csv", ("beta", "aclr_db", "aclr_spectrum_db", "obw"),
              [(sc.beta, aclr, metrics.aclr_spectrum(bundle.tx_taps, sc.beta, sc.frame.m), obw)], meta)
    freqs, psd = filter_psd(bundle.tx_taps, sc.frame.m)
    write_csv(out / "tx_filter_psd.csv", ("freq_norm", "psd_db"), zip(freqs, psd), meta)
    print(f"ACLR_beta (beta={sc.beta}): {aclr:.2f} dB")
    print(f"PAPR at CCDF 1e-3: {papr:.2f} dB; OBW: {obw:.4f} x symbol rate")
    print(f"wrote {out / 'link.csv'}")


def filter_psd(taps, m, nfft=4096):
    """Energy spectrum of a filter in dB over frequency in units of the symbol rate."""
    spec = np.abs(np.fft.fftshift(np.fft.fft(taps, nfft))) ** 2
    freqs = np.fft.fftshift(np.fft.fftfreq(nfft)) * m
    return freqs, 10.0 * np.log10(np.maximum(spec, 1e-300))


def cmd_psd(args):
    model = _psd_model(args.model, args.fc)
    f = np.geomspace(args.fmin, args.fmax, args.points)
    level = model(f)
    write_csv(args.out or "psd.csv", ("freq_hz", "psd_dbc_hz"), zip(f, level),
              _meta("psd", args_hash(args), "none", model=args.model, fc_hz=args.fc))


def cmd_gen_pn(args):
    model = _psd_model(args.model, args.fc)
    spec = phase_noise.PnGenSpec(args.fs, args.n, seed=args.seed, n_fft=args.nfft)
    theta = phase_noise.generate_pn(model, spec)
    write_csv(args.out or "pn.csv", ("n", "phase_rad"), zip(range(args.n), theta),
              _meta("gen-pn", args_hash(args), args.seed, model=args.model))


def _waveform_from_args(args):
    if args.bundle:
        try:
            return WaveformBundle.load(args.bundle)
        except (OSError, ValueError, KeyError) as err:
            raise CliError("input", f"cannot read bundle {args.bundle}: {err}") from err
    frame = FrameConfig(k=args.k, m=args.m)
    kind = args.constellation
    return baseline_bundle(frame, args.span, args.beta, kind)


def cmd_papr(args):
    b = _waveform_from_args(args)
    sc = SystemConfig(frame=b.frame, span=b.span, beta=b.beta, pn_tx=None, pn_rx=None)
    power = transmit_power(sc, bundle_tensors(b, sc), args.samples, seed=args.seed)
    curve = metrics.papr_ccdf(power)
    write_csv(args.out or "ccdf.csv", ("nu_db", "ccdf"), zip(curve.nu_db, curve.ccdf),
              _meta("papr", args_hash(args), args.seed, samples=curve.n_samples))
    print(f"PAPR at CCDF 1e-3: {metrics.papr_at(power, 1e-3):.3f} dB")


def cmd_aclr(args):
    if args.bundle:
        b = _waveform_from_args(args)
        taps, beta, m = b.tx_taps, b.beta if args.beta is None else args.beta, b.m
    else:
        beta = 0.3 if args.beta is None else args.beta
        taps, m = init_rrc(beta, args.span, args.m).taps, args.m
    form = metrics.stopband_matrix(taps.size, beta, m)
    aclr = metrics.aclr_beta(taps, form)
    row = (beta, aclr, metrics.aclr_spectrum(taps, beta, m), metrics.obw_filter(taps, m))
    write_csv(args.out or "aclr.csv", ("beta", "aclr_db", "aclr_spectrum_db", "obw"), [row],
              _meta("aclr", args_hash(args), "none"))
    print(f"ACLR_beta (beta={beta}): {aclr:.2f} dB")


def cmd_export_baseline(args):
    if args.filter != "rrc":
        raise CliError("usage", f"unsupported filter {args.filter!r}")
    b = _waveform_from_args(args)
    b.training["config_hash"] = args_hash(args)
    b.save(args.out or "baseline_bundle.json")


def _psd_model(name, fc):
    try:
        return phase_noise.get_model(name, fc)
    except ValueError as err:
        raise CliError("usage", str(err)) from err


# -------------------------------------------------------------------- parser


def build_parser():
    p = argparse.ArgumentParser(prog="scwave", description=__doc__)
    p.add_argument("--version", action="version", version=__version__)
    p.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = p.add_subparsers(dest="command", required=True)

    def configured(name, func, help_):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--config", help="YAML experiment file (defaults apply when omitted)")
        s.add_argument("--preset", help="named parameter preset, e.g. 120ghz_p55_a45")
        s.add_argument("--out", help="output directory (default: <output_dir>/<scenario>)")
        s.add_argument("--threads", type=int, default=1, help="worker bound for evaluation")
        s.set_defaults(func=func)
        return s

    t = configured("train", cmd_train, "train a waveform")
    t.add_argument("--resume", help="checkpoint to continue from")
    e = configured("eval", cmd_eval, "evaluate a waveform bundle")
    e.add_argument("--bundle", required=True)

    for name, func, default_out, help_ in (
        ("psd", cmd_psd, "psd.csv", "tabulate a phase-noise PSD model"),
        ("gen-pn", cmd_gen_pn, "pn.csv", "synthesize a phase-noise sequence"),
    ):
        s = sub.add_parser(name, help=help_)
        s.add_argument("--model", default="tx-lmx2595", help=f"one of {sorted(phase_noise.PSD_MODELS)}")
        s.add_argument("--fc", type=float, default=120e9, help="carrier frequency in Hz")
        s.add_argument("--out", help=f"CSV path (default {default_out})")
        s.set_defaults(func=func)
        if name == "psd":
            s.add_argument("--fmin", type=float, default=1e3)
            s.add_argument("--fmax", type=float, default=1e10)
            s.add_argument("--points", type=int, default=200)
        else:
            s.add_argument("--fs", type=float, default=4 * 3.93e9, help="sample rate in Hz")
            s.add_argument("--n", type=int, default=16384)
            s.add_argument("--nfft", type=int, default=None)
            s.add_argument("--seed", type=int, default=0)

    def waveform_args(s, beta_default=0.3):
        s.add_argument("--bundle", help="waveform bundle; otherwise a baseline is built")
        s.add_argument("--constellation", choices=("apsk64", "qam"), default=None)
        s.add_argument("--k", type=int, default=6)
        s.add_argument("--m", type=int, default=4)
        s.add_argument("--span", type=int, default=32)
        s.add_argument("--beta", type=float, default=beta_default)
        s.add_argument("--out")

    s = sub.add_parser("papr", help="PAPR CCDF of a waveform")
    waveform_args(s)
    s.add_argument("--samples", type=int, default=1_000_000)
    s.add_argument("--seed", type=int, default=0)
    s.set_defaults(func=cmd_papr)

    s = sub.add_parser("aclr", help="ACLR of a Tx filter")
    waveform_args(s, beta_default=None)
    s.set_defaults(func=cmd_aclr)

    s = sub.add_parser("export-baseline", help="write a conventional waveform bundle")
    waveform_args(s)
    s.add_argument("--filter", default="rrc")
    s.set_defaults(func=cmd_export_baseline)
    return p


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        args.func(args)
    except CliError as err:
        return _fail(err.category, str(err))
    except ConfigError as err:
        return _fail("config", str(err))
    except FileNotFoundError as err:
        return _fail("input", str(err))
    except ValueError as err:
        return _fail("usage", str(err))
    return 0


def _fail(category, message):
    print(f"error[{category}]: {message}", file=sys.stderr)
    return EXIT_CODES[category]


if __name__ == "__main__":
    sys.exit(main())
