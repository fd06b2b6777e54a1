"""Command-line entry point.

Exit codes: 0 success, 1 usage or configuration error, 2 data or parse
error, 3 fit non-convergence.
"""

import argparse
import logging
import sys
from pathlib import Path

from . import __version__
from .errors import (
    AnalysisAborted,
    ConfigError,
    CpwresError,
    FixedPointDivergence,
    IllConditioned,
    NoResonanceFound,
    NonConvergence,
    ParseError,
)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_NONCONVERGENCE = 3


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _emit(text, args, filename):
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / filename).write_text(text)
    sys.stdout.write(text)


def _cmd_fit(args):
    from .fitting import fit_notch
    from .notch import FrequencySweep
    from .traceio import read_trace
    from .workbench import dumps

    sweep = read_trace(args.trace)
    if args.fmin is not None or args.fmax is not None:
        lo = -float("inf") if args.fmin is None else args.fmin
        hi = float("inf") if args.fmax is None else args.fmax
        keep = (sweep.frequencies >= lo) & (sweep.frequencies <= hi)
        sweep = FrequencySweep(sweep.frequencies[keep], sweep.s21[keep], meta=sweep.meta)
    result = fit_notch(sweep)
    rec = result.as_dict()
    if args.format == "csv":
        keys = ["f_r", "Q_l", "Q_c", "phi", "a", "alpha", "tau", "Q_i"]
        lines = ["parameter,value,sigma"]
        lines += [f"{k},{rec[k]:.17g},{rec['uncertainties'].get(k, float('nan')):.17g}" for k in keys]
        text = "\n".join(lines) + "\n"
    else:
        text = dumps({"trace": str(args.trace), "fit": rec})
    _emit(text, args, f"fit.{args.format}")
    return EXIT_OK if result.converged else EXIT_NONCONVERGENCE


def _cmd_sweep(args, kind):
    from .workbench import run_power_sweep, run_temperature_sweep

    run = run_power_sweep if kind == "power" else run_temperature_sweep
    report = run(args.manifest, jobs=args.jobs, extra_line_loss_dB=args.extra_line_loss_db)
    stem = f"{kind}_sweep"
    if args.out:
        report.write(args.out, stem)
    sys.stdout.write(report.to_csv() if args.format == "csv" else report.to_json())
    return EXIT_OK


def _cmd_design(args):
    from .workbench import design_report, dumps, load_design_config

    geom, film, n_harm = load_design_config(args.config)
    report = design_report(geom, film, n_harm)
    if args.format == "csv":
        rows = [("fundamental_frequency", report["fundamental_frequency"])]
        rows += list(report["line"].items())
        rows += list(report.get("film", {}).items())
        text = "quantity,value\n" + "".join(f"{k},{v!r}\n" for k, v in rows)
    else:
        text = dumps(report)
    _emit(text, args, f"design.{args.format}")
    return EXIT_OK


def _cmd_synth(args):
    from .workbench import synth_dataset

    out = args.out or "synth_out"
    manifest = synth_dataset(args.config, out, seed=args.seed)
    sys.stdout.write(f"{manifest}\n")
    return EXIT_OK


def build_parser():
    parser = _Parser(prog="cpwres", description="CPW resonator design, fitting and loss analysis.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-v", "--verbose", action="store_true", help="log progress to stderr")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    def common(p):
        p.add_argument("--out", help="output directory")
        p.add_argument("--format", choices=("json", "csv"), default="json", help="stdout format")

    p = sub.add_parser("fit", help="fit one notch trace (.s2p or .csv)")
    p.add_argument("trace")
    p.add_argument("--fmin", type=float, help="lower frequency bound in Hz")
    p.add_argument("--fmax", type=float, help="upper frequency bound in Hz")
    common(p)
    p.set_defaults(func=_cmd_fit)

    for name, kind in (("power-sweep", "power"), ("temp-sweep", "temperature")):
        p = sub.add_parser(name, help=f"fit every trace of a {kind} sweep manifest")
        p.add_argument("manifest")
        p.add_argument("--jobs", type=int, default=1, help="worker processes (0 = all cores)")
        p.add_argument("--extra-line-loss-db", type=float, default=None,
                       help="unaccounted line loss added to the attenuation chain")
        common(p)
        p.set_defaults(func=lambda a, k=kind: _cmd_sweep(a, k))

    p = sub.add_parser("design", help="line constants and frequencies from a design config")
    p.add_argument("config")
    common(p)
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("synth", help="generate a synthetic sweep dataset")
    p.add_argument("config")
    p.add_argument("--seed", type=int, help="overrides the config seed")
    common(p)
    p.set_defaults(func=_cmd_synth)
    return parser


def main(argv=None):
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    if getattr(args, "extra_line_loss_db", None) is not None and args.extra_line_loss_db < 0:
        parser.error("--extra-line-loss-db must be >= 0")
    if getattr(args, "jobs", 1) is not None and getattr(args, "jobs", 1) < 0:
        parser.error("--jobs must be >= 0")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"cpwres: configuration error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (NonConvergence, FixedPointDivergence) as exc:
        print(f"cpwres: fit did not converge: {exc}", file=sys.stderr)
        return EXIT_NONCONVERGENCE
    except (ParseError, NoResonanceFound, IllConditioned, AnalysisAborted, OSError) as exc:
        print(f"cpwres: data error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except (CpwresError, ValueError) as exc:
        print(f"cpwres: data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
