"""Command-line entry point.

Exit codes: 0 success, 1 oracle failure, 2 configuration error.
"""

from __future__ import annotations

import argparse
import csv
import io
import sys
from pathlib import Path

from .bench.config import ConfigError, ExperimentConfig, load_json
from .bench.experiment import SUMMARY_FIELDS, read_trials, run_experiment, to_csv, write_text
from .bench.oracles import SUITES, run_oracles
from .bench.report import emit_bounds_table, emit_plot_data
from .bounds import BoundInputs

EXIT_OK, EXIT_ORACLE, EXIT_CONFIG = 0, 1, 2


def _int_list(text: str) -> list[int]:
    try:
        return [int(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got {text!r}") from None


def _float_list(text: str) -> list[float]:
    try:
        return [float(v) for v in text.split(",") if v.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got {text!r}") from None


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="irmbench", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", type=Path, help="JSON config document")
        p.add_argument("--out", type=Path, help="output directory")
        p.add_argument("--seed", type=int, help="master seed")

    run = sub.add_parser("run", help="ERM vs IRM regression experiment")
    common(run)
    run.add_argument("--variant", choices=["cs", "cf", "ac", "hb"])
    run.add_argument("--samples", type=_int_list, help="sample sizes, e.g. 50,200,2000")
    run.add_argument("--trials", type=int)
    run.add_argument("--lambda-grid", type=_float_list, dest="lambda_grid", help="e.g. 0,1e-5,1e-4")
    run.add_argument("--jobs", type=int, help="worker processes (trials are independent)")

    orc = sub.add_parser("oracles", help="verification suites")
    common(orc)
    orc.add_argument("--suite", action="append", choices=SUITES, help="repeatable; default all")

    bnd = sub.add_parser("bounds", help="sample-complexity table")
    common(bnd)

    plt = sub.add_parser("plotdata", help="series files and figures from a trials CSV")
    common(plt)
    plt.add_argument("--variant", choices=["cs", "cf", "ac", "hb"], help="restrict to one variant")
    plt.add_argument("--input", type=Path, help="trials CSV (default: <out>/trials.csv)")
    plt.add_argument("--no-figures", action="store_true")
    return ap


def _config(args) -> ExperimentConfig:
    doc = load_json(args.config) if args.config else {}
    cfg = ExperimentConfig.from_dict(doc)
    over = {"variant": getattr(args, "variant", None), "sample_grid": getattr(args, "samples", None),
            "trials": getattr(args, "trials", None), "seed": args.seed,
            "lambda_grid": getattr(args, "lambda_grid", None), "jobs": getattr(args, "jobs", None),
            "out": str(args.out) if args.out else None}
    return cfg.override(**over)


def cmd_run(args, out) -> int:
    cfg = _config(args)
    summary = run_experiment(cfg, Path(cfg.out))
    out.write(to_csv(SUMMARY_FIELDS, summary))
    return EXIT_OK


def cmd_oracles(args, out) -> int:
    seed = args.seed if args.seed is not None else 0
    checks = run_oracles(args.suite, seed=seed)
    text = io.StringIO()
    w = csv.writer(text, lineterminator="\n")
    w.writerow(["suite", "check", "value", "relation", "tolerance", "result"])
    w.writerows(c.row() for c in checks)
    out.write(text.getvalue())
    if args.out:
        write_text(Path(args.out) / "oracles.csv", text.getvalue())
    return EXIT_OK if all(c.passed for c in checks) else EXIT_ORACLE


def cmd_bounds(args, out) -> int:
    doc = load_json(args.config) if args.config else {}
    try:
        inp = BoundInputs(**doc.get("bounds", {}))
        csv_text, md = emit_bounds_table(inp)
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"bad bound inputs: {exc}") from None
    out.write(csv_text)
    if args.out:
        write_text(Path(args.out) / "bounds.csv", csv_text)
        write_text(Path(args.out) / "bounds.md", md)
    return EXIT_OK


def cmd_plotdata(args, out) -> int:
    out_dir = args.out or Path(ExperimentConfig.from_dict(load_json(args.config) if args.config else {}).out)
    src = args.input or out_dir / "trials.csv"
    if not Path(src).exists():
        raise ConfigError(f"trials file {src} not found")
    rows = read_trials(src)
    if args.variant:
        rows = [r for r in rows if r.variant == args.variant]
    if not rows:
        raise ConfigError("no trial rows to plot")
    paths = emit_plot_data(rows, out_dir, figures=not args.no_figures)
    w = csv.writer(out, lineterminator="\n")
    w.writerow(["file"])
    w.writerows([[str(p)] for p in paths])
    return EXIT_OK


COMMANDS = {"run": cmd_run, "oracles": cmd_oracles, "bounds": cmd_bounds, "plotdata": cmd_plotdata}


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    out = sys.stdout
    try:
        out.reconfigure(encoding="utf-8", newline="\n")
    except (AttributeError, ValueError):
        pass
    try:
        return COMMANDS[args.command](args, out)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    sys.exit(main())
