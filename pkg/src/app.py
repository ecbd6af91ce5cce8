"""Command-line interface: train, gradcheck, sweep, inspect and report."""

import argparse
import logging
import math
import sys
from pathlib import Path
from typing import Any, Dict, List, NoReturn, Optional, Sequence, Tuple

import matplotlib.pyplot as plt
import pandas as pd

from .config import load_config, parse_value, read_document
from .constants import DEFAULT_GRADCHECK_TOL, RunStatus
from .data_processing import load_path, summarize
from .gradcheck import gradcheck_suite
from .models import ConfigurationError, GradNetError
from .training import collect_runs, sweep, train
from .visualization import plot_learning_curves

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_CONFIG_ERROR = 1
EXIT_DIVERGED = 2
EXIT_GRADCHECK_FAILED = 3

LOG_FORMAT = "%(asctime)s %(levelname)s %(name)s: %(message)s"


class _Parser(argparse.ArgumentParser):
    """Argument parser whose usage errors exit with the config-error code."""

    def error(self, message: str) -> NoReturn:
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG_ERROR, f"{self.prog}: error: {message}\n")


def _assignment(text: str) -> Tuple[str, str]:
    key, sep, value = text.partition("=")
    if not sep or not key:
        raise argparse.ArgumentTypeError(f"expected KEY=VALUE, got {text!r}")
    return key, value


def _train(args: argparse.Namespace) -> int:
    overrides: Dict[str, Any] = {key: parse_value(value) for key, value in args.set}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.out is not None:
        overrides["output_dir"] = args.out
    config = load_config(args.config, overrides)
    history = train(config)
    print(
        f"{config.name}: {history.status.value} after {len(history.records)} epochs, "
        f"best val_acc {history.best_val_acc:.4f} at epoch {history.best_epoch}, "
        f"final g {history.final_g:.4f}"
    )
    return EXIT_DIVERGED if history.status == RunStatus.DIVERGED else EXIT_OK


def _gradcheck(args: argparse.Namespace) -> int:
    report = gradcheck_suite(args.tol)
    frame = report.to_frame()
    frame["g"] = frame["g"].map(lambda g: "-" if math.isnan(g) else f"{g:.1f}")
    print(frame.to_string(index=False, float_format=lambda v: f"{v:.3e}"))
    verdict = "passed" if report.passed else f"FAILED ({len(report.failures)} checks)"
    print(f"gradcheck {verdict} at tolerance {args.tol:g}")
    return EXIT_OK if report.passed else EXIT_GRADCHECK_FAILED


def _sweep(args: argparse.Namespace) -> int:
    raw = read_document(args.config)
    vary: Dict[str, List[Any]] = {}
    for key, values in args.vary:
        if key in vary:
            raise ConfigurationError(f"--vary {key} given twice")
        vary[key] = [parse_value(v) for v in values.split(",") if v != ""]
        if not vary[key]:
            raise ConfigurationError(f"--vary {key} lists no values")
    summary = sweep(raw, vary, args.seeds, args.out, args.workers)
    print(summary.to_string(index=False))
    return EXIT_OK


def _inspect(args: argparse.Namespace) -> int:
    for split, dataset in load_path(args.data).items():
        stats = summarize(dataset)
        print(
            f"{split}: {stats['num_samples']} samples, shape {stats['shape']}, "
            f"{stats['num_classes']} classes, pixels in [{stats['pixel_min']:.4f}, "
            f"{stats['pixel_max']:.4f}] mean {stats['pixel_mean']:.4f}"
        )
        counts = ", ".join(f"{label}: {count}" for label, count in stats["label_counts"].items())
        print(f"  label counts: {counts}")
    return EXIT_OK


def _report(args: argparse.Namespace) -> int:
    combined, metadata = collect_runs(args.runs)
    out = Path(args.out) if args.out else Path(args.runs) / "combined.csv"
    out.parent.mkdir(parents=True, exist_ok=True)
    combined.to_csv(out, index=False)
    print(f"combined {combined['run'].nunique()} runs, {len(combined)} rows -> {out}")

    if args.plot:
        if args.metric not in combined.columns:
            raise ConfigurationError(f"--metric {args.metric} is not a metrics column")
        fig = plot_learning_curves(combined, args.metric)
        fig.savefig(args.plot, dpi=150)
        plt.close(fig)
        print(f"figure -> {args.plot}")

    if args.xlsx:
        with pd.ExcelWriter(args.xlsx, engine="openpyxl") as writer:
            combined.to_excel(writer, sheet_name="Runs", index=False)
            metadata.to_excel(writer, sheet_name="Metadata", index=False)
        print(f"workbook -> {args.xlsx}")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gradnet", description="Train and verify annealed GradNet models.")
    parser.add_argument(
        "--log-level",
        default="INFO",
        choices=["DEBUG", "INFO", "WARNING", "ERROR"],
        help="Logging verbosity (default: INFO)",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("train", help="Run one experiment from a JSON config")
    p.add_argument("--config", required=True, help="Experiment config file")
    p.add_argument("--seed", type=int, help="Override the config seed")
    p.add_argument("--out", help="Override the output directory")
    p.add_argument(
        "--set",
        type=_assignment,
        action="append",
        default=[],
        metavar="KEY=VALUE",
        help="Override a dotted config key, e.g. schedule.tau=0",
    )
    p.set_defaults(handler=_train)

    p = commands.add_parser("gradcheck", help="Check every layer against finite differences")
    p.add_argument("--tol", type=float, default=DEFAULT_GRADCHECK_TOL, help="Relative tolerance")
    p.set_defaults(handler=_gradcheck)

    p = commands.add_parser("sweep", help="Grid of runs over config values and seeds")
    p.add_argument("--config", required=True, help="Base experiment config file")
    p.add_argument(
        "--vary",
        type=_assignment,
        action="append",
        required=True,
        metavar="KEY=V1,V2",
        help="Dotted key and comma-separated values; repeat for a Cartesian grid",
    )
    p.add_argument("--seeds", type=int, default=1, help="Seeds per grid point")
    p.add_argument("--workers", type=int, default=1, help="Parallel worker processes")
    p.add_argument("--out", help="Parent directory of the per-run outputs")
    p.set_defaults(handler=_sweep)

    p = commands.add_parser("inspect", help="Print dataset shape and statistics")
    p.add_argument("--data", required=True, help="Dataset directory or file")
    p.set_defaults(handler=_inspect)

    p = commands.add_parser("report", help="Combine run metrics for plotting")
    p.add_argument("--runs", required=True, help="Directory holding run outputs")
    p.add_argument("--out", help="Combined CSV path (default: RUNS/combined.csv)")
    p.add_argument("--plot", help="Write a learning-curve figure to this path")
    p.add_argument("--metric", default="val_acc", help="Metric plotted by --plot")
    p.add_argument("--xlsx", help="Write an Excel workbook to this path")
    p.set_defaults(handler=_report)
    return parser


def cli(argv: Optional[Sequence[str]] = None) -> int:
    """
    Parse ``argv`` and run the selected subcommand.

    Returns
    -------
    int
        0 on success, 1 on usage or configuration errors, 2 when a trained
        run diverged, 3 when the gradient check failed
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if isinstance(exc.code, int) else EXIT_CONFIG_ERROR

    logging.basicConfig(level=args.log_level, format=LOG_FORMAT, stream=sys.stderr, force=True)
    try:
        return args.handler(args)
    except (GradNetError, FileNotFoundError) as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG_ERROR


def main() -> None:
    """Console entry point."""
    sys.exit(cli(sys.argv[1:]))
