"""Command line: ``hetlob {run,sweep,analyze,validate}``."""
from __future__ import annotations

import argparse
import math
import sys
from pathlib import Path
from typing import Any, Dict, Optional, Sequence

from .agents import ConfigurationError
from .config import FIELD_NAMES, PROFILES, ExperimentConfig, parse_config
from .eventlog import FormatError
from .runner import ExecutionResult, analyze, default_parallelism, execute
from . import validate as selfcheck

_HELP = {
    "n_agents": "number of traders",
    "n_steps": "simulation steps per run",
    "repetitions": "seeds per grid point",
    "sigma1": "fundamentalist weight scale(s), comma separated, each in [0, 30]",
    "sigma2": "chartist weight scale(s), comma separated, each in [0, 30]",
    "sigma_n": "noise weight scale",
    "tau": "base horizon in steps",
    "tau_f": "reversion horizon; 'null' uses each trader's own horizon",
    "alpha": "base risk aversion",
    "delta": "tick size",
    "sigma_eps": "noise signal scale",
    "sigma_eps_mode": "read sigma_eps as a standard deviation ('std') or a variance ('var')",
    "p_f0": "initial fundamental price",
    "sigma_f": "fundamental log-volatility per step",
    "n_s": "upper bound of initial share endowment",
    "cash_max": "upper bound of initial cash; 'null' means n_s * p_f0",
    "v_min": "variance floor",
    "min_order_volume": "orders at or below this size are dropped",
    "base_seed": "root seed of the sweep",
    "snapshot_every": "write a book snapshot every N steps (0 disables)",
}

SUMMARY_METRICS = (
    "returns_abs_gamma", "placement_gamma", "gap_gamma",
    "mean_abs_log_deviation", "acf_abs_mean", "beta_n_400",
)


def _add_config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("configuration (overrides --config)")
    g.add_argument("--config", type=Path, help="JSON file with configuration fields")
    g.add_argument("--profile", choices=sorted(PROFILES), default="default", help="base profile (default: %(default)s)")
    for name in FIELD_NAMES:
        g.add_argument("--" + name.replace("_", "-"), dest=name, default=argparse.SUPPRESS, metavar="V", help=_HELP.get(name))


def _add_exec_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--out", type=Path, required=True, help="output directory")
    p.add_argument("--parallelism", type=int, default=None, help="worker processes (default: CPU count)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="hetlob", description="Order-book market simulator with heterogeneous traders.")
    sub = parser.add_subparsers(dest="verb", required=True)
    p = sub.add_parser("run", help="simulate one (sigma1, sigma2) point for every repetition")
    _add_config_flags(p)
    _add_exec_flags(p)
    p = sub.add_parser("sweep", help="simulate the full sigma1 x sigma2 x repetition grid")
    _add_config_flags(p)
    _add_exec_flags(p)
    p = sub.add_parser("analyze", help="recompute statistics from event logs in an output directory")
    p.add_argument("out", type=Path)
    sub.add_parser("validate", help="estimator self-checks on synthetic data")
    return parser


def load_config(args: argparse.Namespace) -> ExperimentConfig:
    text = ""
    if args.config is not None:
        try:
            text = args.config.read_text()
        except OSError as exc:
            raise ConfigurationError(f"cannot read config file: {exc}") from None
    overrides: Dict[str, Any] = {k: getattr(args, k) for k in FIELD_NAMES if hasattr(args, k)}
    return parse_config(text, overrides, args.profile)


def _fmt(v: Optional[float]) -> str:
    if v is None or (isinstance(v, float) and math.isnan(v)):
        return "nan"
    return f"{v:.4g}"


def _report(result: ExecutionResult, out=None) -> int:
    out = sys.stdout if out is None else out
    print("sigma1\tsigma2\tmetric\tn\tmean\tstderr\tbeta\tstderr_beta", file=out)
    for r in result.aggregate:
        if r["metric"] in SUMMARY_METRICS:
            print("\t".join([_fmt(r["sigma1"]), _fmt(r["sigma2"]), r["metric"], str(r["n"]), _fmt(r["mean"]),
                             _fmt(r["stderr"]), _fmt(r["beta"]), _fmt(r["stderr_beta"])]), file=out)
    for o in result.errors:
        print(f"run {o.descriptor.name} failed: {o.error}", file=sys.stderr)
    if result.out_dir is not None:
        print(f"outputs in {result.out_dir}", file=out)
    return 1 if result.errors else 0


def _execute(args: argparse.Namespace, single: bool) -> int:
    cfg = load_config(args)
    if single and (len(cfg.sigma1) != 1 or len(cfg.sigma2) != 1):
        raise ConfigurationError("run takes exactly one sigma1 and one sigma2 value; use sweep for grids")
    par = args.parallelism if args.parallelism is not None else default_parallelism()
    if par < 1:
        raise ConfigurationError("parallelism must be >= 1")
    return _report(execute(cfg, out_dir=args.out, parallelism=par))


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.verb == "run":
            return _execute(args, single=True)
        if args.verb == "sweep":
            return _execute(args, single=False)
        if args.verb == "analyze":
            return _report(analyze(args.out))
        checks = selfcheck.run_all()
        for c in checks:
            print(f"{'PASS' if c.passed else 'FAIL'}\t{c.name}\t{c.seconds:.2f}s\t{c.detail}")
        return 0 if all(c.passed for c in checks) else 1
    except ConfigurationError as exc:
        print(f"hetlob: configuration error: {exc}", file=sys.stderr)
        return 2
    except (FormatError, FileNotFoundError, OSError) as exc:
        print(f"hetlob: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
