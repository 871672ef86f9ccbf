"""Sweeps, repetitions, per-run outputs and cross-seed aggregation.

Output directory layout::

    manifest.json              config echo, schema version, seeds, paths, errors
    runs.tsv                   one row of summary metrics per run
    aggregate.tsv              cross-repetition mean and standard error per grid point
    runs/<run>.events.tsv      event log of each run
    runs/<run>.book.tsv        book snapshots (only with snapshot_every > 0)
    ddf/<point>_<name>.tsv     seed-pooled decumulative distributions
    book/<point>.tsv           time-averaged book shape (only with snapshots)

Every file is a deterministic function of the configuration; worker
scheduling never leaks into the bytes written.
"""
from __future__ import annotations

import json
import math
import os
import traceback
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

import numpy as np

from . import eventlog
from .config import ExperimentConfig, from_mapping
from .lob import VOLUME_LOT
from .market import EventLog, run
from .stats import (
    EstimationError,
    aggregate_tail,
    autocorrelation,
    conditional_return_ddfs,
    ddf_points,
    gap_distribution,
    hill,
    modified_rs,
    placement_distance_distribution,
    profiles_from_snapshots,
    tail_sample,
)

TAIL_FRACTION = 0.05
ACF_MAX_LAG = 20
RS_WINDOWS = (100, 200, 400, 800)
RS_Q = 20
SIZE_BREAKS = (15.0, 30.0)
BOOK_WINDOW_TICKS = 200
DDF_POINTS = 512


@dataclass(frozen=True)
class RunDescriptor:
    index: int
    i1: int
    sigma1: float
    i2: int
    sigma2: float
    rep: int
    seed: int

    @property
    def name(self) -> str:
        return f"s1-{self.i1:02d}_s2-{self.i2:02d}_rep-{self.rep:03d}"

    @property
    def point(self) -> str:
        return f"s1-{self.i1:02d}_s2-{self.i2:02d}"


def derive_seed(base_seed: int, i1: int, i2: int, rep: int) -> int:
    """64-bit seed hashed from the base seed and grid coordinates."""
    ss = np.random.SeedSequence(base_seed, spawn_key=(i1, i2, rep))
    return int(ss.generate_state(1, dtype=np.uint64)[0])


def sweep(cfg: ExperimentConfig) -> List[RunDescriptor]:
    out = []
    for i1, s1 in enumerate(cfg.sigma1):
        for i2, s2 in enumerate(cfg.sigma2):
            for rep in range(cfg.repetitions):
                out.append(RunDescriptor(len(out), i1, s1, i2, s2, rep, derive_seed(cfg.base_seed, i1, i2, rep)))
    return out


# -- per-run statistics ------------------------------------------------------

TAIL_METRICS = (
    "returns_abs", "returns_left", "returns_right",
    "placement", "placement_buy", "placement_sell",
    "gap", "gap_bid", "gap_ask",
    "cond_small", "cond_medium", "cond_large",
)
SCALAR_METRICS = (
    "mean_abs_log_deviation", "acf_abs_mean",
    *(f"beta_n_{n}" for n in RS_WINDOWS),
    "n_trades", "n_market_orders", "n_limit_orders", "n_expiries",
)
METRICS = tuple(f"{m}_gamma" for m in TAIL_METRICS) + tuple(f"{m}_k" for m in TAIL_METRICS) + SCALAR_METRICS


def distributions(log: EventLog) -> Dict[str, np.ndarray]:
    """Samples behind every tail metric, keyed like ``TAIL_METRICS``."""
    r = log.returns()
    place = placement_distance_distribution(log.records)
    gaps = gap_distribution(log.records)
    cond = conditional_return_ddfs(log.records, SIZE_BREAKS)
    return {
        "returns_abs": tail_sample(r, "abs"),
        "returns_left": tail_sample(r, "left"),
        "returns_right": tail_sample(r, "right"),
        "placement": np.concatenate([place["buy"], place["sell"]]),
        "placement_buy": place["buy"],
        "placement_sell": place["sell"],
        "gap": np.concatenate([gaps["bid"], gaps["ask"]]),
        "gap_bid": gaps["bid"],
        "gap_ask": gaps["ask"],
        "cond_small": cond.samples["small"],
        "cond_medium": cond.samples["medium"],
        "cond_large": cond.samples["large"],
    }


def _safe(fn, *args) -> float:
    try:
        return float(fn(*args))
    except EstimationError:
        return math.nan


def summarize(log: EventLog, samples: Optional[Dict[str, np.ndarray]] = None) -> Dict[str, float]:
    """Scalar summary of one run; estimators that cannot run yield NaN."""
    samples = distributions(log) if samples is None else samples
    out: Dict[str, float] = {}
    for name in TAIL_METRICS:
        try:
            est = hill(samples[name], TAIL_FRACTION, "abs")
            out[f"{name}_gamma"], out[f"{name}_k"] = est.gamma_hat, float(est.k)
        except EstimationError:
            out[f"{name}_gamma"], out[f"{name}_k"] = math.nan, 0.0
    prices = log.prices()
    out["mean_abs_log_deviation"] = float(np.mean(np.abs(np.log(prices / log.fundamentals()))))
    abs_r = np.abs(log.returns())
    out["acf_abs_mean"] = _safe(lambda: autocorrelation(abs_r, ACF_MAX_LAG)[1:].mean())
    for n in RS_WINDOWS:
        out[f"beta_n_{n}"] = _safe(lambda: modified_rs(abs_r, n, RS_Q).beta_n) if n <= abs_r.size else math.nan
    subs = [rec.submission for rec in log.records if rec.submission is not None]
    out["n_trades"] = float(sum(len(rec.trades) for rec in log.records))
    out["n_market_orders"] = float(sum(1 for s in subs if s.kind.is_market))
    out["n_limit_orders"] = float(sum(1 for s in subs if not s.kind.is_market))
    out["n_expiries"] = float(sum(rec.expiries for rec in log.records))
    return {m: out[m] for m in METRICS}


# -- execution ---------------------------------------------------------------

@dataclass
class RunOutcome:
    descriptor: RunDescriptor
    metrics: Dict[str, float] = field(default_factory=dict)
    samples: Dict[str, np.ndarray] = field(default_factory=dict)
    profile_sum: Optional[np.ndarray] = None
    profile_count: int = 0
    files: List[str] = field(default_factory=list)
    error: Optional[str] = None


def _book_profiles(rows, tick_size: float) -> Tuple[Optional[np.ndarray], int]:
    profiles = profiles_from_snapshots(rows, tick_size, BOOK_WINDOW_TICKS)
    if not profiles:
        return None, 0
    return np.sum(profiles, axis=0), len(profiles)


def _outcome_from_log(d: RunDescriptor, log: EventLog, snap_rows, files: List[str]) -> RunOutcome:
    samples = distributions(log)
    psum, pcount = _book_profiles(snap_rows, log.params.delta) if snap_rows else (None, 0)
    return RunOutcome(d, summarize(log, samples), samples, psum, pcount, files)


def _run_meta(cfg: ExperimentConfig, d: RunDescriptor) -> Dict[str, Any]:
    return {"config": cfg.to_dict(), "run": asdict(d)}


def execute_one(cfg: ExperimentConfig, d: RunDescriptor, out_dir: Optional[str]) -> RunOutcome:
    """Simulate one descriptor and write its files; never raises."""
    try:
        params = cfg.model_params(d.sigma1, d.sigma2)
        log, _ = run(params, cfg.n_steps, d.seed, snapshot_every=cfg.snapshot_every)
        files: List[str] = []
        snap_rows = [(t, side, tick, lots * VOLUME_LOT) for t, side, tick, lots in log.snapshots]
        if out_dir is not None:
            meta = _run_meta(cfg, d)
            rel = f"runs/{d.name}.events.tsv"
            eventlog.write_event_log(Path(out_dir) / rel, log, meta)
            files.append(rel)
            if cfg.snapshot_every:
                rel = f"runs/{d.name}.book.tsv"
                eventlog.write_snapshots(Path(out_dir) / rel, log.snapshots, meta)
                files.append(rel)
        return _outcome_from_log(d, log, snap_rows, files)
    except Exception as exc:  # reported per run, siblings continue
        return RunOutcome(d, error=f"{type(exc).__name__}: {exc}\n{traceback.format_exc(limit=3)}")


def _worker(args) -> RunOutcome:
    cfg_dict, d, out_dir = args
    return execute_one(from_mapping(cfg_dict), d, out_dir)


def _outcomes(cfg: ExperimentConfig, descriptors: Sequence[RunDescriptor], out_dir, parallelism: int) -> Iterator[RunOutcome]:
    out = None if out_dir is None else str(out_dir)
    if parallelism <= 1 or len(descriptors) <= 1:
        for d in descriptors:
            yield execute_one(cfg, d, out)
        return
    jobs = [(cfg.to_dict(), d, out) for d in descriptors]
    with ProcessPoolExecutor(max_workers=parallelism) as pool:
        # map yields in submission order, so the fold below is order-stable
        yield from pool.map(_worker, jobs)


@dataclass
class _PointAccumulator:
    sigma1: float
    sigma2: float
    point: str
    outcomes: List[RunOutcome] = field(default_factory=list)


@dataclass
class ExecutionResult:
    out_dir: Optional[Path]
    outcomes: List[RunOutcome]
    aggregate: List[Dict[str, Any]]

    @property
    def errors(self) -> List[RunOutcome]:
        return [o for o in self.outcomes if o.error is not None]

    def metric(self, sigma1: float, sigma2: float, name: str) -> np.ndarray:
        """Per-repetition values of ``name`` at one grid point, in repetition order."""
        return np.array([
            o.metrics.get(name, math.nan) for o in self.outcomes
            if o.error is None and o.descriptor.sigma1 == sigma1 and o.descriptor.sigma2 == sigma2
        ])

    def row(self, sigma1: float, sigma2: float, name: str) -> Dict[str, Any]:
        for r in self.aggregate:
            if r["sigma1"] == sigma1 and r["sigma2"] == sigma2 and r["metric"] == name:
                return r
        raise KeyError((sigma1, sigma2, name))


AGGREGATE_COLUMNS = ("sigma1", "sigma2", "metric", "n", "mean", "stderr", "beta", "stderr_beta", "beta_band")


def aggregate_point(sigma1: float, sigma2: float, outcomes: Sequence[RunOutcome]) -> List[Dict[str, Any]]:
    """Cross-repetition fold for one grid point.

    Tail metrics aggregate the inverse index; ``beta`` is ``1/mean`` with
    its delta-method standard error. Scalar metrics report mean and
    standard error of the mean.
    """
    ok = [o for o in outcomes if o.error is None]
    rows = []
    for name in METRICS:
        values = [o.metrics[name] for o in ok]
        row: Dict[str, Any] = {"sigma1": sigma1, "sigma2": sigma2, "metric": name}
        if name.endswith("_gamma"):
            agg = aggregate_tail(values)
            row.update(n=agg.n, mean=agg.mean_gamma, stderr=agg.stderr_gamma, beta=agg.beta,
                       stderr_beta=agg.stderr_beta, beta_band=agg.beta_band)
        else:
            v = np.asarray([x for x in values if np.isfinite(x)], dtype=float)
            mean = float(v.mean()) if v.size else math.nan
            se = float(v.std(ddof=1) / math.sqrt(v.size)) if v.size > 1 else math.nan
            row.update(n=int(v.size), mean=mean, stderr=se, beta=None, stderr_beta=None, beta_band=None)
        rows.append(row)
    return rows


def _write_point_files(out: Path, acc: _PointAccumulator, meta: Dict[str, Any], delta: float) -> List[str]:
    files = []
    ok = [o for o in acc.outcomes if o.error is None]
    for name in TAIL_METRICS:
        pooled = np.concatenate([o.samples[name] for o in ok]) if ok else np.empty(0)
        if pooled.size == 0:
            continue
        x, p = ddf_points(pooled, DDF_POINTS)
        rel = f"ddf/{acc.point}_{name}.tsv"
        eventlog.write_table(out / rel, "ddf", ("x", "p_exceed"), zip(x.tolist(), p.tolist()),
                             {**meta, "distribution": name, "n": int(pooled.size)})
        files.append(rel)
    with_book = [o for o in ok if o.profile_count]
    if with_book:
        total = np.sum([o.profile_sum for o in with_book], axis=0)
        count = sum(o.profile_count for o in with_book)
        shape = total / count
        offsets = range(-BOOK_WINDOW_TICKS, BOOK_WINDOW_TICKS + 1)
        rel = f"book/{acc.point}.tsv"
        eventlog.write_table(out / rel, "book_shape", ("offset_ticks", "offset_price", "mean_depth"),
                             ((k, k * delta, float(v)) for k, v in zip(offsets, shape)),
                             {**meta, "snapshots": count})
        files.append(rel)
    return files


def execute(
    cfg: ExperimentConfig,
    descriptors: Optional[Sequence[RunDescriptor]] = None,
    out_dir=None,
    parallelism: int = 1,
) -> ExecutionResult:
    """Run ``descriptors`` (default: the full sweep) and fold results in descriptor order."""
    descriptors = sweep(cfg) if descriptors is None else list(descriptors)
    out = None if out_dir is None else Path(out_dir)
    if out is not None:
        for sub in ("runs", "ddf", "book"):
            (out / sub).mkdir(parents=True, exist_ok=True)
    return _fold(cfg, _outcomes(cfg, descriptors, out, parallelism), out)


def _fold(cfg: ExperimentConfig, outcomes: Iterable[RunOutcome], out: Optional[Path]) -> ExecutionResult:
    meta = {"config": cfg.to_dict()}
    kept: List[RunOutcome] = []
    rows: List[Dict[str, Any]] = []
    point_files: List[str] = []
    acc: Optional[_PointAccumulator] = None

    def flush():
        nonlocal acc
        if acc is None:
            return
        rows.extend(aggregate_point(acc.sigma1, acc.sigma2, acc.outcomes))
        if out is not None:
            point_files.extend(_write_point_files(out, acc, {**meta, "sigma1": acc.sigma1, "sigma2": acc.sigma2}, cfg.delta))
        for o in acc.outcomes:
            o.samples = {}  # pooled files are written; release memory
        acc = None

    for o in outcomes:
        d = o.descriptor
        if acc is None or acc.point != d.point:
            flush()
            acc = _PointAccumulator(d.sigma1, d.sigma2, d.point)
        acc.outcomes.append(o)
        kept.append(o)
    flush()

    if out is not None:
        eventlog.write_table(out / "aggregate.tsv", "aggregate", AGGREGATE_COLUMNS,
                             ([r[c] for c in AGGREGATE_COLUMNS] for r in rows), meta)
        run_cols = ("index", "sigma1", "sigma2", "rep", "seed", "status") + METRICS
        eventlog.write_table(
            out / "runs.tsv", "runs", run_cols,
            ([o.descriptor.index, o.descriptor.sigma1, o.descriptor.sigma2, o.descriptor.rep, o.descriptor.seed,
              "ok" if o.error is None else "error"] + [o.metrics.get(m) for m in METRICS] for o in kept),
            meta,
        )
        manifest = {
            "schema": eventlog.SCHEMA_VERSION,
            "config": cfg.to_dict(),
            "runs": [
                {**asdict(o.descriptor), "files": o.files, "error": o.error} for o in kept
            ],
            "outputs": ["aggregate.tsv", "runs.tsv"] + point_files,
        }
        (out / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    return ExecutionResult(out, kept, rows)


def analyze(out_dir) -> ExecutionResult:
    """Recompute every statistic from the event logs and snapshots on disk."""
    out = Path(out_dir)
    manifest = json.loads((out / "manifest.json").read_text())
    if manifest.get("schema") != eventlog.SCHEMA_VERSION:
        raise eventlog.FormatError(f"unsupported manifest schema {manifest.get('schema')!r}")
    cfg = from_mapping(manifest["config"])

    def outcomes() -> Iterator[RunOutcome]:
        for entry in manifest["runs"]:
            files = entry.pop("files")
            error = entry.pop("error")
            d = RunDescriptor(**entry)
            if error is not None:
                yield RunOutcome(d, files=files, error=error)
                continue
            try:
                log = eventlog.read_event_log(out / files[0])
                rows = eventlog.read_snapshots(out / files[1]) if len(files) > 1 else []
                yield _outcome_from_log(d, log, rows, files)
            except Exception as exc:
                yield RunOutcome(d, files=files, error=f"{type(exc).__name__}: {exc}")

    return _fold(cfg, outcomes(), out)


def default_parallelism() -> int:
    return max(1, os.cpu_count() or 1)
