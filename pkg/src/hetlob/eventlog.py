"""Plain-text tabular formats for event logs, book snapshots and tables.

Every file starts with ``#``-prefixed metadata lines (schema version and a
JSON config echo), then one tab-separated header row, then data rows.
Floats are written with ``repr`` so a read-back reproduces them exactly;
absent values are empty fields.
"""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Dict, Iterable, List, Optional, Sequence, TextIO, Tuple

from .agents import OrderKind
from .lob import VOLUME_LOT, Side, Trade
from .market import EventLog, ModelParams, StepRecord, Submission

SCHEMA_VERSION = "hetlob/1"

EVENT_COLUMNS = (
    "time", "price", "log_return", "fundamental", "best_bid", "best_ask",
    "gap_bid", "gap_ask", "expiries", "agent", "order_kind", "order_tick",
    "order_distance", "order_volume", "trades",
)
SNAPSHOT_COLUMNS = ("time", "side", "tick", "volume")


class FormatError(ValueError):
    pass


def _f(x: Optional[float]) -> str:
    return "" if x is None else repr(float(x))


def _opt_float(s: str) -> Optional[float]:
    return None if s == "" else float(s)


def write_header(fh: TextIO, kind: str, meta: Dict[str, Any]) -> None:
    fh.write(f"# schema: {SCHEMA_VERSION} {kind}\n")
    for key in sorted(meta):
        fh.write(f"# {key}: {json.dumps(meta[key], sort_keys=True)}\n")


def read_header(lines: List[str]) -> Tuple[str, Dict[str, Any], int]:
    """Return ``(kind, meta, index of the column-header line)``."""
    if not lines or not lines[0].startswith("# schema: "):
        raise FormatError("missing schema line")
    schema, _, kind = lines[0][len("# schema: "):].strip().partition(" ")
    if schema != SCHEMA_VERSION:
        raise FormatError(f"unsupported schema {schema!r}")
    meta = {}
    i = 1
    while i < len(lines) and lines[i].startswith("# "):
        key, _, value = lines[i][2:].partition(": ")
        meta[key] = json.loads(value)
        i += 1
    return kind, meta, i


def _trade_field(trades: Sequence[Trade]) -> str:
    return ";".join(
        f"{t.taker_agent}:{t.taker_side.value}:{t.maker_agent}:{t.maker_order_id}:{t.tick}:{t.qty}" for t in trades
    )


def _parse_trades(s: str, time: int) -> List[Trade]:
    if not s:
        return []
    out = []
    for item in s.split(";"):
        taker, side, maker, oid, tick, qty = item.split(":")
        out.append(Trade(int(taker), Side(side), int(maker), int(oid), int(tick), int(qty), time))
    return out


def format_record(r: StepRecord) -> str:
    s = r.submission
    sub = ("", "", "", "", "") if s is None else (
        str(s.agent), s.kind.value, str(s.tick), repr(s.distance), repr(s.volume)
    )
    fields = (
        str(r.time), repr(r.price), repr(r.log_return), repr(r.fundamental),
        _f(r.best_bid), _f(r.best_ask), _f(r.gap_bid), _f(r.gap_ask), str(r.expiries),
        *sub, _trade_field(r.trades),
    )
    return "\t".join(fields)


def parse_record(line: str) -> StepRecord:
    parts = line.rstrip("\n").split("\t")
    if len(parts) != len(EVENT_COLUMNS):
        raise FormatError(f"expected {len(EVENT_COLUMNS)} fields, got {len(parts)}")
    t = int(parts[0])
    sub = None
    if parts[10]:
        sub = Submission(int(parts[9]), OrderKind(parts[10]), int(parts[11]), float(parts[12]), float(parts[13]))
    return StepRecord(
        time=t,
        price=float(parts[1]),
        log_return=float(parts[2]),
        fundamental=float(parts[3]),
        best_bid=_opt_float(parts[4]),
        best_ask=_opt_float(parts[5]),
        gap_bid=_opt_float(parts[6]),
        gap_ask=_opt_float(parts[7]),
        expiries=int(parts[8]),
        submission=sub,
        trades=_parse_trades(parts[14], t),
    )


def write_event_log(path, log: EventLog, meta: Optional[Dict[str, Any]] = None) -> None:
    info = {"params": _params_echo(log.params), "seed": log.seed}
    info.update(meta or {})
    with open(path, "w") as fh:
        write_header(fh, "events", info)
        fh.write("\t".join(EVENT_COLUMNS) + "\n")
        for r in log.records:
            fh.write(format_record(r) + "\n")


def read_event_log(path) -> EventLog:
    lines = Path(path).read_text().splitlines()
    kind, meta, i = read_header(lines)
    if kind != "events":
        raise FormatError(f"{path} holds {kind!r}, not events")
    if tuple(lines[i].split("\t")) != EVENT_COLUMNS:
        raise FormatError("unexpected event-log columns")
    log = EventLog(ModelParams(**meta["params"]), int(meta["seed"]))
    log.records = [parse_record(line) for line in lines[i + 1:] if line]
    return log


def write_snapshots(path, rows: Iterable[Tuple[int, str, int, int]], meta: Dict[str, Any]) -> None:
    with open(path, "w") as fh:
        write_header(fh, "book", meta)
        fh.write("\t".join(SNAPSHOT_COLUMNS) + "\n")
        for t, side, tick, lots in rows:
            fh.write(f"{t}\t{side}\t{tick}\t{lots * VOLUME_LOT!r}\n")


def read_snapshots(path) -> List[Tuple[int, str, int, float]]:
    lines = Path(path).read_text().splitlines()
    kind, _, i = read_header(lines)
    if kind != "book":
        raise FormatError(f"{path} holds {kind!r}, not book snapshots")
    rows = []
    for line in lines[i + 1:]:
        if line:
            t, side, tick, vol = line.split("\t")
            rows.append((int(t), side, int(tick), float(vol)))
    return rows


def write_table(path, kind: str, columns: Sequence[str], rows: Iterable[Sequence[Any]], meta: Dict[str, Any]) -> None:
    with open(path, "w") as fh:
        write_header(fh, kind, meta)
        fh.write("\t".join(columns) + "\n")
        for row in rows:
            fh.write("\t".join(_cell(v) for v in row) + "\n")


def read_table(path) -> Tuple[str, Dict[str, Any], List[Dict[str, str]]]:
    lines = Path(path).read_text().splitlines()
    kind, meta, i = read_header(lines)
    cols = lines[i].split("\t")
    return kind, meta, [dict(zip(cols, line.split("\t"))) for line in lines[i + 1:] if line]


def _cell(v: Any) -> str:
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _params_echo(params: ModelParams) -> Dict[str, Any]:
    from dataclasses import asdict

    return asdict(params)
