"""Trial records and their CSV serialization."""

from __future__ import annotations

import csv
import dataclasses
import math
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Iterable, Sequence

SCHEMA_VERSION = 1


@dataclass
class TrialRecord:
    """One seeded experiment outcome.

    Columns whose name starts with ``log_`` hold natural logarithms.
    Missing numeric values are written as ``nan`` (floats) or left empty
    (integers).
    """

    experiment: str
    seed: int
    trial: int = 0
    k: int | None = None
    b: int | None = None
    q: int | None = None
    t: int | None = None
    eps: float = math.nan
    delta: float = math.nan
    gamma: float = math.nan
    calibration_C: float = math.nan
    matvec_count: int | None = None
    bq_proxy: int | None = None
    wall_time: float = math.nan
    frobenius_ratio: float = math.nan
    spectral_ratio: float = math.nan
    max_index_residual: float = math.nan
    sigma_min: float = math.nan
    log_sigma_min: float = math.nan
    log_bound: float = math.nan
    pv_rhs: float = math.nan
    count: int | None = None
    threshold: float = math.nan
    value: float = math.nan
    degenerate: bool | None = None
    passed: bool | None = None
    note: str = ""
    schema_version: int = SCHEMA_VERSION


COLUMNS = ["schema_version"] + [f.name for f in fields(TrialRecord) if f.name != "schema_version"]
_TYPES = {f.name: f.type for f in fields(TrialRecord)}


def format_float(x: float) -> str:
    """17 significant digits, enough to round-trip any double."""
    x = float(x)
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".17g")


def _cell(value) -> str:
    if value is None:
        return ""
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, int):
        return str(value)
    if isinstance(value, float):
        return format_float(value)
    return str(value)


def sort_key(rec: TrialRecord):
    return (rec.experiment, rec.seed, rec.trial, rec.b if rec.b is not None else -1, rec.q if rec.q is not None else -1)


def emit_records(records: Iterable[TrialRecord], path) -> None:
    """Write records as CSV (header row, RFC 4180 quoting, fixed column order)."""
    rows = sorted(records, key=sort_key)
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(COLUMNS)
            for rec in rows:
                d = dataclasses.asdict(rec)
                writer.writerow([_cell(d[c]) for c in COLUMNS])
    except OSError as exc:
        raise OSError(f"cannot write records to {path}: {exc}") from exc


def _parse(name: str, text: str):
    typ = _TYPES[name]
    if text == "":
        return None if "None" in str(typ) else ("" if typ in (str, "str") else math.nan)
    if typ in (str, "str"):
        return text
    if "bool" in str(typ):
        return text == "true"
    if "int" in str(typ):
        return int(text)
    return float(text)


def read_records(path) -> list[TrialRecord]:
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if header != COLUMNS:
            raise ValueError(f"{path}: unexpected columns {header}")
        out = []
        for row in reader:
            kw = {name: _parse(name, cell) for name, cell in zip(header, row)}
            out.append(TrialRecord(**kw))
    return out


def write_table(path, header: Sequence[str], rows: Iterable[Sequence]) -> None:
    """CSV with the same cell formatting as :func:`emit_records`."""
    path = Path(path)
    try:
        with open(path, "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\r\n")
            writer.writerow(list(header))
            for row in rows:
                writer.writerow([_cell(v) for v in row])
    except OSError as exc:
        raise OSError(f"cannot write {path}: {exc}") from exc


TIMING_COLUMNS = ["experiment", "seed", "trial", "b", "q", "matvec_count", "frobenius_ratio", "wall_time"]


def emit_timings(records: Iterable[TrialRecord], path) -> None:
    """Wall-clock sidecar; kept apart so the main CSV can be byte-stable."""
    rows = sorted(records, key=sort_key)
    write_table(path, TIMING_COLUMNS, ([getattr(r, c) for c in TIMING_COLUMNS] for r in rows))


def strip_timings(records: Iterable[TrialRecord]) -> list[TrialRecord]:
    return [dataclasses.replace(r, wall_time=math.nan) for r in records]
