"""Counters, error norms and machine-readable reports.

The CSV/JSON schema is fixed: one row per sweep point with the columns
listed in ``CSV_COLUMNS``.  The error norm used everywhere is the
normalised L1 norm (sum of absolute differences over the sum of absolute
reference values) and is named in the report header so files stay
self-describing.  Reports are byte-identical across reruns of the same
sweep; wall-clock times are recorded in memory but zeroed on export unless
explicitly requested, since they are the one non-deterministic field.
"""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field

import numpy as np

NORM_NAME = "l1_rel=sum(|candidate-reference|)/sum(|reference|)"
SCHEMA_VERSION = 1

CSV_COLUMNS = [
    "workload",
    "mode",
    "spec",
    "cutoff_l",
    "mantissa_bits",
    "exp_bits",
    "l1_error",
    "truncated_flops",
    "full_flops",
    "truncated_bytes",
    "full_bytes",
    "flags_total",
    "wall_seconds",
]


class ReportSchemaError(ValueError):
    """A report file does not match the documented schema."""


@dataclass
class Counters:
    """Operation and byte counts split by truncated / full-precision."""

    truncated_flops: int = 0
    full_flops: int = 0
    truncated_bytes: int = 0
    full_bytes: int = 0

    def merge(self, other: "Counters") -> None:
        self.truncated_flops += other.truncated_flops
        self.full_flops += other.full_flops
        self.truncated_bytes += other.truncated_bytes
        self.full_bytes += other.full_bytes

    def snapshot(self) -> "Counters":
        return Counters(
            self.truncated_flops,
            self.full_flops,
            self.truncated_bytes,
            self.full_bytes,
        )

    @property
    def total_flops(self) -> int:
        return self.truncated_flops + self.full_flops

    @property
    def total_bytes(self) -> int:
        return self.truncated_bytes + self.full_bytes


@dataclass
class SweepRecord:
    """One (workload, spec, cutoff) run with its error and counters."""

    workload: str
    mode: str
    spec: str
    cutoff_l: int
    mantissa_bits: int
    exp_bits: int
    l1_error: float
    counters: Counters = field(default_factory=Counters)
    flags_total: int = 0
    wall_seconds: float = 0.0

    def row(self, include_wall: bool = False) -> list:
        return [
            self.workload,
            self.mode,
            self.spec,
            self.cutoff_l,
            self.mantissa_bits,
            self.exp_bits,
            repr(float(self.l1_error)),
            self.counters.truncated_flops,
            self.counters.full_flops,
            self.counters.truncated_bytes,
            self.counters.full_bytes,
            self.flags_total,
            repr(float(self.wall_seconds)) if include_wall else "0.0",
        ]


def l1_error(candidate, reference) -> float:
    """Normalised L1 norm of candidate against reference.

    Raises on shape mismatch and on an identically-zero reference (the
    normalisation would be undefined).  Non-finite candidates propagate to
    an inf result, matching the diverged-run sentinel convention.
    """
    c = np.asarray(candidate, dtype=np.float64)
    r = np.asarray(reference, dtype=np.float64)
    if c.shape != r.shape:
        raise ValueError("shape mismatch: %s vs %s" % (c.shape, r.shape))
    denom = float(np.sum(np.abs(r)))
    if denom == 0.0:
        raise ValueError("reference is identically zero; norm undefined")
    return float(np.sum(np.abs(c - r)) / denom)


def counters_snapshot(session) -> Counters:
    """Aggregate counters over a session's root and every entered context."""
    total = session.root_counters.snapshot()
    for ctx in session.context_registry:
        total.merge(ctx.counters)
    return total


def write_csv(records, path, include_wall: bool = False) -> None:
    """Write sweep records with the fixed column order and a norm header."""
    buf = io.StringIO()
    buf.write("# schema=%d norm=%s\n" % (SCHEMA_VERSION, NORM_NAME))
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(CSV_COLUMNS)
    for rec in records:
        writer.writerow(rec.row(include_wall=include_wall))
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write(buf.getvalue())


def export_report(records, format: str, path, include_wall: bool = False) -> None:
    """Write sweep records as 'csv' or 'json' with the documented schema."""
    if format == "csv":
        write_csv(records, path, include_wall=include_wall)
    elif format == "json":
        write_json(records, path, include_wall=include_wall)
    else:
        raise ValueError("report format must be 'csv' or 'json', got %r" % format)


def write_json(records, path, include_wall: bool = False) -> None:
    obj = report_json(records, include_wall=include_wall)
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(obj, fh, indent=2, sort_keys=True)
        fh.write("\n")


def report_json(records, include_wall: bool = False) -> dict:
    rows = []
    for rec in records:
        row = dict(zip(CSV_COLUMNS, rec.row(include_wall=include_wall)))
        row["l1_error"] = float(rec.l1_error)
        row["wall_seconds"] = float(rec.wall_seconds) if include_wall else 0.0
        rows.append(row)
    return {"schema_version": SCHEMA_VERSION, "norm": NORM_NAME, "records": rows}


def validate_report(obj: dict) -> None:
    """Check a JSON report against the documented schema; raise on violation."""
    if not isinstance(obj, dict):
        raise ReportSchemaError("report must be an object")
    if obj.get("schema_version") != SCHEMA_VERSION:
        raise ReportSchemaError("unsupported schema_version %r" % obj.get("schema_version"))
    if "records" not in obj or not isinstance(obj["records"], list):
        raise ReportSchemaError("missing records list")
    for i, row in enumerate(obj["records"]):
        missing = [c for c in CSV_COLUMNS if c not in row]
        if missing:
            raise ReportSchemaError("record %d missing columns: %s" % (i, ", ".join(missing)))


def read_csv(path):
    """Read a report CSV back into a list of dict rows (strings preserved)."""
    rows = []
    with open(path, "r", encoding="utf-8", newline="") as fh:
        lines = [ln for ln in fh if not ln.startswith("#")]
    reader = csv.reader(lines)
    try:
        header = next(reader)
    except StopIteration:
        raise ReportSchemaError("empty report file: %s" % path)
    if header != CSV_COLUMNS:
        raise ReportSchemaError("unexpected columns in %s" % path)
    for raw in reader:
        rows.append(dict(zip(header, raw)))
    return rows
