"""Result records and their on-disk formats (CSV / JSON-lines)."""
from __future__ import annotations

import csv
import json
import math
import os
from dataclasses import asdict, dataclass, field
from typing import Optional


@dataclass(frozen=True)
class Check:
    """One bound comparison. ``anchor`` is the inequality being tested."""

    name: str
    anchor: str
    observed: float
    bound: float
    passed: bool
    gated: bool = True
    note: str = ""


@dataclass(frozen=True)
class Curve:
    name: str
    x: tuple
    y: tuple
    xlabel: str = "x"
    ylabel: str = "y"
    logy: bool = False
    group: str = ""


@dataclass
class ResultRecord:
    mode: str
    fingerprint: str
    master_seed: int
    columns: list
    rows: list
    summary: dict
    checks: list = field(default_factory=list)
    curves: list = field(default_factory=list)
    wall_clock: float = 0.0

    @property
    def passed(self) -> bool:
        return all(c.passed for c in self.checks if c.gated)

    def failures(self) -> list:
        return [c for c in self.checks if c.gated and not c.passed]


def format_number(v) -> str:
    if isinstance(v, bool):
        return "true" if v else "false"
    if isinstance(v, int):
        return str(v)
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return format(v, ".17g")
    return str(v)


def _json_value(v):
    if isinstance(v, float):
        if math.isnan(v) or math.isinf(v):
            return format_number(v)
        return v
    if isinstance(v, (list, tuple)):
        return [_json_value(x) for x in v]
    if isinstance(v, dict):
        return {k: _json_value(x) for k, x in v.items()}
    if hasattr(v, "item"):
        return _json_value(v.item())
    return v


def _parse_cell(text: str):
    t = text.strip()
    if t in ("true", "false"):
        return t == "true"
    if t in ("nan", "inf", "-inf"):
        return float(t)
    try:
        return int(t)
    except ValueError:
        pass
    try:
        return float(t)
    except ValueError:
        return t


def write_csv(path, columns: list, rows: list):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, quoting=csv.QUOTE_MINIMAL)
        w.writerow(columns)
        for row in rows:
            w.writerow([format_number(row.get(c, "")) for c in columns])


def read_csv(path) -> tuple:
    with open(path, newline="", encoding="utf-8") as fh:
        r = csv.reader(fh)
        header = next(r)
        rows = [dict(zip(header, (_parse_cell(c) for c in line))) for line in r]
    return header, rows


def write_jsonl(path, rows: list):
    with open(path, "w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(_json_value(row), sort_keys=True) + "\n")


def read_jsonl(path) -> list:
    out = []
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                out.append({k: (float(v) if v in ("nan", "inf", "-inf") else v) for k, v in row.items()})
    return out


def summary_document(record: ResultRecord) -> dict:
    return {
        "mode": record.mode,
        "fingerprint": record.fingerprint,
        "master_seed": record.master_seed,
        "n_rows": len(record.rows),
        "passed": record.passed,
        "wall_clock_s": record.wall_clock,
        "summary": _json_value(record.summary),
        "checks": [_json_value(asdict(c)) for c in record.checks],
        "curves": [c.name for c in record.curves],
    }


def emit(record: ResultRecord, out_dir, formats=("csv", "json-lines"), plots: bool = True) -> list:
    """Write rows, summary, one CSV per curve and (optionally) PNG figures.

    Returns the list of written paths.
    """
    os.makedirs(out_dir, exist_ok=True)
    written = []
    for fmt in formats:
        if fmt == "csv":
            p = os.path.join(out_dir, "rows.csv")
            write_csv(p, record.columns, record.rows)
        elif fmt == "json-lines":
            p = os.path.join(out_dir, "rows.jsonl")
            write_jsonl(p, record.rows)
        else:
            raise ValueError(f"unknown format {fmt!r}")
        written.append(p)
    p = os.path.join(out_dir, "summary.json")
    with open(p, "w", encoding="utf-8") as fh:
        json.dump(summary_document(record), fh, indent=2, sort_keys=True)
        fh.write("\n")
    written.append(p)
    if record.curves:
        cdir = os.path.join(out_dir, "curves")
        os.makedirs(cdir, exist_ok=True)
        for c in record.curves:
            p = os.path.join(cdir, f"{c.name}.csv")
            write_csv(p, ["x", "y"], [{"x": x, "y": y} for x, y in zip(c.x, c.y)])
            written.append(p)
        if plots:
            from ..plotting import plot_curves
            written.extend(plot_curves(record.curves, os.path.join(out_dir, "figures"), title=record.mode))
    return written
