"""Experiment reports and their on-disk layout.

An output directory holds ``report.json`` (config echo, diagnostics, every
table), one ``<table>.csv`` per result table and a plain ``summary.txt``.
Floats are written with ``repr`` so parsing recovers them exactly; non-finite
floats appear as the strings ``NaN``, ``Infinity`` and ``-Infinity`` in JSON.
"""
from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path

import jsonschema
import numpy as np

_NONFINITE = {"NaN": math.nan, "Infinity": math.inf, "-Infinity": -math.inf}


@dataclass
class Table:
    name: str
    columns: list
    rows: list = field(default_factory=list)


@dataclass
class ExperimentReport:
    config: dict
    tables: list
    diagnostics: dict
    wall_clock: float
    version: str

    def table(self, name: str) -> Table:
        for t in self.tables:
            if t.name == name:
                return t
        raise KeyError(name)

    def column(self, table: str, col: str) -> list:
        t = self.table(table)
        j = t.columns.index(col)
        return [r[j] for r in t.rows]


def _plain(v):
    """Convert numpy scalars and containers into JSON-ready Python values."""
    if isinstance(v, dict):
        return {str(k): _plain(x) for k, x in v.items()}
    if isinstance(v, (list, tuple, np.ndarray)):
        return [_plain(x) for x in v]
    if isinstance(v, (bool, np.bool_)):
        return bool(v)
    if isinstance(v, (int, np.integer)):
        return int(v)
    if isinstance(v, (float, np.floating)):
        f = float(v)
        if math.isnan(f):
            return "NaN"
        if math.isinf(f):
            return "Infinity" if f > 0 else "-Infinity"
        return f
    return v


def _unplain(v):
    if isinstance(v, dict):
        return {k: _unplain(x) for k, x in v.items()}
    if isinstance(v, list):
        return [_unplain(x) for x in v]
    if isinstance(v, str) and v in _NONFINITE:
        return _NONFINITE[v]
    return v


def schema() -> dict:
    return json.loads(resources.files("rcmlab").joinpath("report.schema.json").read_text())


def to_json_dict(report: ExperimentReport) -> dict:
    return {
        "artifact_version": report.version,
        "config": _plain(report.config),
        "diagnostics": _plain(report.diagnostics),
        "wall_clock_seconds": float(report.wall_clock),
        "tables": {t.name: {"columns": list(t.columns), "rows": _plain(t.rows)} for t in report.tables},
    }


def _cell(v) -> str:
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    return str(v)


def table_csv(t: Table) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(t.columns)
    for r in t.rows:
        w.writerow([_cell(v) for v in r])
    return buf.getvalue()


def summary_text(report: ExperimentReport) -> str:
    cfg = report.config
    lines = [f"experiment: {cfg.get('experiment', '')}", f"artifact version: {report.version}",
             f"seed: {cfg.get('seed', '')}", f"wall clock: {report.wall_clock:.3f} s", "", "diagnostics:"]
    for k, v in sorted(report.diagnostics.items()):
        lines.append(f"  {k}: {v}")
    lines += ["", "tables:"]
    for t in report.tables:
        lines.append(f"  {t.name}.csv: {len(t.rows)} data rows")
    if not report.tables:
        lines.append("  (none): 0 data rows")
    return "\n".join(lines) + "\n"


def emit_report(report: ExperimentReport, path, format: str = "both") -> list[Path]:
    """Write the report into directory ``path``; returns the files written."""
    if format not in ("json", "csv", "both"):
        raise ValueError("format must be 'json', 'csv' or 'both'")
    out = Path(path)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    if format in ("json", "both"):
        doc = to_json_dict(report)
        jsonschema.validate(doc, schema())
        p = out / "report.json"
        p.write_text(json.dumps(doc, indent=1, sort_keys=True, allow_nan=False))
        written.append(p)
    if format in ("csv", "both"):
        for t in report.tables:
            p = out / f"{t.name}.csv"
            p.write_text(table_csv(t))
            written.append(p)
    p = out / "summary.txt"
    p.write_text(summary_text(report))
    written.append(p)
    return written


def load_report(path) -> ExperimentReport:
    """Parse ``report.json`` from an output directory (or the file itself)."""
    p = Path(path)
    if p.is_dir():
        p = p / "report.json"
    doc = json.loads(p.read_text())
    tables = [Table(name, t["columns"], _unplain(t["rows"])) for name, t in doc["tables"].items()]
    return ExperimentReport(_unplain(doc["config"]), tables, _unplain(doc["diagnostics"]),
                            doc["wall_clock_seconds"], doc["artifact_version"])


def _parse_cell(s: str):
    if s == "":
        return None
    try:
        return int(s)
    except ValueError:
        pass
    try:
        return float(s)
    except ValueError:
        return s


def load_table_csv(path) -> Table:
    p = Path(path)
    with p.open(newline="") as fh:
        rows = list(csv.reader(fh))
    return Table(p.stem, rows[0], [[_parse_cell(c) for c in r] for r in rows[1:]])
