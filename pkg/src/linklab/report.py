"""CSV and JSON serialization of sweep reports."""

from __future__ import annotations

import csv
import io
import json
import math
from pathlib import Path

from .engine import COLUMNS, SweepReport, SweepRow

HEADER = ",".join(COLUMNS)
FORMATS = ("csv", "json")


def format_float(x: float) -> str:
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    if math.isnan(x):
        return "nan"
    return format(x, ".9g")


def _encode(x):
    # JSON has no literal for non-finite floats; tag them as strings
    if isinstance(x, float) and not math.isfinite(x):
        return format_float(x)
    return x


def _decode_float(x):
    return float(x) if isinstance(x, str) else x


def report_to_csv(report: SweepReport) -> str:
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(COLUMNS)
    for row in report.rows:
        out = []
        for name in COLUMNS:
            v = getattr(row, name)
            if name == "seed":
                out.append(str(int(v)))
            elif isinstance(v, float):
                out.append(format_float(v))
            else:
                out.append(v)
        writer.writerow(out)
    return buf.getvalue()


def report_to_json(report: SweepReport) -> str:
    rows = [{name: _encode(getattr(r, name)) for name in COLUMNS} for r in report.rows]
    return json.dumps({"metadata": report.metadata, "rows": rows}, indent=1, allow_nan=False)


def report_from_json(text: str) -> SweepReport:
    raw = json.loads(text)
    rows = []
    for r in raw["rows"]:
        values = {name: r[name] for name in COLUMNS}
        for name in COLUMNS:
            if name not in ("axis", "seed"):
                values[name] = _decode_float(values[name])
        rows.append(SweepRow(**values))
    return SweepReport(rows, raw.get("metadata", {}))


def emit_report(report: SweepReport, fmt: str, path: str | Path | None) -> str:
    """Write the report to ``path`` (stdout when ``None``) and return the text."""
    if fmt not in FORMATS:
        raise ValueError(f"format must be one of {FORMATS}, got {fmt!r}")
    text = report_to_csv(report) if fmt == "csv" else report_to_json(report) + "\n"
    if path is None or str(path) == "-":
        print(text, end="")
    else:
        Path(path).write_text(text)
    return text
