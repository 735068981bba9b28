"""Plot-ready Pareto-front reports (CSV or JSON) and their parsers."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import dataclass, field
from typing import Sequence


class ReportError(ValueError):
    pass


@dataclass(frozen=True)
class ParetoRow:
    objective1: float
    objective2: float
    fields: dict = field(default_factory=dict)


def _sorted(rows: Sequence[ParetoRow]) -> list[ParetoRow]:
    return sorted(rows, key=lambda r: (r.objective1, r.objective2))


def _cell(v) -> str:
    return repr(v) if isinstance(v, float) else str(v)


def _value(text: str):
    for conv in (int, float):
        try:
            return conv(text)
        except ValueError:
            pass
    return text


def emit_pareto_report(rows: Sequence[ParetoRow], fmt: str = "csv") -> str:
    """Rows sorted by ``objective1``; columns ``objective1,objective2,<fields>``."""
    if not rows:
        raise ReportError("empty front")
    rows = _sorted(rows)
    names = list(rows[0].fields)
    for r in rows:
        if list(r.fields) != names:
            raise ReportError("all rows must carry the same fields")
    if fmt == "json":
        return json.dumps([{"objective1": r.objective1, "objective2": r.objective2, **r.fields}
                           for r in rows], indent=1) + "\n"
    if fmt != "csv":
        raise ReportError(f"unknown report format {fmt!r}")
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["objective1", "objective2", *names])
    for r in rows:
        w.writerow([repr(float(r.objective1)), repr(float(r.objective2)), *(_cell(r.fields[n]) for n in names)])
    return buf.getvalue()


def parse_pareto_report(text: str, fmt: str = "csv") -> list[ParetoRow]:
    if fmt == "json":
        data = json.loads(text)
        return [ParetoRow(float(d.pop("objective1")), float(d.pop("objective2")), d) for d in data]
    reader = csv.reader(io.StringIO(text))
    header = next(reader, None)
    if not header or header[:2] != ["objective1", "objective2"]:
        raise ReportError("report must start with objective1,objective2")
    rows = []
    for rec in reader:
        if len(rec) != len(header):
            raise ReportError("ragged report row")
        rows.append(ParetoRow(float(rec[0]), float(rec[1]),
                              {k: _value(v) for k, v in zip(header[2:], rec[2:])}))
    return rows


def cache_front_rows(front, improvements=None) -> list[ParetoRow]:
    """Rows for a cache front: (time, energy), config fields, optional improvement columns.

    ``improvements`` is an ``ImprovementReport`` over the same ``front``.
    """
    from .cacheopt import config_fields

    extra: dict[int, dict] = {k: {} for k in range(len(front))}
    if improvements is not None:
        for imp in improvements.rows:
            extra[imp.member][f"time_improvement_pct_{imp.baseline}"] = imp.time_pct
            extra[imp.member][f"energy_improvement_pct_{imp.baseline}"] = imp.energy_pct
    return [ParetoRow(s.time_s, s.energy_j, {**config_fields(s.config), **extra[k]})
            for k, s in enumerate(front)]
