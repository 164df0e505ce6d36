"""Verification reports with JSON and aligned-text renderings."""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

SCHEMA = 1
EXIT_CODES = {"pass": 0, "fail": 1, "inconclusive": 2}


def _clean(v):
    if isinstance(v, float):
        if math.isnan(v):
            return "nan"
        if math.isinf(v):
            return "inf" if v > 0 else "-inf"
        return v
    if isinstance(v, dict):
        return {k: _clean(x) for k, x in v.items()}
    if isinstance(v, (list, tuple)):
        return [_clean(x) for x in v]
    if hasattr(v, "item"):
        return _clean(v.item())
    return v


def dumps(obj) -> str:
    """Deterministic JSON (sorted keys, non-finite floats as strings)."""
    return json.dumps(_clean(obj), sort_keys=True, indent=2) + "\n"


def three_sigma_verdict(margin: float, ci95: float) -> str:
    if margin < -3.0 * ci95:
        return "fail"
    if abs(margin) <= 3.0 * ci95:
        return "inconclusive"
    return "pass"


def combine_verdicts(verdicts) -> str:
    verdicts = list(verdicts)
    if "fail" in verdicts:
        return "fail"
    if "inconclusive" in verdicts:
        return "inconclusive"
    return "pass"


@dataclass
class CheckReport:
    name: str
    verdict: str
    rows: list = field(default_factory=list)
    summary: dict = field(default_factory=dict)
    notes: list = field(default_factory=list)

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.verdict]

    def to_dict(self) -> dict:
        return {
            "schema": SCHEMA,
            "name": self.name,
            "verdict": self.verdict,
            "summary": self.summary,
            "notes": list(self.notes),
            "rows": self.rows,
        }

    def to_json(self) -> str:
        return dumps(self.to_dict())

    def to_text(self, max_rows: int | None = 50) -> str:
        lines = [f"{self.name}: {self.verdict.upper()}"]
        for k in sorted(self.summary):
            lines.append(f"  {k} = {_fmt(self.summary[k])}")
        for note in self.notes:
            lines.append(f"  note: {note}")
        rows = self.rows if max_rows is None else self.rows[:max_rows]
        if rows:
            cols = list(rows[0].keys())
            cells = [[_fmt(r.get(c)) for c in cols] for r in rows]
            widths = [max(len(c), *(len(row[i]) for row in cells)) for i, c in enumerate(cols)]
            lines.append("  " + "  ".join(c.rjust(w) for c, w in zip(cols, widths)))
            for row in cells:
                lines.append("  " + "  ".join(v.rjust(w) for v, w in zip(row, widths)))
            if max_rows is not None and len(self.rows) > max_rows:
                lines.append(f"  ... {len(self.rows) - max_rows} more rows")
        return "\n".join(lines) + "\n"


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6g}"
    return str(v)
