"""Report tables with per-cell provenance, and their CSV / JSON / Markdown writers."""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from pathlib import Path

MEASURED = "measured-campaign"
PUBLISHED_PARAM = "model-paper-param"
DERIVED_PARAM = "model-derived-param"
PROVENANCE_TAGS = (MEASURED, PUBLISHED_PARAM, DERIVED_PARAM)
FORMATS = ("csv", "json", "md")

# Cells are rounded before writing so repeated runs serialize identically
# regardless of last-ulp noise in model arithmetic.
DIGITS = 6


@dataclass(frozen=True)
class Cell:
    """One report value plus where it came from (``source`` names the call)."""

    value: float | str | None
    provenance: str
    source: str

    def __post_init__(self):
        if self.provenance not in PROVENANCE_TAGS:
            raise ValueError(f"unknown provenance tag {self.provenance!r}")


def _plain(v):
    if isinstance(v, Cell):
        v = v.value
    if isinstance(v, float):
        if not math.isfinite(v):
            return None
        return round(v, DIGITS)
    return v


@dataclass
class Table:
    title: str
    columns: list[str]
    rows: list[dict] = field(default_factory=list)  # column -> Cell or plain key value

    def add(self, row: dict) -> None:
        missing = set(self.columns) - set(row)
        if missing:
            raise ValueError(f"row lacks column(s) {', '.join(sorted(missing))}")
        self.rows.append(row)

    def column(self, name: str) -> list:
        return [_plain(r[name]) for r in self.rows]


@dataclass
class Report:
    command: str
    workload: str
    seed: int
    tables: list[Table]
    meta: dict = field(default_factory=dict)
    warnings: list[str] = field(default_factory=list)

    def table(self, title: str) -> Table:
        for t in self.tables:
            if t.title == title:
                return t
        raise KeyError(title)

    # -- serializers -------------------------------------------------------

    def to_csv(self) -> str:
        """The first table as plain CSV: one header row, '.' decimals."""
        t = self.tables[0]
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(t.columns)
        for r in t.rows:
            w.writerow(["" if _plain(r[c]) is None else _plain(r[c]) for c in t.columns])
        return buf.getvalue()

    def to_json(self) -> str:
        def record(row, columns):
            out = {}
            for c in columns:
                v = row[c]
                if isinstance(v, Cell):
                    out[c] = {"value": _plain(v), "provenance": v.provenance, "source": v.source}
                else:
                    out[c] = _plain(v)
            return out

        doc = {
            "command": self.command,
            "workload": self.workload,
            "seed": self.seed,
            "meta": self.meta,
            "warnings": self.warnings,
            "tables": [
                {"title": t.title, "columns": t.columns, "rows": [record(r, t.columns) for r in t.rows]}
                for t in self.tables
            ],
        }
        return json.dumps(doc, indent=2, sort_keys=False) + "\n"

    def to_markdown(self) -> str:
        lines = [f"# {self.command}: {self.workload}", "", f"seed: {self.seed}", ""]
        for t in self.tables:
            lines += [f"## {t.title}", "", "| " + " | ".join(t.columns) + " |",
                      "|" + "---|" * len(t.columns)]
            for r in t.rows:
                lines.append("| " + " | ".join(_md(r[c]) for c in t.columns) + " |")
            lines.append("")
        if self.warnings:
            lines += ["## Warnings", ""] + [f"- {w}" for w in self.warnings] + [""]
        return "\n".join(lines)

    def write(self, out_dir: str | Path, formats=FORMATS) -> list[Path]:
        out_dir = Path(out_dir)
        out_dir.mkdir(parents=True, exist_ok=True)
        render = {"csv": self.to_csv, "json": self.to_json, "md": self.to_markdown}
        paths = []
        for fmt in formats:
            p = out_dir / f"report.{fmt}"
            p.write_text(render[fmt]())
            paths.append(p)
        return paths


def _md(v) -> str:
    v = _plain(v)
    if v is None:
        return "absent"
    if isinstance(v, float):
        return f"{v:.2f}"
    return str(v)
