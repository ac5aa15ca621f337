"""Per-domain / per-strategy score tables with averages and deltas.

Cells hold display-scale metrics (BLEU and COMET 0-100, disambiguation
accuracy as a percentage). Averages and deltas are computed over cells
rounded half-up to 2 decimals, which is the arithmetic that reproduces
published table averages; full-precision cells are preserved for export.
"""

from __future__ import annotations

import csv
import io
import json
import logging
from dataclasses import dataclass, field
from decimal import ROUND_HALF_UP, Decimal
from pathlib import Path

log = logging.getLogger(__name__)

METRICS = ("bleu", "comet", "disamb")

# (disambiguation template, base template) comparisons, in report order.
DEFAULT_PAIRING: tuple[tuple[str, str], ...] = (
    ("T5", "T1"),
    ("T6", "T1"),
    ("T7", "T2"),
    ("T8", "T2"),
    ("T9", "T3"),
    ("T10", "T4"),
)

_TEMPLATE_ORDER = ["T1", "T5", "T6", "T2", "T7", "T8", "T3", "T9", "T4", "T10"]

# Strategy groups used for bolding the best AVG.
GROUPS: tuple[tuple[str, ...], ...] = (
    ("T1", "T5", "T6"),
    ("T2", "T7", "T8"),
    ("T3", "T9"),
    ("T4", "T10"),
)


class ReportError(ValueError):
    pass


def round2(value: float) -> float:
    """Round half-up to 2 decimals (display arithmetic)."""
    return float(Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP))


@dataclass
class Cell:
    bleu: float | None = None
    comet: float | None = None
    disamb: float | None = None

    def get(self, metric: str) -> float | None:
        return getattr(self, metric)


@dataclass
class ScoreTable:
    rows: dict[str, dict[str, Cell]] = field(default_factory=dict)
    domains: list[str] = field(default_factory=list)
    meta: dict = field(default_factory=dict)

    def templates(self) -> list[str]:
        present = [t for t in _TEMPLATE_ORDER if t in self.rows]
        extras = sorted(set(self.rows) - set(present))
        return present + extras

    def cell(self, template: str, domain: str) -> Cell | None:
        return self.rows.get(template, {}).get(domain)

    def avg(self, template: str, metric: str) -> float | None:
        """Mean of the 2-decimal-rounded present domain cells (unrounded)."""
        values = []
        for domain in self.domains:
            cell = self.cell(template, domain)
            if cell is None:
                continue
            value = cell.get(metric)
            if value is not None:
                values.append(round2(value))
        if not values:
            return None
        return sum(values) / len(values)

    def has_metric(self, metric: str) -> bool:
        return any(
            cell.get(metric) is not None
            for cells in self.rows.values()
            for cell in cells.values()
        )


@dataclass(frozen=True)
class DeltaRow:
    template: str
    base: str
    per_domain: dict[str, dict[str, float | None]]  # domain -> metric -> delta
    avg: dict[str, float | None]  # metric -> delta


def aggregate(score_payloads: list[dict], meta: dict | None = None) -> ScoreTable:
    """Build a table from score payloads; duplicate (template, domain) is an error."""
    table = ScoreTable(meta=meta or {})
    seen: set[tuple[str, str]] = set()
    for payload in score_payloads:
        template = payload["template"]
        domain = payload["domain"]
        key = (template, domain)
        if key in seen:
            raise ReportError(f"duplicate scores for template {template}, domain {domain}")
        seen.add(key)
        if domain not in table.domains:
            table.domains.append(domain)
        disamb = payload.get("disamb")
        disamb_pct = None
        if disamb is not None and disamb.get("accuracy") is not None:
            disamb_pct = disamb["accuracy"] * 100.0
        table.rows.setdefault(template, {})[domain] = Cell(
            bleu=payload.get("bleu"),
            comet=payload.get("comet"),
            disamb=disamb_pct,
        )
    return table


def delta(
    table: ScoreTable, pairing: tuple[tuple[str, str], ...] = DEFAULT_PAIRING
) -> list[DeltaRow]:
    """Disambiguation-minus-base deltas on display-rounded values.

    Pairs whose templates are missing from the table are skipped with a
    warning.
    """
    rows: list[DeltaRow] = []
    for disamb_template, base_template in pairing:
        if disamb_template not in table.rows or base_template not in table.rows:
            log.warning(
                "skipping delta %s-%s: template missing from table",
                disamb_template,
                base_template,
            )
            continue
        per_domain: dict[str, dict[str, float | None]] = {}
        for domain in table.domains:
            metric_deltas: dict[str, float | None] = {}
            for metric in METRICS:
                cell_d = table.cell(disamb_template, domain)
                cell_b = table.cell(base_template, domain)
                value_d = cell_d.get(metric) if cell_d else None
                value_b = cell_b.get(metric) if cell_b else None
                if value_d is None or value_b is None:
                    metric_deltas[metric] = None
                else:
                    metric_deltas[metric] = round2(
                        round2(value_d) - round2(value_b)
                    )
            per_domain[domain] = metric_deltas
        avg_deltas: dict[str, float | None] = {}
        for metric in METRICS:
            avg_d = table.avg(disamb_template, metric)
            avg_b = table.avg(base_template, metric)
            if avg_d is None or avg_b is None:
                avg_deltas[metric] = None
            else:
                avg_deltas[metric] = round2(round2(avg_d) - round2(avg_b))
        rows.append(
            DeltaRow(
                template=disamb_template,
                base=base_template,
                per_domain=per_domain,
                avg=avg_deltas,
            )
        )
    return rows


def format_signed(value: float) -> str:
    """Explicit-sign 2-decimal rendering: +0.32, -2.38, +0.00."""
    quantized = Decimal(repr(value)).quantize(Decimal("0.01"), rounding=ROUND_HALF_UP)
    sign = "-" if quantized < 0 else "+"
    return f"{sign}{abs(quantized):.2f}"


def _fmt(value: float | None) -> str:
    if value is None:
        return "—"
    return f"{Decimal(repr(value)).quantize(Decimal('0.01'), rounding=ROUND_HALF_UP):.2f}"


def _best_avgs(table: ScoreTable, metric: str) -> set[str]:
    """Templates whose AVG is best within their strategy group."""
    best: set[str] = set()
    for group in GROUPS:
        scored = [
            (t, table.avg(t, metric))
            for t in group
            if t in table.rows and table.avg(t, metric) is not None
        ]
        if len(scored) < 2:
            continue
        top = max(round2(v) for _, v in scored)
        best.update(t for t, v in scored if round2(v) == top)
    return best


def emit_markdown(table: ScoreTable, deltas: list[DeltaRow]) -> str:
    metrics = [m for m in METRICS if table.has_metric(m)]
    deltas_by_template = {d.template: d for d in deltas}
    lines: list[str] = []
    missing_cells = False

    for metric in metrics:
        best = _best_avgs(table, metric)
        lines.append(f"## {metric.upper()}")
        lines.append("")
        lines.append("| Strategy | " + " | ".join(table.domains) + " | AVG |")
        lines.append("|" + "---|" * (len(table.domains) + 2))
        for template in table.templates():
            cells = []
            for domain in table.domains:
                cell = table.cell(template, domain)
                value = cell.get(metric) if cell else None
                if value is None:
                    missing_cells = True
                cells.append(_fmt(value))
            avg_value = table.avg(template, metric)
            avg_text = _fmt(avg_value)
            if template in best and avg_value is not None:
                avg_text = f"**{avg_text}**"
            lines.append(f"| {template} | " + " | ".join(cells) + f" | {avg_text} |")
            row_delta = deltas_by_template.get(template)
            if row_delta is not None:
                delta_cells = [
                    format_signed(row_delta.per_domain[domain][metric])
                    if row_delta.per_domain[domain][metric] is not None
                    else "—"
                    for domain in table.domains
                ]
                avg_delta = row_delta.avg[metric]
                avg_delta_text = (
                    format_signed(avg_delta) if avg_delta is not None else "—"
                )
                lines.append(
                    f"| {template}-{row_delta.base} | "
                    + " | ".join(delta_cells)
                    + f" | {avg_delta_text} |"
                )
        lines.append("")
    if missing_cells:
        lines.append("Cells marked — are missing runs and are excluded from AVG.")
        lines.append("")
    if table.meta:
        meta = ", ".join(f"{k}={v}" for k, v in sorted(table.meta.items()))
        lines.append(f"_{meta}_")
        lines.append("")
    return "\n".join(lines)


def emit_csv(table: ScoreTable) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(["template", "domain", "bleu", "comet", "disamb"])
    for template in table.templates():
        for domain in table.domains:
            cell = table.cell(template, domain)
            if cell is None:
                continue
            writer.writerow(
                [
                    template,
                    domain,
                    "" if cell.bleu is None else repr(cell.bleu),
                    "" if cell.comet is None else repr(cell.comet),
                    "" if cell.disamb is None else repr(cell.disamb),
                ]
            )
    return buffer.getvalue()


def parse_csv(text: str) -> ScoreTable:
    table = ScoreTable()
    reader = csv.reader(io.StringIO(text))
    header = next(reader)
    if header != ["template", "domain", "bleu", "comet", "disamb"]:
        raise ReportError(f"unexpected CSV header: {header}")
    for row in reader:
        template, domain, bleu, comet, disamb = row
        if domain not in table.domains:
            table.domains.append(domain)
        table.rows.setdefault(template, {})[domain] = Cell(
            bleu=float(bleu) if bleu else None,
            comet=float(comet) if comet else None,
            disamb=float(disamb) if disamb else None,
        )
    return table


def emit_json(table: ScoreTable, deltas: list[DeltaRow]) -> str:
    payload = {
        "domains": table.domains,
        "cells": {
            template: {
                domain: {
                    "bleu": cell.bleu,
                    "comet": cell.comet,
                    "disamb": cell.disamb,
                }
                for domain, cell in sorted(table.rows[template].items())
            }
            for template in table.templates()
        },
        "avg": {
            template: {metric: table.avg(template, metric) for metric in METRICS}
            for template in table.templates()
        },
        "deltas": [
            {
                "template": d.template,
                "base": d.base,
                "per_domain": d.per_domain,
                "avg": d.avg,
            }
            for d in deltas
        ],
        "meta": table.meta,
    }
    return json.dumps(payload, ensure_ascii=False, indent=2, sort_keys=True) + "\n"


def parse_json(text: str) -> ScoreTable:
    payload = json.loads(text)
    table = ScoreTable(domains=list(payload["domains"]), meta=payload.get("meta", {}))
    for template, cells in payload["cells"].items():
        for domain, values in cells.items():
            table.rows.setdefault(template, {})[domain] = Cell(
                bleu=values.get("bleu"),
                comet=values.get("comet"),
                disamb=values.get("disamb"),
            )
    return table


def emit(
    table: ScoreTable,
    deltas: list[DeltaRow],
    format: str,
    path: str | Path,
) -> None:
    """Write the table in the requested format; byte-deterministic."""
    if format == "markdown":
        text = emit_markdown(table, deltas)
    elif format == "csv":
        text = emit_csv(table)
    elif format == "json":
        text = emit_json(table, deltas)
    else:
        raise ReportError(f"unknown format {format!r}")
    Path(path).write_text(text, encoding="utf-8")
