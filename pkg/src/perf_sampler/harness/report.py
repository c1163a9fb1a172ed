"""Rendering of evaluation reports: per-cell CSV, aligned text table, raw JSON lines."""

from __future__ import annotations

import csv
import io
import json

import numpy as np

from .protocol import EvalReport

CSV_FIELDS = ("system", "metric", "model", "budget", "sampler", "status", "mean_rmse", "std_rmse",
              "repetitions", "improvement_pct", "p_value", "cliffs_delta", "markers", "best", "cell")


def format_cell(mean: float, improvement: float | None = None, marks: str = "", digits: int = 3) -> str:
    """``2.309(↑59.3%)*L``: mean RMSE, improvement over the reference, markers."""
    text = f"{mean:.{digits}f}"
    if improvement is not None and np.isfinite(improvement):
        arrow = "↑" if improvement >= 0 else "↓"
        text += f"({arrow}{abs(improvement):.1f}%)"
    return text + marks


def _rendered(report: EvalReport, cell) -> str:
    if cell.status == "failed":
        return "failed"
    if cell.status == "degenerate":
        return "degenerate"
    if cell.sampler == report.spec.candidate:
        return format_cell(cell.mean, cell.improvement, cell.markers)
    return format_cell(cell.mean)


def best_samplers(report: EvalReport, row) -> set:
    """Labels with the lowest mean RMSE in a row (raw minimum, no tie testing)."""
    means = {s: report.cells[(*row, s)].mean for s in report.samplers}
    means = {s: m for s, m in means.items() if m is not None}
    if not means:
        return set()
    low = min(means.values())
    return {s for s, m in means.items() if m == low}


def _num(v, fmt="{:.6g}"):
    return "" if v is None else fmt.format(v)


def report_csv(report: EvalReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CSV_FIELDS)
    for row in report.rows():
        best = best_samplers(report, row)
        for s in report.samplers:
            c = report.cells[(*row, s)]
            annotated = s != report.spec.reference and c.improvement is not None
            p = _num(c.p_value, "{:.6g}") if c.p_value is not None else ("n/a" if annotated else "")
            w.writerow([c.system, c.metric, c.model, c.budget, s, c.status, _num(c.mean, "{:.6f}"),
                        _num(float(np.std(c.rmses)) if c.mean is not None else None, "{:.6f}"),
                        len(c.rmses), _num(c.improvement, "{:.2f}"), p, _num(c.delta, "{:.4f}"),
                        c.markers, int(s in best), _rendered(report, c)])
    return buf.getvalue()


def report_text(report: EvalReport) -> str:
    """Aligned table: one line per (metric, model, budget), one column per sampler; best in brackets."""
    header = ["metric", "model", "k", *report.samplers]
    lines = []
    for row in report.rows():
        best = best_samplers(report, row)
        cells = []
        for s in report.samplers:
            text = _rendered(report, report.cells[(*row, s)])
            cells.append(f"[{text}]" if s in best else text)
        lines.append([row[1], row[2], str(row[3]), *cells])
    widths = [max(len(r[i]) for r in [header, *lines]) for i in range(len(header))]
    out = [f"system: {report.system}   reference: {report.spec.reference}   "
           f"repetitions: {report.spec.repetitions}"]
    for r in [header, *lines]:
        out.append("  ".join(v.ljust(w) for v, w in zip(r, widths)).rstrip())
    if report.spec.repetitions < 2:
        out.append("p-values: n/a (a single repetition gives no paired test)")
    return "\n".join(out) + "\n"


def report_jsonl(report: EvalReport) -> str:
    return "".join(json.dumps(rec, sort_keys=True) + "\n" for rec in report.raw_records())


def build_report(report: EvalReport, format: str = "csv") -> str:
    if format == "csv":
        return report_csv(report)
    if format in ("text", "text-table"):
        return report_text(report)
    if format in ("jsonl", "raw"):
        return report_jsonl(report)
    raise ValueError(f"unknown report format {format!r}")
