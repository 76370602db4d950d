"""Rendering of bias reports: Markdown, JSON, CSV and figures."""

from __future__ import annotations

import csv
import io
import json
import os
import re
from pathlib import Path

from . import reference_values as ref
from .evalstat import GENUINE, IMPOSTOR, LABEL_CODES, SIGNIFICANCE_Z, BiasReport, fmr_fnmr_points
from .io_utils import atomic_write_text


def _f(v, digits: int = 5) -> str:
    return "-" if v is None else f"{v:.{digits}f}"


def _pct(v) -> str:
    return "-" if v is None else f"{100.0 * v:.2f}"


def _table(header, rows) -> list[str]:
    out = ["| " + " | ".join(header) + " |", "|" + "|".join("---" for _ in header) + "|"]
    out += ["| " + " | ".join(str(c) for c in r) + " |" for r in rows]
    return out


def _gap(lines: list[str]) -> None:
    """Leave exactly one blank line before the next heading."""
    while lines and lines[-1] == "":
        lines.pop()
    lines.append("")


def render_markdown(report: BiasReport, stamp: str | None = None) -> str:
    lines = ["# Score distribution bias report", ""]
    if stamp:
        lines += [f"Generated: {stamp}", ""]
    lines += [
        f"Z-score denominator: `{report.z_variant}`; a difference counts as significant when z > {SIGNIFICANCE_Z}.",
        "",
        "## Overall score statistics",
        "",
    ]
    lines += _table(
        ["Dataset", "Algorithm", "mu G", "mu I", "sigma G", "sigma I", "n G", "n I", "EER (%)"],
        [
            (o.dataset, o.algorithm, _f(o.genuine.mu), _f(o.impostor.mu), _f(o.genuine.sigma),
             _f(o.impostor.sigma), o.genuine.n, o.impostor.n, _pct(o.eer.eer))
            for o in report.overall
        ],
    )
    attrs = list(dict.fromkeys(s.attribute for s in report.sections))
    for attr in attrs:
        _gap(lines)
        lines += [f"## Grouped by {attr}", ""]
        for sec in (s for s in report.sections if s.attribute == attr):
            lines += [f"### {sec.dataset} / {sec.algorithm}", ""]
            stats = {(g.name, g.label): g for g in sec.groups}
            eers = {e.group: e for e in sec.eer}
            names = list(dict.fromkeys(g.name for g in sec.groups))
            if not names:
                lines += ["No group has scores for this attribute.", ""]
                continue
            rows = []
            for n in names:
                g, i = stats.get((n, GENUINE)), stats.get((n, IMPOSTOR))
                e = eers.get(n)
                rows.append((
                    n,
                    _f(g and g.mu), _f(i and i.mu), _f(g and g.sigma), _f(i and i.sigma),
                    g.n if g else 0, i.n if i else 0, _pct(e and e.eer),
                ))
            lines += _table(["Group", "mu G", "mu I", "sigma G", "sigma I", "n G", "n I", "EER (%)"], rows)
            lines.append("")
            if sec.zscores:
                lines += _table(
                    ["Group A", "Group B", "Label", "Z"],
                    [(z.group_a, z.group_b, LABEL_CODES[z.label], _f(z.z)) for z in sec.zscores],
                )
                lines.append("")
            if sec.skipped_pairs:
                lines += [f"{sec.skipped_pairs} group pair(s) skipped: degenerate variance.", ""]
    _gap(lines)
    lines += ["## Z-score summary", ""]
    lines += _table(
        ["Attribute", "median G", "median I", "max G", "max I", "significant"],
        [
            (a, _f(s.median_g), _f(s.median_i), _f(s.max_g), _f(s.max_i), "yes" if s.significant else "no")
            for a, s in report.attribute_summary.items()
        ],
    )
    return "\n".join(lines).rstrip("\n") + "\n"


def report_json(report: BiasReport, stamp: str | None = None) -> str:
    doc = report.to_json()
    if stamp:
        doc = {"generated": stamp, **doc}
    return json.dumps(doc, indent=2, allow_nan=False) + "\n"


def group_stats_csv(report: BiasReport) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("dataset", "algorithm", "attribute", "group", "label", "mu", "sigma", "n"))
    for sec in report.sections:
        for g in sec.groups:
            w.writerow((sec.dataset, sec.algorithm, sec.attribute, g.name, LABEL_CODES[g.label],
                        repr(g.mu), repr(g.sigma), g.n))
    return buf.getvalue()


def points_csv(genuine, impostor) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(("threshold", "fmr", "fnmr"))
    for t, a, b in fmr_fnmr_points(genuine, impostor):
        w.writerow((repr(t), repr(a), repr(b)))
    return buf.getvalue()


def _slug(*parts: str) -> str:
    return "_".join(re.sub(r"[^A-Za-z0-9.-]+", "-", p) for p in parts)


def write_report(
    report: BiasReport,
    scoresets,
    attrs,
    out_dir: str | os.PathLike,
    stamp: str | None = None,
    figures: bool = True,
) -> list[Path]:
    """Write report.md, report.json, group_stats.csv, FMR/FNMR point files
    and (optionally) PNG figures; returns the written paths."""
    out = Path(out_dir)
    written = []

    def put(name: str, text: str):
        path = out / name
        atomic_write_text(path, text)
        written.append(path)

    put("report.md", render_markdown(report, stamp))
    put("report.json", report_json(report, stamp))
    put("group_stats.csv", group_stats_csv(report))
    for ss in sorted(scoresets, key=lambda s: (s.dataset, s.algorithm)):
        put(f"points/{_slug(ss.dataset, ss.algorithm)}.csv", points_csv(ss.genuine_scores, ss.impostor_scores))
    if figures:
        from .plotting import plot_det, plot_group_histograms

        for ss in sorted(scoresets, key=lambda s: (s.dataset, s.algorithm)):
            for a in attrs:
                stem = _slug(ss.dataset, ss.algorithm, a.kind)
                plot_group_histograms(ss, a, out / "figures" / f"{stem}_hist.png")
                plot_det(ss, a, out / "figures" / f"{stem}_det.png")
                written += [out / "figures" / f"{stem}_hist.png", out / "figures" / f"{stem}_det.png"]
    return written


# --------------------------------------------------------------------------
# comparison against the published figures


def reference_diff(report: BiasReport) -> list[dict]:
    """One row per published quantity that the report also computes."""
    rows = []
    for o in report.overall:
        key = (o.dataset.upper(), o.algorithm.upper())
        if key in ref.OVERALL_STATS:
            got = (o.genuine.mu, o.impostor.mu, o.genuine.sigma, o.impostor.sigma)
            for name, e, g in zip(("mu_g", "mu_i", "sigma_g", "sigma_i"), ref.OVERALL_STATS[key], got):
                rows.append(_diff_row(f"{key[0]}/{key[1]} {name}", e, g, ref.STAT_TOLERANCE))
        if key in ref.EER_PERCENT:
            rows.append(_diff_row(f"{key[0]}/{key[1]} EER %", ref.EER_PERCENT[key], 100.0 * o.eer.eer,
                                  ref.EER_TOLERANCE_PP))
    for attr, s in report.attribute_summary.items():
        if attr in ref.ZSCORE_SUMMARY:
            got = (s.median_g, s.median_i, s.max_g, s.max_i)
            for name, e, g in zip(("median_g", "median_i", "max_g", "max_i"), ref.ZSCORE_SUMMARY[attr], got):
                rows.append(_diff_row(f"z {attr} {name}", e, g, ref.STAT_TOLERANCE))
    return rows


def _diff_row(quantity: str, expected: float, got, tol: float) -> dict:
    if got is None:
        return {"quantity": quantity, "expected": expected, "computed": None, "delta": None, "within": False}
    delta = got - expected
    return {"quantity": quantity, "expected": expected, "computed": got, "delta": delta, "within": abs(delta) <= tol}


def render_diff(rows: list[dict]) -> str:
    lines = ["# Comparison with published values", ""]
    lines += _table(
        ["Quantity", "Published", "Computed", "Delta", "Within tolerance"],
        [
            (r["quantity"], f"{r['expected']:.5f}", _f(r["computed"]), _f(r["delta"]), "yes" if r["within"] else "no")
            for r in rows
        ],
    )
    return "\n".join(lines) + "\n"
