"""CSV and SVG writers."""
from __future__ import annotations

import json
import math
from pathlib import Path
from xml.sax.saxutils import escape

import numpy as np

from .experiments import ExperimentResult, Figure, Table

_COLORS = ["#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#17becf"]


def write_csv(path, table: Table):
    rows = np.atleast_2d(np.asarray(table.rows, dtype=float))
    if rows.size == 0:
        rows = np.zeros((0, len(table.columns)))
    np.savetxt(path, rows, fmt="%.16e", delimiter=",", header=",".join(table.columns), comments="", encoding="utf-8")


def _ticks(lo, hi, log):
    if log:
        a, b = math.floor(math.log10(lo)), math.ceil(math.log10(hi))
        step = max(1, (b - a) // 6)
        return [10.0**k for k in range(a, b + 1, step)]
    if hi == lo:
        return [lo]
    raw = (hi - lo) / 5
    mag = 10 ** math.floor(math.log10(raw))
    step = min((m * mag for m in (1, 2, 5, 10) if m * mag >= raw), default=raw)
    start = math.ceil(lo / step) * step
    return list(np.arange(start, hi + 0.5 * step, step))


def _fmt(v):
    return f"{v:.3g}"


def figure_svg(fig: Figure, width=640, height=420) -> str:
    ml, mr, mt, mb = 70, 160, 40, 50
    pw, ph = width - ml - mr, height - mt - mb
    xs, ys = [], []
    for _, x, y in fig.series:
        x, y = np.asarray(x, float), np.asarray(y, float)
        ok = np.isfinite(x) & np.isfinite(y)
        if fig.logx:
            ok &= x > 0
        if fig.logy:
            ok &= y > 0
        xs.append(x[ok])
        ys.append(y[ok])
    allx = np.concatenate(xs) if xs else np.zeros(0)
    ally = np.concatenate(ys) if ys else np.zeros(0)
    if allx.size == 0:
        allx, ally = np.array([0.0, 1.0]), np.array([0.0, 1.0])
    x0, x1, y0, y1 = allx.min(), allx.max(), ally.min(), ally.max()
    if fig.equal_axes:
        span = max(x1 - x0, y1 - y0) or 1.0
        cx, cy = 0.5 * (x0 + x1), 0.5 * (y0 + y1)
        x0, x1, y0, y1 = cx - span / 2, cx + span / 2, cy - span / 2, cy + span / 2
    if x1 == x0:
        x0, x1 = x0 - 1, x1 + 1
    if y1 == y0:
        y0, y1 = y0 - 1, y1 + 1

    def tx(v):
        f = (math.log10(v) - math.log10(x0)) / (math.log10(x1) - math.log10(x0)) if fig.logx else (v - x0) / (x1 - x0)
        return ml + f * pw

    def ty(v):
        f = (math.log10(v) - math.log10(y0)) / (math.log10(y1) - math.log10(y0)) if fig.logy else (v - y0) / (y1 - y0)
        return mt + (1 - f) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" font-family="sans-serif" font-size="11">',
        f'<rect width="{width}" height="{height}" fill="white"/>',
        f'<text x="{ml + pw / 2}" y="20" text-anchor="middle" font-size="13">{escape(fig.title)}</text>',
        f'<rect x="{ml}" y="{mt}" width="{pw}" height="{ph}" fill="none" stroke="black"/>',
    ]
    for v in _ticks(x0, x1, fig.logx):
        if x0 <= v <= x1:
            px = tx(v)
            out.append(f'<line x1="{px:.2f}" y1="{mt + ph}" x2="{px:.2f}" y2="{mt + ph + 5}" stroke="black"/>')
            out.append(f'<text x="{px:.2f}" y="{mt + ph + 18}" text-anchor="middle">{_fmt(v)}</text>')
    for v in _ticks(y0, y1, fig.logy):
        if y0 <= v <= y1:
            py = ty(v)
            out.append(f'<line x1="{ml - 5}" y1="{py:.2f}" x2="{ml}" y2="{py:.2f}" stroke="black"/>')
            out.append(f'<text x="{ml - 8}" y="{py + 4:.2f}" text-anchor="end">{_fmt(v)}</text>')
    out.append(f'<text x="{ml + pw / 2}" y="{height - 10}" text-anchor="middle">{escape(fig.xlabel)}</text>')
    out.append(f'<text x="15" y="{mt + ph / 2}" text-anchor="middle" transform="rotate(-90 15 {mt + ph / 2})">{escape(fig.ylabel)}</text>')
    for i, ((label, _, _), x, y) in enumerate(zip(fig.series, xs, ys)):
        color = _COLORS[i % len(_COLORS)]
        if x.size:
            pts = " ".join(f"{tx(a):.2f},{ty(b):.2f}" for a, b in zip(x, y))
            out.append(f'<polyline points="{pts}" fill="none" stroke="{color}" stroke-width="1.5"/>')
        ly = mt + 10 + 16 * i
        out.append(f'<line x1="{ml + pw + 10}" y1="{ly}" x2="{ml + pw + 30}" y2="{ly}" stroke="{color}" stroke-width="2"/>')
        out.append(f'<text x="{ml + pw + 35}" y="{ly + 4}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def _safe(name):
    return "".join(ch if ch.isalnum() or ch in "-_." else "_" for ch in name.replace("=", "")).strip("_")


def write_result(result: ExperimentResult, out_dir) -> list[Path]:
    """Write all tables, figures and a summary; returns the written paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for t in result.tables:
        p = out / f"{_safe(t.name)}.csv"
        write_csv(p, t)
        written.append(p)
    for f in result.figures:
        p = out / f"{_safe(f.name)}.svg"
        p.write_text(figure_svg(f), encoding="utf-8")
        written.append(p)
    p = out / "summary.json"
    summary = dict(experiment=result.experiment, summary=result.summary, failures=result.failures, notes=result.notes)
    p.write_text(json.dumps(summary, indent=2, sort_keys=True, default=float) + "\n", encoding="utf-8")
    written.append(p)
    return written
