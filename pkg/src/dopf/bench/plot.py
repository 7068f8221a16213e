"""Four-panel SVG convergence plots written directly as markup.

The output depends only on the traces and labels, so equal input gives
equal bytes.
"""

from __future__ import annotations

import math
from html import escape
from pathlib import Path

import numpy as np

from ..trace import ConvergenceTrace

__all__ = ["PANELS", "LOG_FLOOR", "plot_traces", "render_svg"]

# (column, title, log scale)
PANELS = (
    ("consensus_gap", "consensus gap ||Ax||", True),
    ("objective", "objective f", False),
    ("dist_to_ref", "distance to minimizer ||x - x*||", True),
    ("violation", "constraint violation ||g(z)||", True),
)
LOG_FLOOR = 1e-16
COLORS = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#17becf",
          "#7f7f7f")

PW, PH = 300, 220          # panel size
ML, MR, MT, MB = 62, 12, 28, 36
GAP = 20


def _num(v: float) -> str:
    return f"{v:.2f}".rstrip("0").rstrip(".")


def _tick_label(v: float, log: bool) -> str:
    if log:
        return f"1e{int(round(v))}"
    return f"{v:.6g}"


def _nice_ticks(lo, hi, n=5):
    if hi <= lo:
        return [lo]
    step = 10 ** math.floor(math.log10((hi - lo) / n))
    for m in (1, 2, 5, 10):
        if (hi - lo) / (m * step) <= n:
            step *= m
            break
    first = math.ceil(lo / step) * step
    return [first + i * step for i in range(int((hi - first) / step + 1e-9) + 1)]


def render_svg(traces, labels) -> str:
    """SVG text of the four convergence panels.

    Log panels plot ``log10(max(value, LOG_FLOOR))``; if any finite value
    had to be raised, a footnote says so.  Non-finite values break the
    polyline.
    """
    traces = list(traces)
    labels = [str(s) for s in labels]
    if not traces:
        raise ValueError("at least one trace is required")
    if len(labels) != len(traces):
        raise ValueError("one label per trace is required")
    if any(len(t) == 0 for t in traces):
        raise ValueError("cannot plot an empty trace")
    width = 4 * (ML + PW + MR) + 3 * GAP
    legend_h = 18 * len(traces) + 10
    height = MT + PH + MB + legend_h + 24
    clamped = False
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{width}" height="{height}" '
           f'viewBox="0 0 {width} {height}" font-family="sans-serif" font-size="11">',
           f'<rect x="0" y="0" width="{width}" height="{height}" fill="white"/>']
    kmax = max(int(t.column("k").max()) for t in traces)
    kmax = max(kmax, 1)
    for p, (col, title, log) in enumerate(PANELS):
        x0 = p * (ML + PW + MR + GAP) + ML
        y0 = MT
        series = []
        for t in traces:
            k = t.column("k").astype(float)
            v = t.column(col)
            if log:
                fin = np.isfinite(v)
                if np.any(fin & (v < LOG_FLOOR)):
                    clamped = True
                v = np.where(fin, np.log10(np.maximum(np.where(fin, v, 1.0), LOG_FLOOR)), np.nan)
            series.append((k, v))
        allv = np.concatenate([v for _, v in series])
        allv = allv[np.isfinite(allv)]
        if allv.size == 0:
            lo, hi = 0.0, 1.0
        else:
            lo, hi = float(allv.min()), float(allv.max())
        if log:
            lo, hi = math.floor(lo), math.ceil(hi)
        if hi - lo < 1e-12:
            lo, hi = lo - 1.0, hi + 1.0
        sx = lambda k: x0 + PW * k / kmax  # noqa: E731
        sy = lambda v: y0 + PH * (hi - v) / (hi - lo)  # noqa: E731
        out.append(f'<g class="panel" id="panel-{col}">')
        out.append(f'<text x="{_num(x0 + PW / 2)}" y="{y0 - 10}" text-anchor="middle">'
                   f'{escape(title)}</text>')
        out.append(f'<rect x="{x0}" y="{y0}" width="{PW}" height="{PH}" fill="none" '
                   'stroke="black"/>')
        yt = (list(range(int(lo), int(hi) + 1, max(1, int((hi - lo) // 6) + 1))) if log
              else _nice_ticks(lo, hi))
        for v in yt:
            y = sy(v)
            out.append(f'<line x1="{x0 - 4}" y1="{_num(y)}" x2="{x0}" y2="{_num(y)}" '
                       'stroke="black"/>')
            out.append(f'<text x="{x0 - 6}" y="{_num(y + 4)}" text-anchor="end">'
                       f'{_tick_label(v, log)}</text>')
        for kt in _nice_ticks(0, kmax):
            x = sx(kt)
            out.append(f'<line x1="{_num(x)}" y1="{y0 + PH}" x2="{_num(x)}" y2="{y0 + PH + 4}" '
                       'stroke="black"/>')
            out.append(f'<text x="{_num(x)}" y="{y0 + PH + 16}" text-anchor="middle">'
                       f'{int(kt)}</text>')
        out.append(f'<text x="{_num(x0 + PW / 2)}" y="{y0 + PH + 30}" '
                   'text-anchor="middle">iteration k</text>')
        for i, (k, v) in enumerate(series):
            pts = " ".join(f"{_num(sx(a))},{_num(sy(b))}" for a, b in zip(k, v) if np.isfinite(b))
            out.append(f'<polyline class="series" fill="none" stroke="{COLORS[i % len(COLORS)]}" '
                       f'stroke-width="1.5" points="{pts}"/>')
        out.append("</g>")
    ly = MT + PH + MB + 8
    out.append('<g class="legend">')
    for i, lab in enumerate(labels):
        y = ly + 18 * i
        c = COLORS[i % len(COLORS)]
        out.append(f'<line x1="{ML}" y1="{y}" x2="{ML + 24}" y2="{y}" stroke="{c}" '
                   'stroke-width="2"/>')
        out.append(f'<text x="{ML + 30}" y="{y + 4}">{escape(lab)}</text>')
    out.append("</g>")
    if clamped:
        out.append(f'<text class="footnote" x="{ML}" y="{height - 8}" font-size="10">'
                   f'values below {LOG_FLOOR:g} are drawn at {LOG_FLOOR:g} on log panels</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def plot_traces(traces, labels, out_path) -> Path:
    """Write :func:`render_svg` output to ``out_path``.

    ``traces`` may mix :class:`ConvergenceTrace` objects and CSV paths.
    """
    traces = [_as_trace(t) for t in traces]
    out_path = Path(out_path)
    out_path.parent.mkdir(parents=True, exist_ok=True)
    out_path.write_text(render_svg(traces, labels))
    return out_path


def _as_trace(obj) -> ConvergenceTrace:
    return obj if isinstance(obj, ConvergenceTrace) else ConvergenceTrace.read_csv(obj)
