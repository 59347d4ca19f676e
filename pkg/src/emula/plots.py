"""Minimal static SVG figures. Output depends only on the inputs (no timestamps or ids)."""
from __future__ import annotations

import math
from xml.sax.saxutils import escape

ROW_H = 18
LEFT = 260
WIDTH = 640


def _f(v: float) -> str:
    return f"{v:.2f}"


def _finite(*vs) -> bool:
    return all(v is not None and math.isfinite(v) for v in vs)


def _scale(lo, hi, x0, x1):
    if hi <= lo:
        lo, hi = lo - 0.5, hi + 0.5
    pad = 0.05 * (hi - lo)
    lo, hi = lo - pad, hi + pad
    return lambda v: x0 + (v - lo) / (hi - lo) * (x1 - x0)


def _doc(w, h, body) -> str:
    return (f'<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" '
            f'font-family="sans-serif" font-size="11">\n' + "\n".join(body) + "\n</svg>\n")


def forest_plot(rows, ref: float | None = 0.0, title: str = "") -> str:
    """Rows of ``(label, point, lo, hi)``; diamond at the point, whiskers over the interval."""
    vals = [v for _, p, lo, hi in rows for v in (p, lo, hi) if _finite(v)]
    if ref is not None:
        vals.append(ref)
    sx = _scale(min(vals, default=-1), max(vals, default=1), LEFT, WIDTH - 20)
    h = ROW_H * (len(rows) + 3)
    body = [f'<text x="10" y="14">{escape(title)}</text>']
    if ref is not None:
        x = _f(sx(ref))
        body.append(f'<line x1="{x}" y1="20" x2="{x}" y2="{h - 20}" stroke="#999" stroke-dasharray="3,3"/>')
    for i, (label, p, lo, hi) in enumerate(rows):
        y = 30 + ROW_H * i
        body.append(f'<text x="10" y="{y + 4}">{escape(str(label))}</text>')
        if _finite(lo, hi):
            body.append(f'<line x1="{_f(sx(lo))}" y1="{y}" x2="{_f(sx(hi))}" y2="{y}" stroke="black"/>')
        if _finite(p):
            x = sx(p)
            body.append(f'<polygon points="{_f(x - 5)},{y} {_f(x)},{y - 5} {_f(x + 5)},{y} {_f(x)},{y + 5}" '
                        f'fill="black"/>')
        else:
            body.append(f'<text x="{LEFT}" y="{y + 4}" fill="#b00">failed</text>')
    lo_v, hi_v = min(vals, default=-1), max(vals, default=1)
    body.append(f'<text x="{LEFT}" y="{h - 6}">{_f(lo_v)}</text>')
    body.append(f'<text x="{WIDTH - 60}" y="{h - 6}">{_f(hi_v)}</text>')
    return _doc(WIDTH, h, body)


def overlap_histogram(edges, treated, control, title: str = "propensity overlap") -> str:
    """Mirrored histogram: treated above the axis, controls below."""
    n_bins = len(treated)
    h, mid = 240, 120
    top = max(max(treated, default=0), max(control, default=0), 1)
    bw = (WIDTH - 40) / n_bins
    body = [f'<text x="10" y="14">{escape(title)}</text>',
            f'<line x1="20" y1="{mid}" x2="{WIDTH - 20}" y2="{mid}" stroke="black"/>']
    for i in range(n_bins):
        x = 20 + i * bw
        ht = (mid - 24) * treated[i] / top
        hc = (mid - 24) * control[i] / top
        body.append(f'<rect x="{_f(x)}" y="{_f(mid - ht)}" width="{_f(bw - 1)}" height="{_f(ht)}" fill="#c44"/>')
        body.append(f'<rect x="{_f(x)}" y="{mid}" width="{_f(bw - 1)}" height="{_f(hc)}" fill="#48c"/>')
    body.append(f'<text x="20" y="{h - 4}">{_f(edges[0])}</text>')
    body.append(f'<text x="{WIDTH - 40}" y="{h - 4}">{_f(edges[-1])}</text>')
    return _doc(WIDTH, h, body)


def box_plot(boxes, title: str = "CATE by subgroup") -> str:
    """Horizontal boxes from objects with q25/median/q75/lo_whisker/hi_whisker."""
    vals = [v for b in boxes for v in (b.lo_whisker, b.hi_whisker)]
    sx = _scale(min(vals, default=-1), max(vals, default=1), LEFT, WIDTH - 20)
    h = ROW_H * 2 * (len(boxes) + 1)
    body = [f'<text x="10" y="14">{escape(title)}</text>']
    for i, b in enumerate(boxes):
        y = 34 + 2 * ROW_H * i
        body.append(f'<text x="10" y="{y + 4}">{escape(f"{b.group} = {b.stratum} (n={b.n})")}</text>')
        body.append(f'<line x1="{_f(sx(b.lo_whisker))}" y1="{y}" x2="{_f(sx(b.hi_whisker))}" y2="{y}" stroke="black"/>')
        body.append(f'<rect x="{_f(sx(b.q25))}" y="{y - 7}" width="{_f(sx(b.q75) - sx(b.q25))}" height="14" '
                    f'fill="#ddd" stroke="black"/>')
        body.append(f'<line x1="{_f(sx(b.median))}" y1="{y - 7}" x2="{_f(sx(b.median))}" y2="{y + 7}" '
                    f'stroke="black" stroke-width="2"/>')
    return _doc(WIDTH, h, body)


def bar_chart(values: dict, title: str = "") -> str:
    """Horizontal bars for values in [0, 1]."""
    sx = _scale(0.0, 1.0, LEFT, WIDTH - 20)
    h = ROW_H * (len(values) + 2)
    body = [f'<text x="10" y="14">{escape(title)}</text>']
    for i, (k, v) in enumerate(values.items()):
        y = 30 + ROW_H * i
        body.append(f'<text x="10" y="{y + 4}">{escape(k)}</text>')
        body.append(f'<rect x="{LEFT}" y="{y - 6}" width="{_f(sx(v) - LEFT)}" height="12" fill="#888"/>')
        body.append(f'<text x="{_f(sx(v) + 4)}" y="{y + 4}">{v:.3f}</text>')
    return _doc(WIDTH, h, body)


def save(svg: str, path) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        fh.write(svg)
