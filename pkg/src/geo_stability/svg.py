"""Minimal deterministic SVG writers for box plots, heatmaps and line charts."""
from __future__ import annotations

from typing import Sequence
from xml.sax.saxutils import escape

_HEAD = '<svg xmlns="http://www.w3.org/2000/svg" width="{w}" height="{h}" viewBox="0 0 {w} {h}" font-family="sans-serif" font-size="11">\n'


def _text(x, y, s, anchor="middle", size=11, extra=""):
    return f'<text x="{x:.1f}" y="{y:.1f}" text-anchor="{anchor}" font-size="{size}"{extra}>{escape(str(s))}</text>\n'


def _line(x1, y1, x2, y2, stroke="#333", width=1, dash=None):
    d = f' stroke-dasharray="{dash}"' if dash else ""
    return f'<line x1="{x1:.1f}" y1="{y1:.1f}" x2="{x2:.1f}" y2="{y2:.1f}" stroke="{stroke}" stroke-width="{width}"{d}/>\n'


def box_plots(panels: Sequence[tuple[str, Sequence[tuple[str, dict]]]], ymax: float = 1.0) -> str:
    """Side-by-side box plot panels.

    ``panels`` is ``[(title, [(label, stats)])]`` where ``stats`` holds
    ``min, q1, median, q3, max``. Medians are annotated above each box.
    """
    pw, ph, top, left = 320, 260, 40, 50
    width = left + pw * len(panels) + 20
    height = top + ph + 90
    out = [_HEAD.format(w=width, h=height)]
    for p, (title, boxes) in enumerate(panels):
        x0 = left + p * pw

        def y(v):
            return top + ph - (v / ymax) * ph

        out.append(_text(x0 + pw / 2, 20, title, size=13))
        out.append(_line(x0, top, x0, top + ph))
        out.append(_line(x0, top + ph, x0 + pw - 20, top + ph))
        for t in range(0, 6):
            v = ymax * t / 5
            out.append(_line(x0 - 4, y(v), x0, y(v)))
            out.append(_text(x0 - 6, y(v) + 4, f"{v:.1f}", anchor="end", size=9))
        slot = (pw - 20) / max(len(boxes), 1)
        for i, (label, st) in enumerate(boxes):
            cx = x0 + slot * (i + 0.5)
            bw = slot * 0.5
            out.append(_line(cx, y(st["min"]), cx, y(st["q1"])))
            out.append(_line(cx, y(st["q3"]), cx, y(st["max"])))
            out.append(
                f'<rect x="{cx - bw / 2:.1f}" y="{y(st["q3"]):.1f}" width="{bw:.1f}" '
                f'height="{max(y(st["q1"]) - y(st["q3"]), 0.5):.1f}" fill="#9ecae1" stroke="#333"/>\n'
            )
            out.append(_line(cx - bw / 2, y(st["median"]), cx + bw / 2, y(st["median"]), stroke="#d62728", width=2))
            out.append(_text(cx, y(st["max"]) - 4, f"{st['median']:.2f}", size=9))
            out.append(_text(cx, top + ph + 14, label, size=9,
                             extra=f' transform="rotate(30 {cx:.1f} {top + ph + 14:.1f})"'))
    out.append("</svg>\n")
    return "".join(out)


def _heat_colour(v: float, lo: float, hi: float) -> str:
    t = 0.0 if hi <= lo else (v - lo) / (hi - lo)
    t = min(max(t, 0.0), 1.0)
    r = int(255 - t * (255 - 178))
    g = int(245 - t * (245 - 24))
    b = int(235 - t * (235 - 43))
    return f"#{r:02x}{g:02x}{b:02x}"


def heatmap(rows: Sequence[str], cols: Sequence[str], values: dict, title: str = "") -> str:
    """Annotated heatmap; ``values`` maps (row, col) to a number or is missing."""
    cw, ch, left, top = 110, 36, 170, 60
    width = left + cw * len(cols) + 20
    height = top + ch * len(rows) + 20
    present = [v for v in values.values() if v is not None]
    lo, hi = (min(present), max(present)) if present else (0.0, 1.0)
    out = [_HEAD.format(w=width, h=height)]
    if title:
        out.append(_text(width / 2, 20, title, size=13))
    for j, c in enumerate(cols):
        out.append(_text(left + cw * (j + 0.5), top - 8, c))
    for i, r in enumerate(rows):
        out.append(_text(left - 8, top + ch * (i + 0.5) + 4, r, anchor="end"))
        for j, c in enumerate(cols):
            v = values.get((r, c))
            fill = "#eeeeee" if v is None else _heat_colour(v, lo, hi)
            out.append(
                f'<rect x="{left + cw * j:.1f}" y="{top + ch * i:.1f}" width="{cw}" height="{ch}" '
                f'fill="{fill}" stroke="#ffffff"/>\n'
            )
            out.append(_text(left + cw * (j + 0.5), top + ch * (i + 0.5) + 4, "n/a" if v is None else f"{v:.3f}"))
    out.append("</svg>\n")
    return "".join(out)


def line_chart(xs: Sequence[float], ys: Sequence[float], refs: Sequence[float] = (), title: str = "",
               xlabel: str = "", ylabel: str = "") -> str:
    w, h, left, top = 520, 320, 60, 40
    pw, ph = w - left - 20, h - top - 50
    out = [_HEAD.format(w=w, h=h)]
    if not xs:
        out.append("</svg>\n")
        return "".join(out)
    xmin, xmax = min(xs), max(xs)
    ymax = max(list(ys) + list(refs) + [1e-9]) * 1.1

    def px(x):
        return left + (0.5 if xmax == xmin else (x - xmin) / (xmax - xmin)) * pw

    def py(v):
        return top + ph - v / ymax * ph

    out.append(_text(w / 2, 20, title, size=13))
    out.append(_line(left, top, left, top + ph))
    out.append(_line(left, top + ph, left + pw, top + ph))
    out.append(_text(left + pw / 2, h - 10, xlabel))
    out.append(_text(14, top + ph / 2, ylabel, extra=f' transform="rotate(-90 14 {top + ph / 2:.1f})"'))
    for t in range(0, 6):
        v = ymax * t / 5
        out.append(_text(left - 6, py(v) + 4, f"{v:.2f}", anchor="end", size=9))
    for x in xs:
        out.append(_text(px(x), top + ph + 14, f"{x:g}", size=9))
    for ref in refs:
        out.append(_line(left, py(ref), left + pw, py(ref), stroke="#d62728", dash="4,3"))
    pts = " ".join(f"{px(x):.1f},{py(v):.1f}" for x, v in zip(xs, ys))
    out.append(f'<polyline points="{pts}" fill="none" stroke="#1f77b4" stroke-width="2"/>\n')
    for x, v in zip(xs, ys):
        out.append(f'<circle cx="{px(x):.1f}" cy="{py(v):.1f}" r="3" fill="#1f77b4"/>\n')
    out.append("</svg>\n")
    return "".join(out)


def bar_panels(panels: Sequence[tuple[str, Sequence[tuple[str, float, float]]]], reference: float = 0.5) -> str:
    """Horizontal paired bars (dark: first value, light: second) per panel,
    with a dashed reference line."""
    pw, bar_h, left, top = 300, 14, 60, 40
    tallest = max((len(items) for _, items in panels), default=0)
    ph = tallest * bar_h * 2 + 10
    width = (left + pw) * max(len(panels), 1) + 20
    height = top + ph + 30
    out = [_HEAD.format(w=width, h=height)]
    for p, (title, items) in enumerate(panels):
        x0 = left + p * (left + pw)
        out.append(_text(x0 + pw / 2, 20, title, size=12))
        for i, (label, a, b) in enumerate(items):
            y0 = top + i * bar_h * 2
            out.append(_text(x0 - 6, y0 + bar_h + 3, label, anchor="end", size=9))
            out.append(f'<rect x="{x0:.1f}" y="{y0:.1f}" width="{a * pw:.1f}" height="{bar_h - 1}" fill="#08519c"/>\n')
            out.append(f'<rect x="{x0:.1f}" y="{y0 + bar_h:.1f}" width="{b * pw:.1f}" height="{bar_h - 1}" fill="#9ecae1"/>\n')
        out.append(_line(x0 + reference * pw, top - 4, x0 + reference * pw, top + ph, stroke="#555", dash="4,3"))
        out.append(_line(x0, top + ph, x0 + pw, top + ph))
        for t in range(0, 6):
            out.append(_text(x0 + pw * t / 5, top + ph + 14, f"{t / 5:.1f}", size=9))
    out.append("</svg>\n")
    return "".join(out)
