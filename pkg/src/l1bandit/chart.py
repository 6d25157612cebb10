"""Dependency-free SVG line chart for checkpoint series."""

from __future__ import annotations

from pathlib import Path
from xml.sax.saxutils import escape

from .core import ConfigurationError

PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#ff7f0e", "#9467bd", "#8c564b", "#e377c2", "#7f7f7f",
           "#bcbd22", "#17becf")
WIDTH, HEIGHT = 720, 440
LEFT, RIGHT, TOP, BOTTOM = 70, 170, 20, 50


def _num(x: float) -> str:
    return f"{x:.2f}"


def render_svg(series: dict, xlabel: str = "t", ylabel: str = "cumulative regret") -> str:
    """``series`` maps label -> (xs, ys); legend order follows the mapping's order."""
    if not series or any(len(xs) == 0 or len(xs) != len(ys) for xs, ys in series.values()):
        raise ConfigurationError("chart needs at least one non-empty series with matching x/y lengths")
    xs_all = [float(x) for xs, _ in series.values() for x in xs]
    ys_all = [float(y) for _, ys in series.values() for y in ys]
    x0, x1 = min(xs_all), max(xs_all)
    y0, y1 = min(0.0, min(ys_all)), max(ys_all)
    if x1 == x0:
        x1 = x0 + 1.0
    if y1 == y0:
        y1 = y0 + 1.0
    pw, ph = WIDTH - LEFT - RIGHT, HEIGHT - TOP - BOTTOM

    def px(x):
        return LEFT + (float(x) - x0) / (x1 - x0) * pw

    def py(y):
        return TOP + ph - (float(y) - y0) / (y1 - y0) * ph

    out = [
        f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
        f'viewBox="0 0 {WIDTH} {HEIGHT}" font-family="sans-serif" font-size="12">',
        f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
        f'<line class="axis" x1="{LEFT}" y1="{TOP + ph}" x2="{LEFT + pw}" y2="{TOP + ph}" stroke="black"/>',
        f'<line class="axis" x1="{LEFT}" y1="{TOP}" x2="{LEFT}" y2="{TOP + ph}" stroke="black"/>',
    ]
    for i in range(5):
        fx = x0 + (x1 - x0) * i / 4
        fy = y0 + (y1 - y0) * i / 4
        out.append(f'<text x="{_num(px(fx))}" y="{TOP + ph + 16}" text-anchor="middle">{fx:g}</text>')
        out.append(f'<text x="{LEFT - 6}" y="{_num(py(fy) + 4)}" text-anchor="end">{fy:.4g}</text>')
    out.append(f'<text x="{LEFT + pw / 2:.1f}" y="{HEIGHT - 10}" text-anchor="middle">{escape(xlabel)}</text>')
    out.append(f'<text x="16" y="{TOP + ph / 2:.1f}" text-anchor="middle" '
               f'transform="rotate(-90 16 {TOP + ph / 2:.1f})">{escape(ylabel)}</text>')
    for k, (label, (xs, ys)) in enumerate(series.items()):
        color = PALETTE[k % len(PALETTE)]
        pts = " ".join(f"{_num(px(x))},{_num(py(y))}" for x, y in zip(xs, ys))
        out.append(f'<polyline data-label="{escape(str(label))}" points="{pts}" fill="none" '
                   f'stroke="{color}" stroke-width="1.5"/>')
        ly = TOP + 14 + 18 * k
        out.append(f'<line x1="{WIDTH - RIGHT + 12}" y1="{ly - 4}" x2="{WIDTH - RIGHT + 32}" y2="{ly - 4}" '
                   f'stroke="{color}" stroke-width="2"/>')
        out.append(f'<text class="legend" x="{WIDTH - RIGHT + 38}" y="{ly}">{escape(str(label))}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_chart(series: dict, path, xlabel: str = "t", ylabel: str = "cumulative regret") -> Path:
    path = Path(path)
    text = render_svg(series, xlabel, ylabel)
    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_text(text, encoding="utf-8")
    return path
