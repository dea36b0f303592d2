"""Tiny deterministic SVG writer for loss curves and scatter plots."""

from __future__ import annotations

import math
from typing import Sequence
from xml.sax.saxutils import escape

WIDTH, HEIGHT = 640, 420
MARGIN = dict(left=60, right=150, top=36, bottom=44)
PALETTE = ("#1f77b4", "#d62728", "#2ca02c", "#9467bd", "#ff7f0e", "#8c564b", "#e377c2", "#7f7f7f")


def _fmt(v: float) -> str:
    return f"{v:.2f}"


class _Frame:
    def __init__(self, xs: Sequence[float], ys: Sequence[float], equal_aspect: bool = False):
        xs = [x for x in xs if math.isfinite(x)] or [0.0, 1.0]
        ys = [y for y in ys if math.isfinite(y)] or [0.0, 1.0]
        self.x0, self.x1 = min(xs), max(xs)
        self.y0, self.y1 = min(ys), max(ys)
        if self.x1 == self.x0:
            self.x0, self.x1 = self.x0 - 0.5, self.x1 + 0.5
        if self.y1 == self.y0:
            self.y0, self.y1 = self.y0 - 0.5, self.y1 + 0.5
        self.pw = WIDTH - MARGIN["left"] - MARGIN["right"]
        self.ph = HEIGHT - MARGIN["top"] - MARGIN["bottom"]
        if equal_aspect:
            span = max(self.x1 - self.x0, self.y1 - self.y0) * 1.1
            cx, cy = (self.x0 + self.x1) / 2, (self.y0 + self.y1) / 2
            self.x0, self.x1 = cx - span / 2, cx + span / 2
            self.y0, self.y1 = cy - span / 2, cy + span / 2
            side = min(self.pw, self.ph)
            self.pw = self.ph = side

    def px(self, x: float) -> float:
        return MARGIN["left"] + (x - self.x0) / (self.x1 - self.x0) * self.pw

    def py(self, y: float) -> float:
        return MARGIN["top"] + self.ph - (y - self.y0) / (self.y1 - self.y0) * self.ph

    def axes(self, title: str, xlabel: str, ylabel: str) -> list[str]:
        l, t = MARGIN["left"], MARGIN["top"]
        out = [
            f'<rect class="plot-area" x="{l}" y="{t}" width="{self.pw}" height="{self.ph}" fill="none" stroke="#444"/>',
            f'<text x="{l + self.pw / 2:.1f}" y="22" text-anchor="middle" font-size="14">{escape(title)}</text>',
            f'<text x="{l + self.pw / 2:.1f}" y="{t + self.ph + 36}" text-anchor="middle" font-size="12">'
            f'{escape(xlabel)}</text>',
            f'<text x="16" y="{t + self.ph / 2:.1f}" text-anchor="middle" font-size="12" '
            f'transform="rotate(-90 16 {t + self.ph / 2:.1f})">{escape(ylabel)}</text>',
        ]
        for frac in (0.0, 0.5, 1.0):
            xv = self.x0 + frac * (self.x1 - self.x0)
            yv = self.y0 + frac * (self.y1 - self.y0)
            out.append(f'<text x="{self.px(xv):.1f}" y="{t + self.ph + 16}" text-anchor="middle" '
                       f'font-size="10">{xv:.4g}</text>')
            out.append(f'<text x="{l - 6}" y="{self.py(yv) + 3:.1f}" text-anchor="end" font-size="10">{yv:.4g}</text>')
        return out


def _document(body: list[str]) -> str:
    head = (f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
            f'viewBox="0 0 {WIDTH} {HEIGHT}">')
    return "\n".join([head, '<rect width="100%" height="100%" fill="white"/>', *body, "</svg>"]) + "\n"


def _legend(entries: list[tuple[str, str]]) -> list[str]:
    x = WIDTH - MARGIN["right"] + 14
    out = []
    for i, (name, color) in enumerate(entries):
        y = MARGIN["top"] + 14 + 18 * i
        out.append(f'<rect x="{x}" y="{y - 9}" width="10" height="10" fill="{color}"/>')
        out.append(f'<text x="{x + 16}" y="{y}" font-size="11">{escape(name)}</text>')
    return out


def line_chart(series: dict[str, tuple[Sequence[float], Sequence[float]]], title: str = "",
               xlabel: str = "", ylabel: str = "") -> str:
    """One ``<polyline class="series">`` per entry; non-finite points are dropped."""
    clean = {name: [(x, y) for x, y in zip(xs, ys) if math.isfinite(x) and math.isfinite(y)]
             for name, (xs, ys) in series.items()}
    clean = {k: v for k, v in clean.items() if v}
    frame = _Frame([p[0] for v in clean.values() for p in v], [p[1] for v in clean.values() for p in v])
    body = frame.axes(title, xlabel, ylabel)
    legend = []
    for i, (name, pts) in enumerate(clean.items()):
        color = PALETTE[i % len(PALETTE)]
        coords = " ".join(f"{_fmt(frame.px(x))},{_fmt(frame.py(y))}" for x, y in pts)
        body.append(f'<polyline class="series" data-name="{escape(name)}" fill="none" stroke="{color}" '
                    f'stroke-width="1.2" points="{coords}"/>')
        legend.append((name, color))
    return _document(body + _legend(legend))


def scatter_chart(groups: list[tuple[str, Sequence[Sequence[float]], str]], title: str = "",
                  lines: list[tuple[str, Sequence[Sequence[float]]]] = (), xlabel: str = "x0",
                  ylabel: str = "x1") -> str:
    """Scatter of named point groups; ``marker`` is one of ``dot``, ``cross`` or ``ring``.

    ``lines`` adds polylines (e.g. interpolation paths) drawn under the markers.
    """
    all_pts = [p for _, pts, _ in groups for p in pts] + [p for _, pts in lines for p in pts]
    frame = _Frame([p[0] for p in all_pts], [p[1] for p in all_pts], equal_aspect=True)
    body = frame.axes(title, xlabel, ylabel)
    legend = []
    color_i = 0
    for name, pts in lines:
        color = PALETTE[color_i % len(PALETTE)]
        color_i += 1
        coords = " ".join(f"{_fmt(frame.px(x))},{_fmt(frame.py(y))}" for x, y in pts)
        body.append(f'<polyline class="path" data-name="{escape(name)}" fill="none" stroke="{color}" '
                    f'stroke-width="1.5" points="{coords}"/>')
        legend.append((name, color))
    for name, pts, marker in groups:
        color = PALETTE[color_i % len(PALETTE)]
        color_i += 1
        body.append(f'<g class="group marker-{marker}" data-name="{escape(name)}">')
        for x, y in pts:
            cx, cy = _fmt(frame.px(x)), _fmt(frame.py(y))
            if marker == "cross":
                body.append(f'<path d="M{float(cx) - 4:.2f},{float(cy) - 4:.2f}l8,8m0,-8l-8,8" '
                            f'stroke="{color}" stroke-width="2"/>')
            elif marker == "ring":
                body.append(f'<circle cx="{cx}" cy="{cy}" r="4" fill="none" stroke="{color}"/>')
            else:
                body.append(f'<circle cx="{cx}" cy="{cy}" r="1.6" fill="{color}" fill-opacity="0.6"/>')
        body.append("</g>")
        legend.append((name, color))
    return _document(body + _legend(legend))
