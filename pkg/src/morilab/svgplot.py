"""Minimal native SVG emission: line charts, histograms, scatter panels.

No plotting library: output is deterministic text, so re-rendering the same
numbers reproduces the same bytes, and every figure travels with the CSV it
was drawn from.
"""

from __future__ import annotations

import numpy as np

__all__ = ["Figure", "COLORS"]

COLORS = {"g": "#c02020", "e": "#2040c0", "gdo": "#c02020", "edo": "#2040c0",
          "fit": "#101010", "ref": "#888888"}
_FALLBACK = ("#c02020", "#2040c0", "#208040", "#806020")


def _fmt(x: float) -> str:
    return f"{x:.6g}"


class Figure:
    """One SVG panel with margins, linear axes and simple marks."""

    def __init__(self, width: int = 640, height: int = 420,
                 margin: tuple[int, int, int, int] = (50, 15, 35, 55),
                 title: str = "", xlabel: str = "", ylabel: str = ""):
        self.width = width
        self.height = height
        self.top, self.right, self.bottom, self.left = margin
        self.title = title
        self.xlabel = xlabel
        self.ylabel = ylabel
        self._body: list[str] = []
        self._legend: list[tuple[str, str]] = []
        self._xlim: tuple[float, float] | None = None
        self._ylim: tuple[float, float] | None = None

    # -- coordinate handling ------------------------------------------------
    def set_limits(self, xlim, ylim) -> None:
        span = lambda lo, hi: (lo, hi if hi > lo else lo + 1.0)
        self._xlim = span(*map(float, xlim))
        self._ylim = span(*map(float, ylim))

    def _sx(self, x: float) -> float:
        lo, hi = self._xlim
        w = self.width - self.left - self.right
        return self.left + (x - lo) / (hi - lo) * w

    def _sy(self, y: float) -> float:
        lo, hi = self._ylim
        h = self.height - self.top - self.bottom
        return self.top + h - (y - lo) / (hi - lo) * h

    # -- marks ----------------------------------------------------------------
    def polyline(self, x, y, color: str, width: float = 1.3,
                 dash: str = "", label: str = "") -> None:
        pts = " ".join(f"{_fmt(self._sx(a))},{_fmt(self._sy(b))}"
                       for a, b in zip(x, y))
        dash_attr = f' stroke-dasharray="{dash}"' if dash else ""
        self._body.append(
            f'<polyline fill="none" stroke="{color}" stroke-width="{width}"'
            f'{dash_attr} points="{pts}"/>')
        if label:
            self._legend.append((label, color))

    def scatter(self, x, y, color: str, radius: float = 2.0,
                label: str = "", opacity: float = 0.55) -> None:
        for a, b in zip(x, y):
            self._body.append(
                f'<circle cx="{_fmt(self._sx(a))}" cy="{_fmt(self._sy(b))}"'
                f' r="{radius}" fill="{color}" fill-opacity="{opacity}"/>')
        if label:
            self._legend.append((label, color))

    def bars(self, lefts, rights, heights, color: str, label: str = "",
             opacity: float = 0.6) -> None:
        y0 = self._sy(self._ylim[0])
        for lo, hi, h in zip(lefts, rights, heights):
            if h <= 0:
                continue
            x = self._sx(lo)
            w = self._sx(hi) - x
            y = self._sy(h)
            self._body.append(
                f'<rect x="{_fmt(x)}" y="{_fmt(y)}" width="{_fmt(w)}"'
                f' height="{_fmt(y0 - y)}" fill="{color}"'
                f' fill-opacity="{opacity}"/>')
        if label:
            self._legend.append((label, color))

    def vline(self, x: float, color: str, dash: str = "6,4",
              label: str = "") -> None:
        sx = _fmt(self._sx(x))
        self._body.append(
            f'<line x1="{sx}" y1="{_fmt(self.top)}" x2="{sx}"'
            f' y2="{_fmt(self.height - self.bottom)}" stroke="{color}"'
            f' stroke-width="1.2" stroke-dasharray="{dash}"/>')
        if label:
            self._legend.append((label, color))

    # -- assembly ---------------------------------------------------------
    def _ticks(self, lo: float, hi: float, n: int = 5) -> list[float]:
        raw = np.linspace(lo, hi, n)
        return [float(f"{v:.3g}") for v in raw]

    def render(self) -> str:
        if self._xlim is None or self._ylim is None:
            raise RuntimeError("set_limits must be called before render")
        out = [
            '<?xml version="1.0" encoding="UTF-8"?>',
            f'<svg xmlns="http://www.w3.org/2000/svg" width="{self.width}"'
            f' height="{self.height}" viewBox="0 0 {self.width} {self.height}">',
            f'<rect width="{self.width}" height="{self.height}" fill="white"/>',
        ]
        x0, y0 = self.left, self.height - self.bottom
        x1, y1 = self.width - self.right, self.top
        out.append(f'<rect x="{x0}" y="{y1}" width="{x1 - x0}"'
                   f' height="{y0 - y1}" fill="none" stroke="#404040"/>')
        font = 'font-family="Helvetica,Arial,sans-serif"'
        for v in self._ticks(*self._xlim):
            sx = _fmt(self._sx(v))
            out.append(f'<line x1="{sx}" y1="{y0}" x2="{sx}" y2="{y0 + 4}"'
                       ' stroke="#404040"/>')
            out.append(f'<text x="{sx}" y="{y0 + 16}" {font} font-size="11"'
                       f' text-anchor="middle">{_fmt(v)}</text>')
        for v in self._ticks(*self._ylim):
            sy = _fmt(self._sy(v))
            out.append(f'<line x1="{x0 - 4}" y1="{sy}" x2="{x0}" y2="{sy}"'
                       ' stroke="#404040"/>')
            out.append(f'<text x="{x0 - 7}" y="{sy}" {font} font-size="11"'
                       f' text-anchor="end" dominant-baseline="middle">{_fmt(v)}</text>')
        if self.title:
            out.append(f'<text x="{(x0 + x1) / 2:.6g}" y="{y1 - 5}" {font}'
                       f' font-size="13" text-anchor="middle">{self.title}</text>')
        if self.xlabel:
            out.append(f'<text x="{(x0 + x1) / 2:.6g}" y="{self.height - 6}" {font}'
                       f' font-size="12" text-anchor="middle">{self.xlabel}</text>')
        if self.ylabel:
            out.append(f'<text x="14" y="{(y0 + y1) / 2:.6g}" {font} font-size="12"'
                       f' text-anchor="middle"'
                       f' transform="rotate(-90 14 {(y0 + y1) / 2:.6g})">'
                       f'{self.ylabel}</text>')
        out.extend(self._body)
        for i, (label, color) in enumerate(self._legend):
            ly = y1 + 16 + i * 16
            out.append(f'<rect x="{x1 - 130}" y="{ly - 9}" width="12" height="9"'
                       f' fill="{color}"/>')
            out.append(f'<text x="{x1 - 113}" y="{ly}" {font}'
                       f' font-size="11">{label}</text>')
        out.append("</svg>")
        return "\n".join(out) + "\n"

    def save(self, path) -> None:
        with open(path, "w") as fh:
            fh.write(self.render())


def family_color(name: str, index: int = 0) -> str:
    return COLORS.get(name, _FALLBACK[index % len(_FALLBACK)])
