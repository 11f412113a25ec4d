"""Deterministic SVG decay plots: log-scale points with a fitted exponential."""
from __future__ import annotations

import csv
from pathlib import Path
from typing import Sequence

import numpy as np

from .process_core import RateFit, fit_exponential_rate

WIDTH, HEIGHT = 640, 420
MARGIN_L, MARGIN_R, MARGIN_T, MARGIN_B = 70, 20, 30, 50


class TableError(ValueError):
    """Missing, empty or malformed table."""


def read_table(path: str | Path) -> tuple[list[str], np.ndarray]:
    """Read a two-column numeric CSV with a header row."""
    path = Path(path)
    if not path.exists():
        raise TableError(f"{path}: no such table")
    with open(path, newline="") as fh:
        rows = [r for r in csv.reader(fh) if r]
    if not rows:
        raise TableError(f"{path}: empty table")
    header = [c.strip() for c in rows[0]]
    if len(header) < 2:
        raise TableError(f"{path}: need at least two columns, header is {header}")
    try:
        data = np.array([[float(x) for x in r[:2]] for r in rows[1:]], dtype=float)
    except ValueError as exc:
        raise TableError(f"{path}: non-numeric entry ({exc})") from exc
    if data.size == 0:
        raise TableError(f"{path}: table has a header but no rows")
    return header[:2], data.reshape(-1, 2)


def _fmt(x: float) -> str:
    return f"{x:.2f}"


class _Axes:
    def __init__(self, x: np.ndarray, logy: np.ndarray):
        self.x0, self.x1 = float(x.min()), float(x.max())
        if self.x1 == self.x0:
            self.x1 = self.x0 + 1.0
        lo, hi = float(np.floor(logy.min())), float(np.ceil(logy.max()))
        if hi == lo:
            hi = lo + 1.0
        self.y0, self.y1 = lo, hi

    def px(self, x) -> np.ndarray:
        w = WIDTH - MARGIN_L - MARGIN_R
        return MARGIN_L + (np.asarray(x, float) - self.x0) / (self.x1 - self.x0) * w

    def py(self, logy) -> np.ndarray:
        h = HEIGHT - MARGIN_T - MARGIN_B
        return HEIGHT - MARGIN_B - (np.asarray(logy, float) - self.y0) / (self.y1 - self.y0) * h


def render_decay_svg(taus: Sequence[float], values: Sequence[float], fit: RateFit,
                     xlabel: str, ylabel: str, title: str) -> str:
    """SVG text for a log-scale decay plot with the fitted line overlaid."""
    taus = np.asarray(taus, float)
    vals = np.maximum(np.asarray(values, float), 1e-300)
    logy = np.log10(vals)
    fit_x = np.array([taus.min(), taus.max()])
    fit_logy = (np.log(fit.C_hat) - fit.omega_hat * fit_x) / np.log(10)
    ax = _Axes(np.concatenate([taus, fit_x]), np.concatenate([logy, fit_logy]))
    out = [f'<svg xmlns="http://www.w3.org/2000/svg" width="{WIDTH}" height="{HEIGHT}" '
           f'viewBox="0 0 {WIDTH} {HEIGHT}">',
           f'<rect x="0" y="0" width="{WIDTH}" height="{HEIGHT}" fill="white"/>',
           f'<text x="{WIDTH // 2}" y="18" text-anchor="middle" font-size="14">{title}</text>']
    # frame and decade ticks
    out.append(f'<rect x="{MARGIN_L}" y="{MARGIN_T}" width="{WIDTH - MARGIN_L - MARGIN_R}" '
               f'height="{HEIGHT - MARGIN_T - MARGIN_B}" fill="none" stroke="black"/>')
    for dec in range(int(ax.y0), int(ax.y1) + 1):
        y = _fmt(ax.py(dec))
        out.append(f'<line class="tick" x1="{MARGIN_L - 4}" y1="{y}" x2="{MARGIN_L}" y2="{y}" stroke="black"/>')
        out.append(f'<text x="{MARGIN_L - 6}" y="{y}" text-anchor="end" font-size="10" '
                   f'dominant-baseline="middle">1e{dec}</text>')
    for xt in np.linspace(ax.x0, ax.x1, 6):
        x = _fmt(ax.px(xt))
        out.append(f'<text x="{x}" y="{HEIGHT - MARGIN_B + 16}" text-anchor="middle" font-size="10">{xt:g}</text>')
    out.append(f'<text x="{WIDTH // 2}" y="{HEIGHT - 10}" text-anchor="middle" font-size="12">{xlabel}</text>')
    out.append(f'<text x="16" y="{HEIGHT // 2}" text-anchor="middle" font-size="12" '
               f'transform="rotate(-90 16 {HEIGHT // 2})">{ylabel}</text>')
    # fitted line then points
    fx, fy = ax.px(fit_x), ax.py(fit_logy)
    out.append(f'<line class="fit" x1="{_fmt(fx[0])}" y1="{_fmt(fy[0])}" x2="{_fmt(fx[1])}" '
               f'y2="{_fmt(fy[1])}" stroke="crimson" stroke-width="1.5"/>')
    for x, y in zip(ax.px(taus), ax.py(logy)):
        out.append(f'<circle class="pt" cx="{_fmt(x)}" cy="{_fmt(y)}" r="3" fill="steelblue"/>')
    legend = f"fit C={fit.C_hat:.4g}, omega={fit.omega_hat:.4g}, residual={fit.residual:.3g}"
    out.append(f'<text class="legend" x="{WIDTH - MARGIN_R - 8}" y="{MARGIN_T + 16}" '
               f'text-anchor="end" font-size="11">{legend}</text>')
    out.append("</svg>")
    return "\n".join(out) + "\n"


def emit_plots(tables: Sequence[str | Path], out_dir: str | Path | None = None) -> list[Path]:
    """One SVG per table, written next to it unless ``out_dir`` is given."""
    written = []
    for table in tables:
        table = Path(table)
        header, data = read_table(table)
        if data.shape[0] < 3:
            raise TableError(f"{table}: need at least 3 rows to fit a rate")
        fit = fit_exponential_rate(data)
        svg = render_decay_svg(data[:, 0], data[:, 1], fit, header[0], header[1], table.stem)
        target = (Path(out_dir) if out_dir else table.parent) / (table.stem + ".svg")
        target.write_text(svg)
        written.append(target)
    return written
