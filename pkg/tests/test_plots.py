import math
import re

import numpy as np
import pytest

from pullback_lab.plots import TableError, emit_plots, read_table


def write_table(path, taus, values, header="tau,d_H"):
    path.write_text(header + "\n" + "".join(f"{float(t)!r},{float(v)!r}\n" for t, v in zip(taus, values)))
    return path


def svg_points(svg):
    return np.array([[float(x), float(y)] for x, y in re.findall(r'class="pt" cx="([\d.]+)" cy="([\d.]+)"', svg)])


def svg_fit_line(svg):
    m = re.search(r'class="fit" x1="([\d.]+)" y1="([\d.]+)" x2="([\d.]+)" y2="([\d.]+)"', svg)
    return np.array([float(g) for g in m.groups()])


def test_exact_exponential_on_fitted_line(tmp_path):
    taus = np.arange(0.0, 11.0)
    table = write_table(tmp_path / "decay.csv", taus, 4 * np.exp(-0.5 * taus))
    svg = emit_plots([table])[0].read_text()
    x1, y1, x2, y2 = svg_fit_line(svg)
    pts = svg_points(svg)
    assert len(pts) == len(taus)
    # perpendicular pixel distance of each point from the fitted line
    dist = np.abs((x2 - x1) * (y1 - pts[:, 1]) - (x1 - pts[:, 0]) * (y2 - y1)) / math.hypot(x2 - x1, y2 - y1)
    assert dist.max() <= 1.0


def test_legend_reports_fit(tmp_path):
    taus = np.arange(1.0, 8.0)
    table = write_table(tmp_path / "k.csv", taus, 2 * np.exp(-0.25 * taus), header="tau,kappa")
    svg = emit_plots([table], out_dir=tmp_path)[0].read_text()
    legend = re.search(r'class="legend"[^>]*>([^<]*)<', svg).group(1)
    assert "omega=0.25" in legend and "C=2" in legend


def test_plots_are_deterministic(tmp_path):
    taus = np.arange(0.0, 6.0)
    table = write_table(tmp_path / "t.csv", taus, np.exp(-taus) * (1 + 0.1 * np.sin(taus)))
    first = emit_plots([table])[0].read_bytes()
    second = emit_plots([table])[0].read_bytes()
    assert first == second


@pytest.mark.parametrize("content", ["", "tau,d_H\n", "tau\n1\n", "tau,d_H\n1,abc\n"])
def test_bad_tables_rejected(tmp_path, content):
    path = tmp_path / "bad.csv"
    path.write_text(content)
    with pytest.raises(TableError):
        read_table(path)


def test_missing_or_short_table(tmp_path):
    with pytest.raises(TableError):
        emit_plots([tmp_path / "nope.csv"])
    short = write_table(tmp_path / "s.csv", [0.0, 1.0], [1.0, 0.5])
    with pytest.raises(TableError):
        emit_plots([short])
