"""Positive decay functions, their closure operations and a numerical
membership test for subexponential backward growth.

A function r belongs to the class when, for every rate alpha > 0,

    sup_{s <= t} r(s - tau) * exp(-alpha * tau)  ->  0   as tau -> inf.

Membership cannot be decided from samples, so ``membership_check`` returns a
three-valued verdict backed by the probes it evaluated.
"""
from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Iterable, Literal, Sequence

import numpy as np

from .expressions import compile_decay

DEFAULT_ALPHAS = (0.05, 0.2, 1.0, 5.0)
DEFAULT_ANCHORS = (-10.0, 0.0, 10.0)
DEFAULT_TAU_MAX = 200.0
DEFAULT_WINDOW = 100.0


class DecayDomainError(ValueError):
    """Bad argument (non-positive scale, rate, or an out-of-grid evaluation)."""


class GridMismatchError(ValueError):
    """Two tabulated functions live on different grids."""


class NonPositiveError(ValueError):
    """A decay function produced a value that is not strictly positive."""


@dataclass(frozen=True)
class DecayFunction:
    """Strictly positive continuous function of time.

    Either a closed form (``grid is None``) or a table evaluated by linear
    interpolation on ``grid``; evaluating a table outside its grid raises.
    ``meta`` carries bookkeeping such as quadrature truncation bounds.
    """

    fn: Callable[[np.ndarray], np.ndarray] = field(repr=False, compare=False)
    description: str
    grid: np.ndarray | None = field(default=None, repr=False, compare=False)
    values: np.ndarray | None = field(default=None, repr=False, compare=False)
    meta: dict = field(default_factory=dict, repr=False, compare=False)

    @property
    def representation(self) -> str:
        return "closed-form" if self.grid is None else "tabulated"

    @property
    def is_tabulated(self) -> bool:
        return self.grid is not None

    # -- constructors -----------------------------------------------------
    @classmethod
    def parse(cls, source: str) -> "DecayFunction":
        """Build a closed form from the small decay grammar, e.g. ``poly(1,0,1)``."""
        return cls(compile_decay(source), source.strip())

    @classmethod
    def constant(cls, c: float) -> "DecayFunction":
        if not c > 0:
            raise DecayDomainError(f"constant must be positive, got {c}")
        c = float(c)
        return cls(lambda t: np.full(np.shape(t), c), f"const({c!r})")

    @classmethod
    def tabulated(cls, grid: Sequence[float], values: Sequence[float],
                  description: str = "tabulated", meta: dict | None = None) -> "DecayFunction":
        grid = np.array(grid, dtype=float)
        values = np.array(values, dtype=float)
        if grid.ndim != 1 or grid.shape != values.shape or grid.size < 2:
            raise DecayDomainError("tabulation needs matching 1-D arrays with at least 2 samples")
        if not np.all(np.diff(grid) > 0):
            raise DecayDomainError("tabulation grid must be strictly increasing")
        if not (np.all(np.isfinite(grid)) and np.all(np.isfinite(values))):
            raise DecayDomainError("tabulated samples must be finite")
        if np.any(values <= 0):
            raise NonPositiveError(f"{description}: tabulated values must be positive")
        grid.setflags(write=False)
        values.setflags(write=False)
        return cls(lambda t: np.interp(t, grid, values), description, grid, values,
                   dict(meta or {}))

    # -- evaluation -------------------------------------------------------
    def __call__(self, t) -> np.ndarray | float:
        t_arr = np.asarray(t, dtype=float)
        if self.grid is not None:
            lo, hi = self.grid[0], self.grid[-1]
            if t_arr.size and (t_arr.min() < lo - 1e-12 or t_arr.max() > hi + 1e-12):
                raise DecayDomainError(
                    f"{self.description}: evaluation at t in [{t_arr.min()}, {t_arr.max()}] "
                    f"outside tabulated grid [{lo}, {hi}]")
        out = np.asarray(self.fn(t_arr), dtype=float)
        with np.errstate(invalid="ignore"):
            bad = out <= 0
        if np.any(bad):
            where = t_arr.reshape(-1)[np.argmax(bad.reshape(-1))] if t_arr.ndim else float(t_arr)
            raise NonPositiveError(f"{self.description} is not positive at t={where}")
        return out if out.ndim else float(out)

    def sup(self, ts: Iterable[float]) -> float:
        return float(np.max(self(np.asarray(list(ts), dtype=float))))

    # -- io ---------------------------------------------------------------
    def to_csv(self, path: str | Path, grid: Sequence[float] | None = None) -> None:
        ts = self.grid if grid is None else np.asarray(grid, dtype=float)
        if ts is None:
            raise DecayDomainError("closed-form functions need an explicit grid to tabulate")
        vals = self(ts)
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "value"])
            for a, b in zip(ts, vals):
                w.writerow([repr(float(a)), repr(float(b))])

    @classmethod
    def from_csv(cls, path: str | Path) -> "DecayFunction":
        with open(path, newline="") as fh:
            rows = list(csv.reader(fh))
        if not rows or [c.strip() for c in rows[0]] != ["t", "value"]:
            raise DecayDomainError(f"{path}: expected header 't,value'")
        data = np.array([[float(x) for x in r] for r in rows[1:] if r], dtype=float)
        if data.ndim != 2 or data.shape[1] != 2:
            raise DecayDomainError(f"{path}: malformed rows")
        return cls.tabulated(data[:, 0], data[:, 1], description=f"table({Path(path).name})")


def as_decay(obj: "DecayFunction | str | float") -> DecayFunction:
    """Coerce an expression string or a positive number into a DecayFunction."""
    if isinstance(obj, DecayFunction):
        return obj
    if isinstance(obj, (int, float)):
        return DecayFunction.constant(float(obj))
    return DecayFunction.parse(str(obj))


# ---------------------------------------------------------------------------
# closure operations
# ---------------------------------------------------------------------------

def _same_grid(a: np.ndarray, b: np.ndarray) -> bool:
    return a.shape == b.shape and np.array_equal(a, b)


def combine(r1: DecayFunction, r2: DecayFunction,
            op: Literal["sum", "product"]) -> DecayFunction:
    """Pointwise sum or product of two decay functions.

    Two tables must share a grid. A table mixed with a closed form yields a
    table on the table's grid.
    """
    if op not in ("sum", "product"):
        raise ValueError(f"unknown op {op!r}")
    sym = "+" if op == "sum" else "*"
    desc = f"({r1.description}) {sym} ({r2.description})"
    binop = np.add if op == "sum" else np.multiply
    grid = None
    if r1.is_tabulated and r2.is_tabulated:
        if not _same_grid(r1.grid, r2.grid):
            raise GridMismatchError(f"cannot combine tables on different grids: {desc}")
        grid = r1.grid
    elif r1.is_tabulated or r2.is_tabulated:
        grid = r1.grid if r1.is_tabulated else r2.grid
    if grid is not None:
        return DecayFunction.tabulated(grid, binop(r1(grid), r2(grid)), desc)
    return DecayFunction(lambda t: binop(r1.fn(t), r2.fn(t)), desc)


def scale_sqrt(r: DecayFunction, c: float, take_sqrt: bool = False) -> DecayFunction:
    """Return c*r, or sqrt(c*r) when ``take_sqrt`` is set."""
    if not c > 0:
        raise DecayDomainError(f"scale must be positive, got {c}")
    c = float(c)
    desc = f"{c!r}*({r.description})"
    if take_sqrt:
        desc = f"sqrt({desc})"
    if r.is_tabulated:
        vals = c * r.values
        return DecayFunction.tabulated(r.grid, np.sqrt(vals) if take_sqrt else vals, desc)
    if take_sqrt:
        return DecayFunction(lambda t: np.sqrt(c * r.fn(t)), desc)
    return DecayFunction(lambda t: c * r.fn(t), desc)


def add_constant(r: DecayFunction, c: float) -> DecayFunction:
    """Shorthand for ``combine(r, const c, sum)``."""
    return combine(r, DecayFunction.constant(c), "sum")


# ---------------------------------------------------------------------------
# membership
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Counterexample:
    alpha: float
    t: float
    taus: tuple[float, ...]
    values: tuple[float, ...]


@dataclass(frozen=True)
class MembershipVerdict:
    """Outcome of a membership probe.

    ``witnesses`` holds (alpha, t, tau, value) quadruples; a refutation always
    carries a ``counterexample`` whose values stay above ``margin``.
    """

    status: Literal["certified-decay", "refuted", "inconclusive"]
    witnesses: tuple[tuple[float, float, float, float], ...]
    counterexample: Counterexample | None = None
    margin: float = 1.0
    overflow: bool = False

    @property
    def certified(self) -> bool:
        return self.status == "certified-decay"

    @property
    def refuted(self) -> bool:
        return self.status == "refuted"


def _log_window_sup(r: DecayFunction, t: float, taus: np.ndarray, window: float,
                    s_grid_density: float) -> tuple[np.ndarray, bool]:
    """log of max over the s-window of r(s - tau), for every tau."""
    n_s = max(2, int(np.ceil(window * s_grid_density)) + 1)
    s = np.linspace(t - window, t, n_s)[1:]  # the window is half-open on the left
    out = np.empty(taus.size)
    overflow = False
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        for i, tau in enumerate(taus):
            # tables go through __call__ so out-of-grid probes raise
            vals = np.asarray(r(s - tau) if r.is_tabulated else r.fn(s - tau), dtype=float)
            if not np.all(np.isfinite(vals)):
                overflow = True
                out[i] = np.inf
                continue
            out[i] = np.log(np.max(vals))
    return out, overflow


def membership_check(r: DecayFunction, alphas: Sequence[float] = DEFAULT_ALPHAS,
                     t_anchors: Sequence[float] = DEFAULT_ANCHORS,
                     tau_max: float = DEFAULT_TAU_MAX, s_grid_density: float = 4.0,
                     tol: float = 1e-3, *, window: float = DEFAULT_WINDOW,
                     n_tau: int = 401, margin: float = 1.0) -> MembershipVerdict:
    """Probe m(tau) = max_{s in (t-window, t]} r(s-tau) exp(-alpha tau).

    Per (alpha, t) pair the probe is *certified* when m is non-increasing on
    the final quartile of the tau grid and m(tau_max) <= tol * max(1, max m),
    *refuted* when m stays >= ``margin`` and non-decreasing on the final
    quartile, and inconclusive otherwise. Values are handled in log space so
    fast growth does not overflow.
    """
    alphas = [float(a) for a in alphas]
    if not alphas or any(a <= 0 for a in alphas):
        raise DecayDomainError("alphas must be a nonempty list of positive rates")
    if not tau_max > 0 or not tol > 0 or not s_grid_density > 0:
        raise DecayDomainError("tau_max, tol and s_grid_density must be positive")
    if not margin > tol:
        raise DecayDomainError("refutation margin must exceed tol")

    taus = np.linspace(0.0, tau_max, n_tau)
    quart = taus >= 0.75 * tau_max
    witnesses: list[tuple[float, float, float, float]] = []
    n_cert, counter, overflow = 0, None, False
    log_tol, log_margin = np.log(tol), np.log(margin)

    for t in t_anchors:
        log_sup, ovf = _log_window_sup(r, float(t), taus, window, s_grid_density)
        overflow |= ovf
        for alpha in alphas:
            log_m = log_sup - alpha * taus
            tail = log_m[quart]
            witnesses.append((alpha, float(t), float(taus[0]), float(np.exp(log_m[0]))))
            witnesses.append((alpha, float(t), float(taus[-1]), float(np.exp(log_m[-1]))))
            # tiny slack so flat plateaus of floating-point noise count as monotone
            dec = np.all(np.diff(tail) <= 1e-12 * np.maximum(1.0, np.abs(tail[:-1])))
            inc = np.all(np.diff(tail) >= -1e-12 * np.maximum(1.0, np.abs(tail[:-1])))
            peak = max(0.0, float(np.max(log_m[np.isfinite(log_m)], initial=0.0)))
            if np.isfinite(tail).all() and dec and tail[-1] <= log_tol + peak:
                n_cert += 1
            elif (not np.isfinite(tail).all()) or (inc and np.min(tail) >= log_margin):
                if counter is None:
                    with np.errstate(over="ignore"):
                        vals = tuple(float(v) for v in np.exp(tail))
                    counter = Counterexample(alpha, float(t), tuple(float(x) for x in taus[quart]),
                                             vals)
    if counter is not None:
        return MembershipVerdict("refuted", tuple(witnesses), counter, margin, overflow)
    status = "certified-decay" if n_cert == len(alphas) * len(t_anchors) else "inconclusive"
    return MembershipVerdict(status, tuple(witnesses), None, margin, overflow)


# ---------------------------------------------------------------------------
# transforms
# ---------------------------------------------------------------------------

def exp_integral_transform(delta: DecayFunction, eta: float, quadrature_cutoff: float | None = None,
                           quadrature_step: float = 1e-3, grid: Sequence[float] | None = None,
                           tail_tol: float = 1e-10, chunk: int = 2_000_000) -> DecayFunction:
    """Tabulate mu(t) = int_0^inf delta(t-u) exp(-eta u) du on ``grid``.

    The integral is truncated at ``quadrature_cutoff`` (by default the point
    where exp(-eta u) drops below ``tail_tol``) and evaluated with the
    composite trapezoid rule. The recorded ``truncation_bound`` estimates the
    neglected tail as max_t delta(t - cutoff) exp(-eta cutoff) / eta, which
    is exact when delta is locally constant beyond the cutoff.
    """
    if not eta > 0:
        raise DecayDomainError(f"rate eta must be positive, got {eta}")
    if quadrature_cutoff is None:
        quadrature_cutoff = np.log(1.0 / tail_tol) / eta
    if not quadrature_cutoff > 0 or not quadrature_step > 0:
        raise DecayDomainError("cutoff and step must be positive")
    ts = np.linspace(-50.0, 50.0, 201) if grid is None else np.asarray(grid, dtype=float)
    n_u = int(np.ceil(quadrature_cutoff / quadrature_step)) + 1
    u = np.linspace(0.0, quadrature_cutoff, n_u)
    h = u[1] - u[0]
    w = np.full(n_u, h)
    w[0] = w[-1] = h / 2
    kern = w * np.exp(-eta * u)
    rows = max(1, chunk // n_u)
    out = np.empty(ts.size)
    for i in range(0, ts.size, rows):
        block = ts[i:i + rows, None] - u[None, :]
        out[i:i + rows] = np.asarray(delta(block)) @ kern
    tail = float(np.max(delta(ts - quadrature_cutoff))) * np.exp(-eta * quadrature_cutoff) / eta
    desc = f"expint[{delta.description}; eta={eta:.6g}]"
    return DecayFunction.tabulated(ts, out, desc, meta={
        "truncation_bound": tail, "quadrature_cutoff": float(quadrature_cutoff),
        "quadrature_step": float(h), "eta": float(eta)})


def window_sup_transform(delta: DecayFunction, T: float, ell_grid_density: float = 1000.0,
                         grid: Sequence[float] | None = None,
                         chunk: int = 2_000_000) -> DecayFunction:
    """Tabulate mu(s) = max_{l in [0, T]} delta(l + s) on ``grid``."""
    if not T > 0:
        raise DecayDomainError(f"window length must be positive, got {T}")
    ts = np.linspace(-50.0, 50.0, 201) if grid is None else np.asarray(grid, dtype=float)
    n_l = max(2, int(np.ceil(T * ell_grid_density)) + 1)
    ell = np.linspace(0.0, T, n_l)
    rows = max(1, chunk // n_l)
    out = np.empty(ts.size)
    for i in range(0, ts.size, rows):
        out[i:i + rows] = np.max(np.asarray(delta(ts[i:i + rows, None] + ell[None, :])), axis=1)
    return DecayFunction.tabulated(ts, out, f"winsup[{delta.description}; T={T:.6g}]",
                                   meta={"ell_points": n_l})
