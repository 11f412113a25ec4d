"""Evolution processes on a shared time grid and the pullback experiments
built on them.

Every time is an integer multiple of the grid step ``dt``. Advancing from
index i to index j applies j - i single-step maps, so the identity and
cocycle laws hold by construction.
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Literal, Sequence

import numpy as np

from .decay_class import DecayFunction, membership_check
from .set_geometry import PointCloud, kappa_bounds

ZERO_FLOOR = 1e-15
UniverseTag = Literal["Cstar", "backwards_bounded", "uniformly_bounded"]


class OffGridError(ValueError):
    """A time that is not an integer multiple of the grid step."""


class IntegrationBlowup(RuntimeError):
    """Non-finite or runaway state during time stepping."""

    def __init__(self, message: str, time: float | None = None,
                 rows: Sequence[int] = ()):
        super().__init__(message)
        self.time = time
        self.rows = tuple(int(r) for r in rows)


StepFn = Callable[[np.ndarray, np.ndarray, float], np.ndarray]


@dataclass(frozen=True)
class EvolutionProcess:
    """Process S(t, s) generated by a one-step map on a uniform grid.

    ``step(times, X, dt)`` advances each row of X from its own time to time
    + dt and must be a pure function.
    """

    step: StepFn = field(repr=False)
    dt: float
    dim: int
    name: str = "process"

    def index(self, t: float) -> int:
        k = round(t / self.dt)
        if abs(k * self.dt - t) > 1e-9 * max(1.0, abs(t)):
            raise OffGridError(f"time {t} is not a multiple of the grid step {self.dt}")
        return int(k)

    def time(self, k: int | np.ndarray) -> np.ndarray | float:
        return np.asarray(k) * self.dt if np.ndim(k) else k * self.dt

    def evolve(self, start_index: np.ndarray, X: np.ndarray,
               checkpoints: Sequence[int]) -> np.ndarray:
        """Integrate rows released at their own start indices.

        Returns an array of shape (len(checkpoints), n, dim) holding each row
        at each checkpoint index; entries before a row's release are NaN.
        Rows are stepped together once released, which makes batches of
        trajectories with staggered starts cheap.
        """
        start = np.asarray(start_index, dtype=np.int64).reshape(-1)
        X = np.array(X, dtype=float, ndmin=2)
        if X.shape != (start.size, self.dim):
            raise ValueError(f"expected states of shape {(start.size, self.dim)}, got {X.shape}")
        cps = np.asarray(sorted(set(int(c) for c in checkpoints)), dtype=np.int64)
        out = np.full((cps.size, start.size, self.dim), np.nan)
        if cps.size == 0 or start.size == 0:
            return out
        order = np.argsort(start, kind="stable")
        start_sorted = start[order]
        cur = X[order].copy()
        k = int(start_sorted[0])
        k_end = int(cps[-1])
        cp_pos = 0
        while True:
            n_active = int(np.searchsorted(start_sorted, k, side="right"))
            while cp_pos < cps.size and cps[cp_pos] < k:
                cp_pos += 1
            if cp_pos < cps.size and cps[cp_pos] == k:
                out[cp_pos, order[:n_active]] = cur[:n_active]
                cp_pos += 1
            if k >= k_end:
                break
            if n_active:
                times = np.full(n_active, k * self.dt)
                try:
                    cur[:n_active] = self.step(times, cur[:n_active], self.dt)
                except IntegrationBlowup as exc:
                    rows = [int(order[r]) for r in exc.rows]
                    raise IntegrationBlowup(f"{exc} (input rows {rows})", exc.time, rows) from exc
            k += 1
        return out

    def advance(self, t: float, s: float, x: np.ndarray) -> np.ndarray:
        """S(t, s) x for a single state."""
        i, j = self.index(s), self.index(t)
        if j < i:
            raise ValueError(f"advance needs t >= s, got t={t}, s={s}")
        return self.evolve(np.array([i]), np.asarray(x, dtype=float)[None, :], [j])[0, 0]

    def advance_many(self, t: float, s: float, X: np.ndarray) -> np.ndarray:
        """S(t, s) applied to every row of X."""
        i, j = self.index(s), self.index(t)
        if j < i:
            raise ValueError(f"advance needs t >= s, got t={t}, s={s}")
        X = np.array(X, dtype=float, ndmin=2)
        return self.evolve(np.full(X.shape[0], i), X, [j])[0]

    def trajectory(self, s: float, t: float, x: np.ndarray, every: int = 1) -> tuple[np.ndarray, np.ndarray]:
        """Times and states from s to t, sampled every ``every`` steps."""
        i, j = self.index(s), self.index(t)
        cps = list(range(i, j + 1, every))
        if cps[-1] != j:
            cps.append(j)
        states = self.evolve(np.array([i]), np.asarray(x, dtype=float)[None, :], cps)[:, 0]
        return np.asarray(cps) * self.dt, states


def linear_diagonal_process(rates: Sequence[float], dt: float, name: str = "linear") -> EvolutionProcess:
    """Toy process x' = A x with diagonal A; each step multiplies by exp(A dt)."""
    factor = np.exp(np.asarray(rates, dtype=float) * dt)
    return EvolutionProcess(lambda times, X, h: X * factor, dt, len(factor), name)


# ---------------------------------------------------------------------------
# process laws
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ProcessLawReport:
    identity_errors: tuple[float, ...]
    cocycle_errors: tuple[float, ...]
    tolerance: float = 1e-12

    @property
    def max_error(self) -> float:
        return max(self.identity_errors + self.cocycle_errors, default=0.0)

    @property
    def passed(self) -> bool:
        return self.max_error <= self.tolerance


def verify_process_laws(S: EvolutionProcess, probes: Sequence[tuple[float, float, float, np.ndarray]],
                        tol: float = 1e-12) -> ProcessLawReport:
    """Relative discrepancies of S(t,t)=id and S(t,r)S(r,s)=S(t,s) per probe."""
    ident, coc = [], []
    for t, r, s, x in probes:
        if not t >= r >= s:
            raise ValueError(f"probe needs t >= r >= s, got {(t, r, s)}")
        x = np.asarray(x, dtype=float)
        scale = max(1.0, float(np.linalg.norm(x)))
        ident.append(float(np.linalg.norm(S.advance(t, t, x) - x)) / scale)
        direct = S.advance(t, s, x)
        composed = S.advance(t, r, S.advance(r, s, x))
        coc.append(float(np.linalg.norm(direct - composed)) / max(1.0, float(np.linalg.norm(direct))))
    return ProcessLawReport(tuple(ident), tuple(coc), tol)


# ---------------------------------------------------------------------------
# families and universes
# ---------------------------------------------------------------------------

def time_seed(seed: int, t: float, resolution: float = 1e-6) -> np.random.Generator:
    """Generator keyed by (seed, t); the same pair always yields the same stream."""
    k = int(round(t / resolution))
    return np.random.default_rng([int(seed) & 0xFFFFFFFF, abs(k), int(k < 0)])


def sample_ball(rng: np.random.Generator, count: int, dim: int, radius: float) -> np.ndarray:
    """Uniform samples from the closed Euclidean ball."""
    g = rng.standard_normal((count, dim))
    g /= np.linalg.norm(g, axis=1, keepdims=True)
    rad = radius * rng.random(count) ** (1.0 / dim)
    return g * rad[:, None]


@dataclass(frozen=True)
class FamilySpec:
    """Time-indexed family of bounded sets, accessed through samples.

    ``sample(t, count, seed)`` returns a cloud whose points all have norm at
    most ``bound(t)``; ``check_sample`` re-verifies this on any cloud.
    """

    sample_fn: Callable[[float, int, int], np.ndarray] = field(repr=False)
    bound: DecayFunction
    universe_tag: UniverseTag = "Cstar"
    label: str = "D"
    norm_tag: str = "X"

    def sample(self, t: float, count: int, seed: int) -> PointCloud:
        pts = self.sample_fn(t, count, seed)
        cloud = PointCloud(pts, self.norm_tag, f"{self.label}_{{{t:g}}}")
        self.check_sample(cloud, t)
        return cloud

    def check_sample(self, cloud: PointCloud, t: float, rel_tol: float = 1e-12) -> None:
        b = float(self.bound(t))
        worst = float(cloud.norms().max())
        if worst > b * (1 + rel_tol):
            raise ValueError(f"{self.label}: sample norm {worst} exceeds bound {b} at t={t}")


def ball_family(bound: DecayFunction, dim: int, universe_tag: UniverseTag = "Cstar",
                label: str = "D", shell: float = 0.0, norm_tag: str = "X") -> FamilySpec:
    """Family D_t = closed ball of radius bound(t), sampled uniformly.

    With ``shell`` > 0 the radii are drawn from [(1 - shell) R, R] instead,
    which concentrates samples near the boundary where images are largest.
    """
    def sample_fn(t, count, seed):
        rng = time_seed(seed, t)
        R = float(bound(t))
        if shell > 0:
            g = rng.standard_normal((count, dim))
            g /= np.linalg.norm(g, axis=1, keepdims=True)
            return g * (R * (1 - shell * rng.random(count)))[:, None]
        return sample_ball(rng, count, dim, R)
    return FamilySpec(sample_fn, bound, universe_tag, label, norm_tag)


@dataclass(frozen=True)
class UniverseCheck:
    accepted: bool
    reason: str


def in_universe(tag: UniverseTag, bound: DecayFunction, members: Sequence[DecayFunction] = (),
                probe_times: Sequence[float] | None = None, window: float = 100.0,
                **membership_kwargs) -> UniverseCheck:
    """Decide whether a family with the given bound belongs to a universe.

    A bound dominated pointwise (on the probe times) by a member bound is
    accepted without further tests, which is the closed-by-inclusion
    property. Otherwise: ``Cstar`` runs the membership probe,
    ``backwards_bounded`` needs a finite sup over the backward window of
    every probe, and ``uniformly_bounded`` needs a finite sup over all probes
    and windows.
    """
    probes = np.linspace(-window, window, 201) if probe_times is None else np.asarray(probe_times, float)
    vals = np.asarray(bound(probes))
    for m in members:
        if np.all(vals <= np.asarray(m(probes)) * (1 + 1e-12)):
            return UniverseCheck(True, f"dominated by member {m.description}")
    if tag == "Cstar":
        verdict = membership_check(bound, **membership_kwargs)
        return UniverseCheck(verdict.certified, verdict.status)
    if tag in ("backwards_bounded", "uniformly_bounded"):
        # a finite sup must not keep growing when the window widens: backwards
        # only for backwards_bounded, in both directions for uniformly_bounded
        if tag == "backwards_bounded":
            spans = [((t - window, t), (t - 5 * window, t)) for t in probes]
        else:
            lo, hi = probes[0] - window, probes[-1]
            spans = [((lo, hi), (lo - 4 * window, hi + 4 * window))]
        ok = True
        with np.errstate(over="ignore"):
            for (a, b), (c, d) in spans:
                near = np.max(np.asarray(bound(np.linspace(a, b, 401))))
                far = np.max(np.asarray(bound(np.linspace(c, d, 2001))))
                ok = ok and bool(np.isfinite(far)) and far <= 2 * near + 1e-12
        return UniverseCheck(bool(ok), "finite sup on probes" if ok else "sup grows on probes")
    raise ValueError(f"unknown universe tag {tag!r}")


# ---------------------------------------------------------------------------
# pullback images
# ---------------------------------------------------------------------------

def pullback_image(S: EvolutionProcess, t: float, tau: float, D: PointCloud) -> PointCloud:
    """The cloud S(t, t - tau) D."""
    if tau < 0:
        raise ValueError("tau must be nonnegative")
    S.index(tau)
    img = S.advance_many(t, t - tau, D.points)
    return PointCloud(img, D.norm_tag, f"S({t:g},{t - tau:g}){D.label}")


def pullback_images(S: EvolutionProcess, D: FamilySpec, probes: Sequence[float],
                    tau_grid: Sequence[float], n_samples: int, seed: int) -> dict[tuple[float, float], PointCloud]:
    """Images S(s, s - tau) D_{s - tau} for every probe s and grid tau.

    Samples are drawn once per release time s - tau, so probes sharing a
    release time see the same initial cloud and one integration serves them
    all.
    """
    probe_idx = {float(s): S.index(s) for s in probes}
    tau_idx = {float(tau): S.index(tau) for tau in tau_grid}
    if min(tau_idx.values(), default=0) < 0:
        raise ValueError("tau grid must be nonnegative")
    releases = sorted({p - q for p in probe_idx.values() for q in tau_idx.values()})
    clouds = [D.sample(S.time(r), n_samples, seed).points for r in releases]
    starts = np.repeat(np.asarray(releases, dtype=np.int64), n_samples)
    X = np.vstack(clouds)
    cps = sorted(set(probe_idx.values()))
    states = S.evolve(starts, X, cps)
    out = {}
    for s, p in probe_idx.items():
        row_cp = cps.index(p)
        for tau, q in tau_idx.items():
            k = releases.index(p - q)
            pts = states[row_cp, k * n_samples:(k + 1) * n_samples]
            out[(s, tau)] = PointCloud(pts, D.norm_tag, f"S({s:g},{s - tau:g}){D.label}_{{{s - tau:g}}}")
    return out


@dataclass(frozen=True)
class AbsorptionResult:
    """Smallest absorbing grid time (None if not found) and the evidence.

    ``ratios[(s, tau)]`` is the largest image norm divided by B.bound(s).
    """

    tau_hat: float | None
    ratios: dict[tuple[float, float], float]


def absorption_from_images(images: dict[tuple[float, float], PointCloud], B: FamilySpec) -> AbsorptionResult:
    ratios = {}
    for (s, tau), cloud in images.items():
        ratios[(s, tau)] = float(cloud.norms().max()) / float(B.bound(s))
    taus = sorted({tau for _, tau in ratios})
    tau_hat = None
    for tau in reversed(taus):
        if all(v <= 1.0 for (s, q), v in ratios.items() if q >= tau):
            tau_hat = tau
        else:
            break
    return AbsorptionResult(tau_hat, ratios)


def estimate_absorbing_time(S: EvolutionProcess, D: FamilySpec, B: FamilySpec, t: float,
                            s_probes: Sequence[float], tau_grid: Sequence[float],
                            n_samples: int, seed: int) -> AbsorptionResult:
    """Smallest grid tau after which every sampled image lies in B."""
    if any(s > t for s in s_probes):
        raise ValueError("probes must satisfy s <= t")
    images = pullback_images(S, D, s_probes, tau_grid, n_samples, seed)
    return absorption_from_images(images, B)


def build_absorbed_family(S: EvolutionProcess, B: FamilySpec, tau1: float, t: float,
                          tau_grid: Sequence[float], n_samples: int, seed: int) -> PointCloud:
    """Union of images S(t, t - tau) B_{t - tau} over the grid taus >= tau1."""
    taus = [float(x) for x in tau_grid if x >= tau1 - 1e-12]
    if not taus:
        raise ValueError("tau grid has no entries at or beyond tau1")
    images = pullback_images(S, B, [t], taus, n_samples, seed)
    cloud = PointCloud.concat([images[(float(t), tau)] for tau in taus])
    return cloud.relabel(f"C_hat_{{{t:g}}} (tau1={tau1:g}, {len(taus)} taus x {n_samples})")


def approximate_attractor(S: EvolutionProcess, C_family: Callable[[float], PointCloud], t: float,
                          n_steps: int, T: float) -> PointCloud:
    """Attractor surrogate S(t, t - nT) C_{t - nT}."""
    nT = S.time(S.index(T) * n_steps)
    base = C_family(t - nT)
    img = S.advance_many(t, t - nT, base.points)
    return PointCloud(img, base.norm_tag, f"M_hat_{{{t:g}}} (n={n_steps}, T={T:g})")


# ---------------------------------------------------------------------------
# rate fitting and kappa profiles
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class RateFit:
    """Least-squares fit log d = log C - omega tau.

    ``residual`` is the largest absolute log residual; ``floored`` counts
    samples raised to the zero floor before fitting.
    """

    C_hat: float
    omega_hat: float
    residual: float
    tau_range: tuple[float, float]
    floored: int = 0
    n: int = 0


def fit_exponential_rate(samples: Sequence[tuple[float, float]], floor: float = ZERO_FLOOR) -> RateFit:
    data = np.asarray(samples, dtype=float).reshape(-1, 2)
    ok = np.isfinite(data).all(axis=1) & (data[:, 1] >= 0)
    data = data[ok]
    if data.shape[0] < 3:
        raise ValueError("need at least 3 usable samples to fit a rate")
    taus, d = data[:, 0], data[:, 1].copy()
    floored = int(np.sum(d < floor))
    d[d < floor] = floor
    y = np.log(d)
    slope, intercept = np.polyfit(taus, y, 1)
    resid = float(np.max(np.abs(y - (intercept + slope * taus))))
    return RateFit(float(np.exp(intercept)), float(-slope), resid,
                   (float(taus.min()), float(taus.max())), floored, int(taus.size))


def kappa_profile(images_by_sigma: dict[float, PointCloud], tau_grid: Sequence[float],
                  sigma_cap: float, max_centers: int = 8, tol: float = 1e-12) -> list[tuple[float, float]]:
    """Upper kappa bound of the union over grid sigma in [tau, sigma_cap], per tau."""
    out = []
    sigmas = sorted(images_by_sigma)
    for tau in tau_grid:
        members = [images_by_sigma[s] for s in sigmas if tau - 1e-12 <= s <= sigma_cap + 1e-12]
        if not members:
            raise ValueError(f"no images with sigma in [{tau}, {sigma_cap}]")
        union = PointCloud.concat(members)
        out.append((float(tau), kappa_bounds(union, tol, max_centers)[1]))
    return out


def estimate_kappa_dissipativity(S: EvolutionProcess, D: FamilySpec, t: float, tau_grid: Sequence[float],
                                 sigma_cap: float, n_samples: int, seed: int,
                                 max_centers: int = 8) -> tuple[list[tuple[float, float]], RateFit]:
    """Kappa upper bounds of pullback unions and their fitted decay rate.

    The sigma grid is ``tau_grid`` together with ``sigma_cap``.
    """
    if any(x < 0 or x > sigma_cap for x in tau_grid):
        raise ValueError("tau grid must lie in [0, sigma_cap]")
    sigmas = sorted(set(float(x) for x in tau_grid) | {float(sigma_cap)})
    images = pullback_images(S, D, [t], sigmas, n_samples, seed)
    profile = kappa_profile({s: images[(float(t), s)] for s in sigmas}, tau_grid, sigma_cap, max_centers)
    return profile, fit_exponential_rate(profile)
