"""Experiment runners for the wave model, shared by the CLI and the scripts.

Each runner takes a model spec, its constants ledger, a dataclass config and
a seed, and returns a result object with a CSV-ready table and a summary.
Pullback image sets can be passed in so that expensive integrations are
shared between experiments.
"""
from __future__ import annotations

import math
from dataclasses import asdict, dataclass, field
from typing import Sequence

import numpy as np

from .decay_class import DecayFunction, MembershipVerdict, membership_check
from .energy_diagnostics import (ConstantsLedger, TrajectoryDiagnostics, analytic_absorbing_time,
                                 check_decay_inequality, contraction_batch, energy, gamma_function,
                                 lipschitz_constant, lyapunov, nonnegative_part, sandwich_margins)
from .process_core import (FamilySpec, PointCloud, RateFit, absorption_from_images, approximate_attractor,
                           ball_family, build_absorbed_family, fit_exponential_rate, kappa_profile,
                           pullback_images, sample_ball, time_seed)
from .set_geometry import hausdorff_semidist
from .wave_model import ModelSpec, lipschitz_check, make_process

Images = dict[tuple[float, float], PointCloud]


def grid(start: float, stop: float, step: float) -> list[float]:
    """Inclusive arithmetic grid, rounded to suppress float drift."""
    n = int(round((stop - start) / step))
    return [round(start + i * step, 10) for i in range(n + 1)]


def snap(t: float, dt: float) -> float:
    """Nearest point of the integration grid."""
    return round(round(t / dt) * dt, 10)


# ---------------------------------------------------------------------------
# configs
# ---------------------------------------------------------------------------

@dataclass
class SimulateConfig:
    n_traj: int = 5
    horizon: float = 30.0
    s: float = 0.0
    tol_decay: float = 1e-3
    csv_every: int = 100


@dataclass
class AbsorbConfig:
    family_bound: str = "const(1) + abs"
    probes: list[float] = field(default_factory=lambda: [-5.0, 0.0, 5.0])
    tau_start: float = 0.0
    tau_stop: float = 60.0
    tau_step: float = 5.0
    n_samples: int = 32

    @property
    def taus(self) -> list[float]:
        return grid(self.tau_start, self.tau_stop, self.tau_step)


@dataclass
class AbsorbedFamilyConfig:
    """Sampling of the positively invariant family used to seed attractors."""
    taus: list[float] = field(default_factory=lambda: [70.0, 80.0])
    n_samples: int = 4
    tau1_grid_step: float = 2.5
    tau1_grid_stop: float = 20.0
    tau1_samples: int = 8


@dataclass
class AttractConfig:
    t: float = 0.0
    family_bound: str = "const(1) + abs"
    tau_start: float = 10.0
    tau_stop: float = 60.0
    tau_step: float = 5.0
    n_samples: int = 32
    n_steps: int = 8
    chat: AbsorbedFamilyConfig = field(default_factory=AbsorbedFamilyConfig)
    min_omega: float = 0.0
    max_residual: float = 0.5
    # forcing period; when set, taus are its multiples in [tau_start, tau_stop]
    period: float | None = None

    @property
    def taus(self) -> list[float]:
        if self.period:
            lo, hi = math.ceil(self.tau_start / self.period - 1e-9), math.floor(self.tau_stop / self.period + 1e-9)
            return [m * self.period for m in range(lo, hi + 1)]
        return grid(self.tau_start, self.tau_stop, self.tau_step)


@dataclass
class KappaConfig:
    t: float = 0.0
    family_bound: str = "const(1) + abs"
    tau_start: float = 0.0
    tau_stop: float = 55.0
    tau_step: float = 5.0
    sigma_cap: float = 60.0
    n_samples: int = 32
    max_centers: int = 8

    @property
    def taus(self) -> list[float]:
        return grid(self.tau_start, self.tau_stop, self.tau_step)


@dataclass
class ContractConfig:
    t: float = 0.0
    n_values: list[int] = field(default_factory=lambda: [1, 2, 3])
    n_pairs: int = 20
    chat: AbsorbedFamilyConfig = field(default_factory=lambda: AbsorbedFamilyConfig(taus=[10.0, 15.0], n_samples=8))
    tol_ctr: float = 0.05
    sequence_length: int = 6
    lipschitz_pairs: int = 10
    lipschitz_gamma: float = 1.0
    tol_L: float = 0.05


@dataclass
class CstarConfig:
    function: str = "exp(-1)"
    alphas: list[float] = field(default_factory=lambda: [0.5, 1.0, 2.0])
    anchors: list[float] = field(default_factory=lambda: [-10.0, 0.0, 10.0])
    tau_max: float = 200.0
    s_grid_density: float = 4.0
    tol: float = 1e-3


# ---------------------------------------------------------------------------
# helpers
# ---------------------------------------------------------------------------

def family_from_bound(spec: ModelSpec, bound: str | DecayFunction, label: str = "D") -> FamilySpec:
    b = bound if isinstance(bound, DecayFunction) else DecayFunction.parse(bound)
    return ball_family(b, spec.dim, "Cstar", label)


def absorbing_family(spec: ModelSpec, ledger: ConstantsLedger) -> FamilySpec:
    return ball_family(ledger.r0, spec.dim, "Cstar", "B")


def family_images(spec: ModelSpec, bound: str, probes: Sequence[float], taus: Sequence[float],
                  n_samples: int, seed: int) -> Images:
    S = make_process(spec)
    return pullback_images(S, family_from_bound(spec, bound), probes, taus, n_samples, seed)


# ---------------------------------------------------------------------------
# simulate
# ---------------------------------------------------------------------------

@dataclass
class SimulateResult:
    diagnostics: list[TrajectoryDiagnostics]
    min_nonnegative: float
    min_sandwich: float
    states: np.ndarray          # (n_times, n_traj, dim)

    @property
    def max_violation(self) -> float:
        return max(d.violation_margin for d in self.diagnostics)

    @property
    def max_gronwall(self) -> float:
        return max(d.gronwall_margin for d in self.diagnostics)

    def summary_rows(self) -> list[list]:
        return [[i, d.violation_margin, d.gronwall_margin, d.energy_margin, d.remark_margin]
                for i, d in enumerate(self.diagnostics)]


def simulate_experiment(spec: ModelSpec, ledger: ConstantsLedger, cfg: SimulateConfig, seed: int) -> SimulateResult:
    """Trajectories from random states of the absorbing ball, checked against
    the energy identities and the decay estimate."""
    S = make_process(spec)
    rng = time_seed(seed, cfg.s)
    X0 = sample_ball(rng, cfg.n_traj, spec.dim, float(ledger.r0(cfg.s)))
    i0, i1 = S.index(cfg.s), S.index(cfg.s + cfg.horizon)
    cps = list(range(i0, i1 + 1))
    traj = S.evolve(np.full(cfg.n_traj, i0), X0, cps)
    times = (np.asarray(cps) - i0) * S.dt
    diags, nn, sw = [], np.inf, np.inf
    eps = ledger.eps1
    for k in range(cfg.n_traj):
        states = traj[:, k]
        diags.append(check_decay_inequality(spec, ledger, cfg.s, times, states, eps))
        nn = min(nn, float(np.min(nonnegative_part(spec, ledger, cfg.s, times, states))))
        lo, hi = sandwich_margins(spec, ledger, cfg.s, times, states, eps)
        sw = min(sw, float(min(lo.min(), hi.min())))
    return SimulateResult(diags, nn, sw, traj)


# ---------------------------------------------------------------------------
# absorb
# ---------------------------------------------------------------------------

@dataclass
class AbsorbResult:
    rows: list[list]            # s, tau, max |V|^2, Gamma bound, r0^2(s), inside ball
    violations: int
    tau_hat_empirical: float | None
    tau_hat_analytic: float
    tau_step: float

    @property
    def consistent(self) -> bool:
        """Every image obeys the pointwise bound and sampled absorption is no
        later than the analytic threshold (within one grid step)."""
        if self.violations:
            return False
        if self.tau_hat_empirical is None:
            return math.isinf(self.tau_hat_analytic) or self.tau_hat_analytic > max(r[1] for r in self.rows)
        return self.tau_hat_empirical <= self.tau_hat_analytic + self.tau_step

    @property
    def in_ball_after_analytic(self) -> bool:
        return all(r[5] for r in self.rows if r[1] >= self.tau_hat_analytic)


def absorb_experiment(spec: ModelSpec, ledger: ConstantsLedger, cfg: AbsorbConfig, seed: int,
                      images: Images | None = None) -> AbsorbResult:
    if images is None:
        images = family_images(spec, cfg.family_bound, cfg.probes, cfg.taus, cfg.n_samples, seed)
    r = DecayFunction.parse(cfg.family_bound)
    gam = gamma_function(ledger, r)
    rate = ledger.decay_rate
    B = absorbing_family(spec, ledger)
    rows, viol = [], 0
    for s in cfg.probes:
        r0s = float(ledger.r0_sq(s))
        for tau in cfg.taus:
            nsq = float(np.max(images[(float(s), float(tau))].norms() ** 2))
            bound = float(gam(s - tau)) * math.exp(-rate * tau) + r0s
            viol += nsq > bound
            rows.append([float(s), float(tau), nsq, bound, r0s, int(nsq <= r0s)])
    sub = {k: v for k, v in images.items() if k[0] in [float(p) for p in cfg.probes]}
    emp = absorption_from_images(sub, B).tau_hat
    ana = analytic_absorbing_time(ledger, r, cfg.probes, step=cfg.tau_step)
    return AbsorbResult(rows, int(viol), emp, ana, cfg.tau_step)


# ---------------------------------------------------------------------------
# absorbed family, attractor, attraction rate
# ---------------------------------------------------------------------------

def absorbed_family_sampler(spec: ModelSpec, ledger: ConstantsLedger, cfg: AbsorbedFamilyConfig, seed: int):
    """Return (sampler s -> cloud of the positively invariant family, tau1)."""
    S = make_process(spec)
    B = absorbing_family(spec, ledger)

    def sampler(s: float, tau1: float) -> PointCloud:
        return build_absorbed_family(S, B, tau1, s, cfg.taus, cfg.n_samples, seed)
    return sampler


def absorbing_time_of_ball(spec: ModelSpec, ledger: ConstantsLedger, cfg: AbsorbedFamilyConfig,
                           s: float, seed: int) -> float | None:
    """Sampled time after which images of B stay in B, probed at s."""
    from .process_core import estimate_absorbing_time
    S = make_process(spec)
    B = absorbing_family(spec, ledger)
    taus = grid(0.0, cfg.tau1_grid_stop, cfg.tau1_grid_step)
    return estimate_absorbing_time(S, B, B, s, [s], taus, cfg.tau1_samples, seed).tau_hat


@dataclass
class AttractResult:
    table: list[tuple[float, float]]       # tau, d_H(image, M_hat)
    fit: RateFit
    tau1: float | None
    m_hat_size: int
    m_hat_diameter: float

    @property
    def passed(self) -> bool:
        return self.fit.omega_hat > 0 and self.fit.residual < 0.5


def attract_experiment(spec: ModelSpec, ledger: ConstantsLedger, cfg: AttractConfig, seed: int,
                       images: Images | None = None) -> AttractResult:
    from .set_geometry import diameter
    S = make_process(spec)
    T = ledger.T_grid
    base_time = cfg.t - cfg.n_steps * T
    tau1 = absorbing_time_of_ball(spec, ledger, cfg.chat, base_time, seed + 1)
    if tau1 is None or min(cfg.chat.taus) < tau1:
        raise ValueError(f"absorbed-family taus {cfg.chat.taus} start before the absorbing time {tau1}")
    sampler = absorbed_family_sampler(spec, ledger, cfg.chat, seed + 2)
    M_hat = approximate_attractor(S, lambda s: sampler(s, tau1), cfg.t, cfg.n_steps, T)
    taus = [snap(tau, S.dt) for tau in cfg.taus]
    if images is None:
        images = family_images(spec, cfg.family_bound, [cfg.t], taus, cfg.n_samples, seed)
    table = [(tau, hausdorff_semidist(images[(float(cfg.t), tau)], M_hat)) for tau in taus]
    return AttractResult(table, fit_exponential_rate(table), tau1, len(M_hat), diameter(M_hat))


@dataclass
class KappaResult:
    table: list[tuple[float, float]]
    fit: RateFit
    omega_theory: float

    @property
    def passed(self) -> bool:
        return self.fit.omega_hat >= 0.5 * self.omega_theory


def kappa_experiment(spec: ModelSpec, ledger: ConstantsLedger, cfg: KappaConfig, seed: int,
                     images: Images | None = None) -> KappaResult:
    sigmas = sorted(set(cfg.taus) | {float(cfg.sigma_cap)})
    if images is None:
        images = family_images(spec, cfg.family_bound, [cfg.t], sigmas, cfg.n_samples, seed)
    by_sigma = {s: images[(float(cfg.t), float(s))] for s in sigmas}
    table = kappa_profile(by_sigma, cfg.taus, cfg.sigma_cap, cfg.max_centers)
    return KappaResult(table, fit_exponential_rate(table), ledger.omega_theory)


# ---------------------------------------------------------------------------
# contraction and Lipschitz dependence
# ---------------------------------------------------------------------------

@dataclass
class ContractResult:
    rows: list[list]                    # n, pair, lhs, mu_term, g_term, psi_term, rho1, rho2
    violations: int
    psi_sequence: list[float]
    rho2_sequence: list[float]
    lipschitz_violations: int
    lipschitz_c: float

    @property
    def psi_vanishes(self) -> bool:
        psi = self.psi_sequence
        mono = all(b < a for a, b in zip(psi, psi[1:]))
        return mono and psi[-1] < 0.1 * psi[0]

    @property
    def passed(self) -> bool:
        return self.violations == 0 and self.psi_vanishes and self.lipschitz_violations == 0


def contract_experiment(spec: ModelSpec, ledger: ConstantsLedger, cfg: ContractConfig, seed: int) -> ContractResult:
    T = ledger.T_grid
    rng = np.random.default_rng(seed)
    sampler = absorbed_family_sampler(spec, ledger, cfg.chat, seed + 2)
    rows, viol = [], 0
    first_pair = None
    for n in cfg.n_values:
        s = cfg.t - n * T
        tau1 = absorbing_time_of_ball(spec, ledger, cfg.chat, s, seed + 1)
        if tau1 is None or min(cfg.chat.taus) < tau1:
            raise ValueError(f"absorbed-family taus {cfg.chat.taus} start before the absorbing time {tau1}")
        C = sampler(s, tau1).points
        idx = np.array([rng.choice(len(C), 2, replace=False) for _ in range(cfg.n_pairs)])
        recs = contraction_batch(spec, ledger, cfg.t, n, C[idx[:, 0]], C[idx[:, 1]])
        for k, rec in enumerate(recs):
            ok = rec.holds(cfg.tol_ctr)
            viol += not ok
            rows.append([n, k, rec.lhs, rec.mu_term, rec.g_term, rec.psi_term, rec.rho1, rec.rho2])
        if first_pair is None:
            first_pair = (n, C[idx[0, 0]], C[idx[0, 1]])
    # pairs drawn closer and closer along a segment: rho2 -> 0 and psi must follow
    n, x, y = first_pair
    ys = np.array([x + 0.5 ** j * (y - x) for j in range(cfg.sequence_length)])
    xs = np.repeat(x[None, :], cfg.sequence_length, axis=0)
    seq = contraction_batch(spec, ledger, cfg.t, n, xs, ys)
    # Lipschitz dependence on the absorbing ball at time t
    lrng = time_seed(seed + 3, cfg.t)
    r0 = float(ledger.r0(cfg.t))
    P = sample_ball(lrng, 2 * cfg.lipschitz_pairs, spec.dim, r0)
    pairs = [(P[2 * i], P[2 * i + 1]) for i in range(cfg.lipschitz_pairs)]
    c = lipschitz_constant(ledger, cfg.t, cfg.lipschitz_gamma)
    lip = lipschitz_check(spec, cfg.t, cfg.lipschitz_gamma, pairs, c=c, tol_L=cfg.tol_L, bound=r0)
    return ContractResult(rows, viol, [r.psi_term for r in seq], [r.rho2 for r in seq],
                          len(lip.violations), c)


# ---------------------------------------------------------------------------
# class membership
# ---------------------------------------------------------------------------

def cstar_experiment(cfg: CstarConfig, function: DecayFunction | None = None) -> MembershipVerdict:
    r = function if function is not None else DecayFunction.parse(cfg.function)
    return membership_check(r, cfg.alphas, cfg.anchors, cfg.tau_max, cfg.s_grid_density, cfg.tol)


def config_dict(cfg) -> dict:
    return asdict(cfg)
