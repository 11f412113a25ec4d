"""Energy functionals, derived constants and trajectory-level checks for the
wave model.

Notation used below, with theta = 1 - mu0 / lam1:

    E(t)  = 1/2 |V|^2 + int F + (lam1 + mu0)/4 |v|_{L2}^2 + C0(t + s)
    V_eps = 1/2 |V|^2 + int F - int h v + eps int v_t v

and the decay estimate dV_eps/dt <= -beta eps V_eps + delta1(t + s) with
beta = (4/5) theta. All functions of time are DecayFunction instances.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field, fields
from typing import Sequence

import numpy as np

from .decay_class import (DecayFunction, add_constant, combine, exp_integral_transform,
                          scale_sqrt, window_sup_transform)
from .wave_model import (HypothesisReport, ModelSpec, l0_scale, l4_embedding_fourth, lambda1,
                         make_process, validate_hypotheses)

DEFAULT_XI_GRID = (-200.0, 100.0, 0.5)


class LedgerError(ValueError):
    """Constants cannot be formed (bad mu0, failed hypotheses, bad eps)."""


@dataclass(frozen=True)
class ConstantsLedger:
    """Every derived constant, with a formula tag per entry in ``formulas``."""

    lambda1: float
    mu0: float
    M: float
    omega_len: float
    K0: float
    k0: float
    k1: float
    h0: float
    c0: DecayFunction
    C0: DecayFunction
    e0: float
    g0: DecayFunction
    d0: DecayFunction
    K_star: float
    eps_small: float
    eps_eq9: float
    eps1: float
    beta: float
    delta1: DecayFunction
    alpha0: DecayFunction
    L0: DecayFunction
    r0_sq: DecayFunction
    r0: DecayFunction
    gamma_ball: DecayFunction
    xi_T: DecayFunction
    phi_T: DecayFunction
    eps_ctr: float
    T_ctr: float
    T_grid: float
    mu_ctr: float
    r_exp: int
    omega_theory: float
    xi_grid: np.ndarray = field(repr=False)
    formulas: dict = field(default_factory=dict, repr=False)

    @property
    def theta(self) -> float:
        return 1.0 - self.mu0 / self.lambda1

    @property
    def decay_rate(self) -> float:
        """beta * eps1, the certified decay rate of the Lyapunov functional."""
        return self.beta * self.eps1

    @property
    def norm_factor(self) -> float:
        """8 lam1 / (lam1 - mu0), converting the Lyapunov bound to |V|^2."""
        return 8.0 * self.lambda1 / (self.lambda1 - self.mu0)

    def scalars(self) -> dict[str, float]:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if isinstance(getattr(self, f.name), (int, float))}

    def dump(self, probe_times: Sequence[float] = (0.0,)) -> str:
        """Plain-text listing of every constant and its formula."""
        lines = []
        for f in fields(self):
            if f.name in ("xi_grid", "formulas"):
                continue
            val = getattr(self, f.name)
            if isinstance(val, DecayFunction):
                shown = ", ".join(f"{val(t):.6g}@t={t:g}" for t in probe_times)
            else:
                shown = f"{val:.12g}"
            lines.append(f"{f.name:14s} = {shown:40s} # {self.formulas.get(f.name, '')}")
        return "\n".join(lines) + "\n"


def _plus(r: DecayFunction, c: float) -> DecayFunction:
    return r if c == 0 else add_constant(r, c)


def _eq9_eps(lam1, mu0, k0, k1, K0, K_star) -> float:
    coef = K_star * k1 / k0 + 1 / k0 + 3 * K0 ** 2 / ((lam1 - mu0) * k0) + (lam1 - mu0) / (2 * k0 * lam1)
    rhs = 1 - K0 / k0
    if rhs <= 0:
        raise LedgerError("the damping condition K0 < k0 fails, no admissible eps")
    return rhs / coef


def sandwich_eps(lam1: float, mu0: float) -> float:
    """Largest eps for which the two-sided bound between V_eps and E holds.

    The upper side needs eps^2 <= 5 lam1 (1 + m) / 32 and the lower side
    eps^2 <= lam1 theta (3 + m) / 32, with m = mu0 / lam1.
    """
    m = mu0 / lam1
    return math.sqrt(min(5 * lam1 * (1 + m) / 32, lam1 * (1 - m) * (3 + m) / 32))


def compute_constants(spec: ModelSpec, mu0: float = 0.5, e0_scan_box: float = 50.0,
                      report: HypothesisReport | None = None,
                      xi_grid: tuple[float, float, float] = DEFAULT_XI_GRID,
                      quadrature_step: float = 0.05, tail_tol: float = 1e-10,
                      t_probes: Sequence[float] | None = None) -> ConstantsLedger:
    """Build the full constants ledger for a validated spec."""
    lam1 = lambda1(spec)
    if not 0 < mu0 < lam1:
        raise LedgerError(f"mu0 must lie in (0, {lam1})")
    if report is None:
        report = validate_hypotheses(spec, mu0)
    if not report.passed:
        raise LedgerError(f"hypotheses failed: {report.failed}")
    ell = spec.domain_length
    M = report.M_mu0
    K0, k0, k1, h0 = spec.kernel_norm, spec.k0, spec.k1, spec.forcing_norm
    c0 = spec.c0_function
    theta = 1 - mu0 / lam1
    forms: dict[str, str] = {}

    # scan F - v f - mu0 v^2 / 2 beyond M
    sys_ = spec.system
    t = np.linspace(0, 2 * np.pi, 64, endpoint=False) if t_probes is None else np.asarray(t_probes, float)
    v = np.linspace(-e0_scan_box, e0_scan_box, 20001)
    v = v[np.abs(v) > M]
    T, V = np.meshgrid(t, v, indexing="ij")
    e0 = max(0.0, float(np.max(sys_.F(T, V) - V * sys_.f(T, V) - 0.5 * mu0 * V * V)))
    forms["e0"] = "max over M<|v|<=box of F - v f - mu0 v^2/2, clamped at 0"

    C0 = scale_sqrt(c0, 8 * (1 + M ** 4) * ell)
    forms["C0"] = "8 (1 + M^4) |Omega| c0"
    # int over {|v|<=M} of |v f| is at most 2 M c0 (1 + M^3) |Omega|; the 8 M (1 + M^4) c0
    # term dominates that unless the domain is long, in which case it is enlarged
    small_v = max(8 * M * (1 + M ** 4), 2 * M * ell * (1 + M ** 3))
    g0 = _plus(scale_sqrt(c0, 16 * (1 + M ** 4) * ell + small_v), e0 * ell)
    forms["g0"] = "e0 |Omega| + 8 c0 (1+M^4) |Omega| + 8 M c0 (1+M^4) + C0"
    d0 = _plus(C0, 4 * h0 ** 2 / (lam1 - mu0))
    forms["d0"] = "C0 + 4 h0^2 / (lam1 - mu0)"

    K_star = 3 * k1 / (lam1 - mu0)
    forms["K_star"] = "3 k1 / (lam1 - mu0), Young split of eps k |int v_t v|"
    eps_small = sandwich_eps(lam1, mu0)
    forms["eps_small"] = "largest eps keeping the V/E two-sided bound"
    eps9 = _eq9_eps(lam1, mu0, k0, k1, K0, K_star)
    forms["eps_eq9"] = "largest eps with eps(K* k1/k0 + 1/k0 + 3K0^2/((lam1-mu0)k0) + (lam1-mu0)/(2 k0 lam1)) <= 1 - K0/k0"
    eps1 = min(eps9, eps_small)
    forms["eps1"] = "min(eps_eq9, eps_small); the eps used everywhere"
    beta = 0.8 * theta
    forms["beta"] = "(4/5)(1 - mu0/lam1)"

    delta1 = combine(
        combine(scale_sqrt(d0, 0.8 * eps1 * theta), c0, "sum"),
        _plus(scale_sqrt(g0, eps1), 4 * eps1 * h0 ** 2 / (lam1 - mu0)), "sum")
    forms["delta1"] = "(4/5) eps theta d0 + c0 + eps g0 + 4 eps h0^2/(lam1 - mu0)"

    c4 = l4_embedding_fourth(spec)
    alpha0 = scale_sqrt(c0, 4 * max(ell, c4))
    forms["alpha0"] = "4 max(|Omega|, c^4) c0, c the H1_0 -> L4 constant"
    L0 = scale_sqrt(c0, l0_scale(spec))
    forms["L0"] = "2 lam1^{-1/2} max(1, l/4) c0"

    lo, hi, h = xi_grid
    grid = np.arange(lo, hi + 0.5 * h, h)
    eta = beta * eps1
    mu = exp_integral_transform(delta1, eta, quadrature_step=quadrature_step, grid=grid, tail_tol=tail_tol)
    nf = 8 * lam1 / (lam1 - mu0)
    r0_sq = add_constant(scale_sqrt(combine(mu, d0, "sum"), nf), 1.0)
    r0 = scale_sqrt(r0_sq, 1.0, take_sqrt=True)
    r0 = DecayFunction.tabulated(r0.grid, r0.values, "r0", meta=mu.meta)
    forms["r0_sq"] = "8 lam1/(lam1-mu0) (int_0^inf delta1(xi-u) e^{-beta eps u} du + d0(xi)) + 1"

    eps_ctr = min(math.sqrt(lam1), k0)
    T_ctr = 1 + math.log(3) / eps_ctr
    T_grid = math.ceil(T_ctr / spec.dt - 1e-9) * spec.dt
    mu_ctr = math.exp(-eps_ctr)
    forms["eps_ctr"] = "min(sqrt(lam1), k0)"
    forms["T_ctr"] = "1 + ln 3 / eps_ctr"
    forms["T_grid"] = "T_ctr rounded up to the time grid"
    forms["mu_ctr"] = "exp(-eps_ctr) = 3 exp(-eps_ctr T_ctr)"
    r_exp = 2
    omega = 1 / (2 * r_exp * T_ctr)
    forms["omega_theory"] = "1 / (2 r T_ctr) with r = 2"

    partial = _Partial(lam1, mu0, C0, d0, alpha0)
    gamma_ball = gamma_function(partial, r0)
    forms["gamma_ball"] = "Gamma with the family bound r = r0"
    sup_r0_sq = window_sup_transform(r0_sq, T_grid, ell_grid_density=max(20.0, 1 / spec.dt),
                                     grid=grid[grid <= hi - T_grid])
    g_on = DecayFunction.tabulated(sup_r0_sq.grid, gamma_ball(sup_r0_sq.grid), "Gamma_B")
    xi_T = scale_sqrt(combine(g_on, sup_r0_sq, "sum"), 1.0, take_sqrt=True)
    forms["xi_T"] = "sqrt(Gamma_B(s) + sup_{[0,T]} r0^2(. + s))"
    sup_L0 = window_sup_transform(L0, T_grid, ell_grid_density=max(20.0, 1 / spec.dt), grid=xi_T.grid)
    xv = xi_T.values
    phi_vals = xv * (2 + K0 * eps_ctr + eps_ctr ** 2 + k1 * eps_ctr
                     + eps_ctr * sup_L0.values * (1 + 2 * xv ** 2))
    phi_T = DecayFunction.tabulated(xi_T.grid, phi_vals, "phi_T")
    forms["phi_T"] = "Xi_T [2 + K0 e + e^2 + k1 e + e sup L0 (1 + 2 Xi_T^2)], e = eps_ctr"

    return ConstantsLedger(
        lambda1=lam1, mu0=mu0, M=M, omega_len=ell, K0=K0, k0=k0, k1=k1, h0=h0, c0=c0, C0=C0,
        e0=e0, g0=g0, d0=d0, K_star=K_star, eps_small=eps_small, eps_eq9=eps9, eps1=eps1,
        beta=beta, delta1=delta1, alpha0=alpha0, L0=L0, r0_sq=r0_sq, r0=r0, gamma_ball=gamma_ball,
        xi_T=xi_T, phi_T=phi_T, eps_ctr=eps_ctr, T_ctr=T_ctr, T_grid=T_grid, mu_ctr=mu_ctr,
        r_exp=r_exp, omega_theory=omega, xi_grid=grid, formulas=forms)


@dataclass(frozen=True)
class _Partial:
    lambda1: float
    mu0: float
    C0: DecayFunction
    d0: DecayFunction
    alpha0: DecayFunction


def gamma_function(ledger: "ConstantsLedger | _Partial", r: DecayFunction) -> DecayFunction:
    """Gamma(xi) = 8 lam1/(lam1-mu0) [5/4 (1/2 + (lam1+mu0)/(2 lam1)) r^2
    + 5/4 alpha0 (1 + r^4) + 5/4 C0 + d0], for a family bound r."""
    lam1, mu0 = ledger.lambda1, ledger.mu0
    nf = 8 * lam1 / (lam1 - mu0)
    a = 1.25 * (0.5 + (lam1 + mu0) / (2 * lam1))
    C0, d0, alpha0 = ledger.C0, ledger.d0, ledger.alpha0

    def fn(xi):
        rr = r(xi)
        r2 = rr * rr
        return nf * (a * r2 + 1.25 * alpha0(xi) * (1 + r2 * r2) + 1.25 * C0(xi) + d0(xi))
    desc = f"Gamma[{r.description}]"
    if r.is_tabulated:
        return DecayFunction.tabulated(r.grid, fn(r.grid), desc)
    return DecayFunction(fn, desc)


def absorbing_radius(ledger: ConstantsLedger, spec: ModelSpec, xi: float) -> float:
    """r0(xi), from the tabulated radius in the ledger."""
    return float(ledger.r0(xi))


def gamma_envelope(ledger: ConstantsLedger, spec: ModelSpec, r: DecayFunction, xi: float) -> float:
    return float(gamma_function(ledger, r)(xi))


def analytic_absorbing_time(ledger: ConstantsLedger, r: DecayFunction, probes: Sequence[float],
                            tau_max: float = 1e5, step: float = 1.0) -> float:
    """Smallest grid tau with max_s Gamma(s - tau) exp(-beta eps tau) <= 1 over the probes."""
    gam = gamma_function(ledger, r)
    rate = ledger.decay_rate
    taus = np.arange(0.0, tau_max + step, step)
    worst = np.max([np.log(gam(s - taus)) for s in probes], axis=0) - rate * taus
    hit = np.flatnonzero(worst <= 0)
    if hit.size == 0:
        return math.inf
    return float(taus[hit[0]])


def lipschitz_constant(ledger: ConstantsLedger, s: float, gamma: float, n: int = 201) -> float:
    """c = sup_{tau in [0, gamma]} (2 K0 + L0(tau+s)(1 + 2 Gamma_B(s) e^{-beta eps tau} + 2 r0^2(s+tau)))."""
    taus = np.linspace(0.0, gamma, n)
    val = 2 * ledger.K0 + ledger.L0(s + taus) * (
        1 + 2 * ledger.gamma_ball(s) * np.exp(-ledger.decay_rate * taus) + 2 * ledger.r0_sq(s + taus))
    return float(np.max(val))


# ---------------------------------------------------------------------------
# functionals
# ---------------------------------------------------------------------------

def _parts(spec: ModelSpec, t_abs: np.ndarray, X: np.ndarray):
    sys_ = spec.system
    X = np.atleast_2d(X)
    a, b = sys_.split(X)
    c = a / sys_.sqrt_lam
    t_abs = np.broadcast_to(np.asarray(t_abs, dtype=float).reshape(-1), (X.shape[0],))
    Fint = sys_.F(t_abs[:, None], a @ sys_.a_to_v) @ sys_.w
    return a, b, c, Fint, t_abs


def energy(spec: ModelSpec, ledger: ConstantsLedger, s: float, t, state) -> np.ndarray | float:
    """E_s(t, V) for one state or a stack of states."""
    a, b, c, Fint, t_abs = _parts(spec, np.asarray(t, float) + s, state)
    out = 0.5 * (np.sum(a * a, 1) + np.sum(b * b, 1)) + Fint \
        + 0.25 * (ledger.lambda1 + ledger.mu0) * np.sum(c * c, 1) + ledger.C0(t_abs)
    return out if np.ndim(state) == 2 else float(out[0])


def lyapunov(spec: ModelSpec, ledger: ConstantsLedger, s: float, t, state, eps: float) -> np.ndarray | float:
    """V_eps^s(t, V); eps must lie in [0, eps1]."""
    if not 0 <= eps <= ledger.eps1 * (1 + 1e-12):
        raise LedgerError(f"eps={eps} outside [0, eps1={ledger.eps1}]")
    a, b, c, Fint, _ = _parts(spec, np.asarray(t, float) + s, state)
    h = spec.system.h
    out = 0.5 * (np.sum(a * a, 1) + np.sum(b * b, 1)) + Fint - c @ h + eps * np.sum(b * c, 1)
    return out if np.ndim(state) == 2 else float(out[0])


def nonnegative_part(spec: ModelSpec, ledger: ConstantsLedger, s: float, t, state) -> np.ndarray:
    """int F + (lam1 + mu0)/4 |v|^2 + C0, which must be nonnegative."""
    a, b, c, Fint, t_abs = _parts(spec, np.asarray(t, float) + s, state)
    return Fint + 0.25 * (ledger.lambda1 + ledger.mu0) * np.sum(c * c, 1) + ledger.C0(t_abs)


def sandwich_margins(spec: ModelSpec, ledger: ConstantsLedger, s: float, t, states, eps: float) -> tuple[np.ndarray, np.ndarray]:
    """(V - (theta/4 E - d0), (5/4 E + d0) - V); both must be nonnegative."""
    E = np.atleast_1d(energy(spec, ledger, s, t, np.atleast_2d(states)))
    V = np.atleast_1d(lyapunov(spec, ledger, s, t, np.atleast_2d(states), eps))
    d0 = ledger.d0(np.asarray(t, float) + s)
    return V - (0.25 * ledger.theta * E - d0), (1.25 * E + d0) - V


# ---------------------------------------------------------------------------
# trajectory checks
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class TrajectoryDiagnostics:
    """Decay-estimate check along one trajectory.

    ``violation_margin`` is max (dV/dt - bound) over interior points divided
    by max |V|; ``gronwall_margin`` does the same for the integrated form.
    """

    times: np.ndarray
    E_values: np.ndarray
    V_values: np.ndarray
    dVdt_estimates: np.ndarray
    bound_values: np.ndarray
    violation_margin: float
    gronwall_margin: float
    norm_sq: np.ndarray
    energy_margin: float      # min of 2E - |V|^2, relative
    remark_margin: float      # max of |V|^2 - global bound, relative


def _central_diff(y: np.ndarray, h: float) -> np.ndarray:
    """Fourth-order central differences on the interior; NaN at the two ends on each side."""
    d = np.full_like(y, np.nan)
    d[2:-2] = (y[:-4] - 8 * y[1:-3] + 8 * y[3:-1] - y[4:]) / (12 * h)
    return d


def _cum_trapz(y: np.ndarray, x: np.ndarray) -> np.ndarray:
    out = np.zeros_like(y)
    out[1:] = np.cumsum(0.5 * (y[1:] + y[:-1]) * np.diff(x))
    return out


def remark_bound(ledger: ConstantsLedger, s: float, times: np.ndarray, norm0_sq: float) -> np.ndarray:
    """Global bound on |V(t)|^2 from the initial norm and ledger constants."""
    lam1, mu0 = ledger.lambda1, ledger.mu0
    nf, rate = ledger.norm_factor, ledger.decay_rate
    a = 1.25 * (0.5 + (lam1 + mu0) / (2 * lam1))
    init = a * norm0_sq + 1.25 * ledger.alpha0(s) * (1 + norm0_sq ** 2) + 1.25 * ledger.C0(s) + ledger.d0(s)
    t = np.asarray(times, float)
    forcing = np.exp(-rate * t) * _cum_trapz(ledger.delta1(t + s) * np.exp(rate * t), t)
    return nf * init * np.exp(-rate * t) + nf * forcing + nf * ledger.d0(t + s)


def check_decay_inequality(spec: ModelSpec, ledger: ConstantsLedger, s: float,
                           times: np.ndarray, states: np.ndarray, eps: float | None = None) -> TrajectoryDiagnostics:
    """Compare a sampled trajectory of the translated problem against the decay
    estimate in differential and integrated form.

    ``times`` are local times starting at 0 with a uniform step.
    """
    eps = ledger.eps1 if eps is None else eps
    times = np.asarray(times, float)
    h = float(times[1] - times[0])
    if not np.allclose(np.diff(times), h, rtol=1e-9, atol=1e-12):
        raise LedgerError("trajectory must be sampled on a uniform grid")
    V = lyapunov(spec, ledger, s, times, states, eps)
    E = energy(spec, ledger, s, times, states)
    rate = ledger.beta * eps
    delta = ledger.delta1(times + s)
    bound = -rate * V + delta
    dV = _central_diff(V, h)
    scale = float(np.max(np.abs(V)))
    viol = float(np.nanmax(dV - bound)) / scale
    gron = V[0] * np.exp(-rate * times) + np.exp(-rate * times) * _cum_trapz(delta * np.exp(rate * times), times)
    gron_margin = float(np.max(V - gron)) / scale
    nsq = np.sum(np.asarray(states) ** 2, axis=1)
    en_margin = float(np.min(2 * E - nsq)) / float(np.max(2 * E))
    rb = remark_bound(ledger, s, times, float(nsq[0]))
    rem_margin = float(np.max(nsq - rb)) / float(np.max(rb))
    return TrajectoryDiagnostics(times, E, V, dV, bound, viol, gron_margin, nsq, en_margin, rem_margin)


# ---------------------------------------------------------------------------
# contraction data
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ContractionRecord:
    lhs: float
    mu_term: float
    g_term: float
    psi_term: float
    rho1: float
    rho2: float
    d0_sq: float

    @property
    def rhs(self) -> float:
        return self.mu_term + self.g_term + self.psi_term

    def holds(self, tol: float = 0.05) -> bool:
        return self.lhs <= (1 + tol) * self.rhs + 1e-300


def contraction_batch(spec: ModelSpec, ledger: ConstantsLedger, t: float, n: int,
                      V1: np.ndarray, V2: np.ndarray, dt: float | None = None,
                      bound: float | None = None) -> list[ContractionRecord]:
    """Contraction data for many pairs at once.

    Each pair starts at s = t - n T (T the grid-rounded contraction time) and
    is integrated over [0, T]. ``bound`` defaults to the absorbing radius at
    s and is enforced on every input state.
    """
    proc = make_process(spec, dt)
    T = ledger.T_grid
    nT = proc.index(T)
    s_idx = proc.index(t) - n * nT
    s = proc.time(s_idx)
    V1, V2 = np.atleast_2d(V1), np.atleast_2d(V2)
    if V1.shape != V2.shape:
        raise ValueError("pair arrays must have equal shapes")
    rad = float(ledger.r0(s)) if bound is None else bound
    norms = np.linalg.norm(np.vstack([V1, V2]), axis=1)
    if np.any(norms > rad * (1 + 1e-12)):
        raise LedgerError(f"pair state of norm {norms.max():.4g} outside the bound {rad:.4g} at s={s:g}")
    m = V1.shape[0]
    X = np.vstack([V1, V2])
    cps = list(range(s_idx, s_idx + nT + 1))
    traj = proc.evolve(np.full(2 * m, s_idx), X, cps)             # (steps, 2m, dim)
    taus = (np.asarray(cps) - s_idx) * proc.dt
    sys_ = spec.system
    N = sys_.N
    phi = float(ledger.phi_T(s))
    weight = np.exp(ledger.eps_ctr * (taus - T))
    out = []
    for k in range(m):
        A, B = traj[:, k], traj[:, m + k]
        Z = A - B
        za, zb = Z[:, :N], Z[:, N:]
        rho1 = float(np.trapezoid(np.linalg.norm(sys_.kernel_apply_l2(zb), axis=1), taus))
        rho2 = float(np.max(np.linalg.norm(za / sys_.sqrt_lam, axis=1)))
        df = sys_.f_projection(s + taus, A) - sys_.f_projection(s + taus, B)
        psi = 4 * abs(float(np.trapezoid(weight * np.sum(df * zb, axis=1), taus)))
        z0 = float(np.sum(Z[0] ** 2))
        out.append(ContractionRecord(float(np.sum(Z[-1] ** 2)), ledger.mu_ctr * z0,
                                     4 * phi * rho1 + 4 * T * phi * rho2, psi, rho1, rho2, z0))
    return out


def contraction_data(spec: ModelSpec, ledger: ConstantsLedger, t: float, n: int,
                     V1: np.ndarray, V2: np.ndarray, dt: float | None = None) -> ContractionRecord:
    return contraction_batch(spec, ledger, t, n, V1, V2, dt)[0]
