import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from oracles import linear_spec, smooth_state
from pullback_lab.decay_class import DecayFunction
from pullback_lab.energy_diagnostics import (LedgerError, analytic_absorbing_time, check_decay_inequality,
                                             compute_constants, contraction_batch, energy, gamma_function,
                                             lipschitz_constant, lyapunov, nonnegative_part, sandwich_margins)
from pullback_lab.wave_model import benchmark_spec, make_process

# raw benchmark data
LAM1, MU0, K0, KD0, KD1, C0CONST = 1.0, 0.5, 0.5, 1.5, 2.5, 3.25
H0 = math.sqrt(math.pi / 2)


def threshold_oracle(mu0=MU0, step=1e-4):
    """Largest |v| where inf_t f'(t, v) or inf_t f(t, v)/v reaches -mu0, on a fine mesh."""
    t = np.linspace(0, 2 * math.pi, 721)[:, None]
    v = np.arange(step, 5.0, step)[None, :]
    e = np.exp(-v * v)
    f = v ** 3 + np.sin(t) * (1 - 2 * v ** 2) * e
    df = 3 * v ** 2 + np.sin(t) * (4 * v ** 3 - 6 * v) * e
    bad = (df.min(0) <= -mu0) | ((f / v).min(0) <= -mu0)
    return float(v[0, bad].max())


def test_threshold_matches_fine_mesh(ledger):
    # the ledger scans with mesh 0.005
    assert abs(ledger.M - threshold_oracle()) <= 0.006


def test_scalar_constants(ledger):
    theta = 1 - MU0 / LAM1
    assert ledger.beta == pytest.approx(0.8 * theta, rel=1e-14)
    assert ledger.K_star == pytest.approx(3 * KD1 / (LAM1 - MU0), rel=1e-14)
    coef = (ledger.K_star * KD1 / KD0 + 1 / KD0 + 3 * K0 ** 2 / ((LAM1 - MU0) * KD0)
            + (LAM1 - MU0) / (2 * KD0 * LAM1))
    assert ledger.eps_eq9 == pytest.approx((1 - K0 / KD0) / coef, rel=1e-14)
    assert ledger.eps1 * coef <= 1 - K0 / KD0 + 1e-15
    assert ledger.eps_small == pytest.approx(math.sqrt(0.5 * 3.5 / 32), rel=1e-14)
    assert ledger.eps1 == pytest.approx(0.024845, abs=1e-6)
    assert ledger.h0 == pytest.approx(H0, rel=1e-14)


def test_contraction_constants(ledger):
    assert ledger.eps_ctr == 1.0
    assert ledger.T_ctr == pytest.approx(1 + math.log(3), rel=1e-14)
    assert ledger.mu_ctr == pytest.approx(math.exp(-1), rel=1e-14)
    assert ledger.mu_ctr == pytest.approx(3 * math.exp(-ledger.eps_ctr * ledger.T_ctr), abs=1e-12)
    assert ledger.T_grid >= ledger.T_ctr and ledger.T_grid - ledger.T_ctr < 1e-3
    assert ledger.omega_theory == pytest.approx(1 / (4 * ledger.T_ctr), rel=1e-14)


def test_absorbing_radius_constant_forcing(ledger):
    # c0 is constant, so every derived function of time is constant and
    # the exponential integral collapses to delta1 / (beta eps1)
    M = ledger.M
    C0 = 8 * (1 + M ** 4) * math.pi * C0CONST
    d0 = C0 + 4 * H0 ** 2 / (LAM1 - MU0)
    assert ledger.C0(3.0) == pytest.approx(C0, rel=1e-12)
    assert ledger.d0(-7.0) == pytest.approx(d0, rel=1e-12)
    r0_sq = 8 * LAM1 / (LAM1 - MU0) * (ledger.delta1(0.0) / ledger.decay_rate + d0) + 1
    for xi in (-50.0, 0.0, 20.0):
        assert ledger.r0_sq(xi) == pytest.approx(r0_sq, rel=1e-6)
    assert ledger.r0(0.0) ** 2 == pytest.approx(ledger.r0_sq(0.0), rel=1e-12)


def test_radius_grows_with_forcing():
    radii = []
    for h in (0.5, 1.0, 2.0):
        spec = benchmark_spec(n_modes=4, h=[h], h0=h)
        radii.append(float(compute_constants(spec).r0_sq(0.0)))
    assert radii[0] < radii[1] < radii[2]


def test_zero_state_energy(bench, ledger):
    assert energy(bench, ledger, 0.0, 1.0, np.zeros(bench.dim)) == pytest.approx(ledger.C0(1.0), rel=1e-14)
    assert lyapunov(bench, ledger, 0.0, 1.0, np.zeros(bench.dim), ledger.eps1) == 0.0


@given(seed=st.integers(0, 2 ** 16), scale=st.floats(0.0, 30.0), t=st.floats(-20, 20))
@settings(max_examples=30)
def test_energy_nonnegative_and_sandwiched(small_spec, small_ledger, seed, scale, t):
    x = scale * smooth_state(small_spec.n_modes, seed=seed, decay=1.0)
    assert nonnegative_part(small_spec, small_ledger, 0.0, t, x[None, :])[0] >= 0
    assert energy(small_spec, small_ledger, 0.0, t, x) >= 0.5 * float(x @ x) - 1e-9
    lo, hi = sandwich_margins(small_spec, small_ledger, 0.0, t, x, small_ledger.eps1)
    assert lo[0] >= 0 and hi[0] >= 0


def test_lyapunov_eps_range(bench, ledger):
    x = np.zeros(bench.dim)
    with pytest.raises(LedgerError):
        lyapunov(bench, ledger, 0.0, 0.0, x, 2 * ledger.eps1)
    with pytest.raises(LedgerError):
        lyapunov(bench, ledger, 0.0, 0.0, x, -0.1)


def test_constants_refuse_bad_inputs(bench):
    with pytest.raises(LedgerError):
        compute_constants(bench, mu0=1.0)
    with pytest.raises(LedgerError):
        compute_constants(benchmark_spec(n_modes=4, h0=1.0))


def test_decay_inequality_along_trajectory(small_spec, small_ledger):
    proc = make_process(small_spec)
    x0 = 20 * smooth_state(small_spec.n_modes, seed=9, decay=1.0)
    cps = list(range(0, 3001, 10))
    states = proc.evolve(np.array([0]), x0[None, :], cps)[:, 0]
    times = np.asarray(cps) * proc.dt
    diag = check_decay_inequality(small_spec, small_ledger, 0.0, times, states)
    assert diag.violation_margin <= 1e-3
    assert diag.gronwall_margin <= 1e-3
    assert diag.energy_margin >= 0
    assert diag.remark_margin <= 0


def test_decay_inequality_needs_uniform_grid(small_spec, small_ledger):
    states = np.zeros((3, small_spec.dim))
    with pytest.raises(LedgerError):
        check_decay_inequality(small_spec, small_ledger, 0.0, np.array([0.0, 0.1, 0.3]), states)


def test_analytic_absorbing_time_is_first_crossing(ledger):
    r = DecayFunction.parse("const(1) + abs")
    probes = [-5.0, 0.0, 5.0]
    tau = analytic_absorbing_time(ledger, r, probes)
    gam = gamma_function(ledger, r)

    def worst(x):
        return max(math.log(gam(s - x)) for s in probes) - ledger.decay_rate * x
    assert worst(tau) <= 0 < worst(tau - 1.0)


def test_lipschitz_constant_shape(ledger):
    c1 = lipschitz_constant(ledger, 0.0, 0.5)
    c2 = lipschitz_constant(ledger, 0.0, 2.0)
    assert 2 * ledger.K0 < c1 <= c2


def test_contraction_identical_pairs(small_spec, small_ledger):
    x = smooth_state(small_spec.n_modes, seed=12)[None, :]
    rec = contraction_batch(small_spec, small_ledger, 0.0, 1, x, x.copy())[0]
    assert rec.lhs == rec.psi_term == rec.rho1 == rec.rho2 == 0.0
    assert rec.holds()


def test_contraction_linear_has_no_nonlinear_term():
    spec = linear_spec(n_modes=4, damping=1.0, c0="const(1)")
    led = compute_constants(spec)
    A = np.stack([smooth_state(4, seed=k) for k in range(3)])
    B = np.stack([smooth_state(4, seed=k + 5) for k in range(3)])
    for rec in contraction_batch(spec, led, 0.0, 1, A, B):
        assert rec.psi_term == 0.0 and rec.rho1 == 0.0
        assert rec.holds(tol=0.0)


def test_contraction_enforces_bound(small_spec, small_ledger):
    big = np.full((1, small_spec.dim), 1e3)
    with pytest.raises(LedgerError):
        contraction_batch(small_spec, small_ledger, 0.0, 1, big, big)


def test_dump_lists_formulas(ledger):
    text = ledger.dump([0.0, -10.0])
    for name in ("eps1", "r0_sq", "mu_ctr", "phi_T"):
        line = next(ln for ln in text.splitlines() if ln.startswith(name + " "))
        assert "#" in line and line.split("#", 1)[1].strip()
