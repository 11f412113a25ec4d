"""Acceptance criteria on the default benchmark, one PASS/FAIL line each.

The heavy experiments share pullback images: the absorption grid at t = 0
also feeds the Kuratowski-measure profile.
"""
import math
import time
from pathlib import Path

import numpy as np
import pytest

from oracles import exact_linear, linear_spec, smooth_state
from pullback_lab.cli import load_config
from pullback_lab.decay_class import (DecayFunction, exp_integral_transform, membership_check,
                                      window_sup_transform)
from pullback_lab.experiments import (absorb_experiment, attract_experiment, contract_experiment,
                                      family_images, kappa_experiment, simulate_experiment, snap)
from pullback_lab.set_geometry import (PointCloud, ball_measure_exact, ball_measure_upper, kappa_bounds,
                                       kappa_exact)
from pullback_lab.wave_model import load_model, make_process, step, validate_hypotheses

CONFIGS = Path(__file__).resolve().parents[1] / "configs"
LINES = []


def verdict(label, ok, detail):
    line = f"criterion {label}: {'PASS' if ok else 'FAIL'}  {detail}"
    LINES.append(line)
    print(line)
    return ok


def settings_of(name):
    cfg = load_config(CONFIGS / f"{name}.yaml", name)
    return cfg.settings, cfg.seed


@pytest.fixture(scope="module")
def absorb_run(bench, ledger):
    cfg, seed = settings_of("absorb")
    start = time.perf_counter()
    images = family_images(bench, cfg.family_bound, cfg.probes, cfg.taus, cfg.n_samples, seed)
    res = absorb_experiment(bench, ledger, cfg, seed, images=images)
    return cfg, seed, images, res, time.perf_counter() - start


def test_criterion_1_hypothesis_gate(bench):
    start = time.perf_counter()
    ok_bench = validate_hypotheses(bench).passed
    witnesses = {}
    for name, key in (("h3_fail", "H3_damping"), ("h4_fail", "H4_slope"), ("h6_fail", "H6_c0_class")):
        rep = validate_hypotheses(load_model(CONFIGS / "models" / f"{name}.yaml"))
        st = rep.statuses[key]
        witnesses[name] = (not st.passed) and st.witness is not None
    elapsed = time.perf_counter() - start
    ok = ok_bench and all(witnesses.values()) and elapsed < 10
    assert verdict("1", ok, f"benchmark passes={ok_bench} designed failures={witnesses} runtime={elapsed:.1f}s")


def test_criterion_2_integrator_order():
    spec = linear_spec(n_modes=32, damping=1.0)
    x0 = smooth_state(32, seed=0, decay=3.0)
    exact = exact_linear(spec, x0, 1.0)
    errs = []
    for dt in (4e-3, 2e-3, 1e-3):
        X = x0[None, :]
        for i in range(int(round(1.0 / dt))):
            X = step(spec, 0.0, i * dt, dt, X)
        errs.append(float(np.abs(X[0] - exact).max()))
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    final = float(np.abs(make_process(spec).advance(1.0, 0.0, x0) - exact).max())
    ok = min(orders) >= 3.8 and final < 1e-8
    assert verdict("2", ok, f"orders={[round(o, 3) for o in orders]} error(dt=1e-3)={final:.2e}")


def test_criterion_3_energy_inequalities(bench, ledger):
    cfg, seed = settings_of("simulate")
    assert cfg.n_traj >= 5 and cfg.horizon >= 30
    start = time.perf_counter()
    res = simulate_experiment(bench, ledger, cfg, seed)
    elapsed = time.perf_counter() - start
    ok = (res.min_nonnegative >= 0 and res.min_sandwich >= 0 and res.max_violation <= 1e-3
          and res.max_gronwall <= 1e-3 and elapsed < 300)
    assert verdict("3", ok, f"min nonneg={res.min_nonnegative:.4g} min sandwich={res.min_sandwich:.4g} "
                            f"decay margin={res.max_violation:.3g} gronwall margin={res.max_gronwall:.3g} "
                            f"runtime={elapsed:.0f}s")


def test_criterion_4_absorption(absorb_run):
    cfg, _, _, res, elapsed = absorb_run
    assert cfg.n_samples == 32 and max(cfg.taus) >= 60
    ok = res.violations == 0 and res.in_ball_after_analytic and res.consistent and elapsed < 600
    assert verdict("4", ok, f"bound violations={res.violations} sampled tau_hat={res.tau_hat_empirical} "
                            f"analytic tau_hat={res.tau_hat_analytic:g} runtime={elapsed:.0f}s")


@pytest.mark.xfail(strict=True, reason="the analytic absorption time is far more conservative than the "
                                       "sampled one; recorded as an unmet criterion")
def test_criterion_4_threshold_match(absorb_run):
    _, _, _, res, _ = absorb_run
    emp = res.tau_hat_empirical
    ok = emp is not None and abs(emp - res.tau_hat_analytic) <= res.tau_step
    assert verdict("4 (threshold match)", ok,
                   f"|sampled {emp} - analytic {res.tau_hat_analytic:g}| vs one step {res.tau_step:g}")


def test_criterion_5_exponential_attraction(bench, ledger):
    cfg, seed = settings_of("attract")
    assert cfg.n_steps == 8
    res = attract_experiment(bench, ledger, cfg, seed)
    taus = [t for t, _ in res.table]
    ok = res.fit.omega_hat > 0 and res.fit.residual < 0.5 and min(taus) >= 10 and max(taus) <= 60
    assert verdict("5", ok, f"omega_hat={res.fit.omega_hat:.4g} log-residual={res.fit.residual:.3g} "
                            f"taus={[round(t, 3) for t in taus]} |M_hat|={res.m_hat_size}")


def test_criterion_6_kappa_dissipativity(bench, ledger, absorb_run):
    cfg, seed = settings_of("kappa")
    _, absorb_seed, images, _, _ = absorb_run
    shared = absorb_seed == seed and all((float(cfg.t), float(s)) in images for s in cfg.taus + [cfg.sigma_cap])
    res = kappa_experiment(bench, ledger, cfg, seed, images=images if shared else None)
    ok = res.fit.omega_hat >= 0.5 * ledger.omega_theory
    assert verdict("6", ok, f"omega_hat={res.fit.omega_hat:.4g} theory={ledger.omega_theory:.4g} "
                            f"floor={0.5 * ledger.omega_theory:.4g}")


@pytest.fixture(scope="module")
def contract_run(bench, ledger):
    cfg, seed = settings_of("contract")
    return cfg, contract_experiment(bench, ledger, cfg, seed)


def test_criterion_7_contraction(ledger, contract_run):
    cfg, res = contract_run
    assert cfg.n_pairs >= 20 and sorted(cfg.n_values) == [1, 2, 3] and cfg.tol_ctr <= 0.05
    ok = res.violations == 0 and res.psi_vanishes and ledger.mu_ctr == pytest.approx(math.exp(-1))
    psi = ", ".join(f"{p:.3g}" for p in res.psi_sequence)
    assert verdict("7", ok, f"violations={res.violations}/{len(res.rows)} psi sequence=[{psi}]")


def test_criterion_8_lipschitz(contract_run):
    cfg, res = contract_run
    assert cfg.lipschitz_pairs >= 10 and cfg.lipschitz_gamma == 1.0 and cfg.tol_L <= 0.05
    ok = res.lipschitz_violations == 0
    assert verdict("8", ok, f"violations={res.lipschitz_violations} over {cfg.lipschitz_pairs} pairs, "
                            f"c={res.lipschitz_c:.3g}")


def test_criterion_9_covering_oracle():
    rng = np.random.default_rng(2024)
    bad_beta = bad_kappa = 0
    for _ in range(50):
        n, d, k = rng.integers(1, 11), rng.integers(1, 5), rng.integers(1, 5)
        C = PointCloud(rng.uniform(-5, 5, size=(n, d)))
        exact = ball_measure_exact(C, int(k))
        beta = ball_measure_upper(C, max_centers=int(k)).radius
        bad_beta += not (exact - 1e-12 <= beta <= 2 * exact + 1e-12)
        lo, hi = kappa_bounds(C, max_centers=int(k))
        kap = kappa_exact(C, int(k))
        bad_kappa += not (lo - 1e-12 <= kap <= hi + 1e-12)
    ok = bad_beta == 0 and bad_kappa == 0
    assert verdict("9", ok, f"greedy outside [exact, 2 exact]: {bad_beta}/50; kappa outside bracket: {bad_kappa}/50")


def test_criterion_10_decay_calculus():
    grid = np.linspace(-320.0, 20.0, 1361)
    certified = []
    for src in ("const(1)", "poly(1,0,1)", "2 + sin", "abs + const(1)"):
        r = DecayFunction.parse(src)
        mu = exp_integral_transform(r, 0.5, quadrature_step=0.01, grid=grid)
        nu = window_sup_transform(r, 2.0, 200, grid=grid)
        certified.append(membership_check(mu).certified and membership_check(nu).certified)
    worst = 0.0
    for c, eta in ((2.0, 0.4), (1.0, 1.0), (3.0, 0.0099)):
        mu = exp_integral_transform(DecayFunction.constant(c), eta, quadrature_step=1e-3 / eta)
        worst = max(worst, float(np.max(np.abs(mu.values / (c / eta) - 1))))
    refuted = membership_check(DecayFunction.parse("exp(-1)")).refuted
    ok = all(certified) and worst <= 1e-6 and refuted
    assert verdict("10", ok, f"transforms certified={certified} max rel err c/eta={worst:.2e} exp(-t) refuted={refuted}")


def test_stroboscopic_grid_lies_on_time_grid(bench):
    cfg, _ = settings_of("attract")
    for tau in cfg.taus:
        assert abs(snap(tau, bench.dt) - tau) <= bench.dt / 2
