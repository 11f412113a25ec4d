import math
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from oracles import exact_linear, fine_projection, linear_spec, smooth_state
from pullback_lab.process_core import IntegrationBlowup
from pullback_lab.wave_model import (ModelError, assemble_rhs, benchmark_spec, lambda1, lipschitz_check,
                                     load_model, make_process, model_from_dict, save_model, step,
                                     translated_trajectory, validate_hypotheses)

MODELS = Path(__file__).resolve().parents[1] / "configs" / "models"


@pytest.mark.parametrize("length, expected", [(math.pi, 1.0), (1.0, math.pi ** 2), (2 * math.pi, 0.25)])
def test_lambda1_examples(length, expected):
    assert lambda1(benchmark_spec(n_modes=4, domain_length=length)) == pytest.approx(expected, rel=1e-14)


def test_linear_modes_decouple():
    spec = linear_spec(n_modes=6, damping=0.7)
    x0 = smooth_state(6, seed=1)
    rhs = assemble_rhs(spec, 0.0, 0.0, x0)
    N = spec.n_modes
    w = np.arange(1, N + 1)
    assert np.allclose(rhs[:N], w * x0[N:], atol=1e-14)
    assert np.allclose(rhs[N:], -w * x0[:N] - 0.7 * x0[N:], atol=1e-14)


def test_zero_state_is_driven_by_forcing():
    # f(t, 0) = 0 for f = v^3, so only h remains in the velocity equation
    spec = benchmark_spec(n_modes=4, f="v**3", df_dv="3*v**2", df_dt="0", F="v**4/4", dF_dt="0")
    rhs = assemble_rhs(spec, 0.0, 1.3, np.zeros(spec.dim))
    assert np.allclose(rhs[:4], 0.0)
    assert np.allclose(rhs[4:], spec.system.h, atol=1e-14)


@pytest.mark.parametrize("mode, amp", [(0, 1.3), (2, 0.8)])
def test_projection_single_mode(bench, mode, amp):
    x = np.zeros(bench.dim)
    x[mode] = amp
    ref = fine_projection(bench, 0.7, x)
    assert np.allclose(bench.system.f_projection(0.7, x)[0], ref, atol=1e-10)


def test_projection_smooth_state(small_spec):
    x = 3 * smooth_state(small_spec.n_modes, seed=2, decay=2.0)
    ref = fine_projection(small_spec, 2.1, x)
    assert np.allclose(small_spec.system.f_projection(2.1, x)[0], ref, atol=1e-10)


def test_rk4_matches_exact_linear_flow():
    spec = linear_spec(n_modes=8, damping=1.0)
    x0 = smooth_state(8, seed=3, decay=3.0)
    proc = make_process(spec)
    err = np.abs(proc.advance(1.0, 0.0, x0) - exact_linear(spec, x0, 1.0)).max()
    assert err < 1e-8


def test_rk4_is_fourth_order():
    spec = linear_spec(n_modes=4, damping=1.0)
    x0 = smooth_state(4, seed=4, decay=3.0)
    exact = exact_linear(spec, x0, 1.0)
    errs = []
    for dt in (0.1, 0.05, 0.025):
        X = x0[None, :]
        for i in range(int(round(1.0 / dt))):
            X = step(spec, 0.0, i * dt, dt, X)
        errs.append(np.abs(X[0] - exact).max())
    orders = [math.log2(a / b) for a, b in zip(errs, errs[1:])]
    assert min(orders) >= 3.8


def test_zero_stays_zero_without_forcing():
    spec = linear_spec(n_modes=4)
    assert np.array_equal(make_process(spec).advance(2.0, 0.0, np.zeros(8)), np.zeros(8))


def test_undamped_energy_conserved():
    spec = linear_spec(n_modes=4, damping=0.0)
    x0 = smooth_state(4, seed=5)
    out = make_process(spec).advance(5.0, 0.0, x0)
    assert np.linalg.norm(out) == pytest.approx(np.linalg.norm(x0), rel=1e-9)


def test_advance_identity_and_translation(small_spec):
    proc = make_process(small_spec)
    x = smooth_state(small_spec.n_modes, seed=6)
    assert np.array_equal(proc.advance(-1.5, -1.5, x), x)
    via_process = proc.advance(-1.0, -1.5, x)
    via_translation = translated_trajectory(small_spec, -1.5, 0.5, x)
    assert np.allclose(via_process, via_translation, rtol=1e-12, atol=1e-12)


def test_blowup_is_reported():
    spec = linear_spec(n_modes=2, f="-v**3", df_dv="-3*v**2", F="-v**4/4")
    x = np.array([50.0, 0.0, 0.0, 0.0])
    with pytest.raises(IntegrationBlowup):
        make_process(spec).advance(5.0, 0.0, x)


def test_benchmark_passes_hypotheses(bench):
    rep = validate_hypotheses(bench)
    assert rep.passed, rep.failed
    assert rep.M_mu0 <= 2.0


def test_identity_nonlinearity_passes():
    spec = benchmark_spec(n_modes=4, f="v", df_dv="1", df_dt="0", F="v**2/2", dF_dt="0", c0="const(1.25)")
    rep = validate_hypotheses(spec)
    assert rep.passed and rep.M_mu0 == 0.0


@pytest.mark.parametrize("name, failing", [
    ("h3_fail", "H3_damping"),
    ("h4_fail", "H4_slope"),
    ("h6_fail", "H6_c0_class"),
])
def test_designed_failures_carry_witnesses(name, failing):
    rep = validate_hypotheses(load_model(MODELS / f"{name}.yaml"))
    assert failing in rep.failed
    wit = rep.statuses[failing].witness
    assert wit is not None and all(math.isfinite(x) for x in wit)


def test_wrong_derivative_detected():
    spec = benchmark_spec(n_modes=4, df_dv="3*v**2")
    assert "derivatives" in validate_hypotheses(spec).failed


def test_wrong_forcing_norm_detected():
    assert "H1_forcing" in validate_hypotheses(benchmark_spec(n_modes=4, h0=1.0)).failed


def test_hypothesis_inputs_validated(bench):
    with pytest.raises(ModelError):
        validate_hypotheses(bench, mu0=1.5)
    with pytest.raises(ModelError):
        validate_hypotheses(bench, v_box=0.0)


@given(v=st.floats(-200, 200), t=st.floats(0, 2 * math.pi))
def test_slope_above_threshold_outside_M(bench, ledger, v, t):
    # the sampled M sits on a mesh of step 0.005
    if abs(v) <= ledger.M + 0.005:
        return
    sys_ = bench.system
    assert float(sys_.df_dv(t, v)) > -0.5
    assert float(sys_.f(t, v)) / v > -0.5


@given(v=st.floats(-1e3, 1e3), t=st.floats(-50, 50))
def test_benchmark_growth_bounds(bench, v, t):
    sys_ = bench.system
    c0 = 3.25
    assert abs(float(sys_.df_dv(t, v))) <= c0 * (1 + v * v)
    assert abs(float(sys_.df_dt(t, v))) <= c0
    assert abs(float(sys_.f(t, 0.0))) <= c0


@given(kern=arrays(np.float64, (3, 3), elements=st.floats(-2, 2)),
       b=arrays(np.float64, 4, elements=st.floats(-10, 10)))
def test_kernel_operator_bound(kern, b):
    spec = benchmark_spec(n_modes=4, kernel=kern, K0=None)
    assert np.linalg.norm(spec.system.kernel_apply_l2(b)) <= spec.kernel_norm * np.linalg.norm(b) + 1e-9


@given(seed=st.integers(0, 2 ** 16))
@settings(max_examples=10)
def test_lipschitz_identical_pair(small_spec, seed):
    x = smooth_state(small_spec.n_modes, seed=seed)
    rep = lipschitz_check(small_spec, 0.0, 0.5, [(x, x.copy())], c=0.0)
    assert rep.passed


def test_lipschitz_linear_is_nonexpansive():
    spec = linear_spec(n_modes=4, damping=1.0)
    pairs = [(smooth_state(4, seed=k), smooth_state(4, seed=k + 10)) for k in range(3)]
    assert lipschitz_check(spec, 0.0, 2.0, pairs, c=0.0, tol_L=1e-9).passed
    assert not lipschitz_check(spec, 0.0, 2.0, pairs, c=-2.0, tol_L=0.0).passed


def test_lipschitz_requires_a_constant(small_spec):
    x = np.zeros(small_spec.dim)
    with pytest.raises(ModelError):
        lipschitz_check(small_spec, 0.0, 1.0, [(x, x)])


def test_model_roundtrip(tmp_path, bench):
    path = tmp_path / "m.yaml"
    save_model(bench, path)
    back = load_model(path)
    assert back.digest() == bench.digest()
    assert load_model(MODELS / "benchmark.yaml").digest() == bench.digest()


def test_auto_c0_is_admissible():
    raw = benchmark_spec(n_modes=4).to_dict()
    raw["c0"] = "auto"
    spec = model_from_dict(raw)
    assert spec.c0_function(0.0) >= 3.0
    assert validate_hypotheses(spec).passed


@pytest.mark.parametrize("change", [
    {"f": None},
    {"colour": "blue"},
    {"kernel": [[1.0, 0.0]]},
    {"f": "v ** "},
    {"f": "__import__('os')"},
    {"n_quad": 4},
    {"dt": -1.0},
])
def test_model_errors(change):
    raw = benchmark_spec(n_modes=4).to_dict()
    for k, v in change.items():
        if v is None:
            raw.pop(k)
        else:
            raw[k] = v
    with pytest.raises(ModelError):
        model_from_dict(raw)


def test_state_dimension_checked(bench):
    with pytest.raises(ModelError):
        assemble_rhs(bench, 0.0, 0.0, np.zeros(3))
