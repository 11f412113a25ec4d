"""Spectral Galerkin discretization of a nonautonomous damped wave equation

    v_tt - v_xx + k(t) v_t + f(t, v) = int K(x, y) v_t(y) dy + h(x)

on (0, l) with Dirichlet conditions.

The state is (a, b) where a_i = sqrt(lam_i) c_i are the H^1_0 coordinates of
v = sum c_i phi_i and b are the L^2 coordinates of v_t, with phi_i the
L^2-orthonormal sines. In these coordinates the phase-space norm is the
Euclidean norm and the first-order system reads

    a' = sqrt(lam) b
    b' = -sqrt(lam) a + kappa b + h - P f(t, v) - k(t) b,

where P projects onto the sines by Gauss-Legendre quadrature.
"""
from __future__ import annotations

import functools
import hashlib
import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
import yaml

from .decay_class import DecayFunction, MembershipVerdict, membership_check
from .expressions import compile_model, compile_time
from .process_core import EvolutionProcess, IntegrationBlowup

BLOWUP_NORM = 1e8
QUAD_FACTOR = 4


class ModelError(ValueError):
    """Malformed or inconsistent model description."""


@dataclass(frozen=True, eq=False)
class ModelSpec:
    """Full data of the wave problem.

    Function fields are expression strings in ``t`` and ``v`` so that a spec
    can be written back to disk and hashed. ``kernel`` holds the coefficients
    kappa_ij of K(x, y) = sum kappa_ij phi_i(x) phi_j(y); ``h`` holds the L^2
    sine coefficients of the forcing. ``K0`` and ``h0`` are the declared
    norms, checked against the data.
    """

    f: str
    df_dv: str
    df_dt: str
    F: str
    dF_dt: str
    c0: str
    domain_length: float = float(np.pi)
    n_modes: int = 32
    dt: float = 1e-3
    k: str = "2 + sin(t)/2"
    k0: float = 1.5
    k1: float = 2.5
    kernel: np.ndarray = field(default_factory=lambda: np.array([[0.5]]))
    K0: float | None = None
    h: np.ndarray = field(default_factory=lambda: np.array([np.sqrt(np.pi / 2)]))
    h0: float | None = None
    n_quad: int | None = None
    name: str = "model"

    def __post_init__(self):
        kern = np.array(self.kernel, dtype=float, ndmin=2)
        h = np.array(self.h, dtype=float).reshape(-1)
        if kern.shape[0] != kern.shape[1]:
            raise ModelError("kernel coefficient matrix must be square")
        if kern.shape[0] > self.n_modes or h.size > self.n_modes:
            raise ModelError("kernel and forcing cannot use more modes than the truncation")
        if self.domain_length <= 0 or self.n_modes < 1 or self.dt <= 0:
            raise ModelError("domain length, mode count and dt must be positive")
        kern.setflags(write=False)
        h.setflags(write=False)
        object.__setattr__(self, "kernel", kern)
        object.__setattr__(self, "h", h)
        if self.n_quad is None:
            object.__setattr__(self, "n_quad", QUAD_FACTOR * self.n_modes)

    @property
    def dim(self) -> int:
        return 2 * self.n_modes

    @property
    def kernel_norm(self) -> float:
        return float(np.linalg.norm(self.kernel))

    @property
    def forcing_norm(self) -> float:
        return float(np.linalg.norm(self.h))

    @functools.cached_property
    def system(self) -> "WaveSystem":
        return WaveSystem(self)

    @functools.cached_property
    def c0_function(self) -> DecayFunction:
        return DecayFunction.parse(self.c0)

    def to_dict(self) -> dict:
        d = {
            "name": self.name, "domain_length": self.domain_length, "n_modes": self.n_modes,
            "n_quad": self.n_quad, "dt": self.dt, "k": self.k, "k0": self.k0, "k1": self.k1,
            "kernel": self.kernel.tolist(), "h": self.h.tolist(),
            "f": self.f, "df_dv": self.df_dv, "df_dt": self.df_dt, "F": self.F,
            "dF_dt": self.dF_dt, "c0": self.c0,
        }
        if self.K0 is not None:
            d["K0"] = self.K0
        if self.h0 is not None:
            d["h0"] = self.h0
        return d

    def digest(self) -> str:
        blob = json.dumps(self.to_dict(), sort_keys=True).encode()
        return hashlib.sha256(blob).hexdigest()

    def replace(self, **changes) -> "ModelSpec":
        d = {**self.to_dict(), **changes}
        return ModelSpec(**d)


def _number(x) -> float:
    if isinstance(x, (int, float)):
        return float(x)
    return float(compile_time(str(x))(0.0))


def load_model(path: str | Path) -> ModelSpec:
    """Read a model description (YAML).

    ``kernel`` and ``h`` entries may be numbers or constant expressions such
    as ``sqrt(pi/2)``. ``c0: auto`` selects a constant from ``suggest_c0``.
    """
    path = Path(path)
    try:
        raw = yaml.safe_load(path.read_text())
    except yaml.YAMLError as exc:
        raise ModelError(f"{path}: {exc}") from exc
    if not isinstance(raw, dict):
        raise ModelError(f"{path}: expected a mapping")
    return model_from_dict(raw)


def model_from_dict(raw: dict) -> ModelSpec:
    raw = dict(raw)
    required = ("f", "df_dv", "df_dt", "F", "dF_dt")
    missing = [k for k in required if k not in raw]
    if missing:
        raise ModelError(f"model is missing fields {missing}")
    try:
        kern = raw.get("kernel", [[0.5]])
        raw["kernel"] = [[_number(x) for x in row] for row in np.atleast_2d(np.array(kern, dtype=object))]
        raw["h"] = [_number(x) for x in np.atleast_1d(np.array(raw.get("h", [np.sqrt(np.pi / 2)]), dtype=object))]
        for key in ("domain_length", "dt", "k0", "k1", "K0", "h0"):
            if key in raw and raw[key] is not None:
                raw[key] = _number(raw[key])
        for key in ("f", "df_dv", "df_dt", "F", "dF_dt", "k"):
            if key in raw:
                raw[key] = str(raw[key])
        c0 = str(raw.get("c0", "auto"))
        raw["c0"] = "const(1)" if c0 == "auto" else c0
        allowed = set(ModelSpec.__dataclass_fields__)
        unknown = set(raw) - allowed
        if unknown:
            raise ModelError(f"unknown model fields {sorted(unknown)}")
        spec = ModelSpec(**raw)
        # compile everything now so syntax errors surface at load time
        spec.system
        spec.c0_function
    except ModelError:
        raise
    except Exception as exc:  # expression or type errors from user input
        raise ModelError(str(exc)) from exc
    if c0 == "auto":
        spec = spec.replace(c0=f"const({suggest_c0(spec):g})")
    return spec


def save_model(spec: ModelSpec, path: str | Path) -> None:
    Path(path).write_text(yaml.safe_dump(spec.to_dict(), sort_keys=False))


def benchmark_spec(n_modes: int = 32, **overrides) -> ModelSpec:
    """Default benchmark: cubic nonlinearity with a bounded oscillating part."""
    base = dict(
        name="benchmark",
        n_modes=n_modes,
        f="v**3 + sin(t)*(1 - 2*v**2)*exp(-v**2)",
        df_dv="3*v**2 + sin(t)*(4*v**3 - 6*v)*exp(-v**2)",
        df_dt="cos(t)*(1 - 2*v**2)*exp(-v**2)",
        F="v**4/4 + sin(t)*v*exp(-v**2)",
        dF_dt="cos(t)*v*exp(-v**2)",
        c0="const(3.25)",
        K0=0.5,
        h0=float(np.sqrt(np.pi / 2)),
    )
    base.update(overrides)
    return ModelSpec(**base)


# ---------------------------------------------------------------------------
# discretization
# ---------------------------------------------------------------------------

def lambda1(spec: ModelSpec) -> float:
    """First Dirichlet eigenvalue (pi / l)^2 of -d^2/dx^2 on (0, l)."""
    return (np.pi / spec.domain_length) ** 2


class WaveSystem:
    """Precomputed basis, quadrature and compiled functions for one spec."""

    def __init__(self, spec: ModelSpec):
        if spec.n_quad < QUAD_FACTOR * spec.n_modes:
            raise ModelError(f"quadrature needs at least {QUAD_FACTOR * spec.n_modes} points, "
                             f"got {spec.n_quad}")
        self.spec = spec
        N, ell = spec.n_modes, spec.domain_length
        self.N = N
        self.lam = (np.arange(1, N + 1) * np.pi / ell) ** 2
        self.sqrt_lam = np.sqrt(self.lam)
        xg, wg = np.polynomial.legendre.leggauss(spec.n_quad)
        self.x = 0.5 * ell * (xg + 1.0)
        self.w = 0.5 * ell * wg
        self.phi = np.sqrt(2.0 / ell) * np.sin(np.outer(self.x, np.arange(1, N + 1) * np.pi / ell))
        self.a_to_v = (self.phi / self.sqrt_lam).T.copy()      # (N, Q): v at nodes from a
        self.b_to_v = self.phi.T.copy()                         # (N, Q): v_t at nodes from b
        self.project = (self.w[:, None] * self.phi).copy()     # (Q, N): L^2 projection
        self.kappa = np.zeros((N, N))
        m = spec.kernel.shape[0]
        self.kappa[:m, :m] = spec.kernel
        self.kappa_T = self.kappa.T.copy()
        self.h = np.zeros(N)
        self.h[:spec.h.size] = spec.h
        self.f = compile_model(spec.f)
        self.df_dv = compile_model(spec.df_dv)
        self.df_dt = compile_model(spec.df_dt)
        self.F = compile_model(spec.F)
        self.dF_dt = compile_model(spec.dF_dt)
        self.k = compile_time(spec.k)

    # -- coordinates ------------------------------------------------------
    def split(self, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        return X[..., :self.N], X[..., self.N:]

    def v_nodes(self, X: np.ndarray) -> np.ndarray:
        return self.split(X)[0] @ self.a_to_v

    def l2_coeffs(self, X: np.ndarray) -> np.ndarray:
        """L^2 sine coefficients c of v."""
        return self.split(X)[0] / self.sqrt_lam

    def state_from_functions(self, v_coeffs: np.ndarray, vt_coeffs: np.ndarray) -> np.ndarray:
        """State from L^2 sine coefficients of v and v_t."""
        return np.concatenate([np.asarray(v_coeffs) * self.sqrt_lam, np.asarray(vt_coeffs)], axis=-1)

    # -- dynamics ---------------------------------------------------------
    def rhs(self, times: np.ndarray, X: np.ndarray) -> np.ndarray:
        """Time derivative of each row of X at its own time."""
        X = np.atleast_2d(X)
        times = np.broadcast_to(np.asarray(times, dtype=float).reshape(-1), (X.shape[0],))
        a, b = X[:, :self.N], X[:, self.N:]
        V = a @ self.a_to_v
        fv = self.f(times[:, None], V)
        kt = self.k(times)[:, None]
        db = -self.sqrt_lam * a + b @ self.kappa_T + self.h - fv @ self.project - kt * b
        return np.concatenate([self.sqrt_lam * b, db], axis=1)

    def rk4(self, times: np.ndarray, X: np.ndarray, dt: float) -> np.ndarray:
        """One classical Runge-Kutta step with a blowup check."""
        times = np.asarray(times, dtype=float).reshape(-1)
        half = times + 0.5 * dt
        k1 = self.rhs(times, X)
        k2 = self.rhs(half, X + 0.5 * dt * k1)
        k3 = self.rhs(half, X + 0.5 * dt * k2)
        k4 = self.rhs(times + dt, X + dt * k3)
        out = X + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)
        norms = np.sqrt(np.einsum("ij,ij->i", out, out))
        bad = ~np.isfinite(norms) | (norms > BLOWUP_NORM)
        if np.any(bad):
            rows = np.flatnonzero(bad)
            raise IntegrationBlowup(f"integration blowup at t={times[rows[0]] + dt:g}",
                                    float(times[rows[0]] + dt), rows)
        return out

    def kernel_apply_l2(self, b: np.ndarray) -> np.ndarray:
        return b @ self.kappa_T

    def f_projection(self, t: float | np.ndarray, X: np.ndarray) -> np.ndarray:
        X = np.atleast_2d(X)
        times = np.broadcast_to(np.asarray(t, dtype=float).reshape(-1), (X.shape[0],))
        return self.f(times[:, None], self.v_nodes(X)) @ self.project


def assemble_rhs(spec: ModelSpec, s: float, t: float, state: np.ndarray) -> np.ndarray:
    """Derivative of the translated problem: coefficients are read at t + s."""
    state = np.asarray(state, dtype=float)
    if state.shape[-1] != spec.dim:
        raise ModelError(f"state dimension {state.shape[-1]} does not match {spec.dim}")
    out = spec.system.rhs(np.array([s + t]), state.reshape(-1, spec.dim))
    return out.reshape(state.shape)


def step(spec: ModelSpec, s: float, t: float, dt: float, state: np.ndarray) -> np.ndarray:
    """One RK4 step of the translated problem from t to t + dt."""
    state = np.asarray(state, dtype=float)
    out = spec.system.rk4(np.array([s + t]), state.reshape(-1, spec.dim), dt)
    return out.reshape(state.shape)


def make_process(spec: ModelSpec, dt: float | None = None) -> EvolutionProcess:
    """Evolution process of the model on the grid of step ``dt``."""
    dt = spec.dt if dt is None else dt
    sys_ = spec.system
    return EvolutionProcess(sys_.rk4, dt, spec.dim, spec.name)


def translated_trajectory(spec: ModelSpec, s: float, t_end: float, x: np.ndarray,
                          dt: float | None = None) -> np.ndarray:
    """Integrate the translated problem u(t) = v(t + s) from t = 0 to t_end.

    Uses its own local clock so it can be compared with the process.
    """
    dt = spec.dt if dt is None else dt
    n = int(round(t_end / dt))
    X = np.asarray(x, dtype=float)[None, :]
    for i in range(n):
        X = step(spec, s, i * dt, dt, X)
    return X[0]


# ---------------------------------------------------------------------------
# hypotheses
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class HypothesisStatus:
    passed: bool
    detail: str = ""
    witness: tuple[float, float, float] | None = None  # (t, v, value)


@dataclass(frozen=True)
class HypothesisReport:
    statuses: dict[str, HypothesisStatus]
    M_mu0: float
    L0_scale: float
    lambda1: float
    mu0: float
    c0_required: float
    membership: MembershipVerdict | None = None

    @property
    def passed(self) -> bool:
        return all(s.passed for s in self.statuses.values())

    @property
    def failed(self) -> list[str]:
        return [k for k, s in self.statuses.items() if not s.passed]

    def to_dict(self) -> dict:
        return {
            "passed": self.passed, "M_mu0": self.M_mu0, "L0_scale": self.L0_scale,
            "lambda1": self.lambda1, "mu0": self.mu0, "c0_required": self.c0_required,
            "statuses": {k: {"passed": s.passed, "detail": s.detail,
                             "witness": None if s.witness is None else list(s.witness)}
                         for k, s in self.statuses.items()},
        }


def default_t_probes(n: int = 64) -> np.ndarray:
    return np.linspace(0.0, 2 * np.pi, n, endpoint=False)


def l0_scale(spec: ModelSpec) -> float:
    """Constant c with ||f(v) - f(w)|| <= c c0 (1 + |v|^2 + |w|^2) |v - w|.

    On an interval, sup|v|^2 <= (l/4) |v'|^2 and the Poincare inequality give
    c = 2 lam1^{-1/2} max(1, l/4).
    """
    return 2.0 / np.sqrt(lambda1(spec)) * max(1.0, spec.domain_length / 4.0)


def l4_embedding_fourth(spec: ModelSpec) -> float:
    """c^4 in |v|_{L^4} <= c |v|_{H^1_0}: here l / (4 lam1)."""
    return spec.domain_length / (4.0 * lambda1(spec))


def _growth_ratios(spec: ModelSpec, v: np.ndarray, t: np.ndarray) -> dict[str, np.ndarray]:
    """Quantities that must stay below c0(t), on the (t, v) mesh."""
    sys_ = spec.system
    T, V = np.meshgrid(t, v, indexing="ij")
    return {
        "f_at_zero": np.abs(sys_.f(t, 0.0)),
        "df_dv": np.abs(sys_.df_dv(T, V)) / (1 + V * V),
        "df_dt": np.abs(sys_.df_dt(T, V)),
        "dF_dt_integral": np.trapezoid(np.abs(sys_.dF_dt(T, V)), v, axis=1),
        "dF_dt_domain": spec.domain_length * np.max(np.abs(sys_.dF_dt(T, V)), axis=1),
    }


def suggest_c0(spec: ModelSpec, v_box: float = 10.0, t_probes: Sequence[float] | None = None,
               n_v: int = 4001, quantum: float = 0.25) -> float:
    """Smallest multiple of ``quantum`` above 1.02 times every growth ratio."""
    t = default_t_probes() if t_probes is None else np.asarray(t_probes, float)
    v = np.linspace(-v_box, v_box, n_v)
    req = max(float(np.max(r)) for r in _growth_ratios(spec, v, t).values())
    # a little headroom because the sampled maximum can undershoot the true one
    return quantum * float(np.ceil(1.02 * req / quantum))


def _worst(ratio: np.ndarray, c0: np.ndarray, t: np.ndarray, v: np.ndarray | None):
    excess = ratio - (c0 if ratio.ndim == 1 else c0[:, None])
    idx = np.unravel_index(int(np.argmax(excess)), excess.shape)
    tt = float(t[idx[0]])
    vv = float(v[idx[1]]) if (v is not None and ratio.ndim == 2) else 0.0
    return float(excess[idx]), (tt, vv, float(ratio[idx]))


def validate_hypotheses(spec: ModelSpec, mu0: float = 0.5, v_box: float = 10.0,
                        t_probes: Sequence[float] | None = None, n_v: int = 4001,
                        membership_kwargs: dict | None = None) -> HypothesisReport:
    """Sample-based check of the standing hypotheses on the model data.

    Every failed check carries a witness (t, v, value).
    """
    lam1 = lambda1(spec)
    if not 0 < mu0 < lam1:
        raise ModelError(f"mu0 must lie in (0, {lam1}), got {mu0}")
    if v_box <= 0:
        raise ModelError("v_box must be positive")
    t = default_t_probes() if t_probes is None else np.asarray(t_probes, dtype=float)
    v = np.linspace(-v_box, v_box, n_v)
    sys_ = spec.system
    st: dict[str, HypothesisStatus] = {}

    # H1, H2: declared norms agree with the data
    h0 = spec.forcing_norm
    ok = spec.h0 is None or abs(spec.h0 - h0) <= 1e-12
    st["H1_forcing"] = HypothesisStatus(ok, f"h0={h0:.15g} declared={spec.h0}",
                                        None if ok else (0.0, 0.0, h0))
    K0 = spec.kernel_norm
    ok = spec.K0 is None or abs(spec.K0 - K0) <= 1e-12
    st["H2_kernel"] = HypothesisStatus(ok, f"K0={K0:.15g} declared={spec.K0}",
                                       None if ok else (0.0, 0.0, K0))

    # H3: 0 <= K0 < k0 <= k(t) <= k1
    kt = np.asarray(sys_.k(t))
    if not K0 < spec.k0:
        st["H3_damping"] = HypothesisStatus(False, f"K0={K0:g} is not below k0={spec.k0:g}",
                                            (float(t[0]), 0.0, K0))
    elif np.any(kt < spec.k0) or np.any(kt > spec.k1):
        i = int(np.argmax(np.maximum(spec.k0 - kt, kt - spec.k1)))
        st["H3_damping"] = HypothesisStatus(False, "k(t) leaves [k0, k1]", (float(t[i]), 0.0, float(kt[i])))
    else:
        st["H3_damping"] = HypothesisStatus(True, f"K0={K0:g} < k0={spec.k0:g}, k in [{kt.min():.4g}, {kt.max():.4g}]")

    # H4: asymptotic slope, growth bounds, and the threshold M(mu0)
    T, V = np.meshgrid(t, v, indexing="ij")
    dfdv = np.asarray(sys_.df_dv(T, V))
    inf_dfdv = dfdv.min(axis=0)
    tail = np.abs(v) >= 0.5 * v_box
    j = int(np.argmin(np.where(tail, inf_dfdv, np.inf)))
    liminf = float(inf_dfdv[j])
    with np.errstate(divide="ignore", invalid="ignore"):
        f_over_v = np.asarray(sys_.f(T, V)) / V
    f_over_v[:, v == 0] = np.inf
    inf_fov = f_over_v.min(axis=0)
    bad = (inf_dfdv <= -mu0) | (inf_fov <= -mu0)
    M = float(np.max(np.abs(v[bad]))) if np.any(bad) else 0.0
    c0t = np.asarray(spec.c0_function(t))
    ok_slope = liminf > -lam1
    ok_M = M < 0.5 * v_box
    if ok_slope and ok_M:
        st["H4_slope"] = HypothesisStatus(True, f"tail inf df/dv={liminf:.4g} > -lam1={-lam1:g}; M={M:.4g}")
    elif not ok_slope:
        i = int(np.argmin(dfdv[:, j]))
        st["H4_slope"] = HypothesisStatus(False, f"tail inf df/dv={liminf:.4g} <= -lam1={-lam1:g}",
                                          (float(t[i]), float(v[j]), liminf))
    else:
        st["H4_slope"] = HypothesisStatus(False, f"threshold M={M:.4g} not reached inside the box",
                                          (0.0, M, M))
    ratios = _growth_ratios(spec, v, t)
    for name in ("f_at_zero", "df_dv", "df_dt"):
        excess, wit = _worst(ratios[name], c0t, t, v)
        st[f"H4_growth_{name}"] = HypothesisStatus(excess <= 0, f"max excess over c0: {excess:.4g}",
                                                   None if excess <= 0 else wit)

    # H5: integral of |dF/dt| in v, and the domain version used by the energy estimate
    for name in ("dF_dt_integral", "dF_dt_domain"):
        excess, wit = _worst(ratios[name], c0t, t, None)
        st[f"H5_{name}"] = HypothesisStatus(excess <= 0, f"max excess over c0: {excess:.4g}",
                                            None if excess <= 0 else wit)

    # supplied derivatives agree with the primitives
    st["derivatives"] = _derivative_consistency(spec, t, v)

    # H6: c0 in the decay class
    verdict = membership_check(spec.c0_function, **(membership_kwargs or {}))
    wit = None
    if not verdict.certified:
        ce = verdict.counterexample
        wit = (ce.t, ce.taus[-1], ce.values[-1]) if ce is not None else (0.0, 0.0, 0.0)
        detail = f"c0 {verdict.status}" + (f" at alpha={ce.alpha:g}" if ce is not None else "")
    else:
        detail = "c0 certified"
    st["H6_c0_class"] = HypothesisStatus(verdict.certified, detail, wit)
    if np.any(c0t <= 0):
        st["H6_c0_class"] = HypothesisStatus(False, "c0 not positive", (float(t[0]), 0.0, float(c0t.min())))

    c0_req = max(float(np.max(r)) for r in ratios.values())
    return HypothesisReport(st, M, l0_scale(spec), lam1, mu0, c0_req, verdict)


def _derivative_consistency(spec: ModelSpec, t: np.ndarray, v: np.ndarray, rtol: float = 1e-4) -> HypothesisStatus:
    sys_ = spec.system
    vs = np.linspace(v.min() / 2, v.max() / 2, 161)
    ts = t[:: max(1, t.size // 8)]
    T, V = np.meshgrid(ts, vs, indexing="ij")
    hv, ht = 1e-5, 1e-5
    checks = {
        "dF/dv=f": (sys_.F(T, V + hv) - sys_.F(T, V - hv)) / (2 * hv) - sys_.f(T, V),
        "df/dv": (sys_.f(T, V + hv) - sys_.f(T, V - hv)) / (2 * hv) - sys_.df_dv(T, V),
        "df/dt": (sys_.f(T + ht, V) - sys_.f(T - ht, V)) / (2 * ht) - sys_.df_dt(T, V),
        "dF/dt": (sys_.F(T + ht, V) - sys_.F(T - ht, V)) / (2 * ht) - sys_.dF_dt(T, V),
    }
    scale = 1 + np.abs(sys_.F(T, V)) + np.abs(sys_.f(T, V))
    for name, err in checks.items():
        rel = np.abs(err) / scale
        if np.max(rel) > rtol:
            i = np.unravel_index(int(np.argmax(rel)), rel.shape)
            return HypothesisStatus(False, f"{name} inconsistent", (float(T[i]), float(V[i]), float(err[i])))
    if np.any(np.abs(sys_.F(ts, 0.0)) > 1e-12):
        return HypothesisStatus(False, "F(t, 0) must vanish", (float(ts[0]), 0.0, float(sys_.F(ts[0], 0.0))))
    return HypothesisStatus(True, "finite differences agree")


# ---------------------------------------------------------------------------
# Lipschitz dependence
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class LipschitzReport:
    c: float
    violations: tuple[tuple[int, float, float, float], ...]   # (pair, tau, ratio, allowed)
    worst_margin: float                                       # max log(ratio) - log(allowed)

    @property
    def passed(self) -> bool:
        return not self.violations


def lipschitz_check(spec: ModelSpec, s: float, gamma: float, pairs: Sequence[tuple[np.ndarray, np.ndarray]],
                    c: float | None = None, dt: float | None = None, tol_L: float = 0.05,
                    bound: float | None = None, ledger=None) -> LipschitzReport:
    """Check |Z(tau)| <= exp(c tau / 2) |Z(0)| (1 + tol_L) on the grid tau <= gamma.

    Without an explicit ``c`` it is taken from ``ledger`` (a constants
    ledger), which then also supplies the default ``bound``: the absorbing
    radius at time s, enforced as a precondition on every pair member.
    """
    if c is None:
        if ledger is None:
            raise ModelError("lipschitz_check needs either c or a constants ledger")
        from .energy_diagnostics import lipschitz_constant
        c = lipschitz_constant(ledger, s, gamma)
        if bound is None:
            bound = float(ledger.r0(s))
    proc = make_process(spec, dt)
    n_steps = proc.index(gamma)
    i0 = proc.index(s)
    X = np.vstack([np.vstack([p, q]) for p, q in pairs]) if pairs else np.zeros((0, spec.dim))
    if bound is not None and X.size and np.max(np.linalg.norm(X, axis=1)) > bound * (1 + 1e-12):
        raise ModelError("pair outside the absorbing bound")
    cps = list(range(i0, i0 + n_steps + 1))
    states = proc.evolve(np.full(X.shape[0], i0), X, cps)
    taus = (np.asarray(cps) - i0) * proc.dt
    violations = []
    worst = -np.inf
    for k in range(len(pairs)):
        Z = np.linalg.norm(states[:, 2 * k] - states[:, 2 * k + 1], axis=1)
        if Z[0] == 0:
            if np.any(Z > 0):
                violations.append((k, float(taus[np.argmax(Z > 0)]), np.inf, 0.0))
            continue
        log_ratio = np.log(np.maximum(Z, 1e-300) / Z[0])
        log_allowed = 0.5 * c * taus + np.log1p(tol_L)
        margin = log_ratio - log_allowed
        worst = max(worst, float(margin.max()))
        for i in np.flatnonzero(margin > 0):
            violations.append((k, float(taus[i]), float(np.exp(log_ratio[i])), float(np.exp(log_allowed[i]))))
    return LipschitzReport(float(c), tuple(violations), worst)
