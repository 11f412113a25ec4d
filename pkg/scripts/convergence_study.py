"""Time-step and mode-truncation convergence of the Galerkin integrator.

Prints RK4 errors against the closed-form damped oscillator flow, then the
change in the benchmark state at t = 5 as the number of sine modes doubles.
"""
import argparse
import math

import numpy as np

from pullback_lab.wave_model import benchmark_spec, make_process, step


def linear_errors(n_modes, dts, horizon=1.0, seed=0):
    from scipy.linalg import expm
    spec = benchmark_spec(n_modes=n_modes, f="0", df_dv="0", df_dt="0", F="0", dF_dt="0",
                          k="1", k0=1.0, k1=1.0, kernel=[[0.0]], K0=0.0, h=[0.0], h0=0.0)
    rng = np.random.default_rng(seed)
    scale = np.arange(1, n_modes + 1, dtype=float) ** -3.0
    x0 = np.concatenate([rng.normal(size=n_modes) * scale, rng.normal(size=n_modes) * scale])
    exact = np.empty_like(x0)
    for i in range(n_modes):
        w = i + 1.0
        exact[[i, n_modes + i]] = expm(np.array([[0.0, w], [-w, -1.0]]) * horizon) @ x0[[i, n_modes + i]]
    errs = []
    for dt in dts:
        X = x0[None, :]
        for i in range(int(round(horizon / dt))):
            X = step(spec, 0.0, i * dt, dt, X)
        errs.append(float(np.abs(X[0] - exact).max()))
    return errs


def truncation_study(modes, horizon=5.0, amplitude=2.0):
    """Evolve v(0) = amplitude sin(x) and report the L2 change of v(horizon)."""
    finals = []
    for n in modes:
        spec = benchmark_spec(n_modes=n)
        x = spec.system.state_from_functions(np.eye(n)[0] * amplitude * math.sqrt(math.pi / 2), np.zeros(n))
        finals.append(spec.system.l2_coeffs(make_process(spec).advance(horizon, 0.0, x)))
    diffs = []
    for a, b in zip(finals, finals[1:]):
        diffs.append(float(np.linalg.norm(np.pad(a, (0, b.size - a.size)) - b)))
    return diffs


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--modes", type=int, nargs="*", default=[8, 16, 32, 64])
    args = ap.parse_args()
    dts = [8e-3, 4e-3, 2e-3, 1e-3]
    errs = linear_errors(32, dts)
    print("dt        max error   observed order")
    for k, (dt, e) in enumerate(zip(dts, errs)):
        order = "" if k == 0 else f"{math.log2(errs[k - 1] / e):.3f}"
        print(f"{dt:<9g} {e:<11.3e} {order}")
    print("\nmodes     |v_N - v_2N| at t = 5")
    for n, d in zip(args.modes, truncation_study(args.modes)):
        print(f"{n:<9d} {d:.3e}")


if __name__ == "__main__":
    main()
