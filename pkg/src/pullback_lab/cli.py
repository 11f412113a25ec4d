"""Batch experiment driver.

Usage::

    pullback-lab <command> --config <file> [--out <dir>] [--seed <int>]

A config is a YAML file with top-level keys ``model`` (path relative to the
config file, or an inline mapping), ``seed``, ``output_dir``, ``mu0`` and an
optional section named after the command holding its experiment settings.

Exit codes: 0 ok, 2 parse error, 3 hypothesis failure, 4 invariant
violation, 5 integration blowup.
"""
from __future__ import annotations

import argparse
import dataclasses
import hashlib
import json
import sys
from pathlib import Path
from typing import Any, Callable

import numpy as np
import yaml

from . import __version__
from .decay_class import DecayDomainError, NonPositiveError
from .energy_diagnostics import ConstantsLedger, LedgerError, compute_constants
from .expressions import ExpressionError
from .experiments import (AbsorbConfig, AbsorbedFamilyConfig, AttractConfig, ContractConfig, CstarConfig,
                          KappaConfig, SimulateConfig, absorb_experiment, attract_experiment,
                          contract_experiment, cstar_experiment, kappa_experiment, simulate_experiment)
from .plots import emit_plots
from .process_core import IntegrationBlowup
from .wave_model import ModelError, ModelSpec, model_from_dict, validate_hypotheses

COMMANDS = ("validate", "simulate", "absorb", "attract", "kappa", "contract", "cstar")
EXIT_OK, EXIT_PARSE, EXIT_HYPOTHESIS, EXIT_INVARIANT, EXIT_BLOWUP = 0, 2, 3, 4, 5

SECTION_TYPES = {
    "simulate": SimulateConfig,
    "absorb": AbsorbConfig,
    "attract": AttractConfig,
    "kappa": KappaConfig,
    "contract": ContractConfig,
    "cstar": CstarConfig,
}
TOP_KEYS = {"command", "model", "seed", "output_dir", "mu0", *SECTION_TYPES, "validate"}


class ConfigError(ValueError):
    """Unreadable or inconsistent experiment config."""


@dataclasses.dataclass
class ExperimentConfig:
    command: str
    model: ModelSpec | None
    seed: int
    output_dir: Path
    mu0: float
    settings: Any
    config_hash: str
    config_path: Path


# ---------------------------------------------------------------------------
# config parsing
# ---------------------------------------------------------------------------

def _build_dataclass(cls, raw: dict | None, where: str):
    raw = dict(raw or {})
    fields = {f.name: f for f in dataclasses.fields(cls)}
    unknown = set(raw) - set(fields)
    if unknown:
        raise ConfigError(f"{where}: unknown keys {sorted(unknown)}")
    kwargs = {}
    for name, value in raw.items():
        if name == "chat":
            kwargs[name] = _build_dataclass(AbsorbedFamilyConfig, value, f"{where}.chat")
        else:
            kwargs[name] = value
    cfg = cls(**kwargs)
    for name in ("probes", "n_values", "alphas", "anchors"):
        if hasattr(cfg, name) and not getattr(cfg, name):
            raise ConfigError(f"{where}.{name}: grid must be nonempty")
    if hasattr(cfg, "taus") and not cfg.taus:
        raise ConfigError(f"{where}: tau grid must be nonempty")
    return cfg


def load_config(path: str | Path, command: str, out: str | None = None, seed: int | None = None) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {path} does not exist")
    text = path.read_bytes()
    try:
        raw = yaml.safe_load(text) or {}
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path}: invalid YAML ({exc})") from exc
    if not isinstance(raw, dict):
        raise ConfigError(f"{path}: top level must be a mapping")
    unknown = set(raw) - TOP_KEYS
    if unknown:
        raise ConfigError(f"{path}: unknown keys {sorted(unknown)}")
    if raw.get("command", command) != command:
        raise ConfigError(f"{path}: config is for '{raw['command']}', not '{command}'")

    model = None
    model_ref = raw.get("model")
    if model_ref is None and command != "cstar":
        raise ConfigError(f"{path}: 'model' is required for {command}")
    if isinstance(model_ref, str):
        mpath = (path.parent / model_ref).resolve()
        if not mpath.is_file():
            raise ConfigError(f"model file {mpath} does not exist")
        try:
            mraw = yaml.safe_load(mpath.read_text())
        except yaml.YAMLError as exc:
            raise ConfigError(f"{mpath}: invalid YAML ({exc})") from exc
        model = model_from_dict(mraw or {})
    elif isinstance(model_ref, dict):
        model = model_from_dict(model_ref)
    elif model_ref is not None:
        raise ConfigError(f"{path}: 'model' must be a path or a mapping")

    settings = None
    if command in SECTION_TYPES:
        settings = _build_dataclass(SECTION_TYPES[command], raw.get(command), command)
    elif raw.get("validate"):
        settings = dict(raw["validate"])

    try:
        seed_val = int(seed if seed is not None else raw.get("seed", 0))
        mu0 = float(raw.get("mu0", 0.5))
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"{path}: bad seed or mu0 ({exc})") from exc
    out_dir = Path(out) if out else (path.parent / raw.get("output_dir", f"out/{command}"))
    return ExperimentConfig(command, model, seed_val, out_dir, mu0, settings,
                            hashlib.sha256(text).hexdigest(), path)


# ---------------------------------------------------------------------------
# artifacts
# ---------------------------------------------------------------------------

def _cell(x) -> str:
    if isinstance(x, (bool, np.bool_)):
        return str(int(x))
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, (float, np.floating)):
        return repr(float(x))
    return str(x)


class ArtifactWriter:
    """Writes artifacts and a ``<name>.manifest.json`` sidecar for each."""

    def __init__(self, cfg: ExperimentConfig):
        self.cfg = cfg
        self.out = cfg.output_dir
        self.out.mkdir(parents=True, exist_ok=True)
        self.written: list[Path] = []

    def _manifest(self, target: Path, data: bytes) -> None:
        man = {
            "artifact": target.name,
            "sha256": hashlib.sha256(data).hexdigest(),
            "command": self.cfg.command,
            "config": str(self.cfg.config_path),
            "config_sha256": self.cfg.config_hash,
            "model_sha256": self.cfg.model.digest() if self.cfg.model is not None else None,
            "seed": self.cfg.seed,
            "tool_version": __version__,
        }
        Path(str(target) + ".manifest.json").write_text(json.dumps(man, indent=2, sort_keys=True) + "\n")

    def write_bytes(self, name: str, data: bytes) -> Path:
        target = self.out / name
        target.write_bytes(data)
        self._manifest(target, data)
        self.written.append(target)
        return target

    def csv(self, name: str, header: list[str], rows) -> Path:
        lines = [",".join(header)] + [",".join(_cell(x) for x in row) for row in rows]
        return self.write_bytes(name, ("\n".join(lines) + "\n").encode())

    def json(self, name: str, payload: dict) -> Path:
        return self.write_bytes(name, (json.dumps(payload, indent=2, sort_keys=True, default=_json_default)
                                       + "\n").encode())

    def text(self, name: str, body: str) -> Path:
        return self.write_bytes(name, body.encode())

    def plot(self, table: Path) -> Path:
        svg = emit_plots([table], self.out)[0]
        self._manifest(svg, svg.read_bytes())
        self.written.append(svg)
        return svg


def _json_default(x):
    if isinstance(x, (np.floating, np.integer)):
        return x.item()
    if isinstance(x, np.ndarray):
        return x.tolist()
    if isinstance(x, Path):
        return str(x)
    raise TypeError(f"not serializable: {type(x)}")


def _fit_dict(fit) -> dict:
    return {"C_hat": fit.C_hat, "omega_hat": fit.omega_hat, "residual": fit.residual,
            "tau_range": list(fit.tau_range), "floored": fit.floored, "n": fit.n}


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def _gate(cfg: ExperimentConfig, w: ArtifactWriter) -> ConstantsLedger | int:
    """Validate the model; return the ledger or an exit code."""
    report = validate_hypotheses(cfg.model, mu0=cfg.mu0)
    w.json("hypothesis_report.json", report.to_dict())
    if not report.passed:
        for name in report.failed:
            st = report.statuses[name]
            print(f"hypothesis {name} failed: {st.detail} witness={st.witness}", file=sys.stderr)
        return EXIT_HYPOTHESIS
    ledger = compute_constants(cfg.model, mu0=cfg.mu0, report=report)
    w.text("ledger.txt", ledger.dump())
    return ledger


def cmd_validate(cfg: ExperimentConfig, w: ArtifactWriter) -> int:
    gate = _gate(cfg, w)
    return gate if isinstance(gate, int) else EXIT_OK


def cmd_simulate(cfg: ExperimentConfig, w: ArtifactWriter, ledger: ConstantsLedger) -> int:
    s: SimulateConfig = cfg.settings
    res = simulate_experiment(cfg.model, ledger, s, cfg.seed)
    N = cfg.model.n_modes
    for i, d in enumerate(res.diagnostics):
        states = res.states[:, i]
        h1 = np.linalg.norm(states[:, :N], axis=1)
        vt = np.linalg.norm(states[:, N:], axis=1)
        idx = range(0, len(d.times), s.csv_every)
        w.csv(f"trajectory_{i}.csv", ["t", "norm_H1", "norm_vt", "E", "V"],
              ([d.times[j] + s.s, h1[j], vt[j], d.E_values[j], d.V_values[j]] for j in idx))
    w.csv("simulate_summary.csv",
          ["trajectory", "decay_violation", "gronwall_violation", "energy_margin", "global_bound_margin"],
          res.summary_rows())
    ok = (res.min_nonnegative >= 0 and res.min_sandwich >= 0
          and res.max_violation <= s.tol_decay and res.max_gronwall <= s.tol_decay)
    w.json("simulate_verdict.json", {"min_nonnegative": res.min_nonnegative, "min_sandwich": res.min_sandwich,
                                     "max_decay_violation": res.max_violation,
                                     "max_gronwall_violation": res.max_gronwall, "passed": ok})
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_absorb(cfg: ExperimentConfig, w: ArtifactWriter, ledger: ConstantsLedger) -> int:
    a: AbsorbConfig = cfg.settings
    res = absorb_experiment(cfg.model, ledger, a, cfg.seed)
    w.csv("absorb.csv", ["s", "tau", "max_norm_sq", "gamma_bound", "r0_sq", "in_ball"], res.rows)
    w.json("absorb_verdict.json", {"violations": res.violations, "tau_hat_empirical": res.tau_hat_empirical,
                                   "tau_hat_analytic": res.tau_hat_analytic, "consistent": res.consistent})
    return EXIT_OK if res.consistent else EXIT_INVARIANT


def cmd_attract(cfg: ExperimentConfig, w: ArtifactWriter, ledger: ConstantsLedger) -> int:
    a: AttractConfig = cfg.settings
    res = attract_experiment(cfg.model, ledger, a, cfg.seed)
    table = w.csv("attract.csv", ["tau", "d_H"], res.table)
    w.json("attract_fit.json", {**_fit_dict(res.fit), "tau1": res.tau1, "m_hat_size": res.m_hat_size,
                                "m_hat_diameter": res.m_hat_diameter})
    w.plot(table)
    ok = res.fit.omega_hat > a.min_omega and res.fit.residual < a.max_residual
    return EXIT_OK if ok else EXIT_INVARIANT


def cmd_kappa(cfg: ExperimentConfig, w: ArtifactWriter, ledger: ConstantsLedger) -> int:
    k: KappaConfig = cfg.settings
    res = kappa_experiment(cfg.model, ledger, k, cfg.seed)
    table = w.csv("kappa.csv", ["tau", "kappa"], res.table)
    w.json("kappa_fit.json", {**_fit_dict(res.fit), "omega_theory": res.omega_theory})
    w.plot(table)
    return EXIT_OK if res.passed else EXIT_INVARIANT


def cmd_contract(cfg: ExperimentConfig, w: ArtifactWriter, ledger: ConstantsLedger) -> int:
    c: ContractConfig = cfg.settings
    res = contract_experiment(cfg.model, ledger, c, cfg.seed)
    w.csv("contract.csv", ["n", "pair", "lhs", "mu_term", "g_term", "psi_term", "rho1", "rho2"], res.rows)
    w.csv("contract_psi.csv", ["j", "rho2", "psi"],
          [[j, r, p] for j, (r, p) in enumerate(zip(res.rho2_sequence, res.psi_sequence))])
    w.json("contract_verdict.json", {"violations": res.violations, "psi_vanishes": res.psi_vanishes,
                                     "lipschitz_violations": res.lipschitz_violations,
                                     "lipschitz_c": res.lipschitz_c, "passed": res.passed})
    return EXIT_OK if res.passed else EXIT_INVARIANT


def cmd_cstar(cfg: ExperimentConfig, w: ArtifactWriter) -> int:
    c: CstarConfig = cfg.settings
    verdict = cstar_experiment(c)
    ce = verdict.counterexample
    payload = {
        "function": c.function,
        "status": verdict.status,
        "margin": verdict.margin,
        "overflow": verdict.overflow,
        "witnesses": verdict.witnesses,
        "counterexample": None if ce is None else {
            "alpha": ce.alpha, "t": ce.t, "taus": list(map(float, ce.taus)), "values": list(map(float, ce.values))},
    }
    w.json("cstar_verdict.json", payload)
    if verdict.refuted:
        print(f"refuted at alpha={ce.alpha:g}, t={ce.t:g}" if ce else "refuted", file=sys.stderr)
        return EXIT_INVARIANT
    return EXIT_OK if verdict.certified else EXIT_INVARIANT


RUNNERS: dict[str, Callable] = {
    "simulate": cmd_simulate,
    "absorb": cmd_absorb,
    "attract": cmd_attract,
    "kappa": cmd_kappa,
    "contract": cmd_contract,
}


def run(cfg: ExperimentConfig) -> int:
    """Dispatch one experiment and return its exit code."""
    w = ArtifactWriter(cfg)
    try:
        if cfg.command == "cstar":
            return cmd_cstar(cfg, w)
        if cfg.command == "validate":
            return cmd_validate(cfg, w)
        gate = _gate(cfg, w)
        if isinstance(gate, int):
            return gate
        return RUNNERS[cfg.command](cfg, w, gate)
    except IntegrationBlowup as exc:
        print(f"integration blowup: {exc}", file=sys.stderr)
        return EXIT_BLOWUP
    except (LedgerError, ValueError) as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return EXIT_INVARIANT


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="pullback-lab", description=__doc__.split("\n")[0])
    p.add_argument("command", choices=COMMANDS)
    p.add_argument("--config", required=True, help="YAML experiment config")
    p.add_argument("--out", default=None, help="output directory (overrides the config)")
    p.add_argument("--seed", type=int, default=None, help="seed (overrides the config)")
    return p


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_OK if exc.code == 0 else EXIT_PARSE
    try:
        cfg = load_config(args.config, args.command, args.out, args.seed)
    except (ConfigError, ModelError, ExpressionError, DecayDomainError, NonPositiveError, TypeError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_PARSE
    code = run(cfg)
    print(f"{cfg.command}: exit {code}; artifacts in {cfg.output_dir}")
    return code


if __name__ == "__main__":
    sys.exit(main())
