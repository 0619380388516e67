"""Config-driven experiment runner writing traces, diagnostics and a summary."""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .agents import (
    Diagnostics,
    RegretTrace,
    estimate_H,
    fourth_root_ceil,
    run_ebf,
    run_ld,
    run_ucrl2,
)
from .confidence import ConfidenceParams
from .envs import ENVIRONMENTS
from .errors import ConfigError, InvalidInput
from .mdp import solve_gain_bias
from .planners import PlanBudget

AGENTS = ("ebf", "ucrl2", "ld", "estimate_h")


@dataclass(frozen=True)
class ExperimentConfig:
    env_name: str
    env_params: dict
    agent_name: str
    T: int
    seeds: tuple
    output: str = "results"
    H: float | str = "oracle"
    delta: float = 0.05
    budget: dict = field(default_factory=dict)
    agent_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.env_name not in ENVIRONMENTS:
            raise ConfigError(f"unknown environment {self.env_name!r}; choose from {sorted(ENVIRONMENTS)}")
        if self.agent_name not in AGENTS:
            raise ConfigError(f"unknown agent {self.agent_name!r}; choose from {list(AGENTS)}")
        if not isinstance(self.T, int) or self.T < 0:
            raise ConfigError(f"T must be a non-negative integer, got {self.T!r}")
        if not 0 < self.delta < 1:
            raise ConfigError(f"delta must lie in (0, 1), got {self.delta}")
        if not self.seeds:
            raise ConfigError("seeds must be a non-empty list")
        if not (self.H == "oracle" or (isinstance(self.H, (int, float)) and self.H > 0)):
            raise ConfigError(f"H must be a positive number or 'oracle', got {self.H!r}")
        unknown = set(self.budget) - set(PlanBudget.__dataclass_fields__)
        if unknown:
            raise ConfigError(f"unknown budget knobs {sorted(unknown)}")

    @classmethod
    def from_dict(cls, obj: dict) -> "ExperimentConfig":
        try:
            env, agent = obj["env"], obj["agent"]
            known = {"name", "H", "delta", "budget"}
            return cls(
                env_name=env["name"],
                env_params=dict(env.get("parameters", {})),
                agent_name=agent["name"],
                T=obj["T"],
                seeds=tuple(int(s) for s in obj["seeds"]),
                output=obj.get("output", "results"),
                H=agent.get("H", "oracle"),
                delta=float(agent.get("delta", 0.05)),
                budget=dict(agent.get("budget", {})),
                agent_params={k: v for k, v in agent.items() if k not in known},
            )
        except (KeyError, TypeError) as exc:
            raise ConfigError(f"malformed experiment config: {exc!r}") from None

    @classmethod
    def load(cls, path: str | Path) -> "ExperimentConfig":
        try:
            with open(path) as fh:
                obj = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from None
        return cls.from_dict(obj)

    def make_env(self):
        try:
            return ENVIRONMENTS[self.env_name](**self.env_params)
        except (TypeError, InvalidInput) as exc:
            raise ConfigError(f"bad parameters for {self.env_name}: {exc}") from None


def regret_slope(regret: np.ndarray) -> float | None:
    """Least-squares slope of log(max(regret, 1)) against log t over t in [T/10, T]."""
    T = len(regret)
    if T < 2 or regret[-1] <= 0:
        return None
    t = np.arange(1, T + 1)
    mask = t >= T / 10.0
    if mask.sum() < 2:
        return None
    x = np.log(t[mask])
    y = np.log(np.maximum(regret[mask], 1.0))
    xc = x - x.mean()
    return float(xc @ (y - y.mean()) / (xc @ xc))


def _json_safe(obj):
    if isinstance(obj, float) and not math.isfinite(obj):
        return None if math.isnan(obj) else ("inf" if obj > 0 else "-inf")
    if isinstance(obj, dict):
        return {k: _json_safe(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_json_safe(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return _json_safe(obj.item())
    return obj


def _write_json(path: Path, obj) -> None:
    with open(path, "w", newline="\n") as fh:
        json.dump(_json_safe(obj), fh, indent=2, sort_keys=True, allow_nan=False)
        fh.write("\n")


def _empty_trace() -> RegretTrace:
    return RegretTrace(np.zeros(0), np.zeros(0), np.zeros(0, dtype=np.int64))


def run_seed(cfg: ExperimentConfig, mdp, seed: int) -> tuple[RegretTrace, dict]:
    """Run the configured agent for one seed; returns (trace, diagnostics dict)."""
    budget = PlanBudget(**cfg.budget)
    if cfg.agent_name in ("ebf", "estimate_h"):
        H = cfg.H
        T_run = cfg.T
        H_hat = None
        if cfg.agent_name == "estimate_h":
            H_hat = estimate_H(mdp, max(cfg.T, 1), cfg.delta, seed)
            H = H_hat
            S = mdp.n_states
            T_run = max(cfg.T - S * (S - 1) * fourth_root_ceil(max(cfg.T, 1)), 0)
        elif H == "oracle":
            H = solve_gain_bias(mdp).span + 1.0
        params = ConfidenceParams(float(H), cfg.delta, max(T_run, 1))
        trace, diag = run_ebf(mdp, params, T_run, seed, budget)
        diag.H_hat = H_hat
        out = diag.to_json()
        out["H"] = float(H)
        return trace, out
    if cfg.agent_name == "ucrl2":
        trace, diag = run_ucrl2(mdp, cfg.delta, cfg.T, seed)
        return trace, diag.to_json()
    x = int(cfg.agent_params.get("x", 0))
    y = int(cfg.agent_params.get("y", mdp.n_states - 1))
    try:
        res = run_ld(mdp, x, y, max(cfg.T, 1), cfg.delta, seed)
    except InvalidInput as exc:
        raise ConfigError(str(exc)) from None
    return _empty_trace(), {
        "agent": "ld", "x": x, "y": y, "T0": max(cfg.T, 1),
        "D_xy": res.D_xy, "D_yx": res.D_yx,
        "steps": list(res.steps), "arrivals": list(res.arrivals), "replans": list(res.replans),
    }


def run_experiment(cfg: ExperimentConfig, out_dir: str | Path | None = None) -> dict:
    """Run every seed, write per-seed files and ``summary.json``; returns the summary."""
    out = Path(out_dir if out_dir is not None else cfg.output)
    out.mkdir(parents=True, exist_ok=True)
    mdp = cfg.make_env()
    per_seed = []
    curves = []
    for seed in cfg.seeds:
        trace, diag = run_seed(cfg, mdp, seed)
        trace.to_csv(out / f"seed_{seed}_trace.csv")
        _write_json(out / f"seed_{seed}_diagnostics.json", diag)
        curves.append(trace.regret)
        per_seed.append({
            "seed": seed,
            "final_regret": trace.final_regret,
            "K": diag.get("K"),
            "slope": regret_slope(trace.regret),
        })
    lengths = {len(c) for c in curves}
    mean_slope = None
    if len(lengths) == 1 and lengths != {0}:
        mean_slope = regret_slope(np.mean(curves, axis=0))
    summary = {
        "env": {"name": cfg.env_name, "parameters": cfg.env_params},
        "agent": cfg.agent_name,
        "T": cfg.T,
        "seeds": list(cfg.seeds),
        "per_seed": per_seed,
        "mean_final_regret": float(np.mean([s["final_regret"] for s in per_seed])),
        "mean_curve_slope": mean_slope,
    }
    _write_json(out / "summary.json", summary)
    return summary
