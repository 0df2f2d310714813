"""Experiment configuration: JSON schema, validation and initial data.

Schema (all keys optional unless noted)::

    model         "aggdiff" | "heat" | "pde"                     (required)
    N             lattice size, nodes 0..N          (aggdiff, heat)
    M             cells, nodes 0..M                           (pde)
    tau           time per lattice step, default 0.1 (aggdiff, heat)
    p             staying probability                        (heat)
    boundary      "dirichlet" | "neumann", default "dirichlet"
                  ("neumann" for pde)
    initial       {"type": "sine", "amplitude", "offset", "frequency"}
                  {"type": "constant", "value"}
                  {"type": "values", "values": [u_0, ..., u_N]}
                  {"type": "random", "seed", "low", "high", "monotone"}
    steps         lattice steps; without it, run to equilibrium
    max_steps     step budget for equilibrium runs, default 10^7
    eps_stop      sup-norm increment that counts as equilibrium, 1e-13
    record_every  keep every k-th step (lattice) or solver step (pde)
    tol           tolerance override for checks
    checks        names from aggdiff.invariants.CHECKS
    theta         CFL safety factor, default 0.9                (pde)
    T_final       solver end time, default 1.0                  (pde)
    diffusivity   "backward_forward" or {"constant": c}         (pde)
    dx_list       probe mesh sizes; switches pde to probe mode  (pde)
    T_probe       probe end time, default 1e-3                  (pde)
    out           output path

The sine preset is offset + amplitude * sin(frequency * pi * x) sampled
at x_j = j/N (or j/M); "frequency": 10 therefore means sin(10 pi x).
Random interiors draw uniformly from [low, high] with numpy's default
generator; "monotone" sorts them ascending.
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .lattice import AggDiff, BoundaryKind, ConstantProb, LatticeState, sine_profile
from .invariants import CHECKS


class ConfigError(ValueError):
    pass


COMMON = {"model", "boundary", "initial", "out", "record_every", "tol"}
LATTICE = {"N", "tau", "steps", "max_steps", "eps_stop", "checks"}
PDE = {"M", "theta", "T_final", "diffusivity", "dx_list", "T_probe"}
ALLOWED = {
    "aggdiff": COMMON | LATTICE,
    "heat": COMMON | LATTICE | {"p"},
    "pde": COMMON | PDE,
}


@dataclass
class ExperimentConfig:
    model: str
    N: int | None = None
    M: int | None = None
    tau: float = 0.1
    p: float | None = None
    boundary: BoundaryKind = BoundaryKind.DIRICHLET
    initial: dict = field(default_factory=dict)
    steps: int | None = None
    max_steps: int = 10**7
    eps_stop: float = 1e-13
    record_every: int | None = None
    tol: float | None = None
    checks: list = field(default_factory=list)
    theta: float = 0.9
    T_final: float = 1.0
    diffusivity: Any = "backward_forward"
    dx_list: list | None = None
    T_probe: float = 1e-3
    out: str | None = None

    @property
    def is_lattice(self) -> bool:
        return self.model in ("aggdiff", "heat")

    @property
    def kernel(self):
        return ConstantProb(self.p) if self.model == "heat" else AggDiff()


def _int(raw, key, low):
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, int) or v < low:
        raise ConfigError(f"{key} must be an integer >= {low}")
    return v


def _float(raw, key, low=None, high=None, strict=False):
    v = raw[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not np.isfinite(v):
        raise ConfigError(f"{key} must be a number")
    v = float(v)
    if low is not None and (v <= low if strict else v < low):
        raise ConfigError(f"{key} must be {'>' if strict else '>='} {low}")
    if high is not None and v > high:
        raise ConfigError(f"{key} must be <= {high}")
    return v


def parse_config(raw: dict) -> ExperimentConfig:
    if not isinstance(raw, dict):
        raise ConfigError("config must be a JSON object")
    model = raw.get("model")
    if model not in ALLOWED:
        raise ConfigError(f"model must be one of {sorted(ALLOWED)}")
    extra = set(raw) - ALLOWED[model]
    if extra:
        raise ConfigError(f"keys not valid for model {model!r}: {sorted(extra)}")
    cfg = ExperimentConfig(model)
    if model == "pde":
        cfg.boundary = BoundaryKind.NEUMANN
    if "boundary" in raw:
        try:
            cfg.boundary = BoundaryKind(raw["boundary"])
        except ValueError:
            raise ConfigError("boundary must be 'dirichlet' or 'neumann'") from None
    for key in ("N", "M"):
        if key in raw:
            setattr(cfg, key, _int(raw, key, 2))
    if "steps" in raw:
        cfg.steps = _int(raw, "steps", 0)
    if "max_steps" in raw:
        cfg.max_steps = _int(raw, "max_steps", 0)
    if "record_every" in raw:
        cfg.record_every = _int(raw, "record_every", 1)
    if "tau" in raw:
        cfg.tau = _float(raw, "tau", 0.0, strict=True)
    if "eps_stop" in raw:
        cfg.eps_stop = _float(raw, "eps_stop", 0.0, strict=True)
    if "tol" in raw:
        cfg.tol = _float(raw, "tol", 0.0)
    if "theta" in raw:
        cfg.theta = _float(raw, "theta", 0.0, 1.0, strict=True)
    if "T_final" in raw:
        cfg.T_final = _float(raw, "T_final", 0.0)
    if "T_probe" in raw:
        cfg.T_probe = _float(raw, "T_probe", 0.0, strict=True)
    if model == "heat":
        if "p" not in raw:
            raise ConfigError("heat model needs p")
        cfg.p = _float(raw, "p", 0.0, 1.0)
    if "checks" in raw:
        checks = raw["checks"]
        if not isinstance(checks, list) or any(c not in CHECKS for c in checks):
            raise ConfigError(f"checks must be a list drawn from {sorted(CHECKS)}")
        cfg.checks = list(checks)
    if "diffusivity" in raw:
        d = raw["diffusivity"]
        ok = d == "backward_forward" or (
            isinstance(d, dict) and set(d) == {"constant"} and isinstance(d["constant"], (int, float))
            and d["constant"] > 0)
        if not ok:
            raise ConfigError("diffusivity must be 'backward_forward' or {\"constant\": c > 0}")
        cfg.diffusivity = d
    if "dx_list" in raw:
        cfg.dx_list = parse_dx_list(raw["dx_list"])
    if "out" in raw:
        if not isinstance(raw["out"], str):
            raise ConfigError("out must be a path string")
        cfg.out = raw["out"]
    if "initial" not in raw:
        raise ConfigError("initial is required")
    cfg.initial = raw["initial"]
    if not isinstance(cfg.initial, dict):
        raise ConfigError("initial must be an object")
    size_key = "N" if cfg.is_lattice else "M"
    if getattr(cfg, size_key) is None:
        if cfg.initial.get("type") == "values":
            setattr(cfg, size_key, len(cfg.initial.get("values", [])) - 1)
        elif not (model == "pde" and cfg.dx_list):
            raise ConfigError(f"{size_key} is required")
    # fail early on bad initial data
    if cfg.is_lattice:
        initial_state(cfg)
    elif cfg.M is not None:
        initial_nodes(cfg, cfg.M)
    return cfg


def parse_dx_list(value) -> list:
    if isinstance(value, str):
        try:
            value = [_dx_token(s) for s in value.split(",") if s.strip()]
        except ValueError:
            raise ConfigError(f"bad dx list {value!r}") from None
    if not isinstance(value, list) or not value:
        raise ConfigError("dx_list must be a nonempty list")
    out = []
    for v in value:
        if isinstance(v, str):
            try:
                v = _dx_token(v)
            except ValueError:
                raise ConfigError(f"bad dx {v!r}") from None
        if isinstance(v, bool) or not isinstance(v, (int, float)) or not 0 < v <= 0.5:
            raise ConfigError("each dx must lie in (0, 1/2]")
        if abs(1.0 / v - round(1.0 / v)) > 1e-9 * (1.0 / v):
            raise ConfigError(f"dx = {v} is not 1/M for an integer M")
        out.append(float(v))
    return out


def _dx_token(s: str) -> float:
    s = s.strip()
    if "/" in s:
        num, den = s.split("/")
        return float(num) / float(den)
    return float(s)


def load_config(path) -> dict:
    try:
        with open(path) as fh:
            return json.load(fh)
    except OSError as exc:
        raise ConfigError(f"cannot read {path}: {exc.strerror}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None


def _profile(initial: dict, n: int) -> np.ndarray:
    """Nodal values at x_j = j/n for j = 0..n."""
    kind = initial.get("type")
    x = np.arange(n + 1) / n
    try:
        if kind == "sine":
            f = sine_profile(float(initial["amplitude"]), float(initial["offset"]), float(initial["frequency"]))
            return np.asarray(f(x), dtype=float)
        if kind == "constant":
            return np.full(n + 1, float(initial["value"]))
        if kind == "values":
            u = np.asarray(initial["values"], dtype=float)
            if u.shape != (n + 1,):
                raise ConfigError(f"values must list {n + 1} nodes")
            return u
        if kind == "random":
            rng = np.random.default_rng(initial.get("seed", 0))
            low, high = float(initial.get("low", 0.0)), float(initial.get("high", 1.0))
            if not 0.0 <= low <= high <= 1.0:
                raise ConfigError("random initial needs 0 <= low <= high <= 1")
            u = rng.uniform(low, high, n + 1)
            if initial.get("monotone", False):
                u = np.sort(u)
            return u
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, ConfigError):
            raise
        raise ConfigError(f"bad initial {initial!r}: {exc}") from None
    raise ConfigError("initial.type must be sine, constant, values or random")


def _check_range(u):
    if not np.all(np.isfinite(u)) or u.min() < -1e-12 or u.max() > 1.0 + 1e-12:
        raise ConfigError("initial data must evaluate into [0, 1]")


def initial_state(cfg: ExperimentConfig) -> LatticeState:
    u = _profile(cfg.initial, cfg.N)
    if cfg.boundary is BoundaryKind.DIRICHLET:
        if cfg.initial.get("type") == "values" and (u[0] != 0.0 or u[-1] != 0.0):
            raise ConfigError("Dirichlet values must start and end with 0")
        u[0] = u[-1] = 0.0
    _check_range(u)
    return LatticeState(np.clip(u, 0.0, 1.0), cfg.boundary, 0, cfg.tau)


def initial_nodes(cfg: ExperimentConfig, M: int) -> np.ndarray:
    u = _profile(cfg.initial, M)
    _check_range(u)
    return u


def initial_function(cfg: ExperimentConfig):
    """Sampler x -> u0(x) for the probe, which needs several resolutions."""
    kind = cfg.initial.get("type")
    if kind not in ("sine", "constant"):
        raise ConfigError("probe mode needs a sine or constant initial")
    return lambda x: _profile(cfg.initial, len(x) - 1)
