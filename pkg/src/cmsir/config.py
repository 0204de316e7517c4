"""JSON configuration files.

Example::

    {"beta": 1.0, "rho": 1.0,
     "degree_dist": {"type": "regular", "d": 3},
     "n": 10000, "frac_i": 0.1, "frac_r": 0.0, "seed": 42}

``degree_dist`` is either an explicit map ``{"k": p_k}``, ``{"type":
"regular", "d": 3}`` or ``{"type": "poisson", "mean": 2.5, "tail": 1e-10}``.
Instead of a distribution, ``population`` may give explicit per-degree counts
``{"S": {"3": 900}, "I": {"3": 100}, "R": {}}``.
"""
from __future__ import annotations

import json
import math
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional

from .exceptions import ConfigError
from .model import (
    DegreeDistribution,
    EpidemicRates,
    LimitProfile,
    PopulationSpec,
    limit_profile_from_distribution,
    limit_profile_from_population,
    sample_population,
    validate_population,
)

CONTROL_DEFAULTS = {
    "rel_tol": 1e-9,
    "abs_tol": 1e-12,
    "stop_eps": 1e-8,
    "tol": 1e-10,
    "dt": 0.01,
    "t_max": None,
    "verify_tol": 1e-6,
}
ENSEMBLE_KEYS = {"sizes", "replicas", "thresholds"}
THRESHOLD_KEYS = {"trend", "max_sup_median", "max_abs_z", "min_t_star_fraction", "quantities"}
TOP_KEYS = {
    "beta", "rho", "degree_dist", "population", "n", "frac_i", "frac_r",
    "infective_degrees", "seed", "s0", "controls", "ensemble", "record",
    "grid_dt", "residual_pairing",
}


@dataclass
class Config:
    rates: EpidemicRates
    seed: int = 0
    dist: Optional[DegreeDistribution] = None
    population_spec: Optional[PopulationSpec] = None
    n: Optional[int] = None
    frac_i: float = 0.0
    frac_r: float = 0.0
    infective_degrees: Optional[dict] = None
    s0: Optional[float] = None
    controls: dict = field(default_factory=lambda: dict(CONTROL_DEFAULTS))
    ensemble: dict = field(default_factory=dict)
    record: str = "all"
    grid_dt: Optional[float] = None
    residual_pairing: bool = False

    def population(self, seed=None) -> PopulationSpec:
        if self.population_spec is not None:
            return self.population_spec
        if self.n is None:
            raise ConfigError("n is required with degree_dist", "n")
        return sample_population(
            self.dist, self.n, self.frac_i, self.frac_r,
            self.seed if seed is None else seed, self.infective_degrees,
        )

    def profile(self) -> LimitProfile:
        if self.population_spec is not None:
            return limit_profile_from_population(self.population_spec)
        frac_i = 0.0 if self.infective_degrees is not None else self.frac_i
        return limit_profile_from_distribution(self.dist, frac_i, self.frac_r)


def _number(d: dict, key: str, path: str, default=None, required=False, positive=False,
            nonneg=False, integer=False):
    if key not in d:
        if required:
            raise ConfigError("missing required field", path)
        return default
    v = d[key]
    if isinstance(v, bool) or not isinstance(v, (int, float)) or not math.isfinite(v):
        raise ConfigError(f"must be a finite number, got {v!r}", path)
    if integer and int(v) != v:
        raise ConfigError(f"must be an integer, got {v!r}", path)
    if positive and v <= 0:
        raise ConfigError(f"{key} must be > 0", path)
    if nonneg and v < 0:
        raise ConfigError(f"{key} must be >= 0", path)
    return int(v) if integer else float(v)


def _check_keys(d: Any, allowed: set, path: str):
    if not isinstance(d, dict):
        raise ConfigError("must be an object", path)
    extra = sorted(set(d) - allowed)
    if extra:
        where = f"{path}.{extra[0]}" if path else extra[0]
        raise ConfigError("unknown field", where)


def _count_map(d: Any, path: str) -> dict:
    if not isinstance(d, dict):
        raise ConfigError("must be an object mapping degree to count", path)
    out = {}
    for k, c in d.items():
        try:
            k_int = int(k)
        except ValueError:
            raise ConfigError(f"degree key must be an integer, got {k!r}", f"{path}.{k}") from None
        out[k_int] = _number(d, k, f"{path}.{k}", integer=True, nonneg=True)
        if k_int < 0:
            raise ConfigError("degree must be >= 0", f"{path}.{k}")
    return out


def _parse_dist(d: Any) -> DegreeDistribution:
    path = "degree_dist"
    if not isinstance(d, dict) or not d:
        raise ConfigError("must be a non-empty object", path)
    kind = d.get("type")
    if kind == "regular":
        _check_keys(d, {"type", "d"}, path)
        return DegreeDistribution.regular(_number(d, "d", f"{path}.d", required=True, integer=True, nonneg=True))
    if kind == "poisson":
        _check_keys(d, {"type", "mean", "tail"}, path)
        mean = _number(d, "mean", f"{path}.mean", required=True, positive=True)
        tail = _number(d, "tail", f"{path}.tail", default=1e-10, positive=True)
        return DegreeDistribution.poisson(mean, tail)
    if kind is not None:
        raise ConfigError(f"unknown distribution type {kind!r}", f"{path}.type")
    probs = {}
    for k, p in d.items():
        try:
            k_int = int(k)
        except ValueError:
            raise ConfigError(f"degree key must be an integer, got {k!r}", f"{path}.{k}") from None
        probs[k_int] = _number(d, k, f"{path}.{k}", nonneg=True)
    try:
        return DegreeDistribution.from_mapping(probs)
    except ConfigError as exc:
        raise ConfigError(str(exc), path) from None


def config_from_dict(raw: dict, check: bool = True) -> Config:
    """Validate a configuration mapping and fill defaults.

    With ``check`` the hard model conditions (half-edge parity, (D7), at
    least some susceptibles) are enforced before anything is computed.
    """
    _check_keys(raw, TOP_KEYS, "")
    beta = _number(raw, "beta", "beta", required=True, positive=True)
    rho = _number(raw, "rho", "rho", required=True, nonneg=True)
    rates = EpidemicRates(beta, rho)

    has_dist, has_pop = "degree_dist" in raw, "population" in raw
    if has_dist and has_pop:
        raise ConfigError("ambiguous population: give either degree_dist or population", "population")
    if not (has_dist or has_pop):
        raise ConfigError("missing population: give degree_dist or population", "degree_dist")

    cfg = Config(rates=rates, seed=_number(raw, "seed", "seed", default=0, integer=True, nonneg=True))
    if has_pop:
        pop = raw["population"]
        _check_keys(pop, {"S", "I", "R"}, "population")
        cfg.population_spec = PopulationSpec(*(_count_map(pop.get(c, {}), f"population.{c}") for c in "SIR"))
        for key in ("n", "frac_i", "frac_r", "infective_degrees"):
            if key in raw:
                raise ConfigError("not allowed together with an explicit population", key)
    else:
        cfg.dist = _parse_dist(raw["degree_dist"])
        cfg.n = _number(raw, "n", "n", integer=True, positive=True)
        cfg.frac_i = _number(raw, "frac_i", "frac_i", default=0.0, nonneg=True)
        cfg.frac_r = _number(raw, "frac_r", "frac_r", default=0.0, nonneg=True)
        if "infective_degrees" in raw:
            if "frac_i" in raw:
                raise ConfigError("give either frac_i or infective_degrees", "infective_degrees")
            cfg.infective_degrees = _count_map(raw["infective_degrees"], "infective_degrees")
        if cfg.frac_i + cfg.frac_r >= 1:
            raise ConfigError("frac_i + frac_r must be < 1 (alpha_S > 0)", "frac_i")

    cfg.s0 = _number(raw, "s0", "s0", positive=True)
    controls = raw.get("controls", {})
    _check_keys(controls, set(CONTROL_DEFAULTS), "controls")
    for key, default in CONTROL_DEFAULTS.items():
        if key == "tol" or key == "verify_tol":
            cfg.controls[key] = _number(controls, key, f"controls.{key}", default=default, nonneg=True)
        else:
            cfg.controls[key] = _number(controls, key, f"controls.{key}", default=default, positive=True)

    ens = raw.get("ensemble", {})
    _check_keys(ens, ENSEMBLE_KEYS, "ensemble")
    if "sizes" in ens:
        sizes = ens["sizes"]
        if not isinstance(sizes, list) or not sizes:
            raise ConfigError("must be a non-empty list", "ensemble.sizes")
        cfg.ensemble["sizes"] = [
            _number({"v": s}, "v", f"ensemble.sizes[{i}]", integer=True, positive=True)
            for i, s in enumerate(sizes)
        ]
    if "replicas" in ens:
        cfg.ensemble["replicas"] = _number(ens, "replicas", "ensemble.replicas", integer=True, positive=True)
    if "thresholds" in ens:
        _check_keys(ens["thresholds"], THRESHOLD_KEYS, "ensemble.thresholds")
        cfg.ensemble["thresholds"] = dict(ens["thresholds"])

    record = raw.get("record", "all")
    if record not in ("all", "grid"):
        raise ConfigError("must be 'all' or 'grid'", "record")
    cfg.record = record
    cfg.grid_dt = _number(raw, "grid_dt", "grid_dt", positive=True)
    if record == "grid" and cfg.grid_dt is None:
        raise ConfigError("record='grid' needs grid_dt", "grid_dt")
    residual = raw.get("residual_pairing", False)
    if not isinstance(residual, bool):
        raise ConfigError("must be true or false", "residual_pairing")
    cfg.residual_pairing = residual

    if check:
        check_hard_conditions(cfg)
    return cfg


def check_hard_conditions(cfg: Config):
    """Raise ConfigError if the configuration breaks a hard model condition."""
    if cfg.population_spec is not None:
        report = validate_population(cfg.population_spec, cfg.rates)
        if not report.ok:
            cond, msg = report.violations[0]
            raise ConfigError(f"{cond}: {msg}", "population")
        if cfg.population_spec.n_s == 0:
            raise ConfigError("(D1): no susceptibles", "population")
    else:
        dist = cfg.dist
        if dist.mean <= 0:
            raise ConfigError("(D2): mean degree must be > 0", "degree_dist")
        p1 = dist.as_dict().get(1, 0.0)
        if p1 == 0 and cfg.rates.rho == 0 and cfg.frac_r == 0:
            raise ConfigError("(D7): need p_1 > 0 or rho > 0 or recovered vertices", "degree_dist")


def parse_config(path, check: bool = True) -> Config:
    """Read and validate a JSON configuration file."""
    try:
        raw = json.loads(Path(path).read_text())
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"malformed JSON: {exc}") from None
    return config_from_dict(raw, check=check)
