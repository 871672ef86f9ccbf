"""Experiment configuration: defaults, named profiles, strict parsing."""
from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass, field, fields, replace
from typing import Any, Dict, List, Mapping, Optional, Tuple

from .agents import ConfigurationError
from .lob import VOLUME_LOT
from .market import ModelParams

SIGMA_RANGE = (0.0, 30.0)


@dataclass(frozen=True)
class ExperimentConfig:
    n_agents: int = 5000
    n_steps: int = 200_000
    repetitions: int = 100
    sigma1: Tuple[float, ...] = (0.0,)
    sigma2: Tuple[float, ...] = (0.0,)
    sigma_n: float = 1.0
    tau: int = 200
    tau_f: Optional[int] = None
    alpha: float = 0.1
    delta: float = 0.0005
    sigma_eps: float = 1e-4
    sigma_eps_mode: str = "std"
    p_f0: float = 300.0
    sigma_f: float = 1e-3
    n_s: float = 50.0
    cash_max: Optional[float] = None
    v_min: float = 1e-8
    min_order_volume: float = VOLUME_LOT
    base_seed: int = 0
    snapshot_every: int = 0

    def model_params(self, sigma1: float, sigma2: float) -> ModelParams:
        return ModelParams(
            n_agents=self.n_agents,
            sigma1=float(sigma1),
            sigma2=float(sigma2),
            sigma_n=self.sigma_n,
            tau=self.tau,
            tau_f=self.tau_f,
            alpha=self.alpha,
            delta=self.delta,
            sigma_eps=self.sigma_eps,
            sigma_eps_mode=self.sigma_eps_mode,
            p_f0=self.p_f0,
            sigma_f=self.sigma_f,
            n_s=self.n_s,
            cash_max=self.cash_max,
            v_min=self.v_min,
            min_order_volume=self.min_order_volume,
        )

    def to_dict(self) -> Dict[str, Any]:
        d = asdict(self)
        d["sigma1"] = list(self.sigma1)
        d["sigma2"] = list(self.sigma2)
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=True, indent=2)


PROFILES: Dict[str, Dict[str, Any]] = {
    "default": {},
    "desk": {"n_agents": 500, "n_steps": 20_000, "repetitions": 10},
}

FIELD_NAMES = tuple(f.name for f in fields(ExperimentConfig))
_INT_FIELDS = {"n_agents", "n_steps", "repetitions", "tau", "base_seed", "snapshot_every"}
_OPT_INT_FIELDS = {"tau_f"}
_OPT_FLOAT_FIELDS = {"cash_max"}
_LIST_FIELDS = {"sigma1", "sigma2"}
_STR_FIELDS = {"sigma_eps_mode"}


def _coerce(name: str, value: Any) -> Any:
    try:
        if name in _LIST_FIELDS:
            if isinstance(value, str):
                value = [v for v in value.replace(",", " ").split() if v]
            elif not isinstance(value, (list, tuple)):
                value = [value]
            return tuple(float(v) for v in value)
        if name in _STR_FIELDS:
            if not isinstance(value, str):
                raise TypeError
            return value
        if value is None or (isinstance(value, str) and value.lower() in ("none", "null", "")):
            if name in _OPT_INT_FIELDS or name in _OPT_FLOAT_FIELDS:
                return None
            raise TypeError
        if name in _INT_FIELDS or name in _OPT_INT_FIELDS:
            if isinstance(value, bool):
                raise TypeError
            if isinstance(value, float) and not value.is_integer():
                raise TypeError
            return int(value)
        if isinstance(value, bool):
            raise TypeError
        return float(value)
    except (TypeError, ValueError):
        raise ConfigurationError(f"{name}: cannot interpret {value!r}") from None


def validate(cfg: ExperimentConfig) -> ExperimentConfig:
    def bad(name: str, why: str):
        raise ConfigurationError(f"{name}={getattr(cfg, name)!r}: {why}")

    for name in ("n_agents", "n_steps", "repetitions", "tau"):
        if getattr(cfg, name) < 1:
            bad(name, "must be >= 1")
    if cfg.tau_f is not None and cfg.tau_f < 1:
        bad("tau_f", "must be >= 1 or null")
    lo, hi = SIGMA_RANGE
    for name in ("sigma1", "sigma2"):
        values = getattr(cfg, name)
        if not values:
            bad(name, "sweep list must be non-empty")
        for v in values:
            if not (lo <= v <= hi) or math.isnan(v):
                bad(name, f"values must lie in [{lo:g}, {hi:g}]")
    for name in ("sigma_n", "sigma_eps", "sigma_f", "n_s"):
        v = getattr(cfg, name)
        if not v >= 0 or math.isinf(v):
            bad(name, "must be a finite value >= 0")
    for name in ("alpha", "delta", "p_f0", "v_min", "min_order_volume"):
        v = getattr(cfg, name)
        if not v > 0 or math.isinf(v):
            bad(name, "must be a finite value > 0")
    if cfg.min_order_volume < VOLUME_LOT * (1 - 1e-12):
        bad("min_order_volume", f"must be at least one lot ({VOLUME_LOT:g})")
    if cfg.cash_max is not None and not cfg.cash_max >= 0:
        bad("cash_max", "must be >= 0 or null")
    if cfg.sigma_eps_mode not in ("std", "var"):
        bad("sigma_eps_mode", "must be 'std' or 'var'")
    if cfg.base_seed < 0:
        bad("base_seed", "must be >= 0")
    if cfg.snapshot_every < 0:
        bad("snapshot_every", "must be >= 0")
    if cfg.sigma_n == 0 and 0.0 in cfg.sigma1 and 0.0 in cfg.sigma2:
        raise ConfigurationError("sigma_n=0 with sigma1=sigma2=0 in the grid leaves agents with no strategy")
    return cfg


def from_mapping(values: Mapping[str, Any], profile: str = "default", base: Optional[ExperimentConfig] = None) -> ExperimentConfig:
    """Apply ``values`` on top of ``base`` (or the named profile)."""
    unknown = sorted(set(values) - set(FIELD_NAMES))
    if unknown:
        raise ConfigurationError(f"unknown configuration key(s): {', '.join(unknown)}")
    if base is None:
        if profile not in PROFILES:
            raise ConfigurationError(f"unknown profile {profile!r}; choose from {', '.join(PROFILES)}")
        base = replace(ExperimentConfig(), **{k: _coerce(k, v) for k, v in PROFILES[profile].items()})
    cfg = replace(base, **{k: _coerce(k, v) for k, v in values.items()})
    return validate(cfg)


def parse_config(
    text: str = "",
    overrides: Optional[Mapping[str, Any]] = None,
    profile: str = "default",
) -> ExperimentConfig:
    """Parse a JSON object (empty text means defaults), then apply ``overrides``."""
    values: Dict[str, Any] = {}
    if text.strip():
        try:
            loaded = json.loads(text)
        except json.JSONDecodeError as exc:
            raise ConfigurationError(f"config is not valid JSON: {exc}") from None
        if not isinstance(loaded, dict):
            raise ConfigurationError("config must be a JSON object")
        values.update(loaded)
    values.update(overrides or {})
    return from_mapping(values, profile)

