"""Scenario configuration: dataclasses, YAML preset loading, overrides, validation.

A scenario document is a nested mapping. Every field is listed in
``docs/scenario_schema.md``; unknown keys are rejected so typos surface at load
time instead of silently falling back to defaults.
"""

from __future__ import annotations

import copy
import dataclasses
import math
import re
from dataclasses import dataclass, field
from importlib import resources
from pathlib import Path
from typing import Any, Mapping, Optional, Union

import yaml

from .model import ARCHETYPES, TASK_TYPES, EngineConfig, HardwareSpec, ModelError
from .model import validate as validate_engine

Range = tuple[float, float]


class _Loader(yaml.SafeLoader):
    """Safe loader that also reads ``1e9`` and ``2.5e13`` as floats."""


_Loader.add_implicit_resolver(
    "tag:yaml.org,2002:float",
    re.compile(r"""^(?:[-+]?(?:[0-9][0-9_]*)\.[0-9_]*(?:[eE][-+]?[0-9]+)?
                  |[-+]?(?:[0-9][0-9_]*)(?:[eE][-+]?[0-9]+)
                  |\.[0-9_]+(?:[eE][-+]?[0-9]+)?
                  |[-+]?\.(?:inf|Inf|INF)
                  |\.(?:nan|NaN|NAN))$""", re.X),
    list("-+0123456789."),
)


def load_yaml(text: str):
    return yaml.load(text, Loader=_Loader)


class ConfigError(ValueError):
    """A scenario or plan document failed to parse or validate."""

    def __init__(self, violations: list[str]) -> None:
        super().__init__("; ".join(violations))
        self.violations = violations


@dataclass(frozen=True)
class MarketConfig:
    capacity_band: Range = (0.6, 1.0)
    demand_fluctuation: float = 0.25
    price_volatility: float = 0.10
    demand_supply_ratio: float = 0.25
    step_hours: float = 1.0


@dataclass(frozen=True)
class ExecutionConfig:
    cost_noise_sigma: float = 0.1
    latency_noise_sigma: float = 0.1
    skill_gap_failure: float = 0.5


@dataclass(frozen=True)
class ArchetypeTemplate:
    skills: tuple[str, ...] = ()
    specialties: tuple[tuple[str, ...], ...] = ()
    optional_skills: tuple[str, ...] = ()
    optional_skill_prob: float = 0.5
    peak_flops: Range = (1e13, 1e14)
    bandwidth_bytes_per_s: Range = (1.25e8, 1.25e9)
    transfer_cost_per_byte: Range = (1e-11, 1e-10)
    base_price: Range = (1.0, 2.0)
    demand_sensitivity: Range = (0.3, 0.7)
    dispatch_delay_s: Range = (10.0, 60.0)
    failure_prob: Range = (0.02, 0.05)
    quality_prob: Range = (0.01, 0.03)
    breach_probs: tuple[Range, ...] = ((0.005, 0.02), (0.005, 0.02), (0.005, 0.02))
    channel_security: Range = (0.7, 0.95)
    capacity: float = 1.0


@dataclass(frozen=True)
class TaskTemplate:
    share: float
    skills: tuple[str, ...]
    flops_median: float = 1.0e16
    flops_sigma: float = 0.8
    value: Range = (2.0, 20.0)
    urgency: Range = (0.0, 1.0)
    data_sensitivity: Range = (0.0, 1.0)
    input_bytes: Range = (1e6, 1e8)
    output_bytes: Range = (1e5, 1e7)
    model_memory_gb: Range = (4.0, 16.0)
    kv_cache_gb: Range = (0.5, 2.0)
    activation_gb: Range = (0.5, 2.0)
    complexity: Optional[float] = None
    max_latency_s: Optional[float] = None


DEFAULT_CLIENT_HARDWARE = HardwareSpec(
    peak_flops=2.0e13, hw_cost_per_hour=2.0, mem_total_bytes=48e9, mem_cost_per_hour=0.4,
    tdp_watts=350.0, utilization_factor=0.85, kwh_cost=0.15, bandwidth_bytes_per_s=1.25e8,
    transfer_cost_per_byte=1e-11, depreciation_per_hour=0.5,
)


@dataclass(frozen=True)
class ScenarioConfig:
    name: str = "custom"
    seed: int = 0
    n_clients: int = 15
    n_contractors: int = 30
    duration_days: float = 7.0
    arrival_rate_per_hour: float = 2.5
    archetype_mix: Mapping[str, float] = field(default_factory=dict)
    market: MarketConfig = MarketConfig()
    execution: ExecutionConfig = ExecutionConfig()
    engine: EngineConfig = EngineConfig()
    embedding_noise: float = 0.3
    ontology_seed: int = 0
    client_hardware: HardwareSpec = DEFAULT_CLIENT_HARDWARE
    archetypes: Mapping[str, ArchetypeTemplate] = field(default_factory=dict)
    task_types: Mapping[str, TaskTemplate] = field(default_factory=dict)

    @property
    def duration_hours(self) -> float:
        return self.duration_days * 24.0

    @property
    def skill_tags(self) -> tuple[str, ...]:
        tags = set()
        for a in self.archetypes.values():
            tags.update(a.skills, a.optional_skills, *a.specialties)
        for t in self.task_types.values():
            tags.update(t.skills)
        return tuple(sorted(tags))


# --- parsing ------------------------------------------------------------------------


def _build(cls, data: Any, path: str, errors: list[str]):
    """Instantiate dataclass ``cls`` from a mapping, recording field-level errors."""
    if not isinstance(data, Mapping):
        errors.append(f"{path}: expected a mapping")
        return None
    known = {f.name: f for f in dataclasses.fields(cls)}
    kwargs = {}
    for key, value in data.items():
        if key not in known:
            errors.append(f"{path}.{key}: unknown field")
            continue
        kwargs[key] = _coerce(known[key].type, value, f"{path}.{key}", errors)
    try:
        return cls(**kwargs)
    except (TypeError, ModelError) as exc:
        errors.append(f"{path}: {exc}")
        return None


def _coerce(type_str: Any, value: Any, path: str, errors: list[str]) -> Any:
    t = str(type_str)
    if isinstance(value, list):
        if "tuple[tuple[str" in t:
            return tuple(tuple(item) if isinstance(item, list) else item for item in value)
        if "tuple[Range" in t:
            return tuple(tuple(_num(v, path, errors) for v in item) for item in value)
        if "Range" in t or "tuple[float" in t:
            return tuple(_num(v, path, errors) for v in value)
        return tuple(value)
    if t.startswith("Range") or t.startswith("tuple"):
        errors.append(f"{path}: expected a list")
        return value
    return value


def _num(v: Any, path: str, errors: list[str]) -> float:
    if isinstance(v, bool) or not isinstance(v, (int, float)):
        errors.append(f"{path}: expected a number (got {v!r})")
        return math.nan
    return float(v)


def parse_scenario(doc: Mapping[str, Any]) -> ScenarioConfig:
    """Build a ScenarioConfig from a plain mapping, raising ConfigError on any issue."""
    errors: list[str] = []
    if not isinstance(doc, Mapping):
        raise ConfigError(["scenario: expected a mapping at the top level"])
    doc = dict(doc)
    nested = {}
    for key, cls in (("market", MarketConfig), ("execution", ExecutionConfig),
                     ("engine", EngineConfig), ("client_hardware", HardwareSpec)):
        if key in doc:
            nested[key] = _build(cls, doc.pop(key), key, errors)
    archetypes = {}
    for name, tmpl in (doc.pop("archetypes", None) or {}).items():
        archetypes[name] = _build(ArchetypeTemplate, tmpl, f"archetypes.{name}", errors)
    task_types = {}
    for name, tmpl in (doc.pop("task_types", None) or {}).items():
        task_types[name] = _build(TaskTemplate, tmpl, f"task_types.{name}", errors)
    mix = doc.pop("archetype_mix", None) or {}
    if not isinstance(mix, Mapping):
        errors.append("archetype_mix: expected a mapping")
        mix = {}
    known = {f.name for f in dataclasses.fields(ScenarioConfig)}
    for key in list(doc):
        if key not in known:
            errors.append(f"{key}: unknown field")
            doc.pop(key)
    if errors:
        raise ConfigError(errors)
    cfg = ScenarioConfig(**doc, **nested, archetype_mix=dict(mix),
                         archetypes=archetypes, task_types=task_types)
    violations = scenario_violations(cfg)
    if violations:
        raise ConfigError(violations)
    return cfg


def scenario_violations(cfg: ScenarioConfig) -> list[str]:
    out: list[str] = []

    def check(ok: bool, msg: str) -> None:
        if not ok:
            out.append(msg)

    for name in ("n_clients", "n_contractors"):
        v = getattr(cfg, name)
        check(isinstance(v, int) and not isinstance(v, bool) and v >= 1,
              f"{name}: must be an integer >= 1 (got {v!r})")
    check(isinstance(cfg.seed, int) and 0 <= cfg.seed < 2**64, f"seed: must be a 64-bit unsigned integer")
    check(_is_num(cfg.duration_days) and cfg.duration_days >= 0,
          f"duration_days: must be >= 0 (got {cfg.duration_days!r})")
    check(_is_num(cfg.arrival_rate_per_hour) and cfg.arrival_rate_per_hour > 0,
          f"arrival_rate_per_hour: must be > 0 (got {cfg.arrival_rate_per_hour!r})")
    check(_is_num(cfg.embedding_noise) and cfg.embedding_noise >= 0, "embedding_noise: must be >= 0")

    mix = cfg.archetype_mix
    for a, frac in mix.items():
        check(a in ARCHETYPES, f"archetype_mix.{a}: unknown archetype")
        check(_is_num(frac) and 0 <= frac <= 1, f"archetype_mix.{a}: must be in [0, 1] (got {frac!r})")
    if mix and all(_is_num(v) for v in mix.values()):
        s = sum(mix.values())
        check(math.isclose(s, 1.0, abs_tol=1e-9), f"archetype_mix: fractions must sum to 1 (got {s:.6g})")
    check(bool(mix), "archetype_mix: at least one archetype is required")
    for a, frac in mix.items():
        if frac > 0:
            check(a in cfg.archetypes, f"archetypes.{a}: template missing for archetype in mix")

    m = cfg.market
    lo, hi = m.capacity_band
    check(0 <= lo <= hi <= 1, f"market.capacity_band: need 0 <= lo <= hi <= 1 (got {list(m.capacity_band)})")
    check(0 <= m.demand_fluctuation <= 1, "market.demand_fluctuation: must be in [0, 1]")
    check(0 <= m.price_volatility <= 1, "market.price_volatility: must be in [0, 1]")
    check(m.demand_supply_ratio >= 0, "market.demand_supply_ratio: must be >= 0")
    check(m.step_hours > 0, "market.step_hours: must be > 0")

    e = cfg.execution
    check(e.cost_noise_sigma >= 0, "execution.cost_noise_sigma: must be >= 0")
    check(e.latency_noise_sigma >= 0, "execution.latency_noise_sigma: must be >= 0")
    check(0 <= e.skill_gap_failure <= 1, "execution.skill_gap_failure: must be in [0, 1]")

    out.extend(f"engine.{v}" for v in validate_engine(cfg.engine))

    for name, a in cfg.archetypes.items():
        p = f"archetypes.{name}"
        check(name in ARCHETYPES, f"{p}: unknown archetype")
        for fname in ("peak_flops", "bandwidth_bytes_per_s", "transfer_cost_per_byte", "base_price"):
            lo, hi = getattr(a, fname)
            check(0 < lo <= hi, f"{p}.{fname}: need 0 < lo <= hi")
        for fname in ("failure_prob", "quality_prob", "channel_security", "demand_sensitivity"):
            lo, hi = getattr(a, fname)
            check(0 <= lo <= hi <= 1 or fname == "demand_sensitivity" and 0 <= lo <= hi,
                  f"{p}.{fname}: need 0 <= lo <= hi <= 1")
        for lo, hi in a.breach_probs:
            check(0 <= lo <= hi <= 1, f"{p}.breach_probs: need 0 <= lo <= hi <= 1")
        lo, hi = a.dispatch_delay_s
        check(0 <= lo <= hi, f"{p}.dispatch_delay_s: need 0 <= lo <= hi")
        check(a.capacity > 0, f"{p}.capacity: must be > 0")
        check(0 <= a.optional_skill_prob <= 1, f"{p}.optional_skill_prob: must be in [0, 1]")
        check(bool(a.skills) or any(a.specialties), f"{p}: needs skills or specialties")

    shares = []
    for name, t in cfg.task_types.items():
        p = f"task_types.{name}"
        check(name in TASK_TYPES, f"{p}: unknown task type")
        check(t.share >= 0, f"{p}.share: must be >= 0")
        shares.append(t.share)
        check(t.flops_median > 0 and t.flops_sigma >= 0, f"{p}: flops_median > 0 and flops_sigma >= 0")
        for fname in ("urgency", "data_sensitivity"):
            lo, hi = getattr(t, fname)
            check(0 <= lo <= hi <= 1, f"{p}.{fname}: need 0 <= lo <= hi <= 1")
        for fname in ("value", "input_bytes", "output_bytes", "model_memory_gb", "kv_cache_gb",
                      "activation_gb"):
            lo, hi = getattr(t, fname)
            check(0 <= lo <= hi, f"{p}.{fname}: need 0 <= lo <= hi")
        check(t.complexity is None or t.complexity > 0, f"{p}.complexity: must be > 0")
        check(t.max_latency_s is None or t.max_latency_s > 0, f"{p}.max_latency_s: must be > 0")
    check(bool(cfg.task_types), "task_types: at least one task type is required")
    if shares:
        check(math.isclose(sum(shares), 1.0, abs_tol=1e-9),
              f"task_types: shares must sum to 1 (got {sum(shares):.6g})")
    return out


def _is_num(v: Any) -> bool:
    return isinstance(v, (int, float)) and not isinstance(v, bool) and math.isfinite(v)


# --- documents, presets, overrides -------------------------------------------------------


def preset_names() -> list[str]:
    root = resources.files("taskmarket") / "presets"
    return sorted(p.name[:-5] for p in root.iterdir() if p.name.endswith(".yaml"))


def read_preset(name: str) -> dict:
    root = resources.files("taskmarket") / "presets"
    path = root / f"{name}.yaml"
    if not path.is_file():
        raise ConfigError([f"preset: unknown preset {name!r} (known: {', '.join(preset_names())})"])
    return load_yaml(path.read_text())


def read_document(path: Union[str, Path]) -> dict:
    p = Path(path)
    if not p.is_file():
        raise ConfigError([f"{p}: file not found"])
    try:
        doc = load_yaml(p.read_text())
    except yaml.YAMLError as exc:
        raise ConfigError([f"{p}: not valid YAML ({exc})"]) from exc
    if not isinstance(doc, dict):
        raise ConfigError([f"{p}: expected a mapping at the top level"])
    return doc


def resolve_scenario_doc(doc: Mapping[str, Any]) -> dict:
    """Expand ``base: <preset>`` so the document is self-contained."""
    doc = copy.deepcopy(dict(doc))
    base = doc.pop("base", None)
    if base is None:
        return doc
    merged = resolve_scenario_doc(read_preset(base))
    return deep_merge(merged, doc)


def deep_merge(base: dict, extra: Mapping[str, Any]) -> dict:
    out = copy.deepcopy(base)
    for k, v in extra.items():
        if isinstance(v, Mapping) and isinstance(out.get(k), dict):
            out[k] = deep_merge(out[k], v)
        else:
            out[k] = copy.deepcopy(v)
    return out


def apply_overrides(doc: Mapping[str, Any], overrides: Mapping[str, Any]) -> dict:
    """Apply dotted-key overrides such as ``{"engine.epsilon": 0.0}``."""
    out = copy.deepcopy(dict(doc))
    for dotted, value in overrides.items():
        node = out
        parts = dotted.split(".")
        for part in parts[:-1]:
            nxt = node.get(part)
            if not isinstance(nxt, dict):
                nxt = {}
                node[part] = nxt
            node = nxt
        node[parts[-1]] = value
    return out


def parse_assignment(text: str) -> tuple[str, Any]:
    """``"engine.epsilon=0.05"`` -> ``("engine.epsilon", 0.05)`` (value parsed as YAML)."""
    if "=" not in text:
        raise ConfigError([f"--set {text!r}: expected key=value"])
    key, raw = text.split("=", 1)
    return key.strip(), load_yaml(raw)


def load_scenario(source: Union[str, Path, Mapping[str, Any], None] = None, *,
                  preset: Optional[str] = None,
                  overrides: Optional[Mapping[str, Any]] = None) -> ScenarioConfig:
    if preset is not None:
        doc = read_preset(preset)
    elif isinstance(source, Mapping):
        doc = dict(source)
    elif source is not None:
        doc = read_document(source)
    else:
        doc = read_preset("default")
    doc = resolve_scenario_doc(doc)
    if overrides:
        doc = apply_overrides(doc, overrides)
    return parse_scenario(doc)


def scenario_to_doc(cfg: ScenarioConfig) -> dict:
    """Plain-data echo of a resolved scenario; ``parse_scenario`` inverts it."""

    def plain(x: Any) -> Any:
        if dataclasses.is_dataclass(x):
            return {f.name: plain(getattr(x, f.name)) for f in dataclasses.fields(x)}
        if isinstance(x, Mapping):
            return {k: plain(v) for k, v in x.items()}
        if isinstance(x, (list, tuple)):
            return [plain(v) for v in x]
        return x

    return plain(cfg)
