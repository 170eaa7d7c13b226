"""Domain types shared by the cost model, decision engine and simulator.

Everything here is an immutable value object. Mutation only happens inside the
simulator's event loop, which replaces values rather than editing them.
"""

from __future__ import annotations

import enum
import json
import math
from dataclasses import dataclass, fields, is_dataclass
from typing import Any, Iterable, Optional

import numpy as np

TASK_TYPES = (
    "financial_doc_analysis",
    "risk_assessment",
    "portfolio_optimization",
    "sentiment_analysis",
    "generic_compute",
)

ARCHETYPES = (
    "gpu_specialist",
    "cpu_optimized",
    "budget_provider",
    "edge_computing",
    "cloud_service",
    "quantum_computing",
)

# Scenario default for complexity multipliers per task type.
DEFAULT_COMPLEXITY = {
    "generic_compute": 1.0,
    "sentiment_analysis": 0.8,
    "financial_doc_analysis": 1.2,
    "risk_assessment": 1.3,
    "portfolio_optimization": 1.5,
}

SUM_RTOL = 1e-9


class ModelError(ValueError):
    """Raised when a value object is constructed with invalid fields."""


@dataclass(frozen=True)
class Task:
    id: str
    task_type: str
    flops_required: float
    input_size_bytes: float
    output_size_bytes: float
    value: float
    urgency: float
    data_sensitivity: float
    complexity_multiplier: float
    requirement_embedding: tuple[float, ...]
    required_skills: frozenset[str] = frozenset()
    max_latency_s: Optional[float] = None
    max_budget: Optional[float] = None
    model_memory_bytes: float = 0.0
    kv_cache_bytes: float = 0.0
    activation_bytes: float = 0.0
    client_id: str = ""
    arrival_time_h: float = 0.0

    def __post_init__(self) -> None:
        if self.task_type not in TASK_TYPES:
            raise ModelError(f"task_type: unknown {self.task_type!r}")
        if not self.flops_required > 0:
            raise ModelError(f"flops_required: must be > 0 (got {self.flops_required})")
        if self.value < 0:
            raise ModelError(f"value: must be >= 0 (got {self.value})")
        for name in ("urgency", "data_sensitivity"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ModelError(f"{name}: must be in [0, 1] (got {v})")
        if not self.complexity_multiplier > 0:
            raise ModelError("complexity_multiplier: must be > 0")

    @property
    def memory_demand_bytes(self) -> float:
        return self.model_memory_bytes + self.kv_cache_bytes + self.activation_bytes


@dataclass(frozen=True)
class HardwareSpec:
    peak_flops: float
    hw_cost_per_hour: float
    mem_total_bytes: float
    mem_cost_per_hour: float
    tdp_watts: float
    utilization_factor: float
    kwh_cost: float
    bandwidth_bytes_per_s: float
    transfer_cost_per_byte: float
    depreciation_per_hour: float

    def __post_init__(self) -> None:
        for f in fields(self):
            v = getattr(self, f.name)
            if f.name == "utilization_factor":
                if not 0.0 < v <= 1.0:
                    raise ModelError(f"utilization_factor: must be in (0, 1] (got {v})")
            elif not (math.isfinite(v) and v > 0):
                raise ModelError(f"{f.name}: must be > 0 (got {v})")


@dataclass(frozen=True)
class ContractorProfile:
    id: str
    archetype: str
    skills: frozenset[str]
    skill_embedding: tuple[float, ...]
    hardware: HardwareSpec
    base_price: float
    demand_sensitivity: float
    capacity_utilization: float
    breach_probs: tuple[float, ...]
    channel_security: float
    true_failure_prob: float
    true_quality_degradation_prob: float
    dispatch_delay_s: float = 0.0

    def __post_init__(self) -> None:
        if self.archetype not in ARCHETYPES:
            raise ModelError(f"archetype: unknown {self.archetype!r}")
        if not self.base_price > 0:
            raise ModelError(f"base_price: must be > 0 (got {self.base_price})")
        probs = [self.capacity_utilization, self.channel_security,
                 self.true_failure_prob, self.true_quality_degradation_prob, *self.breach_probs]
        if any(not 0.0 <= p <= 1.0 for p in probs):
            raise ModelError(f"contractor {self.id}: probabilities must lie in [0, 1]")


@dataclass(frozen=True)
class MarketState:
    current_demand: float
    available_supply: float
    total_supply: float
    market_pressure: float
    failure_rate: float = 0.0
    price_volatility: float = 0.10
    demand_fluctuation: float = 0.25
    baseline_demand: float = 0.0
    capacity_band: tuple[float, float] = (0.6, 1.0)
    # per-contractor dynamic state, aligned with the contractor list
    capacities: tuple[float, ...] = ()
    utilization: tuple[float, ...] = ()
    price_multipliers: tuple[float, ...] = ()

    def __post_init__(self) -> None:
        if not 0.0 <= self.available_supply <= self.total_supply + 1e-12:
            raise ModelError("available_supply: must lie in [0, total_supply]")
        for name in ("market_pressure", "failure_rate"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ModelError(f"{name}: must be in [0, 1] (got {v})")


def pressure_signal(demand: float, available: float) -> float:
    """Demand share of (demand + idle supply), a [0, 1] price-pressure signal."""
    denom = demand + available
    return demand / denom if denom > 0 else 0.0


_COST_FIELDS = (
    "compute", "memory", "energy", "opportunity", "depreciation",
    "price", "communication", "verification", "integration", "risk", "latency_penalty",
)


@dataclass(frozen=True)
class CostBreakdown:
    compute: float = 0.0
    memory: float = 0.0
    energy: float = 0.0
    opportunity: float = 0.0
    depreciation: float = 0.0
    price: float = 0.0
    communication: float = 0.0
    verification: float = 0.0
    integration: float = 0.0
    risk: float = 0.0
    latency_penalty: float = 0.0
    total: float = float("nan")

    def __post_init__(self) -> None:
        parts = [getattr(self, name) for name in _COST_FIELDS]
        if any(not math.isfinite(p) or p < 0 for p in parts):
            raise ModelError(f"cost components must be finite and >= 0: {parts}")
        s = math.fsum(parts)
        if math.isnan(self.total):
            object.__setattr__(self, "total", s)
        elif not math.isclose(self.total, s, rel_tol=SUM_RTOL, abs_tol=1e-12):
            raise ModelError(f"total {self.total} != sum of components {s}")

    def components(self) -> dict[str, float]:
        return {name: getattr(self, name) for name in _COST_FIELDS}


@dataclass(frozen=True)
class WeightVector:
    w_cost: float
    w_reliability: float
    w_latency: float
    w_security: float

    def as_array(self) -> np.ndarray:
        return np.array(self.as_tuple())

    def as_tuple(self) -> tuple[float, float, float, float]:
        return (self.w_cost, self.w_reliability, self.w_latency, self.w_security)

    @classmethod
    def from_array(cls, arr: Iterable[float]) -> "WeightVector":
        a = [float(x) for x in arr]
        return cls(*a)

    @classmethod
    def uniform(cls) -> "WeightVector":
        return cls(0.25, 0.25, 0.25, 0.25)


class Choice(str, enum.Enum):
    LOCAL = "LOCAL"
    OUTSOURCE = "OUTSOURCE"


@dataclass(frozen=True)
class DecisionRecord:
    task_id: str
    choice: Choice
    contractor_id: Optional[str]
    topsis_score: Optional[float]
    confidence: float
    exploration: bool
    internal_cost: Optional[CostBreakdown]
    chosen_external_cost: Optional[CostBreakdown]
    weights_used: WeightVector
    exploration_value: Optional[float] = None
    forced: bool = False
    n_eligible: int = 0

    def __post_init__(self) -> None:
        if self.exploration and (self.confidence != 0.7 or self.topsis_score != 0.5):
            raise ModelError("exploration decisions carry confidence 0.7 and score 0.5")
        if self.choice is Choice.LOCAL and (self.chosen_external_cost is not None
                                            or self.contractor_id is not None):
            raise ModelError("LOCAL decisions carry no contractor or external cost")
        if self.choice is Choice.OUTSOURCE and self.contractor_id is None:
            raise ModelError("OUTSOURCE decisions name a contractor")

    @property
    def label(self) -> str:
        return "LOCAL" if self.choice is Choice.LOCAL else f"OUTSOURCE({self.contractor_id})"


class LifecycleError(RuntimeError):
    """Illegal task lifecycle transition."""


class TaskState(str, enum.Enum):
    SUBMITTED = "submitted"
    WORKING = "working"
    INPUT_REQUIRED = "input_required"
    COMPLETED = "completed"
    FAILED = "failed"
    CANCELED = "canceled"


TERMINAL_STATES = frozenset({TaskState.COMPLETED, TaskState.FAILED, TaskState.CANCELED})

_ALLOWED = {
    TaskState.SUBMITTED: frozenset({TaskState.WORKING}),
    TaskState.WORKING: frozenset({TaskState.INPUT_REQUIRED, *TERMINAL_STATES}),
    TaskState.INPUT_REQUIRED: frozenset({TaskState.WORKING}),
}


@dataclass(frozen=True)
class TaskLifecycle:
    state: TaskState = TaskState.SUBMITTED
    history: tuple[tuple[TaskState, float], ...] = ()

    @classmethod
    def start(cls, t: float) -> "TaskLifecycle":
        return cls(TaskState.SUBMITTED, ((TaskState.SUBMITTED, t),))

    @staticmethod
    def allowed(src: TaskState, dst: TaskState) -> bool:
        return dst in _ALLOWED.get(src, frozenset())

    def transition(self, dst: TaskState | str, t: float) -> "TaskLifecycle":
        dst = TaskState(dst)
        if not self.allowed(self.state, dst):
            raise LifecycleError(f"illegal transition {self.state.value} -> {dst.value}")
        if self.history and t < self.history[-1][1]:
            raise LifecycleError("transition timestamps must be non-decreasing")
        return TaskLifecycle(dst, self.history + ((dst, t),))

    @property
    def terminal(self) -> bool:
        return self.state in TERMINAL_STATES


@dataclass(frozen=True)
class EngineConfig:
    epsilon: float = 0.1
    theta_skill: float = 0.7
    tau_threshold: float = 0.6
    rho_min: float = 0.8
    alpha_corr: float = 0.3
    beta_market: float = 0.7
    skill_weights: tuple[float, float, float] = (0.3, 0.5, 0.2)
    ewma_lambda: float = 0.2
    decay_lambda_per_month: float = 0.1
    beta_prior: tuple[float, float] = (1.0, 1.0)
    z_alpha_half: float = 1.96
    learning_value_weight: float = 0.0
    gamma_impact: float = 1.0
    protocol_overhead_cost: float = 0.05
    verification_cost: float = 0.05
    integration_cost: float = 0.05
    embedding_dim: int = 16


def validate(config: EngineConfig) -> list[str]:
    """Return one message per violated bound; an empty list means valid."""
    out: list[str] = []

    def unit(name: str) -> None:
        v = getattr(config, name)
        if not (isinstance(v, (int, float)) and 0.0 <= v <= 1.0):
            out.append(f"{name}: must be in [0, 1] (got {v})")

    for name in ("epsilon", "theta_skill", "tau_threshold", "rho_min", "beta_market"):
        unit(name)
    if not 0.1 <= config.ewma_lambda <= 0.3:
        out.append(f"ewma_lambda: must be in [0.1, 0.3] (got {config.ewma_lambda})")
    sw = config.skill_weights
    if len(sw) != 3 or any(w < 0 for w in sw):
        out.append(f"skill_weights: need three non-negative weights (got {sw})")
    elif not math.isclose(sum(sw), 1.0, abs_tol=1e-9):
        out.append(f"skill_weights: must sum to 1 (got {sum(sw):.6g})")
    if config.alpha_corr < 0:
        out.append(f"alpha_corr: must be >= 0 (got {config.alpha_corr})")
    if config.decay_lambda_per_month < 0:
        out.append("decay_lambda_per_month: must be >= 0")
    a, b = config.beta_prior
    if not (a > 0 and b > 0):
        out.append(f"beta_prior: both parameters must be > 0 (got {config.beta_prior})")
    if config.z_alpha_half <= 0:
        out.append("z_alpha_half: must be > 0")
    for name in ("learning_value_weight", "gamma_impact", "protocol_overhead_cost",
                 "verification_cost", "integration_cost"):
        if getattr(config, name) < 0:
            out.append(f"{name}: must be >= 0 (got {getattr(config, name)})")
    if not (isinstance(config.embedding_dim, int) and config.embedding_dim >= 1):
        out.append(f"embedding_dim: must be a positive integer (got {config.embedding_dim})")
    return out


# --- line-oriented serialization -------------------------------------------------


def to_plain(obj: Any) -> Any:
    """Convert value objects to JSON-ready builtins with a stable layout."""
    if isinstance(obj, enum.Enum):
        return obj.value
    if is_dataclass(obj) and not isinstance(obj, type):
        if isinstance(obj, TaskLifecycle):
            return {"state": obj.state.value,
                    "history": [[s.value, t] for s, t in obj.history]}
        return {f.name: to_plain(getattr(obj, f.name)) for f in fields(obj)}
    if isinstance(obj, (frozenset, set)):
        return sorted(to_plain(x) for x in obj)
    if isinstance(obj, (list, tuple)):
        return [to_plain(x) for x in obj]
    if isinstance(obj, dict):
        return {str(k): to_plain(v) for k, v in obj.items()}
    if isinstance(obj, np.generic):
        return obj.item()
    if isinstance(obj, float) and not math.isfinite(obj):
        return None
    return obj


def dumps_line(obj: Any) -> str:
    return json.dumps(to_plain(obj), sort_keys=True, separators=(",", ":"))

