"""Internal and external cost equations plus EWMA cost calibration.

The scalar formula helpers (``*_formula``) accept floats or numpy arrays so the
decision engine can price a whole candidate pool in one pass with exactly the
same arithmetic as the per-object functions below.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Optional, Sequence

import numpy as np

from .model import ContractorProfile, CostBreakdown, EngineConfig, HardwareSpec, MarketState, Task

SECONDS_PER_HOUR = 3600.0
PRICE_FLOOR_FRACTION = 0.05


class CostDomainError(ValueError):
    """A cost equation was evaluated outside its domain."""


class InfeasibleLocal(RuntimeError):
    """The task's memory demand exceeds the local hardware."""


def _finite(*values: float) -> None:
    for v in values:
        if not math.isfinite(v):
            raise CostDomainError(f"non-finite input {v!r}")


def exec_hours(flops, peak_flops):
    """Execution time in hours for ``flops`` of work at ``peak_flops`` per second."""
    return flops / peak_flops / SECONDS_PER_HOUR


def compute_cost(task: Task, hw: HardwareSpec) -> float:
    # t_exec already carries the FLOPS/P_peak utilisation ratio; charging it once
    # keeps the result in currency rather than currency*hours.
    _finite(task.flops_required, hw.peak_flops, hw.hw_cost_per_hour)
    if hw.peak_flops <= 0:
        raise CostDomainError("peak_flops must be > 0")
    return exec_hours(task.flops_required, hw.peak_flops) * hw.hw_cost_per_hour


def memory_cost(m_model: float, m_kv_cache: float, m_activations: float,
                hw: HardwareSpec, t_exec: float) -> float:
    _finite(m_model, m_kv_cache, m_activations, t_exec)
    demand = m_model + m_kv_cache + m_activations
    if demand > hw.mem_total_bytes:
        raise InfeasibleLocal(f"memory demand {demand:.3g} B exceeds {hw.mem_total_bytes:.3g} B")
    return (demand / hw.mem_total_bytes) * t_exec * hw.mem_cost_per_hour


def energy_cost(hw: HardwareSpec, t_exec: float) -> float:
    _finite(t_exec)
    if t_exec < 0:
        raise CostDomainError("t_exec must be >= 0")
    return (hw.tdp_watts / 1000.0) * hw.utilization_factor * t_exec * hw.kwh_cost


def opportunity_cost(queue: Iterable[tuple[float, float]], t_exec: float) -> float:
    """Best value rate among queued (value, hours) pairs, times ``t_exec``."""
    best = 0.0
    for value, hours in queue:
        if hours <= 0:
            raise CostDomainError("queued task execution times must be > 0")
        best = max(best, value / hours)
    return best * t_exec


def internal_cost(task: Task, hw: HardwareSpec,
                  queue: Sequence[tuple[float, float]] = ()) -> CostBreakdown:
    t_exec = exec_hours(task.flops_required, hw.peak_flops)
    return CostBreakdown(
        compute=compute_cost(task, hw),
        memory=memory_cost(task.model_memory_bytes, task.kv_cache_bytes,
                           task.activation_bytes, hw, t_exec),
        energy=energy_cost(hw, t_exec),
        opportunity=opportunity_cost(queue, t_exec),
        depreciation=hw.depreciation_per_hour * t_exec,
    )


def local_latency_s(task: Task, hw: HardwareSpec, wait_s: float = 0.0) -> float:
    return wait_s + exec_hours(task.flops_required, hw.peak_flops) * SECONDS_PER_HOUR


# --- external cost ----------------------------------------------------------------


def price_formula(base_price, demand_sensitivity, demand, available, total, complexity):
    factor = 1.0 + demand_sensitivity * (demand - available) / total
    return np.maximum(base_price * factor * complexity, PRICE_FLOOR_FRACTION * base_price)


def dynamic_price(contractor: ContractorProfile, task: Task, market: MarketState,
                  price_multiplier: float = 1.0) -> float:
    """Supply/demand adjusted contractor price, floored at 5% of the base price.

    ``price_multiplier`` is the market's current jitter on the contractor's base
    price (1.0 when pricing volatility is off).
    """
    if market.total_supply <= 0:
        raise CostDomainError("total_supply must be > 0")
    return float(price_formula(contractor.base_price * price_multiplier,
                               contractor.demand_sensitivity, market.current_demand,
                               market.available_supply, market.total_supply,
                               task.complexity_multiplier))


def communication_formula(data_bytes, bandwidth, transfer_cost_per_byte, overhead):
    transfer_rate = transfer_cost_per_byte * bandwidth  # currency per second of transfer
    return (data_bytes / bandwidth) * transfer_rate + overhead


def communication_cost(task: Task, hw: HardwareSpec, config: EngineConfig) -> float:
    if hw.bandwidth_bytes_per_s <= 0:
        raise CostDomainError("bandwidth must be > 0")
    return float(communication_formula(task.input_size_bytes + task.output_size_bytes,
                                       hw.bandwidth_bytes_per_s, hw.transfer_cost_per_byte,
                                       config.protocol_overhead_cost))


def risk_formula(value, p_failure, p_security, p_quality, gamma_impact):
    return value * (1.0 - (1.0 - p_failure) * (1.0 - p_security) * (1.0 - p_quality)) * gamma_impact


def risk_cost(task: Task, p_failure: float, p_security: float, p_quality: float,
              gamma_impact: float = 1.0) -> float:
    for p in (p_failure, p_security, p_quality):
        if not 0.0 <= p <= 1.0:
            raise CostDomainError(f"probability {p} outside [0, 1]")
    return float(risk_formula(task.value, p_failure, p_security, p_quality, gamma_impact))


def latency_formula(flops, peak_flops, data_bytes, bandwidth, dispatch_delay_s):
    return flops / peak_flops + data_bytes / bandwidth + dispatch_delay_s


def estimated_latency_s(task: Task, contractor: ContractorProfile) -> float:
    """Contractor-side execution + transfer + dispatch delay, in seconds."""
    hw = contractor.hardware
    return float(latency_formula(task.flops_required, hw.peak_flops,
                                 task.input_size_bytes + task.output_size_bytes,
                                 hw.bandwidth_bytes_per_s, contractor.dispatch_delay_s))


def latency_penalty_formula(latency_s, max_latency_s, urgency, value):
    overshoot = np.maximum(latency_s - max_latency_s, 0.0) / max_latency_s
    return urgency * value * overshoot


def latency_penalty(task: Task, latency_s: float) -> float:
    if task.max_latency_s is None or latency_s <= task.max_latency_s:
        return 0.0
    return float(latency_penalty_formula(latency_s, task.max_latency_s, task.urgency, task.value))


@dataclass(frozen=True)
class RiskEstimates:
    """Client-side probability estimates for one contractor (from reputation)."""

    p_failure: float = 0.0
    p_security: float = 0.0
    p_quality: float = 0.0


def external_cost(task: Task, contractor: ContractorProfile, market: MarketState,
                  estimates: RiskEstimates, config: EngineConfig,
                  price_multiplier: float = 1.0) -> CostBreakdown:
    latency = estimated_latency_s(task, contractor)
    return CostBreakdown(
        price=dynamic_price(contractor, task, market, price_multiplier),
        communication=communication_cost(task, contractor.hardware, config),
        verification=config.verification_cost,
        integration=config.integration_cost,
        risk=risk_cost(task, estimates.p_failure, estimates.p_security,
                       estimates.p_quality, config.gamma_impact),
        latency_penalty=latency_penalty(task, latency),
    )


# --- calibration ------------------------------------------------------------------


@dataclass(frozen=True)
class CalibrationState:
    """EWMA cost estimate for one (executor, task_type) pair."""

    estimate: float = 0.0
    sample_count: int = 0

    def __post_init__(self) -> None:
        if self.estimate < 0:
            raise CostDomainError("calibrated estimate must be >= 0")


def ewma_update(state: CalibrationState, actual: float, lam: float = 0.2) -> CalibrationState:
    """Blend ``actual`` into the running estimate with weight ``lam``."""
    if not 0.1 <= lam <= 0.3:
        raise CostDomainError(f"ewma lambda {lam} outside [0.1, 0.3]")
    if actual < 0 or not math.isfinite(actual):
        raise CostDomainError(f"actual cost must be finite and >= 0 (got {actual})")
    return CalibrationState(lam * actual + (1.0 - lam) * state.estimate, state.sample_count + 1)


class CalibrationBook:
    """Calibration states keyed by (executor id, task_type).

    The first observation for a key seeds the estimate; later ones go through
    :func:`ewma_update`.
    """

    def __init__(self, lam: float = 0.2) -> None:
        self.lam = lam
        self.states: dict[tuple[str, str], CalibrationState] = {}

    def get(self, executor: str, task_type: str) -> Optional[CalibrationState]:
        return self.states.get((executor, task_type))

    def observe(self, executor: str, task_type: str, actual: float) -> CalibrationState:
        key = (executor, task_type)
        prev = self.states.get(key)
        if prev is None:
            new = CalibrationState(float(actual), 1)
        else:
            new = ewma_update(prev, actual, self.lam)
        self.states[key] = new
        return new
