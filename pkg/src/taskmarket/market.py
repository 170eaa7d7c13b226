"""Market simulation primitives: population, task arrivals, market dynamics, execution."""

from __future__ import annotations

import bisect
import math
from dataclasses import dataclass, replace
from typing import Optional

import numpy as np

from .costs import SECONDS_PER_HOUR, estimated_latency_s, exec_hours
from .model import (
    ARCHETYPES,
    DEFAULT_COMPLEXITY,
    TASK_TYPES,
    ContractorProfile,
    CostBreakdown,
    HardwareSpec,
    MarketState,
    Task,
    TaskLifecycle,
    TaskState,
    pressure_signal,
)
from .reputation import security_risk
from .scenario import ArchetypeTemplate, ScenarioConfig

GB = 1e9

# generic hardware fields for contractors; only speed, bandwidth and transfer price
# enter the external cost, the rest exist so the profile is a complete HardwareSpec
_CONTRACTOR_HW_DEFAULTS = dict(hw_cost_per_hour=1.0, mem_total_bytes=80 * GB, mem_cost_per_hour=0.2,
                               tdp_watts=400.0, utilization_factor=0.85, kwh_cost=0.12,
                               depreciation_per_hour=0.3)


@dataclass(frozen=True)
class Client:
    id: str
    hardware: HardwareSpec


def skill_ontology(tags: tuple[str, ...], dim: int, seed: int = 0) -> dict[str, np.ndarray]:
    """Fixed unit vector per skill tag, standing in for learned skill embeddings."""
    rng = np.random.default_rng(seed)
    out = {}
    for tag in sorted(tags):
        v = rng.standard_normal(dim)
        out[tag] = v / np.linalg.norm(v)
    return out


def _embed(tags, ontology: dict[str, np.ndarray], noise: float, dim: int,
           rng: np.random.Generator) -> tuple[float, ...]:
    v = np.zeros(dim)
    for t in sorted(tags):
        v += ontology[t]
    n = np.linalg.norm(v)
    if n > 0:
        v = v / n
    v = v + rng.standard_normal(dim) * (noise / math.sqrt(dim))
    n = np.linalg.norm(v)
    return tuple(float(x) for x in (v / n if n > 0 else v))


def _uniform(rng: np.random.Generator, r) -> float:
    lo, hi = r
    return float(lo + (hi - lo) * rng.random())


def _loguniform(rng: np.random.Generator, r) -> float:
    lo, hi = r
    return float(math.exp(math.log(lo) + (math.log(hi) - math.log(lo)) * rng.random()))


def draw_archetypes(mix, n: int, rng: np.random.Generator) -> list[str]:
    names = [a for a in ARCHETYPES if mix.get(a, 0) > 0]
    p = np.array([mix[a] for a in names], dtype=float)
    picks = rng.choice(len(names), size=n, p=p / p.sum())
    return [names[i] for i in picks]


def make_contractor(cid: str, archetype: str, tmpl: ArchetypeTemplate, scenario: ScenarioConfig,
                    ontology: dict[str, np.ndarray], rng: np.random.Generator) -> ContractorProfile:
    skills = set(tmpl.skills)
    if tmpl.specialties:
        skills.update(tmpl.specialties[int(rng.integers(len(tmpl.specialties)))])
    for tag in tmpl.optional_skills:
        if rng.random() < tmpl.optional_skill_prob:
            skills.add(tag)
    dim = scenario.engine.embedding_dim
    hw = HardwareSpec(peak_flops=_loguniform(rng, tmpl.peak_flops),
                      bandwidth_bytes_per_s=_loguniform(rng, tmpl.bandwidth_bytes_per_s),
                      transfer_cost_per_byte=_loguniform(rng, tmpl.transfer_cost_per_byte),
                      **_CONTRACTOR_HW_DEFAULTS)
    return ContractorProfile(
        id=cid,
        archetype=archetype,
        skills=frozenset(skills),
        skill_embedding=_embed(skills, ontology, scenario.embedding_noise, dim, rng),
        hardware=hw,
        base_price=_uniform(rng, tmpl.base_price),
        demand_sensitivity=_uniform(rng, tmpl.demand_sensitivity),
        capacity_utilization=_uniform(rng, scenario.market.capacity_band),
        breach_probs=tuple(_uniform(rng, r) for r in tmpl.breach_probs),
        channel_security=_uniform(rng, tmpl.channel_security),
        true_failure_prob=_uniform(rng, tmpl.failure_prob),
        true_quality_degradation_prob=_uniform(rng, tmpl.quality_prob),
        dispatch_delay_s=_uniform(rng, tmpl.dispatch_delay_s),
    )


def generate_population(scenario: ScenarioConfig, rng: np.random.Generator
                        ) -> tuple[list[Client], list[ContractorProfile]]:
    ontology = skill_ontology(scenario.skill_tags, scenario.engine.embedding_dim,
                              scenario.ontology_seed)
    archetypes = draw_archetypes(scenario.archetype_mix, scenario.n_contractors, rng)
    contractors = [
        make_contractor(f"k{i:04d}", a, scenario.archetypes[a], scenario, ontology, rng)
        for i, a in enumerate(archetypes)
    ]
    clients = [Client(f"a{i:03d}", scenario.client_hardware) for i in range(scenario.n_clients)]
    return clients, contractors


def generate_tasks(scenario: ScenarioConfig, rng: np.random.Generator) -> list[Task]:
    """Per-client Poisson arrivals over the scenario horizon, merged in time order."""
    horizon = scenario.duration_hours
    rate = scenario.arrival_rate_per_hour
    dim = scenario.engine.embedding_dim
    ontology = skill_ontology(scenario.skill_tags, dim, scenario.ontology_seed)
    types = [t for t in TASK_TYPES if t in scenario.task_types]
    shares = np.array([scenario.task_types[t].share for t in types], dtype=float)
    shares = shares / shares.sum()
    cdf = np.cumsum(shares).tolist()

    arrivals: list[tuple[float, int]] = []
    for c in range(scenario.n_clients):
        t = 0.0
        while True:
            t += rng.exponential(1.0 / rate)
            if t >= horizon:
                break
            arrivals.append((t, c))
    arrivals.sort()

    tasks = []
    for i, (t, c) in enumerate(arrivals):
        ttype = types[min(bisect.bisect_right(cdf, rng.random()), len(types) - 1)]
        tmpl = scenario.task_types[ttype]
        complexity = tmpl.complexity if tmpl.complexity is not None else DEFAULT_COMPLEXITY[ttype]
        tasks.append(Task(
            id=f"t{i:06d}",
            task_type=ttype,
            flops_required=float(tmpl.flops_median * math.exp(tmpl.flops_sigma * rng.standard_normal())),
            input_size_bytes=_loguniform(rng, tmpl.input_bytes) if tmpl.input_bytes[0] > 0 else 0.0,
            output_size_bytes=_loguniform(rng, tmpl.output_bytes) if tmpl.output_bytes[0] > 0 else 0.0,
            value=_uniform(rng, tmpl.value),
            urgency=_uniform(rng, tmpl.urgency),
            data_sensitivity=_uniform(rng, tmpl.data_sensitivity),
            complexity_multiplier=complexity,
            requirement_embedding=_embed(tmpl.skills, ontology, scenario.embedding_noise, dim, rng),
            required_skills=frozenset(tmpl.skills),
            max_latency_s=tmpl.max_latency_s,
            model_memory_bytes=_uniform(rng, tmpl.model_memory_gb) * GB,
            kv_cache_bytes=_uniform(rng, tmpl.kv_cache_gb) * GB,
            activation_bytes=_uniform(rng, tmpl.activation_gb) * GB,
            client_id=f"a{c:03d}",
            arrival_time_h=t,
        ))
    return tasks


# --- market dynamics --------------------------------------------------------------------


def initial_market(contractors: list[ContractorProfile], scenario: ScenarioConfig) -> MarketState:
    caps = tuple(scenario.archetypes[c.archetype].capacity for c in contractors)
    util = tuple(c.capacity_utilization for c in contractors)
    total = float(sum(caps))
    available = float(sum(k * (1 - u) for k, u in zip(caps, util)))
    demand = scenario.market.demand_supply_ratio * total
    return MarketState(
        current_demand=demand, available_supply=available, total_supply=total,
        market_pressure=pressure_signal(demand, available), failure_rate=0.0,
        price_volatility=scenario.market.price_volatility,
        demand_fluctuation=scenario.market.demand_fluctuation,
        baseline_demand=demand, capacity_band=tuple(scenario.market.capacity_band),
        capacities=caps, utilization=util, price_multipliers=tuple(1.0 for _ in contractors),
    )


def step_market(market: MarketState, rng: np.random.Generator) -> MarketState:
    """Redraw demand, utilisation and price jitter around their baselines.

    Demand is the baseline times a symmetric uniform factor rather than a
    multiplicative random walk, so its long-run mean stays at the baseline.
    """
    f = market.demand_fluctuation
    demand = market.current_demand
    if f > 0:
        demand = market.baseline_demand * (1.0 + f * (2.0 * rng.random() - 1.0))
    lo, hi = market.capacity_band
    n = len(market.capacities)
    if hi > lo:
        util = tuple(float(x) for x in lo + (hi - lo) * rng.random(n))
    elif any(u != lo for u in market.utilization):
        util = tuple(lo for _ in range(n))
    else:
        util = market.utilization
    v = market.price_volatility
    mult = market.price_multipliers
    if v > 0:
        mult = tuple(float(x) for x in 1.0 + v * (2.0 * rng.random(n) - 1.0))
    total = float(sum(market.capacities)) if n else market.total_supply
    available = float(sum(k * (1.0 - u) for k, u in zip(market.capacities, util))) if n \
        else market.available_supply
    available = min(max(available, 0.0), total)
    demand = max(demand, 0.0)
    return replace(market, current_demand=demand, available_supply=available, total_supply=total,
                   market_pressure=pressure_signal(demand, available), utilization=util,
                   price_multipliers=mult)


# --- execution --------------------------------------------------------------------------


class InfeasibleExecutor(RuntimeError):
    """The chosen executor cannot run the task."""


@dataclass(frozen=True)
class Executor:
    """A priced, timed execution venue with its hidden outcome probabilities."""

    kind: str
    model_cost: float
    model_latency_s: float
    wait_s: float = 0.0
    p_failure: float = 0.0
    p_quality: float = 0.0
    p_security: float = 0.0
    contractor_id: Optional[str] = None
    feasible: bool = True


def local_executor(task: Task, hw: HardwareSpec, internal: Optional[CostBreakdown],
                   wait_s: float = 0.0) -> Executor:
    feasible = internal is not None and task.memory_demand_bytes <= hw.mem_total_bytes
    run_s = exec_hours(task.flops_required, hw.peak_flops) * SECONDS_PER_HOUR
    return Executor("local", internal.total if internal else 0.0, wait_s + run_s, wait_s=wait_s,
                    feasible=feasible)


def skill_coverage(contractor: ContractorProfile, task: Task) -> float:
    if not task.required_skills:
        return 1.0
    return len(contractor.skills & task.required_skills) / len(task.required_skills)


def contractor_executor(task: Task, contractor: ContractorProfile, quote: CostBreakdown,
                        skill_gap_failure: float = 0.0) -> Executor:
    """Outsourced execution; missing required skills raise the true failure rate."""
    gap = skill_gap_failure * (1.0 - skill_coverage(contractor, task))
    p_fail = 1.0 - (1.0 - contractor.true_failure_prob) * (1.0 - gap)
    cash = quote.price + quote.communication + quote.verification + quote.integration
    return Executor("contractor", cash, estimated_latency_s(task, contractor), p_failure=p_fail,
                    p_quality=contractor.true_quality_degradation_prob,
                    p_security=security_risk(contractor, task), contractor_id=contractor.id)


@dataclass(frozen=True)
class Outcome:
    actual_cost: float
    actual_latency_s: float
    result: str
    lifecycle: TaskLifecycle


def execute_task(task: Task, executor: Executor, rng: np.random.Generator, *,
                 cost_sigma: float = 0.1, latency_sigma: float = 0.0,
                 now_h: float = 0.0) -> Outcome:
    """Realise one execution. Always consumes one uniform and two normals from ``rng``."""
    if not executor.feasible:
        raise InfeasibleExecutor(f"{executor.kind} executor cannot run task {task.id}")
    u = rng.random()
    z = rng.standard_normal(2)
    cost = executor.model_cost * math.exp(cost_sigma * z[0])
    if executor.wait_s > 0:
        run_s = executor.model_latency_s - executor.wait_s
        latency = executor.wait_s + run_s * math.exp(latency_sigma * z[1])
    else:
        latency = executor.model_latency_s * math.exp(latency_sigma * z[1])
    pf, pq, ps = executor.p_failure, executor.p_quality, executor.p_security
    if u < pf:
        result = "failure"
    elif u < pf + pq:
        result = "quality_degraded"
    elif u < pf + pq + ps:
        result = "security_incident"
    else:
        result = "success"
    life = TaskLifecycle.start(now_h)
    life = life.transition(TaskState.WORKING, now_h + executor.wait_s / SECONDS_PER_HOUR)
    end = now_h + latency / SECONDS_PER_HOUR
    life = life.transition(TaskState.FAILED if result == "failure" else TaskState.COMPLETED, end)
    return Outcome(cost, latency, result, life)
