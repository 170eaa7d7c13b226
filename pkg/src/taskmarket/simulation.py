"""Discrete-event market run: arrivals, hourly market steps, delayed outcome reveals.

Randomness comes from one root seed split into independent streams (population,
tasks, market, decisions, execution). Every task consumes the same number of
draws from the decision and execution streams whatever the engine chooses, so
two runs that differ only in engine settings face identical populations, task
streams, market paths and outcome draws.
"""

from __future__ import annotations

import heapq
import math
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Optional

import numpy as np

from .costs import SECONDS_PER_HOUR, CalibrationBook, exec_hours
from .engine import CandidatePool, DecisionHistory, LocalContext, NoFeasibleExecutor, decide
from .market import (
    contractor_executor,
    execute_task,
    generate_population,
    generate_tasks,
    initial_market,
    local_executor,
    step_market,
)
from .model import Choice, DecisionRecord, MarketState, Task
from .reputation import ReputationLedger
from .scenario import ScenarioConfig

STREAMS = ("population", "tasks", "market", "decisions", "execution")

# event priorities at equal timestamps: reveal outcomes, then move the market, then decide
_REVEAL, _MARKET, _ARRIVAL = 0, 1, 2


def spawn_streams(seed: int) -> dict[str, np.random.Generator]:
    children = np.random.SeedSequence(seed).spawn(len(STREAMS))
    return {name: np.random.default_rng(s) for name, s in zip(STREAMS, children)}


@dataclass
class LedgerEntry:
    """Accounting row for one task; costs in currency, latencies in seconds."""

    task_id: str
    client_id: str
    task_type: str
    arrival_h: float
    choice: str
    contractor_id: Optional[str]
    exploration: bool
    forced: bool
    topsis_score: Optional[float]
    confidence: float
    counterfactual_cost: Optional[float]
    counterfactual_latency_s: Optional[float]
    estimated_cost: Optional[float]
    actual_cost: float = 0.0
    actual_latency_s: float = 0.0
    result: str = "pending"
    learning_gain: Optional[float] = None
    completed_h: Optional[float] = None

    @property
    def outsourced(self) -> bool:
        return self.choice == "OUTSOURCE"


@dataclass
class RunResult:
    scenario: ScenarioConfig
    seed: int
    ledger: list[LedgerEntry]
    decisions: list[DecisionRecord]
    reputation: list[dict]
    calibration: list[dict]
    final_market: MarketState
    n_clients: int = 0
    n_contractors: int = 0
    extra: dict = field(default_factory=dict)


@dataclass
class _LocalJob:
    start_h: float
    end_h: float
    value: float
    hours: float


class _ClientState:
    """A client's private view: its own reputation records, track record and local queue."""

    def __init__(self, hardware, contractors, market, cfg) -> None:
        self.hardware = hardware
        self.pool = CandidatePool(contractors, market, None, cfg.beta_prior)
        self.reputation = ReputationLedger(self.pool.ids, cfg.beta_prior, cfg.ewma_lambda)
        self.history = DecisionHistory(self.pool.ids)
        self.jobs: deque[_LocalJob] = deque()
        self.busy_until = 0.0

    def waiting(self, now: float) -> tuple[tuple[float, float], ...]:
        while self.jobs and self.jobs[0].start_h <= now:
            self.jobs.popleft()
        return tuple((j.value, j.hours) for j in self.jobs)


class Simulation:
    """One replication of a scenario. Call :meth:`run` once."""

    def __init__(self, scenario: ScenarioConfig, seed: Optional[int] = None,
                 keep_decisions: bool = True) -> None:
        self.scenario = scenario
        self.seed = scenario.seed if seed is None else seed
        self.keep_decisions = keep_decisions
        self.rng = spawn_streams(self.seed)
        self.clients, self.contractors = generate_population(scenario, self.rng["population"])
        self.by_id = {c.id: c for c in self.contractors}
        self.tasks = generate_tasks(scenario, self.rng["tasks"])
        self.market = initial_market(self.contractors, scenario)
        cfg = scenario.engine
        self.state = {c.id: _ClientState(c.hardware, self.contractors, self.market, cfg)
                      for c in self.clients}
        self.calibration = CalibrationBook(cfg.ewma_lambda)
        self.n_outcomes = 0
        self.n_bad_outcomes = 0

    # -- event loop ---------------------------------------------------------------

    def run(self) -> RunResult:
        horizon = self.scenario.duration_hours
        step = self.scenario.market.step_hours
        events: list = []
        seq = 0
        for task in self.tasks:
            heapq.heappush(events, (task.arrival_time_h, _ARRIVAL, seq, task))
            seq += 1
        n_steps = int(math.floor(horizon / step))
        for k in range(1, n_steps + 1):
            if k * step < horizon:
                heapq.heappush(events, (k * step, _MARKET, seq, None))
                seq += 1

        ledger: list[LedgerEntry] = []
        decisions: list[DecisionRecord] = []
        while events:
            t, kind, _, payload = heapq.heappop(events)
            if kind == _MARKET:
                self._set_market(step_market(self.market, self.rng["market"]))
            elif kind == _REVEAL:
                self._reveal(*payload, t)
            else:
                entry, record, reveal = self._handle(payload, t)
                ledger.append(entry)
                if record is not None and self.keep_decisions:
                    decisions.append(record)
                if reveal is not None:
                    heapq.heappush(events, (reveal[0], _REVEAL, seq, reveal[1:]))
                    seq += 1

        end = max([horizon] + [e.completed_h for e in ledger if e.completed_h is not None])
        cfg = self.scenario.engine
        return RunResult(
            scenario=self.scenario, seed=self.seed, ledger=ledger, decisions=decisions,
            reputation=[{"client_id": cid, **row}
                        for cid, st in self.state.items()
                        for row in st.reputation.dump(end, cfg.decay_lambda_per_month)],
            calibration=[{"executor": k[0], "task_type": k[1], "estimate": s.estimate,
                          "samples": s.sample_count}
                         for k, s in sorted(self.calibration.states.items())],
            final_market=self.market, n_clients=len(self.clients),
            n_contractors=len(self.contractors),
        )

    def _set_market(self, market: MarketState) -> None:
        self.market = market
        for st in self.state.values():
            st.pool.set_market(market)

    # -- per-task handling --------------------------------------------------------

    def _handle(self, task: Task, now: float):
        sc = self.scenario
        client = self.state[task.client_id]
        queue = client.waiting(now)
        wait_h = max(client.busy_until - now, 0.0)
        local = LocalContext(client.hardware, queue)
        try:
            rec = decide(task, client.pool, self.market, client.history, sc.engine,
                         self.rng["decisions"], local=local, now=now)
        except NoFeasibleExecutor:
            # burn the draws an execution would take so later tasks stay aligned
            self.rng["execution"].random()
            self.rng["execution"].standard_normal(2)
            entry = LedgerEntry(task.id, task.client_id, task.task_type, now, "REJECTED", None,
                                False, False, None, 0.0, None, None, None, result="rejected")
            return entry, None, None

        client.history.update_weights(rec.weights_used, sc.engine.ewma_lambda)
        internal = rec.internal_cost
        run_h = exec_hours(task.flops_required, client.hardware.peak_flops)
        cf_cost = internal.total if internal is not None else None
        cf_latency = (wait_h + run_h) * SECONDS_PER_HOUR if internal is not None else None
        entry = LedgerEntry(task.id, task.client_id, task.task_type, now,
                            rec.choice.value, rec.contractor_id, rec.exploration, rec.forced,
                            rec.topsis_score, rec.confidence, cf_cost, cf_latency, None)
        exec_rng = self.rng["execution"]

        if rec.choice is Choice.LOCAL:
            ex = local_executor(task, client.hardware, internal, wait_h * SECONDS_PER_HOUR)
            out = execute_task(task, ex, exec_rng, cost_sigma=0.0, latency_sigma=0.0, now_h=now)
            self._enqueue_local(client, task, now, run_h)
            entry.estimated_cost = cf_cost
            entry.actual_cost = out.actual_cost
            entry.actual_latency_s = out.actual_latency_s
            entry.result = out.result
            entry.completed_h = now + out.actual_latency_s / SECONDS_PER_HOUR
            self.calibration.observe("local", task.task_type, out.actual_cost)
            return entry, rec, None

        contractor = self.by_id[rec.contractor_id]
        quote = rec.chosen_external_cost
        ex = contractor_executor(task, contractor, quote, sc.execution.skill_gap_failure)
        out = execute_task(task, ex, exec_rng, cost_sigma=sc.execution.cost_noise_sigma,
                           latency_sigma=sc.execution.latency_noise_sigma, now_h=now)
        cost = out.actual_cost
        latency = out.actual_latency_s
        if out.result in ("failure", "quality_degraded") and internal is not None:
            # redo locally; the retry is charged at the decision-time internal estimate
            cost += internal.total
            retry_start = max(client.busy_until, now + latency / SECONDS_PER_HOUR)
            self._enqueue_local(client, task, retry_start, run_h)
            latency = (retry_start + run_h - now) * SECONDS_PER_HOUR
        elif out.result == "security_incident":
            cost += task.value * sc.engine.gamma_impact
        entry.estimated_cost = quote.total
        entry.actual_cost = cost
        entry.actual_latency_s = latency
        entry.result = out.result
        entry.completed_h = now + latency / SECONDS_PER_HOUR
        entry.learning_gain = abs(out.actual_cost - ex.model_cost)
        reveal_h = now + out.actual_latency_s / SECONDS_PER_HOUR
        return entry, rec, (reveal_h, task, contractor.id, out.result, out.actual_cost,
                            task.client_id)

    def _enqueue_local(self, client: _ClientState, task: Task, earliest: float,
                       run_h: float) -> None:
        start = max(client.busy_until, earliest)
        client.busy_until = start + run_h
        client.jobs.append(_LocalJob(start, start + run_h, task.value, run_h))

    def _reveal(self, task: Task, cid: str, result: str, actual_cost: float, client_id: str,
                now: float) -> None:
        client = self.state[client_id]
        client.pool.set_record(client.reputation.observe(cid, result, now))
        client.history.record(task.task_type, cid, result == "success")
        self.calibration.observe(cid, task.task_type, actual_cost)
        self.n_outcomes += 1
        self.n_bad_outcomes += result != "success"
        self._set_market(replace(self.market, failure_rate=self.n_bad_outcomes / self.n_outcomes))


def simulate(scenario: ScenarioConfig, seed: Optional[int] = None,
             keep_decisions: bool = True) -> RunResult:
    return Simulation(scenario, seed, keep_decisions).run()
