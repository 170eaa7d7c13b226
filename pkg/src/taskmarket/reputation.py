"""Beta-posterior reliability with temporal decay, and per-contractor risk estimates."""

from __future__ import annotations

import math
from dataclasses import dataclass, replace
from typing import Iterable

import numpy as np

from .model import ContractorProfile, Task

HOURS_PER_MONTH = 365.0 * 24.0 / 12.0

OUTCOMES = ("success", "failure", "quality_degraded", "security_incident")


@dataclass(frozen=True)
class ReputationRecord:
    contractor_id: str
    n_success: int = 0
    n_total: int = 0
    n_failure: int = 0
    last_update_time: float = 0.0
    prior: tuple[float, float] = (1.0, 1.0)
    estimated_quality_prob: float = 0.0
    estimated_security_prob: float = 0.0

    def __post_init__(self) -> None:
        if not 0 <= self.n_success <= self.n_total:
            raise ValueError("need 0 <= n_success <= n_total")
        if not 0 <= self.n_failure <= self.n_total - self.n_success:
            raise ValueError("n_failure cannot exceed the non-success count")

    @property
    def estimated_failure_prob(self) -> float:
        # Beta posterior mean of the outright-failure indicator
        a, b = self.prior
        return (b + self.n_failure) / (a + b + self.n_total)

    @property
    def success_mean(self) -> float:
        a, b = self.prior
        return (a + self.n_success) / (a + b + self.n_total)


def months_between(t0_h: float, t1_h: float) -> float:
    return (t1_h - t0_h) / HOURS_PER_MONTH


def reliability(record: ReputationRecord, now: float, decay_per_month: float = 0.1) -> float:
    """Posterior success mean damped by ``exp(-decay * months idle)``; ``now`` in hours."""
    if now < record.last_update_time:
        raise ValueError("now precedes the record's last update")
    idle = months_between(record.last_update_time, now)
    return record.success_mean * math.exp(-decay_per_month * idle)


def record_outcome(record: ReputationRecord, outcome: str, now: float,
                   lam: float = 0.2) -> ReputationRecord:
    if outcome not in OUTCOMES:
        raise ValueError(f"unknown outcome {outcome!r}")
    success = outcome == "success"
    return replace(
        record,
        n_success=record.n_success + int(success),
        n_total=record.n_total + 1,
        n_failure=record.n_failure + int(outcome == "failure"),
        last_update_time=now,
        estimated_quality_prob=lam * (outcome == "quality_degraded")
        + (1 - lam) * record.estimated_quality_prob,
        estimated_security_prob=lam * (outcome == "security_incident")
        + (1 - lam) * record.estimated_security_prob,
    )


def breach_probability(breach_probs: Iterable[float]) -> float:
    return 1.0 - float(np.prod([1.0 - p for p in breach_probs]))


def security_risk(contractor: ContractorProfile, task: Task) -> float:
    # a more secure channel lowers the risk, hence the (1 - channel_security) factor
    return (breach_probability(contractor.breach_probs) * task.data_sensitivity
            * (1.0 - contractor.channel_security))


class ReputationLedger:
    """Market-wide reputation records; the simulator is the single writer."""

    def __init__(self, contractor_ids: Iterable[str], prior: tuple[float, float] = (1.0, 1.0),
                 lam: float = 0.2, start_time: float = 0.0) -> None:
        self.lam = lam
        self.records = {cid: ReputationRecord(cid, last_update_time=start_time, prior=tuple(prior))
                        for cid in contractor_ids}

    def __getitem__(self, cid: str) -> ReputationRecord:
        return self.records[cid]

    def observe(self, cid: str, outcome: str, now: float) -> ReputationRecord:
        rec = record_outcome(self.records[cid], outcome, now, self.lam)
        self.records[cid] = rec
        return rec

    def dump(self, now: float, decay_per_month: float = 0.1) -> list[dict]:
        rows = []
        for cid in sorted(self.records):
            r = self.records[cid]
            rows.append({
                "contractor_id": cid,
                "n_success": r.n_success,
                "n_total": r.n_total,
                "n_failure": r.n_failure,
                "last_update_time_h": r.last_update_time,
                "reliability": reliability(r, now, decay_per_month),
                "estimated_failure_prob": r.estimated_failure_prob,
                "estimated_quality_prob": r.estimated_quality_prob,
                "estimated_security_prob": r.estimated_security_prob,
            })
        return rows
