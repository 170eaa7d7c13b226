"""Run-level metrics, cross-run correlations and a windowed convergence diagnostic."""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass, fields
from typing import Hashable, Iterable, Optional, Sequence

import numpy as np


@dataclass(frozen=True)
class RunMetrics:
    cost_reduction_pct: Optional[float]
    time_savings_pct: Optional[float]
    outsourcing_rate_pct: float
    exploration_rate_pct: float
    mean_topsis_score: Optional[float]
    throughput_tasks_per_hour: float
    success_rate_pct: float
    n_decisions: int

    @classmethod
    def names(cls) -> tuple[str, ...]:
        return tuple(f.name for f in fields(cls))


def _reduction(baseline: Iterable[Optional[float]], actual: Iterable[float]) -> Optional[float]:
    base_sum = 0.0
    act_sum = 0.0
    for b, a in zip(baseline, actual):
        if b is None:
            continue
        base_sum += b
        act_sum += a
    if base_sum == 0:
        return None
    return 100.0 * (base_sum - act_sum) / base_sum


def cost_reduction(ledger) -> Optional[float]:
    """Percent saved against the decision-time local estimate; negative when outsourcing lost money.

    Tasks without a local estimate (infeasible locally, or rejected) are left out.
    """
    rows = list(ledger)
    return _reduction([r.counterfactual_cost for r in rows], [r.actual_cost for r in rows])


def time_savings(ledger) -> Optional[float]:
    rows = list(ledger)
    return _reduction([r.counterfactual_latency_s for r in rows],
                      [r.actual_latency_s for r in rows])


def pearson(x: Sequence[float], y: Sequence[float]) -> Optional[float]:
    """Sample Pearson correlation, or None when either side has no variance."""
    if len(x) != len(y):
        raise ValueError("pearson needs equal-length sequences")
    if len(x) < 2:
        return None
    xa = np.asarray(x, dtype=float)
    ya = np.asarray(y, dtype=float)
    dx = xa - xa.mean()
    dy = ya - ya.mean()
    sxx = float(dx @ dx)
    syy = float(dy @ dy)
    if sxx <= 0.0 or syy <= 0.0:
        return None
    return max(-1.0, min(1.0, float(dx @ dy) / math.sqrt(sxx * syy)))


def correlations(rows: Sequence[dict], *, agents_key: str = "n_agents",
                 outsourcing_key: str = "outsourcing_rate_pct",
                 reduction_key: str = "cost_reduction_pct") -> dict[str, Optional[float]]:
    """Run-level Pearson r for outsourcing vs cost reduction and agent count vs cost reduction."""
    if len(rows) < 3:
        raise ValueError("correlations need at least 3 runs")
    usable = [r for r in rows if r.get(reduction_key) is not None]
    cr = [r[reduction_key] for r in usable]

    def corr(key: str) -> Optional[float]:
        pairs = [(r[key], c) for r, c in zip(usable, cr) if r.get(key) is not None]
        if len(pairs) < 3:
            return None
        xs, ys = zip(*pairs)
        return pearson(xs, ys)

    return {"r_outsourcing_costreduction": corr(outsourcing_key),
            "r_agents_costreduction": corr(agents_key)}


def total_variation(p: Counter, q: Counter) -> float:
    np_, nq = sum(p.values()), sum(q.values())
    if np_ == 0 or nq == 0:
        raise ValueError("total variation needs two non-empty samples")
    keys = set(p) | set(q)
    return 0.5 * math.fsum(abs(p[k] / np_ - q[k] / nq) for k in keys)


def convergence_diagnostic(stream: Sequence[Hashable], window: int) -> list[float]:
    """TV distance between empirical choice distributions of consecutive windows.

    The stream is cut into ``len(stream) // window`` full windows; a trailing
    partial window is dropped.
    """
    if window < 1:
        raise ValueError("window must be >= 1")
    if len(stream) < 2 * window:
        raise ValueError(f"stream of {len(stream)} is shorter than two windows of {window}")
    n_win = len(stream) // window
    counts = [Counter(stream[i * window:(i + 1) * window]) for i in range(n_win)]
    return [total_variation(a, b) for a, b in zip(counts, counts[1:])]


def run_metrics(ledger, duration_hours: float) -> RunMetrics:
    rows = list(ledger)
    decided = [r for r in rows if r.choice != "REJECTED"]
    n = len(decided)
    outsourced = sum(r.choice == "OUTSOURCE" for r in decided)
    explored = sum(r.exploration for r in decided)
    scores = [r.topsis_score for r in decided if r.topsis_score is not None]
    done = [r for r in decided if r.completed_h is not None]
    ok = sum(r.result == "success" for r in done)
    return RunMetrics(
        cost_reduction_pct=cost_reduction(decided),
        time_savings_pct=time_savings(decided),
        outsourcing_rate_pct=100.0 * outsourced / n if n else 0.0,
        exploration_rate_pct=100.0 * explored / n if n else 0.0,
        mean_topsis_score=math.fsum(scores) / len(scores) if scores else None,
        throughput_tasks_per_hour=len(done) / duration_hours if duration_hours > 0 else 0.0,
        success_rate_pct=100.0 * ok / len(done) if done else 0.0,
        n_decisions=n,
    )


def mean_sd(values: Sequence[float]) -> tuple[Optional[float], Optional[float]]:
    """Mean and sample standard deviation (0 for a single value)."""
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    m = math.fsum(vals) / len(vals)
    if len(vals) == 1:
        return m, 0.0
    return m, math.sqrt(math.fsum((v - m) ** 2 for v in vals) / (len(vals) - 1))
