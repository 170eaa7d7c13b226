"""Outsourcing decision engine: skill gating, dynamic weights, TOPSIS, and exploration.

``decide`` follows the five-phase flow (cost analysis, weights, TOPSIS,
reservation-price check, confidence gate) with epsilon-greedy exploration as a
preprocessing step. Candidate pools are evaluated column-wise with numpy; the
per-contractor helpers (``skill_compatibility``, ``external_cost`` ...) compute
the same quantities one contractor at a time and double as test oracles.
"""

from __future__ import annotations

import math
from operator import mul
from dataclasses import dataclass
from typing import Mapping, Optional, Sequence, Union

import numpy as np

from . import costs
from .model import (
    TASK_TYPES,
    Choice,
    ContractorProfile,
    CostBreakdown,
    DecisionRecord,
    EngineConfig,
    HardwareSpec,
    MarketState,
    Task,
    WeightVector,
)
from .reputation import HOURS_PER_MONTH, ReputationRecord, breach_probability

CRITERIA = ("external_cost", "reliability", "latency", "security_risk")
# reliability is the only higher-is-better column
BENEFIT = np.array([False, True, False, False])

_TYPE_INDEX = {t: i for i, t in enumerate(TASK_TYPES)}


class NoFeasibleExecutor(RuntimeError):
    """The task cannot run locally and no contractor qualifies for it."""


# --- history ----------------------------------------------------------------------


class DecisionHistory:
    """One client's outsourcing track record and its running criteria weights.

    Outcome counts are kept per (task_type, contractor) and per contractor. Queries
    for a pair the client has never tried back off to the contractor-level record
    across all task types.
    """

    def __init__(self, contractor_ids: Sequence[str] = ()) -> None:
        self.ids: tuple[str, ...] = tuple(contractor_ids)
        self.index = {cid: i for i, cid in enumerate(self.ids)}
        n = len(self.ids)
        self.pair_n = np.zeros((len(TASK_TYPES), n))
        self.pair_s = np.zeros((len(TASK_TYPES), n))
        self.con_n = np.zeros(n)
        self.con_s = np.zeros(n)
        self.weights = np.full(4, 0.25)
        self.n_weight_updates = 0
        self._perf: dict[int, np.ndarray] = {}

    def _slot(self, cid: str) -> int:
        idx = self.index.get(cid)
        if idx is None:
            idx = len(self.ids)
            self.ids = self.ids + (cid,)
            self.index[cid] = idx
            self.pair_n = np.hstack([self.pair_n, np.zeros((len(TASK_TYPES), 1))])
            self.pair_s = np.hstack([self.pair_s, np.zeros((len(TASK_TYPES), 1))])
            self.con_n = np.append(self.con_n, 0.0)
            self.con_s = np.append(self.con_s, 0.0)
        return idx

    def record(self, task_type: str, contractor_id: str, success: bool) -> None:
        k = self._slot(contractor_id)
        self._perf.clear()
        t = _TYPE_INDEX[task_type]
        self.pair_n[t, k] += 1
        self.pair_s[t, k] += bool(success)
        self.con_n[k] += 1
        self.con_s[k] += bool(success)

    def stats(self, task_type: str, contractor_id: str) -> tuple[int, float]:
        """(n, success proportion) for the pair, or for the contractor as fallback."""
        k = self.index.get(contractor_id)
        if k is None:
            return 0, 0.0
        t = _TYPE_INDEX[task_type]
        n, s = self.pair_n[t, k], self.pair_s[t, k]
        if n == 0:
            n, s = self.con_n[k], self.con_s[k]
        return int(n), (s / n if n else 0.0)

    def performance_vector(self, task_type: str, ids: Sequence[str]) -> np.ndarray:
        t = _TYPE_INDEX[task_type]
        if ids is self.ids or tuple(ids) == self.ids:
            cached = self._perf.get(t)
            if cached is not None:
                return cached
            n_pair, s_pair = self.pair_n[t], self.pair_s[t]
            n_con, s_con = self.con_n, self.con_s
        elif not self.ids:
            return np.full(len(ids), 0.5)
        else:
            idx = np.array([self.index.get(c, -1) for c in ids], dtype=int)
            known = idx >= 0
            safe = np.where(known, idx, 0)
            n_pair = np.where(known, self.pair_n[t, safe], 0.0)
            s_pair = np.where(known, self.pair_s[t, safe], 0.0)
            n_con = np.where(known, self.con_n[safe], 0.0)
            s_con = np.where(known, self.con_s[safe], 0.0)
        use_pair = n_pair > 0
        n = np.where(use_pair, n_pair, n_con)
        s = np.where(use_pair, s_pair, s_con)
        perf = np.divide(s, n, out=np.full(len(n), 0.5), where=n > 0)
        if tuple(ids) == self.ids:
            perf.setflags(write=False)
            self._perf[t] = perf
        return perf

    def update_weights(self, used: WeightVector, lam: float) -> None:
        self.weights = lam * used.as_array() + (1.0 - lam) * self.weights
        self.n_weight_updates += 1


# --- per-contractor criteria ------------------------------------------------------


def jaccard(a: frozenset, b: frozenset) -> float:
    union = len(a | b)
    return len(a & b) / union if union else 0.0


def cosine(u: Sequence[float], v: Sequence[float]) -> float:
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    if u.shape != v.shape:
        raise ValueError(f"embedding dimension mismatch: {u.shape} vs {v.shape}")
    nu, nv = np.linalg.norm(u), np.linalg.norm(v)
    if nu == 0 or nv == 0:
        return 0.0
    return float(u @ v / (nu * nv))


def skill_compatibility(contractor: ContractorProfile, task: Task,
                        history: Optional[DecisionHistory] = None,
                        weights: tuple[float, float, float] = (0.3, 0.5, 0.2)) -> float:
    a, b, g = weights
    perf = 0.5
    if history is not None:
        perf = float(history.performance_vector(task.task_type, [contractor.id])[0])
    return (a * jaccard(contractor.skills, task.required_skills)
            + b * max(0.0, cosine(contractor.skill_embedding, task.requirement_embedding))
            + g * perf)


def dynamic_weights(market: MarketState, task: Task,
                    history: Optional[DecisionHistory] = None,
                    beta: float = 0.7) -> WeightVector:
    signals = np.array([market.market_pressure, market.failure_rate,
                        task.urgency, task.data_sensitivity])
    hist = history.weights if history is not None else np.full(4, 0.25)
    raw = beta * signals + (1.0 - beta) * hist
    total = raw.sum()
    if total <= 0:
        return WeightVector.uniform()
    return WeightVector.from_array(raw / total)


def _pearson_matrix(x: np.ndarray) -> np.ndarray:
    """Column-pairwise Pearson correlation; undefined entries are 0."""
    m = x.shape[1]
    if x.shape[0] < 2:
        return np.zeros((m, m))
    c = x - np.add.reduce(x, axis=0) / x.shape[0]
    cov = c.T @ c
    norms = np.sqrt(np.diagonal(cov))
    ok = norms > 1e-12 * (1.0 + np.maximum.reduce(np.abs(x), axis=0))
    if ok.all():
        rho = cov / np.outer(norms, norms)
    else:
        safe = np.where(ok, norms, 1.0)
        rho = cov / np.outer(safe, safe)
        rho[~ok, :] = 0.0
        rho[:, ~ok] = 0.0
    return np.clip(rho, -1.0, 1.0, out=rho)


def correlation_adjust(weights: WeightVector, matrix, alpha: float = 0.3) -> WeightVector:
    x = _as_matrix(matrix)
    rho = np.abs(_pearson_matrix(x))
    # row sums of |rho| without the diagonal
    penalty = np.add.reduce(rho, axis=1) - np.diagonal(rho)
    w = weights.as_array()
    adjusted = w * np.maximum(0.0, 1.0 - alpha * penalty)
    total = adjusted.sum()
    if total <= 0:
        return WeightVector(*(w / w.sum()).tolist())
    return WeightVector(*(adjusted / total).tolist())


@dataclass(frozen=True)
class CriteriaMatrix:
    """Rows are candidates, columns follow :data:`CRITERIA`."""

    values: np.ndarray
    ids: tuple[str, ...]

    def __post_init__(self) -> None:
        if self.values.ndim != 2 or self.values.shape[1] != len(CRITERIA):
            raise ValueError("criteria matrix must be n x 4")
        if self.values.shape[0] != len(self.ids):
            raise ValueError("one id per row")
        if not np.all(np.isfinite(self.values)):
            raise ValueError("criteria entries must be finite")


def _as_matrix(matrix) -> np.ndarray:
    if isinstance(matrix, CriteriaMatrix):
        return matrix.values
    return np.asarray(matrix, dtype=float)


def topsis(matrix, weights: Union[WeightVector, Sequence[float]],
           benefit: np.ndarray = BENEFIT) -> np.ndarray:
    """Relative closeness to the ideal point for every row.

    Columns are vector-normalised (an all-zero column stays zero). Rows that
    sit at both the ideal and the anti-ideal point score 0.5.
    """
    x = _as_matrix(matrix)
    if x.ndim != 2 or x.shape[0] == 0:
        raise ValueError("TOPSIS needs a non-empty 2-D matrix")
    w = weights.as_array() if isinstance(weights, WeightVector) else np.asarray(weights, float)
    norms = np.sqrt(np.einsum("ij,ij->j", x, x))
    if norms.all():
        v = x * (w / norms)
    else:
        v = np.divide(x, norms, out=np.zeros_like(x), where=norms > 0) * w
    vmax, vmin = v.max(axis=0), v.min(axis=0)
    ideal = np.where(benefit, vmax, vmin)
    anti = np.where(benefit, vmin, vmax)
    dp = v - ideal
    dn = v - anti
    d_pos = np.sqrt(np.einsum("ij,ij->i", dp, dp))
    d_neg = np.sqrt(np.einsum("ij,ij->i", dn, dn))
    denom = d_pos + d_neg
    if denom.all():
        return d_neg / denom
    return np.divide(d_neg, denom, out=np.full(len(denom), 0.5), where=denom > 0)


_BENEFIT_FLAGS = tuple(bool(b) for b in BENEFIT)


def rank_candidates(columns: Sequence[Sequence[float]], weights: Sequence[float],
                    alpha: float) -> tuple[list[float], list[float]]:
    """Correlation-adjusted weights and TOPSIS closeness in one pass.

    Same arithmetic as :func:`correlation_adjust` followed by :func:`topsis`,
    written with plain floats: decision matrices are a handful of rows, where
    per-call numpy overhead dominates.
    """
    m = len(columns)
    n = len(columns[0])
    penalty = [0.0] * m
    if n >= 2:
        centred = []
        norms = []
        ok = []
        for col in columns:
            mu = math.fsum(col) / n
            c = [x - mu for x in col]
            norm = math.sqrt(sum(map(mul, c, c)))
            centred.append(c)
            norms.append(norm)
            ok.append(norm > 1e-12 * (1.0 + max(max(col), -min(col))))
        for i in range(m):
            if not ok[i]:
                continue
            for j in range(i + 1, m):
                if not ok[j]:
                    continue
                r = sum(map(mul, centred[i], centred[j])) / (norms[i] * norms[j])
                r = abs(min(1.0, max(-1.0, r)))
                penalty[i] += r
                penalty[j] += r
    adjusted = [w * max(0.0, 1.0 - alpha * p) for w, p in zip(weights, penalty)]
    total = sum(adjusted)
    if total <= 0:
        total = sum(weights)
        adjusted = list(weights)
    adjusted = [a / total for a in adjusted]

    d_pos = [0.0] * n
    d_neg = [0.0] * n
    for j, col in enumerate(columns):
        norm = math.sqrt(sum(map(mul, col, col)))
        scale = adjusted[j] / norm if norm > 0 else 0.0
        v = [x * scale for x in col]
        hi, lo = max(v), min(v)
        ideal, anti = (hi, lo) if _BENEFIT_FLAGS[j] else (lo, hi)
        d_pos = [d + (x - ideal) ** 2 for d, x in zip(d_pos, v)]
        d_neg = [d + (x - anti) ** 2 for d, x in zip(d_neg, v)]
    scores = []
    for dp, dn in zip(d_pos, d_neg):
        dp, dn = math.sqrt(dp), math.sqrt(dn)
        scores.append(dn / (dp + dn) if dp + dn > 0 else 0.5)
    return adjusted, scores


def nash_reservation_check(internal: CostBreakdown, best_external: CostBreakdown) -> bool:
    """Accept outsourcing only strictly below the client's reservation price."""
    return best_external.total < internal.total


def decision_confidence(history: Optional[DecisionHistory], task: Task, candidate,
                        z_alpha_half: float = 1.96) -> float:
    if history is None:
        return 0.5
    cid = getattr(candidate, "id", candidate)
    n, p = history.stats(task.task_type, cid)
    if n == 0:
        return 0.5
    if p <= 0.0 or p >= 1.0:
        return 1.0
    return min(1.0, max(0.0, 1.0 - z_alpha_half * math.sqrt(p * (1.0 - p)) / math.sqrt(n)))


# --- candidate pool ---------------------------------------------------------------


class CandidatePool:
    """Column-oriented view of a contractor population for fast evaluation.

    The simulator keeps one pool per run and refreshes its market and reputation
    columns in place as events arrive; ``decide`` only reads it.
    """

    def __init__(self, contractors: Sequence[ContractorProfile], market: MarketState,
                 reputation: Optional[Mapping[str, ReputationRecord]] = None,
                 prior: tuple[float, float] = (1.0, 1.0)) -> None:
        contractors = sorted(contractors, key=lambda c: c.id)
        self.contractors = tuple(contractors)
        self.ids = tuple(c.id for c in contractors)
        self.index = {cid: i for i, cid in enumerate(self.ids)}
        n = len(contractors)
        tags = sorted({t for c in contractors for t in c.skills})
        self.tag_index = {t: i for i, t in enumerate(tags)}
        self._explorable: dict[frozenset, np.ndarray] = {}
        self._jaccard: dict[frozenset, np.ndarray] = {}
        self.skill_matrix = np.zeros((n, len(tags)))
        for i, c in enumerate(contractors):
            for t in c.skills:
                self.skill_matrix[i, self.tag_index[t]] = 1.0
        self.skill_counts = self.skill_matrix.sum(axis=1)
        dims = {len(c.skill_embedding) for c in contractors}
        if len(dims) > 1:
            raise ValueError(f"contractor embedding dimensions differ: {sorted(dims)}")
        self.dim = dims.pop() if dims else 0
        emb = np.array([c.skill_embedding for c in contractors], dtype=float).reshape(n, self.dim)
        norms = np.linalg.norm(emb, axis=1, keepdims=True) if n else np.zeros((0, 1))
        self.emb_unit = np.divide(emb, norms, out=np.zeros_like(emb), where=norms > 0)
        self.base_price = np.array([c.base_price for c in contractors], dtype=float)
        self.demand_sensitivity = np.array([c.demand_sensitivity for c in contractors], dtype=float)
        self.peak = np.array([c.hardware.peak_flops for c in contractors], dtype=float)
        self.bandwidth = np.array([c.hardware.bandwidth_bytes_per_s for c in contractors], dtype=float)
        self.transfer_cost = np.array([c.hardware.transfer_cost_per_byte for c in contractors],
                                      dtype=float)
        self.dispatch = np.array([c.dispatch_delay_s for c in contractors], dtype=float)
        self.breach = np.array([breach_probability(c.breach_probs) * (1.0 - c.channel_security)
                                for c in contractors], dtype=float)
        a, b = prior
        self.prior = (float(a), float(b))
        self.rel_num = np.full(n, float(a))
        self.rel_den = np.full(n, float(a + b))
        self.last_update = np.zeros(n)
        self.p_fail = np.full(n, b / (a + b))
        self.p_quality = np.zeros(n)
        self.p_security = np.zeros(n)
        self.p_clean = (1.0 - self.p_fail) * (1.0 - self.p_security) * (1.0 - self.p_quality)
        for rec in (reputation or {}).values():
            if rec.contractor_id in self.index:
                self.set_record(rec)
        self.set_market(market)

    def __len__(self) -> int:
        return len(self.ids)

    def explorable(self, task: Task) -> np.ndarray:
        """Indices sharing at least one required skill with ``task``; everyone if none do."""
        key = task.required_skills
        hit = self._explorable.get(key)
        if hit is None:
            cols = [self.tag_index[t] for t in key if t in self.tag_index]
            hit = np.flatnonzero(self.skill_matrix[:, cols].sum(axis=1) > 0) if cols else None
            if hit is None or len(hit) == 0:
                hit = np.arange(len(self.ids))
            self._explorable[key] = hit
        return hit

    def set_market(self, market: MarketState) -> None:
        old = getattr(self, "market", None)
        self.market = market
        if (old is not None and old.price_multipliers is market.price_multipliers
                and old.current_demand == market.current_demand
                and old.available_supply == market.available_supply
                and old.total_supply == market.total_supply):
            return
        n = len(self.ids)
        mult = market.price_multipliers
        self.price_mult = np.asarray(mult, dtype=float) if len(mult) == n else np.ones(n)
        if market.total_supply > 0:
            base = self.base_price * self.price_mult
            factor = 1.0 + (self.demand_sensitivity
                            * (market.current_demand - market.available_supply)
                            / market.total_supply)
            self._price_raw = base * factor
            self._price_floor = costs.PRICE_FLOOR_FRACTION * base

    def set_record(self, rec: ReputationRecord) -> None:
        i = self.index[rec.contractor_id]
        a, b = rec.prior
        self.rel_num[i] = a + rec.n_success
        self.rel_den[i] = a + b + rec.n_total
        self.last_update[i] = rec.last_update_time
        self.p_fail[i] = rec.estimated_failure_prob
        self.p_quality[i] = rec.estimated_quality_prob
        self.p_security[i] = rec.estimated_security_prob
        self.p_clean[i] = ((1.0 - self.p_fail[i]) * (1.0 - self.p_security[i])
                           * (1.0 - self.p_quality[i]))

    # columns -----------------------------------------------------------------

    def compatibility(self, task: Task, history: Optional[DecisionHistory],
                      weights: tuple[float, float, float]) -> np.ndarray:
        if len(task.requirement_embedding) != self.dim and len(self.ids):
            raise ValueError(f"task embedding has dimension {len(task.requirement_embedding)}, "
                             f"pool uses {self.dim}")
        jac = self._jaccard.get(task.required_skills)
        if jac is None:
            jac = self._jaccard[task.required_skills] = self._jaccard_column(task.required_skills)
        r = np.asarray(task.requirement_embedding, dtype=float)
        rn = np.linalg.norm(r)
        cos = self.emb_unit @ (r / rn) if rn > 0 else np.zeros(len(self.ids))
        if history is None:
            perf = np.full(len(self.ids), 0.5)
        else:
            perf = history.performance_vector(task.task_type, self.ids)
        a, b, g = weights
        return a * jac + b * np.maximum(cos, 0.0) + g * perf

    def _jaccard_column(self, required: frozenset) -> np.ndarray:
        req = np.zeros(self.skill_matrix.shape[1])
        for t in required:
            j = self.tag_index.get(t)
            if j is not None:
                req[j] = 1.0
        inter = self.skill_matrix @ req
        union = self.skill_counts + len(required) - inter
        return np.divide(inter, union, out=np.zeros_like(inter), where=union > 0)

    def latency(self, task: Task) -> np.ndarray:
        return costs.latency_formula(task.flops_required, self.peak,
                                     task.input_size_bytes + task.output_size_bytes,
                                     self.bandwidth, self.dispatch)

    def external_components(self, task: Task, config: EngineConfig,
                            idx: Optional[np.ndarray] = None) -> dict[str, np.ndarray]:
        sel = slice(None) if idx is None else idx
        m = self.market
        if m.total_supply <= 0:
            raise costs.CostDomainError("total_supply must be > 0")
        # same arithmetic as costs.price_formula / risk_formula, with the
        # market- and reputation-dependent factors cached per update
        price = np.maximum(self._price_raw[sel] * task.complexity_multiplier,
                           self._price_floor[sel])
        data = task.input_size_bytes + task.output_size_bytes
        comm = costs.communication_formula(data, self.bandwidth[sel], self.transfer_cost[sel],
                                           config.protocol_overhead_cost)
        risk = task.value * (1.0 - self.p_clean[sel]) * config.gamma_impact
        latency = costs.latency_formula(task.flops_required, self.peak[sel], data,
                                        self.bandwidth[sel], self.dispatch[sel])
        if task.max_latency_s is None:
            penalty = np.zeros_like(latency)
        else:
            penalty = costs.latency_penalty_formula(latency, task.max_latency_s,
                                                    task.urgency, task.value)
        return {"price": price, "communication": comm, "risk": risk,
                "latency_penalty": penalty, "latency": latency}

    def external_breakdown(self, task: Task, config: EngineConfig, i: int) -> CostBreakdown:
        comp = self.external_components(task, config, np.array([i]))
        return CostBreakdown(price=float(comp["price"][0]),
                             communication=float(comp["communication"][0]),
                             verification=config.verification_cost,
                             integration=config.integration_cost,
                             risk=float(comp["risk"][0]),
                             latency_penalty=float(comp["latency_penalty"][0]))

    def reliability(self, now: float, decay_per_month: float,
                    idx: Optional[np.ndarray] = None) -> np.ndarray:
        sel = slice(None) if idx is None else idx
        idle = (now - self.last_update[sel]) / HOURS_PER_MONTH
        return self.rel_num[sel] / self.rel_den[sel] * np.exp(-decay_per_month * idle)

    def security(self, task: Task, idx: Optional[np.ndarray] = None) -> np.ndarray:
        sel = slice(None) if idx is None else idx
        return self.breach[sel] * task.data_sensitivity


def _external_totals(comp: dict[str, np.ndarray], config: EngineConfig) -> np.ndarray:
    return (comp["price"] + comp["communication"] + config.verification_cost
            + config.integration_cost + comp["risk"] + comp["latency_penalty"])


def build_criteria(pool: CandidatePool, task: Task, config: EngineConfig, now: float,
                   idx: np.ndarray, comp: Optional[dict[str, np.ndarray]] = None
                   ) -> CriteriaMatrix:
    if comp is None:
        comp = pool.external_components(task, config, idx)
    values = np.column_stack([
        _external_totals(comp, config),
        pool.reliability(now, config.decay_lambda_per_month, idx),
        comp["latency"],
        pool.security(task, idx),
    ])
    return CriteriaMatrix(values, tuple(pool.ids[i] for i in idx))


# --- the decision -----------------------------------------------------------------


@dataclass(frozen=True)
class LocalContext:
    """What the client knows about its own executor when deciding."""

    hardware: HardwareSpec
    queue: tuple[tuple[float, float], ...] = ()


def decide(task: Task, candidates: Union[CandidatePool, Sequence[ContractorProfile]],
           market: MarketState, history: Optional[DecisionHistory], config: EngineConfig,
           rng: np.random.Generator, *, local: LocalContext, now: float = 0.0,
           reputation: Optional[Mapping[str, ReputationRecord]] = None) -> DecisionRecord:
    """Decide between local execution and outsourcing ``task``.

    Each call draws exactly two uniforms from ``rng`` (exploration coin, then
    exploration pick) whether or not they are used, so paired runs that differ
    only in epsilon see the same random stream.

    Raises :class:`NoFeasibleExecutor` when the task does not fit the local
    hardware and no contractor passes the skill threshold.
    """
    if isinstance(candidates, CandidatePool):
        pool = candidates
    else:
        pool = CandidatePool(candidates, market, reputation, config.beta_prior)

    try:
        internal: Optional[CostBreakdown] = costs.internal_cost(task, local.hardware, local.queue)
    except costs.InfeasibleLocal:
        internal = None

    u_explore, u_pick = rng.random(2)
    n = len(pool)
    weights = dynamic_weights(market, task, history, config.beta_market)

    if n and u_explore < config.epsilon:
        # safety screen: skip contractors sharing no required skill at all
        suitable = pool.explorable(task)
        k = int(suitable[min(int(u_pick * len(suitable)), len(suitable) - 1)])
        ext = pool.external_breakdown(task, config, k)
        return DecisionRecord(
            task_id=task.id, choice=Choice.OUTSOURCE, contractor_id=pool.ids[k],
            topsis_score=0.5, confidence=0.7, exploration=True,
            internal_cost=internal, chosen_external_cost=ext, weights_used=weights,
            exploration_value=ext.total, forced=internal is None,
        )

    compat = pool.compatibility(task, history, config.skill_weights) if n else np.zeros(0)
    eligible = np.flatnonzero(compat >= config.theta_skill)
    comp = pool.external_components(task, config, eligible) if len(eligible) else {}
    if len(eligible) and task.max_budget is not None:
        keep = _external_totals(comp, config) <= task.max_budget
        eligible = eligible[keep]
        comp = {k: v[keep] for k, v in comp.items()}

    if len(eligible) == 0:
        if internal is None:
            raise NoFeasibleExecutor(f"task {task.id}: infeasible locally, no eligible contractor")
        return DecisionRecord(task.id, Choice.LOCAL, None, None, 0.0, False,
                              internal, None, weights)

    columns = [
        _external_totals(comp, config).tolist(),
        pool.reliability(now, config.decay_lambda_per_month, eligible).tolist(),
        comp["latency"].tolist(),
        pool.security(task, eligible).tolist(),
    ]
    if not all(math.isfinite(x) for col in columns for x in col):
        raise ValueError(f"task {task.id}: non-finite decision criteria")
    w_adj, scores = rank_candidates(columns, weights.as_tuple(), config.alpha_corr)
    adjusted = WeightVector(*w_adj)
    best_row = max(range(len(scores)), key=scores.__getitem__)  # first maximum = lowest id
    best = int(eligible[best_row])
    score = scores[best_row]
    ext_best = CostBreakdown(price=float(comp["price"][best_row]),
                             communication=float(comp["communication"][best_row]),
                             verification=config.verification_cost,
                             integration=config.integration_cost,
                             risk=float(comp["risk"][best_row]),
                             latency_penalty=float(comp["latency_penalty"][best_row]))
    confidence = decision_confidence(history, task, pool.ids[best], config.z_alpha_half)

    if internal is None:
        outsource, forced = True, True
    else:
        forced = False
        outsource = (score > config.tau_threshold and confidence > config.rho_min
                     and nash_reservation_check(internal, ext_best))
    if outsource:
        return DecisionRecord(task.id, Choice.OUTSOURCE, pool.ids[best], score, confidence,
                              False, internal, ext_best, adjusted, forced=forced,
                              n_eligible=len(eligible))
    return DecisionRecord(task.id, Choice.LOCAL, None, score, confidence, False,
                          internal, None, adjusted, n_eligible=len(eligible))
