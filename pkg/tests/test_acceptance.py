"""The ten acceptance checks at their stated tolerances.

Each test records a one-line PASS/FAIL verdict that is printed in the
"acceptance criteria" section at the end of the pytest run.
"""

import math
import time
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from taskmarket import costs
from taskmarket.cli import main
from taskmarket.engine import (
    BENEFIT,
    CandidatePool,
    DecisionHistory,
    LocalContext,
    correlation_adjust,
    decide,
    decision_confidence,
    dynamic_weights,
    nash_reservation_check,
    rank_candidates,
    skill_compatibility,
    topsis,
)
from taskmarket.experiments import derive_seed, load_plan, run_plan, summarize
from taskmarket.market import generate_population, generate_tasks, initial_market
from taskmarket.metrics import convergence_diagnostic
from taskmarket.model import (
    CostBreakdown,
    EngineConfig,
    LifecycleError,
    TaskLifecycle,
    TaskState,
    TERMINAL_STATES,
    WeightVector,
)
from taskmarket.reputation import (
    HOURS_PER_MONTH,
    ReputationRecord,
    record_outcome,
    reliability,
    security_risk,
)
from taskmarket.scenario import load_scenario
from taskmarket.simulation import simulate

from conftest import make_contractor, make_hw, make_market, make_task, record_acceptance
from oracles import topsis_oracle

GB = 1e9
CASES = 10_000


def _check(number, title, ok, detail=""):
    record_acceptance(number, title, bool(ok), detail)
    assert ok, f"{title}: {detail}"


def _cell_means(rows, metric):
    out = {}
    for r in rows:
        if not r["error"]:
            out.setdefault(r["cell"], []).append(r[metric])
    return {c: float(np.mean(v)) for c, v in out.items()}


# 1 ------------------------------------------------------------------------------------


def test_formula_oracles():
    t0 = time.perf_counter()
    hw = make_hw(peak_flops=1e12, hw_cost_per_hour=2.0)
    cfg = EngineConfig(protocol_overhead_cost=0.001)
    hist = DecisionHistory(["k1"])
    for i in range(100):
        hist.record("generic_compute", "k1", i % 2 == 0)
    perfect = DecisionHistory(["k1"])
    for _ in range(50):
        perfect.record("generic_compute", "k1", True)
    alt = ReputationRecord("k1")
    for i in range(100):
        alt = record_outcome(alt, "success" if i % 2 == 0 else "failure", 0.0)
    corr_x = np.array([[2.0, 7.0, 4.0, 5.0], [0.0, 1.0, 4.0, 5.0], [1.0, 4.0, 1.0, 5.0]])
    corr_raw = np.array([0.175, 0.175, 0.25, 0.25])
    x3 = [[1.2, 0.8, 30.0, 0.05], [0.9, 0.6, 45.0, 0.02], [1.5, 0.95, 20.0, 0.08]]

    cases = [
        ("compute cost", costs.compute_cost(make_task(flops_required=3.6e15), hw), 2.0),
        ("memory cost", costs.memory_cost(70 * GB, 10 * GB, 20 * GB,
                                          make_hw(mem_total_bytes=200 * GB, mem_cost_per_hour=1.0), 2.0), 1.0),
        ("energy cost", costs.energy_cost(make_hw(tdp_watts=700, utilization_factor=0.9, kwh_cost=0.12), 1.0), 0.0756),
        ("opportunity cost", costs.opportunity_cost([(10, 2), (9, 1)], 2.0), 18.0),
        ("opportunity identity", costs.opportunity_cost([(7.0, 3.0)], 3.0), 7.0),
        ("dynamic price", costs.dynamic_price(make_contractor(base_price=1.0, demand_sensitivity=0.5),
                                              make_task(complexity_multiplier=1.2),
                                              make_market(current_demand=100, available_supply=50)), 1.5),
        ("price floor", costs.dynamic_price(make_contractor(base_price=2.0, demand_sensitivity=5.0), make_task(),
                                            make_market(current_demand=0, available_supply=100)), 0.1),
        ("communication", costs.communication_cost(
            make_task(input_size_bytes=1 * GB), make_hw(transfer_cost_per_byte=0.01 / GB), cfg), 0.011),
        ("risk", costs.risk_cost(make_task(value=10), 0.1, 0, 0, 1.0), 1.0),
        ("certain loss", costs.risk_cost(make_task(value=10), 0.2, 1.0, 0, 1.5), 15.0),
        ("ewma", costs.ewma_update(costs.CalibrationState(20.0), 10.0, 0.2).estimate, 18.0),
        ("uniform prior reliability", reliability(ReputationRecord("k"), 0.0), 0.5),
        ("reliability 9/10", reliability(ReputationRecord("k", 9, 10), 0.0), 10 / 12),
        ("reliability after a year", reliability(ReputationRecord("k", 9, 10), 12 * HOURS_PER_MONTH),
         10 / 12 * math.exp(-1.2)),
        ("alternating outcomes", reliability(alt, 0.0), 51 / 102),
        ("security risk", security_risk(make_contractor(breach_probs=(0.1, 0.1), channel_security=0.0),
                                        make_task(data_sensitivity=1.0)), 0.19),
        ("compatibility max", skill_compatibility(make_contractor(skills=frozenset({"a"})),
                                                  make_task(), perfect), 1.0),
        ("compatibility example", skill_compatibility(
            make_contractor(skills=frozenset({"a", "b"}), skill_embedding=(0.8, 0.6, 0, 0)),
            make_task(required_skills=frozenset({"b", "c"})), None), 0.6),
        ("confidence p=1", decision_confidence(perfect, make_task(), "k1"), 1.0),
        ("confidence p=.5", decision_confidence(hist, make_task(), "k1"), 0.902),
        ("confidence prior", decision_confidence(DecisionHistory(["k1"]), make_task(), "k1"), 0.5),
    ]
    vec_cases = [
        ("uniform weights", dynamic_weights(make_market(market_pressure=0.3, failure_rate=0.3),
                                            make_task(urgency=0.3, data_sensitivity=0.3)).as_array(), [0.25] * 4),
        ("market-only weights", dynamic_weights(make_market(market_pressure=0.8, failure_rate=0.1),
                                                make_task(urgency=0.05, data_sensitivity=0.05), None, 1.0).as_array(),
         [0.8, 0.1, 0.05, 0.05]),
        ("correlation penalty", correlation_adjust(WeightVector.uniform(), corr_x, 0.3).as_array(),
         corr_raw / corr_raw.sum()),
        ("identical rows", topsis(np.array([x3[0], x3[0]]), WeightVector.uniform()), [0.5, 0.5]),
        ("dominant row", topsis(np.array([[1.0, 0.9, 10.0, 0.1], [2.0, 0.5, 20.0, 0.3]]),
                                WeightVector.uniform()), [1.0, 0.0]),
        ("three-row topsis", topsis(np.array(x3), [0.4, 0.3, 0.2, 0.1]),
         topsis_oracle(x3, [0.4, 0.3, 0.2, 0.1], list(BENEFIT))),
    ]
    bad = [name for name, got, want in cases
           if not math.isclose(got, want, rel_tol=1e-9, abs_tol=1e-15)]
    bad += [name for name, got, want in vec_cases
            if not np.allclose(got, want, rtol=1e-9, atol=1e-15)]
    nash = (nash_reservation_check(CostBreakdown(compute=10), CostBreakdown(price=5))
            and not nash_reservation_check(CostBreakdown(compute=10), CostBreakdown(price=10)))
    if not nash:
        bad.append("reservation price")
    elapsed = time.perf_counter() - t0
    n = len(cases) + len(vec_cases) + 1
    _check(1, "formula oracles", not bad and elapsed < 5.0,
           f"{n - len(bad)}/{n} examples at 1e-9, {elapsed:.2f}s" + (f", failed: {bad}" if bad else ""))


# 2 ------------------------------------------------------------------------------------


def test_topsis_brute_force_equivalence():
    rng = np.random.default_rng(20240601)
    mismatches = domination_failures = dominated_cases = 0
    for i in range(1000):
        n = int(rng.integers(2, 11))
        x = rng.uniform(0.01, 100.0, (n, 4))
        if i % 2:
            # force row 0 to strictly dominate in direction-corrected terms
            x[0] = np.where(BENEFIT, x[1:].max(axis=0) * 1.05, x[1:].min(axis=0) * 0.95)
        w = rng.dirichlet(np.ones(4))
        want = topsis_oracle(x.tolist(), w.tolist(), list(BENEFIT))
        got = topsis(x, w)
        _, fast = rank_candidates([x[:, j].tolist() for j in range(4)], w.tolist(), 0.0)
        if not (np.allclose(got, want, rtol=1e-9, atol=1e-12)
                and np.allclose(fast, want, rtol=1e-9, atol=1e-12)):
            mismatches += 1
        better = np.where(BENEFIT, x[0] > x[1:], x[0] < x[1:]).all()
        if better:
            dominated_cases += 1
            if not all(got[0] > s for s in got[1:]):
                domination_failures += 1
    _check(2, "TOPSIS brute-force equivalence", mismatches == 0 and domination_failures == 0,
           f"{mismatches} mismatches in 1000 matrices, {domination_failures}/{dominated_cases} "
           "dominant rows not strict max")


# 3 ------------------------------------------------------------------------------------


def test_exploration_frequency():
    sc = load_scenario()
    rng_pop = np.random.default_rng(1)
    clients, contractors = generate_population(sc, rng_pop)
    market = initial_market(contractors, sc)
    pool = CandidatePool(contractors, market, None, sc.engine.beta_prior)
    tasks = generate_tasks(replace(sc, duration_days=60), np.random.default_rng(2))[:10_000]
    local = LocalContext(sc.client_hardware)
    rng = np.random.default_rng(3)
    cfg = replace(sc.engine, epsilon=0.1)
    hist = DecisionHistory(pool.ids)
    explored = sum(decide(t, pool, market, hist, cfg, rng, local=local).exploration for t in tasks)
    frac = explored / len(tasks)
    _check(3, "exploration frequency", len(tasks) == 10_000 and 0.09 <= frac <= 0.11,
           f"{frac:.4f} over {len(tasks)} decisions")


# 4 ------------------------------------------------------------------------------------


def test_exploration_ablation_direction():
    t0 = time.perf_counter()
    plan = load_plan(preset="exploration_ablation")
    rows = run_plan(plan)
    elapsed = time.perf_counter() - t0
    cr = _cell_means(rows, "cost_reduction_pct")
    out = _cell_means(rows, "outsourcing_rate_pct")
    gap = out["eps_0.1"] - out["eps_0.0"]
    ok = (cr["eps_0.1"] > cr["eps_0.0"] and gap >= 5.0 and elapsed < 120
          and len(rows) == 40 and not any(r["error"] for r in rows))
    _check(4, "exploration ablation direction", ok,
           f"cost reduction {cr['eps_0.0']:.1f}% -> {cr['eps_0.1']:.1f}%, outsourcing "
           f"{out['eps_0.0']:.1f}% -> {out['eps_0.1']:.1f}% (gap {gap:.1f}pp), {elapsed:.0f}s")


# 5 ------------------------------------------------------------------------------------


def test_default_cost_reduction_band():
    t0 = time.perf_counter()
    rows = run_plan(load_plan(preset="single"))
    elapsed = time.perf_counter() - t0
    vals = [r["cost_reduction_pct"] for r in rows if not r["error"]]
    mean = float(np.mean(vals))
    _check(5, "default cost-reduction band", len(vals) == 20 and 30 <= mean <= 55 and elapsed < 300,
           f"mean {mean:.1f}% ± {np.std(vals, ddof=1):.1f} over {len(vals)} seeds, {elapsed:.0f}s")


# 6 ------------------------------------------------------------------------------------


def test_agent_scaling_correlations():
    plan = load_plan(preset="agent_scaling")
    rows = run_plan(plan)
    corr = summarize(rows, [c.name for c in plan.cells])["correlations"]
    r_agents = corr["r_agents_costreduction"]
    r_out = corr["r_outsourcing_costreduction"]
    ok = (len(plan.cells) == 8 and len(rows) == 160 and r_agents is not None and r_out is not None
          and r_agents < 0 and r_out > 0)
    _check(6, "agent-scaling correlations", ok,
           f"r(agents, cost reduction) = {r_agents:.3f}, r(outsourcing, cost reduction) = {r_out:.3f}")


# 7 ------------------------------------------------------------------------------------


def test_epsilon_sweep_interior_peak():
    plan = load_plan(preset="epsilon_sweep")
    assert plan.paired
    rows = run_plan(plan)
    names = [c.name for c in plan.cells]
    interior = 0
    for rep in range(plan.replications):
        crs = [next(r["cost_reduction_pct"] for r in rows
                    if r["cell"] == c and r["replication"] == rep) for c in names]
        best = int(np.argmax(crs))
        interior += 0 < best < len(names) - 1
    means = _cell_means(rows, "cost_reduction_pct")
    _check(7, "epsilon sweep interior optimum", interior >= 15,
           f"interior peak in {interior}/{plan.replications} seed families; means "
           + ", ".join(f"{means[c]:.1f}" for c in names))


# 8 ------------------------------------------------------------------------------------


def test_stationary_convergence():
    sc = load_scenario(preset="stationary")
    decreasing = 0
    n_seeds = 50
    for i in range(n_seeds):
        result = simulate(sc, derive_seed(808, "stationary", i, False), keep_decisions=False)
        stream = [e.contractor_id if e.outsourced else e.choice for e in result.ledger]
        tv = convergence_diagnostic(stream, len(stream) // 10)
        decreasing += tv[-1] < tv[0]
    _check(8, "stationary convergence", decreasing >= 0.9 * n_seeds,
           f"TV fell from first to last window in {decreasing}/{n_seeds} seeds")


# 9 ------------------------------------------------------------------------------------


def test_byte_identical_outputs(tmp_path, capsys):
    small = ["--set", "n_clients=4", "--set", "n_contractors=8", "--set", "duration_days=1"]
    commands = {
        "run": ["run", "--seed", "42"],
        "run_small": ["run", "--seed", "7"] + small,
        "experiment": ["experiment", "--preset", "exploration_ablation", "--replications", "2",
                       "--quiet", "--decisions"] + small,
    }
    differing = []
    for name, cmd in commands.items():
        outputs = []
        for k in range(2):
            out = tmp_path / f"{name}_{k}"
            assert main(cmd + ["--out", str(out)]) == 0
            printed = capsys.readouterr().out.replace(str(out), "<out>")
            files = {p.name: p.read_bytes() for p in sorted(out.iterdir())}
            outputs.append((printed, files))
        if outputs[0] != outputs[1]:
            differing.append(name)
    for k in range(2):
        assert main(["validate", "--preset", "default"]) == 0
    v = capsys.readouterr().out.splitlines()
    if v[0] != v[1]:
        differing.append("validate")
    _check(9, "byte-identical outputs", not differing,
           f"{len(commands) + 1} commands run twice" + (f", differing: {differing}" if differing else ""))


# 10 -----------------------------------------------------------------------------------


_violations = {"simplex": 0, "breakdown": 0, "lifecycle": 0, "reliability": 0}
_prob = st.floats(0.0, 1.0)
_pos = st.floats(1e-3, 1e3)


@settings(max_examples=CASES, database=None)
@given(st.integers(1, 10), st.integers(0, 2**32 - 1), st.floats(0.0, 1.0),
       st.lists(_prob, min_size=4, max_size=4))
def _weight_simplex(n, seed, alpha, signals):
    rng = np.random.default_rng(seed)
    x = rng.uniform(0.0, 10.0, (n, 4))
    if rng.random() < 0.3:
        x[:, rng.integers(4)] = 1.0
    w = dynamic_weights(make_market(market_pressure=signals[0], failure_rate=signals[1]),
                        make_task(urgency=signals[2], data_sensitivity=signals[3]), None, 0.7)
    outs = [w.as_array(), correlation_adjust(w, x, alpha).as_array(),
            np.array(rank_candidates([x[:, j].tolist() for j in range(4)], w.as_tuple(), alpha)[0])]
    for v in outs:
        if not (np.all(v >= 0) and abs(v.sum() - 1.0) <= 1e-9):
            _violations["simplex"] += 1
            raise AssertionError(f"weights left the simplex: {v}")


@settings(max_examples=CASES, database=None)
@given(st.floats(1e9, 1e18), _pos, _pos, st.floats(0.0, 40.0), st.floats(0.0, 100.0),
       _prob, _prob, _prob, st.floats(0.0, 1e9), st.floats(0.1, 3.0))
def _breakdown_sums(flops, price, hw_rate, mem_gb, value, pf, ps, pq, data, cx):
    task = make_task(flops_required=flops, value=value, model_memory_bytes=mem_gb * GB,
                     input_size_bytes=data, complexity_multiplier=cx, max_latency_s=60.0)
    hw = make_hw(peak_flops=1e13, hw_cost_per_hour=hw_rate, mem_total_bytes=48 * GB)
    parts = [costs.internal_cost(task, hw, [(value + 1.0, 0.5)]),
             costs.external_cost(task, make_contractor(base_price=price), make_market(),
                                 costs.RiskEstimates(pf, ps, pq), EngineConfig())]
    for b in parts:
        if not math.isclose(b.total, math.fsum(b.components().values()), rel_tol=1e-9, abs_tol=1e-12):
            _violations["breakdown"] += 1
            raise AssertionError(f"total {b.total} != component sum")


@settings(max_examples=CASES, database=None)
@given(st.lists(st.tuples(st.sampled_from(list(TaskState)), st.floats(0.0, 10.0)), max_size=12))
def _lifecycle_fuzz(steps):
    life = TaskLifecycle.start(0.0)
    t = 0.0
    legal = {TaskState.SUBMITTED: {TaskState.WORKING},
             TaskState.WORKING: {TaskState.INPUT_REQUIRED, *TERMINAL_STATES},
             TaskState.INPUT_REQUIRED: {TaskState.WORKING}}
    for dst, dt in steps:
        should = dst in legal.get(life.state, set())
        try:
            nxt = life.transition(dst, t + dt)
        except LifecycleError:
            if should:
                _violations["lifecycle"] += 1
                raise AssertionError(f"legal move {life.state} -> {dst} rejected")
            continue
        if not should:
            _violations["lifecycle"] += 1
            raise AssertionError(f"illegal move {life.state} -> {dst} accepted")
        life, t = nxt, t + dt
    states = [s for s, _ in life.history]
    if any(b not in legal.get(a, set()) for a, b in zip(states, states[1:])):
        _violations["lifecycle"] += 1
        raise AssertionError("history contains an illegal step")


@settings(max_examples=CASES, database=None)
@given(st.integers(0, 5000), st.integers(0, 5000), st.floats(0.0, 1e5), st.floats(1e-3, 1e5),
       st.floats(0.01, 2.0), st.sampled_from([(1.0, 1.0), (2.0, 5.0), (0.5, 0.5)]))
def _reliability_props(s, extra, t, dt, decay, prior):
    total = s + extra
    r = ReputationRecord("k", s, total, 0, 0.0, prior)
    now, later = reliability(r, t, decay), reliability(r, t + dt, decay)
    a, b = prior
    expect = (a + s) / (a + b + total) * math.exp(-decay * (t + dt) / HOURS_PER_MONTH)
    ok = (0.0 < now < 1.0 and (later < now or later == 0.0)
          and math.isclose(later, expect, rel_tol=1e-9, abs_tol=1e-300))
    if extra > 0:
        up = ReputationRecord("k", s + 1, total, 0, 0.0, prior)
        ok = ok and reliability(up, t, decay) >= now
    if not ok:
        _violations["reliability"] += 1
        raise AssertionError("reliability monotonicity/decay violated")


def test_property_suites():
    failures = []
    for name, prop in (("simplex", _weight_simplex), ("breakdown", _breakdown_sums),
                       ("lifecycle", _lifecycle_fuzz), ("reliability", _reliability_props)):
        try:
            prop()
        except Exception as exc:  # keep running the other suites, report all
            failures.append(f"{name}: {type(exc).__name__}")
    detail = ", ".join(f"{k} {v}" for k, v in _violations.items())
    _check(10, "property suites", not failures and not any(_violations.values()),
           f"{CASES} cases each; violations: {detail}" + (f"; {failures}" if failures else ""))
