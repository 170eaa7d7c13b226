import numpy as np
import pytest
from hypothesis import HealthCheck, settings

from taskmarket.model import ContractorProfile, HardwareSpec, MarketState, Task

settings.register_profile("default", deadline=None,
                          suppress_health_check=[HealthCheck.too_slow])
settings.load_profile("default")


def make_hw(**kw) -> HardwareSpec:
    base = dict(peak_flops=1e12, hw_cost_per_hour=2.0, mem_total_bytes=200e9,
                mem_cost_per_hour=1.0, tdp_watts=700.0, utilization_factor=0.9, kwh_cost=0.12,
                bandwidth_bytes_per_s=1e9, transfer_cost_per_byte=1e-11,
                depreciation_per_hour=0.5)
    base.update(kw)
    return HardwareSpec(**base)


def make_task(**kw) -> Task:
    base = dict(id="t1", task_type="generic_compute", flops_required=3.6e15,
                input_size_bytes=0.0, output_size_bytes=0.0, value=10.0, urgency=0.5,
                data_sensitivity=0.5, complexity_multiplier=1.0,
                requirement_embedding=(1.0, 0.0, 0.0, 0.0), required_skills=frozenset({"a"}))
    base.update(kw)
    return Task(**base)


def make_contractor(cid="k1", **kw) -> ContractorProfile:
    base = dict(id=cid, archetype="gpu_specialist", skills=frozenset({"a"}),
                skill_embedding=(1.0, 0.0, 0.0, 0.0), hardware=make_hw(peak_flops=1e14),
                base_price=1.0, demand_sensitivity=0.5, capacity_utilization=0.8,
                breach_probs=(0.0,), channel_security=0.9, true_failure_prob=0.0,
                true_quality_degradation_prob=0.0, dispatch_delay_s=0.0)
    base.update(kw)
    return ContractorProfile(**base)


def make_market(**kw) -> MarketState:
    base = dict(current_demand=50.0, available_supply=50.0, total_supply=100.0,
                market_pressure=0.5)
    base.update(kw)
    return MarketState(**base)


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


# acceptance results, printed as one line each at the end of the session
ACCEPTANCE: dict[int, tuple[str, bool, str]] = {}


def record_acceptance(number: int, title: str, ok: bool, detail: str = "") -> None:
    ACCEPTANCE[number] = (title, ok, detail)


def pytest_terminal_summary(terminalreporter):
    if not ACCEPTANCE:
        return
    terminalreporter.section("acceptance criteria")
    for n in sorted(ACCEPTANCE):
        title, ok, detail = ACCEPTANCE[n]
        terminalreporter.write_line(f"[{n:2d}] {'PASS' if ok else 'FAIL'}  {title}"
                                    + (f"  ({detail})" if detail else ""))
