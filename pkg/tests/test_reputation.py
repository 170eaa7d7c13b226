import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from taskmarket.reputation import (
    HOURS_PER_MONTH,
    ReputationLedger,
    ReputationRecord,
    breach_probability,
    record_outcome,
    reliability,
    security_risk,
)

from conftest import make_contractor, make_task


def rec(**kw):
    return ReputationRecord("k1", **kw)


class TestReliability:
    def test_uniform_prior(self):
        assert reliability(rec(), 0.0) == 0.5

    def test_nine_of_ten(self):
        assert math.isclose(reliability(rec(n_success=9, n_total=10), 0.0), 10 / 12, rel_tol=1e-9)

    def test_year_idle(self):
        got = reliability(rec(n_success=9, n_total=10), 12 * HOURS_PER_MONTH)
        assert math.isclose(got, 10 / 12 * math.exp(-1.2), rel_tol=1e-9)
        assert abs(got - 0.2510) < 5e-5

    def test_time_cannot_run_backwards(self):
        with pytest.raises(ValueError):
            reliability(rec(last_update_time=10.0), 5.0)

    @given(st.integers(0, 500), st.integers(0, 500), st.floats(0, 1e5), st.floats(1e-3, 1e4))
    def test_strictly_decreasing_in_idle_time(self, s, extra, t, dt):
        r = rec(n_success=s, n_total=s + extra)
        assert reliability(r, t + dt) < reliability(r, t) or reliability(r, t + dt) == 0.0

    @given(st.integers(1, 500), st.data())
    def test_non_decreasing_in_successes(self, total, data):
        s = data.draw(st.integers(0, total - 1))
        assert reliability(rec(n_success=s + 1, n_total=total), 0) >= \
            reliability(rec(n_success=s, n_total=total), 0)

    @given(st.integers(0, 10_000), st.integers(0, 10_000))
    def test_open_unit_interval(self, s, extra):
        r = reliability(rec(n_success=s, n_total=s + extra), 0.0)
        assert 0.0 < r < 1.0


class TestRecordOutcome:
    def test_success(self):
        r = record_outcome(rec(), "success", 3.0)
        assert (r.n_success, r.n_total, r.last_update_time) == (1, 1, 3.0)

    def test_failure(self):
        r = record_outcome(rec(), "failure", 1.0)
        assert (r.n_success, r.n_total, r.n_failure) == (0, 1, 1)

    def test_quality_and_security_tracked_by_ewma(self):
        r = record_outcome(rec(), "quality_degraded", 1.0, lam=0.2)
        assert r.estimated_quality_prob == pytest.approx(0.2)
        r = record_outcome(r, "security_incident", 2.0, lam=0.2)
        assert r.estimated_quality_prob == pytest.approx(0.16)
        assert r.estimated_security_prob == pytest.approx(0.2)
        assert r.n_failure == 0 and r.n_total == 2

    def test_alternating_outcomes(self):
        r = rec()
        for i in range(100):
            r = record_outcome(r, "success" if i % 2 == 0 else "failure", float(i))
        assert math.isclose(reliability(r, 99.0), 51 / 102, rel_tol=1e-12)

    def test_unknown_outcome(self):
        with pytest.raises(ValueError):
            record_outcome(rec(), "lost", 0.0)

    def test_failure_estimate_converges_to_truth(self):
        rng = np.random.default_rng(99)
        p, n = 0.15, 2000
        r = rec()
        for i in range(n):
            r = record_outcome(r, "failure" if rng.random() < p else "success", float(i))
        sigma = math.sqrt(p * (1 - p) / n)
        assert abs(r.estimated_failure_prob - p) < 3 * sigma

    def test_ledger(self):
        led = ReputationLedger(["k1", "k2"], lam=0.2)
        led.observe("k2", "success", 1.0)
        dump = led.dump(1.0)
        assert [d["contractor_id"] for d in dump] == ["k1", "k2"]
        assert dump[1]["n_success"] == 1 and dump[1]["reliability"] == pytest.approx(2 / 3)


class TestSecurityRisk:
    def test_two_vectors(self):
        k = make_contractor(breach_probs=(0.1, 0.1), channel_security=0.0)
        assert math.isclose(security_risk(k, make_task(data_sensitivity=1.0)), 0.19, rel_tol=1e-9)

    def test_public_data(self):
        k = make_contractor(breach_probs=(0.3, 0.1), channel_security=0.2)
        assert security_risk(k, make_task(data_sensitivity=0.0)) == 0.0

    def test_no_vectors(self):
        k = make_contractor(breach_probs=(), channel_security=0.0)
        assert security_risk(k, make_task(data_sensitivity=1.0)) == 0.0

    def test_secure_channel_lowers_risk(self):
        t = make_task(data_sensitivity=1.0)
        lo = security_risk(make_contractor(breach_probs=(0.2,), channel_security=0.9), t)
        hi = security_risk(make_contractor(breach_probs=(0.2,), channel_security=0.1), t)
        assert lo < hi

    @given(st.lists(st.floats(0, 1), max_size=6), st.floats(0, 1), st.floats(0, 1), st.floats(0, 1))
    def test_bounded_and_monotone_in_vectors(self, probs, extra, sens, chan):
        t = make_task(data_sensitivity=sens)
        base = security_risk(make_contractor(breach_probs=tuple(probs), channel_security=chan), t)
        more = security_risk(make_contractor(breach_probs=(*probs, extra), channel_security=chan), t)
        assert 0.0 <= base <= 1.0
        assert more >= base - 1e-15

    def test_breach_probability(self):
        assert breach_probability([]) == 0.0
        assert math.isclose(breach_probability([0.5, 0.5]), 0.75)
