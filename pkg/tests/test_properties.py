from __future__ import annotations

from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from ceflow.metrics import summarize
from ceflow.sim import Strategy

from .randomized import random_case
from .trace_check import audit


@settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10**6))
def test_random_runs_satisfy_constraints(seed):
    case = random_case(seed)
    report = audit(case.trace, case.cluster, case.workflows)
    assert report.violations == []
    assert report.grants > 0


@settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10**6))
def test_random_kces_runs_complete(seed):
    case = random_case(seed, Strategy.KCES)
    done = case.trace.of_kind("WorkflowDone")
    assert len(done) == len(case.workflows)
    assert not [r for r in case.trace.of_kind("Warning") if "starved" in r["message"]]
    s = summarize(case.trace, case.cluster)
    assert s.avg_workflow_duration_ms <= s.total_duration_ms
    assert 0 <= s.cpu_usage_mean <= 1 and 0 <= s.mem_usage_mean <= 1


@settings(max_examples=10, deadline=None, suppress_health_check=[HealthCheck.too_slow])
@given(st.integers(0, 10**6))
def test_random_runs_are_deterministic(seed):
    assert random_case(seed).trace.to_jsonl() == random_case(seed).trace.to_jsonl()
