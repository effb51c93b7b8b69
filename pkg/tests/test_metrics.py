import pytest
from hypothesis import given
from hypothesis import strategies as st

from vapbench.faults import prepare_golden
from vapbench.metrics import (
    MetricsError,
    MissionOutcome,
    MissionResult,
    OutcomeCounts,
    compute_epr,
    failure_rate,
    latency_breakdown,
    merge_counts,
    mission_failure_rate,
)
from vapbench.pipeline.kvconfig import KVFile
from vapbench.pipeline.runtime import FrameTrace
from vapbench.protection import load_scheme_params, make_policies
from vapbench.workloads.scenario import DATA_DIR


def test_epr_example():
    r = compute_epr({"pure_pursuit": OutcomeCounts(masked=797, sdc=203)})
    assert r.per_node["pure_pursuit"] == pytest.approx(20.3)
    assert r.aggregate == pytest.approx(20.3)


def test_epr_ignores_hang_and_crash_in_numerator():
    r = compute_epr(OutcomeCounts(masked=90, sdc=5, hang=3, crash=2))
    assert r.aggregate == pytest.approx(5.0)


def test_aggregate_weights_trials_equally():
    r = compute_epr({"a": OutcomeCounts(sdc=10, masked=0), "b": OutcomeCounts(sdc=0, masked=30)})
    assert r.per_node == {"a": 100.0, "b": 0.0}
    assert r.aggregate == pytest.approx(25.0)


def test_epr_needs_trials():
    with pytest.raises(MetricsError):
        compute_epr({"a": OutcomeCounts()})
    with pytest.raises(MetricsError):
        compute_epr({})


counts = st.builds(OutcomeCounts, *(st.integers(0, 50) for _ in range(4)))


@given(st.dictionaries(st.sampled_from("abcdef"), counts, min_size=1).filter(
    lambda d: all(c.trials for c in d.values())))
def test_aggregate_between_node_extremes(d):
    r = compute_epr(d)
    assert min(r.per_node.values()) - 1e-9 <= r.aggregate <= max(r.per_node.values()) + 1e-9
    assert 0.0 <= r.aggregate <= 100.0


@given(st.lists(st.tuples(st.sampled_from("xyz"), counts), min_size=1), st.randoms())
def test_merge_is_order_invariant(parts, rnd):
    shuffled = list(parts)
    rnd.shuffle(shuffled)
    a = merge_counts([{n: c} for n, c in parts])
    b = merge_counts([{n: c} for n, c in shuffled])
    assert a == b


def test_stderr():
    r = compute_epr(OutcomeCounts(masked=75, sdc=25))
    assert r.stderr() == pytest.approx(100 * (0.25 * 0.75 / 100) ** 0.5)


def test_mission_failure_rate_examples():
    ok = MissionResult(MissionOutcome.SUCCESS, 300.0, 107.5, 6e4)
    hit = MissionResult(MissionOutcome.COLLISION, 120.0, 40.0, 2e4)
    assert mission_failure_rate([hit] * 122 + [ok] * 878) == pytest.approx(12.2)
    assert mission_failure_rate([MissionOutcome.INFEASIBLE] * 36 + [MissionOutcome.SUCCESS] * 964) == pytest.approx(3.6)
    assert failure_rate(OutcomeCounts(masked=1000, mission_failures=36)) == pytest.approx(3.6)
    with pytest.raises(MetricsError):
        mission_failure_rate([])


def test_latency_breakdown_rejects_empty_and_failed():
    with pytest.raises(MetricsError):
        latency_breakdown([])
    with pytest.raises(ValueError):
        latency_breakdown([FrameTrace(0, (), {}, "x", "hang")])


PUBLISHED = {
    ("av", "none"): ((58, 69, 35, 2), 164),
    ("av", "anomaly"): ((64, 72, 106, 3), 245),
    ("av", "checkpoint"): ((216, 256, 131, 7), 610),
    ("av", "vap"): ((64, 72, 35, 2), 173),
    ("drone", "none"): ((632, 55, 182, 2), 871),
    ("drone", "anomaly"): ((645, 60, 493, 3), 1201),
    ("drone", "vap"): ((645, 60, 190, 2), 897),
}


@pytest.mark.parametrize("key", sorted(PUBLISHED))
def test_latency_breakdown_reproduces_published_rows(key, av, drone):
    name, scheme = key
    w = av if name == "av" else drone
    params = load_scheme_params(KVFile.load(DATA_DIR / f"{name}.policy"))
    g = prepare_golden(w, make_policies(scheme, w.graph, params).policies)
    lb = latency_breakdown(g.traces[g.first_frame:g.first_frame + g.horizon])
    stages, total = PUBLISHED[key]
    assert tuple(round(v) for v in lb.stages_ms.values()) == stages
    assert lb.total_ms == pytest.approx(total, abs=0.5)
    assert lb.total_ms == pytest.approx(sum(lb.stages_ms.values()))
