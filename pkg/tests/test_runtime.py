import pytest

from vapbench.pipeline.graph import BUCKETS
from vapbench.pipeline.runtime import (
    FrameTrace,
    IncompleteTrace,
    Injection,
    Location,
    end_to_end_latency,
    golden_run,
    initial_sim,
    step_frame,
    trace_digest,
)
from vapbench.protection import make_policies


def test_golden_run_is_deterministic(av, drone):
    for w in (av, drone):
        a, _ = golden_run(w, 12)
        b, _ = golden_run(w, 12)
        assert trace_digest(a) == trace_digest(b)
        assert a == b


def test_zero_frames(av):
    traces, states = golden_run(av, 0)
    assert traces == []
    assert len(states) == 1


def test_step_frame_same_inputs_same_trace(av):
    sim = initial_sim(av)
    assert step_frame(av, sim) == step_frame(av, sim)


def test_latency_additivity(av, drone):
    for w in (av, drone):
        for tr in golden_run(w, 6)[0]:
            total, stages = end_to_end_latency(tr)
            assert set(stages) == set(BUCKETS)
            assert total == sum(tr.stage_us.values()) / 1000.0
            assert total == pytest.approx(sum(stages.values()), abs=1e-12)


def stage_row(w, scheme):
    pm = make_policies(scheme, w.graph)
    tr = golden_run(w, 1, pm.policies)[0][0]
    total, stages = end_to_end_latency(tr)
    return tuple(stages[b] for b in BUCKETS), total


def test_av_unprotected_latency(av):
    assert stage_row(av, "none") == ((58, 69, 35, 2), 164)


def test_av_vap_latency(av):
    assert stage_row(av, "vap") == ((64, 72, 35, 2), 173)


def test_drone_unprotected_latency(drone):
    assert stage_row(drone, "none") == ((632, 55, 182, 2), 871)


def test_incomplete_trace_rejected():
    tr = FrameTrace(3, (), {}, failed_node="planner", failure="crash")
    with pytest.raises(IncompleteTrace, match="planner"):
        end_to_end_latency(tr)


def test_flip_on_sink_output_changes_that_slot_only(av):
    _, states = golden_run(av, 8)
    sim = states[7]
    gold, _ = step_frame(av, sim)
    # slot 1 of vehicle_cmd is speed_mm; bit 4 adds or removes 16 mm/s
    inj = Injection("twist_gate", Location("output", "vehicle_cmd", 1, 4))
    bad, _ = step_frame(av, sim, [inj])
    g, b = gold.actuator_outputs["vehicle_cmd"], bad.actuator_outputs["vehicle_cmd"]
    assert [i for i in range(len(g)) if g[i] != b[i]] == [1]
    assert abs(b[1] - g[1]) == 16

