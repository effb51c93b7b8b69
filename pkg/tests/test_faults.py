import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from vapbench.faults import (
    CampaignError,
    CampaignSpec,
    FaultSpec,
    OutcomeClass,
    TraceMismatch,
    classify_outcome,
    execute_fault,
    fault_surface,
    location_at,
    parse_campaign,
    prepare_golden,
    run_campaign,
    sample_fault,
    surface_bits,
)
from vapbench.pipeline.encoding import apply_bit_flip
from vapbench.pipeline.kvconfig import ConfigError, KVFile
from vapbench.pipeline.runtime import FrameTrace, NodeRecord

from toy_pipeline import READINGS, THRESHOLD, ToyWorkload


def frame(i, u, failed=None, failure=None):
    rec = NodeRecord("gate", {}, {"cmd": (u,)}, 1, 100, "control")
    return FrameTrace(i, (rec,), {"cmd": (u,)}, failed, failure)


# -- bit flips ---------------------------------------------------------------


def test_flip_examples():
    assert apply_bit_flip(b"\x00\x00", 0) == b"\x00\x01"
    assert apply_bit_flip(b"\x00\x00", 15) == b"\x80\x00"
    assert apply_bit_flip(b"\xff", 3, "set0") == b"\xf7"
    assert apply_bit_flip(b"\x00", 3, "set1") == b"\x08"
    with pytest.raises(IndexError):
        apply_bit_flip(b"\x00", 8)


@given(st.binary(min_size=1, max_size=16), st.data())
def test_flip_is_an_involution(raw, data):
    i = data.draw(st.integers(0, len(raw) * 8 - 1))
    once = apply_bit_flip(raw, i)
    assert once != raw
    assert apply_bit_flip(once, i) == raw
    assert sum(bin(a ^ b).count("1") for a, b in zip(raw, once)) == 1


@given(st.binary(min_size=1, max_size=16), st.data())
def test_stuck_modes_are_idempotent(raw, data):
    i = data.draw(st.integers(0, len(raw) * 8 - 1))
    for mode in ("set0", "set1"):
        once = apply_bit_flip(raw, i, mode)
        assert apply_bit_flip(once, i, mode) == once


# -- sampling ----------------------------------------------------------------


def test_sample_fault_is_pure(av):
    spec = CampaignSpec(trials=10, seed=42)
    draws = [sample_fault(spec, av.kernels, t, 5, 50) for t in range(50)]
    again = [sample_fault(spec, av.kernels, t, 5, 50) for t in range(50)]
    assert draws == again
    assert len(set(draws)) > 1
    other = [sample_fault(CampaignSpec(seed=43), av.kernels, t, 5, 50) for t in range(50)]
    assert other != draws


@given(st.integers(0, 2**64 - 1), st.integers(0, 10**6))
def test_sampled_fault_is_in_range(seed, trial):
    toy = ToyWorkload()
    f = sample_fault(CampaignSpec(seed=seed, p_hang=0, p_crash=0), toy.kernels, trial, 3, 5)
    assert 3 <= f.frame < 8
    assert f.location.kind in ("input", "output")
    assert 0 <= f.location.bit < 32 and f.location.slot == 0


def test_hang_probability_one():
    toy = ToyWorkload()
    spec = CampaignSpec(p_hang=1.0, p_crash=0.0)
    assert all(sample_fault(spec, toy.kernels, t, 0, 5).event == "hang" for t in range(50))


def test_bit_sampling_uniform_over_union(av):
    # under bit sampling a node is hit in proportion to its surface
    spec = CampaignSpec(seed=3, p_hang=0, p_crash=0, sampling="bits", targets=("ray_filter", "twist_gate"))
    hits = [sample_fault(spec, av.kernels, t, 0, 10).node for t in range(4000)]
    rf, tg = surface_bits(av.kernels["ray_filter"]), surface_bits(av.kernels["twist_gate"])
    expected = rf / (rf + tg)
    got = hits.count("ray_filter") / len(hits)
    assert abs(got - expected) < 4 * np.sqrt(expected * (1 - expected) / len(hits)) + 1e-3


def test_empty_and_unknown_targets(av):
    with pytest.raises(CampaignError, match="empty target set"):
        sample_fault(CampaignSpec(targets=()), av.kernels, 0, 0, 10)
    with pytest.raises(CampaignError, match="unknown target node"):
        run_campaign(av, CampaignSpec(trials=1, targets=("nope",)))


def test_bad_campaign_values():
    with pytest.raises(CampaignError):
        CampaignSpec(trials=-1)
    with pytest.raises(CampaignError):
        CampaignSpec(p_hang=0.7, p_crash=0.7)
    with pytest.raises(CampaignError):
        CampaignSpec(sampling="nodes")


# -- classification ----------------------------------------------------------


def test_classify_examples():
    golden = [frame(i, 1) for i in range(4)]
    assert classify_outcome(golden, [frame(1, 1), frame(2, 1)]).cls is OutcomeClass.MASKED
    assert classify_outcome(golden, [frame(1, 1), frame(2, 0)]).cls is OutcomeClass.SDC
    assert classify_outcome(golden, [frame(1, 1, "gate", "hang")]).cls is OutcomeClass.HANG
    assert classify_outcome(golden, [frame(1, 1, "gate", "crash")]).cls is OutcomeClass.CRASH


def test_classify_epsilon_boundary():
    golden = [FrameTrace(0, (), {"cmd": (1.0,)})]
    close = [FrameTrace(0, (), {"cmd": (1.0 + 5e-7,)})]
    far = [FrameTrace(0, (), {"cmd": (1.0 + 2e-6,)})]
    assert classify_outcome(golden, close, 1e-6).cls is OutcomeClass.MASKED
    assert classify_outcome(golden, far, 1e-6).cls is OutcomeClass.SDC


def test_classify_horizon_ignores_later_frames():
    golden = [frame(i, 1) for i in range(4)]
    faulty = [frame(0, 1), frame(1, 1), frame(2, 0)]
    assert classify_outcome(golden, faulty, horizon=2).cls is OutcomeClass.MASKED


def test_classify_rejects_misaligned_traces():
    with pytest.raises(TraceMismatch):
        classify_outcome([frame(0, 1)], [frame(7, 1)])


# -- execution ---------------------------------------------------------------


def _toy_oracle(kind, frame_idx, bit):
    r = READINGS[frame_idx]
    if kind == "output":
        return OutcomeClass.SDC  # any bit of u moves it by at least 1
    x = r ^ (1 << bit)
    if x >= 2**31:
        x -= 2**32
    return OutcomeClass.SDC if (x > THRESHOLD) != (r > THRESHOLD) else OutcomeClass.MASKED


def test_toy_pipeline_matches_hand_enumeration():
    toy = ToyWorkload()
    golden = prepare_golden(toy)
    kernel = toy.kernels["gate"]
    assert surface_bits(kernel) == 64
    for f in range(len(READINGS)):
        for index in range(64):
            loc = location_at(kernel, index)
            got, _, _ = execute_fault(toy, golden, FaultSpec("gate", loc, f))
            assert got.cls is _toy_oracle(loc.kind, f, loc.bit), (f, index)


def test_campaign_is_seed_deterministic(av):
    spec = CampaignSpec(trials=40, seed=9)
    a = run_campaign(av, spec)
    b = run_campaign(av, spec, golden=a.golden)
    assert [t.outcome for t in a.trials] == [t.outcome for t in b.trials]
    assert a.counts == b.counts
    assert a.total.trials == 40


def test_campaign_same_with_workers(av):
    spec = CampaignSpec(trials=80, seed=5)
    one = run_campaign(av, spec, threads=1)
    two = run_campaign(av, spec, golden=one.golden, threads=2)
    assert one.counts == two.counts


def test_sink_output_flips_are_always_sdc(av):
    # twist_gate publishes the actuator command directly, so any output bit
    # the epsilon can see must surface as SDC
    golden = prepare_golden(av, horizon=5)
    k = av.kernels["twist_gate"]
    out_start = sum(s.bits for s in fault_surface(k) if s.kind == "input")
    for index in range(out_start, out_start + 32):
        loc = location_at(k, index)
        assert loc.kind == "output"
        outcome, _, _ = execute_fault(av, golden, FaultSpec("twist_gate", loc, golden.first_frame))
        assert outcome.cls is OutcomeClass.SDC


# -- campaign files ----------------------------------------------------------


def test_parse_campaign():
    spec = parse_campaign(KVFile("[campaign]\ntrials = 12\nseed = 4\ntargets = a, b\nhorizon_frames = 9\n", "c"))
    assert spec == CampaignSpec(trials=12, seed=4, targets=("a", "b"), horizon=9)
    assert parse_campaign(KVFile("[campaign]\ntargets = all\n", "c")).targets is None


def test_parse_campaign_errors():
    with pytest.raises(ConfigError, match="unknown key"):
        parse_campaign(KVFile("[campaign]\ntrails = 3\n", "c"))
    with pytest.raises(ConfigError):
        parse_campaign(KVFile("[campaign]\ntrials = -3\n", "c"))
