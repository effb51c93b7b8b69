"""Single-fault campaigns: sampling, trial execution and outcome classification.

Each trial resumes from the golden snapshot taken just before its fault
frame, injects one fault and runs forward until the simulation state
re-converges with the golden run (Masked), an actuator deviates (SDC), a node
fails without recovery (Hang/Crash) or the horizon ends.
"""

from __future__ import annotations

import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from enum import Enum
from multiprocessing import get_context

import numpy as np

from vapbench.metrics import MissionResult, OutcomeCounts, merge_counts
from vapbench.pipeline.encoding import bit_length, locate_bit, values_close
from vapbench.pipeline.kvconfig import ConfigError, KVFile, parse_list
from vapbench.pipeline.runtime import (
    Injection,
    Location,
    golden_run,
    step_frame,
)
from vapbench.protection import observed_ranges


class CampaignError(ValueError):
    pass


class TraceMismatch(ValueError):
    pass


class OutcomeClass(str, Enum):
    MASKED = "Masked"
    SDC = "SDC"
    HANG = "Hang"
    CRASH = "Crash"


@dataclass(frozen=True)
class Outcome:
    cls: OutcomeClass
    detected: bool = False
    recovered: bool = False


@dataclass(frozen=True)
class FaultSpec:
    node: str
    location: Location | None  # None for hang/crash events
    frame: int  # absolute frame index
    mode: str = "flip"
    event: str | None = None
    token: float = 0.0

    def injection(self) -> Injection:
        return Injection(self.node, self.location, self.mode, self.event, self.token)


@dataclass(frozen=True)
class CampaignSpec:
    trials: int = 10_000
    seed: int = 1
    targets: tuple[str, ...] | None = None  # None = every node
    horizon: int | None = None  # frames; None = workload default
    epsilon: float = 1e-6
    p_hang: float = 0.01
    p_crash: float = 0.01
    mode: str = "flip"
    sampling: str = "node"  # | "bits"

    def __post_init__(self):
        if self.trials < 0:
            raise CampaignError("trials must be >= 0")
        if not (0.0 <= self.p_hang and 0.0 <= self.p_crash and self.p_hang + self.p_crash <= 1.0):
            raise CampaignError("need 0 <= p_hang + p_crash <= 1")
        if self.sampling not in ("node", "bits"):
            raise CampaignError(f"unknown sampling {self.sampling!r}: expected node or bits")
        if self.mode not in ("flip", "set0", "set1"):
            raise CampaignError(f"unknown fault mode {self.mode!r}")
        if not 0 <= self.seed < 2**64:
            raise CampaignError("seed must be an unsigned 64-bit integer")


# -- fault surface -----------------------------------------------------------


@dataclass(frozen=True)
class Segment:
    kind: str  # "input" | "output" | "state"
    topic: str
    schema: tuple
    bits: int


def fault_surface(kernel) -> tuple[Segment, ...]:
    """Addressable bits of a node: every input, every output, then its state."""
    segs = [Segment("input", t, s, bit_length(s)) for t, s in kernel.inputs.items()]
    segs += [Segment("output", t, s, bit_length(s)) for t, s in kernel.outputs.items()]
    segs.append(Segment("state", "", kernel.state_schema, bit_length(kernel.state_schema)))
    return tuple(s for s in segs if s.bits > 0)


def surface_bits(kernel) -> int:
    return sum(s.bits for s in fault_surface(kernel))


def location_at(kernel, index: int) -> Location:
    """Map a node-level bit index onto a concrete location."""
    for seg in fault_surface(kernel):
        if index < seg.bits:
            if seg.kind == "state":
                return Location("state", byte=index // 8, bit=index % 8)
            slot, bit = locate_bit(seg.schema, index)
            return Location(seg.kind, seg.topic, slot, bit)
        index -= seg.bits
    raise CampaignError("bit index beyond the node's fault surface")


def trial_rng(seed: int, trial: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(entropy=seed, spawn_key=(trial,)))


def sample_fault(
    campaign: CampaignSpec,
    kernels: dict,
    trial: int,
    first_frame: int = 0,
    horizon: int | None = None,
) -> FaultSpec:
    """Draw one fault for ``trial``; a pure function of (seed, trial).

    ``kernels`` maps target node id -> kernel. Under ``node`` sampling the
    target node is uniform over the set and the bit is uniform within it;
    under ``bits`` sampling the bit is uniform over the whole set.
    """
    targets = sorted(kernels) if campaign.targets is None else list(campaign.targets)
    if not targets:
        raise CampaignError("empty target set")
    widths = []
    for t in targets:
        if t not in kernels:
            raise CampaignError(f"unknown target node {t}")
        widths.append(surface_bits(kernels[t]))
    if sum(widths) == 0:
        raise CampaignError("empty target set: no addressable bits")
    horizon = campaign.horizon if horizon is None else horizon
    if not horizon or horizon <= 0:
        raise CampaignError("horizon must be at least one frame")
    rng = trial_rng(campaign.seed, trial)
    if campaign.sampling == "node":
        live = [t for t, w in zip(targets, widths) if w > 0]
        node = live[int(rng.integers(len(live)))]
        index = int(rng.integers(widths[targets.index(node)]))
    else:
        flat = int(rng.integers(sum(widths)))
        for node, w in zip(targets, widths):
            if flat < w:
                index = flat
                break
            flat -= w
    frame = first_frame + int(rng.integers(horizon))
    u = float(rng.random())
    token = float(rng.random())
    if u < campaign.p_hang:
        return FaultSpec(node, None, frame, campaign.mode, "hang", token)
    if u < campaign.p_hang + campaign.p_crash:
        return FaultSpec(node, None, frame, campaign.mode, "crash", token)
    return FaultSpec(node, location_at(kernels[node], index), frame, campaign.mode, None, token)


# -- classification ----------------------------------------------------------


def actuator_deviates(golden_trace, faulty_trace, epsilon: float) -> bool:
    for topic, gold in golden_trace.actuator_outputs.items():
        got = faulty_trace.actuator_outputs.get(topic)
        if got is None or not values_close(got, gold, epsilon):
            return True
    return False


def classify_outcome(golden, faulty, epsilon: float = 1e-6, horizon: int | None = None) -> Outcome:
    """Classify a faulty run against the golden traces covering the same frames.

    ``faulty`` may start later and stop earlier than ``golden`` (trials resume
    from a snapshot and stop once re-converged); frames are matched by index.
    """
    by_frame = {t.frame: t for t in golden}
    detected = any(r.detected for t in faulty for r in t.records)
    recovered = any(r.recovered for t in faulty for r in t.records)
    last = None
    if horizon is not None and faulty:
        last = faulty[0].frame + horizon
    for tr in faulty:
        if last is not None and tr.frame >= last:
            break
        gold = by_frame.get(tr.frame)
        if gold is None:
            raise TraceMismatch(f"faulty run has frame {tr.frame} with no golden counterpart")
        if not tr.complete:
            cls = OutcomeClass.HANG if tr.failure == "hang" else OutcomeClass.CRASH
            return Outcome(cls, detected, recovered)
        if actuator_deviates(gold, tr, epsilon):
            return Outcome(OutcomeClass.SDC, detected, recovered)
    return Outcome(OutcomeClass.MASKED, detected, recovered)


# -- campaigns ---------------------------------------------------------------


@dataclass
class Golden:
    """Fault-free reference run under one policy map, plus trial bounds."""

    traces: list
    states: list
    first_frame: int
    horizon: int
    end_frame: int
    env: dict = field(default_factory=dict)


def drone_workload(workload) -> bool:
    return workload.name == "drone"


def analysis_env(workload) -> dict:
    """Runtime environment shared by all trials: slot ranges of an unprotected run."""
    n = workload.warmup + workload.frames
    traces, _ = golden_run(workload, n)
    return {"slot_ranges": observed_ranges(traces)}


def prepare_golden(workload, policies=None, env=None, horizon: int | None = None) -> Golden:
    env = analysis_env(workload) if env is None else env
    n = workload.warmup + workload.frames
    traces, states = golden_run(workload, n, policies, env)
    first = workload.warmup
    if drone_workload(workload):
        done = next((i for i, s in enumerate(states) if s.world.done), n)
        default_h = max(1, done - first)
    else:
        default_h = workload.frames
    h = default_h if horizon is None else min(horizon, n - first)
    return Golden(traces, states, first, h, n, env)


@dataclass(frozen=True)
class TrialResult:
    trial: int
    fault: FaultSpec
    outcome: Outcome
    mission: MissionResult | None
    frames_run: int


def run_trial(workload, golden: Golden, campaign: CampaignSpec, policies, trial: int) -> TrialResult:
    targets = campaign.targets or workload.graph.node_ids
    kernels = {t: workload.kernels[t] for t in targets}
    fault = sample_fault(campaign, kernels, trial, golden.first_frame, golden.horizon)
    outcome, mission, frames = execute_fault(workload, golden, fault, policies, campaign.epsilon)
    return TrialResult(trial, fault, outcome, mission, frames)


def execute_fault(workload, golden: Golden, fault: FaultSpec, policies=None, epsilon: float = 1e-6):
    """Replay one fault from the golden snapshot of its frame.

    Returns ``(outcome, mission result or None, frames run)``.
    """
    policies = policies or {}
    drone = drone_workload(workload)
    sim = golden.states[fault.frame]
    injection = [fault.injection()]
    faulty = []
    converged = False
    for f in range(fault.frame, golden.end_frame):
        trace, sim = step_frame(workload, sim, injection if f == fault.frame else (), policies, golden.env)
        faulty.append(trace)
        if not trace.complete:
            break
        if not drone and actuator_deviates(golden.traces[f], trace, epsilon):
            break
        if sim.same_as(golden.states[f + 1]):
            converged = True
            break
        if drone and sim.world.done:
            break
    outcome = classify_outcome(golden.traces, faulty, epsilon)
    mission = None
    if drone and outcome.cls not in (OutcomeClass.HANG, OutcomeClass.CRASH):
        world = golden.states[-1].world if converged else sim.world
        mission = MissionResult.from_world(world)
    return outcome, mission, len(faulty)


def _tally(results) -> dict[str, OutcomeCounts]:
    out: dict[str, OutcomeCounts] = {}
    for r in results:
        cls = r.outcome.cls
        c = OutcomeCounts(
            masked=int(cls is OutcomeClass.MASKED),
            sdc=int(cls is OutcomeClass.SDC),
            hang=int(cls is OutcomeClass.HANG),
            crash=int(cls is OutcomeClass.CRASH),
            detected=int(r.outcome.detected),
            recovered=int(r.outcome.recovered),
            mission_failures=int(r.mission is not None and r.mission.failed),
        )
        out[r.fault.node] = out.get(r.fault.node, OutcomeCounts()) + c
    return out


@dataclass
class CampaignResult:
    counts: dict[str, OutcomeCounts]
    trials: list[TrialResult]
    golden: Golden

    @property
    def total(self) -> OutcomeCounts:
        out = OutcomeCounts()
        for c in self.counts.values():
            out = out + c
        return out


def thread_count() -> int:
    raw = os.environ.get("VAPBENCH_THREADS")
    if raw:
        try:
            return max(1, int(raw))
        except ValueError:
            raise CampaignError(f"VAPBENCH_THREADS={raw!r} is not an integer") from None
    return os.cpu_count() or 1


# Worker-side context, installed by fork before any trial runs.
_CTX: tuple | None = None


def _init_worker(ctx):
    global _CTX
    _CTX = ctx


def _run_chunk(bounds: tuple[int, int]) -> list[TrialResult]:
    workload, golden, campaign, policies = _CTX
    return [_checked_trial(workload, golden, campaign, policies, i) for i in range(*bounds)]


def _checked_trial(workload, golden, campaign, policies, i):
    try:
        return run_trial(workload, golden, campaign, policies, i)
    except (CampaignError, TraceMismatch):
        raise
    except Exception as exc:
        raise CampaignError(f"trial {i}: {type(exc).__name__}: {exc}") from exc


def run_campaign(workload, campaign: CampaignSpec, policies=None, golden: Golden | None = None,
                 env: dict | None = None, threads: int | None = None) -> CampaignResult:
    """Run ``campaign.trials`` independent trials; results depend only on the seed."""
    policies = policies if policies is not None else {}
    if not isinstance(policies, dict):
        policies = policies.policies  # a PolicyMap
    targets = campaign.targets or workload.graph.node_ids
    for t in targets:
        if t not in workload.graph.node_ids:
            raise CampaignError(f"unknown target node {t}")
    if not targets or sum(surface_bits(workload.kernels[t]) for t in targets) == 0:
        raise CampaignError("empty target set")
    golden = golden or prepare_golden(workload, policies, env, campaign.horizon)
    threads = thread_count() if threads is None else threads
    n = campaign.trials
    if threads <= 1 or n < 64:
        results = [_checked_trial(workload, golden, campaign, policies, i) for i in range(n)]
    else:
        step = max(16, n // (threads * 8))
        chunks = [(a, min(n, a + step)) for a in range(0, n, step)]
        with ProcessPoolExecutor(threads, mp_context=get_context("fork"), initializer=_init_worker,
                                 initargs=((workload, golden, campaign, policies),)) as pool:
            results = [r for part in pool.map(_run_chunk, chunks) for r in part]
    counts = merge_counts([_tally(results)])
    return CampaignResult(counts, results, golden)


_CAMPAIGN_CASTS = {
    "trials": int, "seed": int, "horizon_frames": int, "epsilon": float,
    "p_hang": float, "p_crash": float, "mode": str, "sampling": str,
}


def parse_campaign(kv: KVFile) -> CampaignSpec:
    """``[campaign]`` section: the keys of :data:`_CAMPAIGN_CASTS` plus ``targets``."""
    items = kv.items("campaign")
    unknown = set(items) - set(_CAMPAIGN_CASTS) - {"targets"}
    if unknown:
        raise ConfigError(f"{kv.source}: [campaign] unknown key(s) {', '.join(sorted(unknown))}")
    kwargs = {k: kv.get("campaign", k, cast=c) for k, c in _CAMPAIGN_CASTS.items() if k in items}
    if "horizon_frames" in kwargs:
        kwargs["horizon"] = kwargs.pop("horizon_frames")
    targets = kv.get("campaign", "targets")
    if targets and targets.strip().lower() != "all":
        kwargs["targets"] = tuple(parse_list(targets))
    try:
        return CampaignSpec(**kwargs)
    except CampaignError as exc:
        raise ConfigError(f"{kv.source}: [campaign] {exc}") from None


def load_campaign(path) -> CampaignSpec:
    return parse_campaign(KVFile.load(path))
