"""Resilience and latency figures computed from campaign tallies and traces."""

from __future__ import annotations

import math
from dataclasses import dataclass, fields
from enum import Enum
from typing import Iterable, Mapping

from vapbench.pipeline.graph import BUCKETS
from vapbench.pipeline.runtime import end_to_end_latency


class MetricsError(ValueError):
    pass


@dataclass(frozen=True)
class OutcomeCounts:
    masked: int = 0
    sdc: int = 0
    hang: int = 0
    crash: int = 0
    detected: int = 0
    recovered: int = 0
    mission_failures: int = 0  # drone only: collision, infeasible or exhausted

    @property
    def trials(self) -> int:
        return self.masked + self.sdc + self.hang + self.crash

    def __add__(self, other: "OutcomeCounts") -> "OutcomeCounts":
        return OutcomeCounts(*(getattr(self, f.name) + getattr(other, f.name) for f in fields(self)))

    def as_dict(self) -> dict[str, int]:
        d = {f.name: getattr(self, f.name) for f in fields(self)}
        d["trials"] = self.trials
        return d


def merge_counts(parts: Iterable[Mapping[str, OutcomeCounts]]) -> dict[str, OutcomeCounts]:
    out: dict[str, OutcomeCounts] = {}
    for part in parts:
        for node, c in part.items():
            out[node] = out.get(node, OutcomeCounts()) + c
    return dict(sorted(out.items()))


@dataclass(frozen=True)
class EprReport:
    per_node: dict[str, float]  # percent
    aggregate: float  # percent, every trial weighted equally
    trials: dict[str, int]

    def stderr(self, node: str | None = None) -> float:
        """Standard error (pp) of a per-node or the aggregate proportion."""
        n = self.trials[node] if node else sum(self.trials.values())
        p = (self.per_node[node] if node else self.aggregate) / 100.0
        return 100.0 * math.sqrt(p * (1 - p) / n) if n else math.inf


def compute_epr(counts: Mapping[str, OutcomeCounts] | OutcomeCounts) -> EprReport:
    """SDC share of trials; hangs and crashes are not propagation."""
    if isinstance(counts, OutcomeCounts):
        counts = {"all": counts}
    total = sum(c.trials for c in counts.values())
    if total == 0 or any(c.trials == 0 for c in counts.values()):
        raise MetricsError("EPR needs at least one trial per node")
    per_node = {n: 100.0 * c.sdc / c.trials for n, c in counts.items()}
    aggregate = 100.0 * sum(c.sdc for c in counts.values()) / total
    return EprReport(per_node, aggregate, {n: c.trials for n, c in counts.items()})


class MissionOutcome(str, Enum):
    SUCCESS = "Success"
    COLLISION = "Collision"
    INFEASIBLE = "Infeasible"
    EXHAUSTED = "EnergyExhausted"


_STATUS = {
    "success": MissionOutcome.SUCCESS,
    "collision": MissionOutcome.COLLISION,
    "infeasible": MissionOutcome.INFEASIBLE,
    "exhausted": MissionOutcome.EXHAUSTED,
    "flying": MissionOutcome.EXHAUSTED,  # still airborne when the frame budget ran out
}


@dataclass(frozen=True)
class MissionResult:
    outcome: MissionOutcome
    distance_m: float
    time_s: float
    energy_j: float

    @classmethod
    def from_world(cls, world) -> "MissionResult":
        sc = world.scenario
        return cls(_STATUS[world.status], world.distance, world.frame * sc.dt, world.energy)

    @property
    def failed(self) -> bool:
        return self.outcome is not MissionOutcome.SUCCESS


def mission_failure_rate(results: Iterable[MissionResult | MissionOutcome]) -> float:
    results = list(results)
    if not results:
        raise MetricsError("mission failure rate of an empty result list")
    bad = sum(1 for r in results if (r.outcome if isinstance(r, MissionResult) else r) is not MissionOutcome.SUCCESS)
    return 100.0 * bad / len(results)


def failure_rate(counts: OutcomeCounts) -> float:
    """Drone per-node mission failure rate (percent) from a tally."""
    if counts.trials == 0:
        raise MetricsError("mission failure rate of an empty tally")
    return 100.0 * counts.mission_failures / counts.trials


@dataclass(frozen=True)
class LatencyBreakdown:
    stages_ms: dict[str, float]
    total_ms: float


def latency_breakdown(traces) -> LatencyBreakdown:
    """Mean per-bucket latency over frames; the total is the sum of the means."""
    traces = list(traces)
    if not traces:
        raise MetricsError("latency breakdown of an empty trace list")
    sums = {b: 0 for b in BUCKETS}
    for tr in traces:
        _, stages = end_to_end_latency(tr)
        for b in BUCKETS:
            sums[b] += tr.stage_us[b]
    stages_ms = {b: sums[b] / len(traces) / 1000.0 for b in BUCKETS}
    total_us = sum(sums.values())
    return LatencyBreakdown(stages_ms, total_us / len(traces) / 1000.0)
