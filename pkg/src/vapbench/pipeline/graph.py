"""Node graph description, validation and deterministic ordering."""

from __future__ import annotations

import heapq
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import TYPE_CHECKING

from vapbench.pipeline.kvconfig import ConfigError, KVFile

if TYPE_CHECKING:
    from vapbench.workloads.registry import KernelId


class Stage(str, Enum):
    SENSING = "Sensing"
    PERCEPTION = "Perception"
    LOCALIZATION = "Localization"
    PLANNING = "Planning"
    DECISION_MAKING = "DecisionMaking"
    CONTROL = "Control"


class End(str, Enum):
    FRONT = "FrontEnd"
    BACK = "BackEnd"


FRONT_STAGES = frozenset({Stage.SENSING, Stage.PERCEPTION, Stage.LOCALIZATION})

# Latency-breakdown columns; Sensing has no column of its own.
BUCKETS = ("perception", "localization", "planning", "control")
DEFAULT_BUCKET = {
    Stage.SENSING: "perception",
    Stage.PERCEPTION: "perception",
    Stage.LOCALIZATION: "localization",
    Stage.PLANNING: "planning",
    Stage.DECISION_MAKING: "planning",
    Stage.CONTROL: "control",
}


class GraphError(ValueError):
    pass


@dataclass(frozen=True)
class NodeCost:
    """Per-node overhead coefficients fitted to the latency breakdown tables."""

    ad_detect_us: int = 0
    ad_fp_rate: float = 0.0
    tr_compare_us: int = 0
    queue_us: int = 0


@dataclass(frozen=True)
class NodeSpec:
    id: str
    stage: Stage
    kernel: "KernelId"
    nominal_latency: int  # microseconds of kernel compute
    state_size: int  # bytes of checkpointable state (cost model footprint)
    core: str
    comm_latency: int = 0  # microseconds of message transport charged to the node
    bucket: str = ""
    cost: NodeCost = field(default_factory=NodeCost)

    @property
    def end(self) -> End:
        return End.FRONT if self.stage in FRONT_STAGES else End.BACK

    @property
    def base_latency(self) -> int:
        return self.nominal_latency + self.comm_latency


@dataclass(frozen=True)
class CoreSpec:
    id: str
    power_w: float = 0.0
    copy_power_w: float = 0.0
    copy_mass_kg: float = 0.0


@dataclass(frozen=True)
class Edge:
    producer: str
    consumer: str
    topic: str


@dataclass(frozen=True)
class PipelineGraph:
    name: str
    nodes: tuple[NodeSpec, ...]  # deterministic topological order
    edges: tuple[Edge, ...]
    sinks: tuple[str, ...]
    cores: tuple[CoreSpec, ...] = ()
    frame_period_s: float = 0.1

    def node(self, node_id: str) -> NodeSpec:
        for n in self.nodes:
            if n.id == node_id:
                return n
        raise KeyError(node_id)

    @property
    def node_ids(self) -> tuple[str, ...]:
        return tuple(n.id for n in self.nodes)

    def inbound(self, node_id: str) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.consumer == node_id)

    def outbound(self, node_id: str) -> tuple[Edge, ...]:
        return tuple(e for e in self.edges if e.producer == node_id)

    @property
    def sources(self) -> tuple[str, ...]:
        consumers = {e.consumer for e in self.edges}
        return tuple(n.id for n in self.nodes if n.id not in consumers)

    def by_end(self, end: End) -> tuple[NodeSpec, ...]:
        return tuple(n for n in self.nodes if n.end is end)

    def core(self, core_id: str) -> CoreSpec:
        for c in self.cores:
            if c.id == core_id:
                return c
        return CoreSpec(core_id)


def _topo_order(ids: list[str], edges: list[Edge]) -> list[str]:
    indeg = {i: 0 for i in ids}
    succ: dict[str, set[str]] = {i: set() for i in ids}
    for e in edges:
        if e.consumer not in succ[e.producer]:
            succ[e.producer].add(e.consumer)
            indeg[e.consumer] += 1
    ready = [i for i in ids if indeg[i] == 0]
    heapq.heapify(ready)
    order = []
    while ready:
        i = heapq.heappop(ready)
        order.append(i)
        for j in succ[i]:
            indeg[j] -= 1
            if indeg[j] == 0:
                heapq.heappush(ready, j)
    if len(order) != len(ids):
        stuck = sorted(i for i in ids if i not in order)
        raise GraphError(f"cycle detected among nodes: {', '.join(stuck)}")
    return order


def _reachable(start: str, edges: list[Edge]) -> set[str]:
    seen = {start}
    stack = [start]
    while stack:
        cur = stack.pop()
        for e in edges:
            if e.producer == cur and e.consumer not in seen:
                seen.add(e.consumer)
                stack.append(e.consumer)
    return seen


def build_graph(config: dict) -> PipelineGraph:
    """Validate a pipeline description dict and return the ordered graph.

    ``config`` keys: ``name``, ``frame_period_ms``, ``nodes`` (dicts with
    id/stage/kernel/latency_us/state_bytes/core and optional comm_us, bucket
    and cost keys), ``edges`` (producer, consumer, topic) triples, ``sinks``
    and ``cores``.
    """
    from vapbench.workloads.registry import KernelId, kernel_for

    nodes: dict[str, NodeSpec] = {}
    for raw in config.get("nodes", []):
        nid = raw["id"]
        if nid in nodes:
            raise GraphError(f"duplicate node id: {nid}")
        try:
            kid = KernelId(raw["kernel"])
        except ValueError:
            raise GraphError(f"unknown kernel id {raw['kernel']!r} on node {nid}") from None
        try:
            stage = Stage(raw["stage"])
        except ValueError:
            raise GraphError(f"unknown stage {raw['stage']!r} on node {nid}") from None
        bucket = raw.get("bucket") or DEFAULT_BUCKET[stage]
        if bucket not in BUCKETS:
            raise GraphError(f"unknown latency bucket {bucket!r} on node {nid}")
        spec = NodeSpec(
            id=nid,
            stage=stage,
            kernel=kid,
            nominal_latency=int(raw["latency_us"]),
            state_size=int(raw["state_bytes"]),
            core=raw.get("core", "core0"),
            comm_latency=int(raw.get("comm_us", 0)),
            bucket=bucket,
            cost=NodeCost(
                ad_detect_us=int(raw.get("ad_detect_us", 0)),
                ad_fp_rate=float(raw.get("ad_fp_rate", 0.0)),
                tr_compare_us=int(raw.get("tr_compare_us", 0)),
                queue_us=int(raw.get("queue_us", 0)),
            ),
        )
        if spec.nominal_latency <= 0:
            raise GraphError(f"node {nid}: latency must be positive")
        if spec.state_size <= 0:
            raise GraphError(f"node {nid}: state size must be positive")
        nodes[nid] = spec

    edges = []
    for producer, consumer, topic in config.get("edges", []):
        for end in (producer, consumer):
            if end not in nodes:
                raise GraphError(f"edge {producer} -> {consumer} ({topic}) names unknown node {end}")
        edges.append(Edge(producer, consumer, topic))

    # structure first, so a cycle is reported as such even if its topics are also wrong
    order = _topo_order(sorted(nodes), edges)
    for e in edges:
        pk, ck = kernel_for(nodes[e.producer].kernel), kernel_for(nodes[e.consumer].kernel)
        if e.topic not in pk.outputs:
            raise GraphError(f"edge {e.producer} -> {e.consumer}: {e.producer} does not publish {e.topic!r}")
        if e.topic not in ck.inputs:
            raise GraphError(f"edge {e.producer} -> {e.consumer}: {e.consumer} does not consume {e.topic!r}")

    for nid, spec in nodes.items():
        k = kernel_for(spec.kernel)
        fed = {e.topic for e in edges if e.consumer == nid}
        missing = [t for t in k.inputs if t not in fed and t not in k.sensor_inputs]
        if missing:
            raise GraphError(f"node {nid}: no edge provides input topic(s) {', '.join(missing)}")
        dup = [t for t in fed if sum(1 for e in edges if e.consumer == nid and e.topic == t) > 1]
        if dup:
            raise GraphError(f"node {nid}: topic {dup[0]!r} fed by more than one edge")

    sinks = tuple(config.get("sinks", []))
    if not sinks:
        raise GraphError("pipeline declares no sink")
    for s in sinks:
        if s not in nodes:
            raise GraphError(f"unknown sink node {s}")
    consumers = {e.consumer for e in edges}
    sources = [n for n in order if n not in consumers]
    for src in sources:
        reach = _reachable(src, edges)
        for s in sinks:
            if s not in reach:
                raise GraphError(f"unreachable sink {s} from source {src}")

    cores = tuple(
        CoreSpec(
            c["id"],
            float(c.get("power_w", 0.0)),
            float(c.get("copy_power_w", 0.0)),
            float(c.get("copy_mass_kg", 0.0)),
        )
        for c in config.get("cores", [])
    )
    return PipelineGraph(
        name=config.get("name", "pipeline"),
        nodes=tuple(nodes[i] for i in order),
        edges=tuple(edges),
        sinks=sinks,
        cores=cores,
        frame_period_s=float(config.get("frame_period_ms", 100.0)) / 1000.0,
    )


_NODE_KEYS = {
    "stage", "kernel", "latency_us", "state_bytes", "core", "comm_us", "bucket",
    "ad_detect_us", "ad_fp_rate", "tr_compare_us", "queue_us",
}


def parse_pipeline(kv: KVFile) -> dict:
    """Turn a pipeline description file into the dict accepted by :func:`build_graph`."""
    cfg: dict = {
        "name": kv.get("pipeline", "name", "pipeline"),
        "frame_period_ms": kv.get("pipeline", "frame_period_ms", 100.0, cast=float),
        "nodes": [],
        "edges": [],
        "sinks": [],
        "cores": [],
    }
    for _, name in kv.sections("node"):
        items = kv.items("node", name)
        unknown = set(items) - _NODE_KEYS
        if unknown:
            raise ConfigError(f"{kv.source}: [node {name}] unknown key(s) {', '.join(sorted(unknown))}")
        for key in ("stage", "kernel", "latency_us", "state_bytes"):
            kv.require("node", key, name=name)
        node = {"id": name, **{k: v for k, v in items.items() if v is not None}}
        for key in ("latency_us", "state_bytes", "comm_us", "ad_detect_us", "tr_compare_us", "queue_us"):
            if key in node:
                node[key] = kv.get("node", key, name=name, cast=lambda s: int(float(s)))
        if "ad_fp_rate" in node:
            node["ad_fp_rate"] = kv.get("node", "ad_fp_rate", name=name, cast=float)
        cfg["nodes"].append(node)
    for _, name in kv.sections("core"):
        cfg["cores"].append(
            {
                "id": name,
                "power_w": kv.get("core", "power_w", 0.0, name=name, cast=float),
                "copy_power_w": kv.get("core", "copy_power_w", 0.0, name=name, cast=float),
                "copy_mass_kg": kv.get("core", "copy_mass_kg", 0.0, name=name, cast=float),
            }
        )
    for line in kv.lines("edges"):
        try:
            arrow, topic = line.rsplit(":", 1)
            producer, consumer = arrow.split("->")
        except ValueError:
            raise ConfigError(
                f"{kv.source}: [edges] malformed line {line!r}, expected 'producer -> consumer : topic'"
            ) from None
        cfg["edges"].append((producer.strip(), consumer.strip(), topic.strip()))
    cfg["sinks"] = [s.strip() for s in kv.lines("sinks")]
    return cfg


def load_pipeline(path: str | Path) -> PipelineGraph:
    kv = KVFile.load(path)
    try:
        return build_graph(parse_pipeline(kv))
    except GraphError as exc:
        raise ConfigError(f"{kv.source}: {exc}") from None
