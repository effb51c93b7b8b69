"""Frame-by-frame execution of a workload under per-node protection policies."""

from __future__ import annotations

import hashlib
from dataclasses import dataclass, field
from typing import Any

from vapbench.pipeline.encoding import apply_bit_flip, pack_values, slot_bit_index, unpack_values
from vapbench.pipeline.graph import BUCKETS, PipelineGraph

# Arithmetic failures raised by a kernel fed corrupted data surface as a
# crash of that node rather than aborting the campaign.
KERNEL_FAULTS = (ArithmeticError, ValueError, IndexError, TypeError, KeyError, RecursionError)


class IncompleteTrace(ValueError):
    pass


@dataclass(frozen=True)
class NodeRecord:
    node: str
    inputs: dict[str, tuple]
    outputs: dict[str, tuple]
    executions: int
    latency_us: int
    bucket: str
    detected: bool = False
    recovered: bool = False


@dataclass(frozen=True)
class FrameTrace:
    frame: int
    records: tuple[NodeRecord, ...]
    actuator_outputs: dict[str, tuple]
    failed_node: str | None = None
    failure: str | None = None  # "hang" or "crash" when unrecovered

    @property
    def complete(self) -> bool:
        return self.failed_node is None

    @property
    def stage_us(self) -> dict[str, int]:
        out = {b: 0 for b in BUCKETS}
        for r in self.records:
            out[r.bucket] += r.latency_us
        return out

    @property
    def end_to_end_latency(self) -> float:
        return end_to_end_latency(self)[0]


def end_to_end_latency(trace: FrameTrace) -> tuple[float, dict[str, float]]:
    """Total and per-bucket latency (ms) of one frame; the serial path is the sum."""
    if not trace.complete:
        raise IncompleteTrace(f"frame {trace.frame} failed at node {trace.failed_node}")
    stages = {b: us / 1000.0 for b, us in trace.stage_us.items()}
    return sum(trace.stage_us.values()) / 1000.0, stages


@dataclass(frozen=True)
class SimState:
    """Everything carried between frames: world, kernel states, protection state."""

    world: Any
    node_states: tuple
    guards: tuple

    def same_as(self, other: "SimState") -> bool:
        return (
            self.world.key() == other.world.key()
            and self.node_states == other.node_states
            and self.guards == other.guards
        )


@dataclass(frozen=True)
class Location:
    kind: str  # "input" | "output" | "state"
    topic: str = ""
    slot: int = 0
    bit: int = 0  # bit within slot, or within byte for state faults
    byte: int = 0


@dataclass(frozen=True)
class Injection:
    """An armed fault for one node in one frame (the runtime view of a FaultSpec)."""

    node: str
    location: Location | None = None
    mode: str = "flip"
    event: str | None = None  # "hang" | "crash"
    token: float = 0.0  # deterministic uniform draw used by partial-coverage schemes


def corrupt_message(values: tuple, sch, slot: int, bit: int, mode: str = "flip") -> tuple:
    bits = pack_values(sch, values)
    return unpack_values(sch, apply_bit_flip(bits, slot_bit_index(sch, slot, bit), mode))


def corrupt_state(values: tuple, sch, byte: int, bit: int, mode: str = "flip") -> tuple:
    bits = pack_values(sch, values)
    index = (len(bits) - 1 - byte) * 8 + bit
    return unpack_values(sch, apply_bit_flip(bits, index, mode))


@dataclass
class Execution:
    """One node's execution context handed to a protection policy."""

    node: Any  # NodeSpec
    kernel: Any
    inputs: dict[str, tuple]
    state: tuple
    guard: Any
    injection: Injection | None
    env: dict = field(default_factory=dict)
    frame: int = 0

    @property
    def faulty(self) -> bool:
        return self.injection is not None and self.injection.location is not None

    @property
    def event(self) -> str | None:
        return self.injection.event if self.injection is not None else None

    def received_inputs(self) -> dict[str, tuple]:
        """Inputs as seen by the (first) execution, with an input fault applied."""
        loc = self.injection.location if self.faulty else None
        if loc is None or loc.kind != "input":
            return self.inputs
        out = dict(self.inputs)
        out[loc.topic] = corrupt_message(
            out[loc.topic], self.kernel.inputs[loc.topic], loc.slot, loc.bit, self.injection.mode
        )
        return out

    def run(self, inputs: dict[str, tuple] | None = None, faulty: bool = False) -> tuple[dict, tuple]:
        """Run the kernel once; ``faulty`` arms state/output faults in this execution."""
        inp = self.inputs if inputs is None else inputs
        state = self.state
        loc = self.injection.location if (faulty and self.faulty) else None
        if loc is not None and loc.kind == "state":
            state = corrupt_state(state, self.kernel.state_schema, loc.byte, loc.bit, self.injection.mode)
        outputs, new_state = self.kernel.run(inp, state)
        if loc is not None and loc.kind == "output":
            outputs = dict(outputs)
            outputs[loc.topic] = corrupt_message(
                outputs[loc.topic], self.kernel.outputs[loc.topic], loc.slot, loc.bit, self.injection.mode
            )
        return outputs, new_state


@dataclass
class NodeResult:
    outputs: dict[str, tuple] | None
    state: tuple
    guard: Any
    executions: int
    latency_us: int
    detected: bool = False
    recovered: bool = False
    failure: str | None = None


def step_frame(workload, sim: SimState, injections=(), policies=None, env=None) -> tuple[FrameTrace, SimState]:
    """Run every node once in topological order and advance the world.

    ``policies`` maps node id -> protection policy (missing ids run unprotected).
    """
    from vapbench.protection import NO_PROTECTION

    graph: PipelineGraph = workload.graph
    policies = policies or {}
    env = env or {}
    world = sim.world
    sensors = world.sense()
    by_node = {inj.node: inj for inj in injections}
    topics: dict[str, tuple] = {}
    records = []
    new_states, new_guards = list(sim.node_states), list(sim.guards)
    failed = failure = None
    for idx, node in enumerate(graph.nodes):
        kernel = workload.kernels[node.id]
        inputs = {}
        for t in kernel.inputs:
            inputs[t] = sensors[t] if t in kernel.sensor_inputs else topics[t]
        ex = Execution(
            node, kernel, inputs, sim.node_states[idx], sim.guards[idx], by_node.get(node.id), env, world.frame
        )
        policy = policies.get(node.id, NO_PROTECTION)
        try:
            res = policy.execute(ex)
        except KERNEL_FAULTS:
            res = policy.on_kernel_fault(ex)
        if res.failure is not None:
            failed, failure = node.id, res.failure
            records.append(NodeRecord(node.id, ex.received_inputs(), {}, res.executions, res.latency_us, node.bucket))
            break
        topics.update(res.outputs)
        new_states[idx], new_guards[idx] = res.state, res.guard
        records.append(
            NodeRecord(
                node.id, ex.received_inputs(), res.outputs, res.executions, res.latency_us,
                node.bucket, res.detected, res.recovered,
            )
        )
    if failed is not None:
        trace = FrameTrace(world.frame, tuple(records), {}, failed, failure)
        return trace, sim
    actuators = {t: topics[t] for t in world.actuator_topics()}
    cmd = actuators[world.actuator_topics()[0]]
    trace = FrameTrace(world.frame, tuple(records), actuators)
    return trace, SimState(world.advance(cmd), tuple(new_states), tuple(new_guards))


def initial_sim(workload, policies=None, env=None) -> SimState:
    from vapbench.protection import NO_PROTECTION

    policies = policies or {}
    states, guards = [], []
    for node in workload.graph.nodes:
        kernel = workload.kernels[node.id]
        states.append(kernel.initial_state())
        guards.append(policies.get(node.id, NO_PROTECTION).init_guard(node, kernel, env or {}))
    return SimState(workload.initial_world(), tuple(states), tuple(guards))


def golden_run(workload, n_frames: int, policies=None, env=None) -> tuple[list[FrameTrace], list[SimState]]:
    """Fault-free run. Returns the traces and the state *before* each frame
    (plus the final state), so trials can resume from any frame."""
    sim = initial_sim(workload, policies, env)
    traces, states = [], [sim]
    for _ in range(n_frames):
        trace, sim = step_frame(workload, sim, (), policies, env)
        traces.append(trace)
        states.append(sim)
    return traces, states


def trace_digest(traces) -> str:
    """SHA-256 over every record in ``traces`` (values hashed by exact ``repr``)."""
    h = hashlib.sha256()
    for tr in traces:
        h.update(f"F{tr.frame}|{tr.failed_node}|{tr.failure}".encode())
        for rec in tr.records:
            h.update(f"N{rec.node}|{rec.executions}|{rec.latency_us}|{rec.detected}|{rec.recovered}".encode())
            for group, values in (("i", rec.inputs), ("o", rec.outputs)):
                for topic in sorted(values):
                    h.update(f"{group}:{topic}".encode())
                    h.update(repr(values[topic]).encode())
    return h.hexdigest()
