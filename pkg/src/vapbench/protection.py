"""Protection schemes as node-execution wrappers, plus VAP assignment and cost accounting.

Every policy object is immutable. Per-node mutable protection state (anomaly
windows, checkpoint buffers) lives in the *guard* value that the runtime
threads through :class:`~vapbench.pipeline.runtime.SimState`, so a trial that
resumes from a golden snapshot resumes the wrappers too.
"""

from __future__ import annotations

import math
import statistics
from dataclasses import dataclass, field
from typing import Callable, Sequence

from vapbench.pipeline.encoding import ScalarKind, pack_values
from vapbench.pipeline.graph import CoreSpec, End, NodeSpec, PipelineGraph
from vapbench.pipeline.kvconfig import ConfigError
from vapbench.pipeline.runtime import KERNEL_FAULTS, Execution, NodeResult

SCHEMES = ("none", "anomaly", "temporal", "modular", "checkpoint", "vap")
MB = 1_000_000


class UnresolvableVote(RuntimeError):
    pass


class CheckpointMissing(KeyError):
    pass


class ProtectionError(ValueError):
    pass


def _safe_run(ex: Execution, inputs, faulty: bool):
    """One kernel execution; a kernel fault (corrupted data) yields ``None``."""
    try:
        return ex.run(inputs, faulty=faulty)
    except KERNEL_FAULTS:
        return None


def _restart(ex: Execution, latency: int, executions: int, guard=None) -> NodeResult:
    """Hang/crash recovery: kill the process and run it again from its inputs."""
    res = _safe_run(ex, ex.received_inputs(), False)
    guard = ex.guard if guard is None else guard
    if res is None:
        return NodeResult(None, ex.state, guard, executions + 1, latency + ex.node.nominal_latency,
                          True, False, "crash")
    out, st = res
    return NodeResult(out, st, guard, executions + 1, latency + ex.node.nominal_latency, True, True)


def encode_result(kernel, res) -> bytes:
    """Canonical bytes of one execution (outputs in topic order, then state)."""
    if res is None:
        return b""
    outputs, state = res
    parts = [pack_values(kernel.outputs[t], outputs[t]) for t in kernel.outputs]
    parts.append(pack_values(kernel.state_schema, state))
    return b"".join(parts)


def vote(payloads: Sequence[bytes], voter: str = "majority", reexec: Callable[[], Sequence[bytes]] | None = None):
    """Resolve redundant payloads.

    ``majority`` (n = 3) returns the payload shared by at least two copies.
    ``dmr`` (n = 2) returns the common payload; on mismatch it re-executes
    both copies via ``reexec`` and returns the agreeing pair.
    """
    n = len(payloads)
    if voter == "majority":
        if n != 3:
            raise ValueError(f"majority voter needs 3 payloads, got {n}")
        a, b, c = payloads
        if a == b or a == c:
            return a
        if b == c:
            return b
        raise UnresolvableVote("three pairwise-distinct payloads")
    if voter == "dmr":
        if n != 2:
            raise ValueError(f"dmr voter needs 2 payloads, got {n}")
        if payloads[0] == payloads[1]:
            return payloads[0]
        if reexec is None:
            raise UnresolvableVote("dmr mismatch and no re-execution available")
        again = list(reexec())
        if len(again) != 2 or again[0] != again[1]:
            raise UnresolvableVote("dmr re-execution still disagrees")
        return again[0]
    raise ValueError(f"unknown voter {voter!r}")


# -- None -------------------------------------------------------------------


@dataclass(frozen=True)
class NoProtection:
    name = "none"

    def init_guard(self, node, kernel, env):
        return None

    def latency_us(self, node: NodeSpec) -> int:
        return node.base_latency

    def execute(self, ex: Execution) -> NodeResult:
        if ex.event is not None:
            return NodeResult(None, ex.state, ex.guard, 1, ex.node.base_latency, failure=ex.event)
        out, st = ex.run(ex.received_inputs(), faulty=True)
        return NodeResult(out, st, ex.guard, 1, ex.node.base_latency)

    def on_kernel_fault(self, ex: Execution) -> NodeResult:
        return NodeResult(None, ex.state, ex.guard, 1, ex.node.base_latency, failure="crash")


NO_PROTECTION = NoProtection()


# -- anomaly detection -------------------------------------------------------


def anomaly_detect(history: Sequence[float], candidate: float, sigma_k: float, floor: float = 0.0) -> bool:
    """True when ``candidate`` is an outlier against ``history`` (NaN always is)."""
    if len(history) < 2:
        raise ValueError("anomaly window needs at least two samples")
    c = float(candidate)
    if not math.isfinite(c):
        return True
    hist = [float(h) for h in history]
    mean = math.fsum(hist) / len(hist)
    sd = statistics.stdev(hist)
    return abs(c - mean) > sigma_k * max(sd, floor)


def category_break(history: Sequence, candidate) -> bool:
    """Outlier test for a categorical slot: a steady history that suddenly changes."""
    if len(history) < 2:
        raise ValueError("anomaly window needs at least two samples")
    first = history[0]
    return all(h == first for h in history) and candidate != first


def observed_ranges(traces) -> dict[str, dict[str, tuple[float, ...]]]:
    """Per node/topic/slot value range (max - min) seen in fault-free traces."""
    lo: dict = {}
    hi: dict = {}
    for tr in traces:
        for rec in tr.records:
            for topic, vals in rec.outputs.items():
                key = (rec.node, topic)
                fv = [float(v) for v in vals]
                if key not in lo:
                    lo[key], hi[key] = list(fv), list(fv)
                else:
                    lo[key] = [min(a, b) for a, b in zip(lo[key], fv)]
                    hi[key] = [max(a, b) for a, b in zip(hi[key], fv)]
    out: dict = {}
    for (node, topic), mins in lo.items():
        out.setdefault(node, {})[topic] = tuple(b - a for a, b in zip(mins, hi[(node, topic)]))
    return out


@dataclass(frozen=True)
class AnomalyDetection:
    """Sliding-window outlier check on every output slot of a node.

    Interval slots use a z-score against the window; categorical slots (bools,
    modes) flag a change after a steady window. ``reexecute`` runs the node
    again on an outlier; a transient flip inside the execution is cleared, a
    corrupted input is not. ``replace`` substitutes the window mean for
    interval outliers and re-executes on categorical ones.
    """

    window_len: int = 4
    sigma_k: float = 3.0
    action: str = "replace"  # | "reexecute"
    floor_frac: float = 0.5  # sigma floor as a fraction of the slot's fault-free range
    name = "anomaly"

    def __post_init__(self):
        if self.window_len < 2:
            raise ProtectionError("window_len must be >= 2")
        if self.action not in ("reexecute", "replace"):
            raise ProtectionError(f"unknown anomaly action {self.action!r}")

    def init_guard(self, node, kernel, env):
        return tuple(() for _ in kernel.outputs)

    def latency_us(self, node: NodeSpec) -> int:
        c = node.cost
        return node.base_latency + c.ad_detect_us + int(round(c.ad_fp_rate * node.nominal_latency))

    def _flagged(self, ex: Execution, outputs) -> dict[str, list[int]]:
        ranges = ex.env.get("slot_ranges", {}).get(ex.node.id, {})
        flagged = {}
        for window, topic in zip(ex.guard, ex.kernel.outputs):
            if len(window) < self.window_len:
                continue
            rng = ranges.get(topic)
            sch = ex.kernel.outputs[topic]
            bad = []
            for i, cand in enumerate(outputs[topic]):
                hist = [w[i] for w in window]
                if not sch[i].interval:
                    hit = category_break(hist, cand)
                else:
                    hit = anomaly_detect(hist, cand, self.sigma_k, self.floor_frac * rng[i] if rng else 0.0)
                if hit:
                    bad.append(i)
            if bad:
                flagged[topic] = bad
        return flagged

    def _replace(self, ex: Execution, outputs, flagged):
        out = dict(outputs)
        for window, topic in zip(ex.guard, ex.kernel.outputs):
            if topic not in flagged:
                continue
            vals = list(out[topic])
            sch = ex.kernel.outputs[topic]
            for i in flagged[topic]:
                mean = math.fsum(float(w[i]) for w in window) / len(window)
                vals[i] = int(round(mean)) if sch[i].kind is ScalarKind.INT32 else mean
            out[topic] = tuple(vals)
        return out

    def _push(self, guard, outputs, kernel):
        return tuple(
            (w + (outputs[t],))[-self.window_len:] for w, t in zip(guard, kernel.outputs)
        )

    def execute(self, ex: Execution) -> NodeResult:
        latency = self.latency_us(ex.node)
        if ex.event is not None:
            res = _restart(ex, latency, 1)
            if res.outputs is not None:
                res.guard = self._push(ex.guard, res.outputs, ex.kernel)
            return res
        inp = ex.received_inputs()
        executions, detected, recovered = 1, False, False
        res = _safe_run(ex, inp, True)
        if res is None:
            executions, detected, latency = 2, True, latency + ex.node.nominal_latency
            res = _safe_run(ex, inp, False)
            if res is None:
                return NodeResult(None, ex.state, ex.guard, executions, latency, True, False, "crash")
            recovered = True
        outputs, state = res
        # A re-execution cannot change a fault-free result (its expected cost
        # is the false-positive term of latency_us), so reexecute only checks
        # where a fault is armed; replacement must check every frame.
        if self.action == "replace" or ex.faulty:
            flagged = self._flagged(ex, outputs)
            if flagged:
                detected = True
                sch = ex.kernel.outputs
                categorical = any(not sch[t][i].interval for t, idx in flagged.items() for i in idx)
                if self.action == "replace" and not categorical:
                    outputs = self._replace(ex, outputs, flagged)
                elif ex.faulty:
                    # a category has no mean, so those outliers are re-executed
                    executions += 1
                    latency += ex.node.nominal_latency
                    again = _safe_run(ex, inp, False)
                    if again is not None:
                        outputs, state = again
                        recovered = True
        guard = self._push(ex.guard, outputs, ex.kernel)
        return NodeResult(outputs, state, guard, executions, latency, detected, recovered)

    def on_kernel_fault(self, ex: Execution) -> NodeResult:
        return _restart(ex, self.latency_us(ex.node), 1)


# -- temporal redundancy -----------------------------------------------------


@dataclass(frozen=True)
class TemporalRedundancy:
    """Run twice on the same core and compare; a third run breaks a tie.

    ``coverage`` < 1 duplicates only that fraction of the code: a fault whose
    injection token falls outside the duplicated fraction goes unchecked.
    """

    copies: int = 2
    coverage: float = 1.0
    compare_eps: float = 0.0
    name = "temporal"

    def __post_init__(self):
        if self.copies < 2:
            raise ProtectionError("temporal redundancy needs copies >= 2")
        if not 0.0 <= self.coverage <= 1.0:
            raise ProtectionError("coverage must lie in [0, 1]")

    def init_guard(self, node, kernel, env):
        return None

    def latency_us(self, node: NodeSpec) -> int:
        extra = (self.copies - 1) * self.coverage * node.nominal_latency
        return node.base_latency + int(round(extra)) + node.cost.tr_compare_us

    def _same(self, kernel, a, b) -> bool:
        if self.compare_eps <= 0.0 or a is None or b is None:
            return encode_result(kernel, a) == encode_result(kernel, b)
        for t in kernel.outputs:
            for x, y in zip(a[0][t], b[0][t]):
                if not (x == y or abs(float(x) - float(y)) <= self.compare_eps):
                    return False
        return a[1] == b[1]

    def execute(self, ex: Execution) -> NodeResult:
        latency = self.latency_us(ex.node)
        if ex.event is not None:
            return _restart(ex, latency, self.copies)
        inp = ex.received_inputs()
        first = _safe_run(ex, inp, True)
        loc = ex.injection.location if ex.faulty else None
        unchecked = loc is not None and ex.injection.token >= self.coverage
        if loc is None or loc.kind == "input" or unchecked:
            # every copy sees the same data, so they agree
            if first is None:
                return NodeResult(None, ex.state, ex.guard, self.copies, latency, failure="crash")
            return NodeResult(first[0], first[1], ex.guard, self.copies, latency)
        second = _safe_run(ex, inp, False)
        if self._same(ex.kernel, first, second):
            return NodeResult(second[0], second[1], ex.guard, self.copies, latency)
        third = _safe_run(ex, inp, False)
        latency += ex.node.nominal_latency
        try:
            winner = vote([encode_result(ex.kernel, r) for r in (first, second, third)], "majority")
        except UnresolvableVote:
            return NodeResult(None, ex.state, ex.guard, self.copies + 1, latency, True, False, "crash")
        res = second if encode_result(ex.kernel, second) == winner else first
        if res is None:
            return NodeResult(None, ex.state, ex.guard, self.copies + 1, latency, True, False, "crash")
        return NodeResult(res[0], res[1], ex.guard, self.copies + 1, latency, True, True)

    def on_kernel_fault(self, ex: Execution) -> NodeResult:
        return _restart(ex, self.latency_us(ex.node), self.copies)


# -- modular redundancy ------------------------------------------------------


@dataclass(frozen=True)
class ModularRedundancy:
    """Lock-step copies on duplicated cores. Each copy receives its own input
    buffer; copy 0 is the one a fault lands in."""

    copies: int = 3
    voter: str = "majority"  # | "dmr"
    name = "modular"

    def __post_init__(self):
        if self.copies not in (2, 3):
            raise ProtectionError("modular redundancy supports 2 or 3 copies")
        if (self.voter == "majority") != (self.copies == 3):
            raise ProtectionError("majority voting needs 3 copies, dmr needs 2")

    def init_guard(self, node, kernel, env):
        return None

    def latency_us(self, node: NodeSpec) -> int:
        return node.base_latency

    def execute(self, ex: Execution) -> NodeResult:
        latency = self.latency_us(ex.node)
        if ex.event is not None:
            return _restart(ex, latency, self.copies)
        if not ex.faulty:
            out, st = ex.run(ex.inputs)
            return NodeResult(out, st, ex.guard, self.copies, latency)
        faulty = _safe_run(ex, ex.received_inputs(), True)
        clean = _safe_run(ex, ex.inputs, False)
        enc = [encode_result(ex.kernel, faulty)] + [encode_result(ex.kernel, clean)] * (self.copies - 1)
        executions = self.copies

        def reexec():
            nonlocal executions, latency
            executions += 2
            latency += ex.node.nominal_latency
            return [enc[1], enc[1]]  # both copies re-run from their queued inputs

        try:
            winner = vote(enc, self.voter, reexec)
        except UnresolvableVote:
            return NodeResult(None, ex.state, ex.guard, executions, latency, True, False, "crash")
        detected = enc[0] != winner
        res = clean if winner == enc[1] else faulty
        if res is None:
            return NodeResult(None, ex.state, ex.guard, executions, latency, detected, False, "crash")
        return NodeResult(res[0], res[1], ex.guard, executions, latency, detected, detected)

    def on_kernel_fault(self, ex: Execution) -> NodeResult:
        return _restart(ex, self.latency_us(ex.node), self.copies)


# -- checkpointing -----------------------------------------------------------


@dataclass(frozen=True)
class CheckpointStore:
    """Ring buffer of ``(seq, inputs, pre-execution state)`` entries."""

    depth: int = 4
    entries: tuple = ()

    def save(self, seq: int, inputs: dict, state: tuple) -> "CheckpointStore":
        return CheckpointStore(self.depth, (self.entries + ((seq, inputs, state),))[-self.depth:])

    def restore(self, seq: int) -> tuple[dict, tuple]:
        for s, inputs, state in reversed(self.entries):
            if s == seq:
                return inputs, state
        raise CheckpointMissing(f"no checkpoint for seq {seq}")

    def __len__(self) -> int:
        return len(self.entries)


@dataclass(frozen=True)
class Checkpointing:
    """Save before every execution, detect with a DMR pair, restore and replay.

    ``conventional`` charges ``c0 + k * state_bytes`` per save; ``queue``
    (the message-queue variant used by VAP) only appends the inbound messages
    and charges the node's calibrated queue cost.
    """

    queue_depth: int = 4
    c0_us: float = 1000.0
    k_us_per_mb: float = 500.0
    variant: str = "conventional"  # | "queue"
    name = "checkpoint"

    def __post_init__(self):
        if self.queue_depth < 1:
            raise ProtectionError("queue_depth must be >= 1")
        if self.c0_us < 0 or self.k_us_per_mb < 0:
            raise ProtectionError("checkpoint cost coefficients must be >= 0")
        if self.variant not in ("conventional", "queue"):
            raise ProtectionError(f"unknown checkpoint variant {self.variant!r}")

    def init_guard(self, node, kernel, env):
        return CheckpointStore(self.queue_depth)

    def save_cost_us(self, node: NodeSpec) -> int:
        if self.variant == "queue":
            return node.cost.queue_us
        return int(round(self.c0_us + self.k_us_per_mb * node.state_size / MB))

    def latency_us(self, node: NodeSpec) -> int:
        return node.base_latency + self.save_cost_us(node)

    def execute(self, ex: Execution) -> NodeResult:
        latency = self.latency_us(ex.node)
        store = ex.guard.save(ex.frame, ex.inputs, ex.state)
        if ex.event is not None:
            return _restart(ex, latency, 2, store)
        if not ex.faulty:
            out, st = ex.run(ex.inputs)
            return NodeResult(out, st, store, 2, latency)
        primary = _safe_run(ex, ex.received_inputs(), True)
        shadow = _safe_run(ex, ex.inputs, False)
        if primary is not None and encode_result(ex.kernel, primary) == encode_result(ex.kernel, shadow):
            return NodeResult(primary[0], primary[1], store, 2, latency)
        inputs, state = store.restore(ex.frame)
        replay = Execution(ex.node, ex.kernel, inputs, state, store, None, ex.env, ex.frame)
        latency += ex.node.nominal_latency + self.save_cost_us(ex.node)
        res = _safe_run(replay, inputs, False)
        if res is None:
            return NodeResult(None, ex.state, store, 3, latency, True, False, "crash")
        return NodeResult(res[0], res[1], store, 3, latency, True, True)

    def on_kernel_fault(self, ex: Execution) -> NodeResult:
        return _restart(ex, self.latency_us(ex.node), 2, ex.guard.save(ex.frame, ex.inputs, ex.state))


# -- assignment --------------------------------------------------------------


@dataclass(frozen=True)
class Overheads:
    latency_us: int = 0
    power_w: float = 0.0
    payload_kg: float = 0.0


def extra_copies(policy) -> int:
    """Redundant hardware copies a policy needs on the node's core."""
    if isinstance(policy, ModularRedundancy):
        return policy.copies - 1
    if isinstance(policy, Checkpointing):
        return 1  # the DMR detector pair
    return 0


def scheme_overheads(policy, node: NodeSpec, core: CoreSpec | None = None) -> Overheads:
    """Deltas a policy charges on one node: latency, and power/payload of its core copies."""
    latency = policy.latency_us(node) - node.base_latency
    n = extra_copies(policy)
    core = core or CoreSpec(node.core)
    return Overheads(latency, n * core.copy_power_w, n * core.copy_mass_kg)


@dataclass(frozen=True)
class PolicyMap:
    scheme: str
    policies: dict = field(default_factory=dict)  # node id -> policy
    duplicated_cores: frozenset = frozenset()

    def get(self, node_id: str, default=NO_PROTECTION):
        return self.policies.get(node_id, default)

    def copies_per_core(self, graph: PipelineGraph) -> dict[str, int]:
        out: dict[str, int] = {}
        for n in graph.nodes:
            c = extra_copies(self.get(n.id))
            if c:
                out[n.core] = max(out.get(n.core, 0), c)
        return out

    def power_delta_w(self, graph: PipelineGraph) -> float:
        return sum(graph.core(c).copy_power_w * k for c, k in self.copies_per_core(graph).items())

    def payload_kg(self, graph: PipelineGraph) -> float:
        return sum(graph.core(c).copy_mass_kg * k for c, k in self.copies_per_core(graph).items())

    def latency_us(self, graph: PipelineGraph) -> int:
        return sum(self.get(n.id).latency_us(n) for n in graph.nodes)


@dataclass(frozen=True)
class SchemeParams:
    anomaly: AnomalyDetection = AnomalyDetection()
    temporal: TemporalRedundancy = TemporalRedundancy()
    modular: ModularRedundancy = ModularRedundancy()
    checkpoint: Checkpointing = Checkpointing()
    # VAP's front-end detector re-executes, so it needs no transparency
    # margin and can use a tight floor
    vap_front: AnomalyDetection = AnomalyDetection(action="reexecute", floor_frac=0.01)
    vap_mode: str = "default"  # | "threshold"
    vap_theta: float = 10.0  # percent
    overrides: dict = field(default_factory=dict)  # node id -> scheme name


def _map(scheme: str, graph: PipelineGraph, assign: dict) -> PolicyMap:
    m = PolicyMap(scheme, assign)
    return PolicyMap(scheme, assign, frozenset(m.copies_per_core(graph)))


def assign_vap(
    graph: PipelineGraph,
    vulnerability: dict[str, float] | None = None,
    params: SchemeParams = SchemeParams(),
    mode: str | None = None,
    theta: float | None = None,
) -> PolicyMap:
    """Software protection where the pipeline is inherently robust, hardware where it is not.

    ``default`` splits by pipeline end. ``threshold`` hardware-protects nodes
    whose measured EPR (percent) exceeds ``theta``.
    """
    mode = mode or params.vap_mode
    theta = params.vap_theta if theta is None else theta
    front = params.vap_front
    back = Checkpointing(
        params.checkpoint.queue_depth, params.checkpoint.c0_us, params.checkpoint.k_us_per_mb, "queue"
    )
    assign = {}
    if mode == "default":
        for n in graph.nodes:
            assign[n.id] = front if n.end is End.FRONT else back
    elif mode == "threshold":
        if vulnerability is None:
            raise ProtectionError("threshold-mode VAP needs a per-node vulnerability report")
        for n in graph.nodes:
            if n.id not in vulnerability:
                raise ProtectionError(f"vulnerability report has no entry for node {n.id}")
            assign[n.id] = back if vulnerability[n.id] > theta else front
    else:
        raise ProtectionError(f"unknown vap mode {mode!r}")
    return _map("vap", graph, assign)


def make_policies(scheme: str, graph: PipelineGraph, params: SchemeParams = SchemeParams(),
                  vulnerability: dict[str, float] | None = None) -> PolicyMap:
    """Apply one scheme graph-wide (VAP through :func:`assign_vap`), then per-node overrides."""
    by_name = {
        "none": NO_PROTECTION,
        "anomaly": params.anomaly,
        "temporal": params.temporal,
        "modular": params.modular,
        "checkpoint": params.checkpoint,
    }
    if scheme == "vap":
        pm = assign_vap(graph, vulnerability, params)
        assign = dict(pm.policies)
    elif scheme in by_name:
        assign = {n.id: by_name[scheme] for n in graph.nodes}
    else:
        raise ProtectionError(f"unknown scheme {scheme!r}; expected one of {', '.join(SCHEMES)}")
    for node_id, name in params.overrides.items():
        if node_id not in graph.node_ids:
            raise ProtectionError(f"override names unknown node {node_id}")
        if name not in by_name:
            raise ProtectionError(f"override for {node_id}: unknown scheme {name!r}")
        assign[node_id] = by_name[name]
    return _map(scheme, graph, assign)


def load_scheme_params(kv) -> SchemeParams:
    """Read the ``[anomaly]``, ``[temporal]``, ``[modular]``, ``[checkpoint]``,
    ``[vap]``, ``[vap_front]`` and ``[node <id>]`` sections of a policy file."""

    def build(cls, section, casts, **defaults):
        kwargs = dict(defaults)
        kwargs.update({k: kv.get(section, k, cast=c) for k, c in casts.items() if k in kv.items(section)})
        unknown = set(kv.items(section)) - set(casts)
        if unknown:
            raise ConfigError(f"{kv.source}: [{section}] unknown key(s) {', '.join(sorted(unknown))}")
        try:
            return cls(**kwargs)
        except ProtectionError as exc:
            raise ConfigError(f"{kv.source}: [{section}] {exc}") from None

    ad_keys = {"window_len": int, "sigma_k": float, "action": str, "floor_frac": float}
    anomaly = build(AnomalyDetection, "anomaly", ad_keys)
    front_default = SchemeParams().vap_front
    vap_front = build(AnomalyDetection, "vap_front", ad_keys,
                      action=front_default.action, floor_frac=front_default.floor_frac)
    temporal = build(TemporalRedundancy, "temporal", {"copies": int, "coverage": float, "compare_eps": float})
    modular = build(ModularRedundancy, "modular", {"copies": int, "voter": str})
    checkpoint = build(Checkpointing, "checkpoint",
                       {"queue_depth": int, "c0_us": float, "k_us_per_mb": float, "variant": str})
    vap = kv.items("vap")
    unknown = set(vap) - {"mode", "theta"}
    if unknown:
        raise ConfigError(f"{kv.source}: [vap] unknown key(s) {', '.join(sorted(unknown))}")
    mode = kv.get("vap", "mode", "default")
    if mode not in ("default", "threshold"):
        raise ConfigError(f"{kv.source}: [vap] mode = {mode!r}: expected default or threshold")
    overrides = {}
    for _, name in kv.sections("node"):
        overrides[name] = kv.require("node", "scheme", name=name)
    for name, scheme in overrides.items():
        if scheme not in SCHEMES or scheme == "vap":
            raise ConfigError(f"{kv.source}: [node {name}] scheme = {scheme!r}: expected one of "
                              f"{', '.join(s for s in SCHEMES if s != 'vap')}")
    return SchemeParams(anomaly=anomaly, temporal=temporal, modular=modular, checkpoint=checkpoint,
                        vap_front=vap_front, vap_mode=mode, vap_theta=kv.get("vap", "theta", 10.0, cast=float),
                        overrides=overrides)
