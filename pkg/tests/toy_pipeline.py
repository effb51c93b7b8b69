"""A one-node pipeline small enough to enumerate every fault by hand.

The node reads a sensor integer and publishes ``1`` when it exceeds a
threshold: 64 addressable bits (32 input, 32 output), no state.
"""

from dataclasses import dataclass, field

from vapbench.pipeline.encoding import schema
from vapbench.pipeline.graph import NodeSpec, PipelineGraph, Stage
from vapbench.workloads.registry import Kernel, KernelId

THRESHOLD = 50
READINGS = (7, 12, 49, 51, 3)

X = schema(("x", "int32"))
CMD = schema(("u", "int32"))


class Threshold(Kernel):
    kernel_id = KernelId.CMD_GATE  # nominal; the toy graph is built by hand
    inputs = {"x": X}
    sensor_inputs = frozenset({"x"})
    outputs = {"cmd": CMD}
    state_schema = ()

    def initial_state(self):
        return ()

    def run(self, inputs, state):
        (x,) = inputs["x"]
        return {"cmd": (int(x > THRESHOLD),)}, ()


@dataclass(frozen=True)
class ToyWorld:
    frame: int = 0

    def key(self):
        return (self.frame,)

    def sense(self):
        return {"x": (READINGS[self.frame % len(READINGS)],)}

    def advance(self, cmd):
        return ToyWorld(self.frame + 1)

    def actuator_topics(self):
        return ("cmd",)


@dataclass
class ToyWorkload:
    name: str = "toy"
    frames: int = len(READINGS)
    warmup: int = 0
    scenario: object = None
    graph: PipelineGraph = field(default_factory=lambda: PipelineGraph(
        "toy", (NodeSpec("gate", Stage.CONTROL, KernelId.CMD_GATE, 100, 4, "cpu0", bucket="control"),), (), ("gate",)
    ))
    kernels: dict = field(default_factory=lambda: {"gate": Threshold()})

    def initial_world(self):
        return ToyWorld()
