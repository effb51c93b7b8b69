"""Kernel identifiers and the base class every pipeline kernel implements."""

from __future__ import annotations

from enum import Enum
from typing import ClassVar

from vapbench.pipeline.encoding import Schema


class KernelId(str, Enum):
    RAY_FILTER = "RayFilter"
    VISION_DETECT = "VisionDetect"
    LIDAR_DETECT = "LidarDetect"
    NDT_MATCHING = "NdtMatching"
    ASTAR_PLANNER = "AstarPlanner"
    DECISION_FSM = "DecisionFsm"
    PURE_PURSUIT = "PurePursuit"
    TWIST_FILTER = "TwistFilter"
    TWIST_GATE = "TwistGate"
    PC_GENERATION = "PcGeneration"
    OCTOMAP = "Octomap"
    COLLISION_CHECK = "CollisionCheck"
    MOTION_PLANNER = "MotionPlanner"
    TRAJ_SMOOTH = "TrajSmooth"
    TRACK_CTRL = "TrackCtrl"
    CMD_GATE = "CmdGate"


class KernelError(RuntimeError):
    pass


class Kernel:
    """A deterministic node body: ``(inputs, state) -> (outputs, state')``.

    ``inputs`` maps topic -> value tuple laid out per ``self.inputs[topic]``;
    topics listed in ``sensor_inputs`` are read from the world instead of an
    upstream edge. Scenario data (maps, landmark positions) is bound at
    construction and treated as read-only memory.
    """

    kernel_id: ClassVar[KernelId]
    inputs: ClassVar[dict[str, Schema]] = {}
    sensor_inputs: ClassVar[frozenset[str]] = frozenset()
    outputs: ClassVar[dict[str, Schema]] = {}
    state_schema: ClassVar[Schema] = ()

    def __init__(self, scenario=None):
        self.scenario = scenario

    def initial_state(self) -> tuple:
        raise NotImplementedError

    def run(self, inputs: dict[str, tuple], state: tuple) -> tuple[dict[str, tuple], tuple]:
        raise NotImplementedError

    def check_inputs(self, inputs: dict[str, tuple]) -> None:
        for topic, sch in self.inputs.items():
            vals = inputs.get(topic)
            if vals is None or len(vals) != len(sch):
                raise KernelError(f"{self.kernel_id.value}: schema mismatch on input {topic!r}")


_KERNELS: dict[KernelId, type[Kernel]] = {}


def register(cls: type[Kernel]) -> type[Kernel]:
    _KERNELS[cls.kernel_id] = cls
    return cls


def kernel_for(kid: KernelId) -> type[Kernel]:
    """Kernel class for an id (class attributes carry the topic schemas)."""
    if not _KERNELS:
        from vapbench.workloads import av, drone  # noqa: F401  (registers kernels)
    try:
        return _KERNELS[KernelId(kid)]
    except (KeyError, ValueError):
        raise KernelError(f"unknown kernel id {kid!r}") from None
