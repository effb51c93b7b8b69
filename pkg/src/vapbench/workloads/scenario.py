"""Scenario files and the bundled (graph, scenario, kernels) workload object.

Scenario files use the shared key-value format::

    [scenario]
    workload = av
    frames = 30
    landmarks = 12, 19.5, 27
    obstacles = 120:1.8          # position:width
    blocked = 150:152            # map cells blocked between two road positions

Drone scenarios list obstacle boxes as ``x0:y0:x1:y1`` and points as ``x, y``.
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path

from vapbench.pipeline.graph import PipelineGraph, load_pipeline
from vapbench.pipeline.kvconfig import ConfigError, KVFile, parse_list
from vapbench.workloads.av import AvScenario, AvWorld
from vapbench.workloads.drone import DroneScenario, DroneWorld
from vapbench.workloads.registry import kernel_for

DATA_DIR = Path(__file__).resolve().parent.parent / "data"


def _tuples(arity: int):
    def cast(text: str) -> tuple:
        out = []
        for item in parse_list(text):
            parts = tuple(float(p) for p in item.split(":"))
            if len(parts) != arity:
                raise ValueError(f"expected {arity} ':'-separated numbers in {item!r}")
            out.append(parts)
        return tuple(out)

    return cast


def _point(text: str) -> tuple[float, float]:
    vals = parse_list(text, float)
    if len(vals) != 2:
        raise ValueError("expected 'x, y'")
    return (vals[0], vals[1])


def _opt_float(text: str) -> float | None:
    return None if text.strip().lower() in ("", "none") else float(text)


_AV_CASTS = {
    "frames": int, "warmup": int, "dt": float, "s0": float, "y0": float, "psi0": float,
    "v0": float, "cruise": float, "brake": float, "comfort": float, "accel": float, "t_compute": float,
    "margin": float, "road_length": float, "cell": float,
    "blocked": _tuples(2), "landmarks": lambda t: tuple(parse_list(t, float)),
    "obstacles": _tuples(2), "parked": lambda t: tuple(parse_list(t, float)),
    "pedestrian_s": _opt_float, "pedestrian_frame": int,
    "lane_amp": float, "lane_wavelength": float,
}

_DRONE_CASTS = {
    "cols": int, "rows": int, "cell": float, "dt": float, "frames": int, "warmup": int,
    "start": _point, "goal": _point, "boxes": _tuples(4), "power_w": float, "battery_j": float,
}


def parse_scenario(kv: KVFile):
    workload = kv.require("scenario", "workload")
    casts, cls = {"av": (_AV_CASTS, AvScenario), "drone": (_DRONE_CASTS, DroneScenario)}.get(
        workload, (None, None)
    )
    if casts is None:
        raise ConfigError(f"{kv.source}: [scenario] workload = {workload!r}: expected av or drone")
    kwargs = {}
    for key in kv.items("scenario"):
        if key == "workload":
            continue
        if key not in casts:
            raise ConfigError(f"{kv.source}: [scenario] unknown key {key!r} for workload {workload}")
        kwargs[key] = kv.get("scenario", key, cast=casts[key])
    sc = cls(**kwargs)
    if sc.frames < 0 or sc.warmup < 0:
        raise ConfigError(f"{kv.source}: [scenario] frames and warmup must be >= 0")
    if workload == "drone" and sc.cols != DroneScenario.cols:
        raise ConfigError(f"{kv.source}: [scenario] cols is fixed at {DroneScenario.cols} by the map schema")
    return sc


def load_scenario(path: str | Path):
    return parse_scenario(KVFile.load(path))


@dataclass(frozen=True)
class Workload:
    """A pipeline graph bound to a scenario, with one kernel instance per node."""

    name: str  # "av" | "drone"
    graph: PipelineGraph
    scenario: object

    @cached_property
    def kernels(self) -> dict:
        return {n.id: kernel_for(n.kernel)(self.scenario) for n in self.graph.nodes}

    def initial_world(self):
        if isinstance(self.scenario, AvScenario):
            return AvWorld.initial(self.scenario)
        return DroneWorld.initial(self.scenario)

    @property
    def frames(self) -> int:
        return self.scenario.frames

    @property
    def warmup(self) -> int:
        return self.scenario.warmup

    def with_scenario(self, **changes) -> "Workload":
        return Workload(self.name, self.graph, dataclasses.replace(self.scenario, **changes))


def load_workload(pipeline: str | Path, scenario: str | Path) -> Workload:
    graph = load_pipeline(pipeline)
    sc = load_scenario(scenario)
    name = "av" if isinstance(sc, AvScenario) else "drone"
    return Workload(name, graph, sc)


def default_workload(name: str, scenario: str | None = None) -> Workload:
    """One of the shipped workloads (``av`` or ``drone``)."""
    if name not in ("av", "drone"):
        raise ConfigError(f"unknown workload {name!r}: expected av or drone")
    return load_workload(DATA_DIR / f"{name}.pipeline", DATA_DIR / f"{scenario or name}.scenario")
