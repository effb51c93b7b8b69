"""Drone workload: 2-D occupancy world, depth rays, seven kernels.

The map travels between nodes as one int32 bitmask per grid column
(bit ``j`` = row ``j``), so a single flipped bit toggles a single cell.
"""

from __future__ import annotations

import heapq
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

from vapbench.pipeline.encoding import repeated, schema
from vapbench.workloads.registry import Kernel, KernelId, register

N_RAYS = 8
N_WAYPOINTS = 12
RAY_ANGLES = tuple(math.radians(-70 + 20 * i) for i in range(N_RAYS))
SENSE_RANGE = 4.5
RAY_STEP = 0.05
GOAL_TOL = 0.3
V_PHYS = 4.0  # airframe speed saturation (m/s)
V_MAX = 1.5  # tracking speed limit (m/s)
KP, KD = 1.5, 0.1
TRACK_LOOK = 0.75
CLEAR_RADIUS = 1.5
BLOCK_HORIZON = 1.0  # s of flight checked by CollisionCheck

MISSION_STATUSES = ("flying", "success", "collision", "infeasible", "exhausted")


@dataclass(frozen=True)
class DroneScenario:
    cols: int = 48
    rows: int = 24
    cell: float = 0.25
    dt: float = 0.25
    frames: int = 120
    warmup: int = 0
    start: tuple[float, float] = (1.0, 3.0)
    goal: tuple[float, float] = (11.0, 3.0)
    boxes: tuple[tuple[float, float, float, float], ...] = ()  # x0, y0, x1, y1 (m)
    power_w: float = 558.8
    battery_j: float = 9000.0

    @cached_property
    def truth(self) -> tuple[int, ...]:
        cols = [0] * self.cols
        for x0, y0, x1, y1 in self.boxes:
            for cx in range(max(0, int(x0 // self.cell)), min(self.cols, int(math.ceil(x1 / self.cell)))):
                for cy in range(max(0, int(y0 // self.cell)), min(self.rows, int(math.ceil(y1 / self.cell)))):
                    cols[cx] |= 1 << cy
        return tuple(cols)

    def occupied(self, x: float, y: float) -> bool:
        """Truth lookup; outside the grid counts as occupied."""
        if not (0.0 <= x < self.cols * self.cell and 0.0 <= y < self.rows * self.cell):
            return True
        return bool(self.truth[int(x / self.cell)] >> int(y / self.cell) & 1)


DEPTH = schema(
    ("seq", "int32"), ("x", "real64"), ("y", "real64"), ("heading", "real64"),
    *[(f"r{i}", "real64") for i in range(N_RAYS)],
)
ODOM = schema(("seq", "int32"), ("x", "real64"), ("y", "real64"), ("vx", "real64"), ("vy", "real64"))
CLOUD = schema(("seq", "int32"), ("hits", "int32", "nominal"), *repeated("p", N_RAYS, [("x", "real64"), ("y", "real64")]))
CLEARANCE = schema(("seq", "int32"), ("clearance", "real64"), ("blocked", "bool"))
PATH = schema(("seq", "int32"), ("found", "bool"), ("n", "int32"),
              *repeated("w", N_WAYPOINTS, [("x", "real64"), ("y", "real64")]))
CMD = schema(("seq", "int32"), ("vx", "real64"), ("vy", "real64"), ("abort", "bool"))


def map_schema(cols: int):
    return schema(("seq", "int32"), ("version", "int32"), *[(f"c{i}", "int32", "nominal") for i in range(cols)])


GRID_MAP = map_schema(DroneScenario.cols)


@dataclass(frozen=True)
class DroneWorld:
    frame: int
    x: float
    y: float
    heading: float
    vx: float
    vy: float
    energy: float
    distance: float
    status: str
    scenario: DroneScenario = field(compare=False, repr=False)

    @classmethod
    def initial(cls, sc: DroneScenario) -> "DroneWorld":
        hx, hy = sc.goal[0] - sc.start[0], sc.goal[1] - sc.start[1]
        return cls(0, sc.start[0], sc.start[1], math.atan2(hy, hx), 0.0, 0.0, 0.0, 0.0, "flying", sc)

    def key(self) -> tuple:
        return (self.frame, self.x, self.y, self.heading, self.vx, self.vy, self.energy, self.status)

    @property
    def done(self) -> bool:
        return self.status != "flying"

    def _ray(self, ang: float) -> float:
        sc = self.scenario
        c, s = math.cos(ang), math.sin(ang)
        r = RAY_STEP
        while r < SENSE_RANGE:
            if sc.occupied(self.x + r * c, self.y + r * s):
                return round(r, 6)
            r += RAY_STEP
        return SENSE_RANGE

    def sense(self) -> dict[str, tuple]:
        rays = tuple(self._ray(self.heading + a) for a in RAY_ANGLES)
        return {
            "depth_raw": (self.frame, self.x, self.y, self.heading, *rays),
            "odometry": (self.frame, self.x, self.y, self.vx, self.vy),
        }

    def advance(self, cmd: tuple) -> "DroneWorld":
        if self.done:
            return replace(self, frame=self.frame + 1)
        sc = self.scenario
        _, vx, vy, abort = cmd
        energy = self.energy + sc.power_w * sc.dt
        if abort:
            return replace(self, frame=self.frame + 1, vx=0.0, vy=0.0, energy=energy, status="infeasible")
        if not (math.isfinite(vx) and math.isfinite(vy)):
            vx = vy = 0.0
        speed = math.hypot(vx, vy)
        if speed > V_PHYS:
            vx, vy = vx * V_PHYS / speed, vy * V_PHYS / speed
            speed = V_PHYS
        step = speed * sc.dt
        n = max(1, int(math.ceil(step / RAY_STEP)))
        status = "flying"
        for k in range(1, n + 1):
            if sc.occupied(self.x + vx * sc.dt * k / n, self.y + vy * sc.dt * k / n):
                status = "collision"
                break
        x, y = self.x + vx * sc.dt, self.y + vy * sc.dt
        heading = math.atan2(vy, vx) if speed > 0.05 else self.heading
        if status == "flying":
            if math.hypot(x - sc.goal[0], y - sc.goal[1]) <= GOAL_TOL:
                status = "success"
            elif energy > sc.battery_j:
                status = "exhausted"
        return replace(
            self, frame=self.frame + 1, x=x, y=y, heading=heading, vx=vx, vy=vy,
            energy=energy, distance=self.distance + step, status=status,
        )

    def actuator_topics(self) -> tuple[str, ...]:
        return ("cmd",)


def _finite(*vals: float) -> bool:
    return all(math.isfinite(v) for v in vals)


def _cell_of(sc: DroneScenario, x: float, y: float) -> tuple[int, int] | None:
    if not _finite(x, y):
        return None
    cx, cy = math.floor(x / sc.cell), math.floor(y / sc.cell)
    if 0 <= cx < sc.cols and 0 <= cy < sc.rows:
        return cx, cy
    return None


def _occ(cols, sc: DroneScenario, cx: int, cy: int) -> bool:
    return bool(cols[cx] >> cy & 1) if 0 <= cy < sc.rows else False


# -- front end ---------------------------------------------------------------


@register
class PcGeneration(Kernel):
    """Depth rays to world-frame points; rays at full range are misses."""

    kernel_id = KernelId.PC_GENERATION
    inputs = {"depth_raw": DEPTH}
    sensor_inputs = frozenset({"depth_raw"})
    outputs = {"cloud": CLOUD}
    state_schema = schema(("counter", "int32"),)

    def initial_state(self):
        return (0,)

    def run(self, inputs, state):
        (counter,) = state
        d = inputs["depth_raw"]
        x, y, heading = d[1], d[2], d[3]
        hits, pts = 0, []
        for i in range(N_RAYS):
            r = d[4 + i]
            if 0.0 < r < SENSE_RANGE and _finite(heading):
                ang = heading + RAY_ANGLES[i]
                px, py = x + r * math.cos(ang), y + r * math.sin(ang)
                if _finite(px, py):
                    hits |= 1 << i
                    pts += [px, py]
                    continue
            pts += [0.0, 0.0]
        return {"cloud": (counter, hits, *pts)}, (counter + 1,)


@register
class Octomap(Kernel):
    """Occupancy union: a cell once marked stays marked."""

    kernel_id = KernelId.OCTOMAP
    inputs = {"cloud": CLOUD}
    outputs = {"grid_map": GRID_MAP}
    state_schema = schema(("counter", "int32"), ("version", "int32"),
                          *[(f"c{i}", "int32") for i in range(DroneScenario.cols)])

    def initial_state(self):
        return (0, 0) + (0,) * self.scenario.cols

    def run(self, inputs, state):
        sc = self.scenario
        counter, version, cols = state[0], state[1], list(state[2:])
        cloud = inputs["cloud"]
        hits = cloud[1]
        changed = False
        for i in range(N_RAYS):
            if hits >> i & 1:
                cell = _cell_of(sc, cloud[2 + 2 * i], cloud[3 + 2 * i])
                if cell is not None and not cols[cell[0]] >> cell[1] & 1:
                    bit = 1 << cell[1]
                    cols[cell[0]] |= bit
                    changed = True
        if changed:
            version = (version + 1) & 0x7FFFFFFF
        return {"grid_map": (counter, version, *cols)}, (counter + 1, version, *cols)


@register
class CollisionCheck(Kernel):
    """Clearance to the nearest mapped cell and whether the next second of flight is blocked."""

    kernel_id = KernelId.COLLISION_CHECK
    inputs = {"grid_map": GRID_MAP, "odometry": ODOM}
    sensor_inputs = frozenset({"odometry"})
    outputs = {"clearance": CLEARANCE}
    state_schema = schema(("counter", "int32"),)

    def initial_state(self):
        return (0,)

    def run(self, inputs, state):
        (counter,) = state
        sc = self.scenario
        cols = inputs["grid_map"][2:]
        _, x, y, vx, vy = inputs["odometry"]
        clearance, blocked = CLEAR_RADIUS, False
        here = _cell_of(sc, x, y)
        if here is not None:
            reach = int(math.ceil(CLEAR_RADIUS / sc.cell))
            for cx in range(max(0, here[0] - reach), min(sc.cols, here[0] + reach + 1)):
                if not cols[cx]:
                    continue
                for cy in range(max(0, here[1] - reach), min(sc.rows, here[1] + reach + 1)):
                    if _occ(cols, sc, cx, cy):
                        d = math.hypot((cx + 0.5) * sc.cell - x, (cy + 0.5) * sc.cell - y)
                        clearance = min(clearance, d)
            speed = math.hypot(vx, vy) if _finite(vx, vy) else math.inf
            if 1e-9 < speed < math.inf:
                ux, uy = vx / speed, vy / speed
                length = min(speed * BLOCK_HORIZON, 2 * CLEAR_RADIUS)
                for k in range(1, int(length / 0.1) + 1):
                    cell = _cell_of(sc, x + ux * 0.1 * k, y + uy * 0.1 * k)
                    if cell is not None and _occ(cols, sc, *cell):
                        blocked = True
                        break
        return {"clearance": (counter, clearance, blocked)}, (counter + 1,)


# -- back end ----------------------------------------------------------------


def astar(sc: DroneScenario, cols, start: tuple[int, int], goal: tuple[int, int]) -> list[tuple[int, int]]:
    """8-connected A* with one-cell obstacle inflation; [] when no path exists."""
    blocked = set()
    for cx in range(sc.cols):
        if not cols[cx]:
            continue
        for cy in range(sc.rows):
            if _occ(cols, sc, cx, cy):
                for dx in (-1, 0, 1):
                    for dy in (-1, 0, 1):
                        blocked.add((cx + dx, cy + dy))
    blocked.discard(start)
    blocked.discard(goal)

    def h(c):
        dx, dy = abs(c[0] - goal[0]), abs(c[1] - goal[1])
        return max(dx, dy) + 0.41421356 * min(dx, dy)

    g = {start: 0.0}
    parent = {start: None}
    heap = [(h(start), 0.0, start)]
    closed = set()
    while heap:
        _, gc, cur = heapq.heappop(heap)
        if cur in closed:
            continue
        if cur == goal:
            path = []
            node = cur
            while node is not None:
                path.append(node)
                node = parent[node]
            return path[::-1]
        closed.add(cur)
        for dx in (-1, 0, 1):
            for dy in (-1, 0, 1):
                if dx == 0 and dy == 0:
                    continue
                nb = (cur[0] + dx, cur[1] + dy)
                if not (0 <= nb[0] < sc.cols and 0 <= nb[1] < sc.rows) or nb in blocked:
                    continue
                ng = gc + (1.41421356 if dx and dy else 1.0)
                if ng < g.get(nb, math.inf):
                    g[nb] = ng
                    parent[nb] = cur
                    heapq.heappush(heap, (ng + h(nb), ng, nb))
    return []


@register
class MotionPlanner(Kernel):
    """A* to the goal, replanned when the map version changes or the path runs short."""

    kernel_id = KernelId.MOTION_PLANNER
    inputs = {"grid_map": GRID_MAP, "clearance": CLEARANCE, "odometry": ODOM}
    sensor_inputs = frozenset({"odometry"})
    outputs = {"path": PATH}
    state_schema = schema(("counter", "int32"), ("version", "int32"), ("n", "int32"),
                          *repeated("w", N_WAYPOINTS, [("x", "real64"), ("y", "real64")]))

    def initial_state(self):
        return (0, -1, 0) + (0.0,) * (2 * N_WAYPOINTS)

    def run(self, inputs, state):
        sc = self.scenario
        counter, version, n = state[0], state[1], state[2]
        wps = list(state[3:])
        m = inputs["grid_map"]
        _, _, blocked = inputs["clearance"]
        _, x, y, _, _ = inputs["odometry"]
        n_eff = max(0, min(n, N_WAYPOINTS))
        gx, gy = sc.goal
        replan = m[1] != version or blocked or n_eff == 0
        if not replan:
            # the cached path is about to run out short of the goal
            lx, ly = wps[2 * n_eff - 2], wps[2 * n_eff - 1]
            if math.hypot(lx - gx, ly - gy) > 1e-9 and not math.hypot(x - lx, y - ly) > 1.0:
                replan = True
        if replan:
            version = m[1]
            start, goal = _cell_of(sc, x, y), _cell_of(sc, gx, gy)
            cells = astar(sc, m[2:], start, goal) if start is not None and goal is not None else []
            wps = [0.0] * (2 * N_WAYPOINTS)
            n_eff = 0
            if cells:
                picks = cells[2::2]
                if not picks or picks[-1] != cells[-1]:
                    picks.append(cells[-1])
                picks = picks[:N_WAYPOINTS]
                for k, (cx, cy) in enumerate(picks):
                    if (cx, cy) == goal:
                        wps[2 * k], wps[2 * k + 1] = gx, gy
                    else:
                        wps[2 * k], wps[2 * k + 1] = (cx + 0.5) * sc.cell, (cy + 0.5) * sc.cell
                n_eff = len(picks)
        out = (counter, n_eff > 0, n_eff, *wps)
        return {"path": out}, (counter + 1, version, n_eff, *wps)


@register
class TrajSmooth(Kernel):
    """Three-point moving average over interior waypoints."""

    kernel_id = KernelId.TRAJ_SMOOTH
    inputs = {"path": PATH}
    outputs = {"smooth_path": PATH}
    state_schema = schema(("counter", "int32"),)

    def initial_state(self):
        return (0,)

    def run(self, inputs, state):
        (counter,) = state
        p = inputs["path"]
        found, n = p[1], max(0, min(p[2], N_WAYPOINTS))
        w = list(p[3:])
        out = list(w)
        for k in range(1, n - 1):
            for a in (0, 1):
                out[2 * k + a] = (w[2 * (k - 1) + a] + w[2 * k + a] + w[2 * (k + 1) + a]) / 3.0
        return {"smooth_path": (counter, found, n, *out)}, (counter + 1,)


@register
class TrackCtrl(Kernel):
    """PD tracker on the first waypoint beyond the lookahead, slowed near obstacles."""

    kernel_id = KernelId.TRACK_CTRL
    inputs = {"smooth_path": PATH, "clearance": CLEARANCE, "odometry": ODOM}
    sensor_inputs = frozenset({"odometry"})
    outputs = {"cmd_raw": CMD}
    state_schema = schema(("counter", "int32"), ("ex", "real64"), ("ey", "real64"))

    def initial_state(self):
        return (0, 0.0, 0.0)

    def run(self, inputs, state):
        counter, ex_prev, ey_prev = state
        dt = self.scenario.dt
        p = inputs["smooth_path"]
        _, clearance, _ = inputs["clearance"]
        _, x, y, _, _ = inputs["odometry"]
        found, n = p[1], max(0, min(p[2], N_WAYPOINTS))
        if not found or n == 0:
            return {"cmd_raw": (counter, 0.0, 0.0, True)}, (counter + 1, 0.0, 0.0)
        tx, ty = p[3 + 2 * (n - 1)], p[4 + 2 * (n - 1)]
        for k in range(n):
            wx, wy = p[3 + 2 * k], p[4 + 2 * k]
            if math.hypot(wx - x, wy - y) > TRACK_LOOK:
                tx, ty = wx, wy
                break
        ex, ey = tx - x, ty - y
        vx = KP * ex + KD * (ex - ex_prev) / dt
        vy = KP * ey + KD * (ey - ey_prev) / dt
        scale = min(1.0, max(0.35, (clearance - 0.2) / 0.8)) if math.isfinite(clearance) else 0.35
        vmax = V_MAX * scale
        speed = math.hypot(vx, vy)
        if speed > vmax:
            vx, vy = vx * vmax / speed, vy * vmax / speed
        if not _finite(vx, vy):
            vx = vy = 0.0
        return {"cmd_raw": (counter, vx, vy, False)}, (counter + 1, ex, ey)


@register
class CmdGate(Kernel):
    """Pass-through to the flight controller."""

    kernel_id = KernelId.CMD_GATE
    inputs = {"cmd_raw": CMD}
    outputs = {"cmd": CMD}
    state_schema = schema(("counter", "int32"),)

    def initial_state(self):
        return (0,)

    def run(self, inputs, state):
        (counter,) = state
        _, vx, vy, abort = inputs["cmd_raw"]
        return {"cmd": (counter, vx, vy, abort)}, (counter + 1,)
