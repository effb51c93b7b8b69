"""Autonomous-vehicle workload: straight road, synthetic sensors, nine kernels.

Command units on the control path are integers (mm/s and mrad/s) so that the
actuator slots compare exactly. Every back-end node stamps its outputs with
its own frame counter and rejects inputs whose ``seq`` drifts more than
``SEQ_TOL`` frames from it.
"""

from __future__ import annotations

import bisect
import heapq
import math
from dataclasses import dataclass, field, replace
from functools import cached_property

from vapbench.pipeline.encoding import repeated, schema
from vapbench.workloads.registry import Kernel, KernelId, register

# -- message layouts ---------------------------------------------------------

N_POINTS = 12
N_IMAGE_OBJECTS = 4
N_LANE_WAYPOINTS = 8

POINTS = schema(("seq", "int32"), *repeated("p", N_POINTS, [("x", "real64"), ("z", "real64")]))
IMAGE = schema(
    ("seq", "int32"),
    *repeated("o", N_IMAGE_OBJECTS, [("range", "real64"), ("score", "real64"), ("lateral", "real64")]),
)
VEHICLE_STATE = schema(("v", "real64"), ("y", "real64"), ("psi", "real64"))
EMERGENCY = schema(("estop", "bool"), ("mode", "int32", "nominal"), ("stamp", "real64"))
LANE_WAYPOINTS = schema(*repeated("w", N_LANE_WAYPOINTS, [("x", "real64"), ("y", "real64")]))
OBSTACLES = schema(("seq", "int32"), ("nearest_dm", "int32"))
IMAGE_OBJECTS = schema(("seq", "int32"), ("ped", "bool"))
POSE = schema(("seq", "int32"), ("s", "real64"), ("status", "int32", "nominal"))
TRAJECTORY = schema(("seq", "int32"), ("found", "bool"), ("lane", "int32", "nominal"), ("free_cells", "int32"))
BEHAVIOR = schema(
    ("seq", "int32"), ("fsm", "int32", "nominal"), ("speed_mm", "int32"), ("lane", "int32", "nominal")
)
TWIST = schema(("seq", "int32"), ("speed_mm", "int32"), ("omega_mrad", "int32"))
VEHICLE_CMD = schema(("seq", "int32"), ("speed_mm", "int32"), ("omega_mrad", "int32"), ("emergency", "bool"))

# -- kernel constants --------------------------------------------------------

SEQ_TOL = 8  # frames of header drift a back-end node tolerates
LIDAR_RANGE = 30.0
GROUND_TAU = 0.3  # RayFilter ground band half-width (m)
VOXEL = 0.05  # RayFilter output quantum (m)
OBST_Z = (0.5, 1.5)  # LidarDetect height band
LANDMARK_Z = 1.5  # NdtMatching uses returns above this height
NO_OBSTACLE_DM = 400
NDT_WINDOW = 5.0
NDT_TOL = 0.1
NDT_ITERS = 3
PED_SCORE = 0.5
PED_RANGE = 25.0
PED_LATERAL = 2.0
PED_CONFIRM = 2
PLAN_COLS = 40
PLAN_ROWS = 3
LANE_COL = 10
LANE_STEP = 0.5  # lateral offset per planner row (m)
RESUME_FRAMES = 3
RESUME_GAP = 2.0
LOOKAHEAD = 5.0
OMEGA_LIMIT = 2000
OMEGA_MAX = 800
MODE_AUTO = 1
STAMP_TIMEOUT = 0.5
DRIVE, STOP = 0, 1
POSE_OK, POSE_LOST = 1, 0


@dataclass(frozen=True)
class AvScenario:
    frames: int = 30
    warmup: int = 5
    dt: float = 0.1
    s0: float = 0.0
    y0: float = 0.0
    psi0: float = 0.0
    v0: float = 5.6
    cruise: float = 5.6
    brake: float = 4.0
    comfort: float = 0.88  # deceleration the speed profile plans with (m/s^2)
    accel: float = 2.0
    t_compute: float = 0.164
    margin: float = 2.0
    road_length: float = 300.0
    cell: float = 0.5
    blocked: tuple[tuple[float, float], ...] = ()
    landmarks: tuple[float, ...] = ()
    obstacles: tuple[tuple[float, float], ...] = ()  # (position, width)
    parked: tuple[float, ...] = ()  # roadside clutter seen by the camera
    pedestrian_s: float | None = None
    pedestrian_frame: int = 0
    lane_amp: float = 0.0  # lane centre y(s) = amp * sin(2 pi s / wavelength)
    lane_wavelength: float = 40.0

    def lane_y(self, s: float) -> float:
        if self.lane_amp == 0.0:
            return 0.0
        return self.lane_amp * math.sin(2 * math.pi * s / self.lane_wavelength)

    @property
    def stop_distance(self) -> float:
        v = self.cruise
        return v * v / (2 * self.brake) + v * self.t_compute + self.margin

    @cached_property
    def occupancy(self) -> bytes:
        n = int(math.ceil(self.road_length / self.cell))
        occ = bytearray(n)
        for a, b in self.blocked:
            for i in range(max(0, int(a // self.cell)), min(n, int(math.ceil(b / self.cell)))):
                occ[i] = 1
        return bytes(occ)

    def map_blocked(self, idx: int) -> bool:
        occ = self.occupancy
        return idx < 0 or idx >= len(occ) or occ[idx] == 1

    @cached_property
    def sorted_landmarks(self) -> tuple[float, ...]:
        return tuple(sorted(self.landmarks))


@dataclass(frozen=True)
class AvWorld:
    frame: int
    s: float
    y: float
    psi: float
    v: float
    scenario: AvScenario = field(compare=False, repr=False)

    @classmethod
    def initial(cls, sc: AvScenario) -> "AvWorld":
        return cls(0, sc.s0, sc.y0, sc.psi0, sc.v0, sc)

    def key(self) -> tuple:
        return (self.frame, self.s, self.y, self.psi, self.v)

    def sense(self) -> dict[str, tuple]:
        sc = self.scenario
        return {
            "points_raw": _points(self, sc),
            "image_raw": _image(self, sc),
            "vehicle_state": (self.v, self.y, self.psi),
            "emergency_in": (False, MODE_AUTO, round(self.frame * sc.dt, 9)),
            "lane_waypoints": tuple(
                v for k in range(N_LANE_WAYPOINTS) for v in (1.5 * (k + 1), sc.lane_y(self.s + 1.5 * (k + 1)))
            ),
        }

    def advance(self, cmd: tuple) -> "AvWorld":
        sc = self.scenario
        _, speed_mm, omega_mrad, emergency = cmd
        target = 0.0 if emergency else max(0.0, speed_mm / 1000.0)
        dv = min(max(target - self.v, -sc.brake * sc.dt), sc.accel * sc.dt)
        v = max(0.0, self.v + dv)
        psi = math.remainder(self.psi + (omega_mrad / 1000.0) * sc.dt, 2 * math.pi)
        return replace(
            self,
            frame=self.frame + 1,
            v=v,
            psi=psi,
            s=self.s + v * math.cos(psi) * sc.dt,
            y=self.y + v * math.sin(psi) * sc.dt,
        )

    def actuator_topics(self) -> tuple[str, ...]:
        return ("vehicle_cmd",)


def _points(w: AvWorld, sc: AvScenario) -> tuple:
    pts: list[tuple[float, float]] = []
    visible = [L - w.s for L in sc.sorted_landmarks if 0.5 < L - w.s <= LIDAR_RANGE]
    pts.extend((x, 2.0) for x in visible[:4])
    for pos, _width in sc.obstacles:
        r = pos - w.s
        if 0.0 < r <= LIDAR_RANGE:
            pts.extend((r, z) for z in (0.8, 1.0, 1.2))
    pts = pts[: N_POINTS - 2]
    k = 0
    while len(pts) < N_POINTS:
        pts.append((1.0 + 1.7 * k, 0.02 * math.sin(0.9 * k + 0.37 * w.frame)))
        k += 1
    return (w.frame, *(v for p in pts for v in p))


def _image(w: AvWorld, sc: AvScenario) -> tuple:
    objs: list[tuple[float, float, float]] = []
    if sc.pedestrian_s is not None and w.frame >= sc.pedestrian_frame:
        r = sc.pedestrian_s - w.s
        if 0.0 < r <= 40.0:
            objs.append((r, 0.92, 0.3))
    for p in sc.parked:
        r = p - w.s
        if 0.0 < r <= 40.0:
            objs.append((r, 0.15, 4.2))
    objs = objs[:N_IMAGE_OBJECTS]
    while len(objs) < N_IMAGE_OBJECTS:
        objs.append((0.0, 0.0, 0.0))
    return (w.frame, *(v for o in objs for v in o))


def _quant(x: float, q: float) -> float:
    return round(x / q) * q


def _stale(seq: int, counter: int) -> bool:
    return abs(seq - counter) > SEQ_TOL


def _finite(*vals: float) -> bool:
    return all(math.isfinite(v) for v in vals)


# -- front end ---------------------------------------------------------------


@register
class RayFilter(Kernel):
    """Drop ground returns (|z - ground| < tau) and voxel-quantize the rest.

    Perturbations smaller than the distance to the nearest voxel boundary or
    to the ground band edge leave the output unchanged.
    """

    kernel_id = KernelId.RAY_FILTER
    inputs = {"points_raw": POINTS}
    sensor_inputs = frozenset({"points_raw"})
    outputs = {"points_no_ground": POINTS}
    state_schema = schema(("counter", "int32"), ("ground_z", "real64"))

    def initial_state(self):
        return (0, 0.0)

    def run(self, inputs, state):
        counter, g = state
        raw = inputs["points_raw"]
        out = [counter]
        ground = []
        for i in range(N_POINTS):
            x, z = raw[1 + 2 * i], raw[2 + 2 * i]
            if abs(z - g) < GROUND_TAU:
                ground.append(z)
                out += [0.0, 0.0]
            elif _finite(x, z) and abs(x) < 1e6 and abs(z) < 1e6:
                out += [_quant(x, VOXEL), _quant(z, VOXEL)]
            else:
                out += [0.0, 0.0]
        if ground:
            g = g + 0.2 * (sum(ground) / len(ground) - g)
        return {"points_no_ground": tuple(out)}, (counter + 1, g)


@register
class VisionDetect(Kernel):
    """Pedestrian detector with two-frame confirmation."""

    kernel_id = KernelId.VISION_DETECT
    inputs = {"image_raw": IMAGE}
    sensor_inputs = frozenset({"image_raw"})
    outputs = {"image_objects": IMAGE_OBJECTS}
    state_schema = schema(("counter", "int32"), ("confirm", "int32"))

    def initial_state(self):
        return (0, 0)

    def run(self, inputs, state):
        counter, confirm = state
        img = inputs["image_raw"]
        nearest = None
        for i in range(N_IMAGE_OBJECTS):
            r, score, lat = img[1 + 3 * i : 4 + 3 * i]
            if score > PED_SCORE and 0.5 < r < PED_RANGE and abs(lat) < PED_LATERAL:
                nearest = r if nearest is None else min(nearest, r)
        confirm = min(confirm + 1, 10) if nearest is not None else 0
        ped = confirm >= PED_CONFIRM
        return {"image_objects": (counter, ped)}, (counter + 1, confirm)


@register
class LidarDetect(Kernel):
    """Bin returns in the obstacle height band into 0.1 m range cells.

    A cell needs two returns to count, so one corrupted point can neither
    create nor remove an obstacle. Reports the nearest confirmed range in dm.
    """

    kernel_id = KernelId.LIDAR_DETECT
    inputs = {"points_no_ground": POINTS}
    outputs = {"obstacles": OBSTACLES}
    state_schema = schema(("counter", "int32"), ("age", "int32"))

    def initial_state(self):
        return (0, 0)

    def run(self, inputs, state):
        counter, age = state
        pts = inputs["points_no_ground"]
        bins: dict[int, int] = {}
        for i in range(N_POINTS):
            x, z = pts[1 + 2 * i], pts[2 + 2 * i]
            if OBST_Z[0] < z < OBST_Z[1] and 0.0 < x <= LIDAR_RANGE:
                b = int(math.floor(x * 10 + 1e-6))
                bins[b] = bins.get(b, 0) + 1
        occupied = [b for b, n in bins.items() if n >= 2]
        age = min(age + 1, 1000) if occupied else 0
        nearest = min(occupied) if occupied and age >= 2 else NO_OBSTACLE_DM
        return {"obstacles": (counter, nearest)}, (counter + 1, age)


@register
class NdtMatching(Kernel):
    """Landmark voting followed by fixed-iteration residual refinement."""

    kernel_id = KernelId.NDT_MATCHING
    inputs = {"points_no_ground": POINTS}
    outputs = {"current_pose": POSE}
    state_schema = schema(("counter", "int32"), ("s_prev", "real64"), ("v_est", "real64"))

    def initial_state(self):
        sc = self.scenario
        return (0, sc.s0, sc.v0)

    def _nearest_residual(self, p: float) -> float:
        lm = self.scenario.sorted_landmarks
        i = bisect.bisect_left(lm, p)
        best = math.inf
        for j in (i - 1, i):
            if 0 <= j < len(lm) and abs(lm[j] - p) < abs(best):
                best = lm[j] - p
        return best

    def run(self, inputs, state):
        counter, s_prev, v_est = state
        dt = self.scenario.dt
        pts = inputs["points_no_ground"]
        xs = [
            pts[1 + 2 * i]
            for i in range(N_POINTS)
            if pts[2 + 2 * i] > LANDMARK_Z and 0.0 < pts[1 + 2 * i] <= LIDAR_RANGE + 10
        ]
        s_pred = s_prev + v_est * dt
        best, best_score = None, 1
        if _finite(s_pred):
            lm = self.scenario.sorted_landmarks
            cands = []
            for x in xs:
                lo = bisect.bisect_left(lm, s_pred + x - NDT_WINDOW)
                hi = bisect.bisect_right(lm, s_pred + x + NDT_WINDOW)
                cands.extend(L - x for L in lm[lo:hi])
            for c in sorted(cands):
                score = sum(1 for x in xs if abs(self._nearest_residual(x + c)) <= NDT_TOL)
                if score > best_score or (
                    score == best_score and best is not None and abs(c - s_pred) < abs(best - s_pred)
                ):
                    best, best_score = c, score
        if best is None:
            s = s_pred if _finite(s_pred) else s_prev
            return {"current_pose": (counter, s, POSE_LOST)}, (counter + 1, s, v_est)
        s = best
        for _ in range(NDT_ITERS):
            res = [r for r in (self._nearest_residual(x + s) for x in xs) if abs(r) <= NDT_TOL]
            if not res:
                break
            s += sum(res) / len(res)
        v_new = (s - s_prev) / dt
        return {"current_pose": (counter, s, POSE_OK)}, (counter + 1, s, v_new)


# -- back end ----------------------------------------------------------------


@register
class AstarPlanner(Kernel):
    """A* over a 3-row lateral grid ahead of the ego; reports reachable extent."""

    kernel_id = KernelId.ASTAR_PLANNER
    inputs = {"current_pose": POSE, "obstacles": OBSTACLES}
    outputs = {"trajectory": TRAJECTORY}
    state_schema = schema(("counter", "int32"), ("last_row", "int32"))

    def initial_state(self):
        return (0, 1)

    def _grid(self, s: float, nearest_dm: int) -> list[list[bool]]:
        sc = self.scenario
        base = math.floor(s / sc.cell)
        cols = [sc.map_blocked(base + j) for j in range(PLAN_COLS)]
        if nearest_dm < NO_OBSTACLE_DM:
            first = math.floor(nearest_dm / 10.0 / sc.cell)  # detections are vehicle-relative
            for j in range(max(first, 0), min(first + 2, PLAN_COLS)):
                cols[j] = True
        return [[cols[j]] * PLAN_ROWS for j in range(PLAN_COLS)]

    @staticmethod
    def search(grid: list[list[bool]], pref_row: int) -> tuple[list[tuple[int, int]], bool]:
        """A* from (0, 1) to the last column; falls back to the farthest reachable cell."""
        start, goal_c = (0, 1), len(grid) - 1
        if grid[0][1]:
            return [], False
        g = {start: 0.0}
        parent: dict[tuple[int, int], tuple[int, int] | None] = {start: None}
        heap = [(goal_c, abs(1 - pref_row), 0, 1)]
        closed = set()
        far = start
        while heap:
            _, _, c, r = heapq.heappop(heap)
            if (c, r) in closed:
                continue
            closed.add((c, r))
            if (c, -abs(r - pref_row)) > (far[0], -abs(far[1] - pref_row)):
                far = (c, r)
            if c == goal_c:
                far = (c, r)
                break
            for dr in (0, -1, 1):
                nc, nr = c + 1, r + dr
                if not 0 <= nr < PLAN_ROWS or grid[nc][nr]:
                    continue
                ng = g[(c, r)] + (1.0 if dr == 0 else 1.5)
                if ng < g.get((nc, nr), math.inf):
                    g[(nc, nr)] = ng
                    parent[(nc, nr)] = (c, r)
                    heapq.heappush(heap, (ng + goal_c - nc, abs(nr - pref_row), nc, nr))
        path = []
        node: tuple[int, int] | None = far
        while node is not None:
            path.append(node)
            node = parent[node]
        return path[::-1], True

    def run(self, inputs, state):
        counter, last_row = state
        pseq, s, status = inputs["current_pose"]
        oseq, nearest_dm = inputs["obstacles"]
        if _stale(pseq, counter) or _stale(oseq, counter) or status != POSE_OK or not _finite(s):
            return {"trajectory": (counter, False, 0, 0)}, (counter + 1, last_row)
        pref = last_row if 0 <= last_row < PLAN_ROWS else 1
        path, found = self.search(self._grid(s, nearest_dm), pref)
        if not found:
            return {"trajectory": (counter, False, 0, 0)}, (counter + 1, last_row)
        free = path[-1][0] + 1
        row = path[min(LANE_COL, len(path) - 1)][1]
        return {"trajectory": (counter, True, row - 1, free)}, (counter + 1, row)


@register
class DecisionFsm(Kernel):
    """Drive/Stop machine; leaving Stop needs several consecutive clear frames."""

    kernel_id = KernelId.DECISION_FSM
    inputs = {"trajectory": TRAJECTORY, "obstacles": OBSTACLES, "image_objects": IMAGE_OBJECTS}
    outputs = {"behavior": BEHAVIOR}
    state_schema = schema(("counter", "int32"), ("fsm", "int32"), ("clear_streak", "int32"))

    def initial_state(self):
        return (0, DRIVE, 0)

    def run(self, inputs, state):
        counter, fsm, streak = state
        sc = self.scenario
        tseq, found, lane, free = inputs["trajectory"]
        oseq, nearest_dm = inputs["obstacles"]
        iseq, ped = inputs["image_objects"]
        stale = _stale(tseq, counter) or _stale(oseq, counter) or _stale(iseq, counter)
        rng = nearest_dm / 10.0
        free_m = free * sc.cell
        danger = stale or not found or ped or rng < sc.stop_distance or free_m < sc.margin
        if fsm == DRIVE:
            nxt, streak = (STOP if danger else DRIVE), 0
        elif danger or rng < sc.stop_distance + RESUME_GAP:
            nxt, streak = STOP, 0
        else:
            streak += 1
            nxt = DRIVE if streak >= RESUME_FRAMES else STOP
        if nxt == DRIVE:
            cap = math.sqrt(2 * sc.comfort * max(0.0, min(free_m, rng) - sc.margin))
            speed = int(round(min(sc.cruise, cap) * 1000))
        else:
            speed = 0
        lane_out = 0 if stale else lane
        return {"behavior": (counter, nxt, speed, lane_out)}, (counter + 1, nxt, streak)


@register
class PurePursuit(Kernel):
    """Steer toward the lane point at the lookahead distance."""

    kernel_id = KernelId.PURE_PURSUIT
    inputs = {"behavior": BEHAVIOR, "vehicle_state": VEHICLE_STATE, "lane_waypoints": LANE_WAYPOINTS}
    sensor_inputs = frozenset({"vehicle_state", "lane_waypoints"})
    outputs = {"twist_raw": TWIST}
    state_schema = schema(("counter", "int32"),)

    def initial_state(self):
        return (0,)

    def run(self, inputs, state):
        (counter,) = state
        bseq, fsm, speed, lane = inputs["behavior"]
        v, y, psi = inputs["vehicle_state"]
        wps = inputs["lane_waypoints"]
        if _stale(bseq, counter) or fsm != DRIVE or not _finite(v, y, psi):
            return {"twist_raw": (counter, 0, 0)}, (counter + 1,)
        tx, ty = wps[-2], wps[-1]
        px, py = 0.0, 0.0
        for k in range(N_LANE_WAYPOINTS):
            x, yk = wps[2 * k], wps[2 * k + 1]
            if x >= LOOKAHEAD:
                # interpolate the path point at the lookahead distance
                f = (LOOKAHEAD - px) / (x - px) if x > px else 1.0
                tx, ty = px + f * (x - px), py + f * (yk - py)
                break
            px, py = x, yk
        dx, dy = tx, ty + lane * LANE_STEP - y
        lx = math.cos(psi) * dx + math.sin(psi) * dy
        ly = -math.sin(psi) * dx + math.cos(psi) * dy
        dist = math.hypot(lx, ly)
        omega = v * 2.0 * ly / (dist * dist) if dist > 0 else math.nan
        if not math.isfinite(omega):
            return {"twist_raw": (counter, 0, 0)}, (counter + 1,)
        omega_mrad = int(round(max(-OMEGA_LIMIT, min(OMEGA_LIMIT, omega * 1000))))
        return {"twist_raw": (counter, speed, omega_mrad)}, (counter + 1,)


def _lowpass(prev: int, target: int) -> int:
    d = target - prev
    return prev + (d if abs(d) <= 1 else d // 2)


@register
class TwistFilter(Kernel):
    """Integer first-order low-pass, then clamp to the command bounds."""

    kernel_id = KernelId.TWIST_FILTER
    inputs = {"twist_raw": TWIST}
    outputs = {"twist_filtered": TWIST}
    state_schema = schema(("speed_mm", "int32"), ("omega_mrad", "int32"))

    def initial_state(self):
        sc = self.scenario
        return (int(round(sc.v0 * 1000)), 0) if sc is not None else (0, 0)

    def run(self, inputs, state):
        seq, speed, omega = inputs["twist_raw"]
        v_max = int(round(self.scenario.cruise * 1000)) if self.scenario is not None else 2**31 - 1
        s = max(0, min(v_max, _lowpass(state[0], speed)))
        w = max(-OMEGA_MAX, min(OMEGA_MAX, _lowpass(state[1], omega)))
        return {"twist_filtered": (seq, s, w)}, (s, w)


@register
class TwistGate(Kernel):
    """Final gate: passes the command unless an emergency or timeout is raised."""

    kernel_id = KernelId.TWIST_GATE
    inputs = {"twist_filtered": TWIST, "emergency_in": EMERGENCY}
    sensor_inputs = frozenset({"emergency_in"})
    outputs = {"vehicle_cmd": VEHICLE_CMD}
    state_schema = schema(("counter", "int32"),)

    def initial_state(self):
        return (0,)

    def run(self, inputs, state):
        (counter,) = state
        seq, speed, omega = inputs["twist_filtered"]
        estop, mode, stamp = inputs["emergency_in"]
        dt = self.scenario.dt if self.scenario is not None else 0.1
        timeout = not abs(stamp - counter * dt) <= STAMP_TIMEOUT
        if estop or mode != MODE_AUTO or timeout or _stale(seq, counter):
            return {"vehicle_cmd": (counter, 0, 0, True)}, (counter + 1,)
        return {"vehicle_cmd": (counter, speed, omega, False)}, (counter + 1,)
