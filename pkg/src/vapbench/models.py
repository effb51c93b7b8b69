"""Closed-form vehicle and drone models, and the calibration that regenerates
their derived constants from the published reference tables."""

from __future__ import annotations

import math
from dataclasses import dataclass, field, fields, replace
from pathlib import Path

import numpy as np
from scipy.optimize import brentq

from vapbench.pipeline.kvconfig import ConfigError, KVFile, parse_list

DATA_DIR = Path(__file__).resolve().parent / "data"
SCHEMES = ("none", "anomaly", "temporal", "modular", "checkpoint", "vap")


class ModelError(ValueError):
    pass


# -- vehicle -----------------------------------------------------------------


@dataclass(frozen=True)
class VehicleParams:
    speed_mps: float = 5.6
    brake_mps2: float = 4.0
    battery_kwh: float = 6.0
    base_kw: float = 0.6
    ad_base_kw: float = 0.175
    t0_ms: float = 164.0
    d0_m: float = 5.0
    v_eff_mps: float = 5.74
    margin_m: float = 0.0
    driving_time0_h: float = 7.74


def avoidance_distance(t_compute_s: float, p: VehicleParams = VehicleParams(), mode: str = "affine") -> float:
    """Distance (m) at which the vehicle must start reacting to an object.

    ``affine`` is the calibrated line through the baseline point;
    ``physics`` is reaction travel plus braking distance plus margin.
    """
    if t_compute_s <= 0:
        raise ModelError("compute latency must be positive")
    if mode == "affine":
        return p.d0_m + p.v_eff_mps * (t_compute_s - p.t0_ms / 1000.0)
    if mode == "physics":
        v = p.speed_mps
        return v * t_compute_s + v * v / (2 * p.brake_mps2) + p.margin_m
    raise ModelError(f"unknown distance mode {mode!r}")


def driving_time(p_ad_kw: float, p: VehicleParams = VehicleParams()) -> float:
    """Hours of driving on one battery charge with an AD system drawing ``p_ad_kw``."""
    if p_ad_kw < 0:
        raise ModelError("power must be >= 0")
    return p.battery_kwh / (p.base_kw + p_ad_kw)


def energy_change(p_ad_kw: float, p: VehicleParams = VehicleParams()) -> float:
    """AD energy change in percent relative to the unprotected AD power."""
    return 100.0 * (p_ad_kw / p.ad_base_kw - 1.0)


def revenue_loss(p_ad_kw: float, p: VehicleParams = VehicleParams()) -> float:
    """Percent of daily driving (revenue) lost relative to the unprotected system."""
    return 100.0 * (1.0 - driving_time(p_ad_kw, p) / driving_time(p.ad_base_kw, p))


# -- drone -------------------------------------------------------------------


@dataclass(frozen=True)
class DroneParams:
    sense_m: float = 4.5
    distance_m: float = 300.0
    compute_base_w: float = 15.0
    platform_w: float = 543.8
    battery_kj: float = 337.7
    missions0: float = 5.62
    brake_mps2: float = 1.8803
    kappa: float = 1.0
    beta_per_kg: float = 0.1
    latency0_ms: float = 871.0
    velocity0_mps: float = 2.79


def safe_velocity(t_compute_s: float, a_max: float, d_sense: float) -> float:
    """Largest v with v*t + v^2/(2a) <= d_sense."""
    if t_compute_s < 0 or a_max <= 0 or d_sense <= 0:
        raise ModelError("safe_velocity needs t >= 0 and positive a, d")
    at = a_max * t_compute_s
    return -at + math.sqrt(at * at + 2.0 * a_max * d_sense)


def payload_velocity_factor(mass_kg: float, beta_per_kg: float = 0.1) -> float:
    if mass_kg < 0:
        raise ModelError("payload mass must be >= 0")
    return max(0.0, 1.0 - beta_per_kg * mass_kg)


def average_velocity(t_compute_s: float, payload_kg: float = 0.0, p: DroneParams = DroneParams()) -> float:
    v = p.kappa * safe_velocity(t_compute_s, p.brake_mps2, p.sense_m)
    return v * payload_velocity_factor(payload_kg, p.beta_per_kg)


@dataclass(frozen=True)
class MissionFigures:
    time_s: float
    energy_kj: float
    missions: float
    endurance_reduction_pct: float


def drone_mission_figures(v_avg: float, p_compute_w: float, p: DroneParams = DroneParams()) -> MissionFigures:
    if v_avg <= 0:
        raise ModelError("average velocity must be positive")
    t = p.distance_m / v_avg
    energy_kj = (p.platform_w + p_compute_w) * t / 1000.0
    missions = p.battery_kj / energy_kj
    return MissionFigures(t, energy_kj, missions, 100.0 * (1.0 - missions / p.missions0))


# -- parameter files ---------------------------------------------------------


def _params_from(kv: KVFile, section: str, cls):
    known = {f.name for f in fields(cls)}
    kwargs = {}
    for key in kv.items(section):
        if key not in known:
            raise ConfigError(f"{kv.source}: [{section}] unknown key {key!r}")
        kwargs[key] = kv.get(section, key, cast=float)
    return cls(**kwargs)


@dataclass(frozen=True)
class ReferenceTables:
    """Published rows, keyed by scheme, as plain dicts of floats (and a cost label)."""

    av_eval: dict = field(default_factory=dict)
    av_latency: dict = field(default_factory=dict)
    drone_eval: dict = field(default_factory=dict)
    drone_latency: dict = field(default_factory=dict)


@dataclass(frozen=True)
class ModelConfig:
    vehicle: VehicleParams = VehicleParams()
    drone: DroneParams = DroneParams()
    reference: ReferenceTables = ReferenceTables()


def _row(kv: KVFile, kind: str, name: str) -> dict:
    out = {}
    for key, val in kv.items(kind, name).items():
        if key == "cost":
            out[key] = val
        elif key == "stages":
            try:
                out[key] = tuple(parse_list(val, float))
            except ValueError:
                raise ConfigError(f"{kv.source}: [{kind} {name}] stages = {val!r}: expected numbers") from None
        else:
            out[key] = kv.get(kind, key, name=name, cast=float)
    return out


def parse_models(kv: KVFile) -> ModelConfig:
    tables = {}
    for kind in ("av_eval", "av_latency", "drone_eval", "drone_latency"):
        rows = {}
        for _, name in kv.sections(kind):
            if name not in SCHEMES:
                raise ConfigError(f"{kv.source}: [{kind} {name}] unknown scheme")
            rows[name] = _row(kv, kind, name)
        tables[kind] = rows
    return ModelConfig(
        _params_from(kv, "vehicle", VehicleParams),
        _params_from(kv, "drone", DroneParams),
        ReferenceTables(**tables),
    )


def load_models(path: str | Path | None = None) -> ModelConfig:
    return parse_models(KVFile.load(path or DATA_DIR / "models.conf"))


# -- calibration -------------------------------------------------------------


@dataclass
class Check:
    name: str
    value: float
    target: float
    tol: float

    @property
    def residual(self) -> float:
        return self.value - self.target

    @property
    def ok(self) -> bool:
        return abs(self.residual) <= self.tol


@dataclass
class Calibration:
    constants: dict[str, float]
    checks: list[Check]
    inconsistencies: list[str]
    notes: list[str]
    explain: list[str]

    @property
    def ok(self) -> bool:
        return all(c.ok for c in self.checks)

    def failures(self) -> list[Check]:
        return [c for c in self.checks if not c.ok]


def fit_v_eff(latencies_ms, distances_m, t0_ms: float, d0_m: float) -> float:
    """Least-squares slope of the distance line pinned at the baseline point."""
    dt = (np.asarray(latencies_ms, float) - t0_ms)[:, None] / 1000.0
    dd = np.asarray(distances_m, float) - d0_m
    slope, *_ = np.linalg.lstsq(dt, dd, rcond=None)
    return float(slope[0])


def fit_drone_brake(t0_s: float, v0: float, d_sense: float, kappa: float = 1.0) -> float:
    """Braking deceleration for which kappa * safe_velocity(t0) equals v0."""
    return brentq(lambda a: kappa * safe_velocity(t0_s, a, d_sense) - v0, 1e-3, 1e3, xtol=1e-12)


def calibrate(cfg: ModelConfig) -> Calibration:
    """Regenerate derived constants from the reference tables and check every row."""
    veh, dr, ref = cfg.vehicle, cfg.drone, cfg.reference
    t2, t4 = ref.av_eval, ref.drone_eval
    if "none" not in t2 or "none" not in t4:
        raise ModelError("reference tables need a 'none' baseline row")
    checks: list[Check] = []
    explain: list[str] = []
    consts: dict[str, float] = {}

    # vehicle distance slope
    rows = [r for s, r in t2.items() if s != "none"]
    v_eff = fit_v_eff([r["latency_ms"] for r in rows], [r["distance_m"] for r in rows], veh.t0_ms, veh.d0_m)
    consts["v_eff_mps"] = v_eff
    explain.append(
        f"v_eff = least-squares slope of (d - {veh.d0_m}) on (t - {veh.t0_ms / 1000:.3f} s) over "
        f"{len(rows)} protected rows = {v_eff:.4f} m/s"
    )
    checks.append(Check("v_eff_mps", v_eff, veh.v_eff_mps, 0.05))
    fitted = replace(veh, v_eff_mps=v_eff)
    for s, r in t2.items():
        checks.append(Check(f"av_eval.{s}.distance_m", avoidance_distance(r["latency_ms"] / 1000, fitted), r["distance_m"], 0.08))
        p_kw = r["effective_w"] / 1000.0
        checks.append(Check(f"av_eval.{s}.driving_time_h", driving_time(p_kw, veh), r["driving_time_h"], 0.05))
        checks.append(Check(f"av_eval.{s}.revenue_loss_pct", revenue_loss(p_kw, veh), r["revenue_loss_pct"], 0.5))
    phys = avoidance_distance(veh.t0_ms / 1000, veh, "physics")
    explain.append(
        f"physics distance at t0: {veh.speed_mps}*{veh.t0_ms / 1000} + {veh.speed_mps}^2/(2*{veh.brake_mps2})"
        f" + {veh.margin_m} = {phys:.3f} m (baseline {veh.d0_m} m)"
    )

    # drone mission constants
    b = t4["none"]
    D = b["velocity_mps"] * b["mission_time_s"]
    E_d = b["missions"] * b["energy_kj"]
    P_total = b["energy_kj"] * 1000.0 / b["mission_time_s"]
    P_p = P_total - b["power_w"]
    consts.update(distance_m=D, battery_kj=E_d, platform_w=P_p, platform_total_w=P_total)
    explain += [
        f"D = {b['velocity_mps']} m/s * {b['mission_time_s']} s = {D:.2f} m",
        f"E_d = {b['missions']} missions * {b['energy_kj']} kJ = {E_d:.2f} kJ",
        f"P_p = {b['energy_kj']} kJ / {b['mission_time_s']} s - {b['power_w']} W = {P_p:.2f} W"
        f" ({P_total:.2f} W with compute)",
    ]
    checks += [
        Check("distance_m", D, dr.distance_m, 0.1),
        Check("battery_kj", E_d, dr.battery_kj, 0.5),
        Check("platform_w", P_p, dr.platform_w, 0.5),
    ]
    for s, r in t4.items():
        checks.append(Check(f"drone_eval.{s}.distance_m", r["velocity_mps"] * r["mission_time_s"], D, 0.1))
        checks.append(Check(f"drone_eval.{s}.missions", E_d / r["energy_kj"], r["missions"], 0.05))

    a_d = fit_drone_brake(dr.latency0_ms / 1000, dr.velocity0_mps, dr.sense_m, dr.kappa)
    consts["drone_brake_mps2"] = a_d
    explain.append(
        f"a_d solves {dr.kappa} * safe_velocity({dr.latency0_ms / 1000} s, a, {dr.sense_m} m) = "
        f"{dr.velocity0_mps} m/s -> a_d = {a_d:.4f} m/s^2"
    )
    checks.append(Check("drone_brake_mps2", a_d, dr.brake_mps2, 1e-3))
    notes = []
    fitted_d = replace(dr, brake_mps2=a_d)
    for s, r in t4.items():
        v = average_velocity(r["latency_ms"] / 1000, 0.0, fitted_d)
        notes.append(f"velocity model at {r['latency_ms']:.0f} ms: {v:.3f} m/s vs table {r['velocity_mps']} "
                     f"(residual {v - r['velocity_mps']:+.3f}, payload ignored)")
    for s, r in t4.items():
        implied = r["energy_kj"] * 1000 / r["mission_time_s"] - P_p
        if abs(implied - r["power_w"]) > 0.5:
            notes.append(
                f"drone_eval {s}: energy/time implies {implied:.1f} W compute power, column prints {r['power_w']:.0f} W"
            )

    return Calibration(consts, checks, inconsistencies(cfg), notes, explain)


def inconsistencies(cfg: ModelConfig) -> list[str]:
    """Reference-table entries that contradict each other, with the arithmetic."""
    veh, ref = cfg.vehicle, cfg.reference
    out = []
    for s, r in ref.av_eval.items():
        implied = veh.ad_base_kw * 1000 * (1 + r["energy_change_pct"] / 100)
        if abs(implied - r["power_w"]) > 0.02 * r["power_w"]:
            out.append(
                f"av_eval {s} power: column prints {r['power_w']:.0f} W but {r['energy_change_pct']:+.2f}% energy "
                f"change implies {implied:.1f} W (driving time {r['driving_time_h']} h implies "
                f"{(veh.battery_kwh / r['driving_time_h'] - veh.base_kw) * 1000:.1f} W)"
            )
    for name, table in (("av_latency", ref.av_latency), ("drone_latency", ref.drone_latency)):
        for s, r in table.items():
            total = sum(r["stages"])
            if abs(total - r["total"]) > 0.5:
                out.append(f"{name} {s} total: prints {r['total']:.0f} ms but stages sum to {total:.0f} ms")
    return out


def render_calibration(cal: Calibration, explain: bool = False) -> str:
    lines = ["# Calibration", "", "## Derived constants", ""]
    lines += [f"- {k} = {v:.4f}" for k, v in cal.constants.items()]
    lines += ["", "## Residuals", "", "| check | value | target | residual | tolerance | ok |", "|---|---|---|---|---|---|"]
    for c in cal.checks:
        lines.append(f"| {c.name} | {c.value:.4f} | {c.target:.4f} | {c.residual:+.4f} | {c.tol:g} | {'yes' if c.ok else 'NO'} |")
    lines += ["", "## Inconsistencies in the reference tables", ""]
    lines += [f"- {x}" for x in cal.inconsistencies] or ["- none"]
    if cal.notes:
        lines += ["", "## Notes", ""] + [f"- {x}" for x in cal.notes]
    if explain:
        lines += ["", "## Derivations", ""] + [f"- {x}" for x in cal.explain]
    return "\n".join(lines) + "\n"
