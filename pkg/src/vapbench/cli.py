"""``vapbench`` command line: characterize, protect, sweep and calibrate.

Exit codes: 0 success, 1 configuration error, 2 campaign failure,
3 calibration residual out of tolerance.
"""

from __future__ import annotations

import argparse
import dataclasses
import hashlib
import sys
from dataclasses import dataclass
from pathlib import Path

from vapbench.faults import CampaignError, CampaignSpec, Golden, TraceMismatch, analysis_env, load_campaign, \
    prepare_golden, run_campaign
from vapbench.metrics import MetricsError, OutcomeCounts, compute_epr, failure_rate, latency_breakdown
from vapbench.models import ModelConfig, ModelError, average_velocity, avoidance_distance, calibrate, \
    drone_mission_figures, driving_time, energy_change, load_models, payload_velocity_factor, \
    render_calibration, revenue_loss
from vapbench.pipeline.graph import BUCKETS, GraphError
from vapbench.pipeline.kvconfig import ConfigError, KVFile, parse_list
from vapbench.protection import SCHEMES, PolicyMap, ProtectionError, SchemeParams, assign_vap, \
    load_scheme_params, make_policies
from vapbench.report import DERIVED_PARAM, FORMATS, MEASURED, PUBLISHED_PARAM, Cell, Report, Table
from vapbench.workloads.scenario import DATA_DIR, Workload, load_workload

EXIT_OK, EXIT_CONFIG, EXIT_CAMPAIGN, EXIT_CALIBRATION = 0, 1, 2, 3
SWEEP_PARAMS = ("latency", "power", "payload", "vap.theta", "window_len", "sigma_k")
# Schemes whose effective AD power is taken from the model file rather than
# derived from hardware copies: their extra energy comes from re-execution
# and checkpoint traffic, which the printed power column does not include.
EFFECTIVE_POWER_SCHEMES = ("anomaly", "temporal", "checkpoint")
# Fewer trials than this on any node triggers a standard-error warning.
MIN_TRIALS_PER_NODE = 100


class CalibrationFailure(RuntimeError):
    pass


# -- configuration -----------------------------------------------------------


@dataclass(frozen=True)
class CampaignConfig:
    workload: str
    pipeline: Path
    scenario: Path
    policy: Path
    campaign: Path
    model: Path
    seed: int | None
    out: Path
    formats: tuple[str, ...]
    source: str = "<config>"


def parse_config(kv: KVFile, base: Path) -> CampaignConfig:
    """``[config]`` section; file paths are relative to ``base``."""
    items = kv.items("config")
    known = {"workload", "pipeline", "scenario", "policy", "campaign", "model", "seed", "out", "format"}
    unknown = set(items) - known
    if unknown:
        raise ConfigError(f"{kv.source}: [config] unknown key(s) {', '.join(sorted(unknown))}")
    workload = kv.require("config", "workload")
    if workload not in ("av", "drone"):
        raise ConfigError(f"{kv.source}: [config] workload = {workload!r}: expected av or drone")

    def path(key):
        p = base / kv.require("config", key)
        if not p.is_file():
            raise ConfigError(f"{kv.source}: [config] {key} = {p}: no such file")
        return p

    formats = parse_formats(kv.get("config", "format", ",".join(FORMATS)), kv.source)
    return CampaignConfig(
        workload=workload,
        pipeline=path("pipeline"),
        scenario=path("scenario"),
        policy=path("policy"),
        campaign=path("campaign"),
        model=path("model"),
        seed=kv.get("config", "seed", cast=int),
        out=Path(kv.get("config", "out", f"out-{workload}")),
        formats=formats,
        source=kv.source,
    )


def parse_formats(text: str, source: str = "--format") -> tuple[str, ...]:
    formats = tuple(parse_list(text))
    bad = [f for f in formats if f not in FORMATS]
    if bad or not formats:
        raise ConfigError(f"{source}: format {text!r}: expected a comma list of {', '.join(FORMATS)}")
    return formats


def load_config(ref: str | Path) -> CampaignConfig:
    """A config file path, or the name of a shipped config (``av`` or ``drone``)."""
    path = Path(ref)
    if not path.exists() and str(ref) in ("av", "drone"):
        path = DATA_DIR / f"{ref}.config"
    return parse_config(KVFile.load(path), path.resolve().parent)


@dataclass
class Context:
    cfg: CampaignConfig
    workload: Workload
    params: SchemeParams
    campaign: CampaignSpec
    models: ModelConfig


def open_context(cfg: CampaignConfig, seed: int | None = None, trials: int | None = None) -> Context:
    try:
        workload = load_workload(cfg.pipeline, cfg.scenario)
    except GraphError as exc:
        raise ConfigError(f"{cfg.pipeline}: {exc}") from None
    if workload.name != cfg.workload:
        raise ConfigError(f"{cfg.source}: workload = {cfg.workload} but {cfg.scenario} is a {workload.name} scenario")
    params = load_scheme_params(KVFile.load(cfg.policy))
    campaign = load_campaign(cfg.campaign)
    changes = {}
    seed = seed if seed is not None else cfg.seed
    if seed is not None:
        changes["seed"] = seed
    if trials is not None:
        changes["trials"] = trials
    try:
        campaign = dataclasses.replace(campaign, **changes)
    except CampaignError as exc:
        raise ConfigError(str(exc)) from None
    for t in campaign.targets or ():
        if t not in workload.graph.node_ids:
            raise ConfigError(f"{cfg.campaign}: targets names unknown node {t}")
    return Context(cfg, workload, params, campaign, load_models(cfg.model))


# -- golden-run cache --------------------------------------------------------


class GoldenCache:
    """Fault-free runs keyed by a content hash of pipeline, scenario, seed and policies."""

    def __init__(self):
        self._env: dict[str, dict] = {}
        self._golden: dict[str, Golden] = {}

    @staticmethod
    def _hash(*parts) -> str:
        h = hashlib.sha256()
        for p in parts:
            h.update(repr(p).encode())
            h.update(b"\0")
        return h.hexdigest()

    def key(self, ctx: Context, pm: PolicyMap) -> str:
        return self._hash(ctx.workload.graph, ctx.workload.scenario, ctx.campaign.seed,
                          ctx.campaign.horizon, sorted(pm.policies.items()))

    def env(self, ctx: Context) -> dict:
        k = self._hash(ctx.workload.graph, ctx.workload.scenario)
        if k not in self._env:
            self._env[k] = analysis_env(ctx.workload)
        return self._env[k]

    def golden(self, ctx: Context, pm: PolicyMap) -> Golden:
        k = self.key(ctx, pm)
        if k not in self._golden:
            self._golden[k] = prepare_golden(ctx.workload, pm.policies, self.env(ctx), ctx.campaign.horizon)
        return self._golden[k]

    def __len__(self) -> int:
        return len(self._golden)


@dataclass
class SchemeRun:
    scheme: str
    policies: PolicyMap
    golden: Golden
    counts: dict[str, OutcomeCounts] | None  # None when trials = 0

    @property
    def measured_traces(self):
        g = self.golden
        return g.traces[g.first_frame:g.first_frame + g.horizon]


def run_scheme(ctx: Context, cache: GoldenCache, scheme: str, params: SchemeParams | None = None,
               vulnerability: dict[str, float] | None = None) -> SchemeRun:
    pm = make_policies(scheme, ctx.workload.graph, params or ctx.params, vulnerability)
    golden = cache.golden(ctx, pm)
    counts = None
    if ctx.campaign.trials > 0:
        counts = run_campaign(ctx.workload, ctx.campaign, pm, golden=golden).counts
    return SchemeRun(scheme, pm, golden, counts)


def _node_metric(ctx: Context, counts: OutcomeCounts | None) -> float | None:
    """Per-node EPR (AV) or mission failure rate (drone), percent."""
    if counts is None or counts.trials == 0:
        return None
    if ctx.workload.name == "drone":
        return failure_rate(counts)
    return compute_epr(counts).aggregate


def _stderr(p_pct: float | None, n: int) -> float | None:
    if p_pct is None or n == 0:
        return None
    p = p_pct / 100.0
    return 100.0 * (p * (1 - p) / n) ** 0.5


def _trial_warnings(ctx: Context, counts: dict[str, OutcomeCounts] | None) -> list[str]:
    if counts is None:
        return []
    per_node = {n: (counts.get(n) or OutcomeCounts()).trials for n in (ctx.campaign.targets or ctx.workload.graph.node_ids)}
    thin = sorted(n for n, k in per_node.items() if k < MIN_TRIALS_PER_NODE)
    if not thin:
        return []
    return [f"only {ctx.campaign.trials} trial(s): {len(thin)} node(s) have fewer than {MIN_TRIALS_PER_NODE} "
            f"trials, so standard errors are large ({', '.join(thin)})"]


# -- characterize ------------------------------------------------------------


def characterize_vulnerability(ctx: Context, cache: GoldenCache) -> tuple[SchemeRun, dict[str, float | None]]:
    run = run_scheme(ctx, cache, "none")
    metric = {n: _node_metric(ctx, (run.counts or {}).get(n)) for n in ctx.workload.graph.node_ids}
    return run, metric


def cmd_characterize(ctx: Context, cache: GoldenCache) -> Report:
    run, metric = characterize_vulnerability(ctx, cache)
    drone = ctx.workload.name == "drone"
    name = "failure_pct" if drone else "epr_pct"
    src = "metrics.failure_rate" if drone else "metrics.compute_epr"
    traces = run.measured_traces
    t = Table("per-node characterization",
              ["node", "stage", "end", "latency_ms", name, "stderr_pp", "trials"])
    for n in ctx.workload.graph.nodes:
        lat = sum(r.latency_us for tr in traces for r in tr.records if r.node == n.id) / len(traces) / 1000.0
        k = (run.counts or {}).get(n.id, OutcomeCounts()).trials if run.counts is not None else 0
        t.add({
            "node": n.id,
            "stage": n.stage.value,
            "end": n.end.value,
            "latency_ms": Cell(lat, MEASURED, "runtime.golden_run"),
            name: Cell(metric[n.id], MEASURED, src),
            "stderr_pp": Cell(_stderr(metric[n.id], k), MEASURED, "metrics.EprReport.stderr"),
            "trials": Cell(k, MEASURED, "faults.run_campaign"),
        })
    rep = Report("characterize", ctx.workload.name, ctx.campaign.seed, [t], _meta(ctx))
    rep.warnings += _trial_warnings(ctx, run.counts)
    return rep


# -- protect -----------------------------------------------------------------


AV_COLUMNS = ["scheme", "latency_ms", "distance_m", "ad_power_w", "effective_power_w", "energy_change_pct",
              "driving_time_h", "revenue_loss_pct", "cost", "epr_pct"]
DRONE_COLUMNS = ["scheme", "latency_ms", "velocity_mps", "mission_time_s", "compute_power_w", "energy_kj",
                 "missions", "endurance_reduction_pct", "cost", "failure_pct"]


def _cost(ctx: Context, scheme: str) -> Cell:
    table = ctx.models.reference.drone_eval if ctx.workload.name == "drone" else ctx.models.reference.av_eval
    return Cell(table.get(scheme, {}).get("cost", "-"), PUBLISHED_PARAM, "models.conf cost label")


def av_row(ctx: Context, run: SchemeRun, latency_ms: float) -> dict:
    veh = ctx.models.vehicle
    printed_w = veh.ad_base_kw * 1000.0 + run.policies.power_delta_w(ctx.workload.graph)
    ref = ctx.models.reference.av_eval.get(run.scheme, {})
    if run.scheme in EFFECTIVE_POWER_SCHEMES and "effective_w" in ref:
        eff = Cell(ref["effective_w"], PUBLISHED_PARAM, "models.conf effective_w")
    else:
        eff = Cell(printed_w, DERIVED_PARAM, "protection.PolicyMap.power_delta_w")
    kw = eff.value / 1000.0
    epr = compute_epr(run.counts).aggregate if run.counts else None
    return {
        "scheme": run.scheme,
        "latency_ms": Cell(latency_ms, MEASURED, "metrics.latency_breakdown"),
        "distance_m": Cell(avoidance_distance(latency_ms / 1000.0, veh), DERIVED_PARAM, "models.avoidance_distance"),
        "ad_power_w": Cell(printed_w, DERIVED_PARAM, "protection.PolicyMap.power_delta_w"),
        "effective_power_w": eff,
        "energy_change_pct": Cell(energy_change(kw, veh), DERIVED_PARAM, "models.energy_change"),
        "driving_time_h": Cell(driving_time(kw, veh), DERIVED_PARAM, "models.driving_time"),
        "revenue_loss_pct": Cell(revenue_loss(kw, veh), DERIVED_PARAM, "models.revenue_loss"),
        "cost": _cost(ctx, run.scheme),
        "epr_pct": Cell(epr, MEASURED, "metrics.compute_epr"),
    }


def drone_row(ctx: Context, run: SchemeRun, latency_ms: float) -> dict:
    dr = ctx.models.drone
    graph = ctx.workload.graph
    power = dr.compute_base_w + run.policies.power_delta_w(graph)
    v = average_velocity(latency_ms / 1000.0, run.policies.payload_kg(graph), dr)
    fig = drone_mission_figures(v, power, dr)
    fail = None
    if run.counts:
        total = sum(run.counts.values(), OutcomeCounts())
        fail = failure_rate(total)
    return {
        "scheme": run.scheme,
        "latency_ms": Cell(latency_ms, MEASURED, "metrics.latency_breakdown"),
        "velocity_mps": Cell(v, DERIVED_PARAM, "models.average_velocity"),
        "mission_time_s": Cell(fig.time_s, DERIVED_PARAM, "models.drone_mission_figures"),
        "compute_power_w": Cell(power, DERIVED_PARAM, "protection.PolicyMap.power_delta_w"),
        "energy_kj": Cell(fig.energy_kj, DERIVED_PARAM, "models.drone_mission_figures"),
        "missions": Cell(fig.missions, DERIVED_PARAM, "models.drone_mission_figures"),
        "endurance_reduction_pct": Cell(fig.endurance_reduction_pct, DERIVED_PARAM, "models.drone_mission_figures"),
        "cost": _cost(ctx, run.scheme),
        "failure_pct": Cell(fail, MEASURED, "metrics.failure_rate"),
    }


def parse_schemes(text: str) -> list[str]:
    if text.strip() == "all":
        return list(SCHEMES)
    schemes = parse_list(text)
    bad = [s for s in schemes if s not in SCHEMES]
    if bad or not schemes:
        raise ConfigError(f"--scheme {text!r}: unknown scheme(s) {', '.join(bad)}; expected {', '.join(SCHEMES)} or all")
    return schemes


def cmd_protect(ctx: Context, cache: GoldenCache, schemes: list[str]) -> Report:
    drone = ctx.workload.name == "drone"
    main = Table("end-to-end comparison", DRONE_COLUMNS if drone else AV_COLUMNS)
    bd = Table("latency breakdown", ["scheme"] + [f"{b}_ms" for b in BUCKETS] + ["total_ms"])
    warnings = []
    vulnerability = None
    if "vap" in schemes and ctx.params.vap_mode == "threshold":
        _, vulnerability = characterize_vulnerability(ctx, cache)
        if any(v is None for v in vulnerability.values()):
            raise ConfigError("threshold-mode VAP needs trials on every node; raise --trials")
    for s in schemes:
        run = run_scheme(ctx, cache, s, vulnerability=vulnerability if s == "vap" else None)
        lb = latency_breakdown(run.measured_traces)
        main.add((drone_row if drone else av_row)(ctx, run, lb.total_ms))
        row = {"scheme": s, "total_ms": Cell(lb.total_ms, MEASURED, "metrics.latency_breakdown")}
        row.update({f"{b}_ms": Cell(lb.stages_ms[b], MEASURED, "metrics.latency_breakdown") for b in BUCKETS})
        bd.add(row)
        for w in _trial_warnings(ctx, run.counts):
            warnings.append(f"{s}: {w}")
    if ctx.campaign.trials == 0:
        warnings.append("trials = 0: resilience column absent")
    rep = Report("protect", ctx.workload.name, ctx.campaign.seed, [main, bd], _meta(ctx))
    rep.warnings += warnings
    return rep


# -- sweep -------------------------------------------------------------------


def parse_values(text: str, param: str) -> list[float]:
    cast = int if param == "window_len" else float
    try:
        values = parse_list(text, cast)
    except ValueError:
        raise ConfigError(f"--values {text!r}: expected a comma list of numbers") from None
    if not values:
        raise ConfigError("--values is empty")
    return values


def cmd_sweep(ctx: Context, cache: GoldenCache, param: str, values: list[float]) -> Report:
    drone = ctx.workload.name == "drone"
    veh, dr = ctx.models.vehicle, ctx.models.drone
    d = lambda v, src: Cell(v, DERIVED_PARAM, src)  # noqa: E731
    if param == "latency":
        if drone:
            t = Table("latency sweep", ["latency_ms", "velocity_mps", "mission_time_s", "energy_kj", "missions",
                                        "endurance_reduction_pct"])
            for ms in values:
                v = average_velocity(ms / 1000.0, 0.0, dr)
                f = drone_mission_figures(v, dr.compute_base_w, dr)
                t.add({"latency_ms": ms, "velocity_mps": d(v, "models.average_velocity"),
                       "mission_time_s": d(f.time_s, "models.drone_mission_figures"),
                       "energy_kj": d(f.energy_kj, "models.drone_mission_figures"),
                       "missions": d(f.missions, "models.drone_mission_figures"),
                       "endurance_reduction_pct": d(f.endurance_reduction_pct, "models.drone_mission_figures")})
        else:
            t = Table("latency sweep", ["latency_ms", "distance_m", "distance_physics_m"])
            for ms in values:
                t.add({"latency_ms": ms,
                       "distance_m": d(avoidance_distance(ms / 1000.0, veh), "models.avoidance_distance"),
                       "distance_physics_m": d(avoidance_distance(ms / 1000.0, veh, "physics"),
                                               "models.avoidance_distance")})
    elif param == "power":
        if drone:
            t = Table("power sweep", ["compute_power_w", "mission_time_s", "energy_kj", "missions",
                                      "endurance_reduction_pct"])
            v = average_velocity(dr.latency0_ms / 1000.0, 0.0, dr)
            for w in values:
                f = drone_mission_figures(v, w, dr)
                t.add({"compute_power_w": w, "mission_time_s": d(f.time_s, "models.drone_mission_figures"),
                       "energy_kj": d(f.energy_kj, "models.drone_mission_figures"),
                       "missions": d(f.missions, "models.drone_mission_figures"),
                       "endurance_reduction_pct": d(f.endurance_reduction_pct, "models.drone_mission_figures")})
        else:
            t = Table("power sweep", ["ad_power_kw", "driving_time_h", "energy_change_pct", "revenue_loss_pct"])
            for kw in values:
                t.add({"ad_power_kw": kw, "driving_time_h": d(driving_time(kw, veh), "models.driving_time"),
                       "energy_change_pct": d(energy_change(kw, veh), "models.energy_change"),
                       "revenue_loss_pct": d(revenue_loss(kw, veh), "models.revenue_loss")})
    elif param == "payload":
        if not drone:
            raise ConfigError("the payload sweep applies to the drone workload")
        t = Table("payload sweep", ["payload_kg", "velocity_factor", "velocity_mps", "mission_time_s", "missions"])
        for kg in values:
            v = average_velocity(dr.latency0_ms / 1000.0, kg, dr)
            f = drone_mission_figures(v, dr.compute_base_w, dr) if v > 0 else None
            t.add({"payload_kg": kg,
                   "velocity_factor": d(payload_velocity_factor(kg, dr.beta_per_kg), "models.payload_velocity_factor"),
                   "velocity_mps": d(v, "models.average_velocity"),
                   "mission_time_s": d(f.time_s if f else None, "models.drone_mission_figures"),
                   "missions": d(f.missions if f else None, "models.drone_mission_figures")})
    elif param == "vap.theta":
        if ctx.campaign.trials == 0:
            raise ConfigError("the vap.theta sweep needs a characterization campaign; trials must be > 0")
        _, vuln = characterize_vulnerability(ctx, cache)
        if any(v is None for v in vuln.values()):
            raise ConfigError("the vap.theta sweep needs trials on every node; raise --trials")
        t = Table("vap.theta sweep", ["theta_pct", "hardware_nodes", "hardware_node_ids", "latency_ms", "power_delta_w"])
        graph = ctx.workload.graph
        for theta in values:
            pm = assign_vap(graph, vuln, ctx.params, mode="threshold", theta=theta)
            hw = [n for n in graph.node_ids if pm.get(n) is not ctx.params.vap_front]
            t.add({"theta_pct": theta,
                   "hardware_nodes": Cell(len(hw), MEASURED, "protection.assign_vap"),
                   "hardware_node_ids": " ".join(hw),
                   "latency_ms": d(pm.latency_us(graph) / 1000.0, "protection.PolicyMap.latency_us"),
                   "power_delta_w": d(pm.power_delta_w(graph), "protection.PolicyMap.power_delta_w")})
    elif param in ("window_len", "sigma_k"):
        name = "failure_pct" if drone else "epr_pct"
        t = Table(f"{param} sweep", [param, "latency_ms", name])
        for val in values:
            try:
                ad = dataclasses.replace(ctx.params.anomaly, **{param: val})
            except ProtectionError as exc:
                raise ConfigError(f"--values: {param} = {val}: {exc}") from None
            run = run_scheme(ctx, cache, "anomaly", dataclasses.replace(ctx.params, anomaly=ad))
            lb = latency_breakdown(run.measured_traces)
            metric = None
            if run.counts:
                total = sum(run.counts.values(), OutcomeCounts())
                metric = failure_rate(total) if drone else compute_epr(run.counts).aggregate
            t.add({param: val, "latency_ms": Cell(lb.total_ms, MEASURED, "metrics.latency_breakdown"),
                   name: Cell(metric, MEASURED, "metrics.failure_rate" if drone else "metrics.compute_epr")})
    else:
        raise ConfigError(f"unknown sweep parameter {param!r}; expected one of {', '.join(SWEEP_PARAMS)}")
    return Report("sweep", ctx.workload.name, ctx.campaign.seed, [t], {**_meta(ctx), "param": param})


# -- calibrate ---------------------------------------------------------------


def cmd_calibrate(models: ModelConfig, explain: bool = False) -> tuple[str, bool]:
    cal = calibrate(models)
    return render_calibration(cal, explain), cal.ok


def _meta(ctx: Context) -> dict:
    """Input file digests, so a report names exactly what produced it."""
    files = {k: getattr(ctx.cfg, k) for k in ("pipeline", "scenario", "policy", "campaign", "model")}
    return {
        "trials": ctx.campaign.trials,
        "inputs": {k: {"file": p.name, "sha256": hashlib.sha256(p.read_bytes()).hexdigest()} for k, p in files.items()},
    }


# -- entry point -------------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    """argparse exits 2 on usage errors; usage errors are configuration errors here."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default="av", help="config file, or 'av' / 'drone' for the shipped ones")
    common.add_argument("--seed", type=int, help="campaign seed (overrides the config)")
    common.add_argument("--out", type=Path, help="output directory (overrides the config)")
    common.add_argument("--format", help="comma list of csv, json, md")
    common.add_argument("--trials", type=int, help="number of injection trials (overrides the campaign file)")

    p = _Parser(prog="vapbench", description="Fault-injection campaigns and protection comparisons.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)
    sub.add_parser("characterize", parents=[common], help="per-node latency and resilience, unprotected")
    pr = sub.add_parser("protect", parents=[common], help="compare protection schemes end to end")
    pr.add_argument("--scheme", default="all", help="scheme name, comma list, or 'all'")
    sw = sub.add_parser("sweep", parents=[common], help="one model or policy parameter over a list of values")
    sw.add_argument("--param", required=True, choices=SWEEP_PARAMS)
    sw.add_argument("--values", required=True, help="comma list of values")
    ca = sub.add_parser("calibrate", parents=[common], help="regenerate derived model constants")
    ca.add_argument("--explain", action="store_true", help="print the derivation of every constant")
    return p


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config)
    out = args.out if args.out is not None else cfg.out
    formats = parse_formats(args.format) if args.format else cfg.formats

    if args.command == "calibrate":
        text, ok = cmd_calibrate(load_models(cfg.model), args.explain)
        out.mkdir(parents=True, exist_ok=True)
        (out / "calibration.md").write_text(text)
        print(text, end="")
        if not ok:
            raise CalibrationFailure("calibration residual(s) exceed tolerance; see calibration.md")
        return EXIT_OK

    ctx = open_context(cfg, args.seed, args.trials)
    cache = GoldenCache()
    if args.command == "characterize":
        rep = cmd_characterize(ctx, cache)
    elif args.command == "protect":
        rep = cmd_protect(ctx, cache, parse_schemes(args.scheme))
    else:
        rep = cmd_sweep(ctx, cache, args.param, parse_values(args.values, args.param))
    for w in rep.warnings:
        print(f"warning: {w}", file=sys.stderr)
    for p in rep.write(out, formats):
        print(p)
    return EXIT_OK


def main(argv: list[str] | None = None) -> int:
    try:
        code = run(argv)
    except (ConfigError, ProtectionError, ModelError) as exc:
        print(f"vapbench: config error: {exc}", file=sys.stderr)
        code = EXIT_CONFIG
    except (CampaignError, TraceMismatch, MetricsError) as exc:
        print(f"vapbench: campaign failed: {exc}", file=sys.stderr)
        code = EXIT_CAMPAIGN
    except CalibrationFailure as exc:
        print(f"vapbench: {exc}", file=sys.stderr)
        code = EXIT_CALIBRATION
    return code


if __name__ == "__main__":
    sys.exit(main())
