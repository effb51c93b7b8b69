import pytest

from vapbench.pipeline.graph import FRONT_STAGES, End, GraphError, build_graph, load_pipeline, parse_pipeline
from vapbench.pipeline.kvconfig import ConfigError, KVFile
from vapbench.workloads.scenario import DATA_DIR


def node(nid, kernel, stage="Control", **kw):
    return {"id": nid, "kernel": kernel, "stage": stage, "latency_us": 100, "state_bytes": 8, **kw}


def two_node():
    return {
        "nodes": [node("pc", "PcGeneration", stage="Perception"), node("map", "Octomap", stage="Perception")],
        "edges": [("pc", "map", "cloud")],
        "sinks": ["map"],
    }


def test_av_graph_front_and_back_end():
    g = load_pipeline(DATA_DIR / "av.pipeline")
    assert len(g.nodes) == 9
    assert {n.id for n in g.by_end(End.FRONT)} == {"ray_filter", "vision_detect", "lidar_detect", "ndt_matching"}
    assert {n.id for n in g.by_end(End.BACK)} == {"planner", "decision", "pure_pursuit", "twist_filter", "twist_gate"}


@pytest.mark.parametrize("name", ["av", "drone"])
def test_stage_determines_end(name):
    g = load_pipeline(DATA_DIR / f"{name}.pipeline")
    for n in g.nodes:
        assert (n.end is End.FRONT) == (n.stage in FRONT_STAGES)
        assert n.nominal_latency > 0 and n.state_size > 0


@pytest.mark.parametrize("name", ["av", "drone"])
def test_topological_order(name):
    g = load_pipeline(DATA_DIR / f"{name}.pipeline")
    pos = {n: i for i, n in enumerate(g.node_ids)}
    for e in g.edges:
        assert pos[e.producer] < pos[e.consumer]


def test_two_node_graph():
    g = build_graph(two_node())
    assert len(g.edges) == 1
    assert g.node_ids == ("pc", "map")  # producer before consumer
    assert g.sources == ("pc",)


def test_cycle_rejected():
    cfg = two_node()
    cfg["edges"].append(("map", "pc", "grid_map"))
    with pytest.raises(GraphError, match="cycle detected among nodes: map, pc"):
        build_graph(cfg)


def test_duplicate_node_rejected():
    cfg = two_node()
    cfg["nodes"].append(node("map", "Octomap", stage="Perception"))
    with pytest.raises(GraphError, match="duplicate node id: map"):
        build_graph(cfg)


def test_unknown_kernel_rejected():
    cfg = two_node()
    cfg["nodes"][0]["kernel"] = "Teleporter"
    with pytest.raises(GraphError, match="Teleporter"):
        build_graph(cfg)


def test_unreachable_sink_rejected():
    cfg = two_node()
    cfg["nodes"].append(node("pc2", "PcGeneration", stage="Perception"))
    with pytest.raises(GraphError, match="unreachable sink map from source pc2"):
        build_graph(cfg)


def test_missing_input_rejected():
    cfg = two_node()
    cfg["edges"] = []
    with pytest.raises(GraphError, match="node map: no edge provides input topic"):
        build_graph(cfg)


def test_wrong_topic_rejected():
    cfg = two_node()
    cfg["edges"] = [("pc", "map", "grid_map")]
    with pytest.raises(GraphError, match="does not publish"):
        build_graph(cfg)


def test_sources_order_lexicographically():
    cfg = {
        "nodes": [node("zeta", "PcGeneration", stage="Perception"), node("alpha", "PcGeneration", stage="Perception")],
        "edges": [],
        "sinks": ["alpha"],
    }
    with pytest.raises(GraphError, match="unreachable sink alpha from source zeta"):
        build_graph(cfg)
    cfg["sinks"] = []
    with pytest.raises(GraphError, match="no sink"):
        build_graph(cfg)


def test_parse_errors_carry_location():
    text = "[node a]\nstage = Control\nkernel = CmdGate\nlatency_us = 5\n"
    with pytest.raises(ConfigError, match=r"\[node a\] missing key 'state_bytes'"):
        parse_pipeline(KVFile(text, "x.pipeline"))
    with pytest.raises(ConfigError, match="malformed line"):
        parse_pipeline(KVFile("[edges]\na b c\n", "x.pipeline"))
    with pytest.raises(ConfigError, match="unknown key"):
        parse_pipeline(KVFile("[node a]\ncolour = red\n", "x.pipeline"))


def test_stage_sums_match_calibration():
    av = load_pipeline(DATA_DIR / "av.pipeline")
    drone = load_pipeline(DATA_DIR / "drone.pipeline")

    def sums(g):
        out = {}
        for n in g.nodes:
            out[n.bucket] = out.get(n.bucket, 0) + n.base_latency
        return tuple(out.get(b, 0) / 1000 for b in ("perception", "localization", "planning", "control"))

    assert sums(av) == (58, 69, 35, 2)
    assert sums(drone) == (632, 55, 182, 2)


def test_av_order_breaks_ties_by_id():
    # Kahn's algorithm taking the smallest ready id each step
    g = load_pipeline(DATA_DIR / "av.pipeline")
    assert g.node_ids == ("ray_filter", "lidar_detect", "ndt_matching", "planner", "vision_detect",
                          "decision", "pure_pursuit", "twist_filter", "twist_gate")
