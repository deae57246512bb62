import json
import subprocess
import sys
import time

import numpy as np
import pytest

from hiddencascade.cli import main
from hiddencascade.ingest import fixture_path
from hiddencascade.model import LatentState, load_network, validate_network


def run(*argv):
    return main([str(a) for a in argv])


def files(d):
    return {p.name: p.read_bytes() for p in sorted(d.iterdir()) if p.name != "timing.json"}


@pytest.fixture(scope="module")
def bundle_a(tmp_path_factory):
    out = tmp_path_factory.mktemp("synthA")
    assert run("synth", "--scenario", "A", "--seed", 3, "--out", out) == 0
    return out


def test_synth_bundle(bundle_a):
    names = {p.name for p in bundle_a.iterdir()}
    assert {"network.json", "truth.json", "observations.csv", "manifest.json", "timing.json",
            "obs_model.json"} <= names
    net = load_network(bundle_a / "network.json")
    assert validate_network(net) == []
    truth = json.loads((bundle_a / "truth.json").read_text())
    assert len(truth["tree"]) == net.n_nodes - 1
    state = LatentState.from_dict(truth, net.n_nodes)
    from hiddencascade.model import state_violations
    assert state_violations(state, net, 200) == []
    manifest = json.loads((bundle_a / "manifest.json").read_text())
    assert manifest["command"] == "synth" and manifest["seed"] == 3
    assert set(manifest["outputs"]) == names - {"manifest.json", "timing.json"}


def test_synth_is_byte_identical(tmp_path):
    for d in ("a", "b"):
        assert run("synth", "--seed", 9, "--out", tmp_path / d) == 0
    assert files(tmp_path / "a") == files(tmp_path / "b")


def test_synth_from_toml_config(tmp_path):
    cfg = tmp_path / "c.toml"
    cfg.write_text("n_nodes = 6\nhorizon = 50\nmu2 = 11.0\n")
    assert run("synth", "--config", cfg, "--seed", 1, "--out", tmp_path / "o") == 0
    assert load_network(tmp_path / "o" / "network.json").n_nodes == 6


def test_synth_is_fast(tmp_path):
    run("synth", "--seed", 0, "--out", tmp_path / "warm")
    start = time.perf_counter()
    assert run("synth", "--seed", 1, "--out", tmp_path / "o") == 0
    assert time.perf_counter() - start < 1.0


def test_infer_and_eval_on_scenario_a(bundle_a, tmp_path):
    inf = tmp_path / "inf"
    assert run("infer", "--network", bundle_a / "network.json", "--observations",
               bundle_a / "observations.csv", "--obs-model", bundle_a / "obs_model.json",
               "--seed", 1, "--total-iters", 20_000, "--burn-in", 1_000, "--out", inf) == 0
    summary = json.loads((inf / "summary.json").read_text())
    weights = [c["weight"] for c in summary["configurations"]]
    assert len(weights) <= 4 and sum(weights) <= 1 + 1e-12
    assert weights == sorted(weights, reverse=True)
    assert "map_sample" in summary and 0 <= summary["acceptance_rate"] <= 1
    assert not (inf / "chain.jsonl").exists()
    ev = tmp_path / "ev"
    assert run("eval", "--truth", bundle_a / "truth.json", "--summary", inf / "summary.json",
               "--out", ev) == 0
    assert json.loads((ev / "metrics.json").read_text())["D_t"] == 0


def test_eval_of_truth_against_itself(bundle_a, tmp_path):
    truth = json.loads((bundle_a / "truth.json").read_text())
    fake = tmp_path / "summary.json"
    fake.write_text(json.dumps({"z_hat": truth["z"], "t_hat": truth["t"], "alpha_hat": truth["alpha"]}))
    assert run("eval", "--truth", bundle_a / "truth.json", "--summary", fake, "--out", tmp_path / "e") == 0
    assert json.loads((tmp_path / "e" / "metrics.json").read_text()) == {"D_t": 0.0, "D_z": 0, "D_alpha": 0.0}


def test_eval_misaligned_inputs(bundle_a, tmp_path):
    fake = tmp_path / "summary.json"
    fake.write_text(json.dumps({"z_hat": [None, 1], "t_hat": [1, 2], "alpha_hat": []}))
    assert run("eval", "--truth", bundle_a / "truth.json", "--summary", fake, "--out", tmp_path / "e") == 1


def test_two_node_infer(tmp_path):
    net = {"n_nodes": 2, "sources": [1], "source_times": [1],
           "nodes": [{"id": 1, "parents": [], "a": [], "b": []},
                     {"id": 2, "parents": [1], "a": [2.0], "b": [1.0]}]}
    (tmp_path / "network.json").write_text(json.dumps(net))
    (tmp_path / "obs.csv").write_text("node,step,value\n" + "".join(
        f"{i},{n},{v}\n" for i, row in ((1, [1, 5, 5]), (2, [0, 0, 5])) for n, v in enumerate(row, 1)))
    (tmp_path / "cfg.toml").write_text("top_k = 2\n[gibbs]\ntotal_iters = 500\nburn_in = 100\n"
                                       "[model]\nkind = \"gaussian\"\nmu1 = 0.0\nmu2 = 5.0\nsigma1 = 1.0\nsigma2 = 1.0\n")
    out = tmp_path / "o"
    assert run("infer", "--network", tmp_path / "network.json", "--observations", tmp_path / "obs.csv",
               "--config", tmp_path / "cfg.toml", "--write-chain", "--out", out) == 0
    s = json.loads((out / "summary.json").read_text())
    assert s["z_hat"] == [None, 1] and s["t_hat"] == [1, 3]
    assert len((out / "chain.jsonl").read_text().splitlines()) == 400


def test_scenario_report_schema(tmp_path):
    out = tmp_path / "scen"
    assert run("eval", "--scenarios", "A,B,C,D", "--replications", 2, "--total-iters", 300,
               "--burn-in", 100, "--n-nodes", 6, "--out", out) == 0
    lines = (out / "report.csv").read_text().splitlines()
    assert lines[0] == "scenario,metric,estimator,mean,ci_low,ci_high"
    keys = [tuple(l.split(",")[:3]) for l in lines[1:]]
    expected = [(s, m, e) for s in "ABCD" for m, e in
                [("D_t", "joint"), ("D_t", "baseline"), ("D_z", "joint"), ("D_z", "known_t"),
                 ("D_alpha", "joint"), ("D_alpha", "known_t")]]
    assert keys == expected
    for l in lines[1:]:
        m, lo, hi = map(float, l.split(",")[3:])
        assert lo <= m <= hi
    assert run("report", "--report", out / "report.json", "--out", out) == 0
    assert "not a measured value" in (out / "report.txt").read_text()


def test_ingest_fixture(tmp_path):
    out = tmp_path / "ing"
    assert run("ingest", "--events", fixture_path(), "--start", "2004-01-01", "--end", "2007-12-31",
               "--seed", 0, "--out", out) == 0
    regions = json.loads((out / "regions.json").read_text())
    assert regions["k"] == 8 and len(regions["regions"]) == 8
    net = load_network(out / "network.json")
    assert len(net.sources) >= 1
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["inputs"]["events"]["sha256"]
    assert run("rerun", out / "manifest.json", "--out", tmp_path / "again") == 0
    assert files(out) == files(tmp_path / "again")


def test_ingest_empty_date_range_is_an_error(tmp_path):
    assert run("ingest", "--events", fixture_path(), "--start", "1990-01-01", "--end", "1990-02-01",
               "--out", tmp_path / "o") == 1


def test_malformed_network_names_the_field(tmp_path, capsys):
    (tmp_path / "n.json").write_text('{"n_nodes": 2, "sources": [1]}')
    (tmp_path / "o.csv").write_text("node,step,value\n1,1,0\n2,1,0\n")
    assert run("infer", "--network", tmp_path / "n.json", "--observations", tmp_path / "o.csv",
               "--out", tmp_path / "o") == 1
    assert "missing field 'nodes'" in capsys.readouterr().err


@pytest.mark.parametrize("argv", [
    ["infer", "--network", "missing.json", "--observations", "missing.csv"],
    ["synth", "--scenario", "Z"],
    ["eval"],
    ["ingest", "--events", "nope.csv"],
])
def test_validation_errors_exit_1(tmp_path, argv):
    assert run(*argv, "--out", tmp_path / "o") == 1


def test_bad_date_exits_1(tmp_path):
    assert run("ingest", "--events", fixture_path(), "--start", "2004-02-30", "--out", tmp_path / "o") == 1


def test_runtime_error_exits_2(tmp_path):
    blocker = tmp_path / "file"
    blocker.write_text("x")
    assert run("synth", "--out", blocker / "sub") == 2


def test_synth_infer_eval_rerun_is_reproducible(bundle_a, tmp_path):
    inf = tmp_path / "inf"
    assert run("infer", "--network", bundle_a / "network.json", "--observations",
               bundle_a / "observations.csv", "--obs-model", bundle_a / "obs_model.json",
               "--seed", 4, "--total-iters", 2_000, "--burn-in", 500, "--chains", 2, "--out", inf) == 0
    assert run("rerun", inf / "manifest.json", "--out", tmp_path / "inf2") == 0
    assert files(inf) == files(tmp_path / "inf2")


def test_console_script_entry_point(tmp_path):
    res = subprocess.run([sys.executable, "-m", "hiddencascade.cli", "--version"],
                         capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.strip()
