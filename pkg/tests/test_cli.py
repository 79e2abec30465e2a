import json
import logging

import pandas as pd
import pytest

from src.application import ThergmApp, build_parser
from src.controllers.pipeline_controller import PipelineController
from src.models.errors import DataError
from src.utils.config_loader import DEFAULT_CONFIG, ConfigLoader

SMALL = ["--seed", "5", "--workers", "1",
         "--set", "Clusters=2", "--set", "NodesPerCluster=10", "--set", "TimeSteps=2",
         "--set", "PWithinInit=0.3", "--set", "McmcSamples=50", "--set", "McmcMaxIter=3"]


def run(*argv):
    return ThergmApp().run([*SMALL, *map(str, argv)])


@pytest.fixture(scope="module")
def simulated(tmp_path_factory):
    out = tmp_path_factory.mktemp("sim")
    assert ThergmApp().run([*SMALL, "simulate", "--out", str(out)]) == 0
    return out


@pytest.fixture(scope="module")
def fitted(simulated, tmp_path_factory):
    out = tmp_path_factory.mktemp("fit")
    code = ThergmApp().run([*SMALL, "fit-tergm", "--net", str(simulated / "edges.csv"),
                            "--members", str(simulated / "truth.csv"), "--terms", "edges,stability",
                            "--method", "mple", "--out", str(out)])
    assert code == 0
    return out


def test_simulate_writes_data_and_manifest(simulated):
    edges = pd.read_csv(simulated / "edges.csv")
    truth = pd.read_csv(simulated / "truth.csv")
    assert list(edges.columns) == ["time", "source", "target"]
    assert len(truth) == 20 * 3
    manifest = json.loads((simulated / "manifest.json").read_text())
    assert manifest["command"] == "simulate"
    assert manifest["seed"] == 5
    assert manifest["config"]["NodesPerCluster"] == 10
    assert len(manifest["extra"]["trace"]) == 2


def test_fit_writes_bundle(fitted):
    bundle = json.loads((fitted / "fit.json").read_text())
    assert bundle["model"] == "thergm"
    assert bundle["spec"] == ["edges", "stability"]
    assert len(bundle["thetas"]) == 2
    assert (fitted / "estimates.csv").exists()


def test_evaluate_truth_against_itself(simulated, fitted, tmp_path):
    code = run("evaluate", "--net", simulated / "edges.csv", "--truth", simulated / "truth.csv",
               "--est", simulated / "truth.csv", "--bundle", fitted / "fit.json", "--n-sims", 5,
               "--out", tmp_path)
    assert code == 0
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["misclustering"]["average"] == 0.0
    assert 0.0 <= report["auc"] <= 1.0
    assert set(report["gof"]) == {"degree", "geodesic"}
    for name in ("misclustering.csv", "transition.csv", "river.csv", "gof.csv"):
        assert (tmp_path / name).exists()


def test_predict_lists_every_pair(simulated, fitted, tmp_path):
    assert run("predict", "--net", simulated / "edges.csv", "--bundle", fitted / "fit.json",
               "--out", tmp_path) == 0
    predictions = pd.read_csv(tmp_path / "predictions.csv")
    assert len(predictions) == 20 * 19 // 2
    assert predictions["probability"].between(0, 1).all()


def test_spectral_clustering_command(simulated, tmp_path):
    assert run("cluster", "--net", simulated / "edges.csv", "--model", "dsbm", "--k", 2, "--out", tmp_path) == 0
    members = pd.read_csv(tmp_path / "members.csv")
    assert set(members["cluster"]) <= {1, 2}
    diagnostics = json.loads((tmp_path / "diagnostics.json").read_text())
    assert diagnostics["model"] == "dsbm"


def test_replay_reproduces_simulation(simulated, tmp_path):
    assert ThergmApp().run(["replay", "--manifest", str(simulated / "manifest.json"), "--out", str(tmp_path)]) == 0
    assert (tmp_path / "edges.csv").read_bytes() == (simulated / "edges.csv").read_bytes()
    assert (tmp_path / "truth.csv").read_bytes() == (simulated / "truth.csv").read_bytes()


def test_exit_codes(tmp_path):
    bad_config = tmp_path / "bad.yaml"
    bad_config.write_text("Clusters: three\n", encoding="utf-8")
    assert ThergmApp().run(["--config", str(bad_config), "simulate", "--out", str(tmp_path)]) == 2
    assert run("fit-tergm", "--net", tmp_path / "none.csv", "--members", tmp_path / "none.csv",
               "--out", tmp_path) == 3
    with pytest.raises(SystemExit) as info:
        ThergmApp().run(["simulate"])
    assert info.value.code == 2


@pytest.mark.slow
def test_scenario_batch(tmp_path):
    code = ThergmApp().run([*SMALL, "--set", "BurnIn=20", "--set", "Samples=10",
                            "scenario", "--preset", "slow-easy", "--replicates", "1", "--fit-method", "mple",
                            "--gof-sims", "3", "--out", str(tmp_path)])
    assert code == 0
    for name in ("misclustering.csv", "estimates.csv", "auc.csv", "gof.csv", "summary.json"):
        assert (tmp_path / name).exists()
    auc = pd.read_csv(tmp_path / "auc.csv")
    assert sorted(auc["corruption"]) == [0.0, 0.1, 0.2, 0.3]


def test_fit_parser_accepts_spec_and_terms():
    parser = build_parser()
    args = parser.parse_args(["fit-tergm", "--net", "a", "--members", "b", "--out", "c",
                              "--spec", "edges,triangles,stability"])
    assert args.terms == "edges,triangles,stability"
    assert parser.parse_args(["fit-tergm", "--net", "a", "--members", "b", "--out", "c",
                              "--terms", "edges"]).terms == "edges"
    assert parser.parse_args(["simulate", "--out", "c", "--spec", "edges,stability"]).terms == "edges,stability"


def test_evaluate_rejects_cluster_count_mismatch(simulated, tmp_path):
    est = pd.read_csv(simulated / "truth.csv")
    est.loc[0, "cluster"] = 3
    est.to_csv(tmp_path / "est.csv", index=False)
    code = run("evaluate", "--net", simulated / "edges.csv", "--truth", simulated / "truth.csv",
               "--est", tmp_path / "est.csv", "--out", tmp_path / "out")
    assert code == 3
    assert not (tmp_path / "out" / "report.json").exists()


def test_every_command_saves_resolved_config(simulated, fitted):
    for out in (simulated, fitted):
        saved = ConfigLoader().load(out / "config.yaml")
        assert saved["NodesPerCluster"] == 10 and saved["McmcSamples"] == 50
        manifest = json.loads((out / "manifest.json").read_text())
        assert manifest["artifacts"]["config"] == str(out / "config.yaml")


def test_fit_validates_inputs_before_fitting(tmp_path, caplog):
    edges = tmp_path / "edges.csv"
    edges.write_text("time,source,target\n0,0,1\n0,1,2\n0,2,3\n", encoding="utf-8")
    members = tmp_path / "members.csv"
    members.write_text("time,node,cluster\n0,0,1\n0,1,1\n0,2,1\n0,3,1\n", encoding="utf-8")
    controller = PipelineController(DEFAULT_CONFIG, workers=1)
    with caplog.at_level(logging.WARNING), pytest.raises(DataError):
        controller.cmd_fit(edges, members, tmp_path / "out", method="mple")
    assert "single slice" in caplog.text
    members.write_text("time,node,cluster\n0,0,1\n0,9,1\n", encoding="utf-8")
    with pytest.raises(DataError, match="members.csv"):
        controller.cmd_fit(edges, members, tmp_path / "out", method="mple")
