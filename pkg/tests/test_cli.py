import json

import numpy as np
import pytest

from mtsxplain import tsio
from mtsxplain.cli import main
from mtsxplain.tsdata import SaliencyMap


def run(*argv):
    return main([str(a) for a in argv])


def files(directory):
    return {p.relative_to(directory).as_posix(): p.read_bytes()
            for p in sorted(directory.rglob("*")) if p.is_file() and p.name != "timings.json"}


@pytest.fixture(scope="module")
def data(tmp_path_factory):
    d = tmp_path_factory.mktemp("data")
    assert run("gen", "--kind", "pseudo-periodic", "--seed", 1, "--n-train", 40, "--n-test", 20,
               "--out", d) == 0
    return d


def test_gen_deterministic(tmp_path):
    for name in ("a", "b"):
        assert run("gen", "--kind", "pseudo-periodic", "--seed", 1, "--n-train", 6, "--n-test", 4,
                   "--out", tmp_path / name) == 0
    a, b = files(tmp_path / "a"), files(tmp_path / "b")
    assert a.keys() == {"train.mtscsv", "test.mtscsv", "mask.salcsv", "manifest.json"}
    assert all(a[k] == b[k] for k in a if k != "manifest.json")


def test_manifest_echoes_config(tmp_path, data):
    m = json.loads((data / "manifest.json").read_text())
    assert m["command"] == "gen" and m["config"]["seed"] == 1 and m["config"]["channels"] == 20
    assert "timings.json" in {p.name for p in data.iterdir()}


def test_ridge_pipeline_perfect(tmp_path, data):
    assert run("train", "--model", "ridge", "--train", data / "train.mtscsv",
               "--test", data / "test.mtscsv", "--out", tmp_path / "m") == 0
    assert run("explain", "--method", "ridge", "--data", data / "test.mtscsv",
               "--model-dir", tmp_path / "m", "--out", tmp_path / "x") == 0
    assert run("eval-gt", "--saliency", tmp_path / "x", "--mask", data / "mask.salcsv",
               "--name", "ridge", "--out", tmp_path / "g") == 0
    row = (tmp_path / "g" / "metrics.csv").read_text().splitlines()[1]
    assert row == "ridge,1.0,1.0,1.0,1.0,1.0"
    assert run("rank-channels", "--saliency", tmp_path / "x", "--out", tmp_path / "r") == 0
    top = [int(l.split(",")[1]) for l in (tmp_path / "r" / "ranking.csv").read_text().splitlines()[1:11]]
    assert set(top) == set(range(10))
    assert run("report", "--run", tmp_path, "--out", tmp_path / "rep") == 0
    assert (tmp_path / "rep" / "ground_truth.csv").read_text().splitlines()[1] == "g,ridge,1.0,1.0,1.0,1.0,1.0"


def test_eval_gt_shape_mismatch(tmp_path, data, capsys):
    tsio.write_saliency_set([SaliencyMap(np.ones((20, 7)))], tmp_path / "x" / "saliency")
    code = run("eval-gt", "--saliency", tmp_path / "x", "--mask", data / "mask.salcsv",
               "--out", tmp_path / "g")
    assert code == 3
    err = json.loads(capsys.readouterr().err.strip().splitlines()[-1])
    assert "(20, 7)" in err["message"] and "(20, 10)" in err["message"]


def test_gen_small_box(tmp_path):
    assert run("gen", "--n-train", 4, "--n-test", 2, "--channels", 3, "--length", 20,
               "--box-channels", "1:3", "--box-time", "4:8", "--out", tmp_path / "s") == 0
    mask = tsio.read_saliency(tmp_path / "s" / "mask.salcsv").weights
    assert mask.shape == (3, 10) and mask.sum() == 4 and mask[1:, 2:4].all()
    # default box does not fit three channels
    assert run("gen", "--channels", 3, "--length", 20, "--out", tmp_path / "t") == 3
    assert run("gen", "--box-time", "4-8", "--out", tmp_path / "u") == 2


def test_usage_errors(tmp_path, capsys):
    assert run("train", "--model", "svm", "--train", "x", "--out", tmp_path) == 2
    assert run("frobnicate") == 2
    err = capsys.readouterr().err.strip().splitlines()[-1]
    assert json.loads(err)["error"] == "UsageError"


def test_missing_file_is_data_error(tmp_path):
    assert run("train", "--model", "ridge", "--train", tmp_path / "nope.mtscsv",
               "--out", tmp_path / "m") == 3


def test_config_precedence(tmp_path):
    cfg = tmp_path / "c.cfg"
    cfg.write_text("# small run\nn-train = 6\nn_test = 4\nseed = 9\n")
    assert run("gen", "--config", cfg, "--seed", 2, "--out", tmp_path / "o") == 0
    conf = json.loads((tmp_path / "o" / "manifest.json").read_text())["config"]
    assert (conf["n_train"], conf["n_test"], conf["seed"]) == (6, 4, 2)
    cfg.write_text("colour = red\n")
    assert run("gen", "--config", cfg, "--out", tmp_path / "p") == 2


def test_explain_jobs_invariant(tmp_path, data):
    assert run("train", "--model", "rocket-logistic", "--kernels", 100, "--concat",
               "--train", data / "train.mtscsv", "--out", tmp_path / "m") == 0
    for jobs in (1, 3):
        assert run("explain", "--method", "shap-concat", "--data", data / "test.mtscsv",
                   "--train", data / "train.mtscsv", "--model-dir", tmp_path / "m", "--samples", 160, "--segments", 2,
                   "--limit", 3, "--jobs", jobs, "--out", tmp_path / f"x{jobs}") == 0
    assert files(tmp_path / "x1" / "saliency") == files(tmp_path / "x3" / "saliency")
    assert len(files(tmp_path / "x1" / "saliency")) == 3


def test_method_model_mismatch(tmp_path, data):
    assert run("train", "--model", "ridge", "--train", data / "train.mtscsv", "--out", tmp_path / "m") == 0
    assert run("explain", "--method", "dcam", "--data", data / "test.mtscsv",
               "--model-dir", tmp_path / "m", "--out", tmp_path / "x") == 3
