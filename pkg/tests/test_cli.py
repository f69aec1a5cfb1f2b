import csv
import json

import pytest

from tlsclassify.cli import RunConfig, main
from tlsclassify.features import FEATURE_NAMES, read_csv, write_csv


@pytest.fixture(scope="module")
def small_run(tmp_path_factory):
    root = tmp_path_factory.mktemp("run")
    assert main(["synth", "--out", str(root / "cap"), "--seed", "1",
                 "--benign", "60", "--malicious", "60"]) == 0
    assert main(["extract", "--manifest", str(root / "cap" / "manifest.json"),
                 "--out", str(root)]) == 0
    return root


def _rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_three_aggregate_capture(tmp_path):
    assert main(["synth", "--out", str(tmp_path / "cap"), "--benign", "1", "--malicious", "2"]) == 0
    assert main(["extract", "--manifest", str(tmp_path / "cap" / "manifest.json"),
                 "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "features.csv")
    assert rows[0][:38] == list(FEATURE_NAMES) and len(rows) == 4
    summary = json.loads((tmp_path / "extract_summary.json").read_text())
    (cap,) = summary["captures"]
    assert cap["aggregates"] == 3 and cap["malicious"] == 2 and cap["conn_skipped"] == 0


def test_bad_path_is_reported_and_run_continues(tmp_path, small_run):
    doc = json.loads((small_run / "cap" / "manifest.json").read_text())
    good = doc["captures"][0]
    for k in ("conn", "ssl", "x509"):
        good[k] = str(small_run / "cap" / good[k])
    bad = dict(good, name="broken", ssl=str(tmp_path / "missing.log"))
    (tmp_path / "m.json").write_text(json.dumps({"captures": [bad, good]}))
    assert main(["extract", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "o")]) == 0
    summary = json.loads((tmp_path / "o" / "extract_summary.json").read_text())
    assert len(summary["captures"]) == 1
    assert [e["capture"] for e in summary["errors"]] == ["broken"]


def test_all_captures_failing_exits_nonzero(tmp_path):
    doc = {"captures": [{"name": "x", "conn": "a.log", "ssl": "b.log", "x509": "c.log"}]}
    (tmp_path / "m.json").write_text(json.dumps(doc))
    assert main(["extract", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "o")]) == 1
    assert not (tmp_path / "o" / "features.csv").exists()
    assert json.loads((tmp_path / "o" / "extract_summary.json").read_text())["errors"]


@pytest.mark.parametrize("model", ["svm", "forest", "boosting"])
def test_train_eval_artifacts(small_run, model):
    assert main(["train-eval", "--out", str(small_run), "--model", model,
                 "--folds", "5", "--estimators", "20"]) == 0
    report = json.loads((small_run / f"cv_report_{model}.json").read_text())
    assert report["n_folds"] == 5 and len(report["fold_accuracy"]) == 5
    assert 0.0 <= report["auc"] <= 1.0 and len(report["top_features"]) == 15
    roc = _rows(small_run / f"roc_{model}.csv")
    assert roc[0] == ["fpr", "tpr"] and roc[1] == ["0.0", "0.0"] and roc[-1] == ["1.0", "1.0"]
    model_doc = json.loads((small_run / f"model_{model}.json").read_text())
    assert model_doc["kind"] == model


def test_correlate_duplicated_periodicity(small_run, tmp_path):
    ds = read_csv(small_run / "features.csv")
    ds.X[:, 11] = ds.X[:, 10]
    write_csv(ds, tmp_path / "dup.csv")
    assert main(["correlate", "--features", str(tmp_path / "dup.csv"), "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "correlation.csv")
    assert rows[0][1:] == list(FEATURE_NAMES)
    assert float(rows[11][12]) == pytest.approx(1.0, abs=1e-12)
    assert float(rows[12][11]) == float(rows[11][12])


def test_rfe_command(small_run):
    assert main(["rfe", "--out", str(small_run), "--model", "svm", "--folds", "3",
                 "--step", "4"]) == 0
    doc = json.loads((small_run / "rfe_svm.json").read_text())
    assert sorted(doc["ranking"]) == sorted(FEATURE_NAMES)
    assert len(_rows(small_run / "rfe_accuracy_svm.csv")) == 39


def test_multiclass_command(small_run):
    assert main(["multiclass", "--out", str(small_run), "--model", "forest", "--folds", "3",
                 "--estimators", "10"]) == 0
    doc = json.loads((small_run / "multiclass_forest.json").read_text())
    assert len(doc["pairwise"]) == 6


def test_boost_demo_curves(tmp_path):
    assert main(["boost-demo", "--out", str(tmp_path)]) == 0
    rows = _rows(tmp_path / "boost_curves.csv")
    assert rows[0] == ["iteration", "L=250", "L=500", "L=1000"]
    assert len(rows) == 201
    doc = json.loads((tmp_path / "boost_demo.json").read_text())
    assert set(doc["curves"]) == {"250", "500", "1000"}


def test_config_file(tmp_path, small_run):
    cfg = {"model": "svm", "n_folds": 4, "train": {"svm_C": 0.5}, "out": str(tmp_path)}
    (tmp_path / "run.json").write_text(json.dumps(cfg))
    assert main(["train-eval", "--config", str(tmp_path / "run.json"),
                 "--features", str(small_run / "features.csv")]) == 0
    report = json.loads((tmp_path / "cv_report_svm.json").read_text())
    assert report["n_folds"] == 4 and report["config"]["svm_C"] == 0.5


def test_bad_config_key_exits_nonzero(tmp_path):
    (tmp_path / "run.json").write_text(json.dumps({"modle": "svm"}))
    assert main(["train-eval", "--config", str(tmp_path / "run.json")]) == 1


def test_missing_features_exits_nonzero(tmp_path):
    assert main(["train-eval", "--out", str(tmp_path)]) == 1


def test_run_config_rejects_bad_model():
    with pytest.raises(ValueError):
        RunConfig(model="knn")
