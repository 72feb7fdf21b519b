import csv
import json
import subprocess
import sys

import numpy as np
import pytest

from dropmat.cli import main
from dropmat.datasets import load_features, load_manifest, write_trace_csv
from dropmat.signal import AccelTrace


@pytest.fixture(scope="session")
def pipeline(tmp_path_factory):
    root = tmp_path_factory.mktemp("cli")
    assert main(["simulate", "--reps", "1", "--out", str(root / "sim"), "--seed", "3"]) == 0
    assert main(["features", "--manifest", str(root / "sim/manifest.json"), "--out", str(root / "f.csv")]) == 0
    assert main([
        "train", "--features", str(root / "f.csv"), "--out", str(root / "model.json"),
        "--curves", str(root / "curves.csv"), "--epochs", "30", "--seed", "3",
    ]) == 0
    return root


def flat_trace(path, n=400):
    write_trace_csv(AccelTrace(100.0, np.tile([0.0, 0.0, 9.80665], (n, 1))), path)


def test_simulate_outputs(pipeline, capsys):
    manifest = load_manifest(pipeline / "sim/manifest.json")
    assert len(manifest) == 100
    assert len(list((pipeline / "sim/traces").glob("*.csv"))) == 100
    rec = manifest.records[0]
    assert set(rec.ground_truth) >= {"weightless_start", "impact_index", "rest_index"}


def test_simulate_summary(tmp_path, capsys):
    assert main(["simulate", "--reps", "1", "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "100 traces written" in out
    assert "marble: 20" in out


def test_features_table(pipeline):
    table = load_features(pipeline / "f.csv")
    assert len(table) == 100
    rejects = (pipeline / "f.rejects.csv").read_text().splitlines()
    assert rejects[0] == "trace_id,stage,message"


def test_train_outputs(pipeline):
    doc = json.loads((pipeline / "model.json").read_text())
    assert doc["metadata"]["split_seed"] == 3
    assert doc["layer_dims"] == [25, 64, 32, 5]
    rows = list(csv.reader((pipeline / "curves.csv").open()))
    assert rows[0] == ["epoch", "val_loss", "val_accuracy"]
    assert len(rows) == 31
    assert (pipeline / "curves.png").stat().st_size > 0


def test_eval_prints_table(pipeline, tmp_path, capsys):
    out = tmp_path / "cm.csv"
    assert main(["eval", "--model", str(pipeline / "model.json"),
                 "--features", str(pipeline / "f.csv"), "--out", str(out)]) == 0
    text = capsys.readouterr().out
    assert "accuracy/%" in text and "identification time" in text
    rows = list(csv.reader(out.open()))
    assert rows[-1][0] == "total"
    # 20 per class leaves 4 per class in the test split
    assert int(rows[-1][2]) == 20
    assert out.with_suffix(".png").exists()


def test_predict(pipeline, capsys):
    trace = sorted((pipeline / "sim/traces").glob("*marble*"))[0]
    assert main(["predict", "--model", str(pipeline / "model.json"), "--in", str(trace), "--json"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert 0 <= doc["label"] < 5
    assert sum(doc["probabilities"]) == pytest.approx(1.0)
    assert main(["predict", "--model", str(pipeline / "model.json"), "--in", str(trace)]) == 0
    assert "probabilities:" in capsys.readouterr().out


def test_segment(pipeline, tmp_path, capsys):
    trace = sorted((pipeline / "sim/traces").glob("*granite*"))[0]
    prefix = tmp_path / "seg" / "one"
    assert main(["segment", "--in", str(trace), "--out", str(prefix), "--plot"]) == 0
    bounds = json.loads(prefix.with_suffix(".json").read_text())
    rows = prefix.with_suffix(".csv").read_text().splitlines()
    assert rows[0] == "index,magnitude"
    assert len(rows) - 1 == bounds["t_w"] - bounds["t_c"] + 1
    assert int(rows[1].split(",")[0]) == bounds["t_c"]
    assert prefix.with_suffix(".png").exists()
    assert "t_c =" in capsys.readouterr().out


def test_segment_failure_names_stage(tmp_path, capsys):
    flat_trace(tmp_path / "flat.csv")
    assert main(["segment", "--in", str(tmp_path / "flat.csv"), "--out", str(tmp_path / "x")]) == 1
    assert "no_weightless_region" in capsys.readouterr().err


def test_features_reject_limit(pipeline, tmp_path, capsys):
    src = load_manifest(pipeline / "sim/manifest.json")
    flat_trace(tmp_path / "flat.csv")
    records = [
        {"trace_id": r.trace_id, "file": str(src.path_of(r)), "label": r.label} for r in src.records[:2]
    ] + [{"trace_id": "flat", "file": str(tmp_path / "flat.csv"), "label": 0}]
    (tmp_path / "m.json").write_text(json.dumps({"format_version": 1, "records": records}))
    code = main(["features", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "f.csv")])
    assert code == 1
    rejects = (tmp_path / "f.rejects.csv").read_text().splitlines()
    assert rejects[1].startswith("flat,no_weightless_region,")
    assert len(load_features(tmp_path / "f.csv")) == 2


def test_empty_manifest_is_usage_error(tmp_path):
    (tmp_path / "m.json").write_text(json.dumps({"format_version": 1, "records": []}))
    with pytest.raises(SystemExit) as exc:
        main(["features", "--manifest", str(tmp_path / "m.json"), "--out", str(tmp_path / "f.csv")])
    assert exc.value.code == 2


@pytest.mark.parametrize(
    "argv",
    [
        [],
        ["simulate", "--out", "x"],
        ["simulate", "--reps", "0", "--out", "x"],
        ["segment", "--in", "a.csv", "--out", "x", "--fc", "-1"],
        ["train", "--features", "f.csv", "--out", "m.json", "--curves", "c.csv", "--epochs", "0"],
        ["train", "--features", "f.csv", "--out", "m.json", "--curves", "c.csv", "--hidden", "a,b"],
        ["bogus"],
    ],
)
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as exc:
        main(argv)
    assert exc.value.code == 2


def test_counts_must_match_table(pipeline, tmp_path, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["train", "--features", str(pipeline / "f.csv"), "--out", str(tmp_path / "m.json"),
              "--curves", str(tmp_path / "c.csv"), "--counts", "3000,200,800"])
    assert exc.value.code == 2
    assert "sum to 4000" in capsys.readouterr().err


def test_missing_model_exits_1(pipeline, tmp_path, capsys):
    code = main(["eval", "--model", str(tmp_path / "none.json"), "--features", str(pipeline / "f.csv")])
    assert code == 1
    assert "not found" in capsys.readouterr().err


def test_unwritable_output_exits_1(tmp_path, capsys):
    blocker = tmp_path / "file"
    blocker.write_text("")
    assert main(["simulate", "--reps", "1", "--out", str(blocker / "sub")]) == 1
    assert capsys.readouterr().err.startswith("error:")


def test_config_file(pipeline, tmp_path, capsys):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({
        "features": str(pipeline / "f.csv"), "out": str(tmp_path / "m.json"),
        "curves": str(tmp_path / "c.csv"), "epochs": 2, "hidden": "8", "no_figures": True,
    }))
    assert main(["train", "--config", str(cfg)]) == 0
    doc = json.loads((tmp_path / "m.json").read_text())
    assert doc["layer_dims"] == [25, 8, 5]
    assert not (tmp_path / "c.png").exists()
    # command-line flags win over the file
    assert main(["train", "--config", str(cfg), "--epochs", "3", "--out", str(tmp_path / "m2.json")]) == 0
    assert json.loads((tmp_path / "m2.json").read_text())["metadata"]["train"]["epochs"] == 3


def test_config_unknown_key(tmp_path):
    cfg = tmp_path / "cfg.json"
    cfg.write_text(json.dumps({"reps": 1, "out": "x", "colour": "red"}))
    with pytest.raises(SystemExit) as exc:
        main(["simulate", "--config", str(cfg)])
    assert exc.value.code == 2


def test_console_entry_point():
    proc = subprocess.run([sys.executable, "-m", "dropmat", "--help"], capture_output=True, text=True)
    assert proc.returncode == 0
    assert "simulate" in proc.stdout


@pytest.mark.slow
def test_full_grid(tmp_path, capsys):
    assert main(["simulate", "--reps", "40", "--out", str(tmp_path)]) == 0
    assert "4000 traces written" in capsys.readouterr().out
