import json
import subprocess
import sys

import numpy as np
import pytest

from subscan.cli import EXIT_IO, EXIT_VALIDATION, main
from subscan.harness import score_dataset
from subscan.io import ActivationMatrix, load_matrix, load_model, save_matrix
from subscan.ltss import ScanConfig


@pytest.fixture
def synth_dir(tmp_path):
    out = tmp_path / "synth"
    assert main(["synth", str(out), "--nodes", "48", "--background", "60", "--clean", "20",
                 "--anomalous", "10", "--seed", "4"]) == 0
    return out


def test_synth_writes_four_files(synth_dir):
    assert sorted(p.name for p in synth_dir.iterdir()) == [
        "anomalous.bin", "background.bin", "clean.bin", "true_subset.txt"]
    assert load_matrix(synth_dir / "background.bin").values.shape == (60, 48)
    assert load_matrix(synth_dir / "anomalous.bin").values.shape == (10, 48)
    truth = (synth_dir / "true_subset.txt").read_text().split()
    assert len(truth) == 5


def test_synth_same_seed_byte_identical(tmp_path):
    for name in ("a", "b"):
        main(["synth", str(tmp_path / name), "--nodes", "20", "--background", "10", "--seed", "9"])
    for f in ("background.bin", "clean.bin", "anomalous.bin", "true_subset.txt"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()


def test_synth_csv(tmp_path):
    main(["synth", str(tmp_path / "c"), "--nodes", "6", "--background", "5", "--clean", "2",
          "--anomalous", "2", "--format", "csv"])
    assert load_matrix(tmp_path / "c" / "clean.csv", "csv").values.shape == (2, 6)


def test_background_summary_and_idempotent(synth_dir, tmp_path, capsys):
    model_a, model_b = tmp_path / "a.ssbm", tmp_path / "b.ssbm"
    assert main(["background", str(synth_dir / "background.bin"), "-o", str(model_a)]) == 0
    assert capsys.readouterr().out.strip() == "J=48 M=60"
    main(["background", str(synth_dir / "background.bin"), "-o", str(model_b)])
    assert model_a.read_bytes() == model_b.read_bytes()


def test_background_missing_file(tmp_path, capsys):
    assert main(["background", str(tmp_path / "nope.bin"), "-o", str(tmp_path / "m")]) == EXIT_IO
    assert "error" in capsys.readouterr().err


def test_background_invalid_csv(tmp_path, capsys):
    (tmp_path / "bad.csv").write_text("a,b\n1,nan\n")
    code = main(["background", str(tmp_path / "bad.csv"), "--format", "csv", "-o", str(tmp_path / "m")])
    assert code == EXIT_VALIDATION
    assert "row 0, column 1" in capsys.readouterr().err


def _model(synth_dir, tmp_path):
    path = tmp_path / "bg.ssbm"
    main(["background", str(synth_dir / "background.bin"), "-o", str(path)])
    return path


def test_score_matches_library(synth_dir, tmp_path, capsys):
    model_path = _model(synth_dir, tmp_path)
    capsys.readouterr()
    assert main(["score", str(model_path), str(synth_dir / "clean.bin"), "--alpha-max", "0.3"]) == 0
    doc = json.loads(capsys.readouterr().out)
    lib = score_dataset(load_model(model_path), load_matrix(synth_dir / "clean.bin"), ScanConfig(alpha_max=0.3))
    assert doc["config"] == {"alpha_max": 0.3, "scorer": "bj"}
    assert len(doc["results"]) == 20
    for rec, res in zip(doc["results"], lib):
        assert rec["score"] == res.score
        assert rec["k_star"] == res.k_star
        assert rec["alpha_star"] == res.alpha_star
        assert tuple(rec["subset"]) == res.subset


def test_score_to_file_no_subset_and_hc(synth_dir, tmp_path):
    model_path = _model(synth_dir, tmp_path)
    out = tmp_path / "scores.json"
    main(["score", str(model_path), str(synth_dir / "anomalous.bin"), "--no-subset", "--scorer", "hc", "-o", str(out)])
    doc = json.loads(out.read_text())
    assert doc["config"]["scorer"] == "hc"
    assert all("subset" not in r for r in doc["results"])
    assert [r["sample_id"] for r in doc["results"]] == [str(i) for i in range(10)]


def test_score_empty_eval(synth_dir, tmp_path, capsys):
    model_path = _model(synth_dir, tmp_path)
    (tmp_path / "empty.bin").write_bytes(b"")
    (tmp_path / "header.csv").write_text(",".join(f"j{i}" for i in range(48)) + "\n")
    capsys.readouterr()
    assert main(["score", str(model_path), str(tmp_path / "empty.bin")]) == 0
    assert json.loads(capsys.readouterr().out)["results"] == []
    assert main(["score", str(model_path), str(tmp_path / "header.csv"), "--format", "csv"]) == 0
    assert json.loads(capsys.readouterr().out)["results"] == []


def test_score_width_mismatch(synth_dir, tmp_path):
    model_path = _model(synth_dir, tmp_path)
    save_matrix(ActivationMatrix(np.zeros((2, 47))), tmp_path / "narrow.bin")
    assert main(["score", str(model_path), str(tmp_path / "narrow.bin")]) == EXIT_VALIDATION


def _manifest(synth_dir, layers=1):
    entry = {"background": "background.bin", "clean": "clean.bin", "anomalous": "anomalous.bin",
             "true_subset": "true_subset.txt"}
    doc = {"layers": [{"name": f"L{i}", **entry} for i in range(layers)]}
    path = synth_dir / "manifest.json"
    path.write_text(json.dumps(doc))
    return path


def test_evaluate_report(synth_dir, tmp_path, capsys):
    manifest = _manifest(synth_dir, layers=2)
    capsys.readouterr()
    assert main(["evaluate", str(manifest), "--scorer", "hc", "--seed", "4"]) == 0
    doc = json.loads(capsys.readouterr().out)
    assert doc["config"]["scorer"] == "hc"
    assert [row["layer"] for row in doc["layers"]] == ["L0", "L1"]
    assert all("auc" in row for row in doc["layers"])
    assert doc["seed"] == 4


def test_evaluate_layer_tagged_error(synth_dir, capsys):
    save_matrix(ActivationMatrix(np.zeros((3, 47))), synth_dir / "clean.bin")
    manifest = _manifest(synth_dir)
    raw = json.loads(manifest.read_text())
    raw["truncate"] = None
    manifest.write_text(json.dumps(raw))
    assert main(["evaluate", str(manifest)]) == EXIT_VALIDATION
    assert "layer 'L0'" in capsys.readouterr().err


def test_module_entry_point_help():
    out = subprocess.run([sys.executable, "-m", "subscan", "score", "--help"],
                         capture_output=True, text=True, check=True).stdout
    for flag in ("--alpha-max", "--scorer", "--format", "--output", "--no-subset"):
        assert flag in out
