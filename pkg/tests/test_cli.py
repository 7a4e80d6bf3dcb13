import csv
import json

import numpy as np
import pytest

from crdkit import QueryBatch, build_scorer, crd_score
from crdkit import io as cio
from crdkit.cli import main


def run_cli(*args):
    return main([str(a) for a in args])


@pytest.fixture
def dataset(tmp_path):
    out = tmp_path / "data"
    code = run_cli(
        "synth", "--out", out, "--d", "8", "--train-images", "4",
        "--test-normal", "4", "--test-anom", "4", "--grid-h", "2",
        "--grid-w", "2", "--shift", "1.0", "--seed", "0",
    )
    assert code == 0
    return out


def read_scores_csv(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return list(csv.DictReader(fh))


# ------------------------------------------------------------------------ synth

def test_synth_writes_consistent_dataset(dataset):
    bank = cio.read_feature_tensor(dataset / "bank.ftb")
    assert (bank.d, bank.n) == (8, 16)
    train = cio.read_manifest(dataset / "manifest_train.csv")
    test = cio.read_manifest(dataset / "manifest_test.csv")
    assert len(train) == 4 and all(e.label == 0 for e in train)
    assert sum(e.label for e in test) == 4 and len(test) == 8
    for entry in train + test:
        rows = cio.load_entry_rows(dataset / "manifest_test.csv", entry)
        assert rows.shape == (4, 8)
    masked = [e for e in test if e.mask_path]
    assert len(masked) == 4
    for entry in masked:
        mask = cio.load_entry_mask(dataset / "manifest_test.csv", entry)
        assert mask.sum() == 1  # one planted anomalous patch per image


def test_synth_is_deterministic(tmp_path):
    args = ["--d", "8", "--train-images", "2", "--test-normal", "2",
            "--test-anom", "2", "--grid-h", "2", "--grid-w", "2", "--seed", "7"]
    assert run_cli("synth", "--out", tmp_path / "a", *args) == 0
    assert run_cli("synth", "--out", tmp_path / "b", *args) == 0
    a = (tmp_path / "a" / "bank.ftb").read_bytes()
    b = (tmp_path / "b" / "bank.ftb").read_bytes()
    assert a == b


# -------------------------------------------------------------------- fit/score

def test_fit_then_score_train_set_flags_nothing(dataset, tmp_path, capsys):
    model = tmp_path / "model.crd1"
    assert run_cli("fit", "--bank", dataset / "bank.ftb", "--model", model) == 0
    out_csv = tmp_path / "train_scores.csv"
    code = run_cli("score", "--model", model, "--manifest",
                   dataset / "manifest_train.csv", "--out", out_csv)
    assert code == 0
    rows = read_scores_csv(out_csv)
    assert [r["image_id"] for r in rows] == [f"train_{i:04d}" for i in range(4)]
    scores = [float(r["image_score"]) for r in rows]
    threshold = max(scores)  # calibrated from the same label-0 rows
    assert all(s <= threshold for s in scores)
    assert all(r["prediction"] == "0" for r in rows)


def test_fit_is_deterministic(dataset, tmp_path):
    m1, m2 = tmp_path / "a.crd1", tmp_path / "b.crd1"
    assert run_cli("fit", "--bank", dataset / "bank.ftb", "--model", m1) == 0
    assert run_cli("fit", "--bank", dataset / "bank.ftb", "--model", m2) == 0
    assert m1.read_bytes() == m2.read_bytes()


def test_score_round_trips_in_process_scores_bit_exactly(dataset, tmp_path):
    model = tmp_path / "model.crd1"
    assert run_cli("fit", "--bank", dataset / "bank.ftb", "--model", model,
                   "--lambda", "5.0") == 0
    out_csv = tmp_path / "scores.csv"
    assert run_cli("score", "--model", model, "--manifest",
                   dataset / "manifest_test.csv", "--out", out_csv,
                   "--threshold", "0") == 0
    rows = read_scores_csv(out_csv)

    bank = cio.read_feature_tensor(dataset / "bank.ftb")
    scorer = build_scorer(bank, 5.0)
    manifest = cio.read_manifest(dataset / "manifest_test.csv")
    for entry, row in zip(manifest, rows):
        patches = cio.load_entry_rows(dataset / "manifest_test.csv", entry)
        expected = crd_score(scorer, QueryBatch.from_rows(patches)).max()
        assert float(row["image_score"]) == expected  # bit-exact via repr


def test_score_with_explicit_threshold_flags_anomalies(dataset, tmp_path):
    model = tmp_path / "model.crd1"
    run_cli("fit", "--bank", dataset / "bank.ftb", "--model", model)
    out_csv = tmp_path / "scores.csv"
    assert run_cli("score", "--model", model, "--manifest",
                   dataset / "manifest_test.csv", "--out", out_csv,
                   "--threshold", "-1") == 0
    rows = read_scores_csv(out_csv)
    assert all(r["prediction"] == "1" for r in rows)  # every score exceeds -1


def test_score_writes_heatmaps(dataset, tmp_path):
    model = tmp_path / "model.crd1"
    run_cli("fit", "--bank", dataset / "bank.ftb", "--model", model)
    heat_dir = tmp_path / "heat"
    assert run_cli("score", "--model", model, "--manifest",
                   dataset / "manifest_test.csv", "--out", tmp_path / "s.csv",
                   "--heatmaps", heat_dir, "--heatmap-scale", "4") == 0
    pgms = sorted(heat_dir.glob("*.pgm"))
    assert len(pgms) == 8
    assert pgms[0].read_bytes().startswith(b"P5\n8 8\n65535\n")


def test_dimension_mismatch_exits_nonzero(dataset, tmp_path, capsys):
    wide = tmp_path / "wide"
    run_cli("synth", "--out", wide, "--d", "16", "--train-images", "2",
            "--test-normal", "2", "--test-anom", "2", "--grid-h", "2",
            "--grid-w", "2")
    model = tmp_path / "model16.crd1"
    run_cli("fit", "--bank", wide / "bank.ftb", "--model", model)
    capsys.readouterr()
    code = run_cli("score", "--model", model, "--manifest",
                   dataset / "manifest_test.csv", "--out", tmp_path / "x.csv")
    assert code == 1
    assert "dimension" in capsys.readouterr().err


# ------------------------------------------------------------------------- eval

def test_eval_reports_auroc_and_baselines(dataset, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    code = run_cli(
        "eval", "--manifest", dataset / "manifest_test.csv",
        "--bank", dataset / "bank.ftb", "--baselines", "--k", "3",
        "--coreset-fraction", "0.5", "--out", report_path,
    )
    assert code == 0
    printed = capsys.readouterr().out
    assert "image AUROC (crd" in printed
    assert "image AUROC (nn)" in printed
    report = json.loads(report_path.read_text())
    assert set(report) >= {"crd", "nn", "knn", "coreset_nn"}
    assert 0.0 <= report["crd"]["image_auroc"] <= 1.0
    assert report["crd"]["pixel_auroc"] is not None  # masks present
    assert report["coreset_nn"]["kept"] == 8


def test_eval_with_model_only(dataset, tmp_path):
    model = tmp_path / "model.crd1"
    run_cli("fit", "--bank", dataset / "bank.ftb", "--model", model)
    assert run_cli("eval", "--manifest", dataset / "manifest_test.csv",
                   "--model", model) == 0


def test_eval_lambda_sweep_prints_grid(dataset, tmp_path, capsys):
    report_path = tmp_path / "report.json"
    code = run_cli("eval", "--manifest", dataset / "manifest_test.csv",
                   "--bank", dataset / "bank.ftb", "--sweep-lambda",
                   "--out", report_path)
    assert code == 0
    printed = capsys.readouterr().out
    for lam in ("0.1", "1", "3", "5", "10"):
        assert f"lambda={lam}" in printed
    assert "peak at lambda=" in printed
    sweep = json.loads(report_path.read_text())["lambda_sweep"]
    assert [row["lambda"] for row in sweep] == [0.1, 1.0, 3.0, 5.0, 10.0]


def test_eval_single_class_manifest_is_data_error(dataset, capsys):
    code = run_cli("eval", "--manifest", dataset / "manifest_train.csv",
                   "--bank", dataset / "bank.ftb")
    assert code == 2


def test_eval_needs_model_or_bank(dataset):
    assert run_cli("eval", "--manifest", dataset / "manifest_test.csv") == 1


# ------------------------------------------------------------------ exit codes

def test_missing_file_exits_2_and_names_path(tmp_path, capsys):
    code = run_cli("fit", "--bank", tmp_path / "nope.ftb",
                   "--model", tmp_path / "m.crd1")
    assert code == 2
    assert "nope.ftb" in capsys.readouterr().err


def test_invalid_parameter_exits_1(dataset, tmp_path):
    assert run_cli("fit", "--bank", dataset / "bank.ftb",
                   "--model", tmp_path / "m.crd1", "--lambda", "-3") == 1


def test_usage_error_exits_1(capsys):
    assert run_cli("fit") == 1
    assert run_cli("no-such-command") == 1


def test_corrupt_model_exits_2(dataset, tmp_path, capsys):
    model = tmp_path / "model.crd1"
    run_cli("fit", "--bank", dataset / "bank.ftb", "--model", model)
    data = bytearray(model.read_bytes())
    data[25] ^= 0xFF
    model.write_bytes(bytes(data))
    assert run_cli("score", "--model", model, "--manifest",
                   dataset / "manifest_test.csv", "--out", tmp_path / "s.csv") == 2


# ----------------------------------------------------------------------- bench

def test_bench_small_config_writes_jsonl(tmp_path, capsys):
    out = tmp_path / "bench.jsonl"
    code = run_cli("bench", "--d", "8", "--n", "64", "--m", "8",
                   "--reps", "3", "--warmup", "1", "--out", out)
    assert code == 0
    line = json.loads(out.read_text().splitlines()[0])
    assert line["d"] == 8 and line["n"] == 64 and line["m"] == 8
    assert "speedup" in capsys.readouterr().out
