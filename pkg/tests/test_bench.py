import json

import numpy as np
import pytest

from crdkit import (
    FeatureBank,
    ParameterError,
    QueryBatch,
    bench_compare,
    build_scorer,
    crd_score,
    nn_distance,
    save_model,
)
from crdkit.bench import _nn_pass, format_report
from crdkit.io import model_byte_size, tensor_byte_size


def small_setup(seed=0, d=8, n=100, m=20):
    rng = np.random.default_rng(seed)
    return (
        FeatureBank(rng.standard_normal((d, n))),
        QueryBatch(rng.standard_normal((d, m))),
    )


def test_report_fields_and_consistency():
    bank, queries = small_setup()
    report = bench_compare(bank, queries, lam=5.0, reps=3, warmup=1)
    assert (report.d, report.n, report.m, report.reps) == (8, 100, 20, 3)
    assert report.crd_ns_per_query > 0 and report.nn_ns_per_query > 0
    assert report.speedup == pytest.approx(
        report.nn_ns_per_query / report.crd_ns_per_query, rel=1e-9
    )
    assert report.crd_model_bytes == model_byte_size(8)
    assert report.bank_bytes == tensor_byte_size(100, 8)


def test_buffered_scan_equals_direct_calls_exactly():
    bank, queries = small_setup(1)
    pass_scores = _nn_pass(bank, queries, k=1)
    direct = [nn_distance(bank, y).score for y in queries.columns.T]
    np.testing.assert_array_equal(pass_scores, direct)


def test_scoring_is_deterministic_across_reps():
    bank, queries = small_setup(2)
    scorer = build_scorer(bank, 5.0)
    np.testing.assert_array_equal(crd_score(scorer, queries), crd_score(scorer, queries))
    np.testing.assert_array_equal(_nn_pass(bank, queries, 3), _nn_pass(bank, queries, 3))


def test_model_bytes_do_not_depend_on_bank_size(tmp_path):
    rng = np.random.default_rng(3)
    sizes = []
    for n in (50, 500):
        scorer = build_scorer(FeatureBank(rng.standard_normal((8, n))), 5.0)
        path = tmp_path / f"m_{n}.crd1"
        save_model(path, scorer)
        sizes.append(path.stat().st_size)
    assert sizes[0] == sizes[1] == model_byte_size(8)


def test_json_line_round_trip():
    bank, queries = small_setup(4)
    report = bench_compare(bank, queries, lam=5.0, reps=3, warmup=1)
    decoded = json.loads(report.to_json_line())
    assert set(decoded) == {
        "d", "n", "m", "reps", "crd_ns_per_query", "nn_ns_per_query",
        "speedup", "crd_model_bytes", "bank_bytes", "timestamp",
    }
    assert decoded["speedup"] == report.speedup


def test_format_report_mentions_speedup():
    bank, queries = small_setup(5)
    report = bench_compare(bank, queries, lam=5.0, reps=3, warmup=1)
    assert "speedup" in format_report(report)


def test_preconditions():
    bank, queries = small_setup(6)
    with pytest.raises(ParameterError):
        bench_compare(bank, queries, lam=5.0, reps=2, warmup=1)
    with pytest.raises(ParameterError):
        bench_compare(bank, queries, lam=5.0, reps=3, warmup=0)
