import itertools
import math

import numpy as np
import pytest
from hypothesis import given, strategies as st

from crdkit import (
    FeatureBank,
    ParameterError,
    greedy_coreset,
    knn_avg_distance,
    nn_distance,
)


def scan_oracle(bank, y):
    """Independently coded exhaustive scan (sequential accumulation)."""
    best_score, best_idx = None, None
    for i in range(bank.n):
        acc = 0.0
        for j in range(bank.d):
            diff = y[j] - bank.columns[j, i]
            acc += diff * diff
        if best_score is None or acc < best_score:
            best_score, best_idx = acc, i
    return best_score, best_idx


def random_bank(seed, d=8, n=50):
    rng = np.random.default_rng(seed)
    return FeatureBank(rng.standard_normal((d, n))), rng.standard_normal(d)


# ----------------------------------------------------------------- nn_distance

def test_self_match_scores_zero_at_own_index():
    rng = np.random.default_rng(0)
    cols = rng.standard_normal((4, 6))
    result = nn_distance(FeatureBank(cols), cols[:, 3])
    assert result.score == 0.0
    assert result.index == 3


def test_two_column_example():
    bank = FeatureBank(np.array([[0.0, 1.0], [0.0, 0.0]]))
    result = nn_distance(bank, [0.4, 0.0])
    assert result.index == 0
    assert result.score == pytest.approx(0.16)


def test_matches_exhaustive_scan_exactly():
    for seed in range(100):
        bank, y = random_bank(seed)
        expected_score, expected_idx = scan_oracle(bank, y)
        result = nn_distance(bank, y)
        assert result.score == expected_score
        assert result.index == expected_idx


def test_ties_break_to_lowest_index():
    bank = FeatureBank(np.array([[1.0, -1.0, 1.0]]))
    assert nn_distance(bank, [0.0]).index == 0


@given(st.integers(0, 2**32 - 1))
def test_nn_is_a_lower_bound_on_every_column_distance(seed):
    bank, y = random_bank(seed, d=5, n=20)
    best = nn_distance(bank, y).score
    diffs = bank.columns - y[:, None]
    assert (best <= (diffs * diffs).sum(axis=0)).all()


def test_dimension_mismatch_rejected():
    bank, _ = random_bank(1)
    with pytest.raises(ParameterError):
        nn_distance(bank, np.zeros(bank.d + 2))


# ------------------------------------------------------------ knn_avg_distance

def test_k1_reduces_to_nn():
    for seed in range(20):
        bank, y = random_bank(seed)
        assert knn_avg_distance(bank, y, 1) == nn_distance(bank, y).score


def test_symmetric_pair_average():
    bank = FeatureBank(np.array([[0.0, 2.0]]))
    assert knn_avg_distance(bank, [1.0], 2) == 1.0


def test_matches_sort_oracle():
    for seed in range(100):
        bank, y = random_bank(seed)
        diffs = bank.columns - y[:, None]
        d2 = sorted((diffs * diffs).sum(axis=0))
        expected = sum(d2[:5]) / 5.0
        assert knn_avg_distance(bank, y, 5) == pytest.approx(expected, abs=1e-12)


def test_nondecreasing_in_k():
    bank, y = random_bank(7, d=6, n=30)
    means = [knn_avg_distance(bank, y, k) for k in range(1, 31)]
    for lo, hi in zip(means, means[1:]):
        assert hi >= lo - 1e-12


def test_k_out_of_range_rejected():
    bank, y = random_bank(2)
    for k in (0, bank.n + 1):
        with pytest.raises(ParameterError):
            knn_avg_distance(bank, y, k)


# -------------------------------------------------------------- greedy_coreset

def test_full_fraction_selects_every_index():
    bank, _ = random_bank(3, d=3, n=12)
    selection = greedy_coreset(bank, 1.0, seed=0)
    assert sorted(selection.indices) == list(range(12))
    assert len(set(selection.indices)) == 12


def test_collinear_points_pick_farthest():
    # seed 3 starts at index 0 for n=3; the farthest point from 0 is 10.
    bank = FeatureBank(np.array([[0.0, 1.0, 10.0]]))
    selection = greedy_coreset(bank, 2.0 / 3.0, seed=3)
    assert selection.indices == [0, 2]


def test_selection_size_rule():
    bank, _ = random_bank(4, d=2, n=10)
    assert len(greedy_coreset(bank, 0.31, seed=0).indices) == 3
    assert len(greedy_coreset(bank, 0.25, seed=0).indices) == 3  # half rounds up
    assert len(greedy_coreset(bank, 0.01, seed=0).indices) == 1


def test_deterministic_per_seed():
    bank, _ = random_bank(5, d=4, n=30)
    a = greedy_coreset(bank, 0.2, seed=11)
    b = greedy_coreset(bank, 0.2, seed=11)
    assert a == b


def test_within_twice_optimal_kcenter_radius():
    # Oracle: exhaustive k-center over all subsets at tiny n; greedy
    # farthest-point selection is a 2-approximation regardless of start.
    rng = np.random.default_rng(6)
    points = rng.standard_normal((2, 12))
    bank = FeatureBank(points)

    def radius(centers):
        d2 = np.min(
            [((points - points[:, [c]]) ** 2).sum(axis=0) for c in centers], axis=0
        )
        return math.sqrt(d2.max())

    k = len(greedy_coreset(bank, 0.25, seed=0).indices)
    optimal = min(radius(s) for s in itertools.combinations(range(12), k))
    for seed in range(5):
        greedy = radius(greedy_coreset(bank, 0.25, seed=seed).indices)
        assert greedy <= 2.0 * optimal + 1e-12


def test_bad_fraction_rejected():
    bank, _ = random_bank(8)
    for fraction in (0.0, -0.5, 1.5):
        with pytest.raises(ParameterError):
            greedy_coreset(bank, fraction, seed=0)
