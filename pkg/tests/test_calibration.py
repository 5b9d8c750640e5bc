import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from calbet.calibration import (
    MetricSpec,
    accuracy,
    aggregate_bins,
    bin_index,
    class_ece_terms,
    classwise_ece,
    constrained_classwise_ece,
    occupancy_fraction,
    read_reliability_csv,
    reliability_table,
    write_reliability_csv,
)
from calbet.errors import EmptyInput, LengthMismatch, ProbabilityOutOfRange

HAND_PREDS = [0.12, 0.18, 0.65, 0.72]
HAND_LABELS = [0, 1, 1, 0]


def brute_force_ece(preds, labels, M):
    """Per-prediction loop over explicit half-open bin edges."""
    n = len(preds)
    total = 0.0
    for k in (0, 1):
        for j in range(1, M + 1):
            lo, hi = (j - 1) / M, j / M
            members = []
            for p, y in zip(preds, labels):
                q = p if k == 1 else 1.0 - p
                yk = y if k == 1 else 1 - y
                if lo <= q < hi or (j == M and q == 1.0):
                    members.append((q, yk))
            if members:
                mean_p = sum(q for q, _ in members) / len(members)
                rate = sum(yk for _, yk in members) / len(members)
                total += len(members) / n * abs(rate - mean_p)
    return total / 2


def spread_sample(n_bins_hit, M=20):
    """One prediction at the centre of each of the first ``n_bins_hit`` bins, 20 total."""
    centres = [(j + 0.5) / M for j in range(n_bins_hit)]
    preds = [centres[i % n_bins_hit] for i in range(20)]
    labels = [i % 2 for i in range(20)]
    return preds, labels


@pytest.mark.parametrize("p, M, expected", [(0.0, 20, 1), (1.0, 20, 20), (0.05, 20, 2),
                                            (0.049999, 20, 1), (0.999, 20, 20), (0.5, 2, 2)])
def test_bin_index(p, M, expected):
    assert bin_index(p, M) == expected


@pytest.mark.parametrize("p", [-0.01, 1.01])
def test_bin_index_rejects_out_of_range(p):
    with pytest.raises(ProbabilityOutOfRange):
        bin_index(p, 20)


def test_aggregate_bins_hand_example():
    bins = aggregate_bins(HAND_PREDS, HAND_LABELS, 20)
    occupied = [j + 1 for j in np.flatnonzero(bins.counts[1])]
    # 0.65 is the left edge of bin 14 under half-open bins
    assert occupied == [3, 4, 14, 15]
    assert bins.counts[1].sum() == bins.counts[0].sum() == 4


def test_aggregate_bins_all_half():
    bins = aggregate_bins([0.5] * 7, [1, 0, 1, 1, 0, 0, 1], 20)
    assert np.count_nonzero(bins.counts[1]) == 1
    assert bins.counts[1].max() == 7


def test_aggregate_bins_errors():
    with pytest.raises(EmptyInput):
        aggregate_bins([], [], 20)
    with pytest.raises(LengthMismatch):
        aggregate_bins([0.1, 0.2], [1], 20)


def test_bins_invariants():
    rng = np.random.default_rng(0)
    p = rng.random(500)
    y = rng.random(500) < p
    bins = aggregate_bins(p, y, 20)
    for k in (0, 1):
        assert bins.counts[k].sum() == 500
        for j in range(1, 21):
            if bins.counts[k, j - 1]:
                lo, hi = bins.edges(j)
                assert lo <= bins.mean_pred[k, j - 1] <= hi
                assert 0 <= bins.emp_rate[k, j - 1] <= 1


def test_classwise_ece_hand_example():
    ece = classwise_ece(aggregate_bins(HAND_PREDS, HAND_LABELS, 20))
    assert ece == pytest.approx((0.12 + 0.82 + 0.35 + 0.72) / 4, abs=1e-12)
    assert ece == pytest.approx(0.5025, abs=1e-12)


def test_classwise_ece_sharp_correct_is_zero():
    assert classwise_ece(aggregate_bins([1.0] * 5, [1] * 5, 20)) == 0.0


def test_calibrated_fixed_point():
    # each bin's predictions equal its empirical rate: 4 preds of 0.25 with one
    # positive, 5 preds of 0.6 with three positives
    preds = [0.25] * 4 + [0.6] * 5
    labels = [1, 0, 0, 0, 1, 1, 1, 0, 0]
    assert classwise_ece(aggregate_bins(preds, labels, 20)) == pytest.approx(0.0, abs=1e-15)


@pytest.mark.parametrize("seed", range(20))
def test_matches_brute_force(seed):
    rng = np.random.default_rng(seed)
    n = int(rng.integers(1, 201))
    p = rng.random(n)
    y = (rng.random(n) < p).astype(int)
    got = classwise_ece(aggregate_bins(p, y, 20))
    assert got == pytest.approx(brute_force_ece(p.tolist(), y.tolist(), 20), abs=1e-12)


@settings(max_examples=60, deadline=None)
@given(st.lists(st.tuples(st.floats(0, 1), st.booleans()), min_size=1, max_size=80))
def test_ece_bounded_symmetric_and_permutation_invariant(data):
    preds = [p for p, _ in data]
    labels = [y for _, y in data]
    bins = aggregate_bins(preds, labels, 20)
    ece = classwise_ece(bins)
    assert 0.0 <= ece <= 1.0
    perm = np.random.default_rng(len(data)).permutation(len(data))
    again = classwise_ece(aggregate_bins([preds[i] for i in perm], [labels[i] for i in perm], 20))
    assert again == pytest.approx(ece, abs=1e-12)
    assert accuracy(preds, labels) == accuracy([preds[i] for i in perm], [labels[i] for i in perm])


def test_binary_symmetry_on_random_data():
    rng = np.random.default_rng(7)
    for _ in range(50):
        p = rng.random(150)
        y = rng.random(150) < 0.5
        t0, t1 = class_ece_terms(aggregate_bins(p, y, 20))
        assert t0 == pytest.approx(t1, abs=1e-12)


def test_occupancy_fraction():
    assert occupancy_fraction(aggregate_bins([0.5] * 10, [1] * 10, 20)) == 0.05
    preds, labels = spread_sample(16)
    assert occupancy_fraction(aggregate_bins(preds, labels, 20)) == 0.8
    grid = [0.025 + 0.05 * j for j in range(20)]
    assert occupancy_fraction(aggregate_bins(grid, [1] * 20, 20)) == 1.0


def test_constrained_ece():
    spec = MetricSpec("classwise_ece", bins=20, min_occupancy=0.8)
    assert constrained_classwise_ece([0.5] * 10, [1, 0] * 5, spec) == 1.0
    preds, labels = spread_sample(16)
    raw = classwise_ece(aggregate_bins(preds, labels, 20))
    assert constrained_classwise_ece(preds, labels, spec) == raw
    preds15, labels15 = spread_sample(15)
    assert constrained_classwise_ece(preds15, labels15, spec) == 1.0
    # raw ECE is zero here, the occupancy rule still wins
    assert classwise_ece(aggregate_bins([1.0] * 6, [1] * 6, 20)) == 0.0
    assert constrained_classwise_ece([1.0] * 6, [1] * 6, spec) == 1.0


@pytest.mark.parametrize("preds, labels, expected", [
    ([0.9, 0.2], [1, 0], 1.0),
    ([0.9, 0.2], [0, 1], 0.0),
    ([0.5], [1], 1.0),
])
def test_accuracy(preds, labels, expected):
    assert accuracy(preds, labels) == expected


def test_reliability_table(tmp_path):
    rows = reliability_table(aggregate_bins([0.72], [0], 20))
    assert len(rows) == 40
    row = next(r for r in rows if r["class"] == 1 and r["count"])
    assert (row["bin_lo"], row["bin_hi"]) == (0.7, 0.75)
    assert row["mean_pred"] == 0.72 and row["emp_rate"] == 0.0 and row["count"] == 1
    empty = next(r for r in rows if r["class"] == 0 and r["count"] == 0)
    assert empty["mean_pred"] is None and empty["emp_rate"] is None

    path = tmp_path / "rel.csv"
    write_reliability_csv(rows, path)
    assert path.read_text().splitlines()[0] == "class,bin_lo,bin_hi,count,mean_pred,emp_rate"
    assert read_reliability_csv(path) == rows


def test_metric_spec():
    acc = MetricSpec("accuracy")
    ece = MetricSpec("classwise_ece")
    assert acc.direction == "maximize" and ece.direction == "minimize"
    assert acc.better(0.7, 0.6) and ece.better(0.03, 0.04)
    with pytest.raises(ValueError):
        MetricSpec("brier")
    with pytest.raises(ValueError):
        MetricSpec(min_occupancy=0.0)
