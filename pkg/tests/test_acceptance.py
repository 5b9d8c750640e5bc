"""Acceptance criteria, one test per criterion.

Each test name starts with ``test_criterion_NN``; the session summary
(``conftest.pytest_terminal_summary``) prints one PASS/FAIL line per
criterion.
"""

import filecmp
import math
import time
from fractions import Fraction

import gmpy2
import numpy as np
import pytest

from calbet.backtest import FixedStake, FractionalKelly, kelly_fraction, simulate
from calbet.calibration import (
    ACCURACY,
    CLASSWISE_ECE,
    MetricSpec,
    aggregate_bins,
    class_ece_terms,
    classwise_ece,
    constrained_classwise_ece,
    occupancy_fraction,
)
from calbet.cli import main
from calbet.features import ks_two_sample
from calbet.learners import LogisticRegressionGD, lr_gradient, lr_loss
from calbet.market import bookmaker_margin, implied_probability, is_value_bet
from calbet.selection import select_model, sfs
from calbet.synthetic import make_league

from conftest import matched, random_season
from test_calibration import brute_force_ece

KELLY_P = np.linspace(0.0, 1.0, 1000)[:, None]
KELLY_ODDS = np.linspace(1.01, 20.0, 1000)[None, :]


def test_criterion_01_odds_arithmetic():
    assert implied_probability(1.90) == pytest.approx(1 / 1.9, abs=1e-15)
    margin = bookmaker_margin(1.90, 1.90)
    assert abs(margin - 0.05263) <= 1e-5


def test_criterion_02_kelly_arithmetic():
    t0 = time.perf_counter()
    k = 0.4
    assert 0.25 * k == pytest.approx(0.10, abs=1e-15)
    assert kelly_fraction(0.7, 2.0) == pytest.approx(k, abs=1e-15)
    got = kelly_fraction(KELLY_P, KELLY_ODDS)
    b = KELLY_ODDS - 1.0
    q = 1.0 - KELLY_P
    direct = (KELLY_P * b - q) / b
    assert got.size == 10 ** 6
    assert np.max(np.abs(got - direct)) <= 1e-12
    assert time.perf_counter() - t0 < 5


def test_criterion_03_value_kelly_equivalence():
    value = is_value_bet(KELLY_P, KELLY_ODDS)
    positive = kelly_fraction(KELLY_P, KELLY_ODDS) > 0
    assert int(np.count_nonzero(value != positive)) == 0


def _random_dataset(rng):
    n = int(rng.integers(1, 201))
    kind = rng.integers(3)
    if kind == 0:
        p = rng.random(n)
    elif kind == 1:
        p = rng.beta(rng.uniform(0.3, 5), rng.uniform(0.3, 5), n)
    else:
        # include exact endpoints
        p = rng.choice([0.0, 1.0, *rng.random(8)], n)
    y = (rng.random(n) < rng.uniform(0, 1)).astype(int)
    return p, y


def test_criterion_04_classwise_ece_oracle():
    t0 = time.perf_counter()
    rng = np.random.default_rng(4)
    for _ in range(1000):
        p, y = _random_dataset(rng)
        bins = aggregate_bins(p, y, 20)
        ece = classwise_ece(bins)
        assert abs(ece - brute_force_ece(p.tolist(), y.tolist(), 20)) <= 1e-12
        t0_, t1_ = class_ece_terms(bins)
        assert abs(t0_ - t1_) <= 1e-12
    assert time.perf_counter() - t0 < 30


def test_criterion_05_occupancy_constraint():
    rng = np.random.default_rng(5)
    spec = MetricSpec(CLASSWISE_ECE)
    for _ in range(500):
        k = int(rng.integers(1, 16))
        chosen = rng.choice(20, size=k, replace=False)
        n = int(rng.integers(k, 200))
        j = rng.choice(chosen, n)
        p = (j + rng.random(n)) / 20
        y = rng.integers(0, 2, n)
        assert occupancy_fraction(aggregate_bins(p, y, 20)) < 0.8
        assert constrained_classwise_ece(p, y, spec) == 1.0
    # exactly 16 occupied bins: the raw score comes through
    centres = (np.arange(16) + 0.5) / 20
    p = np.repeat(centres, 5)
    y = (np.arange(80) % 5 < 2).astype(int)
    raw = classwise_ece(aggregate_bins(p, y, 20))
    assert occupancy_fraction(aggregate_bins(p, y, 20)) == 0.8
    assert raw < 1.0
    assert constrained_classwise_ece(p, y, spec) == raw


def _mpq(x):
    return x if isinstance(x, gmpy2.mpq) else gmpy2.mpq(x.numerator, x.denominator)


def _conserved(initial, ledger):
    """Final bankroll equals initial minus stakes plus winning payouts, rebuilt from the ledger."""
    total = gmpy2.mpq(initial)
    for e in ledger:
        if e.side == "none":
            assert e.stake == 0
            continue
        total -= _mpq(e.stake)
        if e.won:
            total += _mpq(e.stake) * gmpy2.mpq(repr(e.odds))
    return total == _mpq(ledger[-1].bankroll_after)


def test_criterion_06_ledger_replay():
    t0 = time.perf_counter()
    games = [matched("g1", 0, 2.0, 2.0, True), matched("g2", 1, 1.5, 2.5, True)]
    fc = {"g1": 0.6, "g2": 0.4}
    ledger, rep = simulate(games, fc, FixedStake())
    assert [e.bankroll_after for e in ledger] == [10100, 10000] and rep.roi == 0.0
    ledger, _ = simulate(games, fc, FractionalKelly())
    # stake 1/8 * 0.2 * 10000 = 250 wins at evens; then 1/8 * (1/3) * 10250 loses
    assert [e.stake for e in ledger] == [250, Fraction(10250, 24)]
    assert [e.bankroll_after for e in ledger] == [10250, Fraction(10250) * Fraction(23, 24)]
    rng = np.random.default_rng(6)
    for _ in range(1000):
        season, forecasts, _ = random_season(rng, n=200)
        for rule in (FixedStake(), FractionalKelly()):
            ledger, _ = simulate(season, forecasts, rule)
            assert _conserved(10_000, ledger)
    assert time.perf_counter() - t0 < 60


def test_criterion_07_no_edge_market():
    t0 = time.perf_counter()
    rng = np.random.default_rng(7)
    for m in (0.02, 0.05):
        for _ in range(20):
            season, truth_fc, _ = random_season(rng, margin=m, noise=0)
            _, rep = simulate(season, truth_fc, FractionalKelly())
            assert rep.games_bet == 0
            _, rep = simulate(season, truth_fc, FixedStake())
            assert rep.games_bet == 0
    rois = []
    for _ in range(200):
        season, noisy_fc, _ = random_season(rng, fair=True, noise=0.1)
        _, rep = simulate(season, noisy_fc, FixedStake())
        assert rep.games_bet > 0
        rois.append(rep.roi)
    rois = np.array(rois)
    se = rois.std(ddof=1) / math.sqrt(len(rois))
    print(f"no-edge mean ROI {rois.mean():.3f}% (se {se:.3f})")
    assert abs(rois.mean()) <= 3 * se
    assert time.perf_counter() - t0 < 120


def test_criterion_08_lr_correctness():
    rng = np.random.default_rng(8)
    h = 1e-5
    for _ in range(100):
        n, d = int(rng.integers(5, 40)), int(rng.integers(1, 6))
        X = rng.normal(size=(n, d))
        y = rng.integers(0, 2, n)
        beta = rng.normal(size=d + 1)
        l2 = float(rng.choice([0.0, 0.01, 0.1, 1.0]))
        g = lr_gradient(beta, X, y, l2)
        fd = np.array([(lr_loss(beta + h * e, X, y, l2) - lr_loss(beta - h * e, X, y, l2)) / (2 * h)
                       for e in np.eye(d + 1)])
        assert np.linalg.norm(g - fd) / max(np.linalg.norm(g), np.linalg.norm(fd)) < 1e-4
    X = rng.normal(size=(100, 2))
    y = (2 * X[:, 0] - X[:, 1] > 0).astype(int)
    X += np.outer(2 * y - 1, [1.0, -0.5])  # widen the margin
    model = LogisticRegressionGD(l2_lambda=0.0).fit(X, y)
    assert (model.predict(X) == y).mean() == 1.0
    y = (rng.random(500) < 0.27).astype(int)
    model = LogisticRegressionGD(l2_lambda=0.0, learning_rate=1.0, tolerance=1e-9).fit(np.zeros((500, 1)), y)
    assert abs(model.coef_[0] - math.log(y.mean() / (1 - y.mean()))) < 1e-3


def _ecdf_sweep_D(a, b):
    """Exact D from integer counts at every pooled point."""
    a, b = sorted(a), sorted(b)
    n, m = len(a), len(b)
    best = Fraction(0)
    for x in a + b:
        ca = sum(1 for v in a if v <= x)
        cb = sum(1 for v in b if v <= x)
        best = max(best, abs(Fraction(ca, n) - Fraction(cb, m)))
    return best


def test_criterion_09_ks_screen():
    rng = np.random.default_rng(9)
    coeff = math.sqrt(-math.log(0.01 / 2) / 2)
    assert coeff == pytest.approx(1.628, abs=5e-4)
    for _ in range(200):
        a = rng.normal(size=int(rng.integers(20, 300)))
        assert ks_two_sample(a, a.copy()).decision == "keep"
        a, b = rng.normal(size=200), rng.normal(3.0, 1.0, 200)
        res = ks_two_sample(a, b)
        assert res.critical == pytest.approx(1.628 * math.sqrt(2 / 200), rel=5e-4)
        assert res.decision == "drop"
    mismatches = 0
    for _ in range(500):
        n, m = int(rng.integers(20, 120)), int(rng.integers(20, 120))
        a = rng.normal(size=n)
        b = rng.normal(rng.uniform(0, 1.0), rng.uniform(0.7, 1.5), m)
        if rng.random() < 0.2:  # heavy ties
            a, b = np.round(a), np.round(b)
        D = _ecdf_sweep_D(a.tolist(), b.tolist())
        oracle = "drop" if D > coeff * math.sqrt((n + m) / (n * m)) else "keep"
        res = ks_two_sample(a, b)
        assert abs(res.D - float(D)) < 1e-12
        mismatches += res.decision != oracle
    assert mismatches == 0


def test_criterion_10_selection_fixtures():
    ece = {"LR": 3.61, "RF": 4.39, "SVM": 3.23, "MLP": 3.59}
    acc = {"LR": 65.69, "RF": 65.34, "SVM": 66.55, "MLP": 65.69}
    assert select_model(ece, MetricSpec(CLASSWISE_ECE)) == "SVM"
    assert select_model(acc, MetricSpec(ACCURACY)) == "SVM"


class _Counter:
    fits = 0

    def get_params(self, deep=True):
        return {}

    def set_params(self, **kw):
        return self

    def fit(self, X, y):
        _Counter.fits += 1
        return self

    def predict_proba(self, X):
        return np.full((len(X), 2), 0.5)


def test_criterion_11_sfs_completeness():
    t0 = time.perf_counter()
    for d in range(1, 9):
        X = np.zeros((10, d))
        y = np.arange(10) % 2
        _Counter.fits = 0
        res = sfs(_Counter(), MetricSpec(ACCURACY), [f"f{i}" for i in range(d)], (X, y), (X, y))
        assert res.n_evaluations == _Counter.fits == d * (d + 1) // 2
    names = ["x1", "x2", "n1", "n2", "n3"]
    hits = 0
    learner = LogisticRegressionGD(max_iters=300, learning_rate=0.5, tolerance=1e-4)
    for seed in range(100):
        rng = np.random.default_rng(seed)
        X = rng.normal(size=(300, 5))
        y = (X[:, 0] - X[:, 1] + 0.5 * rng.normal(size=300) > 0).astype(int)
        res = sfs(learner, MetricSpec(ACCURACY), names, (X[:200], y[:200]), (X[200:], y[200:]))
        hits += {"x1", "x2"} <= set(res.subset)
    print(f"planted features recovered in {hits}/100 runs")
    assert hits >= 95
    assert time.perf_counter() - t0 < 120


def test_criterion_12_end_to_end_determinism(tmp_path):
    t0 = time.perf_counter()
    trees = []
    for name in ("first", "second"):
        cfg = make_league(tmp_path / name)
        assert main(["run", "--config", str(cfg)]) == 0
        trees.append(tmp_path / name / "out")
    files = sorted(p.relative_to(trees[0]) for p in trees[0].rglob("*") if p.is_file())
    assert files == sorted(p.relative_to(trees[1]) for p in trees[1].rglob("*") if p.is_file())
    assert len(files) > 20
    match, mismatch, errors = filecmp.cmpfiles(trees[0], trees[1], [str(f) for f in files], shallow=False)
    assert mismatch == [] and errors == []
    assert time.perf_counter() - t0 < 60
