import numpy as np
import pytest

from calbet.errors import OddsNotAboveOne
from calbet.market import bookmaker_margin, implied_probability, is_value_bet


@pytest.mark.parametrize("odds, expected", [(1.90, 1 / 1.9), (2.0, 0.5), (4.0, 0.25)])
def test_implied_probability(odds, expected):
    assert implied_probability(odds) == pytest.approx(expected, abs=1e-15)


def test_implied_probability_of_190_is_52_6_percent():
    assert implied_probability(1.90) == pytest.approx(0.526315789, abs=1e-9)


@pytest.mark.parametrize("odds", [1.0, 0.5, -110.0, float("nan")])
def test_implied_probability_rejects_odds_not_above_one(odds):
    with pytest.raises(OddsNotAboveOne):
        implied_probability(odds)


@pytest.mark.parametrize("home, away, expected", [
    (1.90, 1.90, 0.0526315789),
    (2.0, 2.0, 0.0),
    (1.50, 3.00, 0.0),
])
def test_bookmaker_margin(home, away, expected):
    assert bookmaker_margin(home, away) == pytest.approx(expected, abs=1e-9)


def test_margin_is_symmetric():
    rng = np.random.default_rng(3)
    for h, a in rng.uniform(1.01, 15, size=(200, 2)):
        assert bookmaker_margin(h, a) == bookmaker_margin(a, h)


@pytest.mark.parametrize("p, odds, expected", [
    (0.55, 2.0, True),
    (0.5, 2.0, False),
    (0.40, 2.5, False),
])
def test_is_value_bet(p, odds, expected):
    assert is_value_bet(p, odds) is expected


def test_implied_probability_strictly_decreasing():
    odds = np.linspace(1.001, 50, 5000)
    ip = implied_probability(odds)
    assert np.all(np.diff(ip) < 0)


def test_vectorised_value_bet():
    res = is_value_bet(np.array([0.55, 0.5, 0.4]), np.array([2.0, 2.0, 2.5]))
    assert res.tolist() == [True, False, False]
