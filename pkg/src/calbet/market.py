"""Decimal-odds arithmetic.

All functions accept scalars or numpy arrays; scalars in, scalars out.
"""

import numpy as np

from .errors import OddsNotAboveOne


def check_odds(odds):
    arr = np.asarray(odds, dtype=float)
    # NaN fails the comparison too
    bad = ~(arr > 1.0)
    if np.any(bad):
        raise OddsNotAboveOne(arr[bad].flat[0] if arr.ndim else float(arr))
    return arr


def _out(x):
    return float(x) if np.ndim(x) == 0 else x


def implied_probability(odds):
    """Probability implied by decimal ``odds``, i.e. ``1 / odds``.

    >>> implied_probability(4.0)
    0.25
    """
    return _out(1.0 / check_odds(odds))


def bookmaker_margin(home_odds, away_odds):
    """Absolute deviation of the summed implied probabilities from one.

    >>> round(bookmaker_margin(1.90, 1.90), 5)
    0.05263
    """
    total = implied_probability(home_odds) + implied_probability(away_odds)
    return _out(np.abs(total - 1.0))


def is_value_bet(p, odds):
    """True when the forecast ``p`` strictly beats the implied probability.

    Evaluated as ``p * odds > 1`` rather than ``p > 1 / odds``: the two agree
    in exact arithmetic, and this form shares its rounding with the numerator
    of :func:`calbet.backtest.kelly_fraction`, so a value bet always has a
    positive Kelly stake.
    """
    odds = check_odds(odds)
    res = np.asarray(p, dtype=float) * odds > 1.0
    return bool(res) if res.ndim == 0 else res
