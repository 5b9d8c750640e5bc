"""Staking rules and the season betting simulation.

For every game in date order the home side is checked first; only when it
is not a value bet is the away side checked, so at most one bet is placed
per game. The stake leaves the bankroll when the bet is placed and
``stake * odds`` comes back on a win.

Bankroll arithmetic is exact (GMP rationals via ``gmpy2.mpq``), with
probabilities and odds taken at their shortest decimal form (``0.6`` is
3/5, not the nearest binary double). Rounding to cents happens only when a
report is produced. That keeps the identity
``final = initial - sum(stakes) + sum(stake * odds for winning bets)``
exact for any number of bets.
"""

import csv
import json
from dataclasses import asdict, dataclass
from fractions import Fraction

import numpy as np
from gmpy2 import mpq as Q

from .calibration import accuracy, aggregate_bins, classwise_ece
from .errors import ChronologyViolation, ConfigError, ForecastMissing, NonPositiveInitial, NotAValueBet
from .market import check_odds

DEFAULT_BANKROLL = 10_000


def kelly_fraction(p, odds):
    """Kelly share of bankroll for win probability ``p`` at decimal ``odds``.

    Equal to ``(p*b - q) / b`` with ``b = odds - 1`` and ``q = 1 - p``;
    computed as ``(p*odds - 1) / b`` so its sign matches
    :func:`calbet.market.is_value_bet` exactly. Negative values mean the bet
    has negative expectation.
    """
    odds = check_odds(odds)
    k = (np.asarray(p, dtype=float) * odds - 1.0) / (odds - 1.0)
    return float(k) if k.ndim == 0 else k


@dataclass(frozen=True)
class FixedStake:
    amount: float = 100.0
    name: str = "fixed"

    def __post_init__(self):
        if not self.amount > 0:
            raise ValueError("fixed stake must be positive")


@dataclass(frozen=True)
class FractionalKelly:
    fraction: Fraction = Fraction(1, 8)
    name: str = "kelly8"

    def __post_init__(self):
        if not 0 < self.fraction <= 1:
            raise ValueError("Kelly fraction must lie in (0, 1]")


RULES = {
    "fixed": FixedStake(),
    "kelly8": FractionalKelly(),
}


def parse_rule(name):
    """Rule by name: ``fixed``, ``fixed:<amount>``, ``kelly8`` or ``kelly:<n>`` (1/n Kelly)."""
    if name in RULES:
        return RULES[name]
    kind, _, arg = name.partition(":")
    try:
        if kind == "fixed" and arg:
            return FixedStake(float(arg), name)
        if kind == "kelly" and arg:
            return FractionalKelly(Fraction(1, int(arg)), name)
    except (ValueError, ZeroDivisionError):
        pass
    raise ConfigError(f"unknown stake rule {name!r}; use fixed, kelly8, fixed:<amount> or kelly:<n>")


def _exact(x):
    """Shortest decimal form of a float as an exact rational."""
    return Q(x) if isinstance(x, (Fraction, Q, int)) else Q(repr(float(x)))


def _exact_value(p, odds):
    return _exact(p) * _exact(odds) > 1


def exact_kelly(p, odds):
    """:func:`kelly_fraction` in exact arithmetic."""
    check_odds(float(odds))
    p, o = _exact(p), _exact(odds)
    return (p * o - 1) / (o - 1)


def stake_for(rule, p, odds, bankroll):
    """Stake for a value bet, as an exact rational.

    A fixed stake larger than the bankroll returns 0: the bet is skipped,
    never partially placed or funded on credit.
    """
    if not _exact_value(p, odds):
        raise NotAValueBet(f"p={p!r} does not beat odds {odds!r}")
    bankroll = Q(bankroll)
    if isinstance(rule, FixedStake):
        amount = Q(rule.amount)
        return amount if bankroll >= amount else Q(0)
    return Q(rule.fraction) * exact_kelly(p, odds) * bankroll


@dataclass(frozen=True)
class LedgerEntry:
    game_id: str
    date: str
    side: str  # "home" | "away" | "none"
    p: float
    odds: float
    stake: object  # exact rational
    won: bool
    bankroll_after: object
    skip_reason: str = ""


def simulate(games, forecasts, rule, initial_bankroll=DEFAULT_BANKROLL, skip_missing=True):
    """Replay a season of bets.

    Args:
        games: :class:`~calbet.dataio.MatchedGame` list in (date, game_id) order.
        forecasts: ``{game_id: home win probability}``; away is the complement.
        rule: :class:`FixedStake` or :class:`FractionalKelly`.
        initial_bankroll: starting bankroll.
        skip_missing: skip games without a forecast instead of raising
            :class:`ForecastMissing`.

    Returns:
        ``(ledger, report)``.
    """
    initial = Q(initial_bankroll)
    if initial <= 0:
        raise NonPositiveInitial("initial bankroll must be positive")
    bankroll = initial
    ledger = []
    last = None
    for m in games:
        g, line = m.game, m.line
        if last is not None and g.sort_key < last:
            raise ChronologyViolation(f"game {g.game_id} is out of order")
        last = g.sort_key
        day = g.date.isoformat()
        p_home = forecasts.get(g.game_id)
        if p_home is None:
            if not skip_missing:
                raise ForecastMissing(f"no forecast for game {g.game_id}")
            ledger.append(LedgerEntry(g.game_id, day, "none", None, None, Q(0),
                                      None, bankroll, "no_forecast"))
            continue
        p_home = float(p_home)
        p_away = 1 - _exact(p_home)
        if _exact_value(p_home, line.home_odds):
            side, p, odds, won = "home", p_home, line.home_odds, g.home_won
        elif _exact_value(p_away, line.away_odds):
            side, p, odds, won = "away", p_away, line.away_odds, not g.home_won
        else:
            ledger.append(LedgerEntry(g.game_id, day, "none", p_home, None, Q(0),
                                      None, bankroll, "no_value"))
            continue
        stake = stake_for(rule, p, odds, bankroll)
        if stake <= 0:
            ledger.append(LedgerEntry(g.game_id, day, "none", p, odds, Q(0),
                                      None, bankroll, "insufficient_bankroll"))
            continue
        if isinstance(rule, FractionalKelly):
            # same value as subtract-then-pay, but one product per bet keeps
            # the growing Kelly denominators cheap to reduce
            share = Q(rule.fraction) * exact_kelly(p, odds)
            bankroll *= 1 + share * (_exact(odds) - 1) if won else 1 - share
        else:
            bankroll -= stake
            if won:
                bankroll += stake * _exact(odds)
        ledger.append(LedgerEntry(g.game_id, day, side, float(p), odds, stake, bool(won), bankroll))

    labels = {m.game_id: m.game.home_won for m in games}
    report = summarize(ledger, forecasts, labels, initial, rule_name=getattr(rule, "name", ""))
    return ledger, report


def roi(initial, final):
    """Percentage change from ``initial`` to ``final``."""
    if not initial > 0:
        raise NonPositiveInitial("initial bankroll must be positive")
    return float(100 * (Q(final) - Q(initial)) / Q(initial))


@dataclass
class BacktestReport:
    """Season summary; field layout follows the usual betting-system comparison."""

    initial_bankroll: float
    final_bankroll: float
    roi: float
    games_total: int
    games_forecast: int
    games_bet: int
    pct_games_bet: float
    bets_won: int
    pct_bets_won: float
    accuracy: float
    classwise_ece: float
    rule: str = ""
    branch: str = ""
    skipped: dict = None

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))


def _r2(x):
    return None if x is None else round(float(x), 2)


def summarize(ledger, forecasts, labels, initial=DEFAULT_BANKROLL, bins=20, rule_name=""):
    """Assemble a :class:`BacktestReport` from a finished ledger.

    ``pct_games_bet`` is relative to games that had a forecast; ``pct_bets_won``
    is ``None`` when no bet was placed. Accuracy and classwise-ECE are taken
    over every forecast game in the ledger.
    """
    initial = Q(initial)
    final = ledger[-1].bankroll_after if ledger else initial
    bets = [e for e in ledger if e.side != "none"]
    wins = sum(1 for e in bets if e.won)
    gids = [e.game_id for e in ledger if forecasts.get(e.game_id) is not None]
    skipped = {}
    for e in ledger:
        if e.skip_reason:
            skipped[e.skip_reason] = skipped.get(e.skip_reason, 0) + 1
    if gids:
        preds = [float(forecasts[g]) for g in gids]
        ys = [bool(labels[g]) for g in gids]
        acc = accuracy(preds, ys)
        ece = classwise_ece(aggregate_bins(preds, ys, bins))
    else:
        acc = ece = None
    return BacktestReport(
        initial_bankroll=_r2(initial),
        final_bankroll=_r2(final),
        roi=_r2(roi(initial, final)),
        games_total=len(ledger),
        games_forecast=len(gids),
        games_bet=len(bets),
        pct_games_bet=_r2(100 * len(bets) / len(gids)) if gids else None,
        bets_won=wins,
        pct_bets_won=_r2(100 * wins / len(bets)) if bets else None,
        accuracy=_r2(100 * acc) if acc is not None else None,
        classwise_ece=_r2(100 * ece) if ece is not None else None,
        rule=rule_name,
        skipped=dict(sorted(skipped.items())),
    )


def replay_final_bankroll(initial, ledger):
    """Independent ledger check: initial minus stakes plus winning payouts."""
    total = Q(initial)
    for e in ledger:
        if e.side == "none":
            continue
        total -= e.stake
        if e.won:
            total += e.stake * _exact(e.odds)
    return total


LEDGER_COLUMNS = ["game_id", "date", "side", "p", "odds", "stake", "won",
                  "bankroll_after", "skip_reason"]


def _num(x):
    return "" if x is None else repr(float(x))


def write_ledger(ledger, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(LEDGER_COLUMNS)
        for e in ledger:
            w.writerow([e.game_id, e.date, e.side, _num(e.p), _num(e.odds), _num(e.stake),
                        "" if e.won is None else int(e.won), _num(e.bankroll_after),
                        e.skip_reason])


def read_ledger(path):
    """Ledger rows as written; money columns come back as floats."""
    out = []
    with open(path, newline="", encoding="utf-8") as fh:
        for r in csv.DictReader(fh):
            num = lambda k: float(r[k]) if r[k] != "" else None  # noqa: E731
            out.append(LedgerEntry(r["game_id"], r["date"], r["side"], num("p"), num("odds"),
                                   num("stake"), None if r["won"] == "" else r["won"] == "1",
                                   num("bankroll_after"), r["skip_reason"]))
    return out


def write_trajectory(ledger, initial, path):
    """Bankroll after each game, index 0 being the starting bankroll."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["game_index", "bankroll"])
        w.writerow([0, _num(initial)])
        for i, e in enumerate(ledger, start=1):
            w.writerow([i, _num(e.bankroll_after)])


def write_value_bets(ledger, path):
    """Implied vs predicted probability for every placed bet."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["game_id", "side", "implied_prob", "pred_prob", "won"])
        for e in ledger:
            if e.side != "none":
                w.writerow([e.game_id, e.side, repr(1.0 / e.odds), repr(e.p), int(e.won)])
