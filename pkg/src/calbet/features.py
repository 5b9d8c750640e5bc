"""Feature construction for game-outcome models.

Each game gets one feature per box-score stat: the home team's season-to-date
average of (own stat - opponent stat) minus the same average for the away
team. A final feature holds the home-minus-away difference of last season's
winning percentage. Games update the rolling state only after their own
features are read, so no row sees its own result.
"""

import csv
import math
import warnings
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .dataio import previous_season
from .errors import (
    AllFeaturesShiftedWarning,
    ChronologyViolation,
    MissingPreviousSeason,
    NoPriorGames,
    SampleTooSmall,
    SchemaMismatch,
    SeasonMismatch,
    UnknownFeature,
    ZeroVarianceFeature,
)

PREV_SEASON_FEATURE = "Previous Season Winning Percentage"
MIN_PRIOR_GAMES = 10


@dataclass(frozen=True)
class TeamRollingState:
    team: str
    season: str
    games_played: int = 0
    cumulative_diff: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, team, season, stats):
        return cls(team, season, 0, {s: 0.0 for s in stats})

    def average(self, stat):
        if self.games_played < 1:
            raise NoPriorGames(f"{self.team} has no games in {self.season}")
        return self.cumulative_diff[stat] / self.games_played


def update_rolling(state, own_stats, opp_stats, season=None):
    """Fold one game into a team's running out-performance totals."""
    if season is not None and season != state.season:
        raise SeasonMismatch(f"game from {season} applied to {state.season} state")
    keys = set(state.cumulative_diff)
    if set(own_stats) != keys or set(opp_stats) != keys:
        raise SchemaMismatch("stat vectors do not match the rolling state's schema")
    diff = {s: state.cumulative_diff[s] + (own_stats[s] - opp_stats[s])
            for s in state.cumulative_diff}
    return replace(state, games_played=state.games_played + 1, cumulative_diff=diff)


def outperformance_features(home_state, away_state, stats=None):
    stats = list(stats if stats is not None else home_state.cumulative_diff)
    return [home_state.average(s) - away_state.average(s) for s in stats]


def prev_season_feature(prev_standings, home, away):
    try:
        return prev_standings[home] - prev_standings[away]
    except (KeyError, TypeError):
        raise MissingPreviousSeason(f"no previous-season record for {home} or {away}") from None


@dataclass(frozen=True)
class FeatureRow:
    """One game's features. ``x`` is ``None`` when features are undefined."""

    game_id: str
    x: tuple
    y: bool
    eligible: bool


def feature_names(stats):
    return list(stats) + [PREV_SEASON_FEATURE]


def build_feature_matrix(games, standings, stats=None, min_prior_games=MIN_PRIOR_GAMES):
    """One chronological pass producing a :class:`FeatureRow` per game.

    Args:
        games: :class:`~calbet.dataio.GameRecord` list sorted by (date, game_id).
        standings: ``{season: {team: win_pct}}``; a game's previous-season
            feature reads the entry for the season before its own.
        stats: stat names to use; defaults to the first game's stat keys.
        min_prior_games: both teams need this many earlier games in the
            season for the row to be eligible for training or betting.
    """
    if not games:
        return []
    stats = list(stats if stats is not None else games[0].home_stats)
    states = {}
    rows = []
    last = None
    for g in games:
        if last is not None and g.sort_key < last:
            raise ChronologyViolation(f"game {g.game_id} is out of order")
        last = g.sort_key
        hs = states.get((g.home_team, g.season)) or TeamRollingState.fresh(g.home_team, g.season, stats)
        as_ = states.get((g.away_team, g.season)) or TeamRollingState.fresh(g.away_team, g.season, stats)

        prev = standings.get(previous_season(g.season))
        try:
            prev_x = prev_season_feature(prev, g.home_team, g.away_team)
        except MissingPreviousSeason:
            prev_x = None
        x = None
        if prev_x is not None and hs.games_played >= 1 and as_.games_played >= 1:
            x = tuple(outperformance_features(hs, as_, stats)) + (prev_x,)
        eligible = (x is not None and hs.games_played >= min_prior_games
                    and as_.games_played >= min_prior_games)
        rows.append(FeatureRow(g.game_id, x, g.home_won, eligible))

        states[(g.home_team, g.season)] = update_rolling(hs, g.home_stats, g.away_stats, g.season)
        states[(g.away_team, g.season)] = update_rolling(as_, g.away_stats, g.home_stats, g.season)
    return rows


def rows_to_arrays(rows, columns=None, names=None):
    """Stack eligible-row features into ``(X, y)``.

    ``columns`` selects features by name out of ``names``.
    """
    X = np.array([r.x for r in rows], dtype=float).reshape(len(rows), -1)
    y = np.array([r.y for r in rows], dtype=int)
    if columns is not None:
        idx = [names.index(c) for c in columns]
        X = X[:, idx]
    return X, y


def write_feature_matrix(rows, names, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["game_id", "eligible", "y"] + list(names))
        for r in rows:
            xs = [""] * len(names) if r.x is None else [repr(float(v)) for v in r.x]
            w.writerow([r.game_id, int(r.eligible), int(r.y)] + xs)


def read_feature_matrix(path):
    """Returns ``(rows, names)``."""
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        names = header[3:]
        rows = []
        for rec in reader:
            vals = rec[3:]
            x = None if all(v == "" for v in vals) else tuple(float(v) for v in vals)
            rows.append(FeatureRow(rec[0], x, rec[2] == "1", rec[1] == "1"))
    return rows, names


# -- standardisation -----------------------------------------------------------

@dataclass(frozen=True)
class StandardizationParams:
    names: tuple
    mean: tuple
    std: tuple

    def to_dict(self):
        return {n: {"mean": m, "std": s} for n, m, s in zip(self.names, self.mean, self.std)}

    @classmethod
    def from_dict(cls, d):
        names = tuple(d)
        return cls(names, tuple(d[n]["mean"] for n in names), tuple(d[n]["std"] for n in names))


class Standardizer(TransformerMixin, BaseEstimator):
    """Zero-mean, unit-variance scaling using the population standard deviation.

    Unlike sklearn's ``StandardScaler`` a constant column is an error, not a
    silently unscaled feature.
    """

    def __init__(self, feature_names=None):
        self.feature_names = feature_names

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if X.shape[0] < 2:
            raise ValueError("need at least 2 rows to standardise")
        names = self._names(X.shape[1])
        mean = X.mean(axis=0)
        std = X.std(axis=0)
        for j, s in enumerate(std):
            if not s > 1e-12 * max(1.0, abs(mean[j])):
                raise ZeroVarianceFeature(names[j])
        self.mean_ = mean
        self.scale_ = std
        self.n_features_in_ = X.shape[1]
        return self

    def _names(self, d):
        if self.feature_names is None:
            return [f"x{j}" for j in range(d)]
        if len(self.feature_names) != d:
            raise UnknownFeature(f"{d} columns but {len(self.feature_names)} feature names")
        return list(self.feature_names)

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise UnknownFeature(f"expected {self.n_features_in_} features, got {X.shape[1]}")
        return (X - self.mean_) / self.scale_

    def inverse_transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=float)
        return X * self.scale_ + self.mean_

    @property
    def params_(self):
        check_is_fitted(self)
        return StandardizationParams(tuple(self._names(self.n_features_in_)),
                                     tuple(float(v) for v in self.mean_),
                                     tuple(float(v) for v in self.scale_))

    @classmethod
    def from_params(cls, params):
        obj = cls(feature_names=list(params.names))
        obj.mean_ = np.array(params.mean, dtype=float)
        obj.scale_ = np.array(params.std, dtype=float)
        obj.n_features_in_ = len(params.names)
        return obj


def fit_standardizer(X, names):
    return Standardizer(feature_names=list(names)).fit(X).params_


def apply_standardizer(X, names, params):
    """Scale the columns ``names`` of ``X`` using ``params``."""
    missing = [n for n in names if n not in params.names]
    if missing:
        raise UnknownFeature(f"no standardisation parameters for {missing}")
    idx = [params.names.index(n) for n in names]
    mean = np.array(params.mean)[idx]
    std = np.array(params.std)[idx]
    return (np.asarray(X, dtype=float) - mean) / std


# -- covariate shift -----------------------------------------------------------

@dataclass(frozen=True)
class ShiftTest:
    feature: str
    D: float
    critical: float
    decision: str  # "keep" | "drop"


def ks_critical_coefficient(alpha):
    """Asymptotic two-sample coefficient c(alpha); c(0.01) = 1.628."""
    return math.sqrt(-0.5 * math.log(alpha / 2.0))


def ks_statistic(a, b):
    """Largest gap between the two empirical CDFs over the pooled sample."""
    a = np.sort(np.asarray(a, dtype=float))
    b = np.sort(np.asarray(b, dtype=float))
    pooled = np.concatenate([a, b])
    fa = np.searchsorted(a, pooled, side="right") / a.size
    fb = np.searchsorted(b, pooled, side="right") / b.size
    return float(np.max(np.abs(fa - fb)))


def ks_two_sample(a, b, alpha=0.01, feature=""):
    n, m = len(a), len(b)
    if n < 20 or m < 20:
        raise SampleTooSmall(f"KS test needs >= 20 values per sample, got {n} and {m}")
    D = ks_statistic(a, b)
    crit = ks_critical_coefficient(alpha) * math.sqrt((n + m) / (n * m))
    return ShiftTest(feature, D, crit, "drop" if D > crit else "keep")


def shift_screen(train_X, val_X, names, alpha=0.01):
    """Test each feature independently; returns ``(kept_names, results)``."""
    train_X = np.asarray(train_X, dtype=float)
    val_X = np.asarray(val_X, dtype=float)
    if train_X.shape[0] == 0 or val_X.shape[0] == 0:
        raise SampleTooSmall("shift screen needs non-empty samples")
    results = [ks_two_sample(train_X[:, j], val_X[:, j], alpha, name)
               for j, name in enumerate(names)]
    kept = [r.feature for r in results if r.decision == "keep"]
    if not kept:
        warnings.warn("every feature failed the covariate-shift screen",
                      AllFeaturesShiftedWarning, stacklevel=2)
    return kept, results


class ShiftScreen(TransformerMixin, BaseEstimator):
    """Drop columns whose distribution differs between two samples.

    ``fit(X, X_other)`` runs a two-sample KS test per column;
    ``transform`` keeps only the columns that passed.
    """

    def __init__(self, alpha=0.01):
        self.alpha = alpha

    def fit(self, X, X_other):
        X = check_array(X, dtype=float)
        X_other = check_array(X_other, dtype=float)
        names = [str(j) for j in range(X.shape[1])]
        _, self.results_ = shift_screen(X, X_other, names, self.alpha)
        self.support_ = np.array([r.decision == "keep" for r in self.results_])
        self.n_features_in_ = X.shape[1]
        return self

    def get_support(self, indices=False):
        check_is_fitted(self)
        return np.flatnonzero(self.support_) if indices else self.support_

    def transform(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=float)
        return X[:, self.support_]


SHIFT_COLUMNS = ["feature", "D", "critical", "decision"]


def write_shift_report(results, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(SHIFT_COLUMNS)
        for r in results:
            w.writerow([r.feature, repr(r.D), repr(r.critical), r.decision])


def read_shift_report(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return [ShiftTest(r["feature"], float(r["D"]), float(r["critical"]), r["decision"])
                for r in csv.DictReader(fh)]
