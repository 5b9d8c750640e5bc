"""CSV ingestion: game records, decimal odds, the game/odds join, standings.

``games.csv`` columns::

    game_id,date,season,home_team,away_team,home_won,home_<stat>...,away_<stat>...

with one ``home_``/``away_`` pair per schema stat. ``odds.csv`` columns::

    game_id,home_odds,away_odds
"""

import csv
import datetime as dt
import math
import re
import warnings
from dataclasses import dataclass, field
from decimal import Decimal, InvalidOperation

from .errors import (
    DuplicateGameId,
    EmptyJoinWarning,
    InvalidRecord,
    MissingColumn,
    OddsNotAboveOne,
    OrphanOddsWarning,
    UnknownSeason,
    UnmatchedGamesWarning,
    UnparseableValue,
)

GAME_COLUMNS = ["game_id", "date", "season", "home_team", "away_team", "home_won"]
ODDS_COLUMNS = ["game_id", "home_odds", "away_odds"]


@dataclass(frozen=True)
class StatSpec:
    """One box-score stat.

    ``kind`` is ``"count"`` or ``"percentage"``; percentages carry a
    ``scale`` of 1 (fractions) or 100 (percent points) bounding their range.
    """

    name: str
    kind: str = "count"
    scale: float = 100.0

    def __post_init__(self):
        if self.kind not in ("count", "percentage"):
            raise ValueError(f"stat {self.name!r}: unknown kind {self.kind!r}")
        if self.kind == "percentage" and self.scale not in (1, 100):
            raise ValueError(f"stat {self.name!r}: percentage scale must be 1 or 100")


class StatSchema(tuple):
    """Ordered collection of :class:`StatSpec`."""

    def __new__(cls, specs):
        specs = [s if isinstance(s, StatSpec) else _spec_from(s) for s in specs]
        names = [s.name for s in specs]
        if len(set(names)) != len(names):
            raise ValueError("duplicate stat names in schema")
        if not specs:
            raise ValueError("empty stat schema")
        return super().__new__(cls, specs)

    @property
    def names(self):
        return [s.name for s in self]

    def to_config(self):
        return [{"name": s.name, "kind": s.kind, "scale": s.scale} for s in self]


def _spec_from(obj):
    if isinstance(obj, str):
        return StatSpec(obj)
    return StatSpec(obj["name"], obj.get("kind", "count"), obj.get("scale", 100.0))


@dataclass(frozen=True)
class GameRecord:
    game_id: str
    date: dt.date
    season: str
    home_team: str
    away_team: str
    home_stats: dict
    away_stats: dict
    home_won: bool

    @property
    def sort_key(self):
        return (self.date, self.game_id)


@dataclass(frozen=True)
class MarketLine:
    game_id: str
    home_odds: float
    away_odds: float


@dataclass(frozen=True)
class MatchedGame:
    game: GameRecord
    line: MarketLine

    @property
    def game_id(self):
        return self.game.game_id

    @property
    def date(self):
        return self.game.date


_SEASON_RE = re.compile(r"^(\d{4})(?:[-/](\d{2}|\d{4}))?$")


def season_window(season):
    """Inclusive date window of a season label.

    ``"2016-17"`` (also ``"2016/2017"``) spans 1 July 2016 to 30 June 2017; a
    bare year ``"2017"`` spans the calendar year.
    """
    m = _SEASON_RE.match(season)
    if not m:
        raise UnknownSeason(f"unrecognised season label {season!r}")
    start = int(m.group(1))
    if m.group(2) is None:
        return dt.date(start, 1, 1), dt.date(start, 12, 31)
    end = m.group(2)
    end_year = int(end) if len(end) == 4 else (start // 100) * 100 + int(end)
    if end_year < start:
        end_year += 100
    if end_year != start + 1:
        raise UnknownSeason(f"season {season!r} must span consecutive years")
    return dt.date(start, 7, 1), dt.date(end_year, 6, 30)


def previous_season(season):
    """Label of the season before ``season``, in the same label style."""
    m = _SEASON_RE.match(season)
    if not m:
        raise UnknownSeason(f"unrecognised season label {season!r}")
    start = int(m.group(1))
    if m.group(2) is None:
        return str(start - 1)
    sep = season[4]
    end = m.group(2)
    if len(end) == 4:
        return f"{start - 1}{sep}{start}"
    return f"{start - 1}{sep}{start % 100:02d}"


def _parse_float(raw, row, column, path):
    try:
        v = float(raw)
    except (TypeError, ValueError):
        raise UnparseableValue(row, column, raw, path) from None
    if not math.isfinite(v):
        raise UnparseableValue(row, column, raw, path)
    return v


def _check_header(header, required, path):
    if header is None:
        raise MissingColumn(required[0], path)
    for col in required:
        if col not in header:
            raise MissingColumn(col, path)


def load_games(path, schema):
    """Read and validate ``games.csv``; records come back sorted by (date, game_id).

    Row numbers in error messages count the header as row 1.
    """
    schema = schema if isinstance(schema, StatSchema) else StatSchema(schema)
    stat_cols = [f"{side}_{s.name}" for side in ("home", "away") for s in schema]
    records = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, GAME_COLUMNS + stat_cols, path)
        for rownum, raw in enumerate(reader, start=2):
            gid = raw["game_id"].strip()
            if not gid:
                raise UnparseableValue(rownum, "game_id", raw["game_id"], path)
            if gid in seen:
                raise DuplicateGameId(gid)
            seen.add(gid)
            try:
                date = dt.date.fromisoformat(raw["date"].strip())
            except ValueError:
                raise UnparseableValue(rownum, "date", raw["date"], path) from None
            won = raw["home_won"].strip()
            if won not in ("0", "1"):
                raise UnparseableValue(rownum, "home_won", raw["home_won"], path)
            season = raw["season"].strip()
            lo, hi = season_window(season)
            if not lo <= date <= hi:
                raise InvalidRecord(f"row {rownum}: date {date} outside season {season}")
            home, away = raw["home_team"].strip(), raw["away_team"].strip()
            if not home or not away or home == away:
                raise InvalidRecord(f"row {rownum}: invalid teams {home!r} vs {away!r}")
            stats = {}
            for side in ("home", "away"):
                vec = {}
                for s in schema:
                    col = f"{side}_{s.name}"
                    v = _parse_float(raw[col], rownum, col, path)
                    if s.kind == "percentage" and not 0.0 <= v <= s.scale:
                        raise InvalidRecord(
                            f"row {rownum}, column {col!r}: {v} outside [0, {s.scale:g}]")
                    vec[s.name] = v
                stats[side] = vec
            records.append(GameRecord(gid, date, season, home, away,
                                      stats["home"], stats["away"], won == "1"))
    records.sort(key=lambda g: g.sort_key)
    return records


def _parse_odds(raw, row, column, path):
    # Decimal first so "1.00" and "1" are both caught exactly at the boundary
    try:
        d = Decimal(raw.strip())
    except (InvalidOperation, AttributeError):
        raise UnparseableValue(row, column, raw, path) from None
    if not d.is_finite():
        raise UnparseableValue(row, column, raw, path)
    return float(d)


def load_odds(path):
    """Read ``odds.csv``, preserving file order."""
    lines = []
    seen = set()
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        _check_header(reader.fieldnames, ODDS_COLUMNS, path)
        for rownum, raw in enumerate(reader, start=2):
            gid = raw["game_id"].strip()
            if gid in seen:
                raise DuplicateGameId(gid)
            seen.add(gid)
            ho = _parse_odds(raw["home_odds"], rownum, "home_odds", path)
            ao = _parse_odds(raw["away_odds"], rownum, "away_odds", path)
            for o in (ho, ao):
                if not o > 1.0:
                    raise OddsNotAboveOne(o, gid)
            lines.append(MarketLine(gid, ho, ao))
    return lines


@dataclass
class JoinReport:
    matched: int = 0
    unmatched_games: list = field(default_factory=list)
    orphan_lines: list = field(default_factory=list)

    def to_dict(self):
        return {
            "matched": self.matched,
            "unmatched_games": len(self.unmatched_games),
            "orphan_lines": len(self.orphan_lines),
            "unmatched_game_ids": list(self.unmatched_games),
            "orphan_line_ids": list(self.orphan_lines),
        }


def join_games_odds(games, odds, report=None):
    """Inner join on ``game_id``; output sorted by (date, game_id).

    Unmatched games and orphan lines are not errors: they are counted in
    ``report`` (a :class:`JoinReport`, if given) and surfaced as warnings.
    """
    report = report if report is not None else JoinReport()
    by_id = {line.game_id: line for line in odds}
    game_ids = {g.game_id for g in games}
    out = [MatchedGame(g, by_id[g.game_id]) for g in games if g.game_id in by_id]
    out.sort(key=lambda m: m.game.sort_key)
    report.matched = len(out)
    report.unmatched_games = sorted(g.game_id for g in games if g.game_id not in by_id)
    report.orphan_lines = sorted(gid for gid in by_id if gid not in game_ids)
    if not out:
        warnings.warn("no game matched an odds line", EmptyJoinWarning, stacklevel=2)
    else:
        if report.unmatched_games:
            warnings.warn(f"{len(report.unmatched_games)} game(s) without odds",
                          UnmatchedGamesWarning, stacklevel=2)
        if report.orphan_lines:
            warnings.warn(f"{len(report.orphan_lines)} odds line(s) without a game",
                          OrphanOddsWarning, stacklevel=2)
    return out


def season_standings(games, season):
    """Winning percentage per team over every game of ``season``."""
    wins = {}
    played = {}
    found = False
    for g in games:
        if g.season != season:
            continue
        found = True
        winner = g.home_team if g.home_won else g.away_team
        for team in (g.home_team, g.away_team):
            played[team] = played.get(team, 0) + 1
            wins.setdefault(team, 0)
        wins[winner] += 1
    if not found:
        raise UnknownSeason(f"no games for season {season!r}")
    return {team: wins[team] / played[team] for team in sorted(played)}


def all_standings(games):
    """Standings for every season present in ``games``."""
    seasons = sorted({g.season for g in games})
    return {s: season_standings(games, s) for s in seasons}


MATCHED_COLUMNS_BASE = GAME_COLUMNS + ["home_odds", "away_odds"]


def _fmt(v):
    return repr(float(v))


def write_matched_games(matched, schema, path):
    schema = schema if isinstance(schema, StatSchema) else StatSchema(schema)
    stat_cols = [f"{side}_{n}" for side in ("home", "away") for n in schema.names]
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(MATCHED_COLUMNS_BASE + stat_cols)
        for m in matched:
            g = m.game
            w.writerow([g.game_id, g.date.isoformat(), g.season, g.home_team, g.away_team,
                        int(g.home_won), _fmt(m.line.home_odds), _fmt(m.line.away_odds)]
                       + [_fmt(g.home_stats[n]) for n in schema.names]
                       + [_fmt(g.away_stats[n]) for n in schema.names])


def read_matched_games(path, schema):
    """Inverse of :func:`write_matched_games`."""
    games = load_games(path, schema)
    lines = {ln.game_id: ln for ln in load_odds(path)}
    return [MatchedGame(g, lines[g.game_id]) for g in games]
