import csv
import datetime as dt

import numpy as np
import pytest

from calbet.dataio import GameRecord, MarketLine, MatchedGame


def write_csv(path, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        w.writerows(rows)
    return path


def game(gid, day, home="A", away="B", home_won=True, season="2018-19",
         home_stats=None, away_stats=None):
    if isinstance(day, int):
        day = dt.date(2018, 11, 1) + dt.timedelta(days=day)
    return GameRecord(gid, day, season, home, away,
                      home_stats or {"REB": 40.0}, away_stats or {"REB": 40.0}, home_won)


def matched(gid, day, home_odds, away_odds, home_won):
    return MatchedGame(game(gid, day, home_won=home_won), MarketLine(gid, home_odds, away_odds))


@pytest.fixture
def schema():
    return [{"name": "REB"}, {"name": "AST"}, {"name": "FG%", "kind": "percentage", "scale": 100}]


@pytest.fixture
def games_csv(tmp_path):
    header = ["game_id", "date", "season", "home_team", "away_team", "home_won",
              "home_REB", "home_AST", "home_FG%", "away_REB", "away_AST", "away_FG%"]
    rows = [
        ["g3", "2018-11-03", "2018-19", "LAL", "BOS", "0", "41", "22", "44.1", "47", "25", "48.0"],
        ["g1", "2018-11-01", "2018-19", "BOS", "CHI", "1", "50", "27", "49.5", "40", "20", "41.2"],
        ["g2", "2018-11-01", "2018-19", "CHI", "LAL", "1", "45", "24", "46.0", "43", "21", "45.5"],
    ]
    return write_csv(tmp_path / "games.csv", header, rows), header, rows


def random_season(rng, n=200, margin=0.05, noise=0.1, fair=False):
    """Synthetic season: true home probabilities, margined odds, noisy forecasts.

    Returns ``(games, forecasts, truth)``.
    """
    truth = rng.uniform(0.2, 0.8, n)
    m = 0.0 if fair else margin
    home_odds = 1.0 / (truth * (1 + m))
    away_odds = 1.0 / ((1 - truth) * (1 + m))
    won = rng.random(n) < truth
    fc = np.clip(truth + rng.normal(0, noise, n), 0.01, 0.99) if noise else truth
    games = [matched(f"{i:04d}", i // 8, float(home_odds[i]), float(away_odds[i]), bool(won[i]))
             for i in range(n)]
    forecasts = {g.game_id: float(fc[i]) for i, g in enumerate(games)}
    return games, forecasts, truth


def pytest_terminal_summary(terminalreporter):
    results = {}
    for outcome in ("passed", "failed", "error"):
        for rep in terminalreporter.stats.get(outcome, []):
            nodeid = getattr(rep, "nodeid", "")
            if "test_acceptance.py::test_criterion_" not in nodeid:
                continue
            name = nodeid.split("::test_criterion_")[1]
            prev = results.get(name)
            results[name] = "FAIL" if outcome != "passed" or prev == "FAIL" else "PASS"
    if not results:
        return
    terminalreporter.section("acceptance criteria")
    for name in sorted(results):
        num, _, label = name.partition("_")
        terminalreporter.write_line(f"criterion {num} {label.replace('_', ' ')}: {results[name]}")
