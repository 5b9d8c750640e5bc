"""Seeded synthetic mini-league: games, odds and a ready-to-run config.

Team strength drifts from season to season; box scores and results both
depend on it, and the bookmaker prices games from a noisy view of the true
win probability plus a margin. Small enough to run the whole pipeline in
seconds, structured like the real thing.
"""

import csv
import datetime as dt
import json
from pathlib import Path

import numpy as np

TEAMS = ("ATL", "BOS", "CHI", "DEN", "LAL", "MIA")
SEASONS = ("2016-17", "2017-18", "2018-19")

# name, kind, base, strength effect, team style sd, result effect, noise sd
STATS = (
    ("REB", "count", 44.0, 1.0, 2.5, 2.0, 4.0),
    ("AST", "count", 24.0, 0.4, 2.0, 1.5, 3.0),
    ("TOV", "count", 14.0, -0.3, 1.2, -0.6, 2.5),
    ("3P", "count", 11.0, 0.3, 2.0, 1.0, 3.0),
    ("STL", "count", 7.5, 0.0, 1.0, 0.2, 2.0),
    ("FG%", "percentage", 46.0, 1.2, 1.0, 1.5, 3.0),
)
# near-copy of FG% so the redundancy filter has something to remove
EFG_NOISE = 0.6

MARGIN = 0.045


def _schedule(rng, season, meetings):
    start = int(season[:4])
    pairs = [(h, a) for i, h in enumerate(TEAMS) for a in TEAMS[i + 1:]]
    fixtures = []
    for h, a in pairs:
        for k in range(meetings):
            fixtures.append((h, a) if k % 2 == 0 else (a, h))
    order = rng.permutation(len(fixtures))
    first = dt.date(start, 10, 20)
    span = (dt.date(start + 1, 4, 10) - first).days
    days = np.sort(rng.integers(0, span + 1, size=len(fixtures)))
    return [(fixtures[i], first + dt.timedelta(days=int(d))) for i, d in zip(order, days)]


def make_league(out_dir, seed=2019, meetings=24, teams=TEAMS, seasons=SEASONS):
    """Write ``games.csv``, ``odds.csv`` and ``config.json`` into ``out_dir``."""
    if tuple(teams) != TEAMS or tuple(seasons) != SEASONS:
        raise ValueError("custom teams/seasons are not supported")
    rng = np.random.default_rng(seed)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    stat_names = [s[0] for s in STATS] + ["eFG%"]
    strength = dict(zip(TEAMS, rng.normal(0.0, 1.2, len(TEAMS))))
    games, odds = [], []
    for season in SEASONS:
        strength = {t: 0.8 * s + rng.normal(0.0, 0.5) for t, s in strength.items()}
        style = {t: {st[0]: rng.normal(0.0, st[4]) for st in STATS} for t in TEAMS}
        for idx, ((home, away), date) in enumerate(_schedule(rng, season, meetings)):
            gid = f"{season[:4]}{idx:05d}"
            logit = 1.3 * (strength[home] - strength[away]) + 0.25
            p_true = 1.0 / (1.0 + np.exp(-logit))
            home_won = bool(rng.random() < p_true)
            box = {}
            for side, team, sign in (("home", home, 1.0), ("away", away, -1.0)):
                res = sign if home_won else -sign
                vals = {}
                for name, kind, base, s_eff, _, r_eff, sd in STATS:
                    v = (base + s_eff * strength[team] + style[team][name] + r_eff * res
                         + rng.normal(0.0, sd))
                    vals[name] = round(float(np.clip(v, 0.0, 100.0)), 1) if kind == "percentage" \
                        else float(max(0, round(v)))
                vals["eFG%"] = round(float(np.clip(vals["FG%"] + 3.0 + rng.normal(0.0, EFG_NOISE),
                                                   0.0, 100.0)), 1)
                box[side] = vals
            games.append([gid, date.isoformat(), season, home, away, int(home_won)]
                         + [box["home"][n] for n in stat_names]
                         + [box["away"][n] for n in stat_names])
            p_book = 1.0 / (1.0 + np.exp(-(logit + rng.normal(0.0, 0.3))))
            if idx % 97 == 96:
                continue  # a few games the odds feed missed
            ho = max(round(1.0 / (p_book * (1 + MARGIN)), 2), 1.01)
            ao = max(round(1.0 / ((1 - p_book) * (1 + MARGIN)), 2), 1.01)
            odds.append([gid, f"{ho:.2f}", f"{ao:.2f}"])

    games.sort(key=lambda r: (r[1], r[0]))
    with open(out / "games.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["game_id", "date", "season", "home_team", "away_team", "home_won"]
                   + [f"home_{n}" for n in stat_names] + [f"away_{n}" for n in stat_names])
        w.writerows(games)
    with open(out / "odds.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["game_id", "home_odds", "away_odds"])
        w.writerows(odds)

    stats_cfg = [{"name": n, "kind": k} for n, k, *_ in STATS] + [{"name": "eFG%", "kind": "percentage"}]
    for s in stats_cfg:
        if s["kind"] == "percentage":
            s["scale"] = 100
    config = {
        "paths": {"games": "games.csv", "odds": "odds.csv", "out": "out"},
        "stats": stats_cfg,
        "splits": {
            "initial_train": ["2017-18"],
            "validation": {"season": "2018-19", "start": "2018-07-01", "end": "2018-12-31"},
            "test": {"season": "2018-19", "start": "2019-01-01", "end": "2019-02-15"},
            "simulation": {"season": "2018-19", "start": "2019-02-16", "end": "2019-06-30"},
        },
        "branches": ["accuracy", "calibration"],
        "learners": ["LR"],
        "grids": {"LR": {"params": {"l2_lambda": [0.001, 0.01, 0.1, 1, 10],
                                    "learning_rate": [0.1, 0.01],
                                    "max_iters": [5000], "tolerance": [1e-6]},
                         "seeds": [0, 1, 2]}},
        "rules": ["fixed", "kelly8"],
        "bankroll": 10000,
        "bins": 20,
        "min_occupancy": 0.8,
        "ks_alpha": 0.01,
        "corr_threshold": 0.7,
        "min_prior_games": 10,
    }
    (out / "config.json").write_text(json.dumps(config, indent=2) + "\n", encoding="utf-8")
    return out / "config.json"
