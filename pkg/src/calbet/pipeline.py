"""End-to-end orchestration: ingest, features, selection, backtest, report.

Each stage reads the artifacts of the stage before it from the output
directory and writes its own, so stages can be rerun independently. All
artifacts are deterministic functions of the inputs and the config.
"""

import csv
import json
import logging
import os
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path

import numpy as np
from sklearn.base import clone

from . import backtest as bt
from .calibration import ACCURACY, CLASSWISE_ECE, MetricSpec, aggregate_bins, reliability_table, write_reliability_csv
from .dataio import StatSchema, all_standings, join_games_odds, JoinReport, load_games, load_odds, read_matched_games, write_matched_games
from .errors import ConfigError, DataError, InvariantViolation
from .features import (
    Standardizer,
    build_feature_matrix,
    feature_names,
    read_feature_matrix,
    read_shift_report,
    rows_to_arrays,
    shift_screen,
    write_feature_matrix,
    write_shift_report,
)
from .learners import make_learner, positive_proba
from .selection import DEFAULT_LR_GRID, HyperGrid, SelectionOutcome, correlation_filter, grid_hpo, select_model, sfs

log = logging.getLogger(__name__)

SPLIT_ORDER = ("initial_train", "validation", "test", "simulation")
BRANCHES = {"accuracy": ACCURACY, "calibration": CLASSWISE_ECE}

# fixed artifact names
MATCHED = "matched_games.csv"
JOIN_REPORT = "join_report.json"
FEATURES = "features.csv"
SHIFT_REPORT = "shift_report.csv"
SPLITS = "splits.csv"
STANDARDIZATION = "standardization.json"


@dataclass
class PipelineConfig:
    """Run configuration, normally loaded from JSON with :func:`load_config`."""

    games: str
    odds: str
    out: str
    stats: StatSchema
    splits: dict
    branches: list = field(default_factory=lambda: ["accuracy", "calibration"])
    learners: list = field(default_factory=lambda: ["LR"])
    grids: dict = field(default_factory=lambda: {"LR": DEFAULT_LR_GRID})
    sfs_learner: str = "LR"
    sfs_params: dict = field(default_factory=lambda: {"l2_lambda": 0.01, "learning_rate": 0.1})
    rules: list = field(default_factory=lambda: ["fixed", "kelly8"])
    bankroll: float = bt.DEFAULT_BANKROLL
    bins: int = 20
    min_occupancy: float = 0.8
    ks_alpha: float = 0.01
    corr_threshold: float = 0.7
    min_prior_games: int = 10

    def __post_init__(self):
        missing = [k for k in SPLIT_ORDER if k not in self.splits]
        if missing:
            raise ConfigError(f"splits missing {missing}")
        for b in self.branches:
            if b not in BRANCHES:
                raise ConfigError(f"unknown branch {b!r}; use accuracy or calibration")
        if self.bins < 2:
            raise ConfigError("bins must be >= 2")
        for r in self.rules:
            bt.parse_rule(r)

    def spec(self, branch):
        return MetricSpec(BRANCHES[branch], self.bins, self.min_occupancy)

    @property
    def out_dir(self):
        return Path(self.out)


def _grid_from(obj):
    if isinstance(obj, HyperGrid):
        return obj
    return HyperGrid(params={k: list(v) for k, v in obj["params"].items()},
                     seeds=tuple(obj.get("seeds", (0,))))


def load_config(path, **overrides):
    """Read a JSON config; relative paths resolve against its directory.

    Keyword overrides (``out``, ``bankroll``, ``rules``) replace config values
    when not ``None``.
    """
    path = Path(path)
    try:
        raw = json.loads(path.read_text(encoding="utf-8"))
    except FileNotFoundError:
        raise ConfigError(f"config file not found: {path}") from None
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{path}: invalid JSON ({exc})") from None
    base = path.parent
    paths = raw.get("paths", {})

    def resolve(p):
        return str(p if os.path.isabs(p) else base / p)

    try:
        kwargs = dict(
            games=resolve(paths["games"]),
            odds=resolve(paths["odds"]),
            out=resolve(paths.get("out", "out")),
            stats=StatSchema(raw["stats"]),
            splits=raw["splits"],
        )
    except (KeyError, ValueError) as exc:
        raise ConfigError(f"{path}: bad or missing setting {exc}") from None
    for key in ("branches", "learners", "sfs_learner", "sfs_params", "rules", "bankroll",
                "bins", "min_occupancy", "ks_alpha", "corr_threshold", "min_prior_games"):
        if key in raw:
            kwargs[key] = raw[key]
    if "grids" in raw:
        kwargs["grids"] = {name: _grid_from(g) for name, g in raw["grids"].items()}
    for key, val in overrides.items():
        if val is not None:
            kwargs[key] = val
    return PipelineConfig(**kwargs)


# -- splits -------------------------------------------------------------------

def _split_entries(value):
    if isinstance(value, (str, dict)):
        return [value]
    return list(value)


def _in_entry(game, entry):
    if isinstance(entry, str):
        return game.season == entry
    if game.season != entry["season"]:
        return False
    d = game.date.isoformat()
    return entry.get("start", "0000-00-00") <= d <= entry.get("end", "9999-99-99")


def assign_splits(games, splits):
    """Map ``game_id -> split name`` and check splits are disjoint and ordered.

    A split entry is a season label, or ``{"season", "start", "end"}`` with
    inclusive ISO dates to use part of a season.
    """
    assignment = {}
    bounds = {}
    for name in SPLIT_ORDER:
        entries = _split_entries(splits[name])
        members = [g for g in games if any(_in_entry(g, e) for e in entries)]
        if not members:
            raise ConfigError(f"split {name!r} matches no games")
        for g in members:
            if g.game_id in assignment:
                raise ConfigError(f"game {g.game_id} falls in both {assignment[g.game_id]!r} and {name!r}")
            assignment[g.game_id] = name
        bounds[name] = (min(g.sort_key for g in members), max(g.sort_key for g in members))
    for a, b in zip(SPLIT_ORDER, SPLIT_ORDER[1:]):
        if not bounds[a][1] < bounds[b][0]:
            raise ConfigError(f"split {a!r} must end before {b!r} begins")
    return assignment


def write_splits(assignment, games, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["game_id", "split"])
        for g in games:
            if g.game_id in assignment:
                w.writerow([g.game_id, assignment[g.game_id]])


def read_splits(path):
    with open(path, newline="", encoding="utf-8") as fh:
        return {r["game_id"]: r["split"] for r in csv.DictReader(fh)}


def training_spans(stage):
    """Splits a model is trained on before being scored on ``stage``."""
    i = SPLIT_ORDER.index(stage)
    return SPLIT_ORDER[:i]


# -- stage helpers ---------------------------------------------------------------

def _need(path, stage):
    if not Path(path).exists():
        raise ConfigError(f"missing {path}; run the `{stage}` stage first")
    return path


def _write_json(obj, path):
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _load_inputs(cfg):
    for p in (cfg.games, cfg.odds):
        if not Path(p).exists():
            raise ConfigError(f"input file not found: {p}")
    return load_games(cfg.games, cfg.stats), load_odds(cfg.odds)


def run_ingest(cfg):
    games, odds = _load_inputs(cfg)
    report = JoinReport()
    matched = join_games_odds(games, odds, report)
    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_matched_games(matched, cfg.stats, cfg.out_dir / MATCHED)
    _write_json(report.to_dict(), cfg.out_dir / JOIN_REPORT)
    return matched, report


@dataclass
class FeatureData:
    rows: list
    names: list
    kept: list
    splits: dict

    def arrays(self, split_names, columns=None):
        """Eligible ``(X, y)`` for the union of ``split_names``, raw scale."""
        chosen = [r for r in self.rows
                  if r.eligible and self.splits.get(r.game_id) in split_names]
        if not chosen:
            raise DataError(f"no eligible rows in splits {list(split_names)}")
        return rows_to_arrays(chosen, columns or self.kept, self.names)

    def stage_arrays(self, stage, columns):
        """Standardised train/eval arrays for scoring on ``stage``.

        The scaler is fit on the training spans only, so the evaluation rows
        are scaled by the distribution of everything before them.
        """
        X_tr, y_tr = self.arrays(training_spans(stage), columns)
        X_ev, y_ev = self.arrays((stage,), columns)
        scaler = Standardizer(feature_names=list(columns)).fit(X_tr)
        return (scaler.transform(X_tr), y_tr), (scaler.transform(X_ev), y_ev), scaler


def run_features(cfg):
    games, _ = _load_inputs(cfg)
    assignment = assign_splits(games, cfg.splits)
    stats = cfg.stats.names
    rows = build_feature_matrix(games, all_standings(games), stats, cfg.min_prior_games)
    names = feature_names(stats)
    fd = FeatureData(rows, names, names, assignment)
    X_tr, _ = fd.arrays(("initial_train",), names)
    X_va, _ = fd.arrays(("validation",), names)
    kept, results = shift_screen(X_tr, X_va, names, cfg.ks_alpha)
    fd.kept = kept

    cfg.out_dir.mkdir(parents=True, exist_ok=True)
    write_feature_matrix(rows, names, cfg.out_dir / FEATURES)
    write_shift_report(results, cfg.out_dir / SHIFT_REPORT)
    write_splits(assignment, games, cfg.out_dir / SPLITS)
    params = {}
    if kept:
        for stage in SPLIT_ORDER[1:]:
            _, _, scaler = fd.stage_arrays(stage, kept)
            params[stage] = scaler.params_.to_dict()
    _write_json(params, cfg.out_dir / STANDARDIZATION)
    return fd, results


def load_feature_data(cfg):
    out = cfg.out_dir
    rows, names = read_feature_matrix(_need(out / FEATURES, "features"))
    results = read_shift_report(_need(out / SHIFT_REPORT, "features"))
    splits = read_splits(_need(out / SPLITS, "features"))
    kept = [r.feature for r in results if r.decision == "keep"]
    if not kept:
        raise DataError("no features survived the covariate-shift screen")
    return FeatureData(rows, names, kept, splits)


def _learner(cfg, name, params=None):
    model = make_learner(name)
    return model.set_params(**params) if params else model


def run_branch(cfg, fd, branch, subset_a):
    """Forward selection, grid search and test-set model choice for one branch."""
    spec = cfg.spec(branch)
    train, val, _ = fd.stage_arrays("validation", subset_a)
    sfs_model = _learner(cfg, cfg.sfs_learner, cfg.sfs_params)
    sres = sfs(sfs_model, spec, subset_a, train, val, names=subset_a)
    subset = sres.subset

    train, val, _ = fd.stage_arrays("validation", subset)
    ext, test, _ = fd.stage_arrays("test", subset)
    tuned = {}
    test_scores = {}
    for name in cfg.learners:
        grid = cfg.grids.get(name)
        if grid is None:
            raise ConfigError(f"no hyperparameter grid for learner {name!r}")
        g = grid_hpo(make_learner(name), grid, spec, train, val)
        model = clone(make_learner(name)).set_params(**g.params).fit(*ext)
        tuned[name] = g
        test_scores[name] = spec.score(positive_proba(model, test[0]), test[1])
    winner = select_model(test_scores, spec)
    outcome = SelectionOutcome(
        branch=branch,
        learner=winner,
        features=list(subset),
        hyper=dict(tuned[winner].params),
        val_score=float(tuned[winner].score),
        test_score=float(test_scores[winner]),
        evaluations_count=sres.n_evaluations,
    )
    trace = {
        "branch": branch,
        "subset_a": list(subset_a),
        "sfs_path": [{"features": f, "score": s} for f, s in sres.path],
        "grid": {n: g.table for n, g in tuned.items()},
        "test_scores": test_scores,
    }
    return outcome, trace


def run_select(cfg):
    fd = load_feature_data(cfg)
    X, y = fd.arrays(("initial_train",), fd.kept)
    subset_a = correlation_filter(X, y, fd.kept, cfg.corr_threshold)
    outcomes = {}
    for branch in cfg.branches:
        outcome, trace = run_branch(cfg, fd, branch, subset_a)
        (cfg.out_dir / f"selection_{branch}.json").write_text(outcome.to_json(), encoding="utf-8")
        _write_json(trace, cfg.out_dir / f"selection_{branch}_trace.json")
        outcomes[branch] = outcome
    return outcomes


def simulation_forecasts(cfg, fd, outcome):
    """Fit the selected model on every split before the simulation; predict it."""
    (X_tr, y_tr), _, scaler = fd.stage_arrays("simulation", outcome.features)
    model = _learner(cfg, outcome.learner, outcome.hyper).fit(X_tr, y_tr)
    sim_rows = [r for r in fd.rows if r.eligible and fd.splits.get(r.game_id) == "simulation"]
    X_sim, _ = rows_to_arrays(sim_rows, outcome.features, fd.names)
    p = positive_proba(model, scaler.transform(X_sim))
    return {r.game_id: float(v) for r, v in zip(sim_rows, p)}, model


def run_backtest(cfg, selections=None, rules=None):
    """Simulate each selected model under each stake rule.

    ``selections`` are paths to selection JSON files; by default every
    configured branch's file in the output directory.
    """
    fd = load_feature_data(cfg)
    matched = read_matched_games(_need(cfg.out_dir / MATCHED, "ingest"), cfg.stats)
    sim_games = [m for m in matched if fd.splits.get(m.game_id) == "simulation"]
    if not sim_games:
        raise DataError("no simulation-split games have odds")
    rules = [bt.parse_rule(r) for r in (rules or cfg.rules)]
    if selections is None:
        selections = [_need(cfg.out_dir / f"selection_{b}.json", "select") for b in cfg.branches]
    reports = {}
    for sel_path in selections:
        outcome = SelectionOutcome.from_json(Path(sel_path).read_text(encoding="utf-8"))
        forecasts, model = simulation_forecasts(cfg, fd, outcome)
        b = outcome.branch
        if hasattr(model, "to_json"):
            (cfg.out_dir / f"model_{b}.json").write_text(
                model.to_json(outcome.features) + "\n", encoding="utf-8")
        labels = {m.game_id: m.game.home_won for m in sim_games if m.game_id in forecasts}
        if labels:
            bins = aggregate_bins([forecasts[g] for g in labels], list(labels.values()), cfg.bins)
            write_reliability_csv(reliability_table(bins), cfg.out_dir / f"reliability_{b}.csv")
        for rule in rules:
            ledger, report = bt.simulate(sim_games, forecasts, rule, cfg.bankroll)
            if bt.replay_final_bankroll(cfg.bankroll, ledger) != (
                    ledger[-1].bankroll_after if ledger else Fraction(cfg.bankroll)):
                raise InvariantViolation("ledger does not reconcile with its bets")
            tag = f"{b}_{rule.name}"
            bt.write_ledger(ledger, cfg.out_dir / f"ledger_{tag}.csv")
            bt.write_trajectory(ledger, cfg.bankroll, cfg.out_dir / f"trajectory_{tag}.csv")
            bt.write_value_bets(ledger, cfg.out_dir / f"value_bets_{tag}.csv")
            report.branch = b
            (cfg.out_dir / f"report_{tag}.json").write_text(report.to_json(), encoding="utf-8")
            reports[tag] = report
    return reports


COMPARISON_COLUMNS = ["branch", "learner", "pct_games_bet", "pct_bets_won", "accuracy",
                      "classwise_ece", "max_roi", "average_roi"]


def run_report(cfg):
    """Side-by-side branch comparison from the backtest reports."""
    by_branch = {}
    for b in cfg.branches:
        for path in sorted(cfg.out_dir.glob(f"report_{b}_*.json")):
            rep = json.loads(path.read_text(encoding="utf-8"))
            by_branch.setdefault(b, []).append(rep)
    if not by_branch:
        raise ConfigError(f"no backtest reports in {cfg.out_dir}; run `backtest` first")

    def mean(vals):
        vals = [v for v in vals if v is not None]
        return round(float(np.mean(vals)), 2) if vals else None

    table = []
    for b, reps in by_branch.items():
        sel_path = cfg.out_dir / f"selection_{b}.json"
        learner = json.loads(sel_path.read_text())["learner"] if sel_path.exists() else ""
        rois = [r["roi"] for r in reps]
        table.append({
            "branch": b,
            "learner": learner,
            "pct_games_bet": mean(r["pct_games_bet"] for r in reps),
            "pct_bets_won": mean(r["pct_bets_won"] for r in reps),
            "accuracy": mean(r["accuracy"] for r in reps),
            "classwise_ece": mean(r["classwise_ece"] for r in reps),
            "max_roi": max(rois),
            "average_roi": mean(rois),
        })
    with open(cfg.out_dir / "comparison.csv", "w", newline="", encoding="utf-8") as fh:
        w = csv.DictWriter(fh, fieldnames=COMPARISON_COLUMNS, lineterminator="\n")
        w.writeheader()
        for row in table:
            w.writerow({k: "" if row[k] is None else row[k] for k in COMPARISON_COLUMNS})
    lines = ["| " + " | ".join(COMPARISON_COLUMNS) + " |",
             "|" + "---|" * len(COMPARISON_COLUMNS)]
    for row in table:
        lines.append("| " + " | ".join("" if row[k] is None else str(row[k])
                                       for k in COMPARISON_COLUMNS) + " |")
    (cfg.out_dir / "comparison.md").write_text("\n".join(lines) + "\n", encoding="utf-8")
    return table


def run_all(cfg, rules=None):
    run_ingest(cfg)
    run_features(cfg)
    run_select(cfg)
    run_backtest(cfg, rules=rules)
    return run_report(cfg)
