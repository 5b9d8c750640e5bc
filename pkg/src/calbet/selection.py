"""Feature and model selection along one metric branch.

The flow per branch is: Spearman redundancy filter (shared by both
branches), sequential forward selection with the branch metric, exhaustive
hyperparameter grid averaged over seeds, then picking the best learner by
its test-set score.
"""

import itertools
import json
import logging
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.stats import rankdata
from sklearn.base import BaseEstimator, TransformerMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted

from .errors import DegenerateSample, EmptyCandidates, LengthMismatch, NonFiniteLoss
from .learners import positive_proba

log = logging.getLogger(__name__)


def spearman_rank_corr(a, b):
    """Pearson correlation of average ranks."""
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.size != b.size:
        raise LengthMismatch(f"samples of length {a.size} and {b.size}")
    if a.size < 3:
        raise DegenerateSample("Spearman correlation needs at least 3 observations")
    ra = rankdata(a) - (a.size + 1) / 2.0
    rb = rankdata(b) - (b.size + 1) / 2.0
    denom = np.sqrt(np.dot(ra, ra) * np.dot(rb, rb))
    if denom == 0.0:
        raise DegenerateSample("constant sample has no rank variance")
    return float(np.clip(np.dot(ra, rb) / denom, -1.0, 1.0))


def correlation_filter(X, y, names, threshold=0.7):
    """Drop features that are redundant with a more target-correlated one.

    Features are visited in order of decreasing ``|rho(feature, y)|`` (name
    breaks ties); each is kept only if its ``|rho|`` with every feature kept
    so far is at most ``threshold``. Returns kept names in visiting order.
    """
    X = np.asarray(X, dtype=float)
    names = list(names)
    if not names:
        raise EmptyCandidates("no features to filter")
    target = {n: abs(spearman_rank_corr(X[:, j], y)) for j, n in enumerate(names)}
    order = sorted(names, key=lambda n: (-target[n], n))
    kept = []
    for n in order:
        col = X[:, names.index(n)]
        if all(abs(spearman_rank_corr(col, X[:, names.index(k)])) <= threshold for k in kept):
            kept.append(n)
    return kept


class CorrelationFilter(TransformerMixin, BaseEstimator):
    """Transformer form of :func:`correlation_filter`."""

    def __init__(self, threshold=0.7):
        self.threshold = threshold

    def fit(self, X, y):
        X = check_array(X, dtype=float)
        names = [str(j) for j in range(X.shape[1])]
        kept = correlation_filter(X, y, names, self.threshold)
        self.order_ = np.array([int(k) for k in kept])
        self.n_features_in_ = X.shape[1]
        return self

    def get_support(self, indices=False):
        check_is_fitted(self)
        if indices:
            return self.order_
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.order_] = True
        return mask

    def transform(self, X):
        check_is_fitted(self)
        return check_array(X, dtype=float)[:, self.order_]


@dataclass
class SFSResult:
    subset: list
    score: float
    path: list = field(default_factory=list)  # (subset, score) after each step
    n_evaluations: int = 0


def sfs(learner, spec, candidates, train, val, names=None):
    """Sequential forward selection run to the full candidate set.

    Each step adds the candidate whose inclusion gives the best validation
    score (earliest name on ties). The returned subset is the best point on
    the path; ties go to the smaller subset, then to the lexicographically
    smaller sorted subset.

    Args:
        learner: unfitted classifier, cloned for every evaluation.
        spec: :class:`~calbet.calibration.MetricSpec` for scoring.
        candidates: feature names to search over.
        train, val: ``(X, y)`` pairs whose columns follow ``names``.
        names: column names of the X matrices; defaults to ``candidates``.
    """
    candidates = list(candidates)
    if not candidates:
        raise EmptyCandidates("no candidate features for forward selection")
    names = list(names if names is not None else candidates)
    col = {n: names.index(n) for n in candidates}
    X_tr, y_tr = train
    X_va, y_va = val

    def score(subset):
        idx = [col[n] for n in subset]
        model = clone(learner).fit(X_tr[:, idx], y_tr)
        return spec.score(positive_proba(model, X_va[:, idx]), y_va)

    current = []
    remaining = sorted(candidates)
    path = []
    n_eval = 0
    while remaining:
        best = None
        for f in remaining:
            s = score(current + [f])
            n_eval += 1
            if best is None or spec.better(s, best[1]):
                best = (f, s)
        current = current + [best[0]]
        remaining.remove(best[0])
        path.append((list(current), best[1]))
        log.debug("sfs step %d: +%s -> %.6f", len(current), best[0], best[1])

    chosen = min(path, key=lambda ps: (spec.key(ps[1]), len(ps[0]), sorted(ps[0])))
    return SFSResult(chosen[0], chosen[1], path, n_eval)


class SequentialForwardSelector(TransformerMixin, BaseEstimator):
    """Holdout forward selection as a transformer.

    ``fit(X, y, X_val=..., y_val=...)`` searches column subsets; the
    validation pair is required because the search never scores on the data
    it trains on.
    """

    def __init__(self, estimator, spec):
        self.estimator = estimator
        self.spec = spec

    def fit(self, X, y, X_val=None, y_val=None):
        if X_val is None or y_val is None:
            raise ValueError("X_val and y_val are required")
        X = check_array(X, dtype=float)
        X_val = check_array(X_val, dtype=float)
        names = [f"{j:06d}" for j in range(X.shape[1])]
        res = sfs(self.estimator, self.spec, names, (X, np.asarray(y)),
                  (X_val, np.asarray(y_val)), names)
        self.subset_ = np.array([int(n) for n in res.subset])
        self.score_ = res.score
        self.path_ = res.path
        self.n_evaluations_ = res.n_evaluations
        self.n_features_in_ = X.shape[1]
        return self

    def get_support(self, indices=False):
        check_is_fitted(self)
        if indices:
            return self.subset_
        mask = np.zeros(self.n_features_in_, dtype=bool)
        mask[self.subset_] = True
        return mask

    def transform(self, X):
        check_is_fitted(self)
        return check_array(X, dtype=float)[:, self.subset_]


@dataclass(frozen=True)
class HyperGrid:
    """Candidate values per hyperparameter, in declaration order, plus seeds."""

    params: dict
    seeds: tuple = (0,)

    def __post_init__(self):
        if not self.params or any(len(v) == 0 for v in self.params.values()):
            raise ValueError("every hyperparameter needs at least one candidate")
        if not self.seeds:
            raise ValueError("at least one seed is required")

    def points(self):
        keys = list(self.params)
        return [dict(zip(keys, vals)) for vals in itertools.product(*self.params.values())]

    def __len__(self):
        return int(np.prod([len(v) for v in self.params.values()]))


DEFAULT_LR_GRID = HyperGrid(
    params={"l2_lambda": [0.001, 0.01, 0.1, 1, 10], "learning_rate": [0.1, 0.01],
            "max_iters": [5000], "tolerance": [1e-6]},
    seeds=(0, 1, 2),
)


@dataclass
class GridResult:
    params: dict
    score: float
    table: list  # one dict per grid point: params, seed_scores, score, failures


def _seeded(learner, seed):
    params = learner.get_params()
    for key in ("seed", "random_state"):
        if key in params:
            return clone(learner).set_params(**{key: seed})
    return clone(learner)


def grid_hpo(learner, grid, spec, train, val):
    """Score every grid point at every seed; a point's score is the seed mean.

    A fit that fails with :class:`NonFiniteLoss` scores ``spec.worst`` and is
    counted in the point's ``failures``. The first-declared point wins ties.
    """
    X_tr, y_tr = train
    X_va, y_va = val
    table = []
    best = None
    for point in grid.points():
        scores = []
        failures = 0
        for seed in grid.seeds:
            model = _seeded(learner, seed).set_params(**point)
            try:
                model.fit(X_tr, y_tr)
                scores.append(spec.score(positive_proba(model, X_va), y_va))
            except NonFiniteLoss:
                failures += 1
                scores.append(spec.worst)
        mean = float(np.mean(scores))
        table.append({"params": dict(point), "seed_scores": scores, "score": mean,
                      "failures": failures})
        if best is None or spec.better(mean, best[1]):
            best = (dict(point), mean)
    return GridResult(best[0], best[1], table)


def select_model(candidates, spec):
    """Name of the best-scoring learner; ties go to the alphabetically first."""
    if not candidates:
        raise EmptyCandidates("no candidate models")
    return min(sorted(candidates), key=lambda name: spec.key(candidates[name]))


@dataclass
class SelectionOutcome:
    branch: str
    learner: str
    features: list
    hyper: dict
    val_score: float
    test_score: float
    evaluations_count: int = 0

    def to_json(self):
        return json.dumps(asdict(self), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_json(cls, text):
        return cls(**json.loads(text))
