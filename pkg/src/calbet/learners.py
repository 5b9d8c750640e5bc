"""Probabilistic binary classifiers.

Any sklearn-compatible classifier with ``fit`` and ``predict_proba`` works as
a learner throughout the package. :class:`LogisticRegressionGD` is the one
shipped here: full-batch gradient descent on the mean negative
log-likelihood plus an L2 penalty on the non-intercept weights.
"""

import json

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, clone
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .errors import DimensionMismatch, NonFiniteLoss, SingleClassTraining

EPS = 1e-15
MAX_HALVINGS = 30


def sigmoid(z):
    """Logistic function without overflow for large ``|z|``."""
    z = np.asarray(z, dtype=float)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def _linear(beta, X):
    X = np.asarray(X, dtype=float)
    if X.ndim != 2 or X.shape[1] != beta.size - 1:
        raise DimensionMismatch(f"X has {X.shape[-1]} columns, model expects {beta.size - 1}")
    return X @ beta[1:] + beta[0]


def lr_predict_proba(beta, X):
    """Positive-class probabilities; ``beta[0]`` is the intercept."""
    return sigmoid(_linear(np.asarray(beta, dtype=float), X))


def lr_loss(beta, X, y, l2_lambda=0.0):
    """Mean negative log-likelihood plus ``l2_lambda * ||beta[1:]||^2``."""
    beta = np.asarray(beta, dtype=float)
    p = np.clip(lr_predict_proba(beta, X), EPS, 1.0 - EPS)
    y = np.asarray(y, dtype=float)
    nll = -np.mean(y * np.log(p) + (1.0 - y) * np.log(1.0 - p))
    return float(nll + l2_lambda * np.dot(beta[1:], beta[1:]))


def lr_gradient(beta, X, y, l2_lambda=0.0):
    beta = np.asarray(beta, dtype=float)
    X = np.asarray(X, dtype=float)
    resid = lr_predict_proba(beta, X) - np.asarray(y, dtype=float)
    g = np.empty_like(beta)
    g[0] = resid.mean()
    g[1:] = X.T @ resid / X.shape[0] + 2.0 * l2_lambda * beta[1:]
    return g


class LogisticRegressionGD(ClassifierMixin, BaseEstimator):
    """Binary logistic regression fitted by full-batch gradient descent.

    Descent starts from all-zero weights. A step that would raise the loss is
    retried with half the learning rate (up to 30 times); the halved rate is
    kept for later steps, so ``loss_history_`` never increases.

    Args:
        l2_lambda: penalty on the squared norm of the non-intercept weights.
        learning_rate: initial step size.
        max_iters: iteration cap.
        tolerance: stop once the gradient's largest component is below this.
        fit_intercept: if False the intercept is pinned at zero.
        seed: kept for interface parity with stochastic learners. Descent
            from zero is deterministic, so it does not affect the fit.
    """

    def __init__(self, l2_lambda=0.01, learning_rate=0.1, max_iters=5000,
                 tolerance=1e-6, fit_intercept=True, seed=0):
        self.l2_lambda = l2_lambda
        self.learning_rate = learning_rate
        self.max_iters = max_iters
        self.tolerance = tolerance
        self.fit_intercept = fit_intercept
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, dtype=float)
        y = y.astype(int)
        if X.shape[0] < 2:
            raise SingleClassTraining("need at least two training rows")
        if not set(np.unique(y)) <= {0, 1}:
            raise ValueError("labels must be 0/1")
        if np.unique(y).size < 2:
            raise SingleClassTraining("training labels contain a single class")

        beta = np.zeros(X.shape[1] + 1)
        lr = float(self.learning_rate)
        loss = lr_loss(beta, X, y, self.l2_lambda)
        history = [loss]
        n_iter = 0
        converged = False
        for n_iter in range(1, int(self.max_iters) + 1):
            grad = lr_gradient(beta, X, y, self.l2_lambda)
            if not self.fit_intercept:
                grad[0] = 0.0
            if np.max(np.abs(grad)) < self.tolerance:
                converged = True
                n_iter -= 1
                break
            for _ in range(MAX_HALVINGS + 1):
                cand = beta - lr * grad
                cand_loss = lr_loss(cand, X, y, self.l2_lambda)
                if np.isfinite(cand_loss) and cand_loss <= loss:
                    break
                lr *= 0.5
            else:
                if not np.isfinite(cand_loss):
                    raise NonFiniteLoss(
                        f"loss stayed non-finite after {MAX_HALVINGS} learning-rate halvings")
                # no descent possible at any tried rate: numerically converged
                converged = True
                break
            beta, loss = cand, cand_loss
            history.append(loss)

        self.coef_ = beta
        self.classes_ = np.array([0, 1])
        self.n_features_in_ = X.shape[1]
        self.n_iter_ = n_iter
        self.converged_ = converged
        self.loss_history_ = history
        self.learning_rate_ = lr
        return self

    def predict_proba(self, X):
        check_is_fitted(self)
        X = check_array(X, dtype=float)
        p = lr_predict_proba(self.coef_, X)
        return np.column_stack([1.0 - p, p])

    def decision_function(self, X):
        check_is_fitted(self)
        return _linear(self.coef_, check_array(X, dtype=float))

    def predict(self, X):
        return (self.predict_proba(X)[:, 1] >= 0.5).astype(int)

    def loss(self, X, y):
        check_is_fitted(self)
        return lr_loss(self.coef_, X, y, self.l2_lambda)

    def to_json(self, feature_names=None):
        check_is_fitted(self)
        hyper = {k: v for k, v in sorted(self.get_params().items())}
        return json.dumps({"beta": [float(b) for b in self.coef_], "hyper": hyper,
                           "feature_names": list(feature_names or [])},
                          indent=2, sort_keys=True)

    @classmethod
    def from_json(cls, text):
        """Rebuild a fitted model; returns ``(model, feature_names)``."""
        d = json.loads(text)
        model = cls(**d["hyper"])
        model.coef_ = np.array(d["beta"], dtype=float)
        model.classes_ = np.array([0, 1])
        model.n_features_in_ = model.coef_.size - 1
        return model, d["feature_names"]


LEARNERS = {"LR": LogisticRegressionGD}


def make_learner(name, **params):
    try:
        return LEARNERS[name](**params)
    except KeyError:
        raise ValueError(f"unknown learner {name!r}; available: {sorted(LEARNERS)}") from None


def positive_proba(model, X):
    """Positive-class column of ``predict_proba``."""
    proba = np.asarray(model.predict_proba(X))
    return proba[:, 1] if proba.ndim == 2 else proba


def evaluate(learner, spec, train, test):
    """Fit a fresh copy of ``learner`` on ``train`` and score ``test``.

    ``train`` and ``test`` are ``(X, y)`` pairs; ``spec`` is a
    :class:`~calbet.calibration.MetricSpec`.
    """
    model = clone(learner).fit(*train)
    X_eval, y_eval = test
    return spec.score(positive_proba(model, X_eval), y_eval)
