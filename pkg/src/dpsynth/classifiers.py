"""Differentially private classifiers plus the non-private evaluation zoo.

DP Gaussian naive Bayes privatizes class counts, per-feature means and
variances with Laplace noise; sensitivities come from the declared feature
bounds and the *noisy* class counts (counts are privatized first and floored
at one), and the budget is split evenly across the 2F+1 statistic groups.

DP logistic regression uses output perturbation: features are clipped to
their bounds and scaled into the unit L2 ball, a ridge-regularized model is
trained to convergence, and a Laplace noise vector with per-coordinate scale
``2 / (n * lambda * epsilon)`` is added to the weights. Multiclass targets
train one-vs-rest heads with the budget split evenly across heads.

The zoo (logistic / decision_tree / random_forest) is non-private, never
touches a budget ledger, and exists only to score synthetic data.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from . import _logistic, _tree
from .data import CATEGORICAL, TabularDataset
from .errors import (
    DegenerateFeatures,
    InvalidSpec,
    NonPositiveParameter,
    NoTarget,
    SchemaMismatch,
)
from .mechanisms import BudgetLedger, PrivacyBudget, Rng

ZOO_KINDS = ("logistic", "decision_tree", "random_forest")


@dataclass(frozen=True)
class FeatureBounds:
    """Per-feature clipping bounds; the source of DP sensitivities."""

    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        if self.lower.shape != self.upper.shape or np.any(self.lower >= self.upper):
            raise InvalidSpec("feature bounds need lower < upper per feature")

    @classmethod
    def from_schema(cls, dataset: TabularDataset) -> "FeatureBounds":
        lo, hi = [], []
        for name in dataset.feature_columns:
            col = dataset.schema[dataset.column_index(name)]
            if col.kind == CATEGORICAL:
                lo.append(0.0)
                hi.append(float(max(col.cardinality - 1, 1)))
            else:
                lo.append(col.lower)
                hi.append(col.upper)
        return cls(lower=np.asarray(lo), upper=np.asarray(hi))

    @property
    def ranges(self) -> np.ndarray:
        return self.upper - self.lower

    def clip(self, X: np.ndarray) -> np.ndarray:
        return np.clip(X, self.lower, self.upper)


class TrainedClassifier:
    """Common contract: rows in, labels/probabilities over ``classes`` out.

    Rows outside the training bounds are clipped before scoring, per the
    clipping contract of the DP constructions.
    """

    kind: str = "?"

    def __init__(self, classes: np.ndarray, n_features: int, bounds: FeatureBounds | None):
        self.classes = np.asarray(classes, dtype=np.int64)
        self.n_features = n_features
        self.bounds = bounds

    def _matrix(self, rows) -> np.ndarray:
        if isinstance(rows, TabularDataset):
            X = rows.feature_matrix()
        else:
            X = np.asarray(rows, dtype=float)
            if X.ndim == 1:
                X = X.reshape(0, self.n_features) if X.size == 0 else X.reshape(1, -1)
        if X.shape[1] != self.n_features:
            raise SchemaMismatch(
                f"{self.kind}: expected {self.n_features} feature columns, got {X.shape[1]}"
            )
        if self.bounds is not None:
            X = self.bounds.clip(X)
        return X

    def _scores(self, X: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def predict_proba(self, rows) -> np.ndarray:
        X = self._matrix(rows)
        if X.shape[0] == 0:
            return np.empty((0, self.classes.size))
        return self._scores(X)

    def predict(self, rows) -> np.ndarray:
        proba = self.predict_proba(rows)
        if proba.shape[0] == 0:
            return np.empty(0, dtype=np.int64)
        return self.classes[np.argmax(proba, axis=1)]

    def to_json_dict(self) -> dict:
        return {"kind": self.kind, "classes": self.classes.tolist()}


def predict(classifier: TrainedClassifier, rows) -> np.ndarray:
    return classifier.predict(rows)


# -- Gaussian naive Bayes -----------------------------------------------------------


class GnbClassifier(TrainedClassifier):
    kind = "dp_gnb"

    def __init__(self, classes, bounds, means, variances, priors):
        super().__init__(classes, means.shape[1], bounds)
        self.means = means
        self.variances = variances
        self.priors = priors

    def _scores(self, X: np.ndarray) -> np.ndarray:
        log_post = np.empty((X.shape[0], self.classes.size))
        for i in range(self.classes.size):
            var = self.variances[i]
            ll = -0.5 * (np.log(2 * np.pi * var) + (X - self.means[i]) ** 2 / var)
            log_post[:, i] = math.log(self.priors[i]) + ll.sum(axis=1)
        log_post -= log_post.max(axis=1, keepdims=True)
        p = np.exp(log_post)
        return p / p.sum(axis=1, keepdims=True)

    def to_json_dict(self) -> dict:
        d = super().to_json_dict()
        d.update(
            means=self.means.tolist(),
            variances=self.variances.tolist(),
            priors=self.priors.tolist(),
        )
        return d


def _gnb_statistics(X: np.ndarray, y: np.ndarray, classes: np.ndarray, ranges: np.ndarray):
    """Exact per-class counts, means, biased variances (shared with the oracle)."""
    counts, means, variances = [], [], []
    var_floor = np.maximum(1e-9 * ranges**2, 1e-12)
    for c in classes:
        Xc = X[y == c]
        counts.append(Xc.shape[0])
        means.append(Xc.mean(axis=0))
        variances.append(np.maximum(Xc.var(axis=0), var_floor))
    return np.asarray(counts, float), np.asarray(means), np.asarray(variances), var_floor


def fit_dp_gnb(
    train: TabularDataset,
    epsilon: float,
    bounds: FeatureBounds | None = None,
    rng: Rng | None = None,
    ledger: BudgetLedger | None = None,
) -> GnbClassifier:
    if train.target_column is None:
        raise NoTarget("DP-GNB needs a target column")
    if epsilon <= 0:
        raise NonPositiveParameter(f"epsilon must be > 0, got {epsilon}")
    rng = rng or Rng(0)
    bounds = bounds or FeatureBounds.from_schema(train)
    X = bounds.clip(train.feature_matrix())
    y = train.target_vector()
    classes = np.unique(y)
    n_features = X.shape[1]
    ranges = bounds.ranges

    counts, means, variances, var_floor = _gnb_statistics(X, y, classes, ranges)

    # one slice per statistic group: counts, F means, F variances
    eps_stat = epsilon / (2 * n_features + 1)
    gen = rng.generator
    noisy_counts = counts + gen.laplace(0.0, 1.0 / eps_stat, size=counts.shape)
    noisy_counts = np.maximum(noisy_counts, 1.0)
    mean_scale = ranges[None, :] / (noisy_counts[:, None] * eps_stat)
    noisy_means = means + gen.laplace(0.0, 1.0, size=means.shape) * mean_scale
    var_scale = (ranges[None, :] ** 2) / (noisy_counts[:, None] * eps_stat)
    noisy_vars = variances + gen.laplace(0.0, 1.0, size=variances.shape) * var_scale
    noisy_vars = np.maximum(noisy_vars, var_floor)
    priors = noisy_counts / noisy_counts.sum()

    if ledger is not None:
        ledger.spend("dp_gnb", PrivacyBudget(epsilon))
    return GnbClassifier(classes, bounds, noisy_means, noisy_vars, priors)


def fit_gnb_reference(
    train: TabularDataset, bounds: FeatureBounds | None = None
) -> GnbClassifier:
    """Noise-free GNB with the same estimator form (the epsilon -> inf limit)."""
    if train.target_column is None:
        raise NoTarget("GNB needs a target column")
    bounds = bounds or FeatureBounds.from_schema(train)
    X = bounds.clip(train.feature_matrix())
    y = train.target_vector()
    classes = np.unique(y)
    counts, means, variances, _ = _gnb_statistics(X, y, classes, bounds.ranges)
    return GnbClassifier(classes, bounds, means, variances, counts / counts.sum())


# -- logistic regression with output perturbation ------------------------------------


class LogRegClassifier(TrainedClassifier):
    kind = "dp_logreg"

    def __init__(self, classes, bounds, weights, scale_radius):
        # weights: (n_heads, n_features + 1); one head for binary, k for OVR
        super().__init__(classes, weights.shape[1] - 1, bounds)
        self.weights = weights
        self.scale_radius = scale_radius

    def _scaled(self, X: np.ndarray) -> np.ndarray:
        Xa = np.column_stack([X, np.ones(X.shape[0])])
        return Xa / self.scale_radius

    def _scores(self, X: np.ndarray) -> np.ndarray:
        Z = self._scaled(X) @ self.weights.T
        if self.classes.size == 2 and self.weights.shape[0] == 1:
            p1 = _logistic.sigmoid(Z[:, 0])
            return np.column_stack([1.0 - p1, p1])
        S = _logistic.sigmoid(Z)
        total = S.sum(axis=1, keepdims=True)
        uniform = np.full_like(S, 1.0 / S.shape[1])
        with np.errstate(invalid="ignore"):
            out = np.where(total > 0, S / total, uniform)
        return out

    def to_json_dict(self) -> dict:
        d = super().to_json_dict()
        d.update(weights=self.weights.tolist(), scale_radius=self.scale_radius)
        return d


def _logreg_prepare(train: TabularDataset, bounds: FeatureBounds):
    X = bounds.clip(train.feature_matrix())
    if np.all(X.std(axis=0) == 0):
        raise DegenerateFeatures("all features have zero variance after clipping")
    radius = math.sqrt(float((np.maximum(bounds.lower**2, bounds.upper**2)).sum()) + 1.0)
    Xs = np.column_stack([X, np.ones(X.shape[0])]) / radius
    return Xs, radius


def fit_dp_logreg(
    train: TabularDataset,
    epsilon: float,
    bounds: FeatureBounds | None = None,
    regularization: float = 0.01,
    rng: Rng | None = None,
    ledger: BudgetLedger | None = None,
) -> LogRegClassifier:
    if train.target_column is None:
        raise NoTarget("DP logistic regression needs a target column")
    if epsilon <= 0:
        raise NonPositiveParameter(f"epsilon must be > 0, got {epsilon}")
    if regularization <= 0:
        raise NonPositiveParameter(
            f"regularization must be > 0 (noise scale is undefined at 0), got {regularization}"
        )
    rng = rng or Rng(0)
    bounds = bounds or FeatureBounds.from_schema(train)
    y = train.target_vector()
    classes = np.unique(y)
    Xs, radius = _logreg_prepare(train, bounds)
    n = Xs.shape[0]

    heads = 1 if classes.size <= 2 else classes.size
    eps_head = epsilon / heads
    noise_scale = 2.0 / (n * regularization * eps_head)
    gen = rng.generator

    weights = []
    if heads == 1:
        w = _logistic.fit_binary(Xs, (y == classes[-1]).astype(float), regularization)
        weights.append(w + gen.laplace(0.0, noise_scale, size=w.shape))
    else:
        for c in classes:
            w = _logistic.fit_binary(Xs, (y == c).astype(float), regularization)
            weights.append(w + gen.laplace(0.0, noise_scale, size=w.shape))

    if ledger is not None:
        ledger.spend("dp_logreg", PrivacyBudget(epsilon))
    return LogRegClassifier(classes, bounds, np.asarray(weights), radius)


# -- non-private zoo -------------------------------------------------------------------


class ZooLogistic(TrainedClassifier):
    kind = "logistic"

    def __init__(self, classes, n_features, mu, sd, weights):
        super().__init__(classes, n_features, None)
        self.mu = mu
        self.sd = sd
        self.weights = weights

    def _scores(self, X: np.ndarray) -> np.ndarray:
        Xs = np.column_stack([(X - self.mu) / self.sd, np.ones(X.shape[0])])
        Z = Xs @ self.weights
        if self.classes.size == 1:
            return np.ones((X.shape[0], 1))
        Z = Z - Z.max(axis=1, keepdims=True)
        E = np.exp(Z)
        return E / E.sum(axis=1, keepdims=True)


class ZooTree(TrainedClassifier):
    def __init__(self, kind, classes, n_features, model):
        super().__init__(classes, n_features, None)
        self.kind = kind
        self.model = model

    def _scores(self, X: np.ndarray) -> np.ndarray:
        return self.model.predict_proba(X)


def fit_baseline(train: TabularDataset, kind: str, seed: int = 0, **params) -> TrainedClassifier:
    """Non-private zoo classifier; deterministic for a given seed."""
    if train.target_column is None:
        raise NoTarget(f"baseline {kind!r} needs a target column")
    if kind not in ZOO_KINDS:
        raise InvalidSpec(f"unknown baseline kind {kind!r}; expected one of {ZOO_KINDS}")
    X = train.feature_matrix()
    y = train.target_vector()
    classes = np.unique(y)

    if kind == "logistic":
        mu = X.mean(axis=0)
        sd = np.maximum(X.std(axis=0), 1e-12)
        Xs = np.column_stack([(X - mu) / sd, np.ones(X.shape[0])])
        if classes.size == 1:
            W = np.zeros((Xs.shape[1], 1))
        else:
            y_idx = np.searchsorted(classes, y)
            W = _logistic.fit_multinomial(
                Xs, y_idx, classes.size, lam=params.get("regularization", 1e-4)
            )
        return ZooLogistic(classes, X.shape[1], mu, sd, W)

    if kind == "decision_tree":
        model = _tree.fit_single_tree(
            X, y, classes,
            max_depth=params.get("max_depth"),
            min_leaf=params.get("min_leaf", 1),
        )
        return ZooTree(kind, classes, X.shape[1], model)

    model = _tree.fit_forest(
        X, y, classes,
        n_trees=params.get("n_trees", 15),
        max_depth=params.get("max_depth", 12),
        min_leaf=params.get("min_leaf", 2),
        seed=seed,
    )
    return ZooTree(kind, classes, X.shape[1], model)


DP_CLASSIFIER_KINDS = ("gnb", "logreg")


def fit_dp_classifier(
    kind: str,
    train: TabularDataset,
    epsilon: float,
    rng: Rng,
    ledger: BudgetLedger | None = None,
    **params,
) -> TrainedClassifier:
    """Dispatch by kind; the embeddable-classifier registry for QUAIL."""
    if kind == "gnb":
        return fit_dp_gnb(train, epsilon, rng=rng, ledger=ledger, **params)
    if kind == "logreg":
        return fit_dp_logreg(train, epsilon, rng=rng, ledger=ledger, **params)
    raise InvalidSpec(f"unknown DP classifier kind {kind!r}; expected one of {DP_CLASSIFIER_KINDS}")
