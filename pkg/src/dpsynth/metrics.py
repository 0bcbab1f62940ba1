"""Evaluation metrics: pMSE ratio, SRA, F1, and AUC-ROC.

The propensity discriminator is a first-order logistic regression on one-hot
categorical and binned continuous features (no interactions), which is what
the parameter-count null expectation ``(k - 1) * (1 - c)^2 * c / N`` assumes.
The paper's prose and the cited ratio construction disagree on where
same-distribution data should land (0 vs ~1), so both the raw pMSE and the
ratio are reported; acceptance bands come from permutation nulls.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.stats import rankdata

from . import _logistic
from .data import CATEGORICAL, DiscretizedView, TabularDataset
from .errors import (
    EmptyDataset,
    InvalidSpec,
    LengthMismatch,
    SchemaMismatch,
    SingleClass,
    TooFewAlgorithms,
)

PROPENSITY_RIDGE = 1e-4


# -- F1 ------------------------------------------------------------------------------


def _check_lengths(a, b):
    a = np.asarray(a)
    b = np.asarray(b)
    if a.shape != b.shape or a.ndim != 1:
        raise LengthMismatch(f"vectors must share a 1-D shape, got {a.shape} vs {b.shape}")
    if a.size == 0:
        raise LengthMismatch("vectors must be nonempty")
    return a, b


def precision_recall_f1(labels, predictions):
    """Per-class (classes, precision, recall, f1); zero where P + R = 0."""
    labels, predictions = _check_lengths(labels, predictions)
    classes = np.unique(np.concatenate([labels, predictions]))
    precision = np.zeros(classes.size)
    recall = np.zeros(classes.size)
    f1 = np.zeros(classes.size)
    for i, c in enumerate(classes):
        tp = np.sum((predictions == c) & (labels == c))
        fp = np.sum((predictions == c) & (labels != c))
        fn = np.sum((predictions != c) & (labels == c))
        precision[i] = tp / (tp + fp) if tp + fp else 0.0
        recall[i] = tp / (tp + fn) if tp + fn else 0.0
        if precision[i] + recall[i] > 0:
            f1[i] = 2 * precision[i] * recall[i] / (precision[i] + recall[i])
    return classes, precision, recall, f1


def f1_score(labels, predictions, averaging: str = "macro") -> float:
    labels, predictions = _check_lengths(labels, predictions)
    if averaging == "macro":
        _, _, _, f1 = precision_recall_f1(labels, predictions)
        return float(f1.mean())
    if averaging == "micro":
        # single-label multiclass: micro-P = micro-R = accuracy
        return float(np.mean(labels == predictions))
    raise InvalidSpec(f"averaging must be 'macro' or 'micro', got {averaging!r}")


# -- AUC-ROC -------------------------------------------------------------------------


def auc_roc(labels, scores) -> float:
    """Mann-Whitney AUC for binary labels; ties count one half."""
    labels, scores = _check_lengths(labels, scores)
    pos = labels == np.max(labels)
    n_pos = int(pos.sum())
    n_neg = labels.size - n_pos
    if n_pos == 0 or n_neg == 0 or np.unique(labels).size != 2:
        raise SingleClass("AUC needs both classes present")
    ranks = rankdata(scores, method="average")
    return float((ranks[pos].sum() - n_pos * (n_pos + 1) / 2) / (n_pos * n_neg))


def auc_roc_ovr(labels, proba: np.ndarray, classes) -> float:
    """One-vs-rest macro AUC over probability columns aligned with ``classes``."""
    labels = np.asarray(labels)
    classes = np.asarray(classes)
    proba = np.asarray(proba, dtype=float)
    if proba.shape != (labels.size, classes.size):
        raise LengthMismatch(
            f"probability matrix shape {proba.shape} does not match "
            f"{labels.size} rows x {classes.size} classes"
        )
    present = [i for i, c in enumerate(classes) if 0 < np.sum(labels == c) < labels.size]
    if not present:
        raise SingleClass("AUC needs at least one class with both positives and negatives")
    aucs = [auc_roc((labels == classes[i]).astype(int), proba[:, i]) for i in present]
    return float(np.mean(aucs))


# -- SRA -----------------------------------------------------------------------------


def sra(real_scores, synth_scores) -> float:
    """Fraction of algorithm pairs whose ordering agrees across the vectors.

    Ties agree only with ties; the value is invariant under any strictly
    increasing transform applied to both vectors.
    """
    real_scores, synth_scores = _check_lengths(
        np.asarray(real_scores, float), np.asarray(synth_scores, float)
    )
    k = real_scores.size
    if k < 2:
        raise TooFewAlgorithms("SRA needs at least two algorithms")
    agree = 0
    total = 0
    for i in range(k):
        for j in range(i + 1, k):
            total += 1
            if np.sign(real_scores[i] - real_scores[j]) == np.sign(
                synth_scores[i] - synth_scores[j]
            ):
                agree += 1
    return agree / total


# -- pMSE ----------------------------------------------------------------------------


@dataclass(frozen=True)
class PropensityReport:
    pmse: float
    null_expectation: float
    ratio: float
    synthetic_fraction: float
    parameter_count: int

    def to_json_dict(self) -> dict:
        return {
            "pmse": self.pmse,
            "null_expectation": self.null_expectation,
            "ratio": self.ratio,
            "synthetic_fraction": self.synthetic_fraction,
            "parameter_count": self.parameter_count,
        }


def _schemas_compatible(a: TabularDataset, b: TabularDataset) -> None:
    sa = tuple((c.name, c.kind, c.cardinality, c.lower, c.upper, c.bins) for c in a.schema)
    sb = tuple((c.name, c.kind, c.cardinality, c.lower, c.upper, c.bins) for c in b.schema)
    if sa != sb:
        raise SchemaMismatch("datasets must share a schema (target designation aside)")


def _propensity_design(stacked_values: np.ndarray, schema) -> np.ndarray:
    """One-hot design matrix: per column, levels minus a dropped reference,
    plus a trailing intercept."""
    view = DiscretizedView.from_schema(schema)
    cells = view.column_cells(stacked_values)
    blocks = []
    for j, col in enumerate(schema):
        levels = col.cells
        if levels < 2:
            continue
        block = np.zeros((stacked_values.shape[0], levels - 1))
        c = cells[:, j]
        for lvl in range(1, levels):
            block[:, lvl - 1] = c == lvl
        blocks.append(block)
    blocks.append(np.ones((stacked_values.shape[0], 1)))
    return np.column_stack(blocks)


def pmse_ratio(
    real: TabularDataset,
    synthetic: TabularDataset,
    seed: int = 0,
    propensity: str = "logistic",
) -> PropensityReport:
    """Propensity-score MSE of a real-vs-synthetic discriminator, plus the
    ratio against the null-distribution expectation.

    ``propensity="constant"`` is the zero-feature ablation: the discriminator
    is pinned to the synthetic fraction, giving pMSE exactly 0. ``seed`` is
    reserved for stochastic propensity models; the logistic discriminator is
    deterministic.
    """
    if real.n_rows == 0 or synthetic.n_rows == 0:
        raise EmptyDataset("pMSE needs nonempty datasets on both sides")
    _schemas_compatible(real, synthetic)
    if propensity not in ("logistic", "constant"):
        raise InvalidSpec(f"unknown propensity model {propensity!r}")

    stacked = np.vstack([real.raw_values(), synthetic.raw_values()])
    indicator = np.concatenate([np.zeros(real.n_rows), np.ones(synthetic.n_rows)])
    return _pmse_from_stack(stacked, indicator, real.schema, propensity)


def _pmse_from_stack(stacked, indicator, schema, propensity) -> PropensityReport:
    n_total = stacked.shape[0]
    c = float(indicator.mean())
    if propensity == "constant":
        k = 1
        pmse = 0.0
    else:
        design = _propensity_design(stacked, schema)
        k = design.shape[1]
        w = _logistic.fit_binary(
            design, indicator, PROPENSITY_RIDGE, penalize_intercept=False
        )
        p_hat = _logistic.sigmoid(design @ w)
        pmse = float(np.mean((p_hat - c) ** 2))
    null_expectation = (k - 1) * (1 - c) ** 2 * c / n_total if k > 1 else 1.0 / n_total
    return PropensityReport(
        pmse=pmse,
        null_expectation=null_expectation,
        ratio=pmse / null_expectation,
        synthetic_fraction=c,
        parameter_count=k,
    )


def pmse_permutation_null(
    real: TabularDataset,
    synthetic: TabularDataset,
    reshuffles: int,
    seed: int = 0,
) -> np.ndarray:
    """Null distribution of the pMSE ratio under indicator reshuffling.

    Refits the discriminator for each reshuffle; this is the simulation that
    calibrates acceptance bands for the ratio.
    """
    if reshuffles < 1:
        raise InvalidSpec("need at least one reshuffle")
    _schemas_compatible(real, synthetic)
    stacked = np.vstack([real.raw_values(), synthetic.raw_values()])
    indicator = np.concatenate([np.zeros(real.n_rows), np.ones(synthetic.n_rows)])
    gen = np.random.Generator(np.random.Philox(key=seed & ((1 << 64) - 1)))
    ratios = np.empty(reshuffles)
    for i in range(reshuffles):
        shuffled = gen.permutation(indicator)
        ratios[i] = _pmse_from_stack(stacked, shuffled, real.schema, "logistic").ratio
    return ratios


# -- utility report -----------------------------------------------------------------


@dataclass(frozen=True)
class UtilityReport:
    """Per-classifier F1/AUC plus the zoo maxima, tagged with the protocol."""

    per_classifier: dict[str, dict[str, float]]
    best_f1: float
    best_auc: float
    protocol: str

    @classmethod
    def from_scores(cls, per_classifier: dict[str, dict[str, float]], protocol: str):
        return cls(
            per_classifier=per_classifier,
            best_f1=max(v["f1"] for v in per_classifier.values()),
            best_auc=max(v["auc"] for v in per_classifier.values()),
            protocol=protocol,
        )

    def f1_vector(self, order) -> np.ndarray:
        return np.array([self.per_classifier[k]["f1"] for k in order])

    def to_json_dict(self) -> dict:
        return {
            "per_classifier": self.per_classifier,
            "best_f1": self.best_f1,
            "best_auc": self.best_auc,
            "protocol": self.protocol,
        }
