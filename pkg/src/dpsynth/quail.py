"""QUAIL ensemble: split the budget between a DP classifier trained on the
full data and a DP synthesizer trained without the target column, then label
the synthesizer's samples with the classifier.

The budget split follows the composition proof: the synthesizer receives
``p * epsilon`` and the classifier the complement, so the ledger closes at
exactly the declared total. The synthesizer never observes the target column
(it is handed the projected dataset, and an access log records every column
it reads).
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Callable

import numpy as np

from .classifiers import TrainedClassifier, fit_baseline, fit_dp_classifier
from .data import (
    AccessLog,
    SyntheticTaskSpec,
    TabularDataset,
    append_labels,
    drop_column,
    generate_classification_data,
    train_test_split,
)
from .errors import InvalidSpec, NoTarget, SplitOutOfRange
from .mechanisms import BudgetLedger, PrivacyBudget, Rng, split_budget
from .metrics import f1_score
from .mwem import MwemConfig, MwemSynthesizer

SYNTH_TRAIN_AUDIT = "synthesizer_train"


@dataclass(frozen=True)
class QuailConfig:
    """QUAIL run parameters: budget split, sample count, and components."""

    split_factor: float
    n_samples: int
    synthesizer: Callable[[], object] = MwemSynthesizer
    classifier: str = "gnb"
    classifier_params: dict = field(default_factory=dict)
    seed: int = 0

    def __post_init__(self):
        if not 0.0 < self.split_factor < 1.0:
            raise SplitOutOfRange(
                f"split factor must satisfy 0 < p < 1, got {self.split_factor}"
            )
        if self.n_samples < 0:
            raise InvalidSpec(f"n_samples must be >= 0, got {self.n_samples}")


@dataclass
class QuailResult:
    synthetic: TabularDataset
    ledger: BudgetLedger
    synthesizer_budget: PrivacyBudget
    classifier_budget: PrivacyBudget
    classifier: TrainedClassifier
    access_log: AccessLog

    @property
    def synthesizer_columns(self) -> set[str]:
        return self.access_log.columns_seen(SYNTH_TRAIN_AUDIT)


def quail_fit_sample(
    d: TabularDataset,
    target: str,
    epsilon: float,
    config: QuailConfig,
    rng: Rng | None = None,
    train_order: str = "synthesizer-first",
) -> QuailResult:
    """Run the ensemble and return the labeled synthetic dataset.

    The two components train on independent labeled child streams, so
    ``train_order`` only affects scheduling, never the output.
    """
    col = d.schema[d.column_index(target)]
    if col.kind != "categorical":
        raise NoTarget(f"target {target!r} must be a categorical column")
    if rng is None:
        rng = Rng(config.seed)
    if train_order not in ("synthesizer-first", "classifier-first"):
        raise InvalidSpec(f"unknown train_order {train_order!r}")

    ledger = BudgetLedger(PrivacyBudget(epsilon))
    synth_budget, clf_budget = split_budget(PrivacyBudget(epsilon), config.split_factor)

    labeled = d if d.target_column == target else TabularDataset(
        d.schema, d.values, target_column=target, _validated=True
    )
    log = AccessLog()
    projected = drop_column(labeled, target).with_audit(log, SYNTH_TRAIN_AUDIT)

    synthesizer = config.synthesizer()
    clf_holder: dict[str, TrainedClassifier] = {}

    def train_synth():
        synthesizer.fit(projected, synth_budget.epsilon, rng.child("synthesizer"), ledger=None)
        ledger.spend("synthesizer", synth_budget)

    def train_clf():
        clf_holder["clf"] = fit_dp_classifier(
            config.classifier,
            labeled,
            clf_budget.epsilon,
            rng.child("classifier"),
            ledger=None,
            **config.classifier_params,
        )
        ledger.spend("classifier", clf_budget)

    steps = (train_synth, train_clf) if train_order == "synthesizer-first" else (train_clf, train_synth)
    for step in steps:
        step()
    clf = clf_holder["clf"]

    samples = synthesizer.sample(config.n_samples, rng.child("sampling"))
    labels = clf.predict(samples) if samples.n_rows else np.empty(0, dtype=np.int64)
    synthetic = append_labels(samples, labels, target, col.cardinality)

    return QuailResult(
        synthetic=synthetic,
        ledger=ledger,
        synthesizer_budget=synth_budget,
        classifier_budget=clf_budget,
        classifier=clf,
        access_log=log,
    )


# -- split-factor sweep ------------------------------------------------------------


@dataclass(frozen=True)
class SweepConfig:
    """Component and protocol settings for the delta-F1 grid."""

    synthesizer: Callable[[], object] = MwemSynthesizer
    classifier: str = "gnb"
    classifier_params: dict = field(default_factory=dict)
    feature_bins: int = 4
    split_fraction: float = 0.8
    rf_trees: int = 10
    rf_max_depth: int = 10


@dataclass
class DeltaGrid:
    """delta = F1_vanilla - F1_quail, averaged per (split, size) cell."""

    splits: list[float]
    sizes: list[int]
    runs: int
    epsilon: float
    delta_mean: np.ndarray  # (len(splits), len(sizes))
    delta_stderr: np.ndarray
    f1_vanilla_mean: np.ndarray
    f1_quail_mean: np.ndarray
    f1_vanilla_full_budget_mean: np.ndarray  # auxiliary: vanilla at the full epsilon

    def to_csv(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="") as fh:
            fh.write("split_p," + ",".join(f"size_{s}" for s in self.sizes) + "\n")
            for i, p in enumerate(self.splits):
                cells = ",".join(repr(float(v)) for v in self.delta_mean[i])
                fh.write(f"{p},{cells}\n")

    def to_json_dict(self) -> dict:
        return {
            "splits": self.splits,
            "sizes": self.sizes,
            "runs": self.runs,
            "epsilon": self.epsilon,
            "delta_mean": self.delta_mean.tolist(),
            "delta_stderr": self.delta_stderr.tolist(),
            "f1_vanilla_mean": self.f1_vanilla_mean.tolist(),
            "f1_quail_mean": self.f1_quail_mean.tolist(),
            "f1_vanilla_full_budget_mean": self.f1_vanilla_full_budget_mean.tolist(),
        }


def _stderr(values: np.ndarray) -> float:
    if values.size < 2:
        return 0.0
    return float(values.std(ddof=1) / np.sqrt(values.size))


def quail_delta_sweep(
    template: SyntheticTaskSpec,
    sizes: list[int],
    splits: list[float],
    epsilon: float,
    runs: int,
    config: SweepConfig | None = None,
    rng: Rng | None = None,
    progress: Callable[[int, int], None] | None = None,
) -> DeltaGrid:
    """Grid of mean F1 deltas across split factors and dataset sizes.

    Per cell and run: the vanilla scenario trains the DP classifier on the
    real training split with the classifier share ``(1 - p) * epsilon``; the
    QUAIL scenario trains a random forest on QUAIL's synthetic output. Both
    are scored on the same held-out real split with macro F1. Datasets are
    shared across split factors within a (size, run) pair so the comparison
    across p is paired.
    """
    if runs < 1:
        raise InvalidSpec(f"runs must be >= 1, got {runs}")
    if not sizes or not splits:
        raise InvalidSpec("sizes and splits must be nonempty")
    for p in splits:
        if not 0.0 < p < 1.0:
            raise SplitOutOfRange(f"split factor must satisfy 0 < p < 1, got {p}")
    config = config or SweepConfig()
    rng = rng or Rng(template.seed)

    shape = (len(splits), len(sizes))
    delta = np.zeros(shape + (runs,))
    f1_v = np.zeros_like(delta)
    f1_q = np.zeros_like(delta)
    f1_v_full = np.zeros_like(delta)

    total_cells = len(splits) * len(sizes) * runs
    done = 0
    for j, size in enumerate(sizes):
        for r in range(runs):
            data_rng = rng.child(f"data/{size}/{r}")
            spec = replace(template, n_samples=size, seed=data_rng.seed)
            dataset = generate_classification_data(spec, feature_bins=config.feature_bins)
            train, test = train_test_split(
                dataset, config.split_fraction, rng.child(f"split/{size}/{r}").seed
            )
            y_test = test.target_vector()
            for i, p in enumerate(splits):
                cell_rng = rng.child(f"cell/{p}/{size}/{r}")
                _, clf_budget = split_budget(PrivacyBudget(epsilon), p)

                vanilla = fit_dp_classifier(
                    config.classifier,
                    train,
                    clf_budget.epsilon,
                    cell_rng.child("vanilla"),
                    **config.classifier_params,
                )
                f1_v[i, j, r] = f1_score(y_test, vanilla.predict(test))

                vanilla_full = fit_dp_classifier(
                    config.classifier,
                    train,
                    epsilon,
                    cell_rng.child("vanilla_full"),
                    **config.classifier_params,
                )
                f1_v_full[i, j, r] = f1_score(y_test, vanilla_full.predict(test))

                qcfg = QuailConfig(
                    split_factor=p,
                    n_samples=train.n_rows,
                    synthesizer=config.synthesizer,
                    classifier=config.classifier,
                    classifier_params=config.classifier_params,
                )
                result = quail_fit_sample(
                    train, train.target_column, epsilon, qcfg, cell_rng.child("quail")
                )
                rf = fit_baseline(
                    result.synthetic,
                    "random_forest",
                    seed=cell_rng.child("rf").seed,
                    n_trees=config.rf_trees,
                    max_depth=config.rf_max_depth,
                )
                f1_q[i, j, r] = f1_score(y_test, rf.predict(test))
                delta[i, j, r] = f1_v[i, j, r] - f1_q[i, j, r]
                done += 1
                if progress is not None:
                    progress(done, total_cells)

    stderr = np.apply_along_axis(_stderr, 2, delta)
    return DeltaGrid(
        splits=list(splits),
        sizes=list(sizes),
        runs=runs,
        epsilon=epsilon,
        delta_mean=delta.mean(axis=2),
        delta_stderr=stderr,
        f1_vanilla_mean=f1_v.mean(axis=2),
        f1_quail_mean=f1_q.mean(axis=2),
        f1_vanilla_full_budget_mean=f1_v_full.mean(axis=2),
    )
