"""Experiment orchestration: epsilon sweeps over synthesizers (plain or
QUAIL-wrapped), TSTR/TRTR scoring with the classifier zoo, pMSE, SRA, and
report emission.

Every (synthesizer, epsilon, run) cell derives its own random stream from
the master seed and the cell coordinates, so scheduling never affects the
report. Each synthesizer fit gets a fresh budget ledger and the harness
asserts it closes exactly at the declared spend. A failed cell is recorded
with its error and does not abort the plan.
"""

from __future__ import annotations

import csv
import json
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .classifiers import ZOO_KINDS, fit_baseline
from .data import (
    AccessLog,
    SyntheticTaskSpec,
    TabularDataset,
    load_csv,
    load_schema_json,
    train_test_split,
)
from .errors import (
    AuditViolation,
    DpSynthError,
    EmptyPlan,
    InvalidSpec,
    ReportIoError,
)
from .mechanisms import BudgetLedger, PrivacyBudget, Rng
from .metrics import UtilityReport, auc_roc_ovr, f1_score, pmse_ratio, sra
from .mwem import MwemConfig, MwemSynthesizer
from .quail import DeltaGrid, QuailConfig, quail_fit_sample

REPORT_VERSION = 1

# departures from the source evaluation protocol, echoed into every report
PROTOCOL_DEVIATIONS = [
    "classifier zoo reduced to logistic/decision_tree/random_forest",
    "train/test split defaults to 0.8 stratified (source protocol unstated)",
    "run counts default to 12 (25 for QUAIL sweeps), scaled from 75",
    "synthetic sample size equals the real training-split size",
]


@dataclass(frozen=True)
class SynthesizerPlan:
    """One synthesizer column of the report; optionally QUAIL-wrapped."""

    name: str
    kind: str = "mwem"
    params: dict = field(default_factory=dict)
    quail_split: float | None = None
    quail_classifier: str = "gnb"
    quail_classifier_params: dict = field(default_factory=dict)

    def build(self):
        if self.kind != "mwem":
            raise InvalidSpec(f"unknown synthesizer kind {self.kind!r}")
        return MwemSynthesizer(MwemConfig(**self.params))

    def to_json_dict(self) -> dict:
        out = {"name": self.name, "kind": self.kind, "params": dict(self.params)}
        if self.quail_split is not None:
            out["quail"] = {
                "split": self.quail_split,
                "classifier": self.quail_classifier,
                "classifier_params": dict(self.quail_classifier_params),
            }
        return out


@dataclass(frozen=True)
class ExperimentPlan:
    dataset_csv: str | None = None
    dataset_schema: str | None = None
    synthetic_spec: SyntheticTaskSpec | None = None
    synthetic_feature_bins: int = 4
    synthesizers: tuple[SynthesizerPlan, ...] = ()
    epsilons: tuple[float, ...] = (0.01, 0.1, 0.5, 1.0, 3.0, 6.0, 9.0)
    runs: int = 12
    split_fraction: float = 0.8
    zoo: tuple[str, ...] = ZOO_KINDS
    output_dir: str = "reports"
    master_seed: int = 0

    def validate(self) -> None:
        if not self.synthesizers:
            raise EmptyPlan("plan lists no synthesizers")
        if len({s.name for s in self.synthesizers}) != len(self.synthesizers):
            raise InvalidSpec("synthesizer names must be unique")
        if not self.epsilons:
            raise InvalidSpec("plan needs at least one epsilon")
        eps = list(self.epsilons)
        if any(e <= 0 for e in eps) or eps != sorted(eps):
            raise InvalidSpec(f"epsilons must be positive and ascending, got {eps}")
        if self.runs < 1:
            raise InvalidSpec(f"runs must be >= 1, got {self.runs}")
        if not 0.0 < self.split_fraction < 1.0:
            raise InvalidSpec(f"split fraction must lie in (0, 1), got {self.split_fraction}")
        if not self.zoo or any(k not in ZOO_KINDS for k in self.zoo):
            raise InvalidSpec(f"zoo must be a nonempty subset of {ZOO_KINDS}")
        has_csv = self.dataset_csv is not None
        if has_csv == (self.synthetic_spec is not None):
            raise InvalidSpec("plan needs exactly one of dataset_csv or synthetic_spec")
        if has_csv and self.dataset_schema is None:
            raise InvalidSpec("dataset_csv requires dataset_schema")

    def load_dataset(self) -> TabularDataset:
        if self.synthetic_spec is not None:
            from .data import generate_classification_data

            return generate_classification_data(
                self.synthetic_spec, feature_bins=self.synthetic_feature_bins
            )
        schema, target = load_schema_json(self.dataset_schema)
        return load_csv(self.dataset_csv, schema, target=target)

    def to_json_dict(self) -> dict:
        out = {
            "synthesizers": [s.to_json_dict() for s in self.synthesizers],
            "epsilons": list(self.epsilons),
            "runs": self.runs,
            "split_fraction": self.split_fraction,
            "zoo": list(self.zoo),
            "output_dir": self.output_dir,
            "master_seed": self.master_seed,
        }
        if self.dataset_csv is not None:
            out["dataset"] = {"csv": self.dataset_csv, "schema": self.dataset_schema}
        else:
            s = self.synthetic_spec
            out["dataset"] = {
                "synthetic": {
                    "n_samples": s.n_samples,
                    "n_features": s.n_features,
                    "n_classes": s.n_classes,
                    "n_informative": s.informative,
                    "class_separation": s.class_separation,
                    "seed": s.seed,
                    "feature_bins": self.synthetic_feature_bins,
                }
            }
        return out

    @classmethod
    def from_json_dict(cls, doc: dict) -> "ExperimentPlan":
        try:
            synths = []
            for s in doc.get("synthesizers", []):
                quail = s.get("quail")
                synths.append(
                    SynthesizerPlan(
                        name=s["name"],
                        kind=s.get("kind", "mwem"),
                        params=s.get("params", {}),
                        quail_split=quail.get("split") if quail else None,
                        quail_classifier=quail.get("classifier", "gnb") if quail else "gnb",
                        quail_classifier_params=quail.get("classifier_params", {})
                        if quail
                        else {},
                    )
                )
            ds = doc.get("dataset", {})
            synth_spec = None
            feature_bins = 4
            if "synthetic" in ds:
                raw = dict(ds["synthetic"])
                feature_bins = raw.pop("feature_bins", 4)
                synth_spec = SyntheticTaskSpec(**raw)
            kwargs = {}
            for key in ("epsilons", "zoo"):
                if key in doc:
                    kwargs[key] = tuple(doc[key])
            for key in ("runs", "split_fraction", "output_dir", "master_seed"):
                if key in doc:
                    kwargs[key] = doc[key]
            return cls(
                dataset_csv=ds.get("csv"),
                dataset_schema=ds.get("schema"),
                synthetic_spec=synth_spec,
                synthetic_feature_bins=feature_bins,
                synthesizers=tuple(synths),
                **kwargs,
            )
        except (KeyError, TypeError) as exc:
            raise InvalidSpec(f"malformed plan: {exc}") from exc

    @classmethod
    def from_json_file(cls, path) -> "ExperimentPlan":
        with open(path, "r", encoding="utf-8") as fh:
            try:
                doc = json.load(fh)
            except json.JSONDecodeError as exc:
                raise InvalidSpec(f"plan file {path}: invalid JSON ({exc})") from exc
        return cls.from_json_dict(doc)


@dataclass
class RunRecord:
    synthesizer: str
    epsilon: float
    run: int
    seed: int
    status: str  # "ok" | "failed"
    tstr: UtilityReport | None = None
    pmse: dict | None = None
    sra: float | None = None
    wall_clock_seconds: float = 0.0
    error: str | None = None

    def to_json_dict(self) -> dict:
        return {
            "synthesizer": self.synthesizer,
            "epsilon": self.epsilon,
            "run": self.run,
            "seed": self.seed,
            "status": self.status,
            "tstr": self.tstr.to_json_dict() if self.tstr else None,
            "pmse": self.pmse,
            "sra": self.sra,
            "wall_clock_seconds": self.wall_clock_seconds,
            "error": self.error,
        }


@dataclass
class EvaluationReport:
    plan: ExperimentPlan
    records: list[RunRecord]
    trtr: dict
    aggregates: list[dict]
    delta_grid: DeltaGrid | None = None

    def to_json_dict(self) -> dict:
        return {
            "version": REPORT_VERSION,
            "code_version": __version__,
            "plan": self.plan.to_json_dict(),
            "records": [r.to_json_dict() for r in self.records],
            "aggregates": self.aggregates,
            "trtr": self.trtr,
            "deviations": PROTOCOL_DEVIATIONS,
        }

    @property
    def failed_records(self) -> list[RunRecord]:
        return [r for r in self.records if r.status != "ok"]


def _mean_stderr(values: list[float]) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    if arr.size == 0:
        return float("nan"), float("nan")
    if arr.size == 1:
        return float(arr[0]), 0.0
    return float(arr.mean()), float(arr.std(ddof=1) / np.sqrt(arr.size))


def _zoo_utility(
    train: TabularDataset,
    test: TabularDataset,
    zoo: tuple[str, ...],
    seed_rng: Rng,
    protocol: str,
) -> UtilityReport:
    """Fit each zoo member on ``train`` and score on ``test``."""
    y_test = test.target_vector()
    test_classes = np.unique(y_test)
    per_clf: dict[str, dict[str, float]] = {}
    for kind in zoo:
        clf = fit_baseline(train, kind, seed=seed_rng.child(kind).seed)
        preds = clf.predict(test)
        proba = clf.predict_proba(test)
        aligned = np.zeros((test.n_rows, test_classes.size))
        for i, c in enumerate(test_classes):
            hit = np.flatnonzero(clf.classes == c)
            if hit.size:
                aligned[:, i] = proba[:, hit[0]]
        per_clf[kind] = {
            "f1": f1_score(y_test, preds),
            "auc": auc_roc_ovr(y_test, aligned, test_classes),
        }
    return UtilityReport.from_scores(per_clf, protocol)


def _fit_and_sample(
    spec: SynthesizerPlan, train: TabularDataset, epsilon: float, rng: Rng
) -> tuple[TabularDataset, BudgetLedger]:
    """One synthesizer fit on a fresh ledger; returns |train| synthetic rows."""
    if spec.quail_split is not None:
        cfg = QuailConfig(
            split_factor=spec.quail_split,
            n_samples=train.n_rows,
            synthesizer=spec.build,
            classifier=spec.quail_classifier,
            classifier_params=spec.quail_classifier_params,
        )
        result = quail_fit_sample(train, train.target_column, epsilon, cfg, rng)
        return result.synthetic, result.ledger
    ledger = BudgetLedger(PrivacyBudget(epsilon))
    synth = spec.build()
    synth.fit(train, epsilon, rng.child("fit"), ledger=ledger)
    return synth.sample(train.n_rows, rng.child("sample")), ledger


def run_plan(plan: ExperimentPlan, progress=None) -> EvaluationReport:
    plan.validate()
    dataset = plan.load_dataset()
    if dataset.target_column is None:
        raise InvalidSpec("benchmark dataset needs a target column")
    master = Rng(plan.master_seed)

    # TRTR baseline once per run (shared across synthesizers and epsilons)
    trtr_reports: dict[int, UtilityReport] = {}
    splits: dict[int, tuple[TabularDataset, TabularDataset, AccessLog]] = {}
    for r in range(plan.runs):
        split_seed = master.child(f"split/{r}").seed
        train, test = train_test_split(dataset, plan.split_fraction, split_seed)
        log = AccessLog()
        test = test.with_audit(log, "real_test")
        splits[r] = (train, test, log)
        trtr_reports[r] = _zoo_utility(
            train, test, plan.zoo, master.child(f"trtr/{r}"), "TRTR"
        )

    records: list[RunRecord] = []
    total = len(plan.synthesizers) * len(plan.epsilons) * plan.runs
    done = 0
    for spec in plan.synthesizers:
        for eps in plan.epsilons:
            for r in range(plan.runs):
                train, test, log = splits[r]
                cell_rng = master.child(f"cell/{spec.name}/{eps}/{r}")
                record = RunRecord(
                    synthesizer=spec.name, epsilon=eps, run=r, seed=cell_rng.seed, status="ok"
                )
                started = time.perf_counter()
                try:
                    fit_mark = log.mark()
                    synthetic, ledger = _fit_and_sample(spec, train, eps, cell_rng)
                    if log.since(fit_mark):
                        raise AuditViolation(
                            "synthesizer fit read the held-out test split"
                        )
                    if ledger.remaining.epsilon != 0.0:
                        raise AuditViolation(
                            f"ledger not exhausted: {ledger.remaining.epsilon} left of {eps}"
                        )
                    synth_for_zoo = (
                        synthetic
                        if synthetic.target_column
                        else TabularDataset(
                            synthetic.schema,
                            synthetic.values,
                            target_column=train.target_column,
                            _validated=True,
                        )
                    )
                    record.tstr = _zoo_utility(
                        synth_for_zoo, test, plan.zoo, cell_rng.child("zoo"), "TSTR"
                    )
                    record.pmse = pmse_ratio(train, synthetic).to_json_dict()
                    record.sra = sra(
                        trtr_reports[r].f1_vector(plan.zoo), tstr.f1_vector(plan.zoo)
                    )
                except DpSynthError as exc:
                    record.status = "failed"
                    record.error = f"{type(exc).__name__}: {exc}"
                record.wall_clock_seconds = time.perf_counter() - started
                records.append(record)
                done += 1
                if progress is not None:
                    progress(done, total)

    aggregates = compute_aggregates(records)
    trtr = {
        "records": [
            {"run": r, **trtr_reports[r].to_json_dict()} for r in range(plan.runs)
        ],
        "mean_best_f1": _mean_stderr([u.best_f1 for u in trtr_reports.values()])[0],
        "mean_best_auc": _mean_stderr([u.best_auc for u in trtr_reports.values()])[0],
    }
    return EvaluationReport(plan=plan, records=records, trtr=trtr, aggregates=aggregates)


def compute_aggregates(records: list[RunRecord]) -> list[dict]:
    """Per-(synthesizer, epsilon) means and standard errors over clean runs."""
    keys = []
    for rec in records:
        key = (rec.synthesizer, rec.epsilon)
        if key not in keys:
            keys.append(key)
    out = []
    for name, eps in keys:
        cell = [r for r in records if (r.synthesizer, r.epsilon) == (name, eps)]
        ok = [r for r in cell if r.status == "ok"]
        f1_m, f1_s = _mean_stderr([r.tstr.best_f1 for r in ok])
        auc_m, auc_s = _mean_stderr([r.tstr.best_auc for r in ok])
        pm_m, pm_s = _mean_stderr([r.pmse["ratio"] for r in ok])
        sra_m, _ = _mean_stderr([r.sra for r in ok])
        out.append(
            {
                "synthesizer": name,
                "epsilon": eps,
                "runs": len(ok),
                "failed": len(cell) - len(ok),
                "mean_best_f1": f1_m,
                "stderr_f1": f1_s,
                "mean_best_auc": auc_m,
                "stderr_auc": auc_s,
                "mean_pmse_ratio": pm_m,
                "stderr_pmse_ratio": pm_s,
                "mean_sra": sra_m,
            }
        )
    return out


def sra_block(report: EvaluationReport) -> dict[tuple[str, float], float]:
    """Mean SRA per (synthesizer, epsilon), from the stored run records."""
    if len(report.plan.zoo) < 2:
        from .errors import TooFewAlgorithms

        raise TooFewAlgorithms("SRA needs at least two zoo classifiers")
    out: dict[tuple[str, float], float] = {}
    for agg in report.aggregates:
        out[(agg["synthesizer"], agg["epsilon"])] = agg["mean_sra"]
    return out


SUMMARY_COLUMNS = [
    "synthesizer",
    "epsilon",
    "mean_best_f1",
    "stderr_f1",
    "mean_best_auc",
    "stderr_auc",
    "mean_pmse_ratio",
    "stderr_pmse_ratio",
    "mean_sra",
    "runs",
]

PLOT_METRICS = ["mean_best_f1", "mean_best_auc", "mean_pmse_ratio", "mean_sra"]


def emit_report(report: EvaluationReport, out_dir) -> list[Path]:
    """Write report.json, summary.csv, per-metric plot CSVs, and the delta
    grid when present. Returns the written paths."""
    report.plan.validate()
    out = Path(out_dir)
    try:
        out.mkdir(parents=True, exist_ok=True)
        written = []

        report_path = out / "report.json"
        with open(report_path, "w", encoding="utf-8") as fh:
            json.dump(report.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        written.append(report_path)

        summary_path = out / "summary.csv"
        with open(summary_path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.writer(fh)
            writer.writerow(SUMMARY_COLUMNS)
            for agg in report.aggregates:
                writer.writerow([repr(agg[c]) if isinstance(agg[c], float) else agg[c]
                                 for c in SUMMARY_COLUMNS])
        written.append(summary_path)

        synth_names = [s.name for s in report.plan.synthesizers]
        by_key = {(a["synthesizer"], a["epsilon"]): a for a in report.aggregates}
        for metric in PLOT_METRICS:
            path = out / f"plot_{metric.removeprefix('mean_')}.csv"
            with open(path, "w", encoding="utf-8", newline="") as fh:
                writer = csv.writer(fh)
                writer.writerow(["epsilon"] + synth_names)
                for eps in report.plan.epsilons:
                    row = [repr(float(eps))]
                    for name in synth_names:
                        agg = by_key.get((name, eps))
                        row.append(repr(agg[metric]) if agg else "")
                    writer.writerow(row)
            written.append(path)

        if report.delta_grid is not None:
            grid_path = out / "delta_grid.csv"
            report.delta_grid.to_csv(grid_path)
            written.append(grid_path)

        return written
    except OSError as exc:
        raise ReportIoError(f"cannot write report to {out}: {exc}") from exc
