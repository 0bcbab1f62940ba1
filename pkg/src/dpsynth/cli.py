"""Command-line entry point.

Exit codes are a stable contract: 0 success, 1 partial failure with
artifacts written, 2 validation error, 3 runtime mechanism error. Stdout
carries machine-readable output paths; logs go to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

from .data import (
    SyntheticTaskSpec,
    load_csv,
    load_schema_json,
    write_csv,
)
from .errors import DpSynthError, MechanismError, ValidationError
from .harness import ExperimentPlan, emit_report, run_plan
from .mechanisms import BudgetLedger, PrivacyBudget, Rng
from .mwem import MwemConfig, MwemSynthesizer
from .quail import QuailConfig, SweepConfig, quail_delta_sweep, quail_fit_sample

EXIT_OK = 0
EXIT_PARTIAL = 1
EXIT_VALIDATION = 2
EXIT_MECHANISM = 3


def _log(msg: str) -> None:
    print(msg, file=sys.stderr)


def _positive_epsilon(value: str) -> float:
    eps = float(value)
    if eps <= 0:
        raise argparse.ArgumentTypeError(f"epsilon must be > 0, got {value}")
    return eps


def _float_list(value: str) -> list[float]:
    items = [v for v in value.split(",") if v.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a nonempty comma-separated list")
    return [float(v) for v in items]


def _int_list(value: str) -> list[int]:
    items = [v for v in value.split(",") if v.strip()]
    if not items:
        raise argparse.ArgumentTypeError("expected a nonempty comma-separated list")
    return [int(v) for v in items]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="dpsynth",
        description="Differentially private tabular data synthesis and benchmarking.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_synth = sub.add_parser("synth", help="fit a DP synthesizer and emit synthetic rows")
    p_synth.add_argument("schema", help="schema JSON file")
    p_synth.add_argument("data", help="input CSV")
    p_synth.add_argument("--synth", default="mwem", choices=["mwem"])
    p_synth.add_argument("--epsilon", type=_positive_epsilon, required=True)
    p_synth.add_argument("--n", type=int, required=True, help="rows to sample")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--out", required=True, help="output CSV path")
    p_synth.add_argument("--iterations", type=int, default=30)
    p_synth.add_argument("--workload-queries", type=int, default=32)
    p_synth.set_defaults(func=cmd_synth)

    p_quail = sub.add_parser("quail", help="QUAIL: budget-split synthesizer + classifier")
    p_quail.add_argument("schema")
    p_quail.add_argument("data")
    p_quail.add_argument("--target", required=True)
    p_quail.add_argument("--epsilon", type=_positive_epsilon, required=True)
    p_quail.add_argument("--split", type=float, required=True, help="synthesizer share p")
    p_quail.add_argument("--synth", default="mwem", choices=["mwem"])
    p_quail.add_argument("--clf", default="gnb", choices=["gnb", "logreg"])
    p_quail.add_argument("--n", type=int, required=True)
    p_quail.add_argument("--seed", type=int, default=0)
    p_quail.add_argument("--out", required=True, help="output CSV path")
    p_quail.set_defaults(func=cmd_quail)

    p_bench = sub.add_parser("bench", help="run an experiment plan")
    p_bench.add_argument("plan", help="plan JSON file")
    p_bench.add_argument("--out", default=None, help="override the plan's output directory")
    p_bench.add_argument("--runs", type=int, default=None, help="override run count")
    p_bench.add_argument("--seed", type=int, default=None, help="override master seed")
    p_bench.set_defaults(func=cmd_bench)

    p_sweep = sub.add_parser("quail-sweep", help="delta-F1 grid over split factors and sizes")
    p_sweep.add_argument("--epsilon", type=_positive_epsilon, default=3.0)
    p_sweep.add_argument("--splits", type=_float_list, default=[0.1, 0.3, 0.5, 0.7, 0.9])
    p_sweep.add_argument(
        "--sizes", type=_int_list, default=[10000, 20000, 30000, 40000, 50000]
    )
    p_sweep.add_argument("--runs", type=int, default=25)
    p_sweep.add_argument("--seed", type=int, default=0)
    p_sweep.add_argument("--out", required=True, help="output directory")
    p_sweep.add_argument("--features", type=int, default=7)
    p_sweep.add_argument("--classes", type=int, default=10)
    p_sweep.add_argument("--feature-bins", type=int, default=4)
    p_sweep.add_argument("--clf", default="gnb", choices=["gnb", "logreg"])
    p_sweep.set_defaults(func=cmd_quail_sweep)

    return parser


def cmd_synth(args) -> int:
    schema, target = load_schema_json(args.schema)
    dataset = load_csv(args.data, schema, target=target)
    config = MwemConfig(iterations=args.iterations, queries_per_workload=args.workload_queries)
    synth = MwemSynthesizer(config)
    ledger = BudgetLedger(PrivacyBudget(args.epsilon))
    rng = Rng(args.seed)
    synth.fit(dataset, args.epsilon, rng.child("fit"), ledger=ledger)
    out = synth.sample(args.n, rng.child("sample"))
    write_csv(out, args.out)
    _log(f"ledger: {json.dumps(ledger.to_json_dict())}")
    print(args.out)
    return EXIT_OK


def cmd_quail(args) -> int:
    if not 0.0 < args.split < 1.0:
        raise ValidationError(f"--split must satisfy 0 < p < 1, got {args.split}")
    schema, schema_target = load_schema_json(args.schema)
    dataset = load_csv(args.data, schema, target=schema_target or args.target)
    config = QuailConfig(
        split_factor=args.split,
        n_samples=args.n,
        classifier=args.clf,
        seed=args.seed,
    )
    result = quail_fit_sample(dataset, args.target, args.epsilon, config, Rng(args.seed))
    write_csv(result.synthetic, args.out)
    ledger_path = Path(args.out).with_suffix(".ledger.json")
    doc = result.ledger.to_json_dict()
    doc["epsilon_synthesizer"] = result.synthesizer_budget.epsilon
    doc["epsilon_classifier"] = result.classifier_budget.epsilon
    with open(ledger_path, "w", encoding="utf-8") as fh:
        json.dump(doc, fh, indent=2, sort_keys=True)
        fh.write("\n")
    _log(f"ledger written to {ledger_path}")
    print(args.out)
    print(ledger_path)
    return EXIT_OK


def cmd_bench(args) -> int:
    plan = ExperimentPlan.from_json_file(args.plan)
    overrides = {}
    if args.out is not None:
        overrides["output_dir"] = args.out
    if args.runs is not None:
        overrides["runs"] = args.runs
    if args.seed is not None:
        overrides["master_seed"] = args.seed
    if overrides:
        from dataclasses import replace

        plan = replace(plan, **overrides)
    plan.validate()

    def progress(done, total):
        _log(f"cells done: {done}/{total}")

    report = run_plan(plan, progress=progress)
    written = emit_report(report, plan.output_dir)
    for path in written:
        print(path)
    failed = report.failed_records
    if failed:
        _log(f"{len(failed)} cell(s) failed; see report.json")
        return EXIT_PARTIAL
    return EXIT_OK


def cmd_quail_sweep(args) -> int:
    if args.runs < 1:
        raise ValidationError(f"--runs must be >= 1, got {args.runs}")
    template = SyntheticTaskSpec(
        n_samples=max(args.sizes),
        n_features=args.features,
        n_classes=args.classes,
        seed=args.seed,
    )
    config = SweepConfig(classifier=args.clf, feature_bins=args.feature_bins)

    def progress(done, total):
        if done % 10 == 0 or done == total:
            _log(f"cells done: {done}/{total}")

    grid = quail_delta_sweep(
        template,
        sizes=args.sizes,
        splits=args.splits,
        epsilon=args.epsilon,
        runs=args.runs,
        config=config,
        rng=Rng(args.seed),
        progress=progress,
    )
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    csv_path = out / f"delta_grid_eps{args.epsilon}.csv"
    json_path = out / f"delta_grid_eps{args.epsilon}.json"
    grid.to_csv(csv_path)
    with open(json_path, "w", encoding="utf-8") as fh:
        json.dump(grid.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    print(csv_path)
    print(json_path)
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        # argparse exits 2 on bad flags, which matches the validation code
        return int(exc.code) if exc.code else EXIT_OK
    try:
        return args.func(args)
    except ValidationError as exc:
        _log(f"validation error: {exc}")
        return EXIT_VALIDATION
    except MechanismError as exc:
        _log(f"mechanism error: {exc}")
        return EXIT_MECHANISM
    except DpSynthError as exc:
        _log(f"error: {exc}")
        return EXIT_MECHANISM


if __name__ == "__main__":
    sys.exit(main())
