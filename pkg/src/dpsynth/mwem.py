"""MWEM synthesizer: multiplicative weights over a flat histogram, with
exponential-mechanism query selection and Laplace measurement.

Each of the T iterations spends ``epsilon / T``, split between selecting the
worst-approximated workload query (score ``|q(true) - q(approx)|``,
sensitivity 1) and measuring the selected query with Laplace noise
(sensitivity 1). The update rule is

    w_c <- w_c * exp(q(c) * (measurement - q(approx)) / (2 * total_mass))

followed by renormalization to the dataset size; past measurements are
replayed every iteration, which is the standard convergence improvement for
multiplicative weights. Sampling from the final histogram is post-processing
and consumes no budget.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .data import (
    MAX_FLAT_DOMAIN,
    DiscretizedView,
    TabularDataset,
    cell_counts,
)
from .errors import (
    DomainTooLarge,
    DomainTooSmall,
    EmptyDataset,
    InvalidSpec,
    NonPositiveParameter,
)
from .mechanisms import BudgetLedger, PrivacyBudget, Rng, exponential_choice, laplace


@dataclass(frozen=True)
class LinearQuery:
    """Conjunction of per-column inclusive cell ranges over a view.

    Evaluates to the histogram mass inside the box; the full-domain query
    returns the total mass.
    """

    ranges: tuple[tuple[int, int], ...]

    def slices(self) -> tuple[slice, ...]:
        return tuple(slice(lo, hi + 1) for lo, hi in self.ranges)

    def value(self, weights: np.ndarray, view: DiscretizedView) -> float:
        return float(weights.reshape(view.shape)[self.slices()].sum())

    def is_full_domain(self, view: DiscretizedView) -> bool:
        return all(lo == 0 and hi == size - 1 for (lo, hi), size in zip(self.ranges, view.shape))


@dataclass(frozen=True)
class MwemConfig:
    """MWEM hyperparameters (the source construction leaves these open)."""

    iterations: int = 30
    queries_per_workload: int = 32
    workload_seed: int | None = None
    selection_fraction: float = 0.5
    update_passes: int = 10

    def __post_init__(self):
        if self.iterations < 1:
            raise NonPositiveParameter(f"iterations must be >= 1, got {self.iterations}")
        if self.queries_per_workload < 1:
            raise NonPositiveParameter(
                f"queries_per_workload must be >= 1, got {self.queries_per_workload}"
            )
        if not 0.0 < self.selection_fraction < 1.0:
            raise InvalidSpec(
                f"selection_fraction must lie in (0, 1), got {self.selection_fraction}"
            )
        if self.update_passes < 1:
            raise NonPositiveParameter(f"update_passes must be >= 1, got {self.update_passes}")


@dataclass
class HistogramDistribution:
    """Nonnegative weights over the flat cell domain, summing to total_mass."""

    weights: np.ndarray
    total_mass: float

    def check_mass(self, rel_tol: float = 1e-9) -> None:
        s = float(self.weights.sum())
        if abs(s - self.total_mass) > rel_tol * max(self.total_mass, 1.0):
            raise AssertionError(f"mass {s} drifted from {self.total_mass}")
        if self.weights.min() < 0:
            raise AssertionError("negative histogram weight")

    def to_json_dict(self) -> dict:
        nz = np.flatnonzero(self.weights)
        return {
            "cells": nz.tolist(),
            "weights": self.weights[nz].tolist(),
            "total_mass": self.total_mass,
        }


def build_workload(view: DiscretizedView, count: int, rng: Rng) -> list[LinearQuery]:
    """Random 1-3 column marginal range queries, distinct, never full-domain.

    Deterministic for a given rng seed. Raises when the domain cannot supply
    ``count`` distinct queries (in particular for single-cell domains).
    """
    if count < 1:
        raise NonPositiveParameter(f"count must be >= 1, got {count}")
    if view.domain_size < 2:
        raise DomainTooSmall("workload needs a domain with at least 2 cells")
    gen = rng.generator
    sizes = view.shape
    splittable = [j for j, s in enumerate(sizes) if s >= 2]
    queries: list[LinearQuery] = []
    seen: set[tuple[tuple[int, int], ...]] = set()
    attempts = 0
    max_attempts = 1000 + 400 * count
    while len(queries) < count and attempts < max_attempts:
        attempts += 1
        k = int(gen.integers(1, min(3, len(splittable)) + 1))
        cols = gen.choice(len(splittable), size=k, replace=False)
        chosen = {splittable[int(c)] for c in cols}
        ranges = []
        for j, size in enumerate(sizes):
            if j in chosen:
                # proper sub-range: resample until it does not cover the column
                while True:
                    a, b = sorted(int(v) for v in gen.integers(0, size, size=2))
                    if not (a == 0 and b == size - 1):
                        break
                ranges.append((a, b))
            else:
                ranges.append((0, size - 1))
        key = tuple(ranges)
        if key not in seen:
            seen.add(key)
            queries.append(LinearQuery(ranges=key))
    if len(queries) < count:
        raise DomainTooSmall(
            f"domain of shape {sizes} cannot supply {count} distinct workload queries"
        )
    return queries


def mwem_fit(
    data: TabularDataset,
    epsilon: float,
    config: MwemConfig,
    rng: Rng,
    ledger: BudgetLedger | None = None,
    hook: Callable[[int, np.ndarray, float], None] | None = None,
    workload: Iterable[LinearQuery] | None = None,
) -> HistogramDistribution:
    """Fit an epsilon-DP histogram approximation of ``data``.

    ``hook`` (if given) is called after every iteration with
    ``(iteration, weights_copy, total_mass)`` so invariants can be audited.
    A caller-supplied ``workload`` overrides the generated one.
    """
    if epsilon <= 0:
        raise NonPositiveParameter(f"epsilon must be > 0, got {epsilon}")
    if data.n_rows == 0:
        raise EmptyDataset("cannot fit MWEM on an empty dataset")

    view = DiscretizedView.from_schema(data.schema)
    if view.domain_size > MAX_FLAT_DOMAIN:
        raise DomainTooLarge(
            f"flat domain has {view.domain_size} cells (cap {MAX_FLAT_DOMAIN})"
        )
    if view.domain_size < 2:
        raise DomainTooSmall("MWEM needs a domain with at least 2 cells")

    true_weights = cell_counts(data, view).astype(float)
    n = float(data.n_rows)

    if workload is None:
        workload_rng = (
            Rng(config.workload_seed) if config.workload_seed is not None else rng.child("workload")
        )
        queries = build_workload(view, config.queries_per_workload, workload_rng)
    else:
        queries = list(workload)
        if not queries:
            raise DomainTooSmall("caller-supplied workload is empty")

    t_iters = config.iterations
    eps_iter = epsilon / t_iters
    eps_select = eps_iter * config.selection_fraction
    eps_measure = eps_iter - eps_select

    select_rng = rng.child("selection")
    measure_rng = rng.child("measurement")

    approx = np.full(view.domain_size, n / view.domain_size)
    approx_t = approx.reshape(view.shape)
    true_answers = np.array([q.value(true_weights, view) for q in queries])

    history: list[tuple[LinearQuery, float]] = []
    for t in range(t_iters):
        approx_answers = np.array([q.value(approx, view) for q in queries])
        scores = np.abs(true_answers - approx_answers)
        chosen = exponential_choice(scores, 1.0, eps_select, select_rng)
        measured = laplace(true_answers[chosen], 1.0, eps_measure, measure_rng)
        measured = min(max(measured, 0.0), n)
        history.append((queries[chosen], measured))

        for _ in range(config.update_passes):
            for q, m in history:
                sl = q.slices()
                current = float(approx_t[sl].sum())
                approx_t[sl] *= np.exp((m - current) / (2.0 * n))
                approx *= n / approx.sum()
        if hook is not None:
            hook(t, approx.copy(), n)

    if ledger is not None:
        ledger.spend("mwem", PrivacyBudget(epsilon))
    return HistogramDistribution(weights=approx, total_mass=n)


def mwem_sample(
    hist: HistogramDistribution, view: DiscretizedView, n: int, rng: Rng
) -> TabularDataset:
    """Draw n rows i.i.d. from the histogram; pure post-processing.

    Continuous cells materialize at bin midpoints, so every sampled row lies
    inside the view's declared domain.
    """
    if n < 0:
        raise NonPositiveParameter(f"sample count must be >= 0, got {n}")
    if n == 0:
        return TabularDataset(view.schema, np.empty((0, len(view.schema))), _validated=True)
    probs = np.clip(hist.weights, 0.0, None)
    probs = probs / probs.sum()
    flat = rng.generator.choice(view.domain_size, size=n, p=probs)
    values = view.representatives(flat)
    return TabularDataset(view.schema, values, _validated=True)


class MwemSynthesizer:
    """Stateful fit/sample wrapper implementing the synthesizer interface.

    Interchangeable with future synthesizers (e.g. GAN-based ones): anything
    exposing ``name``, ``fit(data, epsilon, rng, ledger)`` and
    ``sample(n, rng)`` plugs into QUAIL and the benchmark harness.
    """

    name = "mwem"

    def __init__(self, config: MwemConfig | None = None):
        self.config = config or MwemConfig()
        self._hist: HistogramDistribution | None = None
        self._view: DiscretizedView | None = None
        self._target: str | None = None

    def fit(
        self,
        data: TabularDataset,
        epsilon: float,
        rng: Rng,
        ledger: BudgetLedger | None = None,
    ) -> None:
        self._view = DiscretizedView.from_schema(data.schema)
        self._target = data.target_column
        self._hist = mwem_fit(data, epsilon, self.config, rng, ledger=ledger)

    def sample(self, n: int, rng: Rng) -> TabularDataset:
        if self._hist is None or self._view is None:
            raise InvalidSpec("synthesizer must be fit before sampling")
        out = mwem_sample(self._hist, self._view, n, rng)
        if self._target is not None:
            out = TabularDataset(
                out.schema, out.values, target_column=self._target, _validated=True
            )
        return out

    @property
    def histogram(self) -> HistogramDistribution:
        if self._hist is None:
            raise InvalidSpec("synthesizer is not fit")
        return self._hist
