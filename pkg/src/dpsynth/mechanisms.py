"""Core differential privacy primitives.

Implements the Laplace mechanism, the exponential mechanism, budget
splitting/composition arithmetic, and a deterministic counter-based random
stream with labeled child streams so that concurrently trained components
stay reproducible regardless of scheduling.

Budget accounting note: with ``s = p * eps`` and ``c = eps - s`` computed in
floats, the re-summed ``s + c`` can land one ulp away from ``eps`` (the true
sum can fall exactly on a rounding tie). The ledger therefore tracks the
*remaining* budget by sequential subtraction: after spending ``s`` and then
``c``, the remainder is ``(eps - s) - c == 0.0`` bit-exact by construction,
which is the composition guarantee the rest of the toolkit relies on.
"""

from __future__ import annotations

import hashlib
import math
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    BudgetExhausted,
    EmptyCandidates,
    InvalidSpec,
    NonPositiveParameter,
    SplitOutOfRange,
)

_MASK64 = (1 << 64) - 1


def derive_seed(seed: int, *labels: str) -> int:
    """Stable 64-bit seed derived from a parent seed and a label path."""
    h = hashlib.blake2b(digest_size=8)
    h.update((seed & _MASK64).to_bytes(8, "little"))
    for label in labels:
        h.update(b"/")
        h.update(label.encode("utf-8"))
    return int.from_bytes(h.digest(), "little")


class Rng:
    """Deterministic random stream (Philox, counter-based).

    Identical seeds produce identical streams. ``child(label)`` derives an
    independent stream from the parent seed and the label, so parallel tasks
    can each own a stream without sharing handles.
    """

    def __init__(self, seed: int):
        self.seed = seed & _MASK64
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def child(self, label: str) -> "Rng":
        return Rng(derive_seed(self.seed, label))

    @property
    def generator(self) -> np.random.Generator:
        return self._gen

    def __repr__(self) -> str:  # pragma: no cover
        return f"Rng(seed={self.seed:#018x})"


@dataclass(frozen=True)
class PrivacyBudget:
    """An (epsilon, delta) privacy budget."""

    epsilon: float
    delta: float = 0.0

    def __post_init__(self):
        if not math.isfinite(self.epsilon) or self.epsilon < 0:
            raise NonPositiveParameter(f"epsilon must be >= 0, got {self.epsilon}")
        if not 0.0 <= self.delta <= 1.0:
            raise InvalidSpec(f"delta must lie in [0, 1], got {self.delta}")


@dataclass
class BudgetLedger:
    """Single-owner record of budget spends against a declared total.

    The remaining budget is updated by subtraction on every spend, so a
    sequence of spends that structurally sums to the total (e.g. ``p * eps``
    followed by ``eps - p * eps``) drives the remainder to exactly 0.0.
    """

    total: PrivacyBudget
    spends: list[tuple[str, PrivacyBudget]] = field(default_factory=list)

    def __post_init__(self):
        self._remaining_epsilon = self.total.epsilon
        self._remaining_delta = self.total.delta

    @property
    def remaining(self) -> PrivacyBudget:
        return PrivacyBudget(max(self._remaining_epsilon, 0.0), max(self._remaining_delta, 0.0))

    @property
    def spent(self) -> PrivacyBudget:
        return PrivacyBudget(
            self.total.epsilon - self._remaining_epsilon,
            self.total.delta - self._remaining_delta,
        )

    def spend(self, label: str, amount: PrivacyBudget) -> None:
        if amount.epsilon > self._remaining_epsilon or amount.delta > self._remaining_delta:
            raise BudgetExhausted(
                f"spend {label!r} of (eps={amount.epsilon}, delta={amount.delta}) exceeds "
                f"remaining (eps={self._remaining_epsilon}, delta={self._remaining_delta})"
            )
        self._remaining_epsilon -= amount.epsilon
        self._remaining_delta -= amount.delta
        self.spends.append((label, amount))

    def to_json_dict(self) -> dict:
        return {
            "total": {"epsilon": self.total.epsilon, "delta": self.total.delta},
            "spends": [
                {"label": label, "epsilon": b.epsilon, "delta": b.delta}
                for label, b in self.spends
            ],
            "remaining": {
                "epsilon": self._remaining_epsilon,
                "delta": self._remaining_delta,
            },
        }


def laplace(value: float, sensitivity: float, epsilon: float, rng: Rng) -> float:
    """Return ``value`` plus Laplace(sensitivity / epsilon) noise."""
    if sensitivity <= 0:
        raise NonPositiveParameter(f"sensitivity must be > 0, got {sensitivity}")
    if epsilon <= 0:
        raise NonPositiveParameter(f"epsilon must be > 0, got {epsilon}")
    scale = sensitivity / epsilon
    return float(value + rng.generator.laplace(0.0, scale))


def exponential_choice(
    scores, sensitivity: float, epsilon: float, rng: Rng
) -> int:
    """Sample an index with probability proportional to exp(eps * score / (2 * sens)).

    The exponent is max-shifted before exponentiation so arbitrarily large
    ``epsilon * score`` products stay finite; ``epsilon == 0`` degenerates to
    a uniform choice.
    """
    scores = np.asarray(scores, dtype=float)
    if scores.size == 0:
        raise EmptyCandidates("exponential mechanism needs at least one candidate")
    if sensitivity <= 0:
        raise NonPositiveParameter(f"sensitivity must be > 0, got {sensitivity}")
    if epsilon < 0:
        raise NonPositiveParameter(f"epsilon must be >= 0, got {epsilon}")
    logits = (epsilon / (2.0 * sensitivity)) * scores
    logits = logits - logits.max()
    probs = np.exp(logits)
    probs /= probs.sum()
    return int(rng.generator.choice(scores.size, p=probs))


def split_budget(total: PrivacyBudget, p: float) -> tuple[PrivacyBudget, PrivacyBudget]:
    """Split a budget into (synthesizer, classifier) shares p and 1 - p.

    The classifier share is computed as the complement ``total - synth`` so
    that spending both against a ledger leaves exactly zero remainder.
    """
    if not 0.0 < p < 1.0:
        raise SplitOutOfRange(f"split factor must satisfy 0 < p < 1, got {p}")
    synth_eps = p * total.epsilon
    synth_delta = p * total.delta
    synth = PrivacyBudget(synth_eps, synth_delta)
    clf = PrivacyBudget(total.epsilon - synth_eps, total.delta - synth_delta)
    return synth, clf
