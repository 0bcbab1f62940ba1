"""Independent oracles used to derive expected test values.

Everything here is deliberately written with plain loops and dictionaries,
separate from the production code paths it checks: brute-force histogram
query answers, a from-scratch Gaussian naive Bayes, and a full-batch
gradient-descent logistic regression driven to a 1e-10 gradient norm.
"""

from __future__ import annotations

import math

import numpy as np


def brute_force_cell_counts(rows, shape) -> list[int]:
    """Count rows per flat cell by explicit mixed-radix arithmetic."""
    counts = [0] * int(np.prod(shape))
    for row in rows:
        idx = 0
        for cell, size in zip(row, shape):
            idx = idx * size + int(cell)
        counts[idx] += 1
    return counts


def brute_force_query_answer(rows, ranges) -> int:
    """Number of rows inside the per-column inclusive cell ranges."""
    hits = 0
    for row in rows:
        if all(lo <= int(c) <= hi for c, (lo, hi) in zip(row, ranges)):
            hits += 1
    return hits


def gnb_oracle(X_train, y_train, lower, upper):
    """Plain-loop Gaussian naive Bayes sharing only the estimator *form*
    (clipped data, biased variance, floored) with the DP implementation."""
    X = np.clip(X_train, lower, upper)
    classes = sorted(set(int(v) for v in y_train))
    ranges = np.asarray(upper) - np.asarray(lower)
    floors = np.maximum(1e-9 * ranges**2, 1e-12)
    stats = {}
    for c in classes:
        Xc = X[y_train == c]
        mu = Xc.sum(axis=0) / len(Xc)
        var = ((Xc - mu) ** 2).sum(axis=0) / len(Xc)
        stats[c] = (len(Xc), mu, np.maximum(var, floors))
    n = len(y_train)

    def predict(X_test):
        Xt = np.clip(X_test, lower, upper)
        preds = []
        for row in Xt:
            best, best_ll = None, -math.inf
            for c in classes:
                cnt, mu, var = stats[c]
                ll = math.log(cnt / n)
                for j in range(len(row)):
                    ll += -0.5 * (
                        math.log(2 * math.pi * var[j]) + (row[j] - mu[j]) ** 2 / var[j]
                    )
                if ll > best_ll:
                    best, best_ll = c, ll
            preds.append(best)
        return np.asarray(preds)

    return predict


def logreg_gd_oracle(X_scaled, y01, lam, tol=1e-10, max_iter=500_000):
    """Full-batch gradient descent on mean log-loss + (lam/2)||w||^2."""
    w = np.zeros(X_scaled.shape[1])
    n = len(y01)
    for _ in range(max_iter):
        z = np.clip(X_scaled @ w, -500, 500)
        p = 1.0 / (1.0 + np.exp(-z))
        g = X_scaled.T @ (p - y01) / n + lam * w
        if np.linalg.norm(g) < tol:
            break
        w -= 1.0 * g
    return w


def auc_pair_counting(labels, scores) -> float:
    """AUC by counting positive/negative pairs with half-credit ties."""
    pos = [s for s, l in zip(scores, labels) if l == 1]
    neg = [s for s, l in zip(scores, labels) if l == 0]
    total = wins = 0
    for p in pos:
        for q in neg:
            total += 1
            if p > q:
                wins += 1
            elif p == q:
                wins += 0.5
    return wins / total
