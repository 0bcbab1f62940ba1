"""Internal convex logistic-regression solvers (L-BFGS via scipy).

These back both the DP logistic classifier (output perturbation needs the
regularized optimum) and the propensity-score discriminator. The objective
is mean log-loss plus an L2 ridge; with a positive ridge it is strongly
convex, so the optimum is unique and solver-independent.
"""

from __future__ import annotations

import numpy as np
from scipy.optimize import minimize


def sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * np.clip(z, -500, 500)))


def _binary_objective(w, X, y, lam, penalty_mask):
    z = X @ w
    # log(1 + exp(-s)) evaluated stably for both signs
    s = np.where(y > 0, z, -z)
    loss = np.mean(np.logaddexp(0.0, -s))
    pw = w * penalty_mask
    obj = loss + 0.5 * lam * float(pw @ pw)
    p = sigmoid(z)
    grad = X.T @ (p - y) / X.shape[0] + lam * pw
    return obj, grad


def fit_binary(
    X: np.ndarray,
    y: np.ndarray,
    lam: float,
    penalize_intercept: bool = True,
    tol: float = 1e-12,
    max_iter: int = 2000,
) -> np.ndarray:
    """Weights minimizing mean log-loss + (lam/2)||w||^2; y in {0, 1}.

    When ``penalize_intercept`` is false the last coordinate is excluded
    from the ridge term (used by the propensity model, whose intercept
    should be free to match the class balance).
    """
    y = np.asarray(y, dtype=float)
    d = X.shape[1]
    mask = np.ones(d)
    if not penalize_intercept:
        mask[-1] = 0.0
    res = minimize(
        _binary_objective,
        np.zeros(d),
        args=(X, y, lam, mask),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "ftol": tol, "gtol": 1e-12},
    )
    return res.x


def _softmax(Z: np.ndarray) -> np.ndarray:
    Z = Z - Z.max(axis=1, keepdims=True)
    E = np.exp(Z)
    return E / E.sum(axis=1, keepdims=True)


def _multinomial_objective(w_flat, X, Y, lam, k):
    n, d = X.shape
    W = w_flat.reshape(d, k)
    P = _softmax(X @ W)
    # cross-entropy; Y is one-hot
    loss = -np.mean(np.log(np.clip((P * Y).sum(axis=1), 1e-300, None)))
    obj = loss + 0.5 * lam * float(w_flat @ w_flat)
    grad = X.T @ (P - Y) / n + lam * W
    return obj, grad.ravel()


def fit_multinomial(
    X: np.ndarray, y: np.ndarray, n_classes: int, lam: float, max_iter: int = 1000
) -> np.ndarray:
    """Softmax regression weights of shape (n_features, n_classes)."""
    n, d = X.shape
    Y = np.zeros((n, n_classes))
    Y[np.arange(n), np.asarray(y, dtype=int)] = 1.0
    res = minimize(
        _multinomial_objective,
        np.zeros(d * n_classes),
        args=(X, Y, lam, n_classes),
        jac=True,
        method="L-BFGS-B",
        options={"maxiter": max_iter, "ftol": 1e-12, "gtol": 1e-10},
    )
    return res.x.reshape(d, n_classes)
