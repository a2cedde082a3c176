"""Soft-margin RBF support vector machine trained with SMO.

The dual is solved with the maximal-violating-pair SMO of Fan, Chen & Lin
(second-order working-set selection), using a precomputed kernel matrix.
Training stops when the KKT gap ``m(alpha) - M(alpha)`` drops below ``tol``.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

TAU = 1e-12


def rbf_kernel(A, B, gamma: float) -> np.ndarray:
    A = np.atleast_2d(A)
    B = np.atleast_2d(B)
    sq = (A * A).sum(1)[:, None] + (B * B).sum(1)[None, :] - 2.0 * A @ B.T
    return np.exp(-gamma * np.maximum(sq, 0.0))


def default_gamma(X) -> float:
    """``1 / (n_features * var(X))``; falls back to 1 for constant data."""
    var = float(np.var(X))
    return 1.0 / (X.shape[1] * var) if var > 0 else 1.0


def kkt_gap(alpha, signs, K, C) -> float:
    """Maximal KKT violation ``m - M`` of a dual solution (<= 0 is optimal)."""
    G = signs * (K @ (alpha * signs)) - 1.0
    score = -signs * G
    up = ((signs > 0) & (alpha < C)) | ((signs < 0) & (alpha > 0))
    low = ((signs > 0) & (alpha > 0)) | ((signs < 0) & (alpha < C))
    if not up.any() or not low.any():
        return 0.0
    return float(score[up].max() - score[low].min())


@dataclass(frozen=True)
class SVMModel:
    support_vectors: np.ndarray = field(repr=False)
    dual_coef: np.ndarray = field(repr=False)     # alpha_i * y_i, y in {-1, +1}
    intercept: float
    gamma: float
    C: float
    support: np.ndarray = field(repr=False)       # training indices of the support vectors
    iterations: int = 0
    converged: bool = True

    kind = "svm"
    threshold = 0.0

    @property
    def n_features(self) -> int:
        return self.support_vectors.shape[1]

    def scores(self, X) -> np.ndarray:
        if len(self.dual_coef) == 0:
            return np.full(len(X), self.intercept)
        return rbf_kernel(X, self.support_vectors, self.gamma) @ self.dual_coef + self.intercept

    def labels(self, scores) -> np.ndarray:
        return (scores >= self.threshold).astype(np.int64)

    def to_params(self) -> dict:
        return {
            "support_vectors": self.support_vectors.tolist(),
            "dual_coef": self.dual_coef.tolist(),
            "intercept": self.intercept,
            "gamma": self.gamma,
            "C": self.C,
            "support": self.support.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "n_features": self.n_features,
        }

    @classmethod
    def from_params(cls, p: dict) -> "SVMModel":
        sv = np.asarray(p["support_vectors"], dtype=np.float64).reshape(-1, p["n_features"])
        return cls(sv, np.asarray(p["dual_coef"], dtype=np.float64), float(p["intercept"]),
                   float(p["gamma"]), float(p["C"]), np.asarray(p["support"], dtype=np.int64),
                   int(p["iterations"]), bool(p["converged"]))


def smo(K, signs, C: float, tol: float, max_iter: int):
    """Solve ``min 1/2 a'Qa - e'a`` s.t. ``0 <= a <= C``, ``y'a = 0``.

    Returns ``(alpha, rho, iterations, converged)`` where the decision function
    is ``sum_i alpha_i y_i K(x_i, x) - rho``.
    """
    n = len(signs)
    alpha = np.zeros(n)
    G = -np.ones(n)
    diag = np.diag(K).copy()
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        score = -signs * G
        up = ((signs > 0) & (alpha < C)) | ((signs < 0) & (alpha > 0))
        low = ((signs > 0) & (alpha > 0)) | ((signs < 0) & (alpha < C))
        if not up.any() or not low.any():
            converged = True
            break
        i = int(np.argmax(np.where(up, score, -np.inf)))
        m = score[i]
        if m - np.min(np.where(low, score, np.inf)) < tol:
            converged = True
            break
        b = m - score
        a = diag[i] + diag - 2.0 * K[i]
        a = np.where(a > 0, a, TAU)
        cand = low & (score < m)
        j = int(np.argmin(np.where(cand, -(b * b) / a, np.inf)))

        old_i, old_j = alpha[i], alpha[j]
        quad = max(K[i, i] + K[j, j] - 2.0 * K[i, j], TAU)
        if signs[i] != signs[j]:
            delta = (-G[i] - G[j]) / quad
            diff = alpha[i] - alpha[j]
            alpha[i] += delta
            alpha[j] += delta
            if diff > 0:
                if alpha[j] < 0:
                    alpha[j], alpha[i] = 0.0, diff
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, -diff
            if diff > 0:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, C - diff
            elif alpha[j] > C:
                alpha[j], alpha[i] = C, C + diff
        else:
            delta = (G[i] - G[j]) / quad
            total = alpha[i] + alpha[j]
            alpha[i] -= delta
            alpha[j] += delta
            if total > C:
                if alpha[i] > C:
                    alpha[i], alpha[j] = C, total - C
            elif alpha[j] < 0:
                alpha[j], alpha[i] = 0.0, total
            if total > C:
                if alpha[j] > C:
                    alpha[j], alpha[i] = C, total - C
            elif alpha[i] < 0:
                alpha[i], alpha[j] = 0.0, total
        d_i, d_j = alpha[i] - old_i, alpha[j] - old_j
        G += signs * (signs[i] * K[:, i] * d_i + signs[j] * K[:, j] * d_j)

    if not converged:
        log.warning("SMO stopped after %d iterations without reaching tol=%g", it, tol)
    return alpha, _rho(alpha, signs, G, C), it, converged


def _rho(alpha, signs, G, C) -> float:
    yG = signs * G
    free = (alpha > 0) & (alpha < C)
    if free.any():
        return float(yG[free].mean())
    at_upper = alpha >= C
    ub_mask = (at_upper & (signs < 0)) | (~at_upper & (signs > 0))
    lb_mask = ~ub_mask
    ub = yG[ub_mask].min() if ub_mask.any() else np.inf
    lb = yG[lb_mask].max() if lb_mask.any() else -np.inf
    if not np.isfinite(ub) or not np.isfinite(lb):
        return float(ub if np.isfinite(ub) else lb)
    return float((ub + lb) / 2.0)


def train_svm(X, y, C=1.0, gamma="scale", tol=1e-3, max_passes=100) -> SVMModel:
    X = np.asarray(X, dtype=np.float64)
    signs = np.where(np.asarray(y) == 1, 1.0, -1.0)
    g = default_gamma(X) if gamma in (None, "scale") else float(gamma)
    K = rbf_kernel(X, X, g)
    max_iter = max_passes * max(len(X), 10)
    alpha, rho, iters, converged = smo(K, signs, float(C), float(tol), max_iter)
    support = np.flatnonzero(alpha > 0)
    return SVMModel(
        support_vectors=X[support],
        dual_coef=(alpha * signs)[support],
        intercept=-rho,
        gamma=g,
        C=float(C),
        support=support,
        iterations=iters,
        converged=converged,
    )
