"""Independent reference implementations used to check the library.

Everything here is deliberately naive: double loops, exhaustive
enumeration, brute-force pair counting, dense grid search.  None of it
shares code with the package internals it verifies.
"""

from __future__ import annotations

from itertools import combinations

import numpy as np


def naive_log_likelihood(times, marks, n_topics, mu, alpha, beta, horizon):
    """O(N^2 K) evaluation: re-sum the full kernel history at every event."""
    ll = 0.0
    for n in range(len(times)):
        i = marks[n]
        lam = mu[i]
        for m in range(n):
            j = marks[m]
            lam += alpha[i, j] * beta[i, j] * np.exp(
                -beta[i, j] * (times[n] - times[m])
            )
        ll += np.log(lam)
    for i in range(n_topics):
        comp = mu[i] * horizon
        for j in range(n_topics):
            t_j = times[marks == j]
            comp += alpha[i, j] * np.sum(1.0 - np.exp(-beta[i, j] * (horizon - t_j)))
        ll -= comp
    return ll


def finite_difference_gradient(ll_fn, mu, alpha, h=1e-6):
    """Central differences of a scalar ll_fn(mu, alpha) in every coordinate."""
    k = mu.size
    grad_mu = np.zeros(k)
    grad_alpha = np.zeros((k, k))
    for i in range(k):
        bump = np.zeros(k)
        bump[i] = h
        grad_mu[i] = (ll_fn(mu + bump, alpha) - ll_fn(mu - bump, alpha)) / (2 * h)
        for j in range(k):
            bump2 = np.zeros((k, k))
            bump2[i, j] = h
            grad_alpha[i, j] = (
                ll_fn(mu, alpha + bump2) - ll_fn(mu, alpha - bump2)
            ) / (2 * h)
    return grad_mu, grad_alpha


def pairwise_auc(scores, truth):
    """Brute force over every positive-negative pair, ties worth 0.5."""
    scores = np.asarray(scores, dtype=float)
    truth = np.asarray(truth)
    pos = scores[truth == 1]
    neg = scores[truth == -1]
    total = 0.0
    for p in pos:
        for q in neg:
            if p > q:
                total += 1.0
            elif p == q:
                total += 0.5
    return total / (len(pos) * len(neg))


def best_two_clusters_1d(points):
    """Optimal 2-means on 1-D data by enumerating every 2-partition."""
    points = np.asarray(points, dtype=float)
    best = (np.inf, None)
    n = len(points)
    for size in range(1, n):
        for subset in combinations(range(n), size):
            mask = np.zeros(n, dtype=bool)
            mask[list(subset)] = True
            a, b = points[mask], points[~mask]
            cost = np.sum((a - a.mean()) ** 2) + np.sum((b - b.mean()) ** 2)
            if cost < best[0]:
                best = (cost, (a.mean(), b.mean()))
    return best


def svm_objective_reference(w, b, points, targets, C):
    margins = targets * (points @ w + b)
    return 0.5 * float(np.dot(w, w)) + C * float(np.maximum(0, 1 - margins).sum())


def svm_grid_minimum(points, targets, C, span=4.0, levels=4, steps=21):
    """Multi-resolution dense grid over (w, b); dimension must be 2.

    Returns the smallest objective found.  Independent of any gradient
    machinery; accuracy improves geometrically with each zoom level.
    """
    assert points.shape[1] == 2
    center = np.zeros(3)
    width = span
    best_obj = np.inf
    best_point = center.copy()
    for _ in range(levels):
        axes = [np.linspace(c - width, c + width, steps) for c in center]
        w1, w2, bb = np.meshgrid(*axes, indexing="ij")
        margins = targets[None, None, None, :] * (
            points[:, 0][None, None, None, :] * w1[..., None]
            + points[:, 1][None, None, None, :] * w2[..., None]
            + bb[..., None]
        )
        hinge = np.maximum(0.0, 1.0 - margins).sum(axis=-1)
        obj = 0.5 * (w1**2 + w2**2) + C * hinge
        idx = np.unravel_index(np.argmin(obj), obj.shape)
        if obj[idx] < best_obj:
            best_obj = float(obj[idx])
            best_point = np.array([w1[idx], w2[idx], bb[idx]])
        center = best_point
        width = 2 * width / (steps - 1)
    return best_obj, best_point
