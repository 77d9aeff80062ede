"""Implicit topics over embedding vectors and the derived decay matrix.

Embeddings pooled across the whole cohort are clustered once per K with
Lloyd iterations (k-means++ seeding).  Pairwise centroid similarity via an
RBF kernel exp(-||ci - cj||^2 / sigma^2) then fixes the decay-rate matrix:
similar topics decay slowly, dissimilar ones fast.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass, field

import numpy as np

DEFAULT_BETA_BASE = 1.0
DEFAULT_BETA_RATIO = 10.0
KMEANS_MAX_ITER = 300
KMEANS_REL_TOL = 1e-6


@dataclass
class TopicModel:
    """K centroids plus the similarity and decay matrices built from them.

    Mutated only while being built (fit -> similarity -> decay); treated as
    immutable afterwards and safe to share across concurrent fits.
    """

    centroids: np.ndarray
    inertia: float
    sigma: float | None = None
    similarity: np.ndarray | None = None
    beta_base: float | None = None
    beta_ratio: float | None = None
    beta: np.ndarray | None = None
    # True for fallback models whose similarity is pinned (not derived from
    # centroid geometry); build_similarity must not overwrite it.
    fixed_similarity: bool = False

    @property
    def n_topics(self) -> int:
        return int(self.centroids.shape[0])

    @property
    def dim(self) -> int:
        return int(self.centroids.shape[1])

    def to_json_dict(self) -> dict:
        return {
            "K": self.n_topics,
            "sigma": self.sigma,
            "beta_base": self.beta_base,
            "beta_ratio": self.beta_ratio,
            "centroids": self.centroids.tolist(),
            "similarity": None if self.similarity is None else self.similarity.tolist(),
            "beta": None if self.beta is None else self.beta.tolist(),
        }

    @classmethod
    def from_json_dict(cls, obj: dict) -> "TopicModel":
        model = cls(
            centroids=np.asarray(obj["centroids"], dtype=np.float64),
            inertia=float(obj.get("inertia", np.nan)),
            sigma=obj.get("sigma"),
            beta_base=obj.get("beta_base"),
            beta_ratio=obj.get("beta_ratio"),
        )
        if obj.get("similarity") is not None:
            model.similarity = np.asarray(obj["similarity"], dtype=np.float64)
        if obj.get("beta") is not None:
            model.beta = np.asarray(obj["beta"], dtype=np.float64)
        return model

    def fingerprint(self) -> str:
        """Stable hash of the serialized model, used to tag fitted models."""
        payload = json.dumps(self.to_json_dict(), sort_keys=True)
        return hashlib.sha256(payload.encode()).hexdigest()


def identity_topic_model(
    n_topics: int,
    *,
    beta_base: float = DEFAULT_BETA_BASE,
    beta_ratio: float = DEFAULT_BETA_RATIO,
) -> TopicModel:
    """Fallback model for cohorts carrying topic labels but no embeddings.

    Similarity is the identity: each topic decays at beta_base on the
    diagonal and beta_base * beta_ratio off it.
    """
    model = TopicModel(
        centroids=np.eye(n_topics, dtype=np.float64),
        inertia=0.0,
        sigma=None,
        similarity=np.eye(n_topics, dtype=np.float64),
        fixed_similarity=True,
    )
    build_decay(model, beta_base=beta_base, beta_ratio=beta_ratio)
    return model


def _squared_distances(points: np.ndarray, centers: np.ndarray) -> np.ndarray:
    """(n, K) matrix of squared Euclidean distances, clipped at zero."""
    sq = (
        np.sum(points**2, axis=1)[:, None]
        - 2.0 * points @ centers.T
        + np.sum(centers**2, axis=1)[None, :]
    )
    return np.maximum(sq, 0.0)


def _seed_centers(points: np.ndarray, k: int, rng: np.random.Generator) -> np.ndarray:
    """k-means++ seeding: D^2-weighted draws after a uniform first pick."""
    n = points.shape[0]
    centers = np.empty((k, points.shape[1]), dtype=np.float64)
    centers[0] = points[rng.integers(n)]
    closest = _squared_distances(points, centers[:1])[:, 0]
    for idx in range(1, k):
        total = closest.sum()
        if total <= 0.0:
            # All remaining mass at distance zero; fall back to any point
            # distinct from the chosen centers (caller guarantees one exists).
            chosen = {tuple(c) for c in centers[:idx]}
            for p in points:
                if tuple(p) not in chosen:
                    centers[idx] = p
                    break
            else:  # pragma: no cover - excluded by the distinct-points check
                centers[idx] = points[rng.integers(n)]
        else:
            pick = rng.choice(n, p=closest / total)
            centers[idx] = points[pick]
        dist_new = _squared_distances(points, centers[idx : idx + 1])[:, 0]
        closest = np.minimum(closest, dist_new)
    return centers


def fit_topics(
    embeddings: np.ndarray,
    n_topics: int,
    seed: int,
    *,
    max_iter: int = KMEANS_MAX_ITER,
    rel_tol: float = KMEANS_REL_TOL,
) -> TopicModel:
    """Lloyd k-means over pooled embedding vectors.

    Inertia is non-increasing across iterations (asserted); empty clusters
    are re-seeded to the point farthest from its assigned centroid.
    """
    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2:
        raise ValueError("embeddings must form a 2-D array of shared dimension")
    n = points.shape[0]
    if n_topics < 2:
        raise ValueError(f"n_topics must be >= 2, got {n_topics}")
    n_distinct = np.unique(points, axis=0).shape[0]
    if n_distinct < n_topics:
        raise ValueError(
            f"need at least {n_topics} distinct vectors, found {n_distinct}"
        )

    rng = np.random.default_rng(seed)
    centers = _seed_centers(points, n_topics, rng)

    prev_inertia = np.inf
    labels = np.zeros(n, dtype=np.int64)
    for _ in range(max_iter):
        sq = _squared_distances(points, centers)
        labels = np.argmin(sq, axis=1)
        point_cost = sq[np.arange(n), labels]
        inertia = float(point_cost.sum())
        assert inertia <= prev_inertia * (1 + 1e-12) + 1e-12, (
            f"inertia increased: {prev_inertia} -> {inertia}"
        )
        improved = prev_inertia - inertia
        if np.isfinite(prev_inertia) and improved <= rel_tol * max(prev_inertia, 1e-300):
            prev_inertia = inertia
            break
        prev_inertia = inertia

        new_centers = np.empty_like(centers)
        empties = []
        for k in range(n_topics):
            members = points[labels == k]
            if members.shape[0] == 0:
                empties.append(k)
                new_centers[k] = centers[k]
            else:
                new_centers[k] = members.mean(axis=0)
        if empties:
            # Move each empty centroid onto the currently worst-fit point.
            order = np.argsort(point_cost)[::-1]
            taken = 0
            for k in empties:
                new_centers[k] = points[order[taken]]
                taken += 1
        centers = new_centers

    return TopicModel(centroids=centers, inertia=prev_inertia)


def assign_topic(model: TopicModel, embedding: np.ndarray) -> int:
    """Index of the nearest centroid; ties resolve to the lowest index."""
    vec = np.asarray(embedding, dtype=np.float64)
    if vec.shape != (model.dim,):
        raise ValueError(
            f"embedding dimension {vec.shape} does not match centroids "
            f"({model.dim},)"
        )
    sq = _squared_distances(vec[None, :], model.centroids)[0]
    return int(np.argmin(sq))


def assign_topics(model: TopicModel, embeddings: np.ndarray) -> np.ndarray:
    """Vectorized nearest-centroid assignment for a batch of embeddings."""
    points = np.asarray(embeddings, dtype=np.float64)
    if points.ndim != 2 or points.shape[1] != model.dim:
        raise ValueError("embeddings must be (n, d) with d matching the model")
    sq = _squared_distances(points, model.centroids)
    return np.argmin(sq, axis=1)


def build_similarity(model: TopicModel, sigma: float) -> np.ndarray:
    """RBF similarity exp(-||ci - cj||^2 / sigma^2) between centroids.

    Exactly symmetric with a unit diagonal.  Entries may underflow to 0.0
    for very small sigma; the decay map stays finite either way.
    """
    if sigma <= 0:
        raise ValueError(f"sigma must be positive, got {sigma}")
    if model.fixed_similarity:
        return model.similarity
    sq = _squared_distances(model.centroids, model.centroids)
    sim = np.exp(-sq / (sigma * sigma))
    sim = (sim + sim.T) / 2.0
    np.fill_diagonal(sim, 1.0)
    model.sigma = float(sigma)
    model.similarity = sim
    return sim


def build_decay(
    model: TopicModel,
    *,
    beta_base: float = DEFAULT_BETA_BASE,
    beta_ratio: float = DEFAULT_BETA_RATIO,
) -> np.ndarray:
    """Decay matrix from similarity: affine interpolation between
    beta_base (identical topics) and beta_base * beta_ratio (orthogonal ones).
    """
    if model.similarity is None:
        raise ValueError("build_similarity must run before build_decay")
    if beta_base <= 0:
        raise ValueError(f"beta_base must be positive, got {beta_base}")
    if beta_ratio < 1:
        raise ValueError(f"beta_ratio must be >= 1, got {beta_ratio}")
    beta = beta_base * (beta_ratio - (beta_ratio - 1.0) * model.similarity)
    model.beta_base = float(beta_base)
    model.beta_ratio = float(beta_ratio)
    model.beta = beta
    return beta
