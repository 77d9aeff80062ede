"""Synthetic cohort generation for end-to-end verification.

Two groups of users share a topic vocabulary (well-separated embedding
blobs) but differ in excitation structure: the depressed-like group has
elevated adjacency entries on a designated set of topic pairs, so the
in/out excitation-ratio features separate the groups.  Labels encode the
construction (phq9 20 vs 5, i.e. above/below the cutoff).
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import hawkes
from .eventlog import SECONDS_PER_DAY, write_events_jsonl, write_labels_csv
from .topics import DEFAULT_BETA_BASE, DEFAULT_BETA_RATIO

logger = logging.getLogger(__name__)

SURVEY_ANCHOR = 1_614_556_800  # 2021-03-01T00:00:00Z


@dataclass(frozen=True)
class SyntheticSpec:
    """Cohort shape and the group-level parameter generators."""

    n_depressed: int = 100
    n_healthy: int = 100
    n_topics: int = 10
    embed_dim: int = 16
    horizon_days: float = 200.0
    # The base excitation floor keeps fitted adjacency columns away from
    # zero, so in/out ratio features stay bounded instead of hitting the
    # epsilon guard.
    mu_range_healthy: tuple[float, float] = (0.20, 0.40)
    mu_range_depressed: tuple[float, float] = (0.25, 0.45)
    base_alpha_range: tuple[float, float] = (0.01, 0.04)
    excited_pairs: tuple[tuple[int, int], ...] | None = None
    excited_alpha: float = 0.5
    blob_std: float = 0.05
    sigma: float = 0.01
    beta_base: float = DEFAULT_BETA_BASE
    beta_ratio: float = DEFAULT_BETA_RATIO
    survey_ts: int = SURVEY_ANCHOR
    max_spectral_radius: float = 0.95

    def __post_init__(self) -> None:
        if self.embed_dim < self.n_topics:
            raise ValueError("embed_dim must be >= n_topics for separated blobs")
        if self.excited_pairs is None:
            # Hub topics at 1, 4, 7, ... excite their neighbours.
            pairs = []
            for hub in range(1, self.n_topics, 3):
                pairs.append((hub - 1, hub))
                if hub + 1 < self.n_topics:
                    pairs.append((hub + 1, hub))
            object.__setattr__(self, "excited_pairs", tuple(pairs))
        for i, j in self.excited_pairs:
            if not (0 <= i < self.n_topics and 0 <= j < self.n_topics):
                raise ValueError(f"excited pair ({i}, {j}) outside [0, K)")

    @classmethod
    def from_dict(cls, obj: dict) -> "SyntheticSpec":
        kwargs = dict(obj)
        for key in ("mu_range_healthy", "mu_range_depressed", "base_alpha_range"):
            if key in kwargs:
                kwargs[key] = tuple(kwargs[key])
        if "excited_pairs" in kwargs:
            kwargs["excited_pairs"] = tuple(tuple(p) for p in kwargs["excited_pairs"])
        return cls(**kwargs)


def _topic_centroids(spec: SyntheticSpec) -> np.ndarray:
    """Unit-basis centroids: pairwise distance sqrt(2), trivially separable."""
    centroids = np.zeros((spec.n_topics, spec.embed_dim))
    for k in range(spec.n_topics):
        centroids[k, k] = 1.0
    return centroids


def _decay_matrix(spec: SyntheticSpec, centroids: np.ndarray) -> np.ndarray:
    """Same similarity -> decay map the pipeline applies to fitted centroids."""
    diff = centroids[:, None, :] - centroids[None, :, :]
    sq = np.sum(diff**2, axis=2)
    sim = np.exp(-sq / (spec.sigma * spec.sigma))
    np.fill_diagonal(sim, 1.0)
    return spec.beta_base * (spec.beta_ratio - (spec.beta_ratio - 1.0) * sim)


def _draw_user_model(
    spec: SyntheticSpec, depressed: bool, beta: np.ndarray, rng: np.random.Generator
) -> tuple[hawkes.HawkesModel, bool]:
    k = spec.n_topics
    mu_range = spec.mu_range_depressed if depressed else spec.mu_range_healthy
    mu = rng.uniform(*mu_range, size=k)
    alpha = rng.uniform(*spec.base_alpha_range, size=(k, k))
    if depressed:
        for i, j in spec.excited_pairs:
            alpha[i, j] = spec.excited_alpha * rng.uniform(0.9, 1.1)
    radius = float(np.max(np.abs(np.linalg.eigvals(alpha))))
    rescaled = False
    if radius >= spec.max_spectral_radius:
        alpha *= 0.999 * spec.max_spectral_radius / radius
        rescaled = True
    model = hawkes.HawkesModel(
        mu=np.maximum(mu, hawkes.MU_FLOOR),
        alpha=alpha,
        beta=beta,
        horizon=spec.horizon_days,
    )
    return model, rescaled


def generate_cohort(
    spec: SyntheticSpec, seed: int
) -> tuple[list[dict], list[tuple[str, int, int]], dict]:
    """Event rows, label rows, and a run summary for one sampled cohort.

    Deterministic given (spec, seed).  Event timestamps are rounded to whole
    seconds (ties intended), embeddings are blob samples around the topic
    centroid, rounded to 4 decimals to keep files compact.
    """
    centroids = _topic_centroids(spec)
    beta = _decay_matrix(spec, centroids)
    horizon_seconds = spec.horizon_days * SECONDS_PER_DAY

    event_rows: list[dict] = []
    label_rows: list[tuple[str, int, int]] = []
    n_rescaled = 0
    total = spec.n_depressed + spec.n_healthy
    for idx in range(total):
        depressed = idx < spec.n_depressed
        user_id = f"u{idx:04d}"
        rng = np.random.default_rng([seed, idx])
        model, rescaled = _draw_user_model(spec, depressed, beta, rng)
        if rescaled:
            n_rescaled += 1
            logger.info("user %s adjacency rescaled to subcritical", user_id)
        seq = hawkes.simulate(
            model, spec.horizon_days, seed=int(rng.integers(2**63 - 1))
        )
        for t, mark in zip(seq.times, seq.marks):
            offset = math.ceil((spec.horizon_days - t) * SECONDS_PER_DAY)
            offset = min(max(offset, 1), int(horizon_seconds))
            embedding = centroids[mark] + rng.normal(0.0, spec.blob_std, spec.embed_dim)
            event_rows.append(
                {
                    "user_id": user_id,
                    "ts": spec.survey_ts - offset,
                    "source": "search" if rng.uniform() < 0.5 else "youtube",
                    "topic": int(mark),
                    "embedding": [round(float(v), 4) for v in embedding],
                }
            )
        label_rows.append((user_id, 20 if depressed else 5, spec.survey_ts))

    summary = {
        "users": total,
        "events": len(event_rows),
        "rescaled_users": n_rescaled,
    }
    return event_rows, label_rows, summary


def write_cohort(
    spec: SyntheticSpec, seed: int, events_path, labels_path
) -> dict:
    """Generate and write events.jsonl + labels.csv; returns the summary."""
    event_rows, label_rows, summary = generate_cohort(spec, seed)
    write_events_jsonl(events_path, event_rows)
    write_labels_csv(labels_path, label_rows)
    return summary
