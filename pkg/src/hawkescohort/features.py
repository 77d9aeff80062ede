"""Per-user feature vectors derived from a fitted excitation model.

Two kinds: the baseline-rate vector (mu) taken verbatim, and the per-topic
ratio of incoming to outgoing excitation weight (phi) read off the fitted
adjacency.  A train-fold z-scoring helper keeps classification leakage-free.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .eventlog import Label
from .hawkes import HawkesModel

KIND_MU = "mu"
KIND_PHI = "phi"
PHI_EPSILON = 1e-8


@dataclass(frozen=True)
class FeatureVector:
    user_id: str
    kind: str
    values: np.ndarray
    label: Label

    def __post_init__(self) -> None:
        if self.kind not in (KIND_MU, KIND_PHI):
            raise ValueError(f"unknown feature kind {self.kind!r}")
        if not np.all(np.isfinite(self.values)):
            raise ValueError(f"user {self.user_id}: non-finite feature values")


def extract_mu(model: HawkesModel, user_id: str, label: Label) -> FeatureVector:
    """Baseline rates as a feature vector, copied verbatim."""
    return FeatureVector(
        user_id=user_id, kind=KIND_MU, values=model.mu.copy(), label=label
    )


def extract_phi(model: HawkesModel, user_id: str, label: Label) -> FeatureVector:
    """Per-topic incoming/outgoing excitation-weight ratio.

    phi_i = (row sum of alpha + eps) / (column sum of alpha + eps); the
    self-loop term appears in both sums and an all-zero adjacency maps to
    the neutral value 1.
    """
    incoming = model.alpha.sum(axis=1)
    outgoing = model.alpha.sum(axis=0)
    values = (incoming + PHI_EPSILON) / (outgoing + PHI_EPSILON)
    return FeatureVector(user_id=user_id, kind=KIND_PHI, values=values, label=label)


def standardize(
    train: list[FeatureVector], apply: list[FeatureVector]
) -> tuple[list[FeatureVector], list[FeatureVector], np.ndarray, np.ndarray]:
    """Z-score both collections using train-fold statistics only.

    Population standard deviation; components with stdev below 1e-12 pass
    through centered (divisor forced to 1).  Returns the transformed
    collections plus the (mean, stdev) used.
    """
    if not train:
        raise ValueError("training collection must be non-empty")
    kinds = {f.kind for f in train} | {f.kind for f in apply}
    if len(kinds) != 1:
        raise ValueError(f"mixed feature kinds: {sorted(kinds)}")
    lengths = {f.values.shape for f in train} | {f.values.shape for f in apply}
    if len(lengths) != 1:
        raise ValueError("feature vectors must share one length")

    matrix = np.stack([f.values for f in train])
    mean = matrix.mean(axis=0)
    stdev = matrix.std(axis=0)
    divisor = np.where(stdev < 1e-12, 1.0, stdev)

    def transform(items: list[FeatureVector]) -> list[FeatureVector]:
        return [
            FeatureVector(
                user_id=f.user_id,
                kind=f.kind,
                values=(f.values - mean) / divisor,
                label=f.label,
            )
            for f in items
        ]

    return transform(train), transform(apply), mean, stdev


def write_features_csv(path: str | Path, features: list[FeatureVector]) -> None:
    """Flat CSV: user_id,label,kind,f0,...,f{K-1}."""
    if not features:
        raise ValueError("no feature vectors to write")
    width = features[0].values.size
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["user_id", "label", "kind"] + [f"f{i}" for i in range(width)]
        )
        for f in features:
            writer.writerow(
                [f.user_id, f.label.value, f.kind]
                + [repr(float(v)) for v in f.values]
            )
