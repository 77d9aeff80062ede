"""End-to-end orchestration: topics, per-user fits, evaluation, grid search.

A single-configuration run is a one-point grid, so `run` and `grid_search`
agree by construction.  Per-user fits are independent work units and may be
dispatched to a process pool; results are merged in user-id order so the
reports do not depend on worker scheduling.
"""

from __future__ import annotations

import copy
import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from itertools import product
from pathlib import Path

import numpy as np

from . import classifier, features, hawkes, topics
from .eventlog import (
    DEFAULT_MIN_EVENTS,
    DurationSpec,
    Label,
    TimedSequence,
    UserLog,
    to_relative_days,
    truncate,
)

logger = logging.getLogger(__name__)

PAPER_K_SET = (5, 10, 15, 20, 25)
PAPER_SIGMA_SET = (0.001, 0.01, 0.1, 1.0, 10.0)
PAPER_C_SET = (0.1, 1.0, 10.0, 100.0)
PAPER_WINDOW_SET = ("2w", "4w", "3m", "6m", "12m", "full")
FEATURE_KINDS = (features.KIND_MU, features.KIND_PHI)
MAX_EXCLUDED_FRACTION = 0.5


class PipelineError(RuntimeError):
    """A stage failed; carries the stage name for CLI diagnostics."""

    def __init__(self, stage: str, message: str) -> None:
        super().__init__(message)
        self.stage = stage


@dataclass(frozen=True)
class GridSpec:
    """Hyperparameter sets to sweep; defaults reproduce the standard grid."""

    n_topics_set: tuple[int, ...] = PAPER_K_SET
    sigma_set: tuple[float, ...] = PAPER_SIGMA_SET
    C_set: tuple[float, ...] = PAPER_C_SET
    window_set: tuple[str, ...] = PAPER_WINDOW_SET
    kinds: tuple[str, ...] = FEATURE_KINDS
    folds: int = 5

    def __post_init__(self) -> None:
        if not all(
            (self.n_topics_set, self.sigma_set, self.C_set, self.window_set, self.kinds)
        ):
            raise ValueError("grid sets must be non-empty")
        for kind in self.kinds:
            if kind not in FEATURE_KINDS:
                raise ValueError(f"unknown feature kind {kind!r}")
        for window in self.window_set:
            DurationSpec(window)

    def configurations(self) -> list[tuple[int, float, float, str, str]]:
        return list(
            product(
                self.n_topics_set, self.sigma_set, self.C_set,
                self.window_set, self.kinds,
            )
        )

    @classmethod
    def single(
        cls, n_topics: int, sigma: float, C: float, window: str,
        kinds: tuple[str, ...] = FEATURE_KINDS, folds: int = 5,
    ) -> "GridSpec":
        return cls(
            n_topics_set=(n_topics,), sigma_set=(sigma,), C_set=(C,),
            window_set=(window,), kinds=tuple(kinds), folds=folds,
        )


@dataclass
class PipelineSettings:
    """Run-level knobs shared by every configuration in a sweep."""

    beta_base: float = topics.DEFAULT_BETA_BASE
    beta_ratio: float = topics.DEFAULT_BETA_RATIO
    min_events: int = DEFAULT_MIN_EVENTS
    seed: int = 0
    jobs: int = 1
    scale: bool = True


@dataclass
class GridResult:
    rows: list[dict]
    ranked: list[dict]
    # (K, sigma, D) -> (models, fit reports, excluded users); only retained
    # when grid_search(keep_fits=True), meant for single-configuration runs.
    fits: dict = None
    topic_models: dict = None

    @property
    def best(self) -> dict | None:
        return self.ranked[0] if self.ranked else None


def pool_embeddings(logs: list[UserLog]) -> np.ndarray | None:
    """Stack embeddings from all events of all full logs; None if absent."""
    vectors = [
        e.embedding for log in logs for e in log.events if e.embedding is not None
    ]
    if not vectors:
        return None
    return np.stack(vectors)


def topic_model_for(
    logs: list[UserLog],
    n_topics: int,
    seed: int,
    *,
    pooled: np.ndarray | None = None,
) -> topics.TopicModel:
    """Cluster cohort embeddings, or fall back to identity similarity when
    the cohort carries topic labels only."""
    if pooled is None:
        pooled = pool_embeddings(logs)
    if pooled is None:
        max_topic = max(
            (e.topic for log in logs for e in log.events if e.topic is not None),
            default=None,
        )
        if max_topic is None:
            raise PipelineError(
                "topics",
                "no embeddings and no topic labels present; "
                "run the embedding adapter first",
            )
        if max_topic >= n_topics:
            raise PipelineError(
                "topics",
                f"event topic {max_topic} outside [0, {n_topics}); "
                "raise K or re-label",
            )
        logger.warning(
            "no embeddings in cohort; using identity-similarity topic model"
        )
        return topics.identity_topic_model(n_topics)
    return topics.fit_topics(pooled, n_topics, seed)


def apply_topics(logs: list[UserLog], model: topics.TopicModel) -> list[UserLog]:
    """Label every event carrying an embedding with its nearest centroid.

    Events without embeddings keep their existing topic label (validated
    against K); events with neither are rejected.
    """
    relabeled: list[UserLog] = []
    for log in logs:
        embedded_idx = [
            i for i, e in enumerate(log.events) if e.embedding is not None
        ]
        assigned: dict[int, int] = {}
        if embedded_idx:
            batch = np.stack([log.events[i].embedding for i in embedded_idx])
            for i, topic in zip(embedded_idx, topics.assign_topics(model, batch)):
                assigned[i] = int(topic)
        new_events = []
        for i, event in enumerate(log.events):
            if i in assigned:
                new_events.append(replace(event, topic=assigned[i]))
            elif event.topic is not None:
                if event.topic >= model.n_topics:
                    raise PipelineError(
                        "topics",
                        f"user {log.user_id}: event topic {event.topic} outside "
                        f"[0, {model.n_topics})",
                    )
                new_events.append(event)
            else:
                raise PipelineError(
                    "topics",
                    f"user {log.user_id}: event at ts={event.ts} has neither "
                    "embedding nor topic; run the embedding adapter first",
                )
        relabeled.append(
            UserLog(
                user_id=log.user_id,
                events=tuple(new_events),
                survey_ts=log.survey_ts,
                phq9=log.phq9,
                label=log.label,
                window=log.window,
            )
        )
    return relabeled


def _fit_one(
    task: tuple[str, TimedSequence, np.ndarray, int]
) -> tuple[str, hawkes.HawkesModel | None, hawkes.FitReport]:
    user_id, seq, beta, min_events = task
    model, report = hawkes.fit(
        seq, beta, hawkes.FitOptions(min_events=min_events)
    )
    return user_id, model, report


def fit_cohort(
    logs: list[UserLog],
    beta: np.ndarray,
    window: DurationSpec | str,
    *,
    min_events: int = DEFAULT_MIN_EVENTS,
    jobs: int = 1,
) -> tuple[dict[str, hawkes.HawkesModel], dict[str, hawkes.FitReport], list[str]]:
    """Truncate, rescale, and fit every user; returns models, reports, excluded."""
    tasks: list[tuple[str, TimedSequence, np.ndarray, int]] = []
    excluded: list[str] = []
    reports: dict[str, hawkes.FitReport] = {}
    for log in logs:
        short = truncate(log, window)
        if len(short.events) < min_events:
            excluded.append(log.user_id)
            reports[log.user_id] = hawkes.FitReport(
                excluded_reason=(
                    f"insufficient data: {len(short.events)} events "
                    f"< {min_events} in window {DurationSpec(window).value}"
                )
            )
            continue
        tasks.append((log.user_id, to_relative_days(short), beta, min_events))

    models: dict[str, hawkes.HawkesModel] = {}
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            results = list(pool.map(_fit_one, tasks, chunksize=8))
    else:
        results = [_fit_one(task) for task in tasks]
    for user_id, model, report in sorted(results, key=lambda r: r[0]):
        reports[user_id] = report
        if model is None:
            if user_id not in excluded:
                excluded.append(user_id)
        else:
            models[user_id] = model
    return models, reports, sorted(excluded)


def extract_features(
    models: dict[str, hawkes.HawkesModel],
    labels: dict[str, Label],
    kind: str,
) -> list[features.FeatureVector]:
    extractor = features.extract_mu if kind == features.KIND_MU else features.extract_phi
    return [
        extractor(models[user_id], user_id, labels[user_id])
        for user_id in sorted(models)
    ]


def grid_search(
    logs: list[UserLog],
    grid: GridSpec,
    settings: PipelineSettings | None = None,
    *,
    keep_fits: bool = False,
) -> GridResult:
    """Sweep (K, sigma, C, D, kind); rank valid rows by weighted F1 then AUC.

    Topic models are fitted once per K on the pooled full-log embeddings;
    decay matrices once per (K, sigma); per-user fits once per (K, sigma, D)
    and shared across C and feature kinds.
    """
    settings = settings or PipelineSettings()
    labels = {log.user_id: log.label for log in logs}
    pooled = pool_embeddings(logs)

    topic_models: dict[int, topics.TopicModel] = {}
    labeled_logs: dict[int, list[UserLog]] = {}
    decayed: dict[tuple[int, float], topics.TopicModel] = {}
    fits: dict[tuple[int, float, str], tuple[dict, dict, list[str]]] = {}

    rows: list[dict] = []
    for n_topics, sigma, C, window, kind in grid.configurations():
        if n_topics not in topic_models:
            model = topic_model_for(logs, n_topics, settings.seed, pooled=pooled)
            topic_models[n_topics] = model
            labeled_logs[n_topics] = apply_topics(logs, model)
        if (n_topics, sigma) not in decayed:
            model = copy.deepcopy(topic_models[n_topics])
            if model.similarity is None or model.sigma != sigma:
                topics.build_similarity(model, sigma)
            topics.build_decay(
                model,
                beta_base=settings.beta_base,
                beta_ratio=settings.beta_ratio,
            )
            decayed[(n_topics, sigma)] = model
        beta = decayed[(n_topics, sigma)].beta
        fit_key = (n_topics, sigma, window)
        if fit_key not in fits:
            models, reports, excluded = fit_cohort(
                labeled_logs[n_topics],
                beta,
                window,
                min_events=settings.min_events,
                jobs=settings.jobs,
            )
            fits[fit_key] = (models, reports, excluded)
        models, _, excluded = fits[fit_key]

        row = {
            "K": n_topics,
            "sigma": sigma,
            "C": C,
            "D": window,
            "kind": kind,
            "excluded_users": excluded,
            "valid": True,
            "invalid_reason": None,
            "per_fold": [],
            "mean": {},
            "std": {},
        }
        if len(excluded) > MAX_EXCLUDED_FRACTION * len(logs):
            row["valid"] = False
            row["invalid_reason"] = (
                f"{len(excluded)}/{len(logs)} users excluded for insufficient data"
            )
            rows.append(row)
            continue
        vectors = extract_features(models, labels, kind)
        try:
            report = classifier.cross_validate(
                vectors, C, folds=grid.folds, seed=settings.seed,
                scale=settings.scale,
            )
        except ValueError as exc:
            row["valid"] = False
            row["invalid_reason"] = str(exc)
            rows.append(row)
            continue
        row["per_fold"] = [s.to_dict() for s in report.per_fold]
        row["mean"] = report.mean
        row["std"] = report.std
        rows.append(row)

    ranked = sorted(
        (r for r in rows if r["valid"]),
        key=lambda r: (-r["mean"]["weighted_f1"], -r["mean"]["auc"]),
    )
    return GridResult(
        rows=rows,
        ranked=ranked,
        fits=fits if keep_fits else None,
        topic_models={
            key: model for key, model in decayed.items()
        } if keep_fits else None,
    )


def write_report_json(path: str | Path, rows: list[dict]) -> None:
    with Path(path).open("w") as fh:
        json.dump(rows, fh, indent=2, sort_keys=True)
        fh.write("\n")


def write_report_csv(path: str | Path, rows: list[dict]) -> None:
    """One line per (configuration, fold) plus mean/std summary lines."""
    columns = ["K", "sigma", "C", "D", "kind", "fold"] + classifier.METRIC_KEYS
    with Path(path).open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(columns)
        for row in rows:
            base = [row["K"], row["sigma"], row["C"], row["D"], row["kind"]]
            for fold_idx, slice_dict in enumerate(row["per_fold"]):
                writer.writerow(
                    base + [fold_idx]
                    + [repr(float(slice_dict[k])) for k in classifier.METRIC_KEYS]
                )
            for tag in ("mean", "std"):
                stats = row[tag]
                if stats:
                    writer.writerow(
                        base + [tag]
                        + [repr(float(stats[k])) for k in classifier.METRIC_KEYS]
                    )


def run_timestamp() -> str:
    return datetime.now(timezone.utc).isoformat()
