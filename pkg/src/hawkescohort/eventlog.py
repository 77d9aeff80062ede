"""Per-user activity-log data model: ingestion, validation, windowing.

Input formats are deliberately plain: one JSON object per line for events,
a three-column CSV for survey labels.  Timestamps are epoch seconds or
ISO-8601 strings and are normalized to integer epoch seconds internally.
"""

from __future__ import annotations

import csv
import json
import logging
from dataclasses import dataclass, replace
from datetime import datetime, timezone
from enum import Enum
from pathlib import Path

import numpy as np

logger = logging.getLogger(__name__)

SECONDS_PER_DAY = 86_400
PHQ9_CUTOFF = 15
PHQ9_MAX = 27
DEFAULT_MIN_EVENTS = 20

# Tie-breaking offset applied to events sharing the same second, in days.
TIE_EPSILON_DAYS = 1e-9


class IngestError(ValueError):
    """Malformed or inconsistent input data."""


class Source(str, Enum):
    SEARCH = "search"
    YOUTUBE = "youtube"


class Label(str, Enum):
    HEALTHY = "Healthy"
    DEPRESSED = "Depressed"

    @classmethod
    def from_phq9(cls, score: int) -> "Label":
        """Binary label from a PHQ-9 total score (cutoff 15)."""
        if not isinstance(score, int) or isinstance(score, bool):
            raise IngestError(f"phq9 score must be an integer, got {score!r}")
        if not 0 <= score <= PHQ9_MAX:
            raise IngestError(f"phq9 score {score} outside [0, {PHQ9_MAX}]")
        return cls.DEPRESSED if score >= PHQ9_CUTOFF else cls.HEALTHY


class DurationSpec(str, Enum):
    """Observation-window lengths; week = 7 days, month = 30 days."""

    W2 = "2w"
    W4 = "4w"
    M3 = "3m"
    M6 = "6m"
    M12 = "12m"
    FULL = "full"

    @property
    def days(self) -> int | None:
        return _DURATION_DAYS[self]


_DURATION_DAYS: dict[DurationSpec, int | None] = {
    DurationSpec.W2: 14,
    DurationSpec.W4: 28,
    DurationSpec.M3: 90,
    DurationSpec.M6: 180,
    DurationSpec.M12: 360,
    DurationSpec.FULL: None,
}


@dataclass(frozen=True, eq=False, slots=True)
class Event:
    """One timestamped activity.  At least one of text/embedding/topic is set."""

    ts: int
    source: Source
    text: str | None = None
    embedding: np.ndarray | None = None
    topic: int | None = None

    def __post_init__(self) -> None:
        if self.text is None and self.embedding is None and self.topic is None:
            raise IngestError(
                f"event at ts={self.ts} has none of text/embedding/topic"
            )
        if self.topic is not None and self.topic < 0:
            raise IngestError(f"event topic must be >= 0, got {self.topic}")


@dataclass(frozen=True, slots=True)
class ObservationWindow:
    """Half-open time span [start, end) in epoch seconds."""

    start: int
    end: int
    spec: DurationSpec

    def __post_init__(self) -> None:
        if self.start >= self.end:
            raise ValueError(f"window start {self.start} >= end {self.end}")
        days = self.spec.days
        if days is not None and self.end - self.start != days * SECONDS_PER_DAY:
            raise ValueError(
                f"window length {self.end - self.start}s does not match "
                f"spec {self.spec.value} ({days} days)"
            )

    @property
    def days(self) -> float:
        return (self.end - self.start) / SECONDS_PER_DAY


@dataclass(frozen=True, eq=False, slots=True)
class UserLog:
    """Chronological event sequence plus survey outcome for one user."""

    user_id: str
    events: tuple[Event, ...]
    survey_ts: int
    phq9: int
    label: Label
    window: ObservationWindow | None = None


@dataclass(frozen=True)
class TimedSequence:
    """Events mapped to fractional days from a window start.

    Times are strictly increasing and lie in [0, horizon).  Exact-second
    ties are perturbed by TIE_EPSILON_DAYS * rank to restore strict order.
    """

    times: np.ndarray
    marks: np.ndarray
    horizon: float

    def __post_init__(self) -> None:
        if self.times.shape != self.marks.shape:
            raise ValueError("times and marks must have equal length")
        if self.times.size and not np.all(np.diff(self.times) > 0):
            raise ValueError("times must be strictly increasing")
        if self.times.size and (self.times[0] < 0 or self.times[-1] >= self.horizon):
            raise ValueError("times must lie in [0, horizon)")

    def __len__(self) -> int:
        return int(self.times.size)


@dataclass
class IngestReport:
    """Counts gathered while reading the events and labels files."""

    users: int = 0
    events: int = 0
    unlabeled_users: int = 0
    unsorted_warnings: int = 0
    insufficient_data_users: int = 0
    orphan_labels: int = 0

    def to_dict(self) -> dict:
        return {
            "users": self.users,
            "events": self.events,
            "unlabeled_users": self.unlabeled_users,
            "unsorted_warnings": self.unsorted_warnings,
            "insufficient_data_users": self.insufficient_data_users,
            "orphan_labels": self.orphan_labels,
        }


def make_user_log(
    user_id: str,
    events: list[Event] | tuple[Event, ...],
    survey_ts: int,
    phq9: int,
) -> tuple[UserLog, bool]:
    """Build a UserLog; sorts events if needed.

    Returns (log, was_unsorted).  The label is always derived from the
    phq9 score, so the cutoff invariant holds by construction.
    """
    events = list(events)
    was_unsorted = any(
        events[i].ts > events[i + 1].ts for i in range(len(events) - 1)
    )
    if was_unsorted:
        events.sort(key=lambda e: e.ts)
    label = Label.from_phq9(phq9)
    return (
        UserLog(
            user_id=user_id,
            events=tuple(events),
            survey_ts=survey_ts,
            phq9=phq9,
            label=label,
        ),
        was_unsorted,
    )


def parse_timestamp(value: object, *, context: str = "") -> int:
    """Epoch seconds from an int/float or an ISO-8601 string (UTC assumed)."""
    if isinstance(value, bool):
        raise IngestError(f"{context}invalid timestamp {value!r}")
    if isinstance(value, (int, float)):
        if not np.isfinite(value):
            raise IngestError(f"{context}non-finite timestamp {value!r}")
        return int(value)
    if isinstance(value, str):
        text = value.strip()
        try:
            return int(text)
        except ValueError:
            pass
        try:
            dt = datetime.fromisoformat(text.replace("Z", "+00:00"))
        except ValueError as exc:
            raise IngestError(f"{context}unparseable timestamp {value!r}") from exc
        if dt.tzinfo is None:
            dt = dt.replace(tzinfo=timezone.utc)
        return int(dt.timestamp())
    raise IngestError(f"{context}invalid timestamp {value!r}")


def _parse_event_line(line: str, lineno: int) -> tuple[str, Event]:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise IngestError(f"events line {lineno}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise IngestError(f"events line {lineno}: expected an object")
    try:
        user_id = obj["user_id"]
        ts = parse_timestamp(obj["ts"], context=f"events line {lineno}: ")
        source = Source(obj["source"])
    except KeyError as exc:
        raise IngestError(f"events line {lineno}: missing key {exc.args[0]!r}") from exc
    except ValueError as exc:
        raise IngestError(f"events line {lineno}: {exc}") from exc

    embedding = obj.get("embedding")
    if embedding is not None:
        embedding = np.asarray(embedding, dtype=np.float64)
        if embedding.ndim != 1:
            raise IngestError(f"events line {lineno}: embedding must be a flat array")
    topic = obj.get("topic")
    if topic is not None and (isinstance(topic, bool) or not isinstance(topic, int)):
        raise IngestError(f"events line {lineno}: topic must be an integer")
    try:
        event = Event(
            ts=ts,
            source=source,
            text=obj.get("text"),
            embedding=embedding,
            topic=topic,
        )
    except IngestError as exc:
        raise IngestError(f"events line {lineno}: {exc}") from exc
    return str(user_id), event


def _read_labels(path: Path) -> dict[str, tuple[int, int]]:
    """user_id -> (phq9, survey_ts) from the labels CSV."""
    labels: dict[str, tuple[int, int]] = {}
    with path.open(newline="") as fh:
        reader = csv.DictReader(fh)
        required = {"user_id", "phq9", "survey_ts"}
        if reader.fieldnames is None or not required.issubset(reader.fieldnames):
            raise IngestError(
                f"labels file {path} must have header user_id,phq9,survey_ts"
            )
        for rowno, row in enumerate(reader, start=2):
            user_id = row["user_id"]
            try:
                phq9 = int(row["phq9"])
            except (TypeError, ValueError) as exc:
                raise IngestError(
                    f"labels row {rowno}: phq9 {row['phq9']!r} is not an integer"
                ) from exc
            if not 0 <= phq9 <= PHQ9_MAX:
                raise IngestError(
                    f"labels row {rowno}: phq9 {phq9} outside [0, {PHQ9_MAX}]"
                )
            survey_ts = parse_timestamp(
                row["survey_ts"], context=f"labels row {rowno}: "
            )
            if user_id in labels:
                raise IngestError(f"labels row {rowno}: duplicate user_id {user_id!r}")
            labels[user_id] = (phq9, survey_ts)
    return labels


def ingest_events(
    events_path: str | Path,
    labels_path: str | Path,
    *,
    schema: str = "jsonl",
    min_events: int = DEFAULT_MIN_EVENTS,
) -> tuple[list[UserLog], IngestReport]:
    """Read one UserLog per user present in both the events and labels files.

    Events are sorted per user when out of order (counted in the report,
    not fatal).  Users appearing on only one side are reported and dropped.
    """
    if schema != "jsonl":
        raise IngestError(f"unsupported events schema {schema!r}")
    events_path = Path(events_path)
    labels_path = Path(labels_path)
    if not events_path.exists():
        raise IngestError(f"events file not found: {events_path}")
    if not labels_path.exists():
        raise IngestError(f"labels file not found: {labels_path}")

    labels = _read_labels(labels_path)

    per_user: dict[str, list[Event]] = {}
    n_events = 0
    with events_path.open() as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            user_id, event = _parse_event_line(line, lineno)
            per_user.setdefault(user_id, []).append(event)
            n_events += 1

    report = IngestReport(events=n_events)
    logs: list[UserLog] = []
    for user_id in sorted(per_user):
        if user_id not in labels:
            report.unlabeled_users += 1
            logger.warning("user %s has events but no label row; dropped", user_id)
            continue
        phq9, survey_ts = labels[user_id]
        log, was_unsorted = make_user_log(user_id, per_user[user_id], survey_ts, phq9)
        if was_unsorted:
            report.unsorted_warnings += 1
            logger.warning("user %s events were out of order; sorted", user_id)
        if len(log.events) < min_events:
            report.insufficient_data_users += 1
        logs.append(log)

    report.users = len(logs)
    report.orphan_labels = sum(1 for uid in labels if uid not in per_user)
    if report.orphan_labels:
        logger.warning("%d label rows have no events; dropped", report.orphan_labels)
    if not logs:
        logger.warning("ingest produced 0 users")
    return logs, report


def truncate(log: UserLog, spec: DurationSpec | str) -> UserLog:
    """Keep events in the half-open window [survey − D, survey).

    For spec 'full' the window starts at the earliest pre-survey event.
    Sufficiency (min_events) is the caller's concern; the truncated log is
    returned regardless of how few events remain.
    """
    spec = DurationSpec(spec)
    end = log.survey_ts
    if spec is DurationSpec.FULL:
        pre = [e for e in log.events if e.ts < end]
        start = pre[0].ts if pre else end - SECONDS_PER_DAY
    else:
        start = end - spec.days * SECONDS_PER_DAY
    window = ObservationWindow(start=start, end=end, spec=spec)
    kept = tuple(e for e in log.events if window.start <= e.ts < window.end)
    return replace(log, events=kept, window=window)


def to_relative_days(
    log: UserLog, window: ObservationWindow | None = None
) -> TimedSequence:
    """Map event timestamps to fractional days since the window start.

    Requires every event to carry a topic.  Same-second ties are separated
    by TIE_EPSILON_DAYS increments so downstream point-process code sees a
    strictly ordered sequence.
    """
    if window is None:
        window = log.window
    if window is None:
        raise ValueError(f"user {log.user_id}: no observation window attached")

    n = len(log.events)
    times = np.empty(n, dtype=np.float64)
    marks = np.empty(n, dtype=np.int64)
    for idx, event in enumerate(log.events):
        if event.topic is None:
            raise ValueError(f"user {log.user_id}: untopiced event at ts={event.ts}")
        if not window.start <= event.ts < window.end:
            raise ValueError(
                f"user {log.user_id}: event at ts={event.ts} outside window"
            )
        times[idx] = (event.ts - window.start) / SECONDS_PER_DAY
        marks[idx] = event.topic

    # Break exact ties: within a run of equal times, add eps * rank-in-run.
    run_start = 0
    for idx in range(1, n + 1):
        if idx == n or times[idx] > times[run_start]:
            for offset in range(1, idx - run_start):
                times[run_start + offset] += TIE_EPSILON_DAYS * offset
            run_start = idx

    horizon = (window.end - window.start) / SECONDS_PER_DAY
    return TimedSequence(times=times, marks=marks, horizon=horizon)


def write_events_jsonl(path: str | Path, rows: list[dict]) -> None:
    """One compact JSON object per line; embeddings as plain float lists."""
    path = Path(path)
    with path.open("w") as fh:
        for row in rows:
            fh.write(json.dumps(row, separators=(",", ":")) + "\n")


def write_labels_csv(path: str | Path, rows: list[tuple[str, int, int]]) -> None:
    """Rows of (user_id, phq9, survey_ts) under the standard header."""
    path = Path(path)
    with path.open("w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["user_id", "phq9", "survey_ts"])
        for user_id, phq9, survey_ts in rows:
            writer.writerow([user_id, phq9, survey_ts])
