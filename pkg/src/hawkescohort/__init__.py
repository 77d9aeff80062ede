"""Excitation-model behavioral features with cohort classification."""

from .eventlog import (
    DurationSpec,
    Event,
    IngestError,
    IngestReport,
    Label,
    ObservationWindow,
    Source,
    TimedSequence,
    UserLog,
    ingest_events,
    to_relative_days,
    truncate,
)
from .features import FeatureVector, extract_mu, extract_phi, standardize
from .hawkes import (
    FitOptions,
    FitReport,
    HawkesModel,
    fit,
    intensity,
    log_likelihood,
    residual_diagnostics,
    simulate,
)
from .classifier import (
    EvalReport,
    LinearSVM,
    auc_score,
    cross_validate,
    metrics,
    train_svm,
)
from .pipeline import GridSpec, PipelineSettings, grid_search
from .synthetic import SyntheticSpec, generate_cohort, write_cohort
from .topics import TopicModel, assign_topic, build_decay, build_similarity, fit_topics

__version__ = "0.1.0"
