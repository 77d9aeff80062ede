"""Command-line entry point.

Subcommands: run (single configuration), grid (hyperparameter sweep),
synth (synthetic cohort files), fit-user (one user's model), topics
(topic model only).  Exit codes: 0 success, 1 usage/config error,
2 data insufficiency.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass
from pathlib import Path

from . import classifier, features, hawkes, pipeline, synthetic, topics
from .eventlog import (
    DEFAULT_MIN_EVENTS,
    DurationSpec,
    IngestError,
    IngestReport,
    UserLog,
    ingest_events,
    to_relative_days,
    truncate,
)

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_INSUFFICIENT = 2


class CommandError(RuntimeError):
    def __init__(self, message: str, exit_code: int = EXIT_USAGE) -> None:
        super().__init__(message)
        self.exit_code = exit_code


@dataclass
class RunPlan:
    """Resolved configuration for run/grid/fit-user commands."""

    grid: pipeline.GridSpec
    settings: pipeline.PipelineSettings
    kinds: tuple[str, ...]


def _load_config(path: str | None) -> dict:
    if path is None:
        return {}
    try:
        with Path(path).open() as fh:
            obj = json.load(fh)
    except FileNotFoundError as exc:
        raise CommandError(f"config file not found: {path}") from exc
    except json.JSONDecodeError as exc:
        raise CommandError(f"config file {path}: invalid JSON ({exc.msg})") from exc
    if not isinstance(obj, dict):
        raise CommandError(f"config file {path}: expected an object")
    return obj


def _resolve_plan(args: argparse.Namespace, *, use_grid: bool) -> RunPlan:
    config = _load_config(getattr(args, "config", None))
    kinds = tuple(config.get("kinds", pipeline.FEATURE_KINDS))
    folds = int(config.get("folds", 5))
    try:
        if use_grid:
            grid_cfg = config.get("grid", {})
            grid = pipeline.GridSpec(
                n_topics_set=tuple(grid_cfg.get("K", pipeline.PAPER_K_SET)),
                sigma_set=tuple(grid_cfg.get("sigma", pipeline.PAPER_SIGMA_SET)),
                C_set=tuple(grid_cfg.get("C", pipeline.PAPER_C_SET)),
                window_set=tuple(grid_cfg.get("D", pipeline.PAPER_WINDOW_SET)),
                kinds=kinds,
                folds=folds,
            )
        else:
            grid = pipeline.GridSpec.single(
                n_topics=int(config.get("K", 10)),
                sigma=float(config.get("sigma", 0.01)),
                C=float(config.get("C", 1.0)),
                window=str(config.get("D", "6m")),
                kinds=kinds,
                folds=folds,
            )
    except ValueError as exc:
        raise CommandError(f"invalid configuration: {exc}") from exc

    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    jobs = args.jobs if args.jobs is not None else int(
        config.get("jobs", os.cpu_count() or 1)
    )
    settings = pipeline.PipelineSettings(
        beta_base=float(config.get("beta_base", topics.DEFAULT_BETA_BASE)),
        beta_ratio=float(config.get("beta_ratio", topics.DEFAULT_BETA_RATIO)),
        min_events=int(config.get("min_events", DEFAULT_MIN_EVENTS)),
        seed=seed,
        jobs=max(1, jobs),
        scale=bool(config.get("standardize", True)),
    )
    return RunPlan(grid=grid, settings=settings, kinds=kinds)


def _ingest(args: argparse.Namespace, min_events: int) -> tuple[list[UserLog], IngestReport]:
    if not args.events or not args.labels:
        raise CommandError("--events and --labels are required")
    try:
        return ingest_events(args.events, args.labels, min_events=min_events)
    except IngestError as exc:
        raise CommandError(f"ingest: {exc}") from exc


def _write_run_artifacts(
    out_dir: Path,
    result: pipeline.GridResult,
    logs: list[UserLog],
    ingest_report: IngestReport,
    plan: RunPlan,
) -> None:
    pipeline.write_report_json(out_dir / "report.json", result.rows)
    pipeline.write_report_csv(out_dir / "report.csv", result.rows)

    run_report = {
        "timestamp": pipeline.run_timestamp(),
        "ingest": ingest_report.to_dict(),
        "n_configurations": len(result.rows),
        "n_ranked": len(result.ranked),
        "seed": plan.settings.seed,
        "excluded_users": {
            f"K={row['K']} sigma={row['sigma']} D={row['D']}": row["excluded_users"]
            for row in result.rows
        },
        "best": {
            key: result.best[key] for key in ("K", "sigma", "C", "D", "kind")
        } if result.best else None,
    }
    with (out_dir / "run_report.json").open("w") as fh:
        json.dump(run_report, fh, indent=2, sort_keys=True)
        fh.write("\n")

    if result.fits is None:
        return
    # Single-configuration artifacts: topic model, per-user models, features.
    labels = {log.user_id: log.label for log in logs}
    for (n_topics, sigma), topic_model in result.topic_models.items():
        with (out_dir / "topicmodel.json").open("w") as fh:
            json.dump(topic_model.to_json_dict(), fh, indent=2, sort_keys=True)
            fh.write("\n")
        beta_ref = topic_model.fingerprint()
    models_dir = out_dir / "models"
    models_dir.mkdir(exist_ok=True)
    all_features: list[features.FeatureVector] = []
    for (n_topics, sigma, window), (models, reports, _) in result.fits.items():
        for user_id in sorted(models):
            model = models[user_id]
            report = reports[user_id]
            with (models_dir / f"{user_id}.json").open("w") as fh:
                json.dump(
                    model.to_json_dict(
                        user_id=user_id,
                        beta_ref=beta_ref,
                        log_likelihood=report.log_likelihood,
                        converged=report.converged,
                    ),
                    fh, indent=2, sort_keys=True,
                )
                fh.write("\n")
        for kind in plan.kinds:
            all_features.extend(
                pipeline.extract_features(models, labels, kind)
            )
    if all_features:
        features.write_features_csv(out_dir / "features.csv", all_features)


def cmd_run(args: argparse.Namespace, *, use_grid: bool) -> int:
    plan = _resolve_plan(args, use_grid=use_grid)
    logs, ingest_report = _ingest(args, plan.settings.min_events)

    if args.dry_run:
        plan_info = {
            "configurations": len(plan.grid.configurations()),
            "users": len(logs),
            "events": ingest_report.events,
            "seed": plan.settings.seed,
            "jobs": plan.settings.jobs,
        }
        print(json.dumps(plan_info, indent=2, sort_keys=True))
        return EXIT_OK

    if not args.out:
        raise CommandError("--out is required")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)

    try:
        result = pipeline.grid_search(
            logs, plan.grid, plan.settings, keep_fits=not use_grid
        )
    except pipeline.PipelineError as exc:
        raise CommandError(f"{exc.stage}: {exc}") from exc
    _write_run_artifacts(out_dir, result, logs, ingest_report, plan)
    if result.best:
        logger.info(
            "best configuration: K=%s sigma=%s C=%s D=%s kind=%s "
            "(weighted F1 %.3f, AUC %.3f)",
            result.best["K"], result.best["sigma"], result.best["C"],
            result.best["D"], result.best["kind"],
            result.best["mean"]["weighted_f1"], result.best["mean"]["auc"],
        )
    return EXIT_OK


def cmd_synth(args: argparse.Namespace) -> int:
    config = _load_config(getattr(args, "config", None))
    spec_cfg = config.get("synthetic", config)
    known = set(synthetic.SyntheticSpec.__dataclass_fields__)
    spec_kwargs = {k: v for k, v in spec_cfg.items() if k in known}
    try:
        spec = synthetic.SyntheticSpec.from_dict(spec_kwargs)
    except (TypeError, ValueError) as exc:
        raise CommandError(f"invalid synthetic spec: {exc}") from exc
    if not args.out:
        raise CommandError("--out is required")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    seed = args.seed if args.seed is not None else int(config.get("seed", 0))
    summary = synthetic.write_cohort(
        spec, seed, out_dir / "events.jsonl", out_dir / "labels.csv"
    )
    print(json.dumps(summary, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_fit_user(args: argparse.Namespace) -> int:
    plan = _resolve_plan(args, use_grid=False)
    logs, _ = _ingest(args, plan.settings.min_events)
    target = next((log for log in logs if log.user_id == args.user_id), None)
    if target is None:
        raise CommandError(f"unknown user {args.user_id!r}")

    n_topics, sigma, _, window, _ = plan.grid.configurations()[0]
    try:
        topic_model = pipeline.topic_model_for(logs, n_topics, plan.settings.seed)
        if topic_model.similarity is None or topic_model.sigma != sigma:
            topics.build_similarity(topic_model, sigma)
        topics.build_decay(
            topic_model,
            beta_base=plan.settings.beta_base,
            beta_ratio=plan.settings.beta_ratio,
        )
        labeled = pipeline.apply_topics([target], topic_model)[0]
    except pipeline.PipelineError as exc:
        raise CommandError(f"{exc.stage}: {exc}") from exc

    short = truncate(labeled, window)
    if len(short.events) < plan.settings.min_events:
        raise CommandError(
            f"user {args.user_id}: insufficient data "
            f"({len(short.events)} events < {plan.settings.min_events} "
            f"in window {window})",
            exit_code=EXIT_INSUFFICIENT,
        )
    seq = to_relative_days(short)
    model, report = hawkes.fit(
        seq, topic_model.beta,
        hawkes.FitOptions(min_events=plan.settings.min_events),
    )
    if model is None:
        raise CommandError(
            f"user {args.user_id}: {report.excluded_reason}",
            exit_code=EXIT_INSUFFICIENT,
        )
    payload = model.to_json_dict(
        user_id=args.user_id,
        beta_ref=topic_model.fingerprint(),
        log_likelihood=report.log_likelihood,
        converged=report.converged,
    )
    if args.out:
        out_dir = Path(args.out)
        out_dir.mkdir(parents=True, exist_ok=True)
        with (out_dir / f"{args.user_id}.json").open("w") as fh:
            json.dump(payload, fh, indent=2, sort_keys=True)
            fh.write("\n")
    else:
        print(json.dumps(payload, indent=2, sort_keys=True))
    return EXIT_OK


def cmd_topics(args: argparse.Namespace) -> int:
    plan = _resolve_plan(args, use_grid=False)
    logs, _ = _ingest(args, plan.settings.min_events)
    n_topics, sigma, _, _, _ = plan.grid.configurations()[0]
    try:
        topic_model = pipeline.topic_model_for(logs, n_topics, plan.settings.seed)
        if topic_model.similarity is None or topic_model.sigma != sigma:
            topics.build_similarity(topic_model, sigma)
        topics.build_decay(
            topic_model,
            beta_base=plan.settings.beta_base,
            beta_ratio=plan.settings.beta_ratio,
        )
    except pipeline.PipelineError as exc:
        raise CommandError(f"{exc.stage}: {exc}") from exc
    if not args.out:
        raise CommandError("--out is required")
    out_dir = Path(args.out)
    out_dir.mkdir(parents=True, exist_ok=True)
    with (out_dir / "topicmodel.json").open("w") as fh:
        json.dump(topic_model.to_json_dict(), fh, indent=2, sort_keys=True)
        fh.write("\n")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="hawkescohort",
        description=(
            "Excitation-model features over behavioral event logs with "
            "cross-validated cohort classification"
        ),
    )
    sub = parser.add_subparsers(dest="command", metavar="command")

    def add_common(p: argparse.ArgumentParser, *, io: bool = True) -> None:
        if io:
            p.add_argument("--events", help="events.jsonl path")
            p.add_argument("--labels", help="labels.csv path")
        p.add_argument("--out", help="output directory")
        p.add_argument("--config", help="JSON config file")
        p.add_argument("--seed", type=int, default=None)
        p.add_argument("--jobs", type=int, default=None,
                       help="worker processes (default: CPU count)")
        p.add_argument("--dry-run", action="store_true",
                       help="print the resolved plan and write nothing")

    p_run = sub.add_parser("run", help="single-configuration pipeline")
    add_common(p_run)
    p_grid = sub.add_parser("grid", help="hyperparameter grid search")
    add_common(p_grid)
    p_synth = sub.add_parser("synth", help="generate a synthetic cohort")
    add_common(p_synth, io=False)
    p_fit = sub.add_parser("fit-user", help="fit a single user's model")
    p_fit.add_argument("user_id")
    add_common(p_fit)
    p_topics = sub.add_parser("topics", help="fit and export the topic model")
    add_common(p_topics)
    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(
        level=logging.INFO, format="%(levelname)s %(name)s: %(message)s"
    )
    parser = build_parser()
    args = parser.parse_args(argv)
    if args.command is None:
        parser.print_help(sys.stderr)
        return EXIT_USAGE
    try:
        if args.command == "run":
            return cmd_run(args, use_grid=False)
        if args.command == "grid":
            return cmd_run(args, use_grid=True)
        if args.command == "synth":
            return cmd_synth(args)
        if args.command == "fit-user":
            return cmd_fit_user(args)
        if args.command == "topics":
            return cmd_topics(args)
        parser.error(f"unknown command {args.command}")
    except CommandError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except pipeline.PipelineError as exc:
        print(f"error: {exc.stage}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except (IngestError, ValueError, ArithmeticError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
