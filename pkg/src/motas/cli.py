"""Command-line interface.

Subcommands: extract, plan-aug, run-tts, run-asr, train, eval, ablate,
curve. Exit codes: 0 success, 1 usage error, 2 data/validation error,
3 external-tool failure budget exceeded.

Environment: MOTAS_SEED overrides the config's seed list with one seed;
MOTAS_TOOL_TIMEOUT_S overrides the external-tool timeout.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .audio_dsp import (
    MalformedWavError,
    UnsupportedWavError,
    compute_mfcc,
    compute_spectrogram,
    load_wav,
    pad_or_split,
)
from .augmentation_planner import (
    CohortItem,
    ExternalToolConfig,
    MergeError,
    PlanError,
    load_plan,
    plan_pairs,
    run_asr_jobs,
    run_tts_jobs,
    write_failure_report,
)
from .encoders import EmbeddingLookupError
from .experiment_harness import (
    SEED_ENV_VAR,
    TABLE3_GRID,
    CacheError,
    ConfigError,
    ExperimentConfig,
    ManifestError,
    ManifestRecord,
    MissingAugmentedData,
    RunResult,
    ablate,
    ablation_csv,
    emit_curve,
    evaluate,
    load_cache_dir,
    load_models,
    manifest_provider,
    parse_manifest,
    resolve_samples,
    run_experiment,
    save_models,
    select_curve_results,
    subject_predictions,
    synthetic_provider,
    write_cache,
    write_manifest,
)
from .metrics_eval import MetricsReport, average_over_seeds, format_percent

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2
EXIT_TOOL_BUDGET = 3


class UsageError(Exception):
    pass


class ToolBudgetExceeded(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):  # exit code 1 instead of argparse's 2
        raise UsageError(message)


def _load_config(path: str) -> ExperimentConfig:
    config = ExperimentConfig.from_file(path)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed:
        try:
            config = replace(config, seeds=(int(env_seed),))
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer: got {env_seed!r}") from exc
    return config


def _manifest_to_cohort(records) -> list[CohortItem]:
    return [
        CohortItem(id=r.id, label=r.label, audio=r.audio, transcript=r.transcript,
                   source=r.source, voice_of=r.voice_of, transcript_of=r.transcript_of)
        for r in records
    ]


def _print_report(report: MetricsReport, sds: dict[str, float] | None = None) -> None:
    for name in MetricsReport.METRIC_NAMES:
        line = f"{name:>13}: {format_percent(getattr(report, name))}%"
        if sds is not None:
            line += f" (sd {format_percent(sds[name])})"
        print(line)


# ---------------------------------------------------------------- extract


def cmd_extract(args) -> int:
    config = _load_config(args.config)
    records = parse_manifest(args.manifest)
    rows: dict[str, np.ndarray] = {}
    for rec in records:
        if not rec.audio:
            raise ManifestError(f"record '{rec.id}' has no audio path")
        clip = load_wav(rec.audio)
        if clip.sample_rate != config.expected_sample_rate:
            raise ManifestError(
                f"record '{rec.id}': sample rate {clip.sample_rate} differs from "
                f"configured {config.expected_sample_rate}"
            )
        windows = pad_or_split(clip, config.segment_s)
        for i, window in enumerate(windows):
            key = rec.id if len(windows) == 1 else f"{rec.id}@{i}"
            if args.feature == "mfcc":
                rows[key] = compute_mfcc(window, config.frame).frames.astype(np.float32).ravel()
            else:
                rows[key] = compute_spectrogram(window, config.frame).pixels.astype(np.float32).ravel()
    write_cache(args.out_cache, rows)
    print(f"wrote {len(rows)} {args.feature} rows to {args.out_cache}")
    return EXIT_OK


# ---------------------------------------------------------------- plan-aug


def cmd_plan_aug(args) -> int:
    records = parse_manifest(args.manifest)
    cohort = _manifest_to_cohort([r for r in records if r.split == "train"])
    plan = plan_pairs(cohort, args.factor, args.seed)
    Path(args.out).write_text(plan.to_jsonl(), encoding="utf-8")
    print(f"planned {len(plan.records)} synthesis jobs -> {args.out}")
    return EXIT_OK


# ---------------------------------------------------------------- run-tts / run-asr


def _check_budget(failures, budget) -> None:
    if budget is not None and len(failures) > budget:
        raise ToolBudgetExceeded(
            f"{len(failures)} failed jobs exceed the budget of {budget}"
        )


def cmd_run_tts(args) -> int:
    records = parse_manifest(args.manifest)
    cohort = _manifest_to_cohort(records)
    plan = load_plan(args.plan)
    cfg = ExternalToolConfig(tts_command_template=args.cmd, timeout_s=args.timeout_s,
                             max_retries=args.max_retries)
    items, failures = run_tts_jobs(plan, cohort, cfg, args.out_dir,
                                   max_workers=args.max_workers)
    out_dir = Path(args.out_dir)
    synth_records = [
        ManifestRecord(id=i.id, label=i.label, split="train", audio=i.audio,
                       source="synthetic", voice_of=i.voice_of, transcript_of=i.transcript_of)
        for i in items
    ]
    write_manifest(out_dir / "synthetic_manifest.jsonl", synth_records)
    write_failure_report(out_dir / "failures.jsonl", failures)
    print(f"synthesized {len(items)} items, {len(failures)} failures -> {out_dir}")
    _check_budget(failures, args.max_failures)
    return EXIT_OK


def cmd_run_asr(args) -> int:
    records = parse_manifest(args.manifest)
    cohort = _manifest_to_cohort(records)
    cfg = ExternalToolConfig(asr_command_template=args.cmd, timeout_s=args.timeout_s,
                             max_retries=args.max_retries)
    items, failures = run_asr_jobs(cohort, cfg, args.out_dir, max_workers=args.max_workers)
    by_id = {r.id: r for r in records}
    out_records = [replace(by_id[i.id], transcript=i.transcript) for i in items]
    out_dir = Path(args.out_dir)
    write_manifest(out_dir / "transcribed_manifest.jsonl", out_records)
    write_failure_report(out_dir / "failures.jsonl", failures)
    print(f"transcribed {len(items)} items, {len(failures)} failures -> {out_dir}")
    _check_budget(failures, args.max_failures)
    return EXIT_OK


# ---------------------------------------------------------------- train / eval


def cmd_train(args) -> int:
    config = _load_config(args.config)
    if args.val_fraction is not None:
        config = replace(config, val_fraction=args.val_fraction)
    records = parse_manifest(args.manifest)
    caches = load_cache_dir(args.caches)
    result, models = run_experiment(config, records, caches)
    save_models(args.out_model, config, models)
    Path(args.out_result).write_text(result.to_json(), encoding="utf-8")
    print(f"trained {len(models)} seed(s); averaged test metrics:")
    _print_report(result.averaged, result.sds)
    return EXIT_OK


def cmd_eval(args) -> int:
    config, models = load_models(args.model)
    env_seed = os.environ.get(SEED_ENV_VAR)
    seeds = [int(env_seed)] if env_seed else list(config.seeds)
    records = parse_manifest(args.manifest)
    caches = load_cache_dir(args.caches)
    reports = {}
    for seed in seeds:
        if seed not in models:
            raise ConfigError(f"model file has no seed {seed}")
        reports[seed] = evaluate(models[seed], records, caches, config)
    averaged, sds = average_over_seeds([reports[s] for s in seeds])
    payload = {
        "per_seed": [{"seed": s, "metrics": reports[s].to_dict()} for s in seeds],
        "averaged": {"mean": averaged.to_dict(), "sd": sds},
    }
    Path(args.out_report).write_text(json.dumps(payload, indent=2, sort_keys=True),
                                     encoding="utf-8")
    if args.out_predictions:
        test_records = [r for r in records if r.split == "test"]
        samples = resolve_samples(test_records, caches, config)
        per_seed = [subject_predictions(models[s], samples, config) for s in seeds]
        lines = []
        for idx in range(len(per_seed[0])):
            subject = per_seed[0][idx].subject
            prob = sum(p[idx].prob for p in per_seed) / len(per_seed)
            pred = 1 if prob >= config.threshold else 0
            label = per_seed[0][idx].label
            lines.append(json.dumps({"id": subject, "prob": prob, "pred": pred,
                                     "label": label}, separators=(",", ":")))
        Path(args.out_predictions).write_text("".join(l + "\n" for l in lines),
                                              encoding="utf-8")
    _print_report(averaged, sds)
    return EXIT_OK


# ---------------------------------------------------------------- ablate / curve


def _parse_grid(spec: str):
    if spec == "table3":
        return TABLE3_GRID
    try:
        cells = json.loads(Path(spec).read_text(encoding="utf-8"))
        return [(int(c["id"]), float(c["factor"]), bool(c["moe"])) for c in cells]
    except (OSError, json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise ConfigError(f"cannot read ablation grid from {spec!r}: {exc}") from exc


def _data_provider(config: ExperimentConfig):
    data = config.data or {}
    if "synthetic" in data:
        syn = data["synthetic"]
        return synthetic_provider(
            config,
            n_train=int(syn.get("n_train", 100)),
            n_test=int(syn.get("n_test", 60)),
            separation=syn.get("separation", 4.0),
            cohort_seed=int(syn.get("cohort_seed", 1)),
        )
    if "manifests_by_factor" in data:
        return manifest_provider({float(k): v for k, v in data["manifests_by_factor"].items()},
                                 data["caches_dir"])
    raise ConfigError(
        "config.data must contain either 'synthetic' or "
        "'manifests_by_factor' + 'caches_dir' for ablation runs"
    )


def cmd_ablate(args) -> int:
    config = _load_config(args.config)
    grid = _parse_grid(args.grid)
    provider = _data_provider(config)
    rows = ablate(config, provider, grid)
    Path(args.out_csv).write_text(ablation_csv(rows), encoding="utf-8")
    if args.results_dir:
        out = Path(args.results_dir)
        out.mkdir(parents=True, exist_ok=True)
        for row in rows:
            (out / f"cell{row.cell_id}.json").write_text(row.result.to_json(),
                                                         encoding="utf-8")
    print(f"ablation grid of {len(rows)} cell(s) -> {args.out_csv}")
    for row in rows:
        tick = "on " if row.moe_enabled else "off"
        print(f"  id {row.cell_id}: factor {row.factor:g}, selection {tick} -> "
              f"accuracy {format_percent(row.result.averaged.accuracy)}%")
    return EXIT_OK


def cmd_curve(args) -> int:
    results_dir = Path(args.results)
    paths = sorted(results_dir.glob("*.json"))
    if not paths:
        raise ConfigError(f"no result files in {results_dir}")
    results = [RunResult.from_file(p) for p in paths]
    by_factor = select_curve_results(results)
    Path(args.out_csv).write_text(emit_curve(by_factor), encoding="utf-8")
    print(f"curve over factors {sorted(by_factor)} -> {args.out_csv}")
    return EXIT_OK


# ---------------------------------------------------------------- wiring


def build_parser() -> _Parser:
    parser = _Parser(prog="motas", description=__doc__)
    parser.add_argument("--version", action="version", version=__version__)
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)

    p = sub.add_parser("extract", help="compute mfcc/spectrogram features into a cache")
    p.add_argument("--manifest", required=True)
    p.add_argument("--feature", required=True, choices=["mfcc", "spec"])
    p.add_argument("--config", required=True)
    p.add_argument("--out-cache", required=True)
    p.set_defaults(func=cmd_extract)

    p = sub.add_parser("plan-aug", help="generate a voice/transcript pairing plan")
    p.add_argument("--manifest", required=True)
    p.add_argument("--factor", required=True, type=float)
    p.add_argument("--seed", required=True, type=int)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_plan_aug)

    for name, func, help_text in (
        ("run-tts", cmd_run_tts, "drive the external synthesis tool over a plan"),
        ("run-asr", cmd_run_asr, "drive the external recognition tool over a manifest"),
    ):
        p = sub.add_parser(name, help=help_text)
        if name == "run-tts":
            p.add_argument("--plan", required=True)
        p.add_argument("--manifest", required=True)
        p.add_argument("--cmd", required=True, help="command template")
        p.add_argument("--out-dir", required=True)
        p.add_argument("--timeout-s", type=float, default=60.0)
        p.add_argument("--max-retries", type=int, default=2)
        p.add_argument("--max-workers", type=int, default=1)
        p.add_argument("--max-failures", type=int, default=None,
                       help="exit 3 when more jobs than this fail")
        p.set_defaults(func=func)

    p = sub.add_parser("train", help="train per seed and evaluate on the test split")
    p.add_argument("--config", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--caches", required=True)
    p.add_argument("--out-model", required=True)
    p.add_argument("--out-result", required=True)
    p.add_argument("--val-fraction", type=float, default=None,
                   help="hold out this seeded fraction of training samples; "
                        "their final loss is recorded per seed")
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a saved model file")
    p.add_argument("--model", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--caches", required=True)
    p.add_argument("--out-report", required=True)
    p.add_argument("--out-predictions", default=None)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("ablate", help="run the (factor x selection) grid")
    p.add_argument("--config", required=True)
    p.add_argument("--grid", default="table3", help="'table3' or a JSON grid file")
    p.add_argument("--out-csv", required=True)
    p.add_argument("--results-dir", default=None)
    p.set_defaults(func=cmd_ablate)

    p = sub.add_parser("curve", help="factor/accuracy CSV from stored results")
    p.add_argument("--results", required=True)
    p.add_argument("--out-csv", required=True)
    p.set_defaults(func=cmd_curve)

    return parser


DATA_ERRORS = (
    ManifestError, CacheError, ConfigError, PlanError, MergeError,
    EmbeddingLookupError, MalformedWavError, UnsupportedWavError,
    MissingAugmentedData, FileNotFoundError,
)


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
        return args.func(args)
    except UsageError as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except ToolBudgetExceeded as exc:
        print(f"tool failure budget exceeded: {exc}", file=sys.stderr)
        return EXIT_TOOL_BUDGET
    except DATA_ERRORS as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
