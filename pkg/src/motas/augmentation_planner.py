"""Intra-class voice/transcript pairing plans and the external-tool jobs
that realize them.

A plan deterministically pairs each synthesized sample's voice donor with a
same-class transcript donor. Speech synthesis and recognition are driven
through user-supplied command templates, never linked in: stub commands make
the whole path testable. Failures are collected per record and reported;
they never abort a batch.
"""

from __future__ import annotations

import json
import os
import shlex
import subprocess
import zlib
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Sequence

from .tensor_grad import Rng

LABELS = ("AD", "CN")

TIMEOUT_ENV_VAR = "MOTAS_TOOL_TIMEOUT_S"

TRANSCRIPT_CHARSET = set("abcdefghijklmnopqrstuvwxyz0123456789 '-")


class PlanError(ValueError):
    """The cohort cannot satisfy the requested pairing plan."""


class MergeError(ValueError):
    """Real and synthetic item lists cannot be merged."""


@dataclass(frozen=True)
class CohortItem:
    """One speech sample: real recordings have no provenance links;
    synthetic ones name their intra-class voice and transcript donors."""

    id: str
    label: str
    audio: str | None = None
    transcript: str | None = None  # path to a transcript file, or inline text
    source: str = "real"
    voice_of: str | None = None
    transcript_of: str | None = None

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}: got {self.label!r}")
        if self.source == "real":
            if self.voice_of is not None or self.transcript_of is not None:
                raise ValueError(f"real item {self.id!r} must not carry provenance links")
        elif self.source == "synthetic":
            if not self.voice_of or not self.transcript_of:
                raise ValueError(f"synthetic item {self.id!r} needs voice_of and transcript_of")
            if self.voice_of == self.transcript_of:
                raise ValueError(f"synthetic item {self.id!r} pairs a voice with its own transcript")
        else:
            raise ValueError(f"source must be real or synthetic: got {self.source!r}")


@dataclass(frozen=True)
class PlanRecord:
    synth_id: str
    label: str
    voice_id: str
    transcript_id: str


@dataclass(frozen=True)
class PairPlan:
    records: tuple[PlanRecord, ...]
    factor: float
    seed: int

    def to_jsonl(self) -> str:
        lines = [
            json.dumps(
                {"synth_id": r.synth_id, "label": r.label,
                 "voice_id": r.voice_id, "transcript_id": r.transcript_id},
                separators=(",", ":"),
            )
            for r in self.records
        ]
        return "".join(line + "\n" for line in lines)


def load_plan(path: str | Path, factor: float = 1.0, seed: int = 0) -> PairPlan:
    records = []
    for i, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
            records.append(PlanRecord(obj["synth_id"], obj["label"],
                                      obj["voice_id"], obj["transcript_id"]))
        except (json.JSONDecodeError, KeyError) as exc:
            raise PlanError(f"{path}: bad plan record on line {i}: {exc}") from exc
    return PairPlan(tuple(records), factor, seed)


def synthesis_quota(factor: float, class_size: int) -> int:
    """round((factor - 1) * class size), banker's rounding as in python."""
    return round((factor - 1.0) * class_size)


def plan_pairs(cohort: Sequence[CohortItem], factor: float, seed: int) -> PairPlan:
    """Deterministic intra-class pairing plan.

    Per class, voice donors cycle through a seeded shuffle of the roster so
    per-voice usage counts differ by at most one; each voice's transcript is
    drawn uniformly from same-class ids excluding the voice itself and any
    transcript already used with that voice, while alternatives remain.
    """
    if factor < 1.0:
        raise PlanError(f"augmentation factor must be >= 1: got {factor}")
    records: list[PlanRecord] = []
    for label in LABELS:
        ids = [item.id for item in cohort if item.label == label]
        quota = synthesis_quota(factor, len(ids))
        if quota == 0:
            continue
        if len(ids) < 2:
            raise PlanError(
                f"class {label} has {len(ids)} member(s) but a quota of {quota}; "
                "pairing needs at least two"
            )
        rng = Rng([seed, zlib.crc32(label.encode())])
        order = [ids[i] for i in rng.permutation(len(ids))]
        used: dict[str, set[str]] = {v: set() for v in ids}
        for i in range(quota):
            voice = order[i % len(order)]
            pool = [t for t in ids if t != voice and t not in used[voice]]
            if not pool:  # alternatives exhausted: allow transcript reuse
                used[voice].clear()
                pool = [t for t in ids if t != voice]
            transcript = pool[rng.integers(0, len(pool))]
            used[voice].add(transcript)
            records.append(PlanRecord(f"syn-{label.lower()}{i:04d}-{voice}", label, voice, transcript))
    return PairPlan(tuple(records), factor, seed)


@dataclass(frozen=True)
class ExternalToolConfig:
    """Command templates for the synthesis and recognition tools.

    The synthesis template must contain {voice_audio}, {text} and {out};
    the recognition template {audio} and {out}. Substitution happens per
    argv token after shlex splitting, so no shell is involved. A template
    may be omitted when only the other tool is driven.
    """

    tts_command_template: str | None = None
    asr_command_template: str | None = None
    timeout_s: float = 60.0
    max_retries: int = 2

    def __post_init__(self):
        if self.tts_command_template is not None:
            for ph in ("{voice_audio}", "{text}", "{out}"):
                if ph not in self.tts_command_template:
                    raise ValueError(f"tts template is missing placeholder {ph}")
        if self.asr_command_template is not None:
            for ph in ("{audio}", "{out}"):
                if ph not in self.asr_command_template:
                    raise ValueError(f"asr template is missing placeholder {ph}")

    def effective_timeout(self) -> float:
        env = os.environ.get(TIMEOUT_ENV_VAR)
        return float(env) if env else self.timeout_s


@dataclass(frozen=True)
class JobFailure:
    record_index: int
    record_id: str
    stage: str  # "tts" | "asr"
    exit_code: int | None
    message: str

    def to_json(self) -> str:
        return json.dumps(
            {"record": self.record_index, "id": self.record_id, "stage": self.stage,
             "exit_code": self.exit_code, "message": self.message},
            separators=(",", ":"),
        )


def write_failure_report(path: str | Path, failures: Sequence[JobFailure]) -> None:
    Path(path).write_text("".join(f.to_json() + "\n" for f in failures), encoding="utf-8")


def _render_command(template: str, substitutions: dict[str, str]) -> list[str]:
    argv = []
    for token in shlex.split(template):
        for key, value in substitutions.items():
            token = token.replace(key, value)
        argv.append(token)
    return argv


def _run_command(argv: list[str], timeout_s: float) -> tuple[int | None, str]:
    """Run one external command; returns (exit code or None, error message)."""
    try:
        proc = subprocess.run(argv, capture_output=True, timeout=timeout_s, text=True)
    except FileNotFoundError:
        return None, f"command not found: {argv[0]}"
    except subprocess.TimeoutExpired:
        return None, f"timed out after {timeout_s}s"
    if proc.returncode != 0:
        tail = (proc.stderr or proc.stdout or "").strip().splitlines()
        detail = tail[-1] if tail else "no output"
        return proc.returncode, f"exit {proc.returncode}: {detail}"
    return 0, ""


def _attempt_with_retries(argv: list[str], out_path: Path, cfg: ExternalToolConfig) -> tuple[int | None, str]:
    timeout = cfg.effective_timeout()
    code, message = None, "never ran"
    for _ in range(1 + max(0, cfg.max_retries)):
        code, message = _run_command(argv, timeout)
        if code == 0:
            if out_path.exists():
                return 0, ""
            code, message = None, f"command succeeded but produced no output at {out_path}"
    return code, message


def resolve_transcript_text(item: CohortItem) -> str:
    """Transcript content of an item: file contents if the field is an
    existing path, otherwise the field itself as inline text."""
    if item.transcript is None:
        raise PlanError(f"item {item.id!r} has no transcript")
    p = Path(item.transcript)
    if p.exists() and p.is_file():
        return p.read_text(encoding="utf-8")
    return item.transcript


def run_tts_jobs(plan: PairPlan, cohort: Sequence[CohortItem], cfg: ExternalToolConfig,
                 out_dir: str | Path, max_workers: int = 1,
                 ) -> tuple[list[CohortItem], list[JobFailure]]:
    """Realize a plan by spawning the synthesis command per record.

    Successful records become synthetic cohort items with provenance fields
    set; failed ones are retried up to max_retries, then reported and
    excluded. The failure report is ordered by record index.
    """
    if cfg.tts_command_template is None:
        raise ValueError("no tts command template configured")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    by_id = {item.id: item for item in cohort}

    def one(job: tuple[int, PlanRecord]) -> tuple[int, CohortItem | None, JobFailure | None]:
        index, rec = job
        try:
            voice = by_id[rec.voice_id]
            donor = by_id[rec.transcript_id]
        except KeyError as exc:
            return index, None, JobFailure(index, rec.synth_id, "tts", None,
                                           f"unknown cohort id {exc}")
        if voice.audio is None or not Path(voice.audio).exists():
            return index, None, JobFailure(index, rec.synth_id, "tts", None,
                                           f"voice audio missing: {voice.audio}")
        try:
            text = resolve_transcript_text(donor)
        except PlanError as exc:
            return index, None, JobFailure(index, rec.synth_id, "tts", None, str(exc))
        out_path = out_dir / f"{rec.synth_id}.wav"
        argv = _render_command(cfg.tts_command_template, {
            "{voice_audio}": str(voice.audio), "{text}": text, "{out}": str(out_path),
        })
        code, message = _attempt_with_retries(argv, out_path, cfg)
        if message:
            return index, None, JobFailure(index, rec.synth_id, "tts", code, message)
        item = CohortItem(id=rec.synth_id, label=rec.label, audio=str(out_path),
                          source="synthetic", voice_of=rec.voice_id,
                          transcript_of=rec.transcript_id)
        return index, item, None

    jobs = list(enumerate(plan.records))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    items = [item for _, item, _ in results if item is not None]
    failures = [f for _, _, f in results if f is not None]
    return items, failures


def clean_transcript(text: str) -> str:
    """Normalize recognized text: lowercase, keep only [a-z 0-9 space ' -],
    treating any whitespace as a space, then collapse runs and strip."""
    lowered = text.lower()
    kept = []
    for ch in lowered:
        if ch.isspace():
            kept.append(" ")
        elif ch in TRANSCRIPT_CHARSET:
            kept.append(ch)
    return " ".join("".join(kept).split())


def run_asr_jobs(items: Sequence[CohortItem], cfg: ExternalToolConfig, out_dir: str | Path,
                 max_workers: int = 1) -> tuple[list[CohortItem], list[JobFailure]]:
    """Transcribe items with the recognition command and store cleaned text.

    The tool writes raw text to a scratch file; the cleaned form is stored
    at <out_dir>/<id>.txt. Items whose cleaned transcript is empty are
    invalid: reported and excluded from the returned list.
    """
    if cfg.asr_command_template is None:
        raise ValueError("no asr command template configured")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)

    def one(job: tuple[int, CohortItem]) -> tuple[int, CohortItem | None, JobFailure | None]:
        index, item = job
        if item.audio is None or not Path(item.audio).exists():
            return index, None, JobFailure(index, item.id, "asr", None,
                                           f"audio missing: {item.audio}")
        raw_path = out_dir / f"{item.id}.raw.txt"
        argv = _render_command(cfg.asr_command_template,
                               {"{audio}": str(item.audio), "{out}": str(raw_path)})
        code, message = _attempt_with_retries(argv, raw_path, cfg)
        if message:
            return index, None, JobFailure(index, item.id, "asr", code, message)
        cleaned = clean_transcript(raw_path.read_text(encoding="utf-8"))
        if not cleaned:
            return index, None, JobFailure(index, item.id, "asr", 0, "empty transcript")
        final_path = out_dir / f"{item.id}.txt"
        final_path.write_text(cleaned, encoding="utf-8")
        return index, replace(item, transcript=str(final_path)), None

    jobs = list(enumerate(items))
    if max_workers > 1:
        with ThreadPoolExecutor(max_workers=max_workers) as pool:
            results = list(pool.map(one, jobs))
    else:
        results = [one(j) for j in jobs]
    results.sort(key=lambda r: r[0])
    good = [item for _, item, _ in results if item is not None]
    failures = [f for _, _, f in results if f is not None]
    return good, failures


@dataclass(frozen=True)
class MergedCohort:
    items: tuple[CohortItem, ...]
    summary: dict = field(hash=False)


def merge_augmented(real: Sequence[CohortItem], synthetic: Sequence[CohortItem]) -> MergedCohort:
    """Union of real and synthetic items with a per-class ratio summary."""
    seen: set[str] = set()
    for item in list(real) + list(synthetic):
        if item.id in seen:
            raise MergeError(f"duplicate id across merged manifests: {item.id!r}")
        seen.add(item.id)
    summary: dict = {"per_class": {}, "total": len(real) + len(synthetic)}
    for label in LABELS:
        n_real = sum(1 for i in real if i.label == label)
        n_syn = sum(1 for i in synthetic if i.label == label)
        summary["per_class"][label] = {
            "real": n_real,
            "synthetic": n_syn,
            "synthetic_per_real": (n_syn / n_real) if n_real else None,
        }
    return MergedCohort(tuple(real) + tuple(synthetic), summary)
