"""Export jobs: manifest in, cache file or transcript files out.

Per-record input failures are logged and skipped; dimension problems are
hard errors raised before anything is written. Output row order always
follows the manifest, regardless of worker count.
"""

from __future__ import annotations

import json
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path
from typing import Callable

import numpy as np

from .audio import AudioReadError, load_audio, mel_image, split_windows
from .formats import Record, clean_text, read_manifest, write_cache
from .models import make_asr, make_embedder

MODALITIES = ("w2v", "text", "spec_img")
POOLING_FOR = {"w2v": "mean", "spec_img": "mean", "text": "cls"}


class ExportError(ValueError):
    pass


@dataclass(frozen=True)
class ExportJob:
    manifest: str
    modality: str
    model: str
    out_cache: str
    pooling: str
    expected_dim: int | None = None
    workers: int = 1

    def __post_init__(self):
        if self.modality not in MODALITIES:
            raise ExportError(f"modality must be one of {MODALITIES}: got {self.modality!r}")
        if self.pooling != POOLING_FOR[self.modality]:
            raise ExportError(
                f"modality {self.modality!r} requires pooling "
                f"{POOLING_FOR[self.modality]!r}: got {self.pooling!r}"
            )
        if self.workers < 1:
            raise ExportError("workers must be >= 1")


def load_job(path: str | Path) -> ExportJob:
    obj = json.loads(Path(path).read_text(encoding="utf-8"))
    return ExportJob(
        manifest=obj["manifest"], modality=obj["modality"], model=obj["model"],
        out_cache=obj["out_cache"], pooling=obj["pooling"],
        expected_dim=obj.get("expected_dim"), workers=int(obj.get("workers", 1)),
    )


@dataclass(frozen=True)
class Skip:
    record_id: str
    reason: str


@dataclass(frozen=True)
class ExportReport:
    written: int
    dim: int
    skipped: tuple[Skip, ...]


def _transcript_text(record: Record) -> str:
    if record.transcript is None:
        raise AudioReadError(f"record '{record.id}' has no transcript")
    p = Path(record.transcript)
    if p.exists() and p.is_file():
        return p.read_text(encoding="utf-8")
    return record.transcript


def _map_in_order(fn: Callable, items: list, workers: int) -> list:
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            return list(pool.map(fn, items))
    return [fn(item) for item in items]


def export_embeddings(job: ExportJob) -> ExportReport:
    """One cache row per readable record, keyed by record id.

    w2v: one embedding of the whole clip (the backend mean-pools its hidden
    states). spec_img: the clip is cut into 5-second windows, each window's
    image is embedded, and the embeddings are mean-pooled. text: one [CLS]
    style embedding of the transcript.
    """
    records = read_manifest(job.manifest)
    backend = make_embedder(job.model, job.modality)

    def one(record: Record) -> tuple[str, np.ndarray | None, str | None]:
        try:
            if job.modality == "text":
                return record.id, backend.embed_text(clean_text(_transcript_text(record))), None
            if record.audio is None:
                return record.id, None, "no audio path"
            samples, rate = load_audio(record.audio)
            if job.modality == "w2v":
                return record.id, backend.embed_audio(samples, rate), None
            vecs = [backend.embed_image(mel_image(w, rate)) for w in split_windows(samples, rate)]
            return record.id, np.mean(vecs, axis=0).astype(np.float32), None
        except (FileNotFoundError, AudioReadError) as exc:
            return record.id, None, str(exc)

    results = _map_in_order(one, records, job.workers)
    rows: dict[str, np.ndarray] = {}
    skipped: list[Skip] = []
    dim: int | None = None
    for rid, vec, reason in results:
        if vec is None:
            skipped.append(Skip(rid, reason or "unreadable"))
            continue
        if dim is None:
            dim = int(vec.shape[0])
        elif vec.shape[0] != dim:
            raise ExportError(
                f"inconsistent dims within one run: row '{rid}' has {vec.shape[0]}, "
                f"earlier rows have {dim}; nothing was written"
            )
        rows[rid] = vec
    if dim is None:
        raise ExportError("no record could be embedded; nothing was written")
    if job.expected_dim is not None and dim != job.expected_dim:
        raise ExportError(
            f"model emits dim {dim} but the job expects {job.expected_dim}; "
            "nothing was written"
        )
    write_cache(job.out_cache, rows)
    return ExportReport(len(rows), dim, tuple(skipped))


@dataclass(frozen=True)
class TranscribeReport:
    written: int
    skipped: tuple[Skip, ...]


def transcribe(manifest: str | Path, model_id: str, out_dir: str | Path,
               workers: int = 1) -> TranscribeReport:
    """One cleaned UTF-8 transcript file per record: <out_dir>/<id>.txt.

    Cleaning matches the consumer's rule byte for byte, so stored files are
    fixed points of it. Empty transcripts (e.g. silence) are still written;
    the consumer flags them invalid. Decode failures are logged and skipped.
    """
    records = read_manifest(manifest)
    backend = make_asr(model_id)
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)

    def one(record: Record) -> tuple[str, str | None, str | None]:
        if record.audio is None:
            return record.id, None, "no audio path"
        try:
            samples, rate = load_audio(record.audio)
            return record.id, clean_text(backend.transcribe_audio(samples, rate)), None
        except (FileNotFoundError, AudioReadError) as exc:
            return record.id, None, str(exc)

    results = _map_in_order(one, records, workers)
    skipped: list[Skip] = []
    written = 0
    for rid, text, reason in results:
        if text is None:
            skipped.append(Skip(rid, reason or "unreadable"))
            continue
        (out / f"{rid}.txt").write_text(text, encoding="utf-8")
        written += 1
    return TranscribeReport(written, tuple(skipped))
