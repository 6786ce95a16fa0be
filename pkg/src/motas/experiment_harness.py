"""Experiment harness: configuration, manifests, the binary feature-cache
container, training/evaluation loops, the ablation grid, and the
augmentation-factor accuracy curve.

Everything a run produces is a deterministic function of (manifest, caches,
config, seed): shuffling, initialization, and dropout all draw from named
substreams of the per-seed generator.
"""

from __future__ import annotations

import io
import json
import struct
import zlib
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Callable, Mapping, Sequence

import numpy as np

from .audio_dsp import FrameConfig, MfccSequence, SpectrogramImage, IMAGE_SIZE
from .augmentation_planner import synthesis_quota
from .encoders import (
    ALL_MODALITIES,
    Dims,
    EmbeddingLookupError,
    MfccEncoderParams,
    SpectrogramEncoderParams,
    load_external_embedding,
    synth_embeddings,
)
from .fusion_classifier import (
    ClassifierModel,
    MlpParams,
    SampleFeatures,
    loss_batch,
    predict,
)
from .metrics_eval import (
    MetricsReport,
    aggregate_subject,
    aggregate_subject_majority,
    average_over_seeds,
    confusion,
    metrics,
)
from .moe_selector import LinearProjection, MoEModalityLayer
from .tensor_grad import AdamState, Rng, adam_step, collect_parameters, zero_grads

Array = np.ndarray

SEED_ENV_VAR = "MOTAS_SEED"

CACHE_MAGIC = b"MTAS"
CACHE_VERSION = 1

LABELS = ("AD", "CN")
SPLITS = ("train", "test")

AGGREGATIONS = ("mean_prob", "majority")

ALLOWED_FACTORS = (1.0, 1.5, 2.0, 2.5, 3.0)


class CacheError(ValueError):
    """The feature-cache file violates its binary format."""


class ManifestError(ValueError):
    """A manifest line is malformed or violates a split invariant."""


class ConfigError(ValueError):
    """An experiment configuration value is out of its domain."""


# --------------------------------------------------------------------------
# Feature cache: id-keyed fixed-dimension float32 vectors, bit-exact.
# Layout: "MTAS" | u32 version | u32 dim | u32 rows | per row:
# u32 id byte-length, id utf-8, dim little-endian float32 values.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class FeatureCache:
    dim: int
    rows: dict[str, Array]  # insertion order = file order; float32 vectors


def _write_block(buf: io.BytesIO, dim: int, rows: Sequence[tuple[str, Array]]) -> None:
    buf.write(CACHE_MAGIC)
    buf.write(struct.pack("<III", CACHE_VERSION, dim, len(rows)))
    for rid, vec in rows:
        encoded = rid.encode("utf-8")
        buf.write(struct.pack("<I", len(encoded)))
        buf.write(encoded)
        buf.write(np.ascontiguousarray(vec, dtype="<f4").tobytes())


def cache_bytes(rows: Mapping[str, Array]) -> bytes:
    """Serialize one uniform-dimension cache block."""
    items = []
    dim: int | None = None
    for rid, vec in rows.items():
        arr = np.asarray(vec, dtype=np.float32).reshape(-1)
        if dim is None:
            dim = arr.shape[0]
        elif arr.shape[0] != dim:
            raise CacheError(f"row '{rid}' has dim {arr.shape[0]}, expected {dim}")
        items.append((rid, arr))
    buf = io.BytesIO()
    _write_block(buf, dim or 0, items)
    return buf.getvalue()


def write_cache(path: str | Path, rows: Mapping[str, Array]) -> None:
    Path(path).write_bytes(cache_bytes(rows))


def _read_block(raw: bytes, offset: int, path: str) -> tuple[FeatureCache, int]:
    if len(raw) - offset < 16:
        raise CacheError(f"{path}: truncated header")
    if raw[offset:offset + 4] != CACHE_MAGIC:
        raise CacheError(f"{path}: bad magic {raw[offset:offset + 4]!r}")
    version, dim, count = struct.unpack_from("<III", raw, offset + 4)
    if version != CACHE_VERSION:
        raise CacheError(f"{path}: unsupported version {version}")
    pos = offset + 16
    rows: dict[str, Array] = {}
    for _ in range(count):
        if len(raw) - pos < 4:
            raise CacheError(f"{path}: truncated body")
        (id_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        if len(raw) - pos < id_len + 4 * dim:
            raise CacheError(f"{path}: truncated body")
        rid = raw[pos:pos + id_len].decode("utf-8")
        pos += id_len
        vec = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos).copy()
        pos += 4 * dim
        if rid in rows:
            raise CacheError(f"{path}: duplicate id '{rid}'")
        rows[rid] = vec
    return FeatureCache(dim, rows), pos


def read_cache(path: str | Path) -> FeatureCache:
    raw = Path(path).read_bytes()
    cache, end = _read_block(raw, 0, str(path))
    if end != len(raw):
        raise CacheError(f"{path}: {len(raw) - end} bytes of trailing data")
    return cache


def save_checkpoint(path: str | Path, named_vectors: Mapping[str, Array]) -> None:
    """Parameter checkpoint: consecutive cache blocks, one per distinct
    vector length, ids being parameter path strings."""
    by_len: dict[int, list[tuple[str, Array]]] = {}
    for name, vec in named_vectors.items():
        flat = np.asarray(vec, dtype=np.float32).reshape(-1)
        by_len.setdefault(flat.shape[0], []).append((name, flat))
    buf = io.BytesIO()
    for dim, items in by_len.items():
        _write_block(buf, dim, items)
    Path(path).write_bytes(buf.getvalue())


def load_checkpoint(path: str | Path) -> dict[str, Array]:
    raw = Path(path).read_bytes()
    out: dict[str, Array] = {}
    pos = 0
    while pos < len(raw):
        block, pos = _read_block(raw, pos, str(path))
        for rid, vec in block.rows.items():
            if rid in out:
                raise CacheError(f"{path}: duplicate id '{rid}' across blocks")
            out[rid] = vec
    return out


# --------------------------------------------------------------------------
# Manifests: JSON lines, one record per line.
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ManifestRecord:
    id: str
    label: str
    split: str
    audio: str | None = None
    transcript: str | None = None
    source: str = "real"
    voice_of: str | None = None
    transcript_of: str | None = None
    subject: str | None = None  # defaults to id at use sites

    def __post_init__(self):
        if self.label not in LABELS:
            raise ValueError(f"label must be one of {LABELS}: got {self.label!r}")
        if self.split not in SPLITS:
            raise ValueError(f"split must be one of {SPLITS}: got {self.split!r}")
        if self.source not in ("real", "synthetic"):
            raise ValueError(f"source must be real or synthetic: got {self.source!r}")
        if self.source == "synthetic":
            if not self.voice_of or not self.transcript_of or self.voice_of == self.transcript_of:
                raise ValueError(f"synthetic record {self.id!r} needs distinct donor ids")
        elif self.voice_of is not None or self.transcript_of is not None:
            raise ValueError(f"real record {self.id!r} must not carry provenance links")

    @property
    def subject_key(self) -> str:
        return self.subject or self.id

    @property
    def y(self) -> int:
        return 1 if self.label == "AD" else 0

    def to_json(self) -> str:
        obj = {"id": self.id, "label": self.label, "split": self.split}
        for name in ("audio", "transcript", "source", "voice_of", "transcript_of", "subject"):
            value = getattr(self, name)
            if value is not None and not (name == "source" and value == "real"):
                obj[name] = value
        return json.dumps(obj, separators=(",", ":"))


def parse_manifest(path: str | Path) -> list[ManifestRecord]:
    """Validated records; unknown fields are preserved in the file but
    ignored here. Synthetic records in the test split are rejected."""
    records: list[ManifestRecord] = []
    seen: set[str] = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ManifestError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if not isinstance(obj, dict):
            raise ManifestError(f"{path}:{lineno}: record must be a JSON object")
        missing = [k for k in ("id", "label", "split") if k not in obj]
        if missing:
            raise ManifestError(f"{path}:{lineno}: missing required field(s) {missing}")
        try:
            rec = ManifestRecord(
                id=str(obj["id"]), label=obj["label"], split=obj["split"],
                audio=obj.get("audio"), transcript=obj.get("transcript"),
                source=obj.get("source", "real"),
                voice_of=obj.get("voice_of"), transcript_of=obj.get("transcript_of"),
                subject=obj.get("subject"),
            )
        except ValueError as exc:
            raise ManifestError(f"{path}:{lineno}: {exc}") from exc
        if rec.id in seen:
            raise ManifestError(f"{path}:{lineno}: duplicate id '{rec.id}'")
        if rec.split == "test" and rec.source == "synthetic":
            raise ManifestError(f"{path}:{lineno}: synthetic record '{rec.id}' in test split")
        seen.add(rec.id)
        records.append(rec)
    return records


def write_manifest(path: str | Path, records: Sequence[ManifestRecord]) -> None:
    Path(path).write_text("".join(r.to_json() + "\n" for r in records), encoding="utf-8")


# --------------------------------------------------------------------------
# Configuration
# --------------------------------------------------------------------------


@dataclass(frozen=True)
class ExperimentConfig:
    dims: Dims = field(default_factory=Dims)
    k: int = 3
    expert_hidden: int = 64
    moe_enabled: bool = True
    augmentation_factor: float = 1.0
    lr: float = 0.0067
    batch_size: int = 32
    epochs: int = 60
    dropout_p: float = 0.3
    mlp_hidden1: int = 256
    mlp_hidden2: int = 64
    seeds: tuple[int, ...] = (1, 2, 3, 4, 5)
    threshold: float = 0.5
    aggregation: str = "mean_prob"
    val_fraction: float = 0.0
    segment_s: float = 5.0
    expected_sample_rate: int = 16000
    frame: FrameConfig = field(default_factory=FrameConfig)
    data: dict | None = None  # free-form data source description for the CLI

    def __post_init__(self):
        if self.k < 1:
            raise ConfigError(f"k must be >= 1: got {self.k}")
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1: got {self.batch_size}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if not any(abs(self.augmentation_factor - f) < 1e-12 for f in ALLOWED_FACTORS):
            raise ConfigError(
                f"augmentation_factor must be one of {ALLOWED_FACTORS}: got {self.augmentation_factor}"
            )
        if not 0.0 <= self.dropout_p < 1.0:
            raise ConfigError(f"dropout_p must be in [0, 1): got {self.dropout_p}")
        if self.aggregation not in AGGREGATIONS:
            raise ConfigError(f"aggregation must be one of {AGGREGATIONS}: got {self.aggregation!r}")
        if not 0.0 <= self.val_fraction < 1.0:
            raise ConfigError(f"val_fraction must be in [0, 1): got {self.val_fraction}")
        if self.epochs < 0:
            raise ConfigError("epochs must be nonnegative")

    @property
    def fusion_dim(self) -> int:
        return 3 * self.dims.d_e + self.dims.d_w

    def expected_frames(self) -> int:
        n = int(round(self.segment_s * self.expected_sample_rate))
        return self.frame.frame_count(n, self.expected_sample_rate)

    def to_dict(self) -> dict:
        return {
            "dims": self.dims.to_dict(),
            "k": self.k,
            "expert_hidden": self.expert_hidden,
            "moe_enabled": self.moe_enabled,
            "augmentation_factor": self.augmentation_factor,
            "lr": self.lr,
            "batch_size": self.batch_size,
            "epochs": self.epochs,
            "dropout_p": self.dropout_p,
            "mlp_hidden1": self.mlp_hidden1,
            "mlp_hidden2": self.mlp_hidden2,
            "seeds": list(self.seeds),
            "threshold": self.threshold,
            "aggregation": self.aggregation,
            "val_fraction": self.val_fraction,
            "segment_s": self.segment_s,
            "expected_sample_rate": self.expected_sample_rate,
            "frame": {
                "frame_len_ms": self.frame.frame_len_ms,
                "hop_ms": self.frame.hop_ms,
                "n_fft": self.frame.n_fft,
                "n_mels": self.frame.n_mels,
                "n_mfcc": self.frame.n_mfcc,
                "fmin": self.frame.fmin,
                "fmax": self.frame.fmax,
                "log_floor": self.frame.log_floor,
            },
            "data": self.data,
        }

    @staticmethod
    def from_dict(obj: dict) -> "ExperimentConfig":
        obj = dict(obj)
        try:
            dims = Dims(**(obj.pop("dims", None) or {}))
            frame = FrameConfig(**(obj.pop("frame", None) or {}))
            seeds = tuple(obj.pop("seeds", None) or (1, 2, 3, 4, 5))
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"invalid config: {exc}") from exc
        known = {f for f in ExperimentConfig.__dataclass_fields__ if f not in ("dims", "frame", "seeds")}
        unknown = set(obj) - known
        if unknown:
            raise ConfigError(f"unknown config fields: {sorted(unknown)}")
        try:
            return ExperimentConfig(dims=dims, frame=frame, seeds=seeds, **obj)
        except TypeError as exc:
            raise ConfigError(f"invalid config: {exc}") from exc

    @staticmethod
    def from_file(path: str | Path) -> "ExperimentConfig":
        try:
            obj = json.loads(Path(path).read_text(encoding="utf-8"))
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON: {exc}") from exc
        return ExperimentConfig.from_dict(obj)


# --------------------------------------------------------------------------
# Sample resolution: manifest records + caches -> model inputs
# --------------------------------------------------------------------------

Caches = Mapping[str, Mapping[str, Array]]


def _segment_keys(record: ManifestRecord, caches: Caches) -> list[str]:
    """Cache keys for a record: its id, or id@0..id@k for split windows."""
    if all(record.id in caches[m] for m in ALL_MODALITIES):
        return [record.id]
    keys = []
    i = 0
    while True:
        key = f"{record.id}@{i}"
        if all(key in caches[m] for m in ALL_MODALITIES):
            keys.append(key)
            i += 1
        else:
            break
    if not keys:
        missing = [m for m in ALL_MODALITIES if record.id not in caches.get(m, {})]
        raise EmbeddingLookupError(
            f"record '{record.id}' is unresolvable: no cache rows in modalities {missing}"
        )
    return keys


def _resolve_mfcc(cache: Mapping[str, Array], key: str, config: ExperimentConfig):
    vec = np.asarray(cache[key])
    if vec.shape == (config.dims.d_m,):
        return vec.astype(np.float64)
    t = config.expected_frames()
    if vec.shape == (t * config.frame.n_mfcc,):
        return MfccSequence(vec.astype(np.float64).reshape(t, config.frame.n_mfcc))
    raise EmbeddingLookupError(
        f"mfcc row '{key}' has dim {vec.shape[0]}; expected {config.dims.d_m} "
        f"(embedding) or {t * config.frame.n_mfcc} (sequence)"
    )


def _resolve_spec(cache: Mapping[str, Array], key: str, config: ExperimentConfig):
    vec = np.asarray(cache[key])
    if vec.shape == (config.dims.d_s,):
        return vec.astype(np.float64)
    if vec.shape == (IMAGE_SIZE * IMAGE_SIZE,):
        return SpectrogramImage(vec.astype(np.float64).reshape(IMAGE_SIZE, IMAGE_SIZE))
    raise EmbeddingLookupError(
        f"spec row '{key}' has dim {vec.shape[0]}; expected {config.dims.d_s} "
        f"(embedding) or {IMAGE_SIZE * IMAGE_SIZE} (image)"
    )


def resolve_samples(records: Sequence[ManifestRecord], caches: Caches,
                    config: ExperimentConfig) -> list[SampleFeatures]:
    """One SampleFeatures per cached segment, in manifest order."""
    samples = []
    for rec in records:
        for key in _segment_keys(rec, caches):
            x_w = load_external_embedding(caches["w2v"], key, config.dims.d_w).astype(np.float64)
            x_t = load_external_embedding(caches["text"], key, config.dims.d_t).astype(np.float64)
            samples.append(SampleFeatures(
                sample_id=key, label=rec.label, x_w=x_w,
                mfcc=_resolve_mfcc(caches["mfcc"], key, config),
                spec=_resolve_spec(caches["spec"], key, config),
                text=x_t, subject=rec.subject_key,
            ))
    return samples


# --------------------------------------------------------------------------
# Model construction, training, evaluation
# --------------------------------------------------------------------------


def build_model(config: ExperimentConfig, seed: int, need_mfcc_encoder: bool = False,
                need_spec_encoder: bool = False) -> ClassifierModel:
    """Seeded model: mixture layers (or the linear-projection baseline when
    selection is disabled), the fusion MLP, and optional in-graph encoders."""
    rng = Rng([seed, zlib.crc32(b"init")])
    d = config.dims
    compressors: dict[str, MoEModalityLayer | LinearProjection] = {}
    for modality in ("mfcc", "spec", "text"):
        if config.moe_enabled:
            compressors[modality] = MoEModalityLayer.create(
                modality, d.of(modality), d.d_e, k=config.k,
                hidden=config.expert_hidden, rng=rng)
        else:
            compressors[modality] = LinearProjection.create(modality, d.of(modality), d.d_e, rng)
    mlp = MlpParams.create(config.fusion_dim, config.mlp_hidden1, config.mlp_hidden2,
                           config.dropout_p, rng)
    mfcc_encoder = None
    if need_mfcc_encoder:
        mfcc_encoder = MfccEncoderParams.create(config.frame.n_mfcc, 128, d.d_m, rng)
    spec_encoder = None
    if need_spec_encoder:
        spec_encoder = SpectrogramEncoderParams.create(d.d_s, rng)
    return ClassifierModel(d, compressors, mlp, mfcc_encoder, spec_encoder, config.threshold)


@dataclass
class TrainOutput:
    config: ExperimentConfig
    models: dict[int, ClassifierModel]
    histories: dict[int, list[float]]  # per-epoch summed loss
    val_losses: dict[int, float | None]


def _train_single(config: ExperimentConfig, samples: list[SampleFeatures],
                  seed: int) -> tuple[ClassifierModel, list[float], float | None]:
    need_mfcc = any(isinstance(s.mfcc, MfccSequence) for s in samples)
    need_spec = any(isinstance(s.spec, SpectrogramImage) for s in samples)
    model = build_model(config, seed, need_mfcc, need_spec)
    shuffle_rng = Rng([seed, zlib.crc32(b"shuffle")])
    dropout_rng = Rng([seed, zlib.crc32(b"dropout")])

    train_samples = samples
    val_samples: list[SampleFeatures] = []
    if config.val_fraction > 0:
        n_val = int(round(config.val_fraction * len(samples)))
        order = shuffle_rng.permutation(len(samples))
        val_samples = [samples[i] for i in order[:n_val]]
        train_samples = [samples[i] for i in order[n_val:]]
    if not train_samples:
        raise ValueError("training set is empty")

    named = model.parameters()
    _, params = collect_parameters(named)
    state = AdamState.for_params(params, lr=config.lr)
    history: list[float] = []
    n = len(train_samples)
    for _ in range(config.epochs):
        order = shuffle_rng.permutation(n)
        epoch_loss = 0.0
        for start in range(0, n, config.batch_size):
            batch = [train_samples[i] for i in order[start:start + config.batch_size]]
            zero_grads(params)
            loss = loss_batch(batch, model, training=True, rng=dropout_rng)
            loss.backward()
            adam_step(params, [p.grad for p in params], state)
            epoch_loss += float(loss.data)
        history.append(epoch_loss)
    val_loss = None
    if val_samples:
        val_loss = float(loss_batch(val_samples, model, training=False).data)
    return model, history, val_loss


def train(config: ExperimentConfig, train_records: Sequence[ManifestRecord],
          caches: Caches) -> TrainOutput:
    """Train one model per configured seed on the train-split records."""
    records = [r for r in train_records if r.split == "train"]
    if not records:
        raise ValueError("no train-split records")
    samples = resolve_samples(records, caches, config)
    out = TrainOutput(config, {}, {}, {})
    for seed in config.seeds:
        model, history, val_loss = _train_single(config, samples, seed)
        out.models[seed] = model
        out.histories[seed] = history
        out.val_losses[seed] = val_loss
    return out


def train_accuracy(model: ClassifierModel, samples: Sequence[SampleFeatures],
                   threshold: float = 0.5) -> float:
    preds = [predict(model.predict_proba(s), threshold) for s in samples]
    return sum(int(p == s.y) for p, s in zip(preds, samples)) / len(samples)


@dataclass(frozen=True)
class SubjectPrediction:
    subject: str
    prob: float
    pred: int
    label: int

    def to_json(self) -> str:
        return json.dumps({"id": self.subject, "prob": self.prob,
                           "pred": self.pred, "label": self.label},
                          separators=(",", ":"))


def subject_predictions(model: ClassifierModel, samples: Sequence[SampleFeatures],
                        config: ExperimentConfig) -> list[SubjectPrediction]:
    """Segment probabilities grouped per subject; subject order follows
    first appearance. Mean-probability or majority aggregation per config."""
    groups: dict[str, list[SampleFeatures]] = {}
    order: list[str] = []
    for s in samples:
        key = s.subject or s.sample_id
        if key not in groups:
            groups[key] = []
            order.append(key)
        groups[key].append(s)
    out = []
    for key in order:
        members = groups[key]
        labels = {m.y for m in members}
        if len(labels) != 1:
            raise ManifestError(f"subject '{key}' has segments with conflicting labels")
        probs = [model.predict_proba(m) for m in members]
        mean_prob = aggregate_subject(probs)
        if config.aggregation == "majority":
            pred = aggregate_subject_majority([predict(p, config.threshold) for p in probs])
        else:
            pred = predict(mean_prob, config.threshold)
        out.append(SubjectPrediction(key, mean_prob, pred, labels.pop()))
    return out


def evaluate(model: ClassifierModel, test_records: Sequence[ManifestRecord],
             caches: Caches, config: ExperimentConfig) -> MetricsReport:
    """Segment probs -> subject aggregation -> prediction -> metrics."""
    records = [r for r in test_records if r.split == "test"]
    if not records:
        raise ValueError("no test-split records")
    samples = resolve_samples(records, caches, config)
    preds = subject_predictions(model, samples, config)
    return metrics(confusion([p.pred for p in preds], [p.label for p in preds]))


# --------------------------------------------------------------------------
# Run results, ablation grid, curve
# --------------------------------------------------------------------------


@dataclass
class RunResult:
    config: ExperimentConfig
    reports: dict[int, MetricsReport]
    averaged: MetricsReport
    sds: dict[str, float]
    histories: dict[int, list[float]]
    val_losses: dict[int, float | None]

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "per_seed": [
                {
                    "seed": seed,
                    "metrics": self.reports[seed].to_dict(),
                    "loss_history": self.histories[seed],
                    "val_loss": self.val_losses.get(seed),
                }
                for seed in self.config.seeds
            ],
            "averaged": {"mean": self.averaged.to_dict(), "sd": self.sds},
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)

    @staticmethod
    def from_dict(obj: dict) -> "RunResult":
        config = ExperimentConfig.from_dict(obj["config"])
        reports = {}
        histories = {}
        val_losses = {}
        for entry in obj["per_seed"]:
            seed = entry["seed"]
            reports[seed] = MetricsReport(**entry["metrics"])
            histories[seed] = entry["loss_history"]
            val_losses[seed] = entry.get("val_loss")
        averaged = MetricsReport(**obj["averaged"]["mean"])
        return RunResult(config, reports, averaged, dict(obj["averaged"]["sd"]),
                         histories, val_losses)

    @staticmethod
    def from_file(path: str | Path) -> "RunResult":
        return RunResult.from_dict(json.loads(Path(path).read_text(encoding="utf-8")))


def run_experiment(config: ExperimentConfig, records: Sequence[ManifestRecord],
                   caches: Caches) -> tuple[RunResult, dict[int, ClassifierModel]]:
    """Train per seed, evaluate each model on the test split, average."""
    trained = train(config, records, caches)
    reports: dict[int, MetricsReport] = {}
    for seed, model in trained.models.items():
        reports[seed] = evaluate(model, records, caches, config)
    averaged, sds = average_over_seeds([reports[s] for s in config.seeds])
    result = RunResult(config, reports, averaged, sds, trained.histories, trained.val_losses)
    return result, trained.models


# The seven-cell layout of the ablation study, in its canonical row order:
# selection off/on without augmentation, off/on at 2x, then the remaining
# factors with selection on.
TABLE3_GRID: tuple[tuple[int, float, bool], ...] = (
    (1, 1.0, False),
    (2, 1.0, True),
    (3, 2.0, False),
    (4, 2.0, True),
    (5, 1.5, True),
    (6, 2.5, True),
    (7, 3.0, True),
)


class MissingAugmentedData(ValueError):
    """No manifest/caches are available for a requested factor."""


DataProvider = Callable[[float], tuple[Sequence[ManifestRecord], Caches]]


@dataclass
class AblationRow:
    cell_id: int
    factor: float
    moe_enabled: bool
    result: RunResult


def ablate(base_config: ExperimentConfig, provider: DataProvider,
           grid: Sequence[tuple[int, float, bool]] = TABLE3_GRID) -> list[AblationRow]:
    """One averaged run per (factor, selection) cell, in grid order."""
    if not grid:
        raise ValueError("empty ablation grid")
    rows = []
    for cell_id, factor, moe_enabled in grid:
        config = replace(base_config, augmentation_factor=factor, moe_enabled=moe_enabled)
        records, caches = provider(factor)
        result, _ = run_experiment(config, records, caches)
        rows.append(AblationRow(cell_id, factor, moe_enabled, result))
    return rows


def ablation_csv(rows: Sequence[AblationRow]) -> str:
    header = ("id,tts_factor,moe,accuracy_mean,accuracy_sd,"
              "precision_ad,precision_cn,recall_ad,recall_cn,f1_ad,f1_cn")
    lines = [header]
    for row in rows:
        m = row.result.averaged
        lines.append(",".join([
            str(row.cell_id), repr(float(row.factor)), "on" if row.moe_enabled else "off",
            repr(m.accuracy), repr(row.result.sds["accuracy"]),
            repr(m.precision_ad), repr(m.precision_cn),
            repr(m.recall_ad), repr(m.recall_cn),
            repr(m.f1_ad), repr(m.f1_cn),
        ]))
    return "".join(line + "\n" for line in lines)


def select_curve_results(results: Sequence[RunResult]) -> dict[float, RunResult]:
    """Key results by augmentation factor for the factor/accuracy curve.

    When both selection-on and selection-off runs exist for a factor, the
    selection-on run is used (that is the sweep the curve describes).
    """
    chosen: dict[float, RunResult] = {}
    for r in results:
        f = float(r.config.augmentation_factor)
        if f in chosen:
            prev = chosen[f]
            candidates = [prev, r]
            on = [c for c in candidates if c.config.moe_enabled]
            if len(on) == 1:
                chosen[f] = on[0]
                continue
            raise ValueError(f"duplicate results for factor {f}")
        chosen[f] = r
    return chosen


def emit_curve(results_by_factor: Mapping[float, RunResult]) -> str:
    """CSV of (factor, mean accuracy, sd), factors ascending."""
    if not results_by_factor:
        raise ValueError("no results to plot")
    lines = ["factor,accuracy_mean,accuracy_sd"]
    for f in sorted(results_by_factor):
        r = results_by_factor[f]
        lines.append(f"{f!r},{r.averaged.accuracy!r},{r.sds['accuracy']!r}")
    return "".join(line + "\n" for line in lines)


# --------------------------------------------------------------------------
# Synthetic cohorts (desk-scale stand-in for the restricted corpus)
# --------------------------------------------------------------------------


def make_synthetic_cohort(config: ExperimentConfig, n_train: int, n_test: int,
                          separation: float | Mapping[str, float], cohort_seed: int,
                          factor: float | None = None,
                          ) -> tuple[list[ManifestRecord], Caches]:
    """Synthetic bundles as manifest records plus in-memory caches.

    Labels alternate AD/CN. A factor > 1 adds round((factor-1) * N_c) extra
    synthetic training samples per class with fresh seeded draws; the base
    train and test samples do not depend on the factor, so factor sweeps
    share their real data.
    """
    factor = config.augmentation_factor if factor is None else factor
    records: list[ManifestRecord] = []
    caches: dict[str, dict[str, Array]] = {m: {} for m in ALL_MODALITIES}

    def add(sample_id: str, label: str, split: str, stream: int, index: int,
            source: str = "real", voice_of: str | None = None,
            transcript_of: str | None = None) -> None:
        bundle = synth_embeddings([cohort_seed, stream, index], label, separation,
                                  config.dims, sample_id=sample_id, source=source)
        caches["w2v"][sample_id] = bundle.x_w.astype(np.float32)
        caches["mfcc"][sample_id] = bundle.x_m.astype(np.float32)
        caches["spec"][sample_id] = bundle.x_s.astype(np.float32)
        caches["text"][sample_id] = bundle.x_t.astype(np.float32)
        records.append(ManifestRecord(sample_id, label, split, source=source,
                                      voice_of=voice_of, transcript_of=transcript_of))

    for i in range(n_train):
        add(f"tr{i:04d}", LABELS[i % 2], "train", stream=1, index=i)
    for i in range(n_test):
        add(f"te{i:04d}", LABELS[i % 2], "test", stream=2, index=i)

    for label in LABELS:
        base = [r.id for r in records if r.split == "train" and r.label == label]
        quota = synthesis_quota(factor, len(base))
        for j in range(quota):
            voice = base[j % len(base)]
            donor = base[(j + 1) % len(base)]
            add(f"sy{label.lower()}{j:04d}", label, "train",
                stream=3 + (LABELS.index(label)), index=j,
                source="synthetic", voice_of=voice, transcript_of=donor)
    return records, caches


def synthetic_provider(config: ExperimentConfig, n_train: int, n_test: int,
                       separation: float | Mapping[str, float],
                       cohort_seed: int) -> DataProvider:
    def provider(factor: float) -> tuple[list[ManifestRecord], Caches]:
        return make_synthetic_cohort(config, n_train, n_test, separation,
                                     cohort_seed, factor=factor)
    return provider


def manifest_provider(manifests_by_factor: Mapping[float, str | Path],
                      caches_dir: str | Path) -> DataProvider:
    """Reads per-factor manifests and the shared cache directory
    (<caches_dir>/{w2v,mfcc,spec,text}.mtas)."""
    caches = load_cache_dir(caches_dir)

    def provider(factor: float) -> tuple[list[ManifestRecord], Caches]:
        match = [p for f, p in manifests_by_factor.items() if abs(float(f) - factor) < 1e-9]
        if not match:
            raise MissingAugmentedData(f"no manifest configured for factor {factor}")
        return parse_manifest(match[0]), caches

    return provider


def load_cache_dir(caches_dir: str | Path) -> Caches:
    caches: dict[str, Mapping[str, Array]] = {}
    for modality in ALL_MODALITIES:
        path = Path(caches_dir) / f"{modality}.mtas"
        caches[modality] = read_cache(path).rows if path.exists() else {}
    return caches


# --------------------------------------------------------------------------
# Model checkpoint files (all seeds in one container + JSON sidecar)
# --------------------------------------------------------------------------


def save_models(path: str | Path, config: ExperimentConfig,
                models: Mapping[int, ClassifierModel]) -> None:
    rows: dict[str, Array] = {}
    for seed in config.seeds:
        for name, tensor in models[seed].parameters().items():
            rows[f"seed.{seed}.{name}"] = tensor.data.astype(np.float32).ravel()
    save_checkpoint(path, rows)
    meta = {"config": config.to_dict(), "seeds": list(config.seeds)}
    Path(str(path) + ".meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True),
                                              encoding="utf-8")


def load_models(path: str | Path) -> tuple[ExperimentConfig, dict[int, ClassifierModel]]:
    meta_path = Path(str(path) + ".meta.json")
    if not meta_path.exists():
        raise CacheError(f"missing checkpoint sidecar {meta_path}")
    meta = json.loads(meta_path.read_text(encoding="utf-8"))
    config = ExperimentConfig.from_dict(meta["config"])
    rows = load_checkpoint(path)
    models: dict[int, ClassifierModel] = {}
    for seed in meta["seeds"]:
        prefix = f"seed.{seed}."
        need_mfcc = any(k.startswith(prefix + "encoder.mfcc") for k in rows)
        need_spec = any(k.startswith(prefix + "encoder.spec") for k in rows)
        model = build_model(config, seed, need_mfcc, need_spec)
        for name, tensor in model.parameters().items():
            key = prefix + name
            if key not in rows:
                raise CacheError(f"{path}: checkpoint is missing parameter '{key}'")
            flat = rows[key]
            if flat.size != tensor.data.size:
                raise CacheError(
                    f"{path}: parameter '{key}' has {flat.size} values, expected {tensor.data.size}"
                )
            tensor.data = flat.astype(np.float64).reshape(tensor.data.shape)
        models[seed] = model
    return config, models
