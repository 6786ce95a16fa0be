"""Model registry.

Identifiers are pinned: "<family>:<name>@<revision>". Unpinned ids are
rejected up front, reproducibility over convenience. The test* families are
deterministic hash-based stand-ins that run anywhere; the hf-*/torchvision
families load real pretrained weights and raise ModelLoadError when those
are not available locally.
"""

from __future__ import annotations

import base64
import hashlib
from dataclasses import dataclass

import numpy as np


class ModelIdError(ValueError):
    pass


class ModelLoadError(RuntimeError):
    pass


@dataclass(frozen=True)
class ModelId:
    family: str
    name: str
    revision: str

    @property
    def pinned(self) -> str:
        return f"{self.family}:{self.name}@{self.revision}"


def parse_model_id(identifier: str) -> ModelId:
    if ":" not in identifier:
        raise ModelIdError(f"model id {identifier!r} needs the form family:name@revision")
    family, rest = identifier.split(":", 1)
    if "@" not in rest:
        raise ModelIdError(f"model id {identifier!r} is not pinned; append @<revision>")
    name, revision = rest.rsplit("@", 1)
    if not revision or revision.lower() == "latest":
        raise ModelIdError(f"model id {identifier!r} is not pinned to a fixed revision")
    if not family or not name:
        raise ModelIdError(f"model id {identifier!r} has an empty family or name")
    return ModelId(family, name, revision)


def _digest_rng(*parts: bytes) -> np.random.Generator:
    digest = hashlib.sha256(b"\x1f".join(parts)).digest()
    words = np.frombuffer(digest, dtype="<u4")
    return np.random.Generator(np.random.PCG64(np.random.SeedSequence(words.tolist())))


class HashEmbedder:
    """Deterministic stand-in encoder: a seeded Gaussian vector derived from
    the input bytes and the pinned model id."""

    def __init__(self, model: ModelId):
        try:
            self.dim = int(model.name)
        except ValueError as exc:
            raise ModelIdError(f"testhash needs a numeric dimension: {model.name!r}") from exc
        self._salt = model.pinned.encode()

    def _vector(self, payload: bytes) -> np.ndarray:
        return _digest_rng(self._salt, payload).standard_normal(self.dim).astype(np.float32)

    def embed_audio(self, samples: np.ndarray, rate: int) -> np.ndarray:
        payload = samples.astype("<f4").tobytes() + rate.to_bytes(4, "little")
        return self._vector(payload)

    def embed_text(self, text: str) -> np.ndarray:
        return self._vector(text.encode("utf-8"))

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        return self._vector(image.astype("<f4").tobytes())


_ASR_WORDS = ("alpha", "bravo", "charlie", "delta", "echo", "foxtrot", "golf",
              "hotel", "india", "juliet", "kilo", "lima", "mike", "november",
              "oscar", "papa")

SILENCE_PEAK = 1e-4


class HashAsr:
    """Deterministic stand-in recognizer: silence transcribes to the empty
    string, anything else to words drawn from the input digest."""

    def __init__(self, model: ModelId):
        self._salt = model.pinned.encode()

    def transcribe_audio(self, samples: np.ndarray, rate: int) -> str:
        if np.max(np.abs(samples)) < SILENCE_PEAK:
            return ""
        digest = hashlib.sha256(self._salt + samples.astype("<f4").tobytes()).digest()
        n_words = 3 + digest[0] % 6
        return " ".join(_ASR_WORDS[digest[1 + i] % 16] for i in range(n_words))


class ConstAsr:
    """Emits a fixed base64-encoded text regardless of input; for exercising
    the cleaning path with known content."""

    def __init__(self, model: ModelId):
        try:
            self._text = base64.b64decode(model.name.encode("ascii")).decode("utf-8")
        except Exception as exc:
            raise ModelIdError(f"testconst needs base64 text: {model.name!r}") from exc

    def transcribe_audio(self, samples: np.ndarray, rate: int) -> str:
        return self._text


class Wav2Vec2Embedder:
    """Mean over the final hidden states of a wav2vec2 encoder (dim 768 for
    the base models)."""

    def __init__(self, model: ModelId):
        try:
            import torch
            from transformers import Wav2Vec2Model, Wav2Vec2FeatureExtractor
        except ImportError as exc:
            raise ModelLoadError(f"transformers/torch unavailable: {exc}") from exc
        try:
            self._extractor = Wav2Vec2FeatureExtractor.from_pretrained(
                model.name, revision=model.revision)
            self._model = Wav2Vec2Model.from_pretrained(model.name, revision=model.revision)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {model.pinned}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.dim = self._model.config.hidden_size

    def embed_audio(self, samples: np.ndarray, rate: int) -> np.ndarray:
        inputs = self._extractor(samples, sampling_rate=rate, return_tensors="pt")
        with self._torch.no_grad():
            hidden = self._model(**inputs).last_hidden_state
        return hidden.mean(dim=1).squeeze(0).numpy().astype(np.float32)


class TextClsEmbedder:
    """[CLS]-token embedding of a transformer text encoder."""

    def __init__(self, model: ModelId):
        try:
            import torch
            from transformers import AutoModel, AutoTokenizer
        except ImportError as exc:
            raise ModelLoadError(f"transformers/torch unavailable: {exc}") from exc
        try:
            self._tokenizer = AutoTokenizer.from_pretrained(model.name, revision=model.revision)
            self._model = AutoModel.from_pretrained(model.name, revision=model.revision)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {model.pinned}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.dim = self._model.config.hidden_size

    def embed_text(self, text: str) -> np.ndarray:
        inputs = self._tokenizer(text, return_tensors="pt", truncation=True)
        with self._torch.no_grad():
            hidden = self._model(**inputs).last_hidden_state
        return hidden[0, 0].numpy().astype(np.float32)


class ResnetImageEmbedder:
    """Pretrained image classifier features (dim 1000) over a log-mel image."""

    def __init__(self, model: ModelId):
        try:
            import torch
            import torchvision.models
        except ImportError as exc:
            raise ModelLoadError(f"torch/torchvision unavailable: {exc}") from exc
        try:
            weights = torchvision.models.get_weight(model.name)
            self._model = torchvision.models.resnet18(weights=weights)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {model.pinned}: {exc}") from exc
        self._model.eval()
        self._torch = torch
        self.dim = 1000

    def embed_image(self, image: np.ndarray) -> np.ndarray:
        mean = np.array([0.485, 0.456, 0.406])[:, None, None]
        std = np.array([0.229, 0.224, 0.225])[:, None, None]
        stacked = (np.repeat(image[None], 3, axis=0) - mean) / std
        tensor = self._torch.from_numpy(stacked[None]).float()
        with self._torch.no_grad():
            return self._model(tensor).squeeze(0).numpy().astype(np.float32)


class WhisperAsr:
    """Greedy (deterministic) decoding with a pretrained recognizer."""

    def __init__(self, model: ModelId):
        try:
            from transformers import pipeline
        except ImportError as exc:
            raise ModelLoadError(f"transformers unavailable: {exc}") from exc
        try:
            self._pipe = pipeline("automatic-speech-recognition", model=model.name,
                                  revision=model.revision)
        except Exception as exc:
            raise ModelLoadError(f"cannot load {model.pinned}: {exc}") from exc

    def transcribe_audio(self, samples: np.ndarray, rate: int) -> str:
        out = self._pipe({"array": samples, "sampling_rate": rate},
                         generate_kwargs={"do_sample": False, "num_beams": 1})
        return out["text"]


EMBED_FAMILIES = {
    "testhash": HashEmbedder,
    "hf-wav2vec2": Wav2Vec2Embedder,
    "hf-text": TextClsEmbedder,
    "torchvision-resnet18": ResnetImageEmbedder,
}

ASR_FAMILIES = {
    "testasr": HashAsr,
    "testconst": ConstAsr,
    "hf-whisper": WhisperAsr,
}

# Which backend method each modality needs.
MODALITY_METHOD = {"w2v": "embed_audio", "text": "embed_text", "spec_img": "embed_image"}


def make_embedder(identifier: str, modality: str):
    model = parse_model_id(identifier)
    if model.family not in EMBED_FAMILIES:
        raise ModelIdError(
            f"unknown embedding family {model.family!r}; "
            f"known: {sorted(EMBED_FAMILIES)}"
        )
    backend = EMBED_FAMILIES[model.family](model)
    method = MODALITY_METHOD[modality]
    if not hasattr(backend, method):
        raise ModelIdError(f"{model.family!r} cannot embed modality {modality!r}")
    return backend


def make_asr(identifier: str):
    model = parse_model_id(identifier)
    if model.family not in ASR_FAMILIES:
        raise ModelIdError(
            f"unknown recognizer family {model.family!r}; known: {sorted(ASR_FAMILIES)}"
        )
    return ASR_FAMILIES[model.family](model)
