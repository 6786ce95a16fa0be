"""Independent implementation of the shared file formats.

This package talks to the experiment package only through files, so the
cache container, the manifest schema, and the transcript cleaning rule are
reimplemented here and cross-validated against the consumer in tests.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Mapping

import numpy as np

CACHE_MAGIC = b"MTAS"
CACHE_VERSION = 1

TRANSCRIPT_CHARSET = set("abcdefghijklmnopqrstuvwxyz0123456789 '-")


class FormatError(ValueError):
    pass


def write_cache(path: str | Path, rows: Mapping[str, np.ndarray]) -> None:
    """Write id-keyed float32 vectors: MTAS magic, u32 version, u32 dim,
    u32 row count, then (u32 id length, utf-8 id, dim little-endian f32)."""
    items = []
    dim = None
    for rid, vec in rows.items():
        arr = np.asarray(vec, dtype="<f4").reshape(-1)
        if dim is None:
            dim = arr.shape[0]
        elif arr.shape[0] != dim:
            raise FormatError(f"row '{rid}' has dim {arr.shape[0]}, expected {dim}")
        items.append((rid, arr))
    out = bytearray()
    out += CACHE_MAGIC
    out += struct.pack("<III", CACHE_VERSION, dim or 0, len(items))
    for rid, arr in items:
        encoded = rid.encode("utf-8")
        out += struct.pack("<I", len(encoded))
        out += encoded
        out += arr.tobytes()
    Path(path).write_bytes(bytes(out))


def read_cache(path: str | Path) -> dict[str, np.ndarray]:
    """Reader used for self-checks; the authoritative validator lives in
    the experiment package."""
    raw = Path(path).read_bytes()
    if len(raw) < 16 or raw[:4] != CACHE_MAGIC:
        raise FormatError(f"{path}: not a cache file")
    version, dim, count = struct.unpack_from("<III", raw, 4)
    if version != CACHE_VERSION:
        raise FormatError(f"{path}: unsupported version {version}")
    pos = 16
    rows: dict[str, np.ndarray] = {}
    for _ in range(count):
        (id_len,) = struct.unpack_from("<I", raw, pos)
        pos += 4
        rid = raw[pos:pos + id_len].decode("utf-8")
        pos += id_len
        rows[rid] = np.frombuffer(raw, dtype="<f4", count=dim, offset=pos).copy()
        pos += 4 * dim
    if pos != len(raw):
        raise FormatError(f"{path}: trailing data")
    return rows


def clean_text(text: str) -> str:
    """Transcript normalization, byte-identical to the consumer's rule:
    lowercase, whitespace becomes space, keep [a-z 0-9 space ' -],
    collapse runs, strip."""
    kept = []
    for ch in text.lower():
        if ch.isspace():
            kept.append(" ")
        elif ch in TRANSCRIPT_CHARSET:
            kept.append(ch)
    return " ".join("".join(kept).split())


@dataclass(frozen=True)
class Record:
    id: str
    label: str
    audio: str | None
    transcript: str | None


def read_manifest(path: str | Path) -> list[Record]:
    """The subset of the manifest schema this package needs; unknown fields
    are ignored."""
    records = []
    seen = set()
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            obj = json.loads(line)
        except json.JSONDecodeError as exc:
            raise FormatError(f"{path}:{lineno}: invalid JSON: {exc}") from exc
        if "id" not in obj or "label" not in obj:
            raise FormatError(f"{path}:{lineno}: record needs id and label")
        rid = str(obj["id"])
        if rid in seen:
            raise FormatError(f"{path}:{lineno}: duplicate id '{rid}'")
        seen.add(rid)
        records.append(Record(rid, obj["label"], obj.get("audio"), obj.get("transcript")))
    return records
