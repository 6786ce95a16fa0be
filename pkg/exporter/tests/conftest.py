import json
import wave
from pathlib import Path

import numpy as np
import pytest


@pytest.fixture()
def make_wav(tmp_path):
    def write(name: str, samples, rate: int = 16000) -> Path:
        path = tmp_path / name
        with wave.open(str(path), "wb") as w:
            w.setnchannels(1)
            w.setsampwidth(2)
            w.setframerate(rate)
            w.writeframes((np.clip(np.asarray(samples), -1, 1) * 32767)
                          .astype("<i2").tobytes())
        return path
    return write


@pytest.fixture()
def make_manifest(tmp_path):
    def write(name: str, records: list[dict]) -> Path:
        path = tmp_path / name
        path.write_text("".join(json.dumps(r) + "\n" for r in records), encoding="utf-8")
        return path
    return write
