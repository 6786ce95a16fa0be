"""Model-id parsing and registry dispatch (no pretrained weights needed)."""

import numpy as np
import pytest

from motas_exporter.models import (
    HashAsr,
    HashEmbedder,
    ModelIdError,
    make_asr,
    make_embedder,
    parse_model_id,
)


def test_parse_model_id_fields():
    m = parse_model_id("hf-text:bert-base-uncased@86b5e09")
    assert (m.family, m.name, m.revision) == ("hf-text", "bert-base-uncased", "86b5e09")
    assert m.pinned == "hf-text:bert-base-uncased@86b5e09"


def test_parse_rejects_malformed():
    for bad in ("no-colon@v1", "f:@v1", "f:n@", "f:n@LATEST", "f:n"):
        with pytest.raises(ModelIdError):
            parse_model_id(bad)


def test_registry_unknown_family():
    with pytest.raises(ModelIdError, match="unknown"):
        make_embedder("mystery:thing@v1", "w2v")
    with pytest.raises(ModelIdError, match="unknown"):
        make_asr("mystery:thing@v1")


def test_testhash_requires_numeric_dim():
    with pytest.raises(ModelIdError, match="numeric"):
        make_embedder("testhash:large@v1", "w2v")


def test_testconst_requires_base64():
    with pytest.raises(ModelIdError, match="base64"):
        make_asr("testconst:not base64 at all!@v1")


def test_hash_embedder_separates_revisions():
    a = make_embedder("testhash:64@v1", "text")
    b = make_embedder("testhash:64@v2", "text")
    va, vb = a.embed_text("same input"), b.embed_text("same input")
    assert va.shape == vb.shape == (64,)
    assert not np.array_equal(va, vb)
    assert np.array_equal(va, HashEmbedder(parse_model_id("testhash:64@v1")).embed_text("same input"))


def test_hash_asr_silence_rule():
    asr = HashAsr(parse_model_id("testasr:words@v1"))
    assert asr.transcribe_audio(np.zeros(1000), 16000) == ""
    spoken = asr.transcribe_audio(np.full(1000, 0.3), 16000)
    assert spoken and all(w.isalpha() for w in spoken.split())


def test_cli_export_and_transcribe(tmp_path, make_wav, make_manifest):
    import json

    from motas_exporter.__main__ import main

    wav = make_wav("a.wav", np.full(4000, 0.2))
    manifest = make_manifest("m.jsonl", [
        {"id": "a", "label": "AD", "audio": str(wav), "transcript": "hi there"}])
    job = tmp_path / "job.json"
    out_cache = tmp_path / "out.mtas"
    job.write_text(json.dumps({"manifest": str(manifest), "modality": "w2v",
                               "model": "testhash:96@v1", "out_cache": str(out_cache),
                               "pooling": "mean"}))
    assert main(["export", "--job", str(job)]) == 0
    assert out_cache.exists()
    assert main(["transcribe", "--manifest", str(manifest), "--model",
                 "testasr:words@v1", "--out-dir", str(tmp_path / "tx")]) == 0
    assert (tmp_path / "tx" / "a.txt").exists()
    assert main(["export", "--job", str(tmp_path / "missing.json")]) == 2
