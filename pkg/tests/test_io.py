import struct

import numpy as np
import pytest

from latentbridge import io
from latentbridge.io import FormatError, VectorStore
from latentbridge.text import encode
from latentbridge.toymodel import extract_vector
from latentbridge.translator import TranslatorConfig, init_translator, translate


def test_model_roundtrip_is_bit_exact(tiny_model, tmp_path):
    path = tmp_path / "m.toym"
    io.save_model(tiny_model, path)
    back = io.load_model(path)
    assert back.config == tiny_model.config
    for k, t in tiny_model.params.items():
        np.testing.assert_array_equal(back.params[k].data, t.data)
    p = encode("What is a qubit?")
    np.testing.assert_array_equal(extract_vector(back, p), extract_vector(tiny_model, p))


def test_translator_roundtrip_then_translate(tmp_path, rng):
    tp = init_translator(TranslatorConfig(16, 24, 8, 2, seed=9))
    path = tmp_path / "f.lbtr"
    io.save_checkpoint(tp, path)
    back = io.load_checkpoint(path)
    assert back.config == tp.config
    v = rng.standard_normal(16)
    np.testing.assert_array_equal(translate(back, v), translate(tp, v))


def test_vector_store_roundtrip(tmp_path, rng):
    store = VectorStore(np.array([3, 1, 4, 1, 5], np.uint32), rng.standard_normal((5, 7)).astype(np.float32))
    path = tmp_path / "v.lvec"
    io.save_vectors(store, path)
    back = io.load_vectors(path)
    np.testing.assert_array_equal(back.ids, store.ids)
    np.testing.assert_array_equal(back.vectors, store.vectors)
    assert path.stat().st_size == 20 + 5 * (4 + 7 * 4)


def test_vector_store_header_layout(rng):
    buf = io.encode_vectors(VectorStore(np.array([9], np.uint32), np.ones((1, 2), np.float32)))
    assert struct.unpack_from("<4sIIQ", buf) == (b"LVEC", 1, 2, 1)
    assert struct.unpack_from("<I2f", buf, 20) == (9, 1.0, 1.0)


def test_malformed_vector_stores():
    good = io.encode_vectors(VectorStore(np.arange(3, dtype=np.uint32), np.ones((3, 4), np.float32)))
    with pytest.raises(FormatError, match="magic"):
        io.decode_vectors(b"XVEC" + good[4:])
    with pytest.raises(FormatError, match="byte offset"):
        io.decode_vectors(good[:-5])
    with pytest.raises(FormatError, match="header"):
        io.decode_vectors(good[:10])
    with pytest.raises(FormatError, match="version"):
        io.decode_vectors(good[:4] + struct.pack("<I", 2) + good[8:])


def test_truncated_checkpoint_is_rejected(tmp_path):
    tp = init_translator(TranslatorConfig(8, 8, 4, 2))
    buf = io.encode_checkpoint(io.TRANSLATOR_MAGIC, tp.config.to_dict(), {k: t.data for k, t in tp.params.items()})
    for cut in (3, 10, len(buf) // 2, len(buf) - 1):
        with pytest.raises(FormatError, match="truncated at byte offset"):
            io.decode_checkpoint(buf[:cut], io.TRANSLATOR_MAGIC, "ckpt")
    with pytest.raises(FormatError, match="trailing"):
        io.decode_checkpoint(buf + b"\0", io.TRANSLATOR_MAGIC, "ckpt")


def test_checkpoint_version_and_magic_mismatch(tmp_path):
    tp = init_translator(TranslatorConfig(8, 8, 4, 2))
    path = tmp_path / "f.lbtr"
    io.save_checkpoint(tp, path)
    buf = path.read_bytes()
    path.write_bytes(buf[:4] + struct.pack("<I", 7) + buf[8:])
    with pytest.raises(FormatError, match="incompatible format version 7"):
        io.load_checkpoint(path)
    with pytest.raises(FormatError, match="magic"):
        io.decode_checkpoint(buf, io.MODEL_MAGIC, "model")


def test_atomic_write_leaves_no_temp_files(tmp_path):
    io.write_json(tmp_path / "a.json", {"b": 1, "a": [1.5]})
    assert sorted(p.name for p in tmp_path.iterdir()) == ["a.json"]
    assert (tmp_path / "a.json").read_text() == '{\n  "a": [\n    1.5\n  ],\n  "b": 1\n}\n'
    with pytest.raises(ValueError):
        io.write_json(tmp_path / "nan.json", {"x": float("nan")})
