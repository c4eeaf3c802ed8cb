import json
import struct

import numpy as np
import pytest

from orcabehavior_hub.audio.spectrogram import encode_spec_tensor
from orcabehavior_hub.core.exceptions import ValidationError
from orcabehavior_hub.nn.checkpoint import (
    CKPT_MAGIC,
    decode_checkpoint,
    encode_checkpoint,
    load_checkpoint,
    parameters_equal,
    save_checkpoint,
)
from orcabehavior_hub.nn.layers import ModelConfig, ResNetClassifier, forward

CFG = ModelConfig(stem_width=4, stage_widths=(4, 8), blocks_per_stage=(1, 1),
                  zero_init_head=False, seed=5)


def _split(blob):
    start = len(CKPT_MAGIC)
    (head_len,) = struct.unpack("<I", blob[start:start + 4])
    header = json.loads(blob[start + 4:start + 4 + head_len])
    return header, blob[start + 4 + head_len:]


def _join(header, tail):
    head = json.dumps(header, sort_keys=True).encode("utf-8")
    return CKPT_MAGIC + struct.pack("<I", len(head)) + head + tail


def test_float32_checkpoint_is_exact(tmp_path):
    model = ResNetClassifier(CFG)
    path = str(tmp_path / "ckpt" / "rep00.ckpt")
    save_checkpoint(path, model, {"test_ids": ["a#000"], "repetition": 0})
    loaded, extra = load_checkpoint(path)
    assert parameters_equal(model, loaded)
    assert loaded.config == CFG
    assert extra == {"test_ids": ["a#000"], "repetition": 0}
    x = np.random.default_rng(0).uniform(0, 255, (2, 1, 8, 8))
    assert np.array_equal(forward(model, x).data, forward(loaded, x).data)


def test_float64_checkpoint_keeps_float32_precision():
    model = ResNetClassifier(ModelConfig(stem_width=4, stage_widths=(4,),
                                         blocks_per_stage=(1,), dtype="float64"))
    loaded, _ = decode_checkpoint(encode_checkpoint(model))
    for p, q in zip(model.parameters(), loaded.parameters()):
        assert q.data.dtype == np.float64
        assert np.allclose(p.data, q.data, rtol=1e-6, atol=1e-7)


def test_parameters_equal_detects_change():
    a, b = ResNetClassifier(CFG), ResNetClassifier(CFG)
    assert parameters_equal(a, b)
    b.head.bias.data[0] += 1.0
    assert not parameters_equal(a, b)


@pytest.mark.parametrize("blob", [b"", b"CKPT2xxxx", CKPT_MAGIC + b"\x01"])
def test_damaged_header(blob):
    with pytest.raises(ValidationError):
        decode_checkpoint(blob)


def test_broken_json_header():
    blob = CKPT_MAGIC + struct.pack("<I", 4) + b"{no "
    with pytest.raises(ValidationError):
        decode_checkpoint(blob)


def test_architecture_mismatch():
    header, tail = _split(encode_checkpoint(ResNetClassifier(CFG)))
    header["parameters"] = header["parameters"][:-1]
    with pytest.raises(ValidationError):
        decode_checkpoint(_join(header, tail))


def test_tensor_size_mismatch():
    model = ResNetClassifier(CFG)
    header, _ = _split(encode_checkpoint(model))
    tensors = [encode_spec_tensor(p.data.reshape(p.shape[0], -1)) for p in model.parameters()]  # noqa: E501
    tensors[0] = encode_spec_tensor(np.zeros((1, 1)))
    with pytest.raises(ValidationError):
        decode_checkpoint(_join(header, b"".join(tensors)))


def test_truncated_tensors():
    blob = encode_checkpoint(ResNetClassifier(CFG))
    with pytest.raises(ValidationError):
        decode_checkpoint(blob[:-10])
