import numpy as np
import pytest

from seqtag.checkpoint import (MAGIC, decode_checkpoint, encode_checkpoint, load_checkpoint,
                               save_checkpoint)
from seqtag.errors import ParseError

from toy import pair_model, small_config


@pytest.mark.parametrize("kind", ["none", "T-A", "T-B", "T-C"])
def test_round_trip(tmp_path, kind):
    config = small_config(seed=3)
    model, enc_t, _ = pair_model(kind, seed=3, config=config)
    for n in model.registry:
        model.registry[n].value[...] += 0.125  # differ from a fresh build
    path = tmp_path / "m.ck"
    save_checkpoint(model, config, str(path))
    loaded, cfg, meta = load_checkpoint(str(path))
    assert cfg == config and meta["arch"] == kind
    assert list(loaded.registry) == list(model.registry)
    for n in model.registry:
        assert loaded.registry.scope(n) == model.registry.scope(n)
        assert loaded.registry[n].value.tobytes() == model.registry[n].value.tobytes()
    assert loaded.target.predict(enc_t) == model.target.predict(enc_t)
    again = tmp_path / "again.ck"
    save_checkpoint(loaded, cfg, str(again))
    assert again.read_bytes() == path.read_bytes()


def test_layout_is_little_endian_and_sorted():
    config = small_config()
    model, _, _ = pair_model("T-B", config=config)
    data = encode_checkpoint(model, config)
    assert data.startswith(MAGIC)
    assert int.from_bytes(data[8:12], "little") == 1
    assert int.from_bytes(data[12:16], "little") == len(model.registry) + 1
    meta, tensors = decode_checkpoint(data)
    assert list(tensors) == sorted(tensors)
    name = "target/crf.transitions"
    np.testing.assert_array_equal(tensors[name][1], model.registry[name].value)


def test_corrupt_files_rejected():
    config = small_config()
    model, _, _ = pair_model("none", config=config)
    data = encode_checkpoint(model, config)
    with pytest.raises(ParseError, match="not a seqtag"):
        decode_checkpoint(b"XXXXXXXX" + data[8:])
    with pytest.raises(ParseError, match="truncated"):
        decode_checkpoint(data[:-3])
    with pytest.raises(ParseError, match="trailing"):
        decode_checkpoint(data + b"\0")
