"""Binary model checkpoints.

Layout (all integers little-endian)::

    b"SEQTAGCK"  u32 version  u32 record_count
    record*: u32 name_len, name (UTF-8), u8 kind
      kind b"J": u64 length, canonical JSON
      kind b"T": u32 scope_len, scope, u32 ndim, u64 dims[ndim], f64 data[prod(dims)]

The first record is ``meta`` (JSON); tensor records follow sorted by name,
so saving a loaded checkpoint reproduces the file byte for byte.
"""
import json
import struct

import numpy as np

from .data import Vocabulary
from .errors import ParseError
from .numerics import Rng
from .training import TrainConfig
from .transfer import LabelMapping, TaskSpec, build_joint_model

MAGIC = b"SEQTAGCK"
VERSION = 1


def _canonical_json(obj):
    return json.dumps(obj, sort_keys=True, separators=(",", ":"), ensure_ascii=False).encode("utf-8")


def _task_meta(view, extra_dim):
    meta = {
        "name": view.name,
        "metric": view.metric,
        "labels": list(view.labels.itos),
        "words": list(view.words.itos),
        "chars": list(view.chars.itos),
        "extra_dim": extra_dim,
        "task_labels": list(view.task_labels),
    }
    if view.mapping is not None:
        m = view.mapping
        meta["mapping"] = {"pairs": [list(p) for p in m.pairs], "direction": m.direction,
                           "line_count": m.line_count}
    return meta


def encode_checkpoint(model, config):
    meta = {
        "arch": model.kind,
        "config": config.to_dict(),
        "tasks": {task: _task_meta(view, view.crf.extra_dim) for task, view in model.views.items()},
    }
    chunks = []
    names = list(model.registry)
    chunks.append(MAGIC + struct.pack("<II", VERSION, 1 + len(names)))
    payload = _canonical_json(meta)
    chunks.append(_name(b"meta") + b"J" + struct.pack("<Q", len(payload)) + payload)
    for name in names:
        value = model.registry[name].value
        scope = model.registry.scope(name).encode("utf-8")
        rec = [_name(name.encode("utf-8")), b"T", struct.pack("<I", len(scope)), scope,
               struct.pack("<I", value.ndim), struct.pack(f"<{value.ndim}Q", *value.shape),
               value.astype("<f8").tobytes()]
        chunks.append(b"".join(rec))
    return b"".join(chunks)


def _name(raw):
    return struct.pack("<I", len(raw)) + raw


def save_checkpoint(model, config, path):
    data = encode_checkpoint(model, config)
    with open(path, "wb") as fh:
        fh.write(data)


class _Reader:
    def __init__(self, data, path):
        self.data, self.pos, self.path = data, 0, path

    def take(self, n):
        if self.pos + n > len(self.data):
            raise ParseError("truncated checkpoint", self.path)
        out = self.data[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))


def decode_checkpoint(data, path=None):
    """Returns ``(meta, tensors)`` with tensors as ``name -> (scope, array)``."""
    r = _Reader(data, path)
    if r.take(len(MAGIC)) != MAGIC:
        raise ParseError("not a seqtag checkpoint", path)
    version, count = r.unpack("<II")
    if version != VERSION:
        raise ParseError(f"unsupported checkpoint version {version}", path)
    meta, tensors = None, {}
    for _ in range(count):
        (n,) = r.unpack("<I")
        name = r.take(n).decode("utf-8")
        kind = r.take(1)
        if kind == b"J":
            (length,) = r.unpack("<Q")
            obj = json.loads(r.take(length).decode("utf-8"))
            if name == "meta":
                meta = obj
        elif kind == b"T":
            (n,) = r.unpack("<I")
            scope = r.take(n).decode("utf-8")
            (ndim,) = r.unpack("<I")
            shape = r.unpack(f"<{ndim}Q")
            size = int(np.prod(shape, dtype=np.int64))
            arr = np.frombuffer(r.take(8 * size), dtype="<f8").astype(np.float64).reshape(shape)
            tensors[name] = (scope, arr)
        else:
            raise ParseError(f"unknown record kind {kind!r}", path)
    if meta is None:
        raise ParseError("checkpoint has no meta record", path)
    if r.pos != len(data):
        raise ParseError("trailing bytes after last record", path)
    return meta, tensors


def _vocab(itos, reserved):
    v = Vocabulary(itos[2:] if reserved else itos, reserved=reserved)
    if v.itos != list(itos):
        raise ParseError("inconsistent vocabulary in checkpoint")
    v.frozen = True
    return v


def load_checkpoint(path):
    """Rebuild the JointModel and its TrainConfig from a checkpoint file."""
    with open(path, "rb") as fh:
        data = fh.read()
    meta, tensors = decode_checkpoint(data, path)
    config = TrainConfig(**meta["config"])
    specs = {}
    for task, tm in meta["tasks"].items():
        mapping = None
        if "mapping" in tm:
            mm = tm["mapping"]
            mapping = LabelMapping([tuple(p) for p in mm["pairs"]], mm["direction"],
                                   mm["line_count"])
        labels = tm["task_labels"]
        specs[task] = TaskSpec(tm["name"], list(labels), _vocab(tm["words"], True),
                               _vocab(tm["chars"], True), tm["metric"], tm["extra_dim"], mapping)
    model = build_joint_model(meta["arch"], specs.get("source"), specs["target"], config,
                              Rng(config.seed))
    if sorted(tensors) != list(model.registry):
        raise ParseError("checkpoint tensors do not match the architecture", path)
    for name, (scope, arr) in tensors.items():
        if model.registry.scope(name) != scope or model.registry[name].value.shape != arr.shape:
            raise ParseError(f"tensor {name!r} has unexpected scope or shape", path)
        model.registry[name].value[...] = arr
    return model, config, meta
