"""``VSRC`` network checkpoints.

Layout, little-endian throughout::

    b"VSRC" | u32 version
    u32 len | kind (utf-8: generator / discriminator / featurenet)
    u32 len | JSON block {"config": ..., "meta": ...}
    u32 n   | n x tensor
    u8 has_optimizer [ u32 n | n x tensor ]
    u32 CRC-32 of every preceding byte

    tensor = u32 len | name | u8 dtype (0 f64, 1 f32) | u32 rank | rank x u32 | raw
"""

from __future__ import annotations

import json
import struct
import zlib
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .errors import CheckpointError
from .models import CONFIG_TYPES, FeatureNet, FeatureNetSpec, build_network

MAGIC = b"VSRC"
VERSION = 1
_DTYPES = {0: np.dtype("<f8"), 1: np.dtype("<f4")}
_CODES = {np.dtype("float64"): 0, np.dtype("float32"): 1}


@dataclass
class Checkpoint:
    kind: str
    config: dict
    tensors: dict
    optimizer: dict | None = None
    meta: dict = field(default_factory=dict)


def _json_block(config, meta):
    return json.dumps({"config": config, "meta": meta}, sort_keys=True,
                      separators=(",", ":")).encode("utf-8")


def _pack_str(raw):
    return struct.pack("<I", len(raw)) + raw


def _pack_tensors(tensors):
    out = [struct.pack("<I", len(tensors))]
    for name, arr in tensors.items():
        arr = np.asarray(arr)
        code = _CODES.get(arr.dtype)
        if code is None:
            raise CheckpointError(f"tensor {name!r}: unsupported dtype {arr.dtype}")
        out.append(_pack_str(name.encode("utf-8")))
        out.append(struct.pack("<BI", code, arr.ndim))
        out.append(struct.pack(f"<{arr.ndim}I", *arr.shape))
        out.append(np.ascontiguousarray(arr, dtype=_DTYPES[code]).tobytes())
    return b"".join(out)


def encode(ckpt):
    parts = [
        MAGIC,
        struct.pack("<I", VERSION),
        _pack_str(ckpt.kind.encode("utf-8")),
        _pack_str(_json_block(ckpt.config, ckpt.meta)),
        _pack_tensors(ckpt.tensors),
    ]
    if ckpt.optimizer is None:
        parts.append(b"\x00")
    else:
        parts += [b"\x01", _pack_tensors(ckpt.optimizer)]
    body = b"".join(parts)
    return body + struct.pack("<I", zlib.crc32(body))


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n):
        if self.pos + n > len(self.data):
            raise CheckpointError("checkpoint truncated")
        chunk = self.data[self.pos : self.pos + n]
        self.pos += n
        return chunk

    def u8(self):
        return self.take(1)[0]

    def u32(self):
        return struct.unpack("<I", self.take(4))[0]

    def string(self):
        return self.take(self.u32()).decode("utf-8")

    def tensors(self):
        out = {}
        for _ in range(self.u32()):
            name = self.string()
            code, rank = self.u8(), self.u32()
            if code not in _DTYPES:
                raise CheckpointError(f"tensor {name!r}: unknown dtype code {code}")
            shape = struct.unpack(f"<{rank}I", self.take(4 * rank))
            dtype = _DTYPES[code]
            count = int(np.prod(shape, dtype=np.int64))
            raw = self.take(count * dtype.itemsize)
            if name in out:
                raise CheckpointError(f"duplicate tensor name {name!r}")
            out[name] = np.frombuffer(raw, dtype=dtype).reshape(shape).astype(dtype.newbyteorder("="))
        return out


def decode(data):
    if len(data) < 12 or data[:4] != MAGIC:
        raise CheckpointError("not a VSRC checkpoint (bad magic)")
    body, crc = data[:-4], struct.unpack("<I", data[-4:])[0]
    if zlib.crc32(body) != crc:
        raise CheckpointError("checkpoint CRC mismatch (file corrupt)")
    r = _Reader(body)
    r.take(4)
    version = r.u32()
    if version != VERSION:
        raise CheckpointError(f"unsupported checkpoint version {version}")
    kind = r.string()
    block = json.loads(r.string())
    tensors = r.tensors()
    optimizer = r.tensors() if r.u8() else None
    if r.pos != len(body):
        raise CheckpointError("trailing bytes after checkpoint payload")
    return Checkpoint(kind, block["config"], tensors, optimizer, block.get("meta", {}))


def save(path, ckpt):
    data = encode(ckpt)
    Path(path).write_bytes(data)
    return data


def load(path):
    return decode(Path(path).read_bytes())


def network_config_dict(network):
    cfg = network.config.to_dict()
    if isinstance(network, FeatureNet):
        cfg["weight_file"] = None
    return cfg


def from_network(network, with_optimizer=False, meta=None):
    optimizer = None
    if with_optimizer:
        optimizer = {}
        for name, p in network.named_parameters().items():
            optimizer[f"{name}/adam_m"] = p.adam_m.copy()
            optimizer[f"{name}/adam_v"] = p.adam_v.copy()
    tensors = {k: np.array(v) for k, v in network.state_tensors().items()}
    return Checkpoint(network.kind, network_config_dict(network), tensors, optimizer,
                      dict(meta or {}))


def save_network(path, network, with_optimizer=False, meta=None):
    return save(path, from_network(network, with_optimizer, meta))


def check_tensor_names(network, tensors, source="checkpoint"):
    expected = set(network.state_tensors())
    missing = sorted(expected - set(tensors))
    unexpected = sorted(set(tensors) - expected)
    if missing or unexpected:
        msg = [f"{source} does not match the {network.kind} architecture"]
        if missing:
            msg.append("missing tensors: " + ", ".join(missing))
        if unexpected:
            msg.append("unexpected tensors: " + ", ".join(unexpected))
        raise CheckpointError("; ".join(msg))
    for name, arr in network.state_tensors().items():
        if tensors[name].shape != arr.shape:
            raise CheckpointError(
                f"{source}: tensor {name!r} has shape {tensors[name].shape}, expected {arr.shape}"
            )


def restore(network, ckpt, with_optimizer=True):
    """Copy tensors (and ADAM moments if present) from ``ckpt`` into ``network``."""
    check_tensor_names(network, ckpt.tensors)
    network.load_state_tensors(ckpt.tensors)
    if with_optimizer and ckpt.optimizer is not None:
        for name, p in network.named_parameters().items():
            try:
                p.adam_m[...] = ckpt.optimizer[f"{name}/adam_m"]
                p.adam_v[...] = ckpt.optimizer[f"{name}/adam_v"]
            except KeyError as exc:
                raise CheckpointError(f"optimizer state missing {exc.args[0]!r}") from None
    return network


def network_from_checkpoint(ckpt):
    if ckpt.kind not in CONFIG_TYPES:
        raise CheckpointError(f"unknown network kind {ckpt.kind!r}")
    config = CONFIG_TYPES[ckpt.kind].from_dict(ckpt.config)
    return restore(build_network(ckpt.kind, config), ckpt)


def load_network(path):
    ckpt = load(path)
    return network_from_checkpoint(ckpt), ckpt


def make_feature_net(spec=None):
    """Feature network from its spec, loading weights when a file is named."""
    spec = spec or FeatureNetSpec()
    net = FeatureNet(spec)
    if spec.weight_file:
        ckpt = load(spec.weight_file)
        if ckpt.kind != "featurenet":
            raise CheckpointError(f"{spec.weight_file}: expected featurenet, got {ckpt.kind}")
        stored = FeatureNetSpec.from_dict(ckpt.config).architecture()
        if stored != spec.architecture():
            raise CheckpointError(
                f"{spec.weight_file}: weight file architecture {stored} != spec {spec.architecture()}"
            )
        restore(net, ckpt, with_optimizer=False)
    return net
