"""EFDW binary weights container.

Layout, all integers unsigned 32-bit little-endian:

    magic   4 bytes  "EFDW"
    version u32      (currently 1)
    mode    u32      0 = train (branched), 1 = deploy (merged)
    spec    u32 length + that many bytes of canonical JSON (sorted keys,
            no spaces): arch, scale, width, blocks, distill, colors, block,
            branches, filters (branch-kind -> fixed-filter identifier)
    count   u32      number of tensors, then per tensor:
        name  u32 length + UTF-8 bytes
        rank  u32, dims u32 each
        data  f32 little-endian, row-major

Loading then saving reproduces the file byte for byte.
"""

import io
import json
import struct

import numpy as np

from .errors import WeightsFormatError
from .filters import FILTER_IDS
from .network import NetworkParams, NetworkSpec, network_from_tensors, network_tensor_items

MAGIC = b"EFDW"
VERSION = 1
_MODE_TAGS = {"train": 0, "deploy": 1}
_TAG_MODES = {v: k for k, v in _MODE_TAGS.items()}


def _spec_json(spec: NetworkSpec) -> bytes:
    filters = {kind: FILTER_IDS[kind[len("scaled_"):]]
               for kind in spec.branches if kind.startswith("scaled_")}
    doc = {
        "arch": spec.arch,
        "scale": spec.scale,
        "width": spec.width,
        "blocks": spec.blocks,
        "distill": spec.distill,
        "colors": spec.colors,
        "block": spec.block,
        "branches": list(spec.branches),
        "filters": filters,
    }
    return json.dumps(doc, sort_keys=True, separators=(",", ":")).encode("utf-8")


def _spec_from_json(blob: bytes) -> NetworkSpec:
    try:
        doc = json.loads(blob.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise WeightsFormatError(f"bad spec block: {exc}") from exc
    try:
        return NetworkSpec(
            arch=doc["arch"], scale=doc["scale"], width=doc["width"],
            blocks=doc["blocks"], distill=doc["distill"], colors=doc["colors"],
            block=doc["block"], branches=tuple(doc["branches"]),
        )
    except KeyError as exc:
        raise WeightsFormatError(f"spec block missing field {exc}") from exc


def _pack_u32(value: int) -> bytes:
    return struct.pack("<I", value)


def _pack_str(s: str) -> bytes:
    raw = s.encode("utf-8")
    return _pack_u32(len(raw)) + raw


def save_weights(path, params: NetworkParams):
    with open(str(path), "wb") as fh:
        fh.write(weights_bytes(params))


def weights_bytes(params: NetworkParams) -> bytes:
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(_pack_u32(VERSION))
    out.write(_pack_u32(_MODE_TAGS[params.mode]))
    spec_blob = _spec_json(params.spec)
    out.write(_pack_u32(len(spec_blob)))
    out.write(spec_blob)
    tensors = list(network_tensor_items(params))
    out.write(_pack_u32(len(tensors)))
    for name, arr in tensors:
        arr = np.asarray(arr, dtype="<f4")
        out.write(_pack_str(name))
        out.write(_pack_u32(arr.ndim))
        for d in arr.shape:
            out.write(_pack_u32(d))
        out.write(arr.tobytes(order="C"))
    return out.getvalue()


class _Reader:
    def __init__(self, blob: bytes, path: str):
        self.blob = blob
        self.pos = 0
        self.path = path

    def take(self, n: int) -> bytes:
        if self.pos + n > len(self.blob):
            raise WeightsFormatError(f"{self.path}: truncated file")
        chunk = self.blob[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self) -> int:
        return struct.unpack("<I", self.take(4))[0]

    def string(self) -> str:
        raw = self.take(self.u32())
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise WeightsFormatError(f"{self.path}: bad tensor name") from exc


def load_weights(path) -> NetworkParams:
    path = str(path)
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise WeightsFormatError(f"cannot read weights {path}: {exc}") from exc
    r = _Reader(blob, path)
    if r.take(4) != MAGIC:
        raise WeightsFormatError(f"{path}: not a weights file (bad magic)")
    version = r.u32()
    if version != VERSION:
        raise WeightsFormatError(f"{path}: unsupported format version {version}")
    tag = r.u32()
    mode = _TAG_MODES.get(tag)
    if mode is None:
        raise WeightsFormatError(f"{path}: unknown mode tag {tag}")
    spec = _spec_from_json(r.take(r.u32()))
    count = r.u32()
    table = {}
    for _ in range(count):
        name = r.string()
        if name in table:
            raise WeightsFormatError(f"{path}: duplicate tensor name {name!r}")
        rank = r.u32()
        if rank > 8:
            raise WeightsFormatError(f"{path}: implausible tensor rank {rank}")
        dims = tuple(r.u32() for _ in range(rank))
        n = int(np.prod(dims, dtype=np.int64)) if dims else 1
        data = np.frombuffer(r.take(4 * n), dtype="<f4").reshape(dims)
        table[name] = np.ascontiguousarray(data, dtype=np.float32)
    if r.pos != len(blob):
        raise WeightsFormatError(f"{path}: {len(blob) - r.pos} trailing bytes")

    def get(name):
        if name not in table:
            raise WeightsFormatError(f"{path}: missing tensor {name!r}")
        return table[name]

    params = network_from_tensors(spec, mode, get)
    used = set(name for name, _ in network_tensor_items(params))
    extra = set(table) - used
    if extra:
        raise WeightsFormatError(f"{path}: unexpected tensors {sorted(extra)[:3]}")
    return params
