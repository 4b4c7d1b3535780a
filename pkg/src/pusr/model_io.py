"""PUSR checkpoint files.

A deterministic little-endian container for either model form.  The byte
layout (normative, see docs/checkpoint-format.md) is:

    magic            4 bytes, b"PUSR"
    format_version   u16
    form             u8   (0 = training, 1 = fused)
    config_len       u32, then config_len bytes of UTF-8 JSON (ModelConfig)
    tensor_count     u32
    per tensor:      name_len u16, name bytes,
                     dtype u8 (0 = f32, 1 = f64), rank u8,
                     dims u32 * rank, offset u64
    payload          raw little-endian scalars; every tensor offset is an
                     absolute file offset aligned to 64 bytes; gaps are zero

Tensors appear in canonical model order (head, blocks in index order with
rep1 / rep2 / lia fields, tail), offsets strictly increasing.  Identical
models therefore serialize to identical bytes, and save -> load -> save is a
byte-level fixed point.
"""

from __future__ import annotations

import json
import struct
from dataclasses import replace

import numpy as np

from .backbone import FUSED, TRAINING, HBlock, ModelConfig, SRModel
from .lia import LIAParams
from .reparam import RepMBConvParams
from .tensor import ConvParams

MAGIC = b"PUSR"
FORMAT_VERSION = 1
ALIGNMENT = 64

_DTYPE_CODES = {np.dtype(np.float32): 0, np.dtype(np.float64): 1}
_CODE_DTYPES = {0: np.dtype("<f4"), 1: np.dtype("<f8")}
_CODE_NAMES = {0: "f32", 1: "f64"}


class CheckpointError(Exception):
    """Base class for checkpoint read/write failures."""


class CheckpointFormatError(CheckpointError):
    """Bad magic, malformed header, or misaligned layout."""


class UnsupportedVersionError(CheckpointError):
    """The file declares a format version this reader does not know."""


class TruncatedFileError(CheckpointError):
    """The file ends before the data it declares."""


class TensorOverlapError(CheckpointError):
    """Tensor payloads overlap, go backwards, or fall outside the file."""


class TensorMismatchError(CheckpointError):
    """A tensor is missing, unexpected, or disagrees with the config."""


def _rep_tensors(prefix: str, rep) -> list[tuple[str, np.ndarray]]:
    if isinstance(rep, ConvParams):            # fused form
        return [(f"{prefix}.kernel", rep.kernel), (f"{prefix}.bias", rep.bias)]
    return [
        (f"{prefix}.k1.kernel", rep.k1.kernel), (f"{prefix}.k1.bias", rep.k1.bias),
        (f"{prefix}.k2.kernel", rep.k2.kernel), (f"{prefix}.k2.bias", rep.k2.bias),
        (f"{prefix}.k3.kernel", rep.k3.kernel), (f"{prefix}.k3.bias", rep.k3.bias),
        (f"{prefix}.s", rep.s), (f"{prefix}.v", rep.v),
        (f"{prefix}.se_w1", rep.se_w1), (f"{prefix}.se_w2", rep.se_w2),
    ]


def named_tensors(m: SRModel) -> list[tuple[str, np.ndarray]]:
    """Every parameter tensor of the model in canonical order."""
    out = [("head.kernel", m.head.kernel), ("head.bias", m.head.bias)]
    for i, b in enumerate(m.blocks):
        out += _rep_tensors(f"blocks.{i}.rep1", b.rep1)
        out += _rep_tensors(f"blocks.{i}.rep2", b.rep2)
        if b.lia is not None:
            out += [
                (f"blocks.{i}.lia.conv_a.kernel", b.lia.conv_a.kernel),
                (f"blocks.{i}.lia.conv_a.bias", b.lia.conv_a.bias),
                (f"blocks.{i}.lia.conv_b.kernel", b.lia.conv_b.kernel),
                (f"blocks.{i}.lia.conv_b.bias", b.lia.conv_b.bias),
            ]
    out += [("tail.kernel", m.tail.kernel), ("tail.bias", m.tail.bias)]
    return out


def parameter_count(m: SRModel) -> int:
    return sum(int(t.size) for _, t in named_tensors(m))


def expected_tensor_specs(cfg: ModelConfig, form: str) -> list[tuple[str, tuple[int, ...]]]:
    """Canonical (name, shape) list a checkpoint of this config/form must
    contain, in file order."""
    k = cfg.kernel
    specs: list[tuple[str, tuple[int, ...]]] = [
        ("head.kernel", (cfg.stage_channels[0], cfg.in_channels, k, k)),
        ("head.bias", (cfg.stage_channels[0],)),
    ]
    for i, width in enumerate(cfg.block_widths()):
        cm = cfg.expansion * width
        hidden = max(1, cm // cfg.se_reduction)
        for repname in ("rep1", "rep2"):
            p = f"blocks.{i}.{repname}"
            if form == FUSED:
                specs += [(f"{p}.kernel", (width, width, k, k)),
                          (f"{p}.bias", (width,))]
            else:
                specs += [
                    (f"{p}.k1.kernel", (cm, width, 1, 1)), (f"{p}.k1.bias", (cm,)),
                    (f"{p}.k2.kernel", (cm, cm, k, k)), (f"{p}.k2.bias", (cm,)),
                    (f"{p}.k3.kernel", (width, cm, 1, 1)), (f"{p}.k3.bias", (width,)),
                    (f"{p}.s", (cm,)), (f"{p}.v", (cm,)),
                    (f"{p}.se_w1", (hidden, cm)), (f"{p}.se_w2", (cm, hidden)),
                ]
        if cfg.use_attention:
            lk = cfg.lia.kernel
            squeezed = max(1, width // cfg.lia.squeeze)
            p = f"blocks.{i}.lia"
            specs += [
                (f"{p}.conv_a.kernel", (squeezed, width, lk, lk)),
                (f"{p}.conv_a.bias", (squeezed,)),
                (f"{p}.conv_b.kernel", (1, squeezed, lk, lk)),
                (f"{p}.conv_b.bias", (1,)),
            ]
    specs += [
        ("tail.kernel", (cfg.in_channels * cfg.scale ** 2, cfg.stage_channels[0], k, k)),
        ("tail.bias", (cfg.in_channels * cfg.scale ** 2,)),
    ]
    return specs


def _align(n: int) -> int:
    return (n + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


def save(m: SRModel, path) -> None:
    """Write the model to ``path``; identical models produce identical bytes."""
    tensors = named_tensors(m)
    config_json = json.dumps(m.config.to_dict(), sort_keys=True,
                             separators=(",", ":")).encode("utf-8")
    header = bytearray()
    header += MAGIC
    header += struct.pack("<H", FORMAT_VERSION)
    header += struct.pack("<B", 1 if m.form == FUSED else 0)
    header += struct.pack("<I", len(config_json))
    header += config_json
    header += struct.pack("<I", len(tensors))

    # Table size is needed before offsets can be assigned.
    table_size = 0
    for name, arr in tensors:
        table_size += 2 + len(name.encode("utf-8")) + 1 + 1 + 4 * arr.ndim + 8

    offset = _align(len(header) + table_size)
    entries = []
    for name, arr in tensors:
        entries.append((name, arr, offset))
        offset = _align(offset + arr.nbytes)

    for name, arr, off in entries:
        nb = name.encode("utf-8")
        header += struct.pack("<H", len(nb)) + nb
        header += struct.pack("<BB", _DTYPE_CODES[arr.dtype], arr.ndim)
        header += struct.pack(f"<{arr.ndim}I", *arr.shape)
        header += struct.pack("<Q", off)

    with open(path, "wb") as f:
        f.write(header)
        pos = len(header)
        for _, arr, off in entries:
            f.write(b"\x00" * (off - pos))
            data = np.ascontiguousarray(arr)
            if data.dtype.byteorder == ">":
                data = data.astype(data.dtype.newbyteorder("<"))
            f.write(data.tobytes())
            pos = off + arr.nbytes


class _Reader:
    def __init__(self, blob: bytes):
        self.blob = blob
        self.pos = 0

    def take(self, n: int, what: str) -> bytes:
        if self.pos + n > len(self.blob):
            raise TruncatedFileError(f"file ends inside {what}")
        out = self.blob[self.pos:self.pos + n]
        self.pos += n
        return out

    def unpack(self, fmt: str, what: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt), what))


def _rebuild_block(cfg: ModelConfig, form: str, got: dict[str, np.ndarray],
                   i: int, width: int) -> HBlock:
    k = cfg.kernel

    def rep(prefix: str):
        if form == FUSED:
            return ConvParams(got[f"{prefix}.kernel"], got[f"{prefix}.bias"],
                              stride=1, padding=k // 2)
        return RepMBConvParams(
            k1=ConvParams(got[f"{prefix}.k1.kernel"], got[f"{prefix}.k1.bias"], padding=0),
            k2=ConvParams(got[f"{prefix}.k2.kernel"], got[f"{prefix}.k2.bias"], padding=k // 2),
            k3=ConvParams(got[f"{prefix}.k3.kernel"], got[f"{prefix}.k3.bias"], padding=0),
            s=got[f"{prefix}.s"], v=got[f"{prefix}.v"],
            se_w1=got[f"{prefix}.se_w1"], se_w2=got[f"{prefix}.se_w2"],
            k2_identity_enabled=cfg.rep_identity,
        )

    lia = None
    if cfg.use_attention:
        p = f"blocks.{i}.lia"
        lia = LIAParams(
            conv_a=ConvParams(got[f"{p}.conv_a.kernel"], got[f"{p}.conv_a.bias"],
                              stride=2, padding=cfg.lia.kernel // 2),
            conv_b=ConvParams(got[f"{p}.conv_b.kernel"], got[f"{p}.conv_b.bias"],
                              stride=1, padding=cfg.lia.kernel // 2),
            pool_k=cfg.lia.pool_k, pool_stride=cfg.lia.pool_stride,
            importance_mode=cfg.lia.importance_mode,
        )
    return HBlock(rep(f"blocks.{i}.rep1"), rep(f"blocks.{i}.rep2"), lia)


def load(path) -> SRModel:
    """Read a checkpoint; raises a :class:`CheckpointError` subclass on any
    structural defect."""
    with open(path, "rb") as f:
        blob = f.read()
    r = _Reader(blob)
    if r.take(4, "magic") != MAGIC:
        raise CheckpointFormatError("not a PUSR checkpoint (bad magic)")
    (version,) = r.unpack("<H", "version")
    if version != FORMAT_VERSION:
        raise UnsupportedVersionError(f"unsupported format version {version}")
    (form_code,) = r.unpack("<B", "form")
    if form_code not in (0, 1):
        raise CheckpointFormatError(f"unknown form code {form_code}")
    form = FUSED if form_code == 1 else TRAINING
    (config_len,) = r.unpack("<I", "config length")
    try:
        cfg = ModelConfig.from_dict(json.loads(r.take(config_len, "config").decode("utf-8")))
    except TruncatedFileError:
        raise
    except Exception as e:
        raise CheckpointFormatError(f"bad embedded config: {e}") from e

    (count,) = r.unpack("<I", "tensor count")
    table = []
    for _ in range(count):
        (name_len,) = r.unpack("<H", "tensor name length")
        name = r.take(name_len, "tensor name").decode("utf-8")
        dtype_code, rank = r.unpack("<BB", "tensor dtype/rank")
        if dtype_code not in _CODE_DTYPES:
            raise CheckpointFormatError(f"unknown dtype code {dtype_code} for {name}")
        dims = r.unpack(f"<{rank}I", "tensor dims")
        (offset,) = r.unpack("<Q", "tensor offset")
        table.append((name, dtype_code, dims, offset))

    specs = expected_tensor_specs(cfg, form)
    if len(table) != len(specs):
        raise TensorMismatchError(
            f"checkpoint has {len(table)} tensors, config declares {len(specs)}")
    dtype_codes = {t[1] for t in table}
    if len(dtype_codes) > 1:
        raise TensorMismatchError("mixed tensor dtypes in one checkpoint")

    got: dict[str, np.ndarray] = {}
    prev_end = 0
    for (name, dtype_code, dims, offset), (want_name, want_shape) in zip(table, specs):
        if name != want_name:
            raise TensorMismatchError(
                f"tensor {name!r} out of place; expected {want_name!r}")
        if tuple(dims) != want_shape:
            raise TensorMismatchError(
                f"tensor {name!r} has shape {tuple(dims)}, config requires {want_shape}")
        if offset % ALIGNMENT != 0:
            raise CheckpointFormatError(f"tensor {name!r} offset not {ALIGNMENT}-byte aligned")
        if offset < prev_end or offset < r.pos:
            raise TensorOverlapError(f"tensor {name!r} overlaps earlier data")
        dt = _CODE_DTYPES[dtype_code]
        nbytes = int(np.prod(dims, dtype=np.int64)) * dt.itemsize
        if offset + nbytes > len(blob):
            raise TruncatedFileError(f"payload of tensor {name!r} is truncated")
        got[name] = np.frombuffer(blob, dtype=dt, count=int(np.prod(dims, dtype=np.int64)),
                                  offset=offset).reshape(want_shape).copy()
        prev_end = offset + nbytes

    dtype_name = _CODE_NAMES[table[0][1]] if table else "f32"
    k = cfg.kernel
    head = ConvParams(got["head.kernel"], got["head.bias"], padding=k // 2)
    blocks = tuple(
        _rebuild_block(cfg, form, got, i, width)
        for i, width in enumerate(cfg.block_widths()))
    tail = ConvParams(got["tail.kernel"], got["tail.bias"], padding=k // 2)
    return SRModel(cfg, head, blocks, tail, form, dtype_name)
