"""PUSR checkpoint writer.

Independent implementation of the byte format specified in the engine
repository's docs/checkpoint-format.md: magic, version, form flag, config
JSON, canonical tensor table, 64-byte-aligned little-endian payload.  Names
and shapes follow the canonical scheme exactly, so the engine loads exported
files with zero remapping.
"""

from __future__ import annotations

import json
import struct

import numpy as np

from .model import PlainSRNet

MAGIC = b"PUSR"
FORMAT_VERSION = 1
ALIGNMENT = 64
FORM_TRAINING = 0


def model_config_dict(net: PlainSRNet) -> dict:
    return {
        "stage_channels": list(net.stage_channels),
        "scale": net.scale,
        "kernel": net.kernel,
        "in_channels": net.in_channels,
        "expansion": 2,
        "se_reduction": 4,
        "lia": {"kernel": net.kernel, "pool_k": 2, "pool_stride": 2,
                "squeeze": 4, "importance_mode": "softpool"},
        "use_attention": net.use_attention,
        "rep_identity": True,
    }


def named_tensors(net: PlainSRNet) -> list[tuple[str, np.ndarray]]:
    """Canonical (name, float32 array) list in file order."""

    def conv(prefix, m):
        return [(f"{prefix}.kernel", m.weight), (f"{prefix}.bias", m.bias)]

    out = conv("head", net.head)
    for i, block in enumerate(net.blocks):
        for repname in ("rep1", "rep2"):
            rep = getattr(block, repname)
            p = f"blocks.{i}.{repname}"
            out += conv(f"{p}.k1", rep.k1)
            out += conv(f"{p}.k2", rep.k2)
            out += conv(f"{p}.k3", rep.k3)
            out += [(f"{p}.s", rep.s), (f"{p}.v", rep.v),
                    (f"{p}.se_w1", rep.se_w1), (f"{p}.se_w2", rep.se_w2)]
        if block.lia is not None:
            out += conv(f"blocks.{i}.lia.conv_a", block.lia.conv_a)
            out += conv(f"blocks.{i}.lia.conv_b", block.lia.conv_b)
    out += conv("tail", net.tail)
    return [(name, t.detach().cpu().numpy().astype("<f4")) for name, t in out]


def _align(n: int) -> int:
    return (n + ALIGNMENT - 1) // ALIGNMENT * ALIGNMENT


def export_checkpoint(net: PlainSRNet, path) -> None:
    tensors = named_tensors(net)
    config = json.dumps(model_config_dict(net), sort_keys=True,
                        separators=(",", ":")).encode("utf-8")
    header = bytearray()
    header += MAGIC
    header += struct.pack("<H", FORMAT_VERSION)
    header += struct.pack("<B", FORM_TRAINING)
    header += struct.pack("<I", len(config))
    header += config
    header += struct.pack("<I", len(tensors))

    table_size = sum(2 + len(n.encode()) + 1 + 1 + 4 * a.ndim + 8
                     for n, a in tensors)
    offset = _align(len(header) + table_size)
    entries = []
    for name, arr in tensors:
        entries.append((name, arr, offset))
        offset = _align(offset + arr.nbytes)

    for name, arr, off in entries:
        nb = name.encode("utf-8")
        header += struct.pack("<H", len(nb)) + nb
        header += struct.pack("<BB", 0, arr.ndim)       # dtype 0 = float32
        header += struct.pack(f"<{arr.ndim}I", *arr.shape)
        header += struct.pack("<Q", off)

    with open(path, "wb") as f:
        f.write(header)
        pos = len(header)
        for _, arr, off in entries:
            f.write(b"\x00" * (off - pos))
            f.write(np.ascontiguousarray(arr).tobytes())
            pos = off + arr.nbytes
