"""Binary checkpoint container for both model kinds.

Layout::

    bytes 0..5    magic "SYNPG1"
    bytes 6..9    little-endian uint32 header length H
    bytes 10..    UTF-8 JSON header (format version, kind, disentangled
                  flag, model config, vocab tables, tensor manifest)
    ...           tensor payload: little-endian float32, row-major, in
                  manifest order
    last 32       SHA-256 over everything before it

Training runs in float64; checkpoints round to float32, so a save/load
round trip reproduces parameters to 32-bit precision and all metadata
exactly.
"""

from __future__ import annotations

import hashlib
import json
import struct

import numpy as np

from .fileio import atomic_write_bytes
from .numerics import Tensor
from .tokenizer import CLASSES, Vocab
from .transformer import ModelConfig, param_count

__all__ = ["CheckpointError", "save_checkpoint", "load_checkpoint", "MAGIC", "FORMAT_VERSION"]

MAGIC = b"SYNPG1"
FORMAT_VERSION = 1


class CheckpointError(ValueError):
    """Invalid checkpoint; `field` names what failed (magic, checksum, ...)."""

    def __init__(self, field: str, message: str):
        super().__init__(f"checkpoint {field}: {message}")
        self.field = field


def save_checkpoint(model, path) -> None:
    """Serialize a model atomically (write-then-rename)."""
    names = model.parameter_names()
    header = {
        "format_version": FORMAT_VERSION,
        "kind": model.kind,
        "disentangled": model.disentangled,
        "config": model.config.to_dict(),
        "vocab": {cls: list(model.vocab.tokens(cls)) for cls in CLASSES},
        "tensors": [[n, list(model.params[n].data.shape)] for n in names],
    }
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(model.params[n].data, dtype="<f4").tobytes() for n in names
    )
    body = MAGIC + struct.pack("<I", len(header_bytes)) + header_bytes + payload
    atomic_write_bytes(path, body + hashlib.sha256(body).digest())


def load_checkpoint(path):
    """Read a checkpoint back into a SynPGModel or ParseGeneratorModel.

    Validates magic, format version, and checksum, naming the failing field.
    """
    from .model import ParseGeneratorModel, SynPGModel

    with open(path, "rb") as fh:
        blob = fh.read()
    if len(blob) < len(MAGIC) + 4 + 32:
        raise CheckpointError("checksum", "file too short to contain a checkpoint")
    if blob[: len(MAGIC)] != MAGIC:
        raise CheckpointError("magic", f"expected {MAGIC!r}")
    body, digest = blob[:-32], blob[-32:]
    if hashlib.sha256(body).digest() != digest:
        raise CheckpointError("checksum", "content does not match its digest")
    (header_len,) = struct.unpack_from("<I", body, len(MAGIC))
    header_start = len(MAGIC) + 4
    if header_start + header_len > len(body):
        raise CheckpointError("header", "declared header overruns the file")
    try:
        header = json.loads(body[header_start:header_start + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise CheckpointError("header", str(exc)) from None
    if header.get("format_version") != FORMAT_VERSION:
        raise CheckpointError("format_version",
                              f"got {header.get('format_version')!r}, support {FORMAT_VERSION}")
    kinds = {"SYNPG": SynPGModel, "PARSEGEN": ParseGeneratorModel}
    if header.get("kind") not in kinds:
        raise CheckpointError("kind", f"unknown model kind {header.get('kind')!r}")

    config = ModelConfig.from_dict(header["config"])
    vocab = Vocab(header["vocab"])
    for cls in CLASSES:
        if vocab.size(cls) != config.vocab_size(cls):
            raise CheckpointError("vocab", f"{cls} table size disagrees with the config")

    params = {}
    offset = header_start + header_len
    for name, shape in header["tensors"]:
        count = int(np.prod(shape)) if shape else 1
        end = offset + 4 * count
        if end > len(body):
            raise CheckpointError("tensors", f"payload ends inside {name}")
        arr = np.frombuffer(body[offset:end], dtype="<f4").astype(np.float64).reshape(shape)
        params[name] = Tensor(arr, requires_grad=True)
        offset = end
    if offset != len(body):
        raise CheckpointError("tensors", "trailing bytes after the last tensor")
    total = sum(p.data.size for p in params.values())
    if total != param_count(config):
        raise CheckpointError("tensors", f"{total} scalars, config implies {param_count(config)}")
    return kinds[header["kind"]](config, params, vocab, header["disentangled"])
