"""Versioned binary checkpoints.

Layout (all integers little-endian):

    magic        8 bytes  b"SVITCKPT"
    version      u32
    header_len   u32, followed by a UTF-8 JSON header
    entry_count  u32
    entries      entry_count times:
                   name_len u16, name (UTF-8), ndim u8, dims u32 * ndim,
                   data as little-endian float32 in C order

The JSON header holds the config and architecture hashes, the epoch, the
schedule and the AdamW scalars. AdamW moments are stored as ordinary entries
named `adamw.m.<param>` and `adamw.v.<param>`.
"""

import json
import logging
import os
import struct
from dataclasses import dataclass, field
from typing import BinaryIO

import numpy as np

from ..exceptions import CheckpointFormatError, CheckpointMismatchError
from .optim import AdamWState

logger = logging.getLogger(__name__)

MAGIC = b"SVITCKPT"
VERSION = 1
_FIRST_MOMENT = "adamw.m."
_SECOND_MOMENT = "adamw.v."


@dataclass
class Checkpoint:
    parameters: dict[str, np.ndarray]
    header: dict = field(default_factory=dict)
    optimizer: AdamWState | None = None

    @property
    def architecture_hash(self) -> str | None:
        return self.header.get("architecture_hash")

    def require_architecture(self, expected: str) -> None:
        """Raises CheckpointMismatchError unless the stored hash equals `expected`."""
        if self.architecture_hash != expected:
            raise CheckpointMismatchError(
                f"Checkpoint architecture hash {self.architecture_hash} does not match {expected}."
            )


def _write_entry(handle: BinaryIO, name: str, values: np.ndarray) -> None:
    encoded = name.encode("utf-8")
    arr = np.ascontiguousarray(values, dtype="<f4")
    handle.write(struct.pack("<H", len(encoded)))
    handle.write(encoded)
    handle.write(struct.pack("<B", arr.ndim))
    handle.write(struct.pack(f"<{arr.ndim}I", *arr.shape))
    handle.write(arr.tobytes())


def save_checkpoint(
    path: str | os.PathLike,
    parameters: dict[str, np.ndarray],
    header: dict | None = None,
    optimizer: AdamWState | None = None,
) -> None:
    """Writes parameters (and optionally optimizer state) to `path`."""
    entries = dict(parameters)
    header = dict(header or {})
    if optimizer is not None:
        header["adamw"] = optimizer.scalars()
        entries.update({_FIRST_MOMENT + k: v for k, v in optimizer.first_moment.items()})
        entries.update({_SECOND_MOMENT + k: v for k, v in optimizer.second_moment.items()})
    header_bytes = json.dumps(header, sort_keys=True).encode("utf-8")

    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    with open(path, "wb") as handle:
        handle.write(MAGIC)
        handle.write(struct.pack("<II", VERSION, len(header_bytes)))
        handle.write(header_bytes)
        handle.write(struct.pack("<I", len(entries)))
        for name, values in entries.items():
            _write_entry(handle, name, values)
    logger.info("Saved checkpoint with %d entries to %s", len(entries), path)


def _read_exact(handle: BinaryIO, size: int) -> bytes:
    chunk = handle.read(size)
    if len(chunk) != size:
        raise CheckpointFormatError(f"Truncated checkpoint: wanted {size} bytes, got {len(chunk)}.")
    return chunk


def load_checkpoint(path: str | os.PathLike) -> Checkpoint:
    """Reads a checkpoint written by `save_checkpoint`.

    Raises:
        CheckpointFormatError: On a bad magic, unknown version or truncated file.
    """
    try:
        with open(path, "rb") as handle:
            if _read_exact(handle, len(MAGIC)) != MAGIC:
                raise CheckpointFormatError(f"{path} is not a checkpoint (bad magic).")
            version, header_len = struct.unpack("<II", _read_exact(handle, 8))
            if version != VERSION:
                raise CheckpointFormatError(f"Unsupported checkpoint version {version}.")
            header = json.loads(_read_exact(handle, header_len).decode("utf-8"))
            (count,) = struct.unpack("<I", _read_exact(handle, 4))
            entries = {}
            for _ in range(count):
                (name_len,) = struct.unpack("<H", _read_exact(handle, 2))
                name = _read_exact(handle, name_len).decode("utf-8")
                (ndim,) = struct.unpack("<B", _read_exact(handle, 1))
                shape = struct.unpack(f"<{ndim}I", _read_exact(handle, 4 * ndim))
                size = int(np.prod(shape, dtype=np.int64))
                data = np.frombuffer(_read_exact(handle, 4 * size), dtype="<f4")
                entries[name] = data.reshape(shape).astype(np.float32)
    except (OSError, UnicodeDecodeError, json.JSONDecodeError) as e:
        raise CheckpointFormatError(f"Could not read checkpoint {path}: {e}", e)

    parameters = {k: v for k, v in entries.items() if not k.startswith((_FIRST_MOMENT, _SECOND_MOMENT))}
    optimizer = None
    if "adamw" in header:
        optimizer = AdamWState(
            **header["adamw"],
            first_moment={k[len(_FIRST_MOMENT):]: v for k, v in entries.items() if k.startswith(_FIRST_MOMENT)},
            second_moment={k[len(_SECOND_MOMENT):]: v for k, v in entries.items() if k.startswith(_SECOND_MOMENT)},
        )
    logger.debug("Loaded checkpoint %s (epoch %s)", path, header.get("epoch"))
    return Checkpoint(parameters, header, optimizer)
