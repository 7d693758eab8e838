"""
Binary checkpoint codec.

Layout (little-endian):
    magic      8 bytes  b"DAPCKPT1"
    count      u32      number of tensors
    per tensor u16 name length, UTF-8 name, u8 rank, rank x u32 dims,
               product(dims) x f64 payload (row-major)
    meta count u32
    per entry  u32 key length, UTF-8 key, u32 value length, UTF-8 value
"""
import io
import logging
import struct
from pathlib import Path
from typing import Dict, Tuple

import numpy as np
import torch

from dapstore.exceptions import FormatError
from .optim import ParamStore

logger = logging.getLogger(__name__)

MAGIC = b"DAPCKPT1"


def _pack_text(text: str, width: str) -> bytes:
    data = text.encode("utf-8")
    return struct.pack(f"<{width}", len(data)) + data


def save_checkpoint(params: ParamStore, meta: Dict[str, str], path) -> Path:
    """
    Write params and string metadata to path (parents created).

    Returns:
        Path: the written file
    """
    path = Path(path)
    buffer = io.BytesIO()
    buffer.write(MAGIC)
    buffer.write(struct.pack("<I", len(params)))
    for name, param in params.items():
        array = param.detach().cpu().numpy().astype("<f8", copy=False)
        buffer.write(_pack_text(name, "H"))
        buffer.write(struct.pack("<B", array.ndim))
        buffer.write(struct.pack(f"<{array.ndim}I", *array.shape))
        buffer.write(np.ascontiguousarray(array).tobytes())

    meta = meta or {}
    buffer.write(struct.pack("<I", len(meta)))
    for key in sorted(meta):
        buffer.write(_pack_text(str(key), "I"))
        buffer.write(_pack_text(str(meta[key]), "I"))

    path.parent.mkdir(parents=True, exist_ok=True)
    path.write_bytes(buffer.getvalue())
    logger.info(f"Saved checkpoint with {len(params)} tensors to {path}")
    return path


class _Reader:
    def __init__(self, data: bytes, path: Path):
        self.data = data
        self.offset = 0
        self.path = path

    def take(self, size: int) -> bytes:
        if self.offset + size > len(self.data):
            raise FormatError(f"{self.path}: truncated checkpoint")
        chunk = self.data[self.offset:self.offset + size]
        self.offset += size
        return chunk

    def unpack(self, fmt: str):
        return struct.unpack(fmt, self.take(struct.calcsize(fmt)))

    def text(self, width: str) -> str:
        (length,) = self.unpack(f"<{width}")
        try:
            return self.take(length).decode("utf-8")
        except UnicodeDecodeError as e:
            raise FormatError(f"{self.path}: invalid UTF-8 string") from e


def load_checkpoint(path, into=None) -> Tuple[ParamStore, Dict[str, str]]:
    """
    Read a checkpoint written by save_checkpoint.

    Args:
        path: checkpoint file
        into: optional nn.Module whose parameters receive the loaded values

    Returns:
        tuple: (ParamStore, meta dict)

    Raises:
        FormatError: bad magic, truncated data, trailing bytes or a shape mismatch with ``into``
    """
    path = Path(path)
    reader = _Reader(path.read_bytes(), path)
    if reader.take(len(MAGIC)) != MAGIC:
        raise FormatError(f"{path}: not a checkpoint (bad magic)")

    (count,) = reader.unpack("<I")
    params = ParamStore()
    for _ in range(count):
        name = reader.text("H")
        (rank,) = reader.unpack("<B")
        shape = reader.unpack(f"<{rank}I") if rank else ()
        size = int(np.prod(shape)) if rank else 1
        payload = np.frombuffer(reader.take(8 * size), dtype="<f8").reshape(shape)
        params.add(name, torch.nn.Parameter(torch.from_numpy(payload.astype(np.float64))))

    (meta_count,) = reader.unpack("<I")
    meta = {}
    for _ in range(meta_count):
        key = reader.text("I")
        meta[key] = reader.text("I")
    if reader.offset != len(reader.data):
        raise FormatError(f"{path}: unexpected trailing bytes")

    if into is not None:
        params.load_into(into)
    logger.info(f"Loaded checkpoint with {len(params)} tensors from {path}")
    return params, meta
