"""Dense float32 tensors, the seeded random source, and the PXT1 file format.

Tensors are plain ``numpy.ndarray`` objects (row-major, float32 by default).
Operators never mutate their inputs.

Random numbers come from numpy's PCG64 bit generator; normal deviates use
numpy's ziggurat transform (``Generator.standard_normal``). Independent
streams for parallel workers are derived with ``SeedSequence.spawn``.
"""
from __future__ import annotations

import struct
from typing import BinaryIO, Sequence

import numpy as np

from .errors import FormatError, InvalidShapeError, TruncatedFileError

DTYPE = np.float32
PXT_MAGIC = b"PXT1"

Tensor = np.ndarray


def _check_shape(shape) -> tuple[int, ...]:
    try:
        dims = tuple(int(d) for d in shape)
    except TypeError:
        dims = (int(shape),)
    if len(dims) == 0 or any(d < 1 for d in dims):
        raise InvalidShapeError(f"invalid shape {shape!r}: every dimension must be >= 1")
    return dims


def tensor_full(shape: Sequence[int], value: float, dtype=DTYPE) -> Tensor:
    return np.full(_check_shape(shape), value, dtype=dtype)


def as_tensor(x, dtype=DTYPE) -> Tensor:
    return np.ascontiguousarray(x, dtype=dtype)


def make_rng(seed: int) -> np.random.Generator:
    return np.random.Generator(np.random.PCG64(seed))


def split_rng(seed: int, count: int) -> list[np.random.Generator]:
    """``count`` statistically independent generators derived from one seed."""
    children = np.random.SeedSequence(seed).spawn(count)
    return [np.random.Generator(np.random.PCG64(s)) for s in children]


def randn(rng: np.random.Generator, shape: Sequence[int], dtype=DTYPE) -> Tensor:
    dims = _check_shape(shape)
    return rng.standard_normal(dims, dtype=np.float64).astype(dtype)


def reduce_mean(x: Tensor) -> float:
    x = np.asarray(x)
    if x.size == 0:
        raise InvalidShapeError("mean of an empty tensor")
    return float(np.mean(x, dtype=np.float64))


def ravel_index(index: Sequence[int], shape: Sequence[int]) -> int:
    return int(np.ravel_multi_index(tuple(index), tuple(shape)))


def unravel_index(offset: int, shape: Sequence[int]) -> tuple[int, ...]:
    return tuple(int(i) for i in np.unravel_index(offset, tuple(shape)))


# -- PXT1: b"PXT1", u32 rank, u32 dims[rank], little-endian f32 payload ------


def write_pxt_stream(f: BinaryIO, x: Tensor) -> None:
    x = np.asarray(x)
    if x.ndim == 0:
        x = x.reshape(1)
    f.write(PXT_MAGIC)
    f.write(struct.pack(f"<I{x.ndim}I", x.ndim, *x.shape))
    f.write(np.ascontiguousarray(x, dtype="<f4").tobytes())


def read_pxt_stream(f: BinaryIO) -> Tensor:
    start = f.tell() if f.seekable() else 0

    def take(n, what):
        buf = f.read(n)
        if len(buf) != n:
            raise TruncatedFileError(f"truncated PXT1 {what}", start)
        return buf

    magic = take(4, "magic")
    if magic != PXT_MAGIC:
        raise FormatError(f"bad PXT1 magic {magic!r}", start)
    (rank,) = struct.unpack("<I", take(4, "rank"))
    if rank == 0 or rank > 16:
        raise FormatError(f"unsupported PXT1 rank {rank}", start + 4)
    dims = struct.unpack(f"<{rank}I", take(4 * rank, "dims"))
    if any(d == 0 for d in dims):
        raise FormatError(f"zero dimension in PXT1 shape {dims}", start + 8)
    count = int(np.prod(dims))
    payload = take(4 * count, "payload")
    return np.frombuffer(payload, dtype="<f4").astype(DTYPE).reshape(dims)


def save_pxt(path, x: Tensor) -> None:
    with open(path, "wb") as f:
        write_pxt_stream(f, x)


def load_pxt(path) -> Tensor:
    with open(path, "rb") as f:
        x = read_pxt_stream(f)
        if f.read(1):
            raise FormatError(f"trailing bytes after PXT1 payload in {path}", f.tell() - 1)
    return x
