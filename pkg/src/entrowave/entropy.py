"""Chunked Shannon entropy of raw bytes."""
from __future__ import annotations

import struct
from dataclasses import dataclass

import numpy as np

DEFAULT_CHUNK_SIZE = 256
MAX_ENTROPY = 8.0


@dataclass(frozen=True, eq=False)
class EntropyStream:
    """Per-chunk entropies (bits) of one byte region.

    Only full chunks are represented; a trailing partial chunk is dropped,
    so ``len(values) == source_byte_len // chunk_size``.
    """

    values: np.ndarray
    chunk_size: int = DEFAULT_CHUNK_SIZE
    source_label: str = ""
    source_byte_len: int = 0

    def __post_init__(self):
        values = np.array(self.values, dtype=float)
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        if self.chunk_size < 1:
            raise ValueError("chunk_size must be positive")
        if values.ndim != 1:
            raise ValueError("values must be one-dimensional")
        if not np.all((values >= 0.0) & (values <= MAX_ENTROPY)):
            raise ValueError("entropy values must lie in [0, 8]")
        if values.size != self.source_byte_len // self.chunk_size:
            raise ValueError("values do not match source_byte_len // chunk_size")

    def __len__(self):
        return len(self.values)

    def __eq__(self, other):
        if not isinstance(other, EntropyStream):
            return NotImplemented
        return (
            self.chunk_size == other.chunk_size
            and self.source_label == other.source_label
            and self.source_byte_len == other.source_byte_len
            and np.array_equal(self.values, other.values)
        )

    __hash__ = None


def _as_uint8(data) -> np.ndarray:
    if isinstance(data, np.ndarray):
        return data.astype(np.uint8, copy=False).ravel()
    return np.frombuffer(bytes(data), dtype=np.uint8)


def _entropy_from_counts(counts: np.ndarray, n: int) -> np.ndarray:
    # counts: (..., 256) histograms of n symbols each
    p = counts / float(n)
    with np.errstate(divide="ignore", invalid="ignore"):
        terms = np.where(p > 0, p * np.log2(p), 0.0)
    h = -terms.sum(axis=-1)
    # clean up -0.0 and tiny negative rounding
    return np.clip(h + 0.0, 0.0, MAX_ENTROPY)


def chunk_entropy(chunk) -> float:
    """Shannon entropy in bits of the byte-value distribution of ``chunk``."""
    arr = _as_uint8(chunk)
    if arr.size == 0:
        raise ValueError("empty chunk")
    counts = np.bincount(arr, minlength=256)
    return float(_entropy_from_counts(counts, arr.size))


def chunk_entropies(data, chunk_size: int = DEFAULT_CHUNK_SIZE) -> np.ndarray:
    """Vectorised entropies of every full chunk in ``data`` (may be empty)."""
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    arr = _as_uint8(data)
    n_chunks = arr.size // chunk_size
    if n_chunks == 0:
        return np.zeros(0)
    blocks = arr[: n_chunks * chunk_size].reshape(n_chunks, chunk_size)
    keys = blocks.astype(np.int64) + 256 * np.arange(n_chunks, dtype=np.int64)[:, None]
    counts = np.bincount(keys.ravel(), minlength=256 * n_chunks).reshape(n_chunks, 256)
    return _entropy_from_counts(counts, chunk_size)


def entropy_stream(data, chunk_size: int = DEFAULT_CHUNK_SIZE, source_label: str = "") -> EntropyStream:
    """Split ``data`` into non-overlapping chunks and measure each one.

    Raises
    ------
    ValueError
        If ``data`` holds fewer than ``chunk_size`` bytes ("stream too short").
    """
    if chunk_size < 1:
        raise ValueError("chunk_size must be positive")
    arr = _as_uint8(data)
    if arr.size < chunk_size:
        raise ValueError("stream too short")
    return EntropyStream(
        values=chunk_entropies(arr, chunk_size),
        chunk_size=chunk_size,
        source_label=source_label,
        source_byte_len=int(arr.size),
    )


# Binary sidecar: 16-byte little-endian header then float64 values.
#   magic b"EWES", u16 version, u16 reserved, u32 chunk_size, u32 count
_SIDECAR_MAGIC = b"EWES"
_SIDECAR_VERSION = 1


def write_stream_binary(stream: EntropyStream, fh) -> None:
    fh.write(struct.pack("<4sHHII", _SIDECAR_MAGIC, _SIDECAR_VERSION, 0,
                         stream.chunk_size, len(stream)))
    fh.write(np.asarray(stream.values, dtype="<f8").tobytes())


def read_stream_binary(fh, source_label: str = "") -> EntropyStream:
    header = fh.read(16)
    if len(header) != 16:
        raise ValueError("truncated entropy sidecar")
    magic, version, _, chunk_size, count = struct.unpack("<4sHHII", header)
    if magic != _SIDECAR_MAGIC or version != _SIDECAR_VERSION:
        raise ValueError("not an entropy sidecar (v1)")
    body = fh.read(8 * count)
    if len(body) != 8 * count:
        raise ValueError("truncated entropy sidecar")
    values = np.frombuffer(body, dtype="<f8").astype(float)
    return EntropyStream(values, chunk_size, source_label, chunk_size * count)
