"""Little-endian binary containers for features, segmentation, embeddings and centroids.

Layouts::

    SDFE / SDSG   "SDFE"|"SDSG"  u32 version=1  u32 dim  f64 frame_step  f32 rows...
    SDEM          "SDEM"  u32 dim  then per window: u32 k, k x u32 channel, k x dim f32
    SDCK          "SDCK"  u32 K  u32 D  K x D f64 sums  K x u32 counts
                  then per label: u32 byte length, utf-8 bytes
"""

from __future__ import annotations

import struct
from pathlib import Path
from typing import BinaryIO, Iterator, Sequence

import numpy as np

from .errors import ParseError

FEATURES_MAGIC = b"SDFE"
SEGMENTATION_MAGIC = b"SDSG"
EMBEDDINGS_MAGIC = b"SDEM"
CENTROIDS_MAGIC = b"SDCK"
VERSION = 1

_MATRIX_HEADER = struct.Struct("<4sIId")


def write_matrix(path: str | Path, magic: bytes, rows: np.ndarray, frame_step: float) -> None:
    rows = np.asarray(rows, dtype="<f4")
    if rows.ndim != 2:
        raise ValueError("rows must be a 2-D array")
    with open(path, "wb") as fh:
        fh.write(_MATRIX_HEADER.pack(magic, VERSION, rows.shape[1], float(frame_step)))
        fh.write(np.ascontiguousarray(rows).tobytes())


def read_matrix_header(path: str | Path, magic: bytes) -> tuple[int, float, int]:
    """Return ``(dim, frame_step, n_rows)``."""
    path = Path(path)
    with open(path, "rb") as fh:
        raw = fh.read(_MATRIX_HEADER.size)
    if len(raw) < _MATRIX_HEADER.size:
        raise ParseError(f"{path}: truncated header")
    got, version, dim, step = _MATRIX_HEADER.unpack(raw)
    if got != magic:
        raise ParseError(f"{path}: bad magic {got!r}, expected {magic!r}")
    if version != VERSION:
        raise ParseError(f"{path}: unsupported version {version}")
    if dim == 0:
        raise ParseError(f"{path}: zero dimension")
    payload = path.stat().st_size - _MATRIX_HEADER.size
    if payload % (4 * dim):
        raise ParseError(f"{path}: payload is not a whole number of rows")
    return dim, step, payload // (4 * dim)


def open_matrix(path: str | Path, magic: bytes) -> tuple[np.ndarray, float]:
    """Memory-map a matrix container; returns ``(rows, frame_step)``."""
    dim, step, n = read_matrix_header(path, magic)
    if n == 0:
        return np.zeros((0, dim), dtype=np.float32), step
    rows = np.memmap(path, dtype="<f4", mode="r", offset=_MATRIX_HEADER.size, shape=(n, dim))
    return rows, step


def read_matrix(path: str | Path, magic: bytes) -> tuple[np.ndarray, float]:
    rows, step = open_matrix(path, magic)
    return np.array(rows, dtype=np.float32), step


def iter_matrix_chunks(path: str | Path, magic: bytes, chunk_rows: int) -> Iterator[np.ndarray]:
    rows, _ = open_matrix(path, magic)
    for start in range(0, len(rows), chunk_rows):
        yield np.array(rows[start:start + chunk_rows], dtype=np.float32)


# -- embeddings ---------------------------------------------------------------

def write_embeddings(path: str | Path, dim: int,
                     windows: Sequence[tuple[Sequence[int], np.ndarray]]) -> None:
    """``windows[i] = (channel ids, k x dim vectors)`` for window ``i``."""
    with open(path, "wb") as fh:
        fh.write(EMBEDDINGS_MAGIC + struct.pack("<I", dim))
        for channels, vectors in windows:
            vectors = np.asarray(vectors, dtype="<f4").reshape(len(channels), dim)
            fh.write(struct.pack("<I", len(channels)))
            fh.write(np.asarray(channels, dtype="<u4").tobytes())
            fh.write(vectors.tobytes())


def read_embeddings(path: str | Path) -> tuple[int, list[tuple[list[int], np.ndarray]]]:
    data = Path(path).read_bytes()
    if data[:4] != EMBEDDINGS_MAGIC:
        raise ParseError(f"{path}: bad magic {data[:4]!r}")
    if len(data) < 8:
        raise ParseError(f"{path}: truncated header")
    (dim,) = struct.unpack_from("<I", data, 4)
    pos = 8
    windows = []
    while pos < len(data):
        if pos + 4 > len(data):
            raise ParseError(f"{path}: truncated window record {len(windows)}")
        (k,) = struct.unpack_from("<I", data, pos)
        pos += 4
        end = pos + 4 * k + 4 * k * dim
        if end > len(data):
            raise ParseError(f"{path}: truncated window record {len(windows)}")
        channels = np.frombuffer(data, dtype="<u4", count=k, offset=pos).astype(int).tolist()
        vectors = np.frombuffer(data, dtype="<f4", count=k * dim, offset=pos + 4 * k)
        windows.append((channels, vectors.reshape(k, dim).astype(np.float64)))
        pos = end
    return dim, windows


# -- centroid checkpoints -------------------------------------------------------

def write_centroids(path: str | Path, sums: np.ndarray, counts: Sequence[int],
                    labels: Sequence[str]) -> None:
    sums = np.asarray(sums, dtype="<f8")
    k = len(labels)
    dim = sums.shape[1] if sums.ndim == 2 and k else 0
    with open(path, "wb") as fh:
        _write_centroids(fh, sums.reshape(k, dim), counts, labels)


def _write_centroids(fh: BinaryIO, sums, counts, labels) -> None:
    fh.write(CENTROIDS_MAGIC + struct.pack("<II", *sums.shape))
    fh.write(sums.tobytes())
    fh.write(np.asarray(counts, dtype="<u4").tobytes())
    for label in labels:
        raw = label.encode("utf-8")
        fh.write(struct.pack("<I", len(raw)) + raw)


def read_centroids(path: str | Path) -> tuple[np.ndarray, list[int], list[str]]:
    data = Path(path).read_bytes()
    if data[:4] != CENTROIDS_MAGIC or len(data) < 12:
        raise ParseError(f"{path}: not a centroid checkpoint")
    k, dim = struct.unpack_from("<II", data, 4)
    pos = 12
    try:
        sums = np.frombuffer(data, dtype="<f8", count=k * dim, offset=pos).reshape(k, dim).copy()
        pos += 8 * k * dim
        counts = np.frombuffer(data, dtype="<u4", count=k, offset=pos).astype(int).tolist()
        pos += 4 * k
        labels = []
        for _ in range(k):
            (n,) = struct.unpack_from("<I", data, pos)
            labels.append(data[pos + 4:pos + 4 + n].decode("utf-8"))
            pos += 4 + n
    except (ValueError, struct.error) as exc:
        raise ParseError(f"{path}: truncated checkpoint") from exc
    return sums, counts, labels
