"""Rolling-buffer windowing over a stream of frame features."""

from __future__ import annotations

import wave
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator

import numpy as np

from .containers import FEATURES_MAGIC, iter_matrix_chunks, read_matrix_header
from .timebase import FrameGrid, time_to_frame


@dataclass(frozen=True)
class FrameFeatures:
    frames: np.ndarray  # (F, D_feat)
    start_time: float


@dataclass(frozen=True)
class BufferWindow:
    """One position of the rolling buffer.

    ``start_frame`` is the absolute index of the first row of ``features`` and
    is negative when the window is left-padded. Rows ``[0, padded_frames)``
    are exactly zero.
    """

    window_index: int
    start_time: float
    end_time: float
    features: FrameFeatures
    padded_frames: int
    start_frame: int
    is_tail: bool = False

    @property
    def end_frame(self) -> int:
        return self.start_frame + len(self.features.frames)

    @property
    def num_frames(self) -> int:
        return len(self.features.frames)


class RollingBuffer:
    """Incremental windowing: push frame chunks, collect completed windows.

    Window ``i`` ends at ``(i + 1) * hop`` when ``pad_warmup`` is set and at
    ``window_duration + i * hop`` otherwise. It spans frames
    ``[end_frame - F, end_frame)`` where ``end_frame = time_to_frame(end)``.
    """

    def __init__(self, grid: FrameGrid, pad_warmup: bool = True, dim: int | None = None):
        self.grid = grid
        self.pad_warmup = pad_warmup
        self.dim = dim
        self._frames = np.zeros((0, dim or 0), dtype=np.float64)
        self._offset = 0  # absolute index of self._frames[0]
        self._received = 0
        self._next_index = 0
        self._last_end_frame: int | None = None
        self._closed = False

    @property
    def frames_received(self) -> int:
        return self._received

    def _end_time(self, index: int) -> float:
        g = self.grid
        if self.pad_warmup:
            return (index + 1) * g.hop
        return g.window_duration + index * g.hop

    def push(self, chunk: np.ndarray) -> list[BufferWindow]:
        if self._closed:
            raise RuntimeError("buffer already closed")
        chunk = np.asarray(chunk, dtype=np.float64)
        if chunk.ndim != 2:
            raise ValueError("frame chunk must be 2-D (frames x dim)")
        if self.dim is None:
            self.dim = chunk.shape[1]
            self._frames = np.zeros((0, self.dim))
        elif chunk.shape[1] != self.dim:
            raise ValueError(f"frame dimension changed from {self.dim} to {chunk.shape[1]}")
        if not np.all(np.isfinite(chunk)):
            raise ValueError("non-finite frame features")
        self._frames = np.concatenate([self._frames, chunk])
        self._received += len(chunk)

        out = []
        while True:
            end = self._end_time(self._next_index)
            if time_to_frame(self.grid, end) > self._received:
                break
            out.append(self._emit(end, is_tail=False))
        return out

    def close(self) -> list[BufferWindow]:
        """Flush a final window ending at the last received frame, if any frames are unseen."""
        if self._closed:
            return []
        self._closed = True
        if self._last_end_frame is None or self._received <= self._last_end_frame:
            return []
        return [self._emit(self._received * self.grid.frame_step, is_tail=True)]

    def _emit(self, end_time: float, is_tail: bool) -> BufferWindow:
        F = self.grid.frames_per_window
        end_frame = time_to_frame(self.grid, end_time)
        start_frame = end_frame - F
        rows = np.zeros((F, self.dim))
        lo = max(start_frame, self._offset)
        rows[lo - start_frame:] = self._frames[lo - self._offset:end_frame - self._offset]
        padded = max(0, -start_frame)
        window = BufferWindow(
            window_index=self._next_index,
            start_time=end_time - self.grid.window_duration,
            end_time=end_time,
            features=FrameFeatures(rows, end_time - self.grid.window_duration),
            padded_frames=padded,
            start_frame=start_frame,
            is_tail=is_tail,
        )
        self._next_index += 1
        self._last_end_frame = end_frame
        # any later window (regular or tail) ends at end_frame + 1 or beyond
        keep_from = end_frame + 1 - F
        drop = max(0, keep_from - self._offset)
        if drop:
            self._frames = self._frames[drop:]
            self._offset += drop
        return window


class WindowIterator:
    """Single-consumer iterator of :class:`BufferWindow` over a frame source."""

    def __init__(self, chunks: Iterable[np.ndarray], grid: FrameGrid, pad_warmup: bool):
        self._chunks = iter(chunks)
        self._buffer = RollingBuffer(grid, pad_warmup)
        self._pending: list[BufferWindow] = []
        self._done = False

    def next_window(self) -> BufferWindow | None:
        while not self._pending and not self._done:
            try:
                chunk = next(self._chunks)
            except StopIteration:
                self._done = True
                if self._buffer.dim is not None:
                    self._pending.extend(self._buffer.close())
                break
            self._pending.extend(self._buffer.push(chunk))
        return self._pending.pop(0) if self._pending else None

    def __iter__(self) -> Iterator[BufferWindow]:
        return self

    def __next__(self) -> BufferWindow:
        window = self.next_window()
        if window is None:
            raise StopIteration
        return window


def open_stream(source, grid: FrameGrid, pad_warmup: bool = True,
                chunk_frames: int | None = None) -> WindowIterator:
    """Window a frame source.

    ``source`` is a 2-D array of frames, an iterable of 2-D chunks, or a path
    to an SDFE feature file.
    """
    if isinstance(source, (str, Path)):
        dim, step, _ = read_matrix_header(source, FEATURES_MAGIC)
        if abs(step - grid.frame_step) > 1e-12:
            raise ValueError(f"feature file frame_step {step} does not match grid {grid.frame_step}")
        chunks = iter_matrix_chunks(source, FEATURES_MAGIC, chunk_frames or 4096)
    elif isinstance(source, np.ndarray):
        if source.ndim != 2:
            raise ValueError("frame array must be 2-D")
        size = chunk_frames or max(len(source), 1)
        chunks = (source[i:i + size] for i in range(0, len(source), size))
    else:
        chunks = source
    return WindowIterator(chunks, grid, pad_warmup)


def next_window(it: WindowIterator) -> BufferWindow | None:
    return it.next_window()


def wav_info(path: str | Path) -> tuple[str, float]:
    """``(uri, duration)`` of a PCM WAV file; the uri is the file stem."""
    with wave.open(str(path), "rb") as wf:
        duration = wf.getnframes() / float(wf.getframerate())
    return Path(path).stem, duration
