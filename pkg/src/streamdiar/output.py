"""From per-window global activity to the final, latency-bounded diarization stream."""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import OrderViolation
from .segmentation import SegmentationMatrix
from .stream import BufferWindow
from .timebase import Annotation, FrameGrid, Segment, time_to_frame


@dataclass(frozen=True)
class GlobalSlice:
    window_index: int
    end_time: float
    start_frame: int
    labels: tuple[str, ...]
    probs: np.ndarray  # (num_frames, len(labels))

    @property
    def end_frame(self) -> int:
        return self.start_frame + len(self.probs)


@dataclass(frozen=True)
class FinalizedFrames:
    start_frame: int
    num_frames: int
    probs: dict[str, np.ndarray] = field(default_factory=dict)

    @property
    def end_frame(self) -> int:
        return self.start_frame + self.num_frames


def output_region(window: BufferWindow, grid: FrameGrid, latency: float,
                  whole_window: bool = False) -> tuple[int, int]:
    """Absolute frame range ``[lo, hi)`` a window reports at the given latency.

    The region is the rightmost ``latency`` seconds, bounded on the left by the
    start of the stream. ``whole_window`` reports every real frame instead; it
    is used for the first window when the warm-up is not padded.
    """
    hi = window.end_frame
    if whole_window:
        lo = window.start_frame
    else:
        lo = time_to_frame(grid, max(0.0, window.end_time - latency))
    return max(lo, window.start_frame, 0), hi


def relabel(seg: SegmentationMatrix, label_map: dict[int, str],
            region: tuple[int, int]) -> GlobalSlice:
    """Keep mapped channels, name them by global label and trim to ``region``."""
    window = seg.window
    lo, hi = region
    rows = slice(lo - window.start_frame, hi - window.start_frame)
    channels = sorted(label_map)
    probs = seg.probs[rows][:, channels] if channels else np.zeros((hi - lo, 0))
    return GlobalSlice(window.window_index, window.end_time, lo,
                       tuple(label_map[k] for k in channels), np.array(probs))


class FrameAccumulator:
    """Averages overlapping slices frame by frame and releases frames no later window can reach.

    A label missing from a slice counts as probability zero for the frames that
    slice covers.
    """

    def __init__(self, grid: FrameGrid, latency: float):
        self.grid = grid
        self.latency = latency
        self.base = 0  # first frame not yet finalized
        self._counts = np.zeros(0, dtype=np.int64)
        self._sums: dict[str, np.ndarray] = {}
        self._last_window: int | None = None

    @property
    def finalized_until(self) -> int:
        return self.base

    def _grow(self, end_frame: int) -> None:
        extra = end_frame - self.base - len(self._counts)
        if extra > 0:
            self._counts = np.concatenate([self._counts, np.zeros(extra, dtype=np.int64)])
            for lab in self._sums:
                self._sums[lab] = np.concatenate([self._sums[lab], np.zeros(extra)])

    def add(self, sl: GlobalSlice) -> None:
        if self._last_window is not None and sl.window_index <= self._last_window:
            raise OrderViolation(f"window {sl.window_index} after window {self._last_window}")
        self._last_window = sl.window_index
        lo = max(sl.start_frame, self.base)  # finalized frames are immutable
        hi = sl.end_frame
        if hi <= lo:
            return
        self._grow(hi)
        a, b = lo - self.base, hi - self.base
        self._counts[a:b] += 1
        src = slice(lo - sl.start_frame, hi - sl.start_frame)
        for i, lab in enumerate(sl.labels):
            if lab not in self._sums:
                self._sums[lab] = np.zeros(len(self._counts))
            self._sums[lab][a:b] += sl.probs[src, i]

    def finalize(self, until: int) -> FinalizedFrames:
        n = min(until - self.base, len(self._counts))
        if n <= 0:
            return FinalizedFrames(self.base, 0)
        counts = np.maximum(self._counts[:n], 1)
        probs = {lab: s[:n] / counts for lab, s in self._sums.items()}
        out = FinalizedFrames(self.base, n, probs)
        self._counts = self._counts[n:]
        self._sums = {lab: s[n:] for lab, s in self._sums.items()}
        self.base += n
        return out

    def next_region_start(self, sl: GlobalSlice) -> int:
        """First frame the next regular window could still contribute to."""
        nxt = sl.end_time + self.grid.hop - self.latency
        return time_to_frame(self.grid, max(0.0, nxt))

    def flush(self) -> FinalizedFrames:
        return self.finalize(self.base + len(self._counts))


def aggregate(acc: FrameAccumulator, sl: GlobalSlice) -> FinalizedFrames:
    """Add a slice and return every frame that is now final."""
    acc.add(sl)
    return acc.finalize(min(sl.end_frame, acc.next_region_start(sl)))


class Binarizer:
    """Turns finalized probability blocks into closed speaker turns (``prob > tau``)."""

    def __init__(self, tau_active: float, grid: FrameGrid, uri: str = ""):
        self.tau = tau_active
        self.grid = grid
        self.uri = uri
        self._open: dict[str, int] = {}  # label -> onset frame of the running turn
        self._next_frame = 0
        self.segments: list[tuple[Segment, str]] = []

    def _close(self, label: str, end_frame: int) -> tuple[Segment, str]:
        start = self._open.pop(label)
        step = self.grid.frame_step
        seg = (Segment(start * step, (end_frame - start) * step), label)
        self.segments.append(seg)
        return seg

    def push(self, block: FinalizedFrames) -> list[tuple[Segment, str]]:
        closed = []
        if block.num_frames == 0:
            return closed
        if block.start_frame != self._next_frame and self._next_frame:
            raise OrderViolation(f"frame {block.start_frame} pushed, expected {self._next_frame}")
        labels = sorted(set(self._open) | set(block.probs))
        for label in labels:
            probs = block.probs.get(label)
            active = probs > self.tau if probs is not None else np.zeros(block.num_frames, bool)
            was_open = label in self._open
            edges = np.diff(np.concatenate([[was_open], active, [False]]).astype(np.int8))
            starts = np.flatnonzero(edges == 1)
            ends = np.flatnonzero(edges == -1)
            if was_open:
                # the first falling edge closes the turn carried over from the previous block
                first_end, ends = ends[0], ends[1:]
                if first_end < block.num_frames:
                    closed.append(self._close(label, block.start_frame + first_end))
                else:
                    continue
            for s, e in zip(starts, ends):
                self._open[label] = block.start_frame + s
                if e < block.num_frames:
                    closed.append(self._close(label, block.start_frame + e))
        self._next_frame = block.end_frame
        return closed

    def close(self) -> list[tuple[Segment, str]]:
        return [self._close(label, self._next_frame) for label in sorted(self._open)]

    def annotation(self) -> Annotation:
        return Annotation(self.uri, tuple(self.segments))


def binarize(blocks, tau_active: float, grid: FrameGrid, uri: str = "") -> Annotation:
    """Threshold a sequence of finalized blocks into an annotation."""
    if isinstance(blocks, FinalizedFrames):
        blocks = [blocks]
    b = Binarizer(tau_active, grid, uri)
    for block in blocks:
        b.push(block)
    b.close()
    return b.annotation()
