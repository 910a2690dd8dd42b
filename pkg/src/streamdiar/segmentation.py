"""Per-window speaker activity matrices and the providers that produce them."""

from __future__ import annotations

import math
from dataclasses import dataclass
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

from .containers import SEGMENTATION_MAGIC, open_matrix, write_matrix
from .errors import CapacityExceeded, ProviderError
from .stream import BufferWindow
from .timebase import Annotation, FrameGrid

DEFAULT_K_MAX = 4


@dataclass(frozen=True)
class SegmentationMatrix:
    probs: np.ndarray  # (F, k_max), values in [0, 1]
    window: BufferWindow
    k_max: int = DEFAULT_K_MAX


@dataclass(frozen=True)
class LocalSpeakers:
    active: tuple[int, ...]

    @property
    def k_buffer(self) -> int:
        return len(self.active)


class SegmentationProvider(Protocol):
    k_max: int

    def segment(self, window: BufferWindow) -> np.ndarray:
        """Return an ``(F, k_max)`` activity matrix for ``window``."""


def segment(provider: SegmentationProvider, window: BufferWindow) -> SegmentationMatrix:
    try:
        probs = np.array(provider.segment(window), dtype=np.float64)
    except ProviderError:
        raise
    except (OSError, ValueError, IndexError) as exc:
        raise ProviderError(str(exc), window.window_index) from exc
    expected = (window.num_frames, provider.k_max)
    if probs.shape != expected:
        raise ProviderError(f"segmentation shape {probs.shape}, expected {expected}",
                            window.window_index)
    if not np.all(np.isfinite(probs)) or probs.min(initial=0.0) < 0 or probs.max(initial=0.0) > 1:
        raise ProviderError("activity probabilities outside [0, 1]", window.window_index)
    probs[:window.padded_frames] = 0.0
    return SegmentationMatrix(probs, window, provider.k_max)


def active_speakers(seg: SegmentationMatrix, tau_active: float) -> LocalSpeakers:
    """Channels whose activity exceeds ``tau_active`` at least once in the window."""
    if not 0 < tau_active < 1:
        raise ValueError("tau_active must lie in (0, 1)")
    if len(seg.probs) == 0:
        return LocalSpeakers(())
    peak = seg.probs.max(axis=0)
    return LocalSpeakers(tuple(int(k) for k in np.flatnonzero(peak > tau_active)))


def rasterize(reference: Annotation, grid: FrameGrid, start_frame: int, num_frames: int,
              labels: Sequence[str] | None = None) -> np.ndarray:
    """Binary ``(num_frames, len(labels))`` matrix; a frame is active when its midpoint is covered."""
    labels = reference.labels() if labels is None else list(labels)
    column = {lab: i for i, lab in enumerate(labels)}
    out = np.zeros((num_frames, len(labels)), dtype=bool)
    step = grid.frame_step
    for seg, lab in reference:
        if lab not in column:
            continue
        # the tolerance keeps millisecond boundaries stable after an RTTM round trip
        lo = math.ceil(seg.onset / step - 0.5 - 1e-9) - start_frame
        hi = math.ceil(seg.end / step - 0.5 - 1e-9) - start_frame
        lo, hi = max(lo, 0), min(hi, num_frames)
        if hi > lo:
            out[lo:hi, column[lab]] = True
    return out


def channel_permutation(seed: int, window_index: int, k_max: int) -> np.ndarray:
    rng = np.random.default_rng([seed, window_index])
    return rng.permutation(k_max)


def oracle_segmentation(reference: Annotation, window: BufferWindow, permutation_seed: int,
                        grid: FrameGrid, k_max: int = DEFAULT_K_MAX) -> SegmentationMatrix:
    return segment(OracleSegmenter(reference, grid, k_max, permutation_seed), window)


class OracleSegmenter:
    """Perfect binary segmentation rasterized from a reference annotation.

    Speakers present in a window are dealt to channels by a permutation drawn
    from ``(seed, window_index)``, so channel identity is not stable across
    windows.
    """

    def __init__(self, reference: Annotation, grid: FrameGrid, k_max: int = DEFAULT_K_MAX,
                 seed: int = 0):
        self.reference = reference
        self.grid = grid
        self.k_max = k_max
        self.seed = seed
        self.labels = reference.labels()
        n = int(math.ceil(reference.end() / grid.frame_step)) + 1
        self._raster = rasterize(reference, grid, 0, n, self.labels)

    def segment(self, window: BufferWindow) -> np.ndarray:
        F = window.num_frames
        lo, hi = window.start_frame, window.end_frame
        block = np.zeros((F, len(self.labels)), dtype=bool)
        src_lo, src_hi = max(lo, 0), min(hi, len(self._raster))
        if src_hi > src_lo:
            block[src_lo - lo:src_hi - lo] = self._raster[src_lo:src_hi]
        present = np.flatnonzero(block.any(axis=0))
        if len(present) > self.k_max:
            raise CapacityExceeded(
                f"window {window.window_index} holds {len(present)} speakers, k_max={self.k_max}")
        perm = channel_permutation(self.seed, window.window_index, self.k_max)
        probs = np.zeros((F, self.k_max))
        for i, col in enumerate(present):
            probs[:, perm[i]] = block[:, col]
        return probs

    def channel_labels(self, window: BufferWindow) -> dict[int, str]:
        """Which reference speaker sits on which channel (for tests and debugging)."""
        probs_labels = {}
        lo, hi = max(window.start_frame, 0), min(window.end_frame, len(self._raster))
        present = np.flatnonzero(self._raster[lo:hi].any(axis=0)) if hi > lo else []
        perm = channel_permutation(self.seed, window.window_index, self.k_max)
        for i, col in enumerate(present):
            probs_labels[int(perm[i])] = self.labels[col]
        return probs_labels


class NoisyOracleSegmenter:
    """Wraps another provider and adds uniform jitter in ``[-epsilon, epsilon]``."""

    def __init__(self, inner: SegmentationProvider, epsilon: float, seed: int = 0):
        self.inner = inner
        self.k_max = inner.k_max
        self.epsilon = epsilon
        self.seed = seed

    def segment(self, window: BufferWindow) -> np.ndarray:
        probs = np.asarray(self.inner.segment(window), dtype=np.float64)
        rng = np.random.default_rng([self.seed, window.window_index, 1])
        jitter = rng.uniform(-self.epsilon, self.epsilon, size=probs.shape)
        return np.clip(probs + jitter, 0.0, 1.0)


class FileSegmenter:
    """Precomputed model outputs stored as consecutive ``F x k_max`` blocks in an SDSG file."""

    def __init__(self, path: str | Path, grid: FrameGrid, k_max: int = DEFAULT_K_MAX):
        self.path = Path(path)
        self.grid = grid
        self._rows, step = open_matrix(self.path, SEGMENTATION_MAGIC)
        if self._rows.shape[1] != k_max:
            raise ProviderError(f"{self.path}: file has {self._rows.shape[1]} channels, k_max={k_max}")
        if abs(step - grid.frame_step) > 1e-12:
            raise ProviderError(f"{self.path}: frame_step {step} does not match grid")
        self.k_max = k_max

    @property
    def num_windows(self) -> int:
        return len(self._rows) // self.grid.frames_per_window

    def segment(self, window: BufferWindow) -> np.ndarray:
        F = self.grid.frames_per_window
        if window.window_index >= self.num_windows:
            raise ProviderError(f"{self.path} holds only {self.num_windows} windows",
                                window.window_index)
        lo = window.window_index * F
        return np.array(self._rows[lo:lo + F], dtype=np.float64)


def write_segmentation(path: str | Path, matrices: Sequence[np.ndarray], frame_step: float) -> None:
    if not matrices:
        raise ValueError("nothing to write")
    write_matrix(path, SEGMENTATION_MAGIC, np.concatenate([np.asarray(m) for m in matrices]), frame_step)
