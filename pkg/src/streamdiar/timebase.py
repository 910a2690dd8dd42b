"""Frame grid arithmetic and the annotation value types shared by every module."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterable, Iterator

# Guards floor() against values such as 4.992 / 0.016 = 311.99999999999994.
_FRAME_EPS = 1e-9


@dataclass(frozen=True)
class FrameGrid:
    """Frame rate and rolling-buffer geometry, in seconds."""

    frame_step: float = 0.016
    window_duration: float = 5.0
    hop: float = 0.5

    def __post_init__(self):
        if not (self.frame_step > 0 and self.window_duration > 0 and self.hop > 0):
            raise ValueError("frame_step, window_duration and hop must be positive")
        if self.hop > self.window_duration:
            raise ValueError("hop must not exceed window_duration")
        if self.frames_per_window < 1:
            raise ValueError("window_duration is shorter than one frame")

    @property
    def frames_per_window(self) -> int:
        return int(math.floor(self.window_duration / self.frame_step + _FRAME_EPS))


def time_to_frame(grid: FrameGrid, t: float) -> int:
    """Index of the frame containing time ``t`` (frame ``i`` spans ``[i*step, (i+1)*step)``)."""
    if t < 0:
        raise ValueError(f"negative time {t}")
    return int(math.floor(t / grid.frame_step + _FRAME_EPS))


def frame_to_time(grid: FrameGrid, index: int) -> float:
    return index * grid.frame_step


@dataclass(frozen=True, order=True)
class Segment:
    onset: float
    duration: float

    def __post_init__(self):
        if not self.onset >= 0:
            raise ValueError(f"segment onset must be >= 0, got {self.onset}")
        if not self.duration > 0:
            raise ValueError(f"segment duration must be > 0, got {self.duration}")
        if not math.isfinite(self.onset + self.duration):
            raise ValueError("segment bounds must be finite")

    @property
    def end(self) -> float:
        return self.onset + self.duration


@dataclass(frozen=True)
class Annotation:
    """Speaker turns of one recording, sorted by onset.

    Turns of different speakers may overlap. Turns of the same speaker are
    interpreted as a union of intervals.
    """

    uri: str
    segments: tuple[tuple[Segment, str], ...] = field(default_factory=tuple)

    def __post_init__(self):
        segs = tuple(sorted(self.segments, key=lambda item: (item[0].onset, item[0].duration, item[1])))
        for _, label in segs:
            if not label:
                raise ValueError("speaker labels must be non-empty")
        object.__setattr__(self, "segments", segs)

    @classmethod
    def from_tuples(cls, uri: str, items: Iterable[tuple[float, float, str]]) -> Annotation:
        """Build from ``(start, end, label)`` triples."""
        return cls(uri, tuple((Segment(s, e - s), lab) for s, e, lab in items))

    def __iter__(self) -> Iterator[tuple[Segment, str]]:
        return iter(self.segments)

    def __len__(self) -> int:
        return len(self.segments)

    def labels(self) -> list[str]:
        return sorted({label for _, label in self.segments})

    def end(self) -> float:
        return max((seg.end for seg, _ in self.segments), default=0.0)

    def speaker_timeline(self, label: str) -> list[tuple[float, float]]:
        """Merged, sorted ``(start, end)`` intervals where ``label`` speaks."""
        return merge_intervals((s.onset, s.end) for s, lab in self.segments if lab == label)

    def timelines(self) -> dict[str, list[tuple[float, float]]]:
        return {label: self.speaker_timeline(label) for label in self.labels()}

    def rename(self, mapping: dict[str, str]) -> Annotation:
        return Annotation(self.uri, tuple((s, mapping.get(lab, lab)) for s, lab in self.segments))

    def crop(self, start: float, end: float) -> Annotation:
        out = []
        for seg, lab in self.segments:
            lo, hi = max(seg.onset, start), min(seg.end, end)
            if hi > lo:
                out.append((Segment(lo, hi - lo), lab))
        return Annotation(self.uri, tuple(out))


def merge_intervals(intervals: Iterable[tuple[float, float]]) -> list[tuple[float, float]]:
    merged: list[list[float]] = []
    for start, end in sorted(intervals):
        if merged and start <= merged[-1][1]:
            merged[-1][1] = max(merged[-1][1], end)
        else:
            merged.append([start, end])
    return [(s, e) for s, e in merged]


def annotation_total_speech(annotation: Annotation) -> float:
    """Sum over speakers of the duration each one speaks; overlap counts once per speaker."""
    return sum(e - s for tl in annotation.timelines().values() for s, e in tl)
