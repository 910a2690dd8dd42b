"""The online loop: segment, weight, pool, assign, update, relabel, aggregate, emit."""

from __future__ import annotations

import dataclasses
import logging
import time
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable

import numpy as np

from .clustering import CentroidSet, step_update
from .errors import ParseError
from .output import Binarizer, FrameAccumulator, aggregate, output_region, relabel
from .pooling import (EmbeddingProvider, FileEmbedder, PoolingEmbedder, direct_weights,
                      overlap_weights)
from .rttm import parse_rttm
from .segmentation import (DEFAULT_K_MAX, FileSegmenter, LocalSpeakers, OracleSegmenter,
                           SegmentationProvider, active_speakers, segment)
from .stream import BufferWindow, open_stream
from .timebase import Annotation, FrameGrid, Segment

log = logging.getLogger(__name__)

WEIGHTING_MODES = ("overlap_aware", "direct")


@dataclass(frozen=True)
class PipelineConfig:
    grid: FrameGrid = field(default_factory=FrameGrid)
    k_max: int = DEFAULT_K_MAX
    tau_active: float = 0.5
    delta_new: float = 1.0
    rho_update: float = 0.1
    beta: float = 10.0
    gamma: float = 3.0
    latency: float = 0.5
    weighting_mode: str = "overlap_aware"
    pad_warmup: bool = True
    seed: int = 0

    def __post_init__(self):
        g = self.grid
        if not g.hop - 1e-9 <= self.latency <= g.window_duration + 1e-9:
            raise ValueError(f"latency {self.latency} must lie in [hop, window_duration]"
                             f" = [{g.hop}, {g.window_duration}]")
        if not 0 < self.tau_active < 1:
            raise ValueError("tau_active must lie in (0, 1)")
        if not 0 < self.delta_new < 2:
            raise ValueError("delta_new must lie in (0, 2)")
        if self.rho_update < 0:
            raise ValueError("rho_update must be >= 0")
        if self.gamma < 1:
            raise ValueError("gamma must be >= 1")
        if self.k_max < 1:
            raise ValueError("k_max must be >= 1")
        if self.weighting_mode not in WEIGHTING_MODES:
            raise ValueError(f"weighting_mode must be one of {WEIGHTING_MODES}")

    def replace(self, **changes) -> PipelineConfig:
        grid_keys = {k: changes.pop(k) for k in ("frame_step", "window_duration", "hop") if k in changes}
        grid = dataclasses.replace(self.grid, **grid_keys) if grid_keys else self.grid
        return dataclasses.replace(self, grid=grid, **changes)

    def to_dict(self) -> dict:
        d = {f.name: getattr(self, f.name) for f in dataclasses.fields(self) if f.name != "grid"}
        d.update(frame_step=self.grid.frame_step, window_duration=self.grid.window_duration,
                 hop=self.grid.hop)
        return d

    @classmethod
    def from_dict(cls, values: dict) -> PipelineConfig:
        return cls().replace(**values)


_FIELD_TYPES = {
    "frame_step": float, "window_duration": float, "hop": float, "k_max": int,
    "tau_active": float, "delta_new": float, "rho_update": float, "beta": float,
    "gamma": float, "latency": float, "weighting_mode": str, "pad_warmup": "bool", "seed": int,
}


def _coerce(key: str, raw: str, lineno: int | None = None):
    kind = _FIELD_TYPES.get(key)
    if kind is None:
        raise ParseError(f"unknown config key {key!r}", lineno)
    try:
        if kind == "bool":
            low = raw.strip().lower()
            if low not in ("true", "false", "1", "0", "yes", "no"):
                raise ValueError(raw)
            return low in ("true", "1", "yes")
        return kind(raw.strip())
    except ValueError:
        raise ParseError(f"bad value for {key}: {raw!r}", lineno) from None


def parse_key_values(text: str) -> list[tuple[str, str, int]]:
    """``key = value`` lines; ``#`` starts a comment."""
    out = []
    for lineno, line in enumerate(text.splitlines(), start=1):
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ParseError(f"expected 'key = value', got {line!r}", lineno)
        key, value = (part.strip() for part in line.split("=", 1))
        out.append((key, value, lineno))
    return out


def parse_config(text: str, base: PipelineConfig | None = None) -> PipelineConfig:
    values = {key: _coerce(key, value, lineno) for key, value, lineno in parse_key_values(text)}
    try:
        return (base or PipelineConfig()).replace(**values)
    except ValueError as exc:
        raise ParseError(str(exc)) from None


def load_config(path: str | Path) -> PipelineConfig:
    return parse_config(Path(path).read_text())


def dump_config(config: PipelineConfig) -> str:
    return "".join(f"{k} = {str(v).lower() if isinstance(v, bool) else v}\n"
                   for k, v in config.to_dict().items())


@dataclass(frozen=True)
class StepReport:
    window_index: int
    end_time: float
    k_buffer: int
    new_speakers: int
    num_centroids: int
    step_seconds: float  # whole step, wall clock
    provider_seconds: float  # time spent inside the segmentation provider
    frames_finalized: int

    @property
    def engine_seconds(self) -> float:
        return max(0.0, self.step_seconds - self.provider_seconds)


SegmentCallback = Callable[[Segment, str], None]


class OnlineDiarizer:
    """State of one stream. Feed windows in order with :meth:`step`, then :meth:`finish`."""

    def __init__(self, config: PipelineConfig, segmenter: SegmentationProvider,
                 embedder: EmbeddingProvider | None = None, uri: str = "",
                 centroids: CentroidSet | None = None,
                 on_segment: SegmentCallback | None = None):
        if segmenter.k_max != config.k_max:
            raise ValueError(f"provider k_max {segmenter.k_max} != config k_max {config.k_max}")
        self.config = config
        self.segmenter = segmenter
        self.embedder = embedder if embedder is not None else PoolingEmbedder()
        self.uri = uri
        self.centroids = centroids if centroids is not None else CentroidSet()
        self.on_segment = on_segment
        self.accumulator = FrameAccumulator(config.grid, config.latency)
        self.binarizer = Binarizer(config.tau_active, config.grid, uri)
        self.reports: list[StepReport] = []
        self._finished = False

    def _weights(self, seg):
        if self.config.weighting_mode == "direct":
            return direct_weights(seg)
        return overlap_weights(seg, self.config.beta, self.config.gamma)

    def _emit(self, closed) -> None:
        if self.on_segment is not None:
            for seg, label in closed:
                self.on_segment(seg, label)

    def step(self, window: BufferWindow) -> StepReport:
        if self._finished:
            raise RuntimeError("diarizer already finished")
        cfg = self.config
        t0 = time.perf_counter()
        seg = segment(self.segmenter, window)
        provider_seconds = time.perf_counter() - t0

        local = active_speakers(seg, cfg.tau_active)
        weights = self._weights(seg)
        support = weights.weights.sum(axis=0)
        kept = tuple(k for k in local.active if support[k] > 0)
        if len(kept) < local.k_buffer:
            log.warning("window %d: dropping channels %s with zero pooling support",
                        window.window_index, sorted(set(local.active) - set(kept)))
        label_map: dict[int, str] = {}
        new = 0
        if kept:
            embeddings = self.embedder.embed(window, seg, weights, LocalSpeakers(kept))
            outcome = step_update(self.centroids, embeddings, cfg.delta_new, cfg.rho_update,
                                  cfg.grid.frame_step)
            label_map, new = outcome.label_map, len(outcome.new_speakers)

        whole = not cfg.pad_warmup and window.window_index == 0
        sl = relabel(seg, label_map, output_region(window, cfg.grid, cfg.latency, whole))
        block = aggregate(self.accumulator, sl)
        self._emit(self.binarizer.push(block))

        report = StepReport(window.window_index, window.end_time, local.k_buffer, new,
                            self.centroids.size, time.perf_counter() - t0, provider_seconds,
                            block.num_frames)
        self.reports.append(report)
        return report

    def finish(self) -> Annotation:
        if not self._finished:
            self._finished = True
            self._emit(self.binarizer.push(self.accumulator.flush()))
            self._emit(self.binarizer.close())
        return self.binarizer.annotation()


def run(config: PipelineConfig, segmenter: SegmentationProvider, source,
        embedder: EmbeddingProvider | None = None, uri: str = "",
        centroids: CentroidSet | None = None,
        on_segment: SegmentCallback | None = None) -> tuple[Annotation, list[StepReport]]:
    """Diarize a whole frame source (array, chunk iterable or SDFE path)."""
    diarizer = OnlineDiarizer(config, segmenter, embedder, uri, centroids, on_segment)
    for window in open_stream(source, config.grid, config.pad_warmup):
        diarizer.step(window)
    return diarizer.finish(), diarizer.reports


def build_providers(config: PipelineConfig, reference: Annotation | str | Path | None = None,
                    segmentation_path: str | Path | None = None,
                    embeddings_path: str | Path | None = None,
                    ) -> tuple[SegmentationProvider, EmbeddingProvider]:
    """File providers where paths are given, oracle segmentation from ``reference`` otherwise."""
    if segmentation_path is not None:
        segmenter = FileSegmenter(segmentation_path, config.grid, config.k_max)
    elif reference is not None:
        if not isinstance(reference, Annotation):
            reference = parse_rttm(reference)
        segmenter = OracleSegmenter(reference, config.grid, config.k_max, config.seed)
    else:
        raise ValueError("need a segmentation file or a reference annotation for the oracle")
    embedder = FileEmbedder(embeddings_path) if embeddings_path is not None else PoolingEmbedder()
    return segmenter, embedder


def seeded_centroids(n: int, dim: int, seed: int = 0) -> CentroidSet:
    """Random unit centroids, e.g. to benchmark steps against a large speaker pool."""
    rng = np.random.default_rng(seed)
    cs = CentroidSet()
    for _ in range(n):
        v = rng.standard_normal(dim)
        cs.append(v / np.linalg.norm(v))
    return cs
