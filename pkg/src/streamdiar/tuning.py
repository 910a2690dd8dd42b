"""Grid search over pipeline thresholds and per-step timing."""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np

from .clustering import CentroidSet
from .containers import FEATURES_MAGIC, read_matrix_header
from .errors import ParseError
from .metrics import DerBreakdown, der
from .pipeline import OnlineDiarizer, PipelineConfig, _coerce, build_providers, parse_key_values
from .rttm import parse_rttm
from .stream import open_stream
from .timebase import Annotation


@dataclass(frozen=True)
class DevFile:
    uri: str
    reference: Annotation
    source: object  # frame array or SDFE path
    segmentation_path: Path | None = None
    embeddings_path: Path | None = None


def load_dev_dir(path: str | Path) -> list[DevFile]:
    """Every ``<uri>.rttm`` with a sibling ``<uri>.sdfe`` (and optional ``.sdsg`` / ``.sdem``)."""
    root = Path(path)
    files = []
    for rttm in sorted(root.glob("*.rttm")):
        uri = rttm.stem
        features = root / f"{uri}.sdfe"
        if not features.exists():
            continue
        read_matrix_header(features, FEATURES_MAGIC)
        seg, emb = root / f"{uri}.sdsg", root / f"{uri}.sdem"
        files.append(DevFile(uri, parse_rttm(rttm, uri=uri), features,
                             seg if seg.exists() else None, emb if emb.exists() else None))
    return files


def evaluate(config: PipelineConfig, item: DevFile) -> DerBreakdown:
    segmenter, embedder = build_providers(config, item.reference, item.segmentation_path,
                                          item.embeddings_path)
    diarizer = OnlineDiarizer(config, segmenter, embedder, item.uri)
    for window in open_stream(item.source, config.grid, config.pad_warmup):
        diarizer.step(window)
    return der(item.reference, diarizer.finish())


@dataclass
class TuneResult:
    best: PipelineConfig
    best_der: float
    table: list[tuple[dict, float]] = field(default_factory=list)  # grid point -> mean DER


def parse_grid(text: str) -> dict[str, list]:
    """``key = v1, v2, ...`` per line."""
    grid: dict[str, list] = {}
    for key, value, lineno in parse_key_values(text):
        items = [v for v in (p.strip() for p in value.split(",")) if v]
        if not items:
            raise ParseError(f"no values for {key}", lineno)
        grid[key] = [_coerce(key, v, lineno) for v in items]
    return grid


def tune(space: dict[str, Sequence], dev: Sequence[DevFile],
         base: PipelineConfig | None = None) -> TuneResult:
    """Exhaustive search minimizing mean DER; ties keep the earliest grid point."""
    if not dev:
        raise ValueError("empty development set")
    base = base or PipelineConfig()
    keys = list(space)
    result = None
    for values in itertools.product(*(space[k] for k in keys)):
        point = dict(zip(keys, values))
        config = base.replace(**point)
        mean = float(np.mean([evaluate(config, item).der for item in dev]))
        if result is None:
            result = TuneResult(config, mean)
        elif mean < result.best_der:
            result.best, result.best_der = config, mean
        result.table.append((point, mean))
    return result


@dataclass(frozen=True)
class BenchStats:
    steps: int
    mean: float
    p95: float
    max: float
    engine_mean: float
    engine_p95: float

    def as_dict(self) -> dict:
        return dict(steps=self.steps, mean=self.mean, p95=self.p95, max=self.max,
                    engine_mean=self.engine_mean, engine_p95=self.engine_p95)


def bench_step(config: PipelineConfig, source, repetitions: int = 1, reference=None,
               segmentation_path=None, embeddings_path=None,
               centroids: CentroidSet | None = None) -> BenchStats:
    """Wall-clock statistics of single steps over ``repetitions`` passes of the stream."""
    if repetitions < 1:
        raise ValueError("repetitions must be >= 1")
    total, engine = [], []
    for _ in range(repetitions):
        segmenter, embedder = build_providers(config, reference, segmentation_path, embeddings_path)
        start = centroids.copy() if centroids is not None else None
        diarizer = OnlineDiarizer(config, segmenter, embedder, centroids=start)
        for window in open_stream(source, config.grid, config.pad_warmup):
            report = diarizer.step(window)
            total.append(report.step_seconds)
            engine.append(report.engine_seconds)
        diarizer.finish()
    if not total:
        return BenchStats(0, 0.0, 0.0, 0.0, 0.0, 0.0)
    t, e = np.asarray(total), np.asarray(engine)
    return BenchStats(len(t), float(t.mean()), float(np.percentile(t, 95)), float(t.max()),
                      float(e.mean()), float(np.percentile(e, 95)))
