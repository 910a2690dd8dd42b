"""Synthetic conversations with oracle frame features, for closed-loop runs."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .containers import FEATURES_MAGIC, write_matrix
from .pooling import random_signatures, stream_features
from .rttm import write_rttm
from .segmentation import OracleSegmenter, write_segmentation
from .stream import open_stream
from .timebase import Annotation, FrameGrid, Segment, annotation_total_speech, time_to_frame


def generate_conversation(n_speakers: int, duration: float, overlap: float = 0.1, seed: int = 0,
                          uri: str = "fixture", min_turn: float = 1.0, max_turn: float = 6.0,
                          max_gap: float = 0.6) -> Annotation:
    """Random turn-taking among ``n_speakers``.

    About ``overlap`` of the speech time is overlapped. Overlap only happens
    between consecutive turns, so at most two speakers talk at once.
    """
    if n_speakers < 1 or duration <= 0:
        raise ValueError("need at least one speaker and a positive duration")
    if not 0 <= overlap < 1:
        raise ValueError("overlap ratio must lie in [0, 1)")
    rng = np.random.default_rng(seed)
    mean_turn = (min_turn + max_turn) / 2
    # clipping below shortens the average overlap to roughly 87% of ov_mean
    ov_mean = 0.9
    p_overlap = overlap * mean_turn / (0.87 * ov_mean * (1 + overlap))
    if p_overlap > 1:
        ov_mean, p_overlap = ov_mean * p_overlap, 1.0
    if n_speakers == 1:
        p_overlap = 0.0

    turns: list[tuple[float, float, int]] = []
    t = float(rng.uniform(0.0, max_gap))
    prev_start = prev_end = guard = 0.0  # guard: end of the turn before the previous one
    prev_spk = -1
    while t < duration - 0.2:
        choices = [s for s in range(n_speakers) if s != prev_spk] or [0]
        spk = int(rng.choice(choices))
        length = float(rng.uniform(min_turn, max_turn))
        start = t
        if turns and rng.random() < p_overlap:
            room = prev_end - max(prev_start, guard)
            ov = min(ov_mean * float(rng.uniform(0.4, 1.6)), 0.8 * room, 0.8 * length)
            if ov > 0.05:
                start = prev_end - ov
        # millisecond boundaries survive the RTTM round trip exactly
        start, end = round(start, 3), round(min(start + length, duration), 3)
        turns.append((start, end, spk))
        guard = prev_end
        prev_start, prev_end, prev_spk = start, end, spk
        t = end + float(rng.uniform(0.05, max_gap))
    items = [(Segment(s, round(e - s, 3)), f"spk{k}") for s, e, k in turns if e - s > 0]
    return Annotation(uri, tuple(items))


def overlap_ratio(annotation: Annotation) -> float:
    """Overlapped time over speech time (union across speakers)."""
    points = sorted({p for seg, _ in annotation for p in (seg.onset, seg.end)})
    timelines = annotation.timelines().values()
    speech = over = 0.0
    for a, b in zip(points, points[1:]):
        mid = (a + b) / 2
        n = sum(any(s <= mid < e for s, e in tl) for tl in timelines)
        if n >= 1:
            speech += b - a
        if n >= 2:
            over += b - a
    return over / speech if speech else 0.0


@dataclass(frozen=True)
class Fixture:
    reference: Annotation
    signatures: dict[str, np.ndarray]
    features: np.ndarray  # (frames, dim)
    noise_sigma: float
    grid: FrameGrid

    @property
    def uri(self) -> str:
        return self.reference.uri

    @property
    def duration(self) -> float:
        return len(self.features) * self.grid.frame_step


def build_fixture(n_speakers: int, duration: float, overlap: float = 0.1,
                  noise_sigma: float = 0.0, seed: int = 0, dim: int = 32, shared: float = 0.0,
                  grid: FrameGrid | None = None, uri: str | None = None, **turns) -> Fixture:
    """Conversation plus oracle frame features; ``shared`` makes speakers sound alike."""
    grid = grid or FrameGrid()
    uri = uri or f"fixture{seed}"
    reference = generate_conversation(n_speakers, duration, overlap, seed, uri, **turns)
    rng = np.random.default_rng([seed, 7])
    sig = random_signatures(n_speakers, dim, rng, shared)
    signatures = {f"spk{i}": sig[i] for i in range(n_speakers)}
    n_frames = time_to_frame(grid, duration)
    features = stream_features(reference, n_frames, signatures, noise_sigma, grid, rng)
    return Fixture(reference, signatures, features, noise_sigma, grid)


def write_fixture(fixture: Fixture, out_dir: str | Path, k_max: int = 4, pad_warmup: bool = True,
                  seed: int = 0, with_segmentation: bool = True) -> dict[str, Path]:
    """Write ``<uri>.rttm``, ``<uri>.sdfe``, ``<uri>.sig.npy`` and optionally ``<uri>.sdsg``."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    paths = {
        "reference": out / f"{fixture.uri}.rttm",
        "features": out / f"{fixture.uri}.sdfe",
        "signatures": out / f"{fixture.uri}.sig.npy",
    }
    write_rttm(fixture.reference, paths["reference"])
    write_matrix(paths["features"], FEATURES_MAGIC, fixture.features, fixture.grid.frame_step)
    labels = sorted(fixture.signatures)
    np.save(paths["signatures"], np.stack([fixture.signatures[lab] for lab in labels]))
    if with_segmentation:
        oracle = OracleSegmenter(fixture.reference, fixture.grid, k_max, seed)
        blocks = [oracle.segment(w) for w in open_stream(fixture.features, fixture.grid, pad_warmup)]
        if blocks:
            paths["segmentation"] = out / f"{fixture.uri}.sdsg"
            write_segmentation(paths["segmentation"], blocks, fixture.grid.frame_step)
    return paths


def describe(fixture: Fixture) -> dict:
    ref = fixture.reference
    return {
        "uri": fixture.uri,
        "duration": fixture.duration,
        "speakers": len(ref.labels()),
        "turns": len(ref),
        "speech": annotation_total_speech(ref),
        "overlap_ratio": overlap_ratio(ref),
    }
