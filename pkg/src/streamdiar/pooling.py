"""Overlap-aware frame weighting and weighted statistics pooling."""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Protocol

import numpy as np

from .containers import read_embeddings
from .errors import EmptySupport, ProviderError
from .segmentation import LocalSpeakers, SegmentationMatrix, rasterize
from .stream import BufferWindow, FrameFeatures
from .timebase import Annotation, FrameGrid

VAR_EPS = 1e-9


@dataclass(frozen=True)
class PoolingWeights:
    weights: np.ndarray  # (F, k_max)
    beta: float | None = None
    gamma: float | None = None


@dataclass(frozen=True)
class SpeakerEmbedding:
    vector: np.ndarray
    activity_mass: float  # sum of raw activity probabilities, in frames
    channel: int

    def duration(self, frame_step: float) -> float:
        return self.activity_mass * frame_step


def overlap_weights(seg: SegmentationMatrix | np.ndarray, beta: float = 10.0,
                    gamma: float = 3.0) -> PoolingWeights:
    """Down-weight frames where several channels are active or confidence is low.

    ``w[f, k] = (s[f, k] * softmax(beta * s[f])[k]) ** gamma``, the softmax
    taken over every channel of frame ``f``.
    """
    if gamma < 1:
        raise ValueError("gamma must be >= 1")
    s = np.asarray(getattr(seg, "probs", seg), dtype=np.float64)
    if s.size == 0:
        return PoolingWeights(s.copy(), beta, gamma)
    z = beta * s
    z = z - z.max(axis=1, keepdims=True)
    soft = np.exp(z)
    soft /= soft.sum(axis=1, keepdims=True)
    return PoolingWeights((s * soft) ** gamma, beta, gamma)


def direct_weights(seg: SegmentationMatrix | np.ndarray) -> PoolingWeights:
    return PoolingWeights(np.array(getattr(seg, "probs", seg), dtype=np.float64))


def weighted_stats_pool(features: FrameFeatures | np.ndarray,
                        weights: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Weighted mean and unbiased weighted standard deviation of the frames.

    The variance uses the reliability-weights correction
    ``sum(w) - sum(w**2) / sum(w)``; when that is at most ``VAR_EPS`` the
    standard deviation is reported as zero.
    """
    x = np.asarray(getattr(features, "frames", features), dtype=np.float64)
    w = np.asarray(weights, dtype=np.float64)
    total = w.sum()
    if not total > 0:
        raise EmptySupport("weight column sums to zero")
    mu = w @ x / total
    denom = total - (w @ w) / total
    if denom <= VAR_EPS:
        return mu, np.zeros_like(mu)
    var = w @ (x - mu) ** 2 / denom
    return mu, np.sqrt(np.maximum(var, 0.0))


def _unit(v: np.ndarray) -> np.ndarray:
    norm = np.linalg.norm(v)
    if not norm > 0:
        raise EmptySupport("pooled statistics are all zero")
    return v / norm


def embed_locals(features: FrameFeatures | np.ndarray, weights: PoolingWeights,
                 locals_: LocalSpeakers, seg: SegmentationMatrix | np.ndarray,
                 projection: Callable[[np.ndarray], np.ndarray] | None = None,
                 ) -> list[SpeakerEmbedding]:
    """One unit-norm embedding per active channel, pooled over the whole window."""
    s = np.asarray(getattr(seg, "probs", seg))
    out = []
    for k in locals_.active:
        mu, sigma = weighted_stats_pool(features, weights.weights[:, k])
        stats = np.concatenate([mu, sigma])
        if projection is not None:
            stats = np.asarray(projection(stats), dtype=np.float64)
        out.append(SpeakerEmbedding(_unit(stats), float(s[:, k].sum()), k))
    return out


class EmbeddingProvider(Protocol):
    def embed(self, window: BufferWindow, seg: SegmentationMatrix, weights: PoolingWeights,
              locals_: LocalSpeakers) -> list[SpeakerEmbedding]:
        ...


class PoolingEmbedder:
    """Pools the window's frame features; the projection head defaults to identity."""

    def __init__(self, projection: Callable[[np.ndarray], np.ndarray] | None = None):
        self.projection = projection

    def embed(self, window, seg, weights, locals_):
        return embed_locals(window.features, weights, locals_, seg, self.projection)


class FileEmbedder:
    """Precomputed per-window embeddings from an SDEM file (pooling is bypassed)."""

    def __init__(self, path: str | Path):
        self.path = Path(path)
        self.dim, self._windows = read_embeddings(self.path)

    def embed(self, window, seg, weights, locals_):
        if window.window_index >= len(self._windows):
            raise ProviderError(f"{self.path} holds only {len(self._windows)} windows",
                                window.window_index)
        channels, vectors = self._windows[window.window_index]
        row = {c: i for i, c in enumerate(channels)}
        out = []
        for k in locals_.active:
            if k not in row:
                raise ProviderError(f"no embedding for active channel {k}", window.window_index)
            out.append(SpeakerEmbedding(_unit(vectors[row[k]]), float(seg.probs[:, k].sum()), k))
        return out


# -- oracle frame features --------------------------------------------------------

def random_signatures(n: int, dim: int, rng: np.random.Generator,
                      shared: float = 0.0) -> np.ndarray:
    """``n`` random unit vectors; ``shared`` in [0, 1) mixes in a common direction
    so that the expected pairwise cosine is roughly ``shared``."""
    common = rng.standard_normal(dim)
    common /= np.linalg.norm(common)
    own = rng.standard_normal((n, dim))
    own /= np.linalg.norm(own, axis=1, keepdims=True)
    sig = np.sqrt(shared) * common + np.sqrt(1.0 - shared) * own
    return sig / np.linalg.norm(sig, axis=1, keepdims=True)


def synthesize_frames(activity: np.ndarray, signatures: np.ndarray, noise_sigma: float,
                      rng: np.random.Generator) -> np.ndarray:
    """Frame = normalized sum of active signatures + isotropic noise of total scale ``noise_sigma``.

    ``activity`` is ``(frames, speakers)`` binary. Noise has per-dimension
    standard deviation ``noise_sigma / sqrt(D)``, so its expected norm is about
    ``noise_sigma``.
    """
    mix = activity.astype(np.float64) @ signatures
    norms = np.linalg.norm(mix, axis=1, keepdims=True)
    np.divide(mix, norms, out=mix, where=norms > 0)
    if noise_sigma > 0:
        dim = signatures.shape[1]
        mix += rng.standard_normal(mix.shape) * (noise_sigma / np.sqrt(dim))
    return mix


def oracle_frame_features(reference: Annotation, window: BufferWindow,
                          signatures: dict[str, np.ndarray], noise_sigma: float,
                          grid: FrameGrid, rng: np.random.Generator | None = None) -> FrameFeatures:
    labels = sorted(signatures)
    activity = rasterize(reference, grid, window.start_frame, window.num_frames, labels)
    sig = np.stack([np.asarray(signatures[lab], dtype=np.float64) for lab in labels])
    frames = synthesize_frames(activity, sig, noise_sigma, rng or np.random.default_rng(0))
    frames[:window.padded_frames] = 0.0
    return FrameFeatures(frames, window.start_time)


def stream_features(reference: Annotation, num_frames: int, signatures: dict[str, np.ndarray],
                    noise_sigma: float, grid: FrameGrid, rng: np.random.Generator) -> np.ndarray:
    """Oracle features for a whole recording (frames ``[0, num_frames)``)."""
    labels = sorted(signatures)
    activity = rasterize(reference, grid, 0, num_frames, labels)
    sig = np.stack([np.asarray(signatures[lab], dtype=np.float64) for lab in labels])
    return synthesize_frames(activity, sig, noise_sigma, rng)
