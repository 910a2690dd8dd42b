"""Incremental clustering of local speakers into global speaker centroids."""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Sequence

import numpy as np
from scipy.optimize import linear_sum_assignment

from .containers import read_centroids, write_centroids
from .errors import DegenerateVector
from .pooling import SpeakerEmbedding

# Two candidate mappings whose total costs differ by less than this are tied.
TIE_TOL = 1e-9


@dataclass
class CentroidSet:
    """Global speakers, each stored as the running sum of its assigned unit embeddings."""

    sums: np.ndarray = field(default_factory=lambda: np.zeros((0, 0)))
    counts: list[int] = field(default_factory=list)
    labels: list[str] = field(default_factory=list)

    @property
    def size(self) -> int:
        return len(self.labels)

    @property
    def dim(self) -> int | None:
        return self.sums.shape[1] if self.size else None

    def copy(self) -> CentroidSet:
        return CentroidSet(self.sums.copy(), list(self.counts), list(self.labels))

    def append(self, vector: np.ndarray) -> str:
        vector = np.asarray(vector, dtype=np.float64)
        if self.size == 0:
            self.sums = vector[None, :].copy()
        else:
            if vector.shape != (self.sums.shape[1],):
                raise ValueError(f"embedding dimension {vector.shape} != {self.sums.shape[1]}")
            self.sums = np.vstack([self.sums, vector])
        label = f"speaker_{self.size}"
        while label in self.labels:
            label += "_"
        self.counts.append(1)
        self.labels.append(label)
        return label

    def update(self, index: int, vector: np.ndarray) -> None:
        self.sums[index] += vector
        self.counts[index] += 1

    def save(self, path: str | Path) -> None:
        write_centroids(path, self.sums if self.size else np.zeros((0, 0)), self.counts, self.labels)

    @classmethod
    def load(cls, path: str | Path) -> CentroidSet:
        sums, counts, labels = read_centroids(path)
        return cls(sums, counts, labels)


@dataclass(frozen=True)
class AssignmentResult:
    """``mapping[k]`` is a centroid index, or ``None`` for a new speaker."""

    mapping: tuple[int | None, ...]
    distances: tuple[float, ...]  # nan where unmapped

    def cost(self) -> float:
        return float(sum(d for m, d in zip(self.mapping, self.distances) if m is not None))


def cosine_distance(c: np.ndarray, e: np.ndarray) -> float:
    c, e = np.asarray(c, dtype=np.float64), np.asarray(e, dtype=np.float64)
    nc, ne = np.linalg.norm(c), np.linalg.norm(e)
    if not (nc > 0 and ne > 0):
        raise DegenerateVector("cosine distance of a zero vector")
    return float(np.clip(1.0 - (c @ e) / (nc * ne), 0.0, 2.0))


def distance_matrix(centroids: CentroidSet, embeddings: Sequence[SpeakerEmbedding] | np.ndarray
                    ) -> np.ndarray:
    """``(K_buffer, K)`` cosine distances between local embeddings and centroid directions."""
    E = _as_matrix(embeddings)
    if centroids.size == 0:
        return np.zeros((len(E), 0))
    C = centroids.sums
    nc = np.linalg.norm(C, axis=1)
    ne = np.linalg.norm(E, axis=1) if len(E) else np.ones(0)
    if np.any(nc <= 0) or np.any(ne <= 0):
        raise DegenerateVector("zero-norm centroid or embedding")
    sim = (E / ne[:, None]) @ (C / nc[:, None]).T
    return np.clip(1.0 - sim, 0.0, 2.0)


def _as_matrix(embeddings) -> np.ndarray:
    if isinstance(embeddings, np.ndarray):
        return np.atleast_2d(embeddings).astype(np.float64)
    if not embeddings:
        return np.zeros((0, 0))
    return np.stack([np.asarray(e.vector, dtype=np.float64) for e in embeddings])


def naive_assign(dist: np.ndarray) -> AssignmentResult:
    """Every local goes to its closest centroid; lowest index wins ties."""
    dist = np.asarray(dist, dtype=np.float64)
    if dist.shape[1] == 0:
        raise ValueError("naive assignment needs at least one centroid")
    best = dist.argmin(axis=1)
    return AssignmentResult(tuple(int(j) for j in best),
                            tuple(float(dist[k, j]) for k, j in enumerate(best)))


def _optimal_cost(cost: np.ndarray) -> float:
    if cost.shape[0] == 0:
        return 0.0
    rows, cols = linear_sum_assignment(cost)
    return float(cost[rows, cols].sum())


def constrained_assign(dist: np.ndarray) -> AssignmentResult:
    """Minimum-cost injective mapping of locals (rows) to centroids (columns).

    When there are more locals than centroids, the locals left without a
    column are new speakers. Among optimal mappings the lexicographically
    smallest is returned, comparing centroid indices row by row with "new
    speaker" ranked after every centroid.
    """
    dist = np.asarray(dist, dtype=np.float64)
    n, k = dist.shape
    if n == 0:
        return AssignmentResult((), ())
    if k == 0:
        return AssignmentResult((None,) * n, (float("nan"),) * n)

    # n interchangeable "new speaker" columns; the penalty exceeds any real
    # cost total, so the number of real matches is always min(n, k).
    penalty = 2.0 * n + 1.0
    aug = np.hstack([dist, np.full((n, n), penalty)])
    best = _optimal_cost(aug)

    mapping: list[int | None] = []
    used = np.zeros(k, dtype=bool)
    spent = 0.0
    dummies_left = n
    for row in range(n):
        rest_rows = slice(row + 1, n)
        chosen = None
        candidates = [j for j in range(k) if not used[j]] + ([None] if dummies_left else [])
        for j in candidates:
            if spent + (penalty if j is None else dist[row, j]) > best + TIE_TOL:
                continue  # remaining costs are non-negative
            if j is None:
                cols = np.hstack([dist[rest_rows][:, ~used], np.full((n - row - 1, dummies_left - 1), penalty)])
                total = spent + penalty + _optimal_cost(cols)
            else:
                used[j] = True
                cols = np.hstack([dist[rest_rows][:, ~used], np.full((n - row - 1, dummies_left), penalty)])
                total = spent + dist[row, j] + _optimal_cost(cols)
                used[j] = False
            if total <= best + TIE_TOL:
                chosen = j
                break
        if chosen is None:
            spent += penalty
            dummies_left -= 1
        else:
            used[chosen] = True
            spent += dist[row, chosen]
        mapping.append(chosen)
    distances = tuple(float(dist[r, j]) if j is not None else float("nan") for r, j in enumerate(mapping))
    return AssignmentResult(tuple(mapping), distances)


@dataclass(frozen=True)
class StepOutcome:
    assignment: AssignmentResult  # None for every local that became a new speaker
    centroids: CentroidSet
    label_map: dict[int, str]  # local channel -> global label
    new_speakers: tuple[str, ...]
    updated: tuple[str, ...]


def step_update(centroids: CentroidSet, embeddings: Sequence[SpeakerEmbedding], delta_new: float,
                rho_update: float, frame_step: float) -> StepOutcome:
    """Map one window's local speakers onto ``centroids`` (mutated in place).

    Locals that end up unmatched, or matched farther than ``delta_new``, become
    new centroids. A matched local refines its centroid only when its activity
    lasts longer than ``rho_update`` seconds.
    """
    embeddings = list(embeddings)
    result = constrained_assign(distance_matrix(centroids, embeddings))
    label_map: dict[int, str] = {}
    updated = []
    fresh = []
    for emb, target, d in zip(embeddings, result.mapping, result.distances):
        if target is None or d > delta_new:
            fresh.append(emb)
            continue
        label_map[emb.channel] = centroids.labels[target]
        if emb.duration(frame_step) > rho_update:
            centroids.update(target, emb.vector)
            updated.append(centroids.labels[target])
    # creation order must not depend on channel numbering
    fresh.sort(key=lambda e: (-e.activity_mass, tuple(e.vector)))
    new_labels = []
    for emb in fresh:
        label = centroids.append(emb.vector)
        label_map[emb.channel] = label
        new_labels.append(label)
    fresh_channels = {e.channel for e in fresh}
    final = tuple(None if e.channel in fresh_channels else m
                  for e, m in zip(embeddings, result.mapping))
    return StepOutcome(AssignmentResult(final, result.distances), centroids, label_map,
                       tuple(new_labels), tuple(updated))
