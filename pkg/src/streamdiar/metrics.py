"""Diarization error rate without collar, overlapped speech included."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

from .errors import UriMismatch
from .timebase import Annotation, annotation_total_speech


@dataclass(frozen=True)
class DerBreakdown:
    false_alarm: float
    missed: float
    confusion: float
    total_reference: float

    @property
    def errors(self) -> float:
        return self.false_alarm + self.missed + self.confusion

    @property
    def der(self) -> float:
        if self.total_reference > 0:
            return self.errors / self.total_reference
        return 0.0 if self.errors == 0 else float("inf")

    def __add__(self, other: DerBreakdown) -> DerBreakdown:
        return DerBreakdown(self.false_alarm + other.false_alarm, self.missed + other.missed,
                            self.confusion + other.confusion,
                            self.total_reference + other.total_reference)


@dataclass
class _Timeline:
    bounds: np.ndarray  # region edges
    ref: np.ndarray  # (regions, ref labels) bool
    hyp: np.ndarray  # (regions, hyp labels) bool
    ref_labels: list[str]
    hyp_labels: list[str]

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.bounds)


def _activity(timelines: dict[str, list[tuple[float, float]]], bounds: np.ndarray) -> np.ndarray:
    out = np.zeros((max(len(bounds) - 1, 0), len(timelines)), dtype=bool)
    for j, intervals in enumerate(timelines.values()):
        for s, e in intervals:
            out[np.searchsorted(bounds, s):np.searchsorted(bounds, e), j] = True
    return out


def _partition(ref: Annotation, hyp: Annotation, extra=()) -> _Timeline:
    rt, ht = ref.timelines(), hyp.timelines()
    points = [p for tl in (*rt.values(), *ht.values()) for iv in tl for p in iv]
    bounds = np.unique(np.asarray(points + list(extra), dtype=np.float64))
    return _Timeline(bounds, _activity(rt, bounds), _activity(ht, bounds), list(rt), list(ht))


def _cooccurrence(tl: _Timeline) -> np.ndarray:
    """(ref labels, hyp labels) seconds during which both speak."""
    return (tl.ref * tl.lengths[:, None]).T.astype(np.float64) @ tl.hyp.astype(np.float64)


def _mapping_from(tl: _Timeline) -> dict[str, str]:
    if not tl.ref_labels or not tl.hyp_labels:
        return {}
    overlap = _cooccurrence(tl)
    rows, cols = linear_sum_assignment(overlap, maximize=True)
    return {tl.hyp_labels[c]: tl.ref_labels[r] for r, c in zip(rows, cols) if overlap[r, c] > 0}


def optimal_label_mapping(ref: Annotation, hyp: Annotation) -> dict[str, str]:
    """One-to-one hypothesis-to-reference mapping maximizing matched speech time."""
    return _mapping_from(_partition(ref, hyp))


def _region_errors(tl: _Timeline, mapping: dict[str, str]) -> tuple[np.ndarray, ...]:
    n_ref = tl.ref.sum(axis=1)
    n_hyp = tl.hyp.sum(axis=1)
    matched = np.zeros(len(tl.lengths), dtype=np.int64)
    ref_col = {lab: i for i, lab in enumerate(tl.ref_labels)}
    for j, h in enumerate(tl.hyp_labels):
        r = mapping.get(h)
        if r in ref_col:
            matched += tl.hyp[:, j] & tl.ref[:, ref_col[r]]
    length = tl.lengths
    missed = length * np.maximum(0, n_ref - n_hyp)
    false_alarm = length * np.maximum(0, n_hyp - n_ref)
    confusion = length * (np.minimum(n_ref, n_hyp) - matched)
    return false_alarm, missed, confusion, length * n_ref


def _check_uri(ref: Annotation, hyp: Annotation) -> None:
    if ref.uri != hyp.uri:
        raise UriMismatch(f"reference {ref.uri!r} vs hypothesis {hyp.uri!r}")


def der(ref: Annotation, hyp: Annotation, mapping: dict[str, str] | None = None) -> DerBreakdown:
    """False alarm, missed detection and confusion in seconds.

    With ``mapping=None`` the optimal one-to-one label mapping is used.
    """
    _check_uri(ref, hyp)
    tl = _partition(ref, hyp)
    if mapping is None:
        mapping = _mapping_from(tl)
    fa, miss, conf, _ = _region_errors(tl, mapping)
    return DerBreakdown(float(fa.sum()), float(miss.sum()), float(conf.sum()),
                        annotation_total_speech(ref))


def local_der_curve(ref: Annotation, hyp: Annotation, bin_duration: float,
                    ) -> list[tuple[float, DerBreakdown]]:
    """Error components per consecutive bin, under the mapping optimal for the whole file."""
    if not bin_duration > 0:
        raise ValueError("bin duration must be positive")
    _check_uri(ref, hyp)
    mapping = optimal_label_mapping(ref, hyp)
    end = max(ref.end(), hyp.end())
    n_bins = int(np.ceil(end / bin_duration)) if end > 0 else 0
    edges = np.arange(n_bins + 1) * bin_duration
    tl = _partition(ref, hyp, extra=edges)
    fa, miss, conf, speech = _region_errors(tl, mapping)
    mids = (tl.bounds[:-1] + tl.bounds[1:]) / 2
    which = np.minimum((mids // bin_duration).astype(np.int64), max(n_bins - 1, 0))

    def per_bin(v):
        return np.bincount(which, weights=v, minlength=n_bins) if len(v) else np.zeros(n_bins)

    cols = [per_bin(v) for v in (fa, miss, conf, speech)]
    return [(float(edges[i]), DerBreakdown(*(float(c[i]) for c in cols))) for i in range(n_bins)]
