"""Live streaming sessions: one rolling buffer and one diarizer per client stream."""

from __future__ import annotations

import threading
import uuid

import numpy as np

from ..pipeline import OnlineDiarizer, PipelineConfig, StepReport, build_providers
from ..stream import RollingBuffer
from ..timebase import Annotation, Segment


class StreamSession:
    def __init__(self, config: PipelineConfig, uri: str, reference=None,
                 segmentation_path=None, embeddings_path=None):
        segmenter, embedder = build_providers(config, reference, segmentation_path, embeddings_path)
        self.id = uuid.uuid4().hex
        self.config = config
        self.uri = uri
        self._closed_turns: list[tuple[Segment, str]] = []
        self.diarizer = OnlineDiarizer(config, segmenter, embedder, uri,
                                       on_segment=lambda s, lab: self._closed_turns.append((s, lab)))
        self.buffer = RollingBuffer(config.grid, config.pad_warmup)
        self.lock = threading.Lock()
        self.annotation: Annotation | None = None

    def _drain(self) -> list[tuple[Segment, str]]:
        out, self._closed_turns = self._closed_turns, []
        return out

    def push(self, frames: np.ndarray) -> tuple[list[StepReport], list[tuple[Segment, str]]]:
        with self.lock:
            if self.annotation is not None:
                raise RuntimeError("session is closed")
            reports = [self.diarizer.step(w) for w in self.buffer.push(frames)]
            return reports, self._drain()

    def close(self) -> tuple[Annotation, list[tuple[Segment, str]]]:
        with self.lock:
            if self.annotation is None:
                for w in self.buffer.close():
                    self.diarizer.step(w)
                self.annotation = self.diarizer.finish()
            return self.annotation, self._drain()

    @property
    def windows(self) -> int:
        return len(self.diarizer.reports)


class SessionRegistry:
    def __init__(self):
        self._sessions: dict[str, StreamSession] = {}
        self._lock = threading.Lock()

    def add(self, session: StreamSession) -> StreamSession:
        with self._lock:
            self._sessions[session.id] = session
        return session

    def get(self, session_id: str) -> StreamSession:
        with self._lock:
            return self._sessions[session_id]

    def remove(self, session_id: str) -> None:
        with self._lock:
            del self._sessions[session_id]
