"""Overlap-aware online speaker diarization over a rolling buffer."""

__version__ = "0.1.0"
