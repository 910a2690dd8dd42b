"""RTTM reading and writing."""

from __future__ import annotations

import io
from pathlib import Path
from typing import IO, Iterable

from .errors import ParseError
from .timebase import Annotation, Segment


def format_rttm_line(uri: str, seg: Segment, label: str) -> str:
    return f"SPEAKER {uri} 1 {seg.onset:.3f} {seg.duration:.3f} <NA> <NA> {label} <NA> <NA>\n"


def write_rttm(annotation: Annotation, sink: str | Path | IO[str]) -> None:
    for _, label in annotation:
        if not label or any(c.isspace() for c in label):
            raise ValueError(f"label {label!r} cannot be written to RTTM")
    if any(c.isspace() for c in annotation.uri) or (annotation.segments and not annotation.uri):
        raise ValueError(f"uri {annotation.uri!r} cannot be written to RTTM")
    text = "".join(format_rttm_line(annotation.uri, seg, lab) for seg, lab in annotation)
    if isinstance(sink, (str, Path)):
        Path(sink).write_text(text)
    else:
        sink.write(text)


def rttm_string(annotation: Annotation) -> str:
    buf = io.StringIO()
    write_rttm(annotation, buf)
    return buf.getvalue()


def _lines(source) -> Iterable[str]:
    # a str is RTTM text when it is empty, multi-line or starts like a record
    if isinstance(source, str) and (not source.strip() or "\n" in source
                                    or source.lstrip().startswith(("SPEAKER", "#"))):
        return source.splitlines()
    if isinstance(source, (str, Path)):
        return Path(source).read_text().splitlines()
    return source.read().splitlines()


def load_rttm(source) -> dict[str, Annotation]:
    """Parse every recording in an RTTM path, text or file object."""
    per_uri: dict[str, list] = {}
    for lineno, line in enumerate(_lines(source), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        fields = line.split()
        if len(fields) < 8 or fields[0] != "SPEAKER":
            raise ParseError(f"not a SPEAKER record: {line!r}", lineno)
        try:
            onset, duration = float(fields[3]), float(fields[4])
        except ValueError:
            raise ParseError(f"bad onset/duration in {line!r}", lineno) from None
        if onset < 0 or duration < 0:
            raise ParseError("negative onset or duration", lineno)
        per_uri.setdefault(fields[1], [])
        if duration > 0:
            per_uri[fields[1]].append((Segment(onset, duration), fields[7]))
    return {uri: Annotation(uri, tuple(items)) for uri, items in per_uri.items()}


def parse_rttm(source, uri: str | None = None) -> Annotation:
    """Parse a single-recording RTTM; an empty source yields an empty annotation."""
    found = load_rttm(source)
    if uri is not None:
        return found.get(uri, Annotation(uri))
    if not found:
        return Annotation("")
    if len(found) > 1:
        raise ParseError(f"RTTM holds {len(found)} recordings; pass uri= to pick one")
    return next(iter(found.values()))
