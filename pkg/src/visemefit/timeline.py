"""Phoneme alignments and the phoneme-to-viseme map.

Alignments are tab-separated ``phoneme<TAB>start<TAB>end`` rows in seconds.
Comment lines start with ``#``; a ``# duration=<seconds>`` comment extends the
timeline past the last segment (trailing silence).
"""

from __future__ import annotations

import math
from bisect import bisect_right
from dataclasses import dataclass, field

from .errors import DataError


@dataclass(frozen=True)
class PhonemeSegment:
    phoneme: str
    start: float
    end: float

    @property
    def duration(self) -> float:
        return self.end - self.start


@dataclass(frozen=True)
class Timeline:
    segments: tuple[PhonemeSegment, ...]
    duration: float

    def __post_init__(self):
        segs = tuple(self.segments)
        for s in segs:
            if not s.end > s.start:
                raise DataError(
                    f"segment {s.phoneme!r} has end {s.end} <= start {s.start}"
                )
            if s.start < 0:
                raise DataError(f"segment {s.phoneme!r} starts before 0")
        for a, b in zip(segs, segs[1:]):
            if b.start < a.end:
                raise DataError(
                    f"segments {a.phoneme!r} and {b.phoneme!r} overlap at {b.start}"
                )
        dur = float(self.duration)
        if segs and dur < segs[-1].end:
            raise DataError("timeline duration is shorter than its last segment")
        object.__setattr__(self, "segments", segs)
        object.__setattr__(self, "duration", dur)


def parse_alignment(text: str, source: str = "<alignment>") -> Timeline:
    segments = []
    duration = None
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("duration="):
                try:
                    duration = float(body[len("duration="):])
                except ValueError:
                    raise DataError(f"{source}:{lineno}: bad duration comment")
            continue
        parts = line.split("\t")
        if len(parts) != 3:
            raise DataError(
                f"{source}:{lineno}: expected phoneme<TAB>start<TAB>end, got {len(parts)} fields"
            )
        tok = parts[0].strip()
        if not tok:
            raise DataError(f"{source}:{lineno}: empty phoneme token")
        try:
            start, end = float(parts[1]), float(parts[2])
        except ValueError:
            raise DataError(f"{source}:{lineno}: non-numeric timestamp")
        if end <= start:
            raise DataError(f"{source}:{lineno}: end {end} <= start {start}")
        segments.append(PhonemeSegment(tok, start, end))
    segments.sort(key=lambda s: s.start)
    for a, b in zip(segments, segments[1:]):
        if b.start < a.end:
            raise DataError(
                f"{source}: segments {a.phoneme!r} and {b.phoneme!r} overlap at {b.start}"
            )
    if duration is None:
        duration = segments[-1].end if segments else 0.0
    return Timeline(tuple(segments), duration)


def serialize_timeline(t: Timeline) -> str:
    lines = [f"# duration={t.duration!r}"]
    for s in t.segments:
        lines.append(f"{s.phoneme}\t{float(s.start)!r}\t{float(s.end)!r}")
    return "\n".join(lines) + "\n"


def read_alignment(path) -> Timeline:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_alignment(fh.read(), source=str(path))
    except OSError as exc:
        raise DataError(f"cannot read alignment {path}: {exc}")


@dataclass(frozen=True)
class PhonemeVisemeMap:
    """Total map from phoneme tokens to viseme indices, plus silence tokens."""

    labels: tuple[str, ...]
    entries: dict[str, int] = field(default_factory=dict)
    silence: frozenset[str] = frozenset()

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        object.__setattr__(self, "silence", frozenset(self.silence))
        for tok, idx in self.entries.items():
            if not 0 <= idx < len(self.labels):
                raise DataError(f"map entry {tok!r} points at viseme index {idx} out of range")
            if tok in self.silence:
                raise DataError(f"token {tok!r} is both mapped and silence")


def parse_viseme_map(text: str, labels=None, source: str = "<map>") -> PhonemeVisemeMap:
    """Parse ``phoneme=LABEL`` lines plus one ``silence=tok,tok,...`` line.

    When ``labels`` is None the label order is first appearance in the file;
    otherwise every label must belong to the given set (e.g. the rig's).
    """
    raw_entries: list[tuple[str, str]] = []
    silence: set[str] = set()
    for lineno, rawline in enumerate(text.splitlines(), start=1):
        line = rawline.strip()
        if not line or line.startswith("#"):
            continue
        if "=" not in line:
            raise DataError(f"{source}:{lineno}: expected key=value")
        key, value = (s.strip() for s in line.split("=", 1))
        if key == "silence":
            silence.update(tok.strip() for tok in value.split(",") if tok.strip())
        elif key:
            raw_entries.append((key, value))
        else:
            raise DataError(f"{source}:{lineno}: empty phoneme token")
    if labels is None:
        ordered: list[str] = []
        for _, label in raw_entries:
            if label not in ordered:
                ordered.append(label)
        labels = tuple(ordered)
    else:
        labels = tuple(labels)
    index = {label: i for i, label in enumerate(labels)}
    entries: dict[str, int] = {}
    for tok, label in raw_entries:
        if label not in index:
            raise DataError(f"{source}: viseme label {label!r} not in the configured label set")
        entries[tok] = index[label]
    return PhonemeVisemeMap(labels=labels, entries=entries, silence=frozenset(silence))


def read_viseme_map(path, labels=None) -> PhonemeVisemeMap:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_viseme_map(fh.read(), labels=labels, source=str(path))
    except OSError as exc:
        raise DataError(f"cannot read viseme map {path}: {exc}")


def viseme_of(phoneme: str, vmap: PhonemeVisemeMap) -> int | None:
    """Viseme index for a phoneme token, None for silence, DataError for unknown."""
    if phoneme in vmap.silence:
        return None
    if phoneme in vmap.entries:
        return vmap.entries[phoneme]
    raise DataError(f"phoneme {phoneme!r} is not in the viseme map")


def frame_count(duration: float, fps: float) -> int:
    if fps <= 0:
        raise DataError(f"fps must be positive, got {fps}")
    return max(0, math.ceil(duration * fps))


def sample_frames(timeline: Timeline, fps: float, vmap: PhonemeVisemeMap | None = None):
    """Per-frame phoneme tokens sampled at frame centers (j + 0.5) / fps.

    A frame gets the segment containing its center time (start inclusive, end
    exclusive), else None for silence. With a map given, every sampled token is
    validated against it up front.
    """
    n = frame_count(timeline.duration, fps)
    starts = [s.start for s in timeline.segments]
    out: list[str | None] = []
    for j in range(n):
        t = (j + 0.5) / fps
        k = bisect_right(starts, t) - 1
        if k >= 0 and t < timeline.segments[k].end:
            tok = timeline.segments[k].phoneme
            if vmap is not None:
                viseme_of(tok, vmap)  # raises on unmapped tokens
            out.append(tok)
        else:
            out.append(None)
    return out
