"""Viseme weight curves and their CSV form.

Serialized layout: a ``# fps=<float>`` comment, a ``frame,<label>,...`` header,
then one row per frame with weights at exactly six decimal places.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import DataError


@dataclass(frozen=True)
class Curve:
    fps: float
    labels: tuple[str, ...]
    weights: np.ndarray  # (frames, V)

    def __post_init__(self):
        if not self.fps > 0:
            raise DataError(f"curve fps must be positive, got {self.fps}")
        w = np.ascontiguousarray(np.asarray(self.weights, dtype=np.float64))
        if w.ndim != 2:
            raise DataError(f"curve weights must be 2-D, got shape {w.shape}")
        if w.shape[1] != len(self.labels):
            raise DataError(
                f"curve has {w.shape[1]} weight columns but {len(self.labels)} labels"
            )
        if not np.isfinite(w).all():
            raise DataError("curve weights must be finite")
        w.setflags(write=False)
        object.__setattr__(self, "weights", w)
        object.__setattr__(self, "labels", tuple(str(s) for s in self.labels))
        object.__setattr__(self, "fps", float(self.fps))

    @property
    def frame_count(self) -> int:
        return self.weights.shape[0]


def serialize_curve(curve: Curve) -> str:
    lines = [f"# fps={curve.fps!r}", "frame," + ",".join(curve.labels)]
    for j in range(curve.frame_count):
        row = ",".join(f"{v:.6f}" for v in curve.weights[j])
        lines.append(f"{j},{row}")
    return "\n".join(lines) + "\n"


def parse_curve(text: str, source: str = "<curve>") -> Curve:
    fps = None
    labels = None
    rows = []
    expect_frame = 0
    for lineno, raw in enumerate(text.splitlines(), start=1):
        line = raw.strip()
        if not line:
            continue
        if line.startswith("#"):
            body = line[1:].strip()
            if body.startswith("fps="):
                try:
                    fps = float(body[len("fps="):])
                except ValueError:
                    raise DataError(f"{source}:{lineno}: bad fps comment")
            continue
        if labels is None:
            cols = line.split(",")
            if not cols or cols[0] != "frame":
                raise DataError(f"{source}:{lineno}: header must start with 'frame'")
            labels = tuple(cols[1:])
            if not labels:
                raise DataError(f"{source}:{lineno}: header lists no visemes")
            continue
        cols = line.split(",")
        if len(cols) != len(labels) + 1:
            raise DataError(
                f"{source}:{lineno}: expected {len(labels) + 1} columns, got {len(cols)}"
            )
        try:
            frame = int(cols[0])
            values = [float(s) for s in cols[1:]]
        except ValueError:
            raise DataError(f"{source}:{lineno}: non-numeric cell")
        if frame != expect_frame:
            raise DataError(f"{source}:{lineno}: frame {frame} out of order")
        expect_frame += 1
        rows.append(values)
    if fps is None:
        raise DataError(f"{source}: missing '# fps=' comment")
    if labels is None:
        raise DataError(f"{source}: missing header row")
    weights = np.array(rows, dtype=np.float64).reshape(len(rows), len(labels))
    return Curve(fps=fps, labels=labels, weights=weights)


def read_curve(path) -> Curve:
    try:
        with open(path, "r", encoding="utf-8") as fh:
            return parse_curve(fh.read(), source=str(path))
    except OSError as exc:
        raise DataError(f"cannot read curve {path}: {exc}")


def write_curve(curve: Curve, path) -> None:
    from .atomicio import write_text

    write_text(path, serialize_curve(curve))


def resample_curve(curve: Curve, fps_out: float) -> Curve:
    """Linear resample onto frame instants j / fps_out, endpoints clamped.

    Output length preserves the clip span: ceil(n * fps_out / fps_in), with a
    tiny slack so integer rate ratios stay exact.
    """
    if not fps_out > 0:
        raise DataError(f"target fps must be positive, got {fps_out}")
    n = curve.frame_count
    if n == 0:
        return Curve(fps=fps_out, labels=curve.labels, weights=np.zeros((0, len(curve.labels))))
    if fps_out == curve.fps:
        return Curve(fps=fps_out, labels=curve.labels, weights=curve.weights.copy())
    n_out = max(1, math.ceil(n * fps_out / curve.fps - 1e-9))
    t_in = np.arange(n) / curve.fps
    t_out = np.arange(n_out) / fps_out
    out = np.empty((n_out, len(curve.labels)))
    for c in range(len(curve.labels)):
        out[:, c] = np.interp(t_out, t_in, curve.weights[:, c])
    return Curve(fps=fps_out, labels=curve.labels, weights=out)
