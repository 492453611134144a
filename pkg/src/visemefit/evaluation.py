"""Metrics for fitted and procedural curves.

keypoint_error reports per-frame mean pixel distance between projected bound
vertices and observed landmarks. lip_distance_curves tracks the horizontal
and vertical lip openings on the baked mesh in model units. total_variation
sums absolute frame-to-frame weight changes per viseme.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .camera import Pose, project
from .curves import Curve
from .errors import DataError
from .rig import Rig, blend_vertices


@dataclass(frozen=True)
class MetricSeries:
    name: str
    fps: float
    values: np.ndarray

    def __post_init__(self):
        v = np.asarray(self.values, dtype=np.float64).reshape(-1)
        if v.size and not np.all(np.isfinite(v)):
            raise DataError(f"metric {self.name!r} contains non-finite values")
        v.setflags(write=False)
        object.__setattr__(self, "values", v)


def keypoint_error(rig: Rig, curve: Curve, poses, observations, subset=None) -> MetricSeries:
    """Mean Euclidean pixel error of bound landmarks, one value per frame.

    observations maps frame index to an object with parallel landmark_ids and
    landmark_points arrays. subset restricts to those landmark ids; landmarks
    missing from a frame are skipped, and a frame where every requested id is
    missing (or unbound) is an error.
    """
    n = curve.frame_count
    if len(poses) < n:
        raise DataError(f"curve has {n} frames but only {len(poses)} poses")
    wanted = None if subset is None else frozenset(int(i) for i in subset)
    values = np.zeros(n)
    for j in range(n):
        obs = observations.get(j)
        obs_points: dict[int, np.ndarray] = {}
        if obs is not None:
            for lid, pt in zip(obs.landmark_ids, obs.landmark_points):
                obs_points[int(lid)] = pt
        verts, targets = [], []
        for lid, vi in rig.landmark_bindings.items():
            if wanted is not None and lid not in wanted:
                continue
            pt = obs_points.get(lid)
            if pt is None:
                continue
            verts.append(vi)
            targets.append(pt)
        if not verts:
            raise DataError(f"frame {j}: no observed landmarks for any bound id")
        pose: Pose = poses[j]
        shaped = blend_vertices(rig, curve.weights[j])
        proj = project(shaped[verts], pose)
        values[j] = float(np.linalg.norm(proj - np.asarray(targets), axis=1).mean())
    return MetricSeries(name="keypoint_error", fps=curve.fps, values=values)


def lip_distance_curves(rig: Rig, curve: Curve) -> tuple[MetricSeries, MetricSeries]:
    """Per-frame |dx| of the horizontal lip pair and |dy| of the vertical pair
    measured on the blended mesh."""
    if rig.lip_pairs is None:
        raise DataError("rig manifest declares no lip pairs")
    (ha, hb), (va, vb) = rig.lip_pairs
    n = curve.frame_count
    horiz = np.zeros(n)
    vert = np.zeros(n)
    for j in range(n):
        shaped = blend_vertices(rig, curve.weights[j])
        horiz[j] = abs(shaped[ha, 0] - shaped[hb, 0])
        vert[j] = abs(shaped[va, 1] - shaped[vb, 1])
    return (
        MetricSeries(name="lip_horizontal", fps=curve.fps, values=horiz),
        MetricSeries(name="lip_vertical", fps=curve.fps, values=vert),
    )


def total_variation(curve: Curve) -> dict[str, float]:
    """Sum of |x[j] - x[j-1]| per viseme label."""
    if curve.frame_count < 1:
        raise DataError("total variation needs at least one frame")
    diffs = np.abs(np.diff(curve.weights, axis=0)).sum(axis=0)
    if curve.frame_count == 1:
        diffs = np.zeros(len(curve.labels))
    return {lab: float(d) for lab, d in zip(curve.labels, diffs)}


def serialize_metric(series: MetricSeries) -> str:
    lines = [f"# name={series.name}", f"# fps={series.fps!r}", "frame,value"]
    for j, v in enumerate(series.values):
        lines.append(f"{j},{v:.6f}")
    return "\n".join(lines) + "\n"


def serialize_total_variation(tv: dict[str, float]) -> str:
    lines = ["label,value"]
    for lab, v in tv.items():
        lines.append(f"{lab},{v:.6f}")
    return "\n".join(lines) + "\n"
