"""Optical-flow pair files and forward-backward screening.

A flow file stores the forward and backward displacement grids for one frame
pair (previous -> current): the magic ``FLO1``, little-endian uint32 width and
height, then two H*W*2 float32 blocks (x and y displacement, row-major),
forward first. Grid coordinates are image pixel coordinates.
"""

from __future__ import annotations

import struct

import numpy as np

from .errors import DataError
from .images import bilinear_sample, in_bounds

MAGIC = b"FLO1"


def write_flow_pair(forward: np.ndarray, backward: np.ndarray, path) -> None:
    fwd = np.asarray(forward, dtype=np.float32)
    bwd = np.asarray(backward, dtype=np.float32)
    if fwd.ndim != 3 or fwd.shape[2] != 2:
        raise DataError(f"flow grid must be (H, W, 2), got {fwd.shape}")
    if fwd.shape != bwd.shape:
        raise DataError(f"forward {fwd.shape} and backward {bwd.shape} grids differ")
    h, w, _ = fwd.shape
    from .atomicio import atomic_path

    with atomic_path(path) as tmp:
        with open(tmp, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<II", w, h))
            fh.write(fwd.astype("<f4").tobytes())
            fh.write(bwd.astype("<f4").tobytes())


def read_flow_pair(path) -> tuple[np.ndarray, np.ndarray]:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read flow {path}: {exc}")
    if blob[:4] != MAGIC:
        raise DataError(f"{path}: bad flow magic {blob[:4]!r}")
    if len(blob) < 12:
        raise DataError(f"{path}: truncated flow header")
    w, h = struct.unpack("<II", blob[4:12])
    block = h * w * 2 * 4
    if len(blob) != 12 + 2 * block:
        raise DataError(
            f"{path}: expected {12 + 2 * block} bytes for {w}x{h} grids, got {len(blob)}"
        )
    fwd = np.frombuffer(blob[12 : 12 + block], dtype="<f4").reshape(h, w, 2)
    bwd = np.frombuffer(blob[12 + block :], dtype="<f4").reshape(h, w, 2)
    return fwd.astype(np.float64), bwd.astype(np.float64)


def screen_flow(
    forward: np.ndarray,
    backward: np.ndarray,
    prev_points: np.ndarray,
    tau: float,
) -> tuple[np.ndarray, np.ndarray]:
    """Forward-backward consistency screening.

    prev_points are candidate pixel positions in the previous frame (typically
    projected rig vertices). For each candidate p the forward displacement u is
    sampled at p; the correspondence survives if p + u stays in bounds and
    ``|u + backward(p + u)| < tau``. Returns (indices into prev_points,
    displacements u) for the survivors.
    """
    fwd = np.asarray(forward, dtype=np.float64)
    bwd = np.asarray(backward, dtype=np.float64)
    if fwd.shape != bwd.shape or fwd.ndim != 3 or fwd.shape[2] != 2:
        raise DataError("flow grids must share an (H, W, 2) shape")
    if tau <= 0:
        raise DataError(f"flow consistency threshold must be positive, got {tau}")
    h, w = fwd.shape[:2]
    p = np.asarray(prev_points, dtype=np.float64).reshape(-1, 2)
    idx = np.flatnonzero(in_bounds(p, w, h))
    if idx.size == 0:
        return idx, np.zeros((0, 2))
    u = bilinear_sample(fwd, p[idx])
    q = p[idx] + u
    ok = in_bounds(q, w, h)
    idx, u, q = idx[ok], u[ok], q[ok]
    if idx.size == 0:
        return idx, np.zeros((0, 2))
    back = bilinear_sample(bwd, q)
    resid = np.linalg.norm(u + back, axis=1)
    keep = resid < tau
    return idx[keep], u[keep]
