"""Binary PPM (P6) frames and bilinear grid sampling.

Images live in memory as (H, W, 3) float64 arrays in [0, 1]. Sample positions
are (x, y) with pixel centers on integer coordinates; the valid sampling
domain is 0 <= x <= W-1, 0 <= y <= H-1.
"""

from __future__ import annotations

import numpy as np

from .errors import DataError


def write_ppm(image: np.ndarray, path) -> None:
    img = np.asarray(image, dtype=np.float64)
    if img.ndim != 3 or img.shape[2] != 3:
        raise DataError(f"image must be (H, W, 3), got {img.shape}")
    h, w, _ = img.shape
    data = np.clip(np.rint(img * 255.0), 0, 255).astype(np.uint8)
    from .atomicio import atomic_path

    with atomic_path(path) as tmp:
        with open(tmp, "wb") as fh:
            fh.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
            fh.write(data.tobytes())


def read_ppm(path) -> np.ndarray:
    try:
        with open(path, "rb") as fh:
            blob = fh.read()
    except OSError as exc:
        raise DataError(f"cannot read image {path}: {exc}")
    # header: magic, width, height, maxval as whitespace-separated tokens,
    # with '#' comments allowed between them
    pos = 0
    tokens = []
    while len(tokens) < 4:
        while pos < len(blob) and blob[pos] in b" \t\r\n":
            pos += 1
        if pos >= len(blob):
            raise DataError(f"{path}: truncated PPM header")
        if blob[pos : pos + 1] == b"#":
            while pos < len(blob) and blob[pos] not in b"\r\n":
                pos += 1
            continue
        start = pos
        while pos < len(blob) and blob[pos] not in b" \t\r\n":
            pos += 1
        tokens.append(blob[start:pos])
    if tokens[0] != b"P6":
        raise DataError(f"{path}: not a binary PPM (magic {tokens[0]!r})")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
    except ValueError:
        raise DataError(f"{path}: bad PPM dimensions")
    if maxval != 255:
        raise DataError(f"{path}: only maxval 255 is supported, got {maxval}")
    pos += 1  # single whitespace byte after maxval
    need = w * h * 3
    raw = blob[pos : pos + need]
    if len(raw) != need:
        raise DataError(f"{path}: expected {need} pixel bytes, got {len(raw)}")
    return np.frombuffer(raw, dtype=np.uint8).reshape(h, w, 3).astype(np.float64) / 255.0


def in_bounds(points: np.ndarray, width: int, height: int) -> np.ndarray:
    """Mask of (x, y) points inside the bilinear-sampling domain."""
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    return (
        (p[:, 0] >= 0.0)
        & (p[:, 0] <= width - 1.0)
        & (p[:, 1] >= 0.0)
        & (p[:, 1] <= height - 1.0)
    )


def bilinear_sample(grid: np.ndarray, points: np.ndarray, with_grad: bool = False):
    """Bilinear interpolation of an (H, W, C) grid at (M, 2) points.

    Returns values (M, C); with with_grad also the exact in-cell derivatives
    d/dx and d/dy, each (M, C). Points must be in bounds (see in_bounds);
    callers filter first.
    """
    g = np.asarray(grid, dtype=np.float64)
    h, w = g.shape[0], g.shape[1]
    p = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    if p.size and (
        p[:, 0].min() < 0 or p[:, 0].max() > w - 1 or p[:, 1].min() < 0 or p[:, 1].max() > h - 1
    ):
        raise DataError("bilinear sample point outside the grid")
    x0 = np.minimum(np.floor(p[:, 0]).astype(np.int64), w - 2) if w > 1 else np.zeros(len(p), np.int64)
    y0 = np.minimum(np.floor(p[:, 1]).astype(np.int64), h - 2) if h > 1 else np.zeros(len(p), np.int64)
    fx = (p[:, 0] - x0)[:, None]
    fy = (p[:, 1] - y0)[:, None]
    g00 = g[y0, x0]
    g10 = g[y0, x0 + 1] if w > 1 else g00
    g01 = g[y0 + 1, x0] if h > 1 else g00
    g11 = g[y0 + 1, x0 + 1] if w > 1 and h > 1 else g00
    top = g00 + (g10 - g00) * fx
    bot = g01 + (g11 - g01) * fx
    vals = top + (bot - top) * fy
    if not with_grad:
        return vals
    dx = (g10 - g00) * (1.0 - fy) + (g11 - g01) * fy
    dy = bot - top
    return vals, dx, dy
