"""Atomic file writes: data lands under a temp name, then renames into place.

A failed write never leaves a partial file at the destination.
"""

from __future__ import annotations

import os
from contextlib import contextmanager


@contextmanager
def atomic_path(path):
    """Yield a sibling temp path; on success rename it onto ``path``."""
    path = str(path)
    tmp = f"{path}.tmp{os.getpid()}"
    try:
        yield tmp
        os.replace(tmp, path)
    except BaseException:
        try:
            os.unlink(tmp)
        except OSError:
            pass
        raise


def write_text(path, text: str) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "w", encoding="utf-8") as fh:
            fh.write(text)


def write_bytes(path, blob: bytes) -> None:
    with atomic_path(path) as tmp:
        with open(tmp, "wb") as fh:
            fh.write(blob)
