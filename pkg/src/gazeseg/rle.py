"""Run-length mask encoding shared by the wire protocol and the session API.

Column-major (Fortran) scan order, alternating runs of 0s and 1s, first
count always for zeros (possibly 0 when the mask starts with a 1).
"""

from __future__ import annotations

import numpy as np

from .core import InvalidParameterError


def encode_mask(mask: np.ndarray) -> dict:
    """Encode a binary (h, w) mask as {"size": [h, w], "counts": [...]}."""
    m = np.asarray(mask)
    if m.ndim != 2:
        raise InvalidParameterError("mask must be 2-D")
    flat = (m != 0).flatten(order="F").astype(np.int8)
    counts: list[int] = []
    if flat.size == 0:
        return {"size": [0, 0], "counts": []}
    changes = np.nonzero(np.diff(flat))[0]
    run_ends = np.concatenate([changes + 1, [flat.size]])
    run_starts = np.concatenate([[0], changes + 1])
    runs = (run_ends - run_starts).tolist()
    if flat[0] == 1:
        counts.append(0)
    counts.extend(int(r) for r in runs)
    return {"size": [int(m.shape[0]), int(m.shape[1])], "counts": counts}


def decode_mask(rle: dict) -> np.ndarray:
    """Inverse of encode_mask; returns a bool (h, w) array."""
    h, w = int(rle["size"][0]), int(rle["size"][1])
    counts = rle["counts"]
    total = sum(counts)
    if total != h * w:
        raise InvalidParameterError(
            f"rle counts sum to {total}, expected {h * w} for size {h}x{w}"
        )
    flat = np.zeros(h * w, dtype=bool)
    pos = 0
    val = False
    for c in counts:
        if val:
            flat[pos : pos + c] = True
        pos += c
        val = not val
    return flat.reshape((h, w), order="F")
