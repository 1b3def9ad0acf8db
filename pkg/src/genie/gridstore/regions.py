"""Greedy coalescing of cell masks into maximal aligned rectangles.

Row-major sweep per timestep: maximal horizontal runs are merged into
rectangles when the identical run repeats on consecutive rows, and
consecutive timesteps with identical rectangle sets are fused.  Not a
minimal cover, but deterministic and exact in union.
"""

from __future__ import annotations

import numpy as np

IndexRegion = tuple[int, int, int, int, int, int]  # i0, i1, j0, j1, t0, t1 (half-open)


def _runs(row: np.ndarray) -> list[tuple[int, int]]:
    idx = np.flatnonzero(row)
    if idx.size == 0:
        return []
    breaks = np.flatnonzero(np.diff(idx) > 1)
    starts = np.concatenate(([0], breaks + 1))
    ends = np.concatenate((breaks, [idx.size - 1]))
    return [(int(idx[s]), int(idx[e]) + 1) for s, e in zip(starts, ends)]


def _rects_2d(mask: np.ndarray) -> list[tuple[int, int, int, int]]:
    active: dict[tuple[int, int], int] = {}
    out: list[tuple[int, int, int, int]] = []
    nlat = mask.shape[0]
    for i in range(nlat):
        here = set(_runs(mask[i]))
        for run in list(active):
            if run not in here:
                out.append((active.pop(run), i, run[0], run[1]))
        for run in here:
            active.setdefault(run, i)
    out.extend((i0, nlat, j0, j1) for (j0, j1), i0 in active.items())
    out.sort()
    return out


def mask_to_regions(mask: np.ndarray) -> list[IndexRegion]:
    """Decompose a (nlat, nlon, nt) boolean mask into disjoint index boxes."""
    if mask.ndim != 3:
        raise ValueError("expected a 3-d mask")
    nt = mask.shape[2]
    per_t: list[list[tuple[int, int, int, int]]] = [_rects_2d(mask[:, :, t]) for t in range(nt)]
    out: list[IndexRegion] = []
    t = 0
    while t < nt:
        rects = per_t[t]
        t1 = t + 1
        while t1 < nt and per_t[t1] == rects:
            t1 += 1
        out.extend((i0, i1, j0, j1, t, t1) for (i0, i1, j0, j1) in rects)
        t = t1
    return out
