"""Pure-numpy kernel implementations (fallback backend)."""

from __future__ import annotations

import numpy as np


def sobel_mean_grad_mag(gray: np.ndarray) -> float:
    """Mean 3x3 Sobel gradient magnitude over the valid interior.

    No padding: a frame of shape (h, w) contributes (h-2) x (w-2) samples.
    """
    y = np.asarray(gray, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < 3 or y.shape[1] < 3:
        raise ValueError(f"frame shape {y.shape} smaller than the 3x3 kernel")
    gx = (y[:-2, 2:] + 2.0 * y[1:-1, 2:] + y[2:, 2:]) - (
        y[:-2, :-2] + 2.0 * y[1:-1, :-2] + y[2:, :-2]
    )
    gy = (y[2:, :-2] + 2.0 * y[2:, 1:-1] + y[2:, 2:]) - (
        y[:-2, :-2] + 2.0 * y[:-2, 1:-1] + y[:-2, 2:]
    )
    return float(np.sqrt(gx * gx + gy * gy).mean())


def count_inversions(values: np.ndarray) -> int:
    """Count pairs i < j with values[i] > values[j] in O(n log n).

    Bottom-up merge: per block pair, searchsorted(side="right") counts left
    elements strictly greater than each right element, so ties contribute
    nothing. Used by Kendall tau-b.
    """
    a = np.ascontiguousarray(values, dtype=np.float64)
    n = a.size
    if n < 2:
        return 0
    total = 0
    buf = a.copy()
    width = 1
    while width < n:
        out = np.empty_like(buf)
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            left = buf[lo:mid]
            right = buf[mid:hi]
            if right.size == 0:
                out[lo:hi] = left
                continue
            ins = np.searchsorted(left, right, side="right")
            total += int((left.size - ins).sum())
            # stable merge: right elements go after equal left elements
            pos_right = ins + np.arange(right.size)
            block = out[lo:hi]
            taken = np.zeros(hi - lo, dtype=bool)
            taken[pos_right] = True
            block[pos_right] = right
            block[~taken] = left
        buf = out
        width *= 2
    return total
