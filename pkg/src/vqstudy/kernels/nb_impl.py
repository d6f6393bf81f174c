"""Numba @njit kernel implementations (default backend when available)."""

from __future__ import annotations

import math

import numpy as np
from numba import njit


@njit(cache=True)
def _sobel_mean(y):
    h, w = y.shape
    acc = 0.0
    for i in range(1, h - 1):
        for j in range(1, w - 1):
            gx = (y[i - 1, j + 1] + 2.0 * y[i, j + 1] + y[i + 1, j + 1]) - (
                y[i - 1, j - 1] + 2.0 * y[i, j - 1] + y[i + 1, j - 1]
            )
            gy = (y[i + 1, j - 1] + 2.0 * y[i + 1, j] + y[i + 1, j + 1]) - (
                y[i - 1, j - 1] + 2.0 * y[i - 1, j] + y[i - 1, j + 1]
            )
            acc += math.sqrt(gx * gx + gy * gy)
    return acc / ((h - 2) * (w - 2))


def sobel_mean_grad_mag(gray: np.ndarray) -> float:
    """Mean 3x3 Sobel gradient magnitude over the valid interior."""
    y = np.ascontiguousarray(gray, dtype=np.float64)
    if y.ndim != 2 or y.shape[0] < 3 or y.shape[1] < 3:
        raise ValueError(f"frame shape {y.shape} smaller than the 3x3 kernel")
    return float(_sobel_mean(y))


@njit(cache=True)
def _merge_count(a):
    n = a.size
    src = a.copy()
    dst = np.empty(n, dtype=np.float64)
    inv = 0
    width = 1
    while width < n:
        for lo in range(0, n, 2 * width):
            mid = min(lo + width, n)
            hi = min(lo + 2 * width, n)
            i = lo
            j = mid
            k = lo
            while i < mid and j < hi:
                if src[j] < src[i]:  # strict: equal values are not inversions
                    inv += mid - i
                    dst[k] = src[j]
                    j += 1
                else:
                    dst[k] = src[i]
                    i += 1
                k += 1
            while i < mid:
                dst[k] = src[i]
                i += 1
                k += 1
            while j < hi:
                dst[k] = src[j]
                j += 1
                k += 1
        src, dst = dst, src
        width *= 2
    return inv


def count_inversions(values: np.ndarray) -> int:
    """Count pairs i < j with values[i] > values[j] via merge sort."""
    a = np.ascontiguousarray(values, dtype=np.float64)
    if a.size < 2:
        return 0
    return int(_merge_count(a))
