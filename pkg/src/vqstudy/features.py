"""Low-level visual features computed per frame and averaged over a video.

Frames are RGB arrays in [0, 1] (8-bit files divided by 255):

  brightness   mean of the HSV value channel, max(R, G, B)
  contrast     population std of BT.601 luma 0.299R + 0.587G + 0.114B
  colorfulness sqrt(std_rg^2 + std_yb^2) + 0.3 sqrt(mean_rg^2 + mean_yb^2)
               over opponent differences rg = |R-G|, yb = |0.5(R+G) - B|
  sharpness    log(1 + mean Sobel gradient magnitude) on luma, valid
               interior only (no padding)

Per-frame features are averaged arithmetically over sampled frames.
"""

from __future__ import annotations

import math
import os
from typing import Sequence

import numpy as np

from .domain import FrameFeatures
from .kernels import sobel_mean_grad_mag

LUMA_WEIGHTS = (0.299, 0.587, 0.114)

FRAME_EXTENSIONS = (".png", ".ppm")


def as_frame(pixels) -> np.ndarray:
    """Validate an (h, w, 3) RGB array with channels in [0, 1]."""
    arr = np.asarray(pixels, dtype=np.float64)
    if arr.ndim != 3 or arr.shape[2] != 3:
        raise ValueError(f"expected (h, w, 3) RGB array, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError("empty frame")
    if not np.isfinite(arr).all():
        raise ValueError("frame contains non-finite values")
    if arr.min() < 0.0 or arr.max() > 1.0:
        raise ValueError("channels must lie in [0, 1]")
    return arr


def luma(frame: np.ndarray) -> np.ndarray:
    r, g, b = frame[..., 0], frame[..., 1], frame[..., 2]
    return LUMA_WEIGHTS[0] * r + LUMA_WEIGHTS[1] * g + LUMA_WEIGHTS[2] * b


def brightness(frame, pixel_scale: float = 1.0) -> float:
    """Mean intensity of the HSV value channel."""
    arr = as_frame(frame)
    return float(arr.max(axis=2).mean()) * pixel_scale


def contrast(frame, pixel_scale: float = 1.0) -> float:
    """Population standard deviation of grayscale intensities."""
    arr = as_frame(frame)
    y = luma(arr)
    if y.max() == y.min():  # constant frame: exactly zero, no mean round-off
        return 0.0
    return float(y.std()) * pixel_scale


def colorfulness(frame, pixel_scale: float = 1.0) -> float:
    """Opponent-color statistic over red-green and yellow-blue differences."""
    arr = as_frame(frame)
    r, g, b = arr[..., 0], arr[..., 1], arr[..., 2]
    rg = np.abs(r - g)
    yb = np.abs(0.5 * (r + g) - b)
    s = math.sqrt(float(rg.var()) + float(yb.var()))
    m = math.sqrt(float(rg.mean()) ** 2 + float(yb.mean()) ** 2)
    return (s + 0.3 * m) * pixel_scale


def sharpness(frame, pixel_scale: float = 1.0) -> float:
    """log(1 + mean Sobel gradient magnitude); needs at least a 3x3 frame."""
    arr = as_frame(frame)
    if arr.shape[0] < 3 or arr.shape[1] < 3:
        raise ValueError(
            f"frame {arr.shape[0]}x{arr.shape[1]} smaller than the 3x3 Sobel kernel"
        )
    return math.log1p(sobel_mean_grad_mag(luma(arr)) * pixel_scale)


def frame_features(frame, pixel_scale: float = 1.0) -> FrameFeatures:
    arr = as_frame(frame)
    return FrameFeatures(
        brightness=brightness(arr, pixel_scale),
        contrast=contrast(arr, pixel_scale),
        colorfulness=colorfulness(arr, pixel_scale),
        sharpness=sharpness(arr, pixel_scale),
    )


def video_features(
    frames: Sequence, stride: int = 1, pixel_scale: float = 1.0
) -> FrameFeatures:
    """Arithmetic mean of per-frame features over every stride-th frame.

    Frames are reduced in list order (strictly sequential sum), so results
    are reproducible run-to-run.
    """
    if stride < 1:
        raise ValueError(f"stride must be >= 1, got {stride}")
    sampled = list(frames)[::stride]
    if not sampled:
        raise ValueError("no frames to sample")
    acc = np.zeros(4)
    for frame in sampled:
        acc += frame_features(frame, pixel_scale).as_vector()
    mean = acc / len(sampled)
    return FrameFeatures(
        brightness=float(mean[0]),
        contrast=float(mean[1]),
        colorfulness=float(mean[2]),
        sharpness=float(mean[3]),
    )


def load_frame(path: str) -> np.ndarray:
    """Read a PNG or PPM frame file into a [0, 1] RGB array."""
    from PIL import Image

    with Image.open(path) as img:
        rgb = img.convert("RGB")
        return np.asarray(rgb, dtype=np.float64) / 255.0


def list_frame_files(frames_dir: str) -> list[str]:
    names = sorted(
        f
        for f in os.listdir(frames_dir)
        if f.lower().endswith(FRAME_EXTENSIONS)
    )
    return [os.path.join(frames_dir, f) for f in names]


def video_features_from_dir(
    frames_dir: str, stride: int = 1, pixel_scale: float = 1.0
) -> tuple[FrameFeatures, int]:
    """Features for the frame files in a directory; returns (features, n_sampled)."""
    paths = list_frame_files(frames_dir)
    if not paths:
        raise FileNotFoundError(f"no frame files (.png/.ppm) in {frames_dir}")
    sampled = paths[::stride] if stride >= 1 else paths
    feats = video_features(
        (load_frame(p) for p in sampled), stride=1, pixel_scale=pixel_scale
    )
    return feats, len(sampled)
