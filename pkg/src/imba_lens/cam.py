"""Class activation maps from feature maps and classifier-head weights.

A CAM for class m is the per-pixel weighted sum of channel activations,
rectified at zero (the GradCAM convention; for global-average-pool + linear
heads the two methods coincide), then min-max normalized to [0,1] and
bilinearly upsampled to image resolution for comparison with pixel boxes.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


@dataclass
class HeadWeights:
    """Linear classifier head: (M, C) weight matrix plus optional bias."""

    weights: np.ndarray
    bias: np.ndarray | None = None

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=np.float64)
        if self.weights.ndim != 2:
            raise ValueError(f"head weights must be 2-D (M, C), got {self.weights.shape}")
        if self.bias is not None:
            self.bias = np.asarray(self.bias, dtype=np.float64)
            if self.bias.shape != (self.weights.shape[0],):
                raise ValueError(
                    f"bias shape {self.bias.shape} != ({self.weights.shape[0]},)"
                )

    @property
    def num_classes(self) -> int:
        return self.weights.shape[0]

    @property
    def num_channels(self) -> int:
        return self.weights.shape[1]


@dataclass
class Heatmap:
    """Single-channel nonnegative map with values in [0,1]."""

    values: np.ndarray
    resolution: str = "feature-grid"  # or "image-pixels"

    def __post_init__(self):
        self.values = np.asarray(self.values, dtype=np.float64)
        if self.values.ndim != 2:
            raise ValueError(f"heatmap must be 2-D, got shape {self.values.shape}")


def compute_cam_raw(features: np.ndarray, head: HeadWeights, class_index: int) -> np.ndarray:
    """Unrectified weighted channel sum: sum_c w[class,c] * features[c]."""
    features = np.asarray(features, dtype=np.float64)
    if features.ndim != 3:
        raise ValueError(f"features must be (C, H, W), got {features.shape}")
    if not 0 <= class_index < head.num_classes:
        raise ValueError(f"class_index {class_index} out of range [0, {head.num_classes})")
    if features.shape[0] != head.num_channels:
        raise ValueError(
            f"channel mismatch: features C={features.shape[0]}, head C={head.num_channels}"
        )
    return np.tensordot(head.weights[class_index], features, axes=1)


def compute_cam(features: np.ndarray, head: HeadWeights, class_index: int) -> np.ndarray:
    """Rectified CAM at feature resolution: max(0, weighted channel sum)."""
    return np.maximum(compute_cam_raw(features, head, class_index), 0.0)


def normalize_map(raw: np.ndarray, resolution: str = "feature-grid") -> Heatmap:
    """Min-max normalize to [0,1]; a constant map becomes all zeros."""
    raw = np.asarray(raw, dtype=np.float64)
    if not np.isfinite(raw).all():
        raise ValueError("heatmap contains non-finite values")
    lo, hi = float(raw.min()), float(raw.max())
    if hi == lo:
        return Heatmap(np.zeros_like(raw), resolution)
    return Heatmap((raw - lo) / (hi - lo), resolution)


def upsample_bilinear(heatmap: Heatmap, target_h: int, target_w: int) -> Heatmap:
    """Bilinear upsampling with half-pixel-center alignment.

    Output pixel i samples the source at (i + 0.5) * src/dst - 0.5, clamped
    to the source extent; values stay inside the input's [min, max].
    """
    src = heatmap.values
    sh, sw = src.shape
    if target_h < sh or target_w < sw:
        raise ValueError(
            f"target {target_h}x{target_w} smaller than source {sh}x{sw}"
        )
    if (target_h, target_w) == (sh, sw):
        return Heatmap(src.copy(), "image-pixels")

    def axis_coords(n_src: int, n_dst: int) -> np.ndarray:
        pos = (np.arange(n_dst, dtype=np.float64) + 0.5) * (n_src / n_dst) - 0.5
        return np.clip(pos, 0.0, n_src - 1.0)

    ys = axis_coords(sh, target_h)
    xs = axis_coords(sw, target_w)
    y0 = np.floor(ys).astype(np.intp)
    x0 = np.floor(xs).astype(np.intp)
    y1 = np.minimum(y0 + 1, sh - 1)
    x1 = np.minimum(x0 + 1, sw - 1)
    fy = (ys - y0)[:, None]
    fx = (xs - x0)[None, :]
    top = src[np.ix_(y0, x0)] * (1.0 - fx) + src[np.ix_(y0, x1)] * fx
    bot = src[np.ix_(y1, x0)] * (1.0 - fx) + src[np.ix_(y1, x1)] * fx
    return Heatmap(top * (1.0 - fy) + bot * fy, "image-pixels")


def cam_heatmap(
    features: np.ndarray,
    head: HeadWeights,
    class_index: int,
    image_h: int,
    image_w: int,
    upsample_first: bool = False,
) -> Heatmap:
    """Full pipeline: CAM -> normalize -> upsample (default order).

    ``upsample_first=True`` swaps the last two steps for sensitivity checks.
    """
    raw = compute_cam(features, head, class_index)
    if upsample_first:
        up = upsample_bilinear(Heatmap(raw), image_h, image_w)
        return normalize_map(up.values, "image-pixels")
    return upsample_bilinear(normalize_map(raw), image_h, image_w)


def to_pgm(heatmap: Heatmap) -> bytes:
    """Render as binary 8-bit PGM for eyeballing."""
    v = np.clip(heatmap.values, 0.0, 1.0)
    pixels = np.round(v * 255.0).astype(np.uint8)
    h, w = pixels.shape
    return f"P5\n{w} {h}\n255\n".encode() + pixels.tobytes()
