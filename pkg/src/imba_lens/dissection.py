"""Dissection-style concept analysis of individual channels.

Per channel c, a dataset-wide threshold tau_c keeps roughly the top-q
fraction of activation values. For each annotated image the thresholded
channel map is split into connected components; a component touching a
(feature-grid-scaled) pathology box is a detected concept. Two dataset
summaries follow:

    disjoint = total detected components over all channels and images,
               normalized by the number of annotated images
    unique   = per image, the number of channels with >= 1 detection,
               summed over images and normalized the same way
"""

from __future__ import annotations

from dataclasses import dataclass, field
from math import ceil, floor

import numpy as np

from imba_lens import tensor_io
from imba_lens.tensor_io import AnnotationSet, Box, Manifest


@dataclass
class DissectionConfig:
    q: float = 0.04  # top-activation quantile
    connectivity: int = 8

    def __post_init__(self):
        if not 0.0 < self.q < 1.0:
            raise ValueError(f"q must be in (0,1), got {self.q}")
        if self.connectivity not in (4, 8):
            raise ValueError(f"connectivity must be 4 or 8, got {self.connectivity}")


@dataclass
class ChannelThresholds:
    tau: np.ndarray  # per-channel threshold
    degenerate: np.ndarray  # per-channel bool: constant-valued channel

    @property
    def num_channels(self) -> int:
        return self.tau.shape[0]


def quantile_threshold(values: np.ndarray, q: float) -> float:
    """Order statistic v[ceil((1-q)*n)] (1-indexed, ascending)."""
    v = np.sort(np.asarray(values, dtype=np.float64), axis=None)
    n = v.size
    if n == 0:
        raise ValueError("no values")
    k = min(max(ceil((1.0 - q) * n), 1), n)
    return float(v[k - 1])


def channel_thresholds(manifest: Manifest, config: DissectionConfig) -> ChannelThresholds:
    """Thresholds over all H*W*N activation values of each channel.

    Constant-valued channels are flagged degenerate (their threshold keeps
    everything) and are skipped by detection.
    """
    if not manifest.entries:
        raise ValueError("empty dataset")
    c = manifest.layer_shape[0]
    per_channel: list[list[np.ndarray]] = [[] for _ in range(c)]
    for entry in manifest.entries:
        feats = tensor_io.read_tensor(manifest.resolve(entry.features_path))
        for ch in range(c):
            per_channel[ch].append(feats[ch].ravel())
    tau = np.empty(c, dtype=np.float64)
    degenerate = np.zeros(c, dtype=bool)
    for ch in range(c):
        values = np.concatenate(per_channel[ch])
        tau[ch] = quantile_threshold(values, config.q)
        degenerate[ch] = values.min() == values.max()
    return ChannelThresholds(tau=tau, degenerate=degenerate)


def connected_components(mask: np.ndarray, connectivity: int = 8) -> list[list[tuple[int, int]]]:
    """Maximal connected regions of true cells, via two-pass union-find."""
    mask = np.asarray(mask, dtype=bool)
    if mask.ndim != 2 or mask.size == 0:
        raise ValueError(f"mask must be 2-D and nonempty, got shape {mask.shape}")
    if connectivity not in (4, 8):
        raise ValueError(f"connectivity must be 4 or 8, got {connectivity}")
    h, w = mask.shape
    parent = np.full(h * w, -1, dtype=np.intp)

    def find(i: int) -> int:
        root = i
        while parent[root] != root:
            root = parent[root]
        while parent[i] != root:  # path compression
            parent[i], i = root, parent[i]
        return root

    def union(a: int, b: int) -> None:
        ra, rb = find(a), find(b)
        if ra != rb:
            parent[max(ra, rb)] = min(ra, rb)

    if connectivity == 4:
        neighbors = ((-1, 0), (0, -1))
    else:
        neighbors = ((-1, -1), (-1, 0), (-1, 1), (0, -1))
    for r in range(h):
        for c in range(w):
            if not mask[r, c]:
                continue
            i = r * w + c
            parent[i] = i
            for dr, dc in neighbors:
                rr, cc = r + dr, c + dc
                if 0 <= rr < h and 0 <= cc < w and mask[rr, cc]:
                    union(i, rr * w + cc)
    groups: dict[int, list[tuple[int, int]]] = {}
    for r in range(h):
        for c in range(w):
            if mask[r, c]:
                groups.setdefault(find(r * w + c), []).append((r, c))
    return [groups[k] for k in sorted(groups)]


def scale_box_to_grid(
    box: Box, image_w: int, image_h: int, grid_w: int, grid_h: int
) -> tuple[int, int, int, int]:
    """Feature-grid cell range (r0, r1, c0, c1), half-open, covered by a box.

    A cell is included iff its pixel footprint intersects the box interior.
    """
    sx = grid_w / image_w
    sy = grid_h / image_h
    c0 = max(floor(box.x * sx), 0)
    r0 = max(floor(box.y * sy), 0)
    c1 = min(ceil((box.x + box.w) * sx), grid_w)
    r1 = min(ceil((box.y + box.h) * sy), grid_h)
    return r0, r1, c0, c1


def boxes_to_grid_mask(
    boxes: list[Box], image_w: int, image_h: int, grid_w: int, grid_h: int
) -> np.ndarray:
    if not boxes:
        raise ValueError("empty box list")
    mask = np.zeros((grid_h, grid_w), dtype=bool)
    for b in boxes:
        r0, r1, c0, c1 = scale_box_to_grid(b, image_w, image_h, grid_w, grid_h)
        mask[r0:r1, c0:c1] = True
    return mask


def detect_concepts(
    features: np.ndarray,
    thresholds: ChannelThresholds,
    box_mask: np.ndarray,
    config: DissectionConfig,
) -> np.ndarray:
    """Per-channel count of thresholded components overlapping the box mask.

    Overlap means >= 1 shared cell; degenerate channels count 0.
    """
    features = np.asarray(features, dtype=np.float64)
    c = features.shape[0]
    if c != thresholds.num_channels:
        raise ValueError(
            f"channel mismatch: features C={c}, thresholds C={thresholds.num_channels}"
        )
    counts = np.zeros(c, dtype=np.int64)
    for ch in range(c):
        if thresholds.degenerate[ch]:
            continue
        mask = features[ch] >= thresholds.tau[ch]
        if not mask.any():
            continue
        for component in connected_components(mask, config.connectivity):
            if any(box_mask[r, col] for r, col in component):
                counts[ch] += 1
    return counts


@dataclass
class ConceptReport:
    disjoint: float
    unique: float
    n_images: int
    degenerate_channels: list[int]
    per_channel: list[dict] = field(default_factory=list)


def concept_report(
    manifest: Manifest,
    annotations: AnnotationSet,
    thresholds: ChannelThresholds,
    config: DissectionConfig,
) -> ConceptReport:
    """Disjoint/Unique counts over all annotated images, in manifest order."""
    c, grid_h, grid_w = manifest.layer_shape
    images_with_detection = np.zeros(c, dtype=np.int64)
    total_components = np.zeros(c, dtype=np.int64)
    unique_sum = 0
    n_images = 0
    for entry in manifest.entries:
        boxes = annotations.get(entry.image_id)
        if not boxes:
            continue
        n_images += 1
        features = tensor_io.read_tensor(manifest.resolve(entry.features_path))
        box_mask = boxes_to_grid_mask(
            boxes, manifest.image_width, manifest.image_height, grid_w, grid_h
        )
        counts = detect_concepts(features, thresholds, box_mask, config)
        total_components += counts
        detected = counts > 0
        images_with_detection += detected
        unique_sum += int(detected.sum())
    if n_images == 0:
        raise ValueError("no annotated images in manifest")
    return ConceptReport(
        disjoint=float(total_components.sum()) / n_images,
        unique=float(unique_sum) / n_images,
        n_images=n_images,
        degenerate_channels=[int(i) for i in np.flatnonzero(thresholds.degenerate)],
        per_channel=[
            {
                "channel": ch,
                "images_with_detection": int(images_with_detection[ch]),
                "total_components": int(total_components[ch]),
            }
            for ch in range(c)
        ],
    )
