"""Soft IoBB / IoR between normalized heatmaps and pathology boxes.

Both scores read a [0,1] heatmap at image resolution against the pixel union
U of the boxes for one class:

    soft IoBB = sum(map over U) / |U|            (soft recall of the boxes)
    soft IoR  = sum(map over U) / sum(map)       (soft precision of the map)

Maps with zero total mass score IoR = 0 and carry a flag so aggregation
stays total.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from imba_lens import cam, tensor_io
from imba_lens.cam import HeadWeights, Heatmap
from imba_lens.tensor_io import AnnotationSet, Box, Manifest


@dataclass
class AlignmentScore:
    iobb: float
    ior: float
    box_area: int
    total_mass: float
    zero_mass: bool = False


def box_union_mask(boxes: list[Box], height: int, width: int) -> np.ndarray:
    """Boolean H x W mask of pixels covered by any box.

    A pixel (r, c) is covered when its unit square [c, c+1) x [r, r+1)
    intersects a box; boxes are assumed clipped to the image.
    """
    if not boxes:
        raise ValueError("empty box list")
    mask = np.zeros((height, width), dtype=bool)
    for b in boxes:
        c0 = int(np.floor(b.x))
        r0 = int(np.floor(b.y))
        c1 = int(np.ceil(b.x + b.w))
        r1 = int(np.ceil(b.y + b.h))
        mask[max(r0, 0) : min(r1, height), max(c0, 0) : min(c1, width)] = True
    return mask


def score_heatmap(heatmap: Heatmap, boxes: list[Box]) -> AlignmentScore:
    """Both soft scores for one heatmap against one class's boxes."""
    values = heatmap.values
    union = box_union_mask(boxes, *values.shape)
    box_area = int(union.sum())
    inside = float(values[union].sum())
    total = float(values.sum())
    if total == 0.0:
        return AlignmentScore(
            iobb=inside / box_area, ior=0.0, box_area=box_area,
            total_mass=0.0, zero_mass=True,
        )
    return AlignmentScore(
        iobb=inside / box_area, ior=inside / total,
        box_area=box_area, total_mass=total,
    )


def soft_iobb(heatmap: Heatmap, boxes: list[Box]) -> float:
    return score_heatmap(heatmap, boxes).iobb


def soft_ior(heatmap: Heatmap, boxes: list[Box]) -> float:
    return score_heatmap(heatmap, boxes).ior


def aggregate_alignment(
    manifest: Manifest,
    annotations: AnnotationSet,
    head: HeadWeights,
    upsample_first: bool = False,
) -> dict:
    """Score every (annotated image, annotated class) pair and average.

    Per pair: CAM for the class, normalize, upsample to image pixels, score
    against that class's box union. Means are per class and over all pairs
    uniformly; entries are visited in manifest order so the report is
    byte-stable.
    """
    per_class: dict[str, list[AlignmentScore]] = {}
    all_scores: list[AlignmentScore] = []
    zero_mass = 0
    n_pairs = 0
    for entry in manifest.entries:
        boxes = annotations.get(entry.image_id)
        if not boxes:
            continue
        features = tensor_io.read_tensor(manifest.resolve(entry.features_path))
        by_label: dict[str, list[Box]] = {}
        for b in boxes:
            by_label.setdefault(b.label, []).append(b)
        for label in sorted(by_label):
            class_index = manifest.class_index(label)
            heatmap = cam.cam_heatmap(
                features, head, class_index,
                manifest.image_height, manifest.image_width,
                upsample_first=upsample_first,
            )
            score = score_heatmap(heatmap, by_label[label])
            per_class.setdefault(label, []).append(score)
            all_scores.append(score)
            zero_mass += score.zero_mass
            n_pairs += 1
    if n_pairs == 0:
        raise ValueError("no annotated images in manifest")
    return {
        "per_class": [
            {
                "class": label,
                "n_pairs": len(scores),
                "mean_iobb": float(np.mean([s.iobb for s in scores])),
                "mean_ior": float(np.mean([s.ior for s in scores])),
            }
            for label, scores in sorted(per_class.items())
        ],
        "overall": {
            "mean_iobb": float(np.mean([s.iobb for s in all_scores])),
            "mean_ior": float(np.mean([s.ior for s in all_scores])),
        },
        "n_pairs": n_pairs,
        "zero_mass_count": zero_mass,
    }
