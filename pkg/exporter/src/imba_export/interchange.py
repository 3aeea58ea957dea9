"""Writer side of the analysis core's interchange format.

Deliberately implemented from the format definition rather than by importing
the analysis package: the byte layout is the contract between the two
components, and an independent writer keeps it honest.

Layout: magic "FMAP", version 1, dtype 1 (f32), ndim, reserved 0, then ndim
u32 LE extents, then row-major f32 LE payload. Manifests are JSON;
annotations are CSV with header image_id,label,x,y,w,h.
"""

from __future__ import annotations

import json
import struct
from pathlib import Path

import numpy as np


def write_tensor(values, path) -> None:
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.float32))
    if not 1 <= arr.ndim <= 4:
        raise ValueError(f"ndim must be in [1, 4], got {arr.ndim}")
    if arr.size == 0:
        raise ValueError("empty tensor")
    header = b"FMAP" + struct.pack("<BBBB", 1, 1, arr.ndim, 0)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    Path(path).write_bytes(header + dims + arr.astype("<f4", copy=False).tobytes())


def write_manifest(
    path,
    layer_shape: tuple[int, int, int],
    image_width: int,
    image_height: int,
    class_names: list[str],
    entries: list[dict],
) -> None:
    doc = {
        "layer_shape": list(layer_shape),
        "image_width": image_width,
        "image_height": image_height,
        "class_names": class_names,
        "entries": entries,
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")
