"""Bit-exact interchange format: tensors, dataset manifests, box annotations.

Tensor files are a minimal binary layout:

    bytes 0-3   magic b"FMAP"
    byte  4     version (1)
    byte  5     dtype code (1 = IEEE-754 float32)
    byte  6     ndim (1..4)
    byte  7     reserved (0)
    next        ndim u32 little-endian extents
    rest        row-major float32 little-endian payload

Manifests are JSON, annotations are CSV with header image_id,label,x,y,w,h
(top-left origin, pixels). Out-of-bounds boxes are clipped on load; zero-area
boxes are rejected.
"""

from __future__ import annotations

import csv
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

MAGIC = b"FMAP"
VERSION = 1
DTYPE_F32 = 1
MAX_NDIM = 4
_U32_MAX = 2**32 - 1


class TensorFormatError(ValueError):
    """Malformed or unsupported tensor file."""


class ManifestError(ValueError):
    """Manifest fails validation."""


class AnnotationError(ValueError):
    """Annotation CSV fails parsing or validation."""


def write_tensor(values, path) -> None:
    """Write a dense float array to ``path`` in the FMAP layout.

    Accepts anything ``np.asarray`` takes; data is converted to float32.
    """
    arr = np.ascontiguousarray(np.asarray(values, dtype=np.float32))
    if arr.ndim < 1 or arr.ndim > MAX_NDIM:
        raise TensorFormatError(f"ndim must be in [1, {MAX_NDIM}], got {arr.ndim}")
    if arr.size == 0 or any(d < 1 for d in arr.shape):
        raise TensorFormatError(f"all dims must be >= 1, got shape {arr.shape}")
    if any(d > _U32_MAX for d in arr.shape):
        raise TensorFormatError(f"dim exceeds u32 extent: {arr.shape}")
    header = MAGIC + struct.pack("<BBBB", VERSION, DTYPE_F32, arr.ndim, 0)
    dims = struct.pack(f"<{arr.ndim}I", *arr.shape)
    payload = arr.astype("<f4", copy=False).tobytes(order="C")
    Path(path).write_bytes(header + dims + payload)


def read_tensor(path) -> np.ndarray:
    """Read an FMAP tensor file back into a float32 array.

    Validates magic, version, dtype, ndim and the declared vs actual payload
    length; raises :class:`TensorFormatError` on any mismatch.
    """
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise TensorFormatError(f"{path}: file shorter than header")
    if raw[:4] != MAGIC:
        raise TensorFormatError(f"{path}: bad magic {raw[:4]!r}")
    version, dtype_code, ndim, reserved = struct.unpack("<BBBB", raw[4:8])
    if version != VERSION:
        raise TensorFormatError(f"{path}: unsupported version {version}")
    if dtype_code != DTYPE_F32:
        raise TensorFormatError(f"{path}: unsupported dtype code {dtype_code}")
    if not 1 <= ndim <= MAX_NDIM:
        raise TensorFormatError(f"{path}: ndim {ndim} out of range")
    if reserved != 0:
        raise TensorFormatError(f"{path}: reserved byte is {reserved}")
    dims_end = 8 + 4 * ndim
    if len(raw) < dims_end:
        raise TensorFormatError(f"{path}: truncated extents")
    dims = struct.unpack(f"<{ndim}I", raw[8:dims_end])
    if any(d < 1 for d in dims):
        raise TensorFormatError(f"{path}: zero-length dim in {dims}")
    expected = 4 * int(np.prod(dims, dtype=np.int64))
    payload = raw[dims_end:]
    if len(payload) != expected:
        raise TensorFormatError(
            f"{path}: payload is {len(payload)} bytes, expected {expected}"
        )
    return np.frombuffer(payload, dtype="<f4").astype(np.float32).reshape(dims)


@dataclass
class ManifestEntry:
    image_id: str
    features_path: str
    logits_path: str
    labels: np.ndarray  # {0,1}^M


@dataclass
class Manifest:
    """Dataset description: layer shape, input resolution, classes, entries."""

    layer_shape: tuple[int, int, int]  # (C, H, W)
    image_width: int
    image_height: int
    class_names: list[str]
    entries: list[ManifestEntry] = field(default_factory=list)
    base_dir: Path = field(default_factory=Path)

    @property
    def num_classes(self) -> int:
        return len(self.class_names)

    def resolve(self, rel: str) -> Path:
        return self.base_dir / rel

    def class_index(self, name: str) -> int:
        try:
            return self.class_names.index(name)
        except ValueError:
            raise ManifestError(f"class {name!r} not in manifest") from None


def load_manifest(path, check_tensors: bool = False) -> Manifest:
    """Load and validate a manifest JSON file.

    With ``check_tensors=True`` every referenced tensor file is read and its
    shape checked against ``layer_shape`` (features) and class count (logits).
    """
    path = Path(path)
    try:
        doc = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ManifestError(f"{path}: {exc}") from exc
    try:
        layer_shape = tuple(int(v) for v in doc["layer_shape"])
        image_width = int(doc["image_width"])
        image_height = int(doc["image_height"])
        class_names = [str(c) for c in doc["class_names"]]
        raw_entries = doc["entries"]
    except (KeyError, TypeError, ValueError) as exc:
        raise ManifestError(f"{path}: missing or malformed field: {exc}") from exc
    if len(layer_shape) != 3 or any(d < 1 for d in layer_shape):
        raise ManifestError(f"{path}: layer_shape must be 3 positive ints")
    if not class_names:
        raise ManifestError(f"{path}: class_names must be nonempty")
    manifest = Manifest(
        layer_shape=layer_shape,
        image_width=image_width,
        image_height=image_height,
        class_names=class_names,
        base_dir=path.parent,
    )
    m = manifest.num_classes
    seen = set()
    for raw in raw_entries:
        labels = np.asarray(raw["labels"], dtype=np.int8)
        if labels.shape != (m,) or not np.isin(labels, (0, 1)).all():
            raise ManifestError(
                f"{path}: entry {raw.get('image_id')}: labels must be a {m}-vector of 0/1"
            )
        entry = ManifestEntry(
            image_id=str(raw["image_id"]),
            features_path=str(raw["features"]),
            logits_path=str(raw["logits"]),
            labels=labels,
        )
        if entry.image_id in seen:
            raise ManifestError(f"{path}: duplicate image_id {entry.image_id}")
        seen.add(entry.image_id)
        manifest.entries.append(entry)
    if check_tensors:
        validate_tensors(manifest)
    return manifest


def validate_tensors(manifest: Manifest) -> None:
    """Read every referenced tensor and reject shape disagreements."""
    m = manifest.num_classes
    for entry in manifest.entries:
        feats = read_tensor(manifest.resolve(entry.features_path))
        if feats.shape != manifest.layer_shape:
            raise ManifestError(
                f"{entry.image_id}: feature shape {feats.shape} != layer_shape "
                f"{manifest.layer_shape}"
            )
        logits = read_tensor(manifest.resolve(entry.logits_path))
        if logits.shape != (m,):
            raise ManifestError(
                f"{entry.image_id}: logits shape {logits.shape} != ({m},)"
            )


def save_manifest(manifest: Manifest, path) -> None:
    doc = {
        "layer_shape": list(manifest.layer_shape),
        "image_width": manifest.image_width,
        "image_height": manifest.image_height,
        "class_names": manifest.class_names,
        "entries": [
            {
                "image_id": e.image_id,
                "features": e.features_path,
                "logits": e.logits_path,
                "labels": [int(v) for v in e.labels],
            }
            for e in manifest.entries
        ],
    }
    Path(path).write_text(json.dumps(doc, indent=2) + "\n")


@dataclass(frozen=True)
class Box:
    """Axis-aligned box in image pixels, top-left origin."""

    label: str
    x: float
    y: float
    w: float
    h: float

    @property
    def area(self) -> float:
        return self.w * self.h


# AnnotationSet: image_id -> list of Box
AnnotationSet = dict[str, list[Box]]

ANNOTATION_HEADER = ["image_id", "label", "x", "y", "w", "h"]


def load_annotations(path, manifest: Manifest) -> AnnotationSet:
    """Parse a box CSV, group by image, clip to image bounds.

    Unknown labels and non-positive box sizes are rejected; boxes running
    past the image edge are clipped (real annotation files overrun slightly).
    """
    known = set(manifest.class_names)
    iw, ih = float(manifest.image_width), float(manifest.image_height)
    out: AnnotationSet = {}
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise AnnotationError(f"{path}: missing header row") from None
        if [c.strip() for c in header] != ANNOTATION_HEADER:
            raise AnnotationError(f"{path}: bad header {header}")
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != 6:
                raise AnnotationError(f"{path}:{lineno}: expected 6 columns, got {len(row)}")
            image_id, label = row[0].strip(), row[1].strip()
            try:
                x, y, w, h = (float(v) for v in row[2:])
            except ValueError as exc:
                raise AnnotationError(f"{path}:{lineno}: non-numeric coordinate") from exc
            if label not in known:
                raise AnnotationError(f"{path}:{lineno}: unknown label {label!r}")
            if w <= 0 or h <= 0:
                raise AnnotationError(f"{path}:{lineno}: non-positive box size {w}x{h}")
            x0, y0 = max(x, 0.0), max(y, 0.0)
            x1, y1 = min(x + w, iw), min(y + h, ih)
            if x1 <= x0 or y1 <= y0:
                raise AnnotationError(
                    f"{path}:{lineno}: box lies entirely outside the image"
                )
            out.setdefault(image_id, []).append(
                Box(label=label, x=x0, y=y0, w=x1 - x0, h=y1 - y0)
            )
    return out


def save_annotations(annotations: AnnotationSet, path) -> None:
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(ANNOTATION_HEADER)
        for image_id in annotations:
            for b in annotations[image_id]:
                writer.writerow([image_id, b.label, b.x, b.y, b.w, b.h])
