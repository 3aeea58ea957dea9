"""Export model internals to the interchange format.

Hooks a named convolutional layer, runs every dataset image through the
model, and writes per-image feature and logits tensors plus the head
weights and a manifest. The head must be a single linear map over globally
pooled channels, which is what makes CAM applicable.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import torch
from torch import nn

from imba_export import interchange


class ExportError(RuntimeError):
    pass


@dataclass
class ExportSpec:
    checkpoint: str | None  # None -> freshly initialized toy model
    layer: str  # named module whose output is the feature map
    data_dir: str
    out_dir: str
    class_names: list[str] = field(default_factory=lambda: ["positive"])
    resize: int | None = None  # square input resize; None keeps native size


def load_dataset_dir(data_dir, resize: int | None = None):
    """Load images from a directory of .npy (H x W) and/or .png files.

    Labels come from labels.json: {"image_id": [0/1, ...], ...}.
    """
    data_dir = Path(data_dir)
    labels_path = data_dir / "labels.json"
    if not labels_path.exists():
        raise ExportError(f"{data_dir}: missing labels.json")
    labels = json.loads(labels_path.read_text())
    images = {}
    for path in sorted(data_dir.iterdir()):
        if path.name == "labels.json":
            continue
        if path.suffix == ".npy":
            arr = np.load(path).astype(np.float32)
        elif path.suffix in (".png", ".jpg", ".jpeg"):
            from PIL import Image

            with Image.open(path) as img:
                arr = np.asarray(img.convert("L"), dtype=np.float32) / 255.0
        else:
            continue
        if arr.ndim != 2:
            raise ExportError(f"{path}: expected a single-channel 2-D image")
        if resize and arr.shape != (resize, resize):
            arr = _resize_bilinear(arr, resize)
        if path.stem not in labels:
            raise ExportError(f"{path.stem}: no label in labels.json")
        images[path.stem] = arr
    if not images:
        raise ExportError(f"{data_dir}: no images found")
    return images, labels


def _resize_bilinear(arr: np.ndarray, size: int) -> np.ndarray:
    t = torch.from_numpy(arr)[None, None]
    out = torch.nn.functional.interpolate(
        t, size=(size, size), mode="bilinear", align_corners=False
    )
    return out[0, 0].numpy()


def find_layer(model: nn.Module, name: str) -> nn.Module:
    modules = dict(model.named_modules())
    if name not in modules:
        raise ExportError(
            f"layer {name!r} not found; available: {sorted(m for m in modules if m)}"
        )
    return modules[name]


def find_head(model: nn.Module, channels: int) -> nn.Linear:
    """The unique linear layer mapping pooled channels to class logits."""
    heads = [
        m for m in model.modules()
        if isinstance(m, nn.Linear) and m.in_features == channels
    ]
    if len(heads) != 1:
        raise ExportError(
            f"expected exactly one linear head over {channels} channels, "
            f"found {len(heads)}"
        )
    return heads[0]


def export_dataset(spec: ExportSpec, model: nn.Module) -> Path:
    """Write per-image feature/logits tensors, head weights, and a manifest.

    Returns the manifest path. Verifies on the fly that pooled features
    through the head reproduce the model's logits (the CAM precondition).
    """
    out_dir = Path(spec.out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    images, labels = load_dataset_dir(spec.data_dir, spec.resize)
    layer = find_layer(model, spec.layer)
    captured = {}

    def hook(_module, _inputs, output):
        captured["features"] = output

    handle = layer.register_forward_hook(hook)
    model.eval()
    entries = []
    layer_shape = None
    image_shape = None
    head = None
    try:
        with torch.no_grad():
            for image_id in sorted(images):
                arr = images[image_id]
                if image_shape is None:
                    image_shape = arr.shape
                elif arr.shape != image_shape:
                    raise ExportError(f"{image_id}: image size {arr.shape} varies")
                logits = model(torch.from_numpy(arr)[None, None])
                feats = captured.pop("features")
                if feats.ndim != 4 or feats.shape[0] != 1:
                    raise ExportError(
                        f"layer {spec.layer!r} output must be (1, C, H, W), "
                        f"got {tuple(feats.shape)}"
                    )
                feats = feats[0]
                if layer_shape is None:
                    layer_shape = tuple(feats.shape)
                    head = find_head(model, layer_shape[0])
                logits = torch.atleast_1d(logits.reshape(-1))
                pooled = feats.mean(dim=(1, 2))
                recomputed = head(pooled[None])[0].reshape(-1)
                if not torch.allclose(recomputed, logits, atol=1e-5):
                    raise ExportError(
                        "head is not a linear map over globally pooled features"
                    )
                entry_labels = labels[image_id]
                if len(entry_labels) != len(spec.class_names):
                    raise ExportError(
                        f"{image_id}: {len(entry_labels)} labels for "
                        f"{len(spec.class_names)} classes"
                    )
                feat_name = f"{image_id}_feat.fmap"
                logit_name = f"{image_id}_logits.fmap"
                interchange.write_tensor(feats.numpy(), out_dir / feat_name)
                interchange.write_tensor(logits.numpy(), out_dir / logit_name)
                entries.append(
                    {
                        "image_id": image_id,
                        "features": feat_name,
                        "logits": logit_name,
                        "labels": [int(v) for v in entry_labels],
                    }
                )
    finally:
        handle.remove()
    interchange.write_tensor(
        head.weight.detach().numpy(), out_dir / "head.fmap"
    )
    interchange.write_tensor(
        head.bias.detach().numpy(), out_dir / "head_bias.fmap"
    )
    manifest_path = out_dir / "manifest.json"
    interchange.write_manifest(
        manifest_path,
        layer_shape=layer_shape,
        image_width=image_shape[1],
        image_height=image_shape[0],
        class_names=spec.class_names,
        entries=entries,
    )
    return manifest_path
