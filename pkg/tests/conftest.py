import numpy as np
import pytest

from imba_lens import tensor_io
from imba_lens.tensor_io import Manifest, ManifestEntry


def build_dataset(
    root,
    features_by_image: dict[str, np.ndarray],
    logits_by_image: dict[str, np.ndarray],
    class_names: list[str],
    labels_by_image: dict[str, list[int]],
    image_width: int,
    image_height: int,
) -> Manifest:
    """Write tensors + manifest under ``root`` and return the loaded manifest."""
    layer_shape = next(iter(features_by_image.values())).shape
    manifest = Manifest(
        layer_shape=tuple(layer_shape),
        image_width=image_width,
        image_height=image_height,
        class_names=class_names,
        base_dir=root,
    )
    for image_id in features_by_image:
        feat_name = f"{image_id}_feat.fmap"
        logit_name = f"{image_id}_logits.fmap"
        tensor_io.write_tensor(features_by_image[image_id], root / feat_name)
        tensor_io.write_tensor(logits_by_image[image_id], root / logit_name)
        manifest.entries.append(
            ManifestEntry(
                image_id=image_id,
                features_path=feat_name,
                logits_path=logit_name,
                labels=np.asarray(labels_by_image[image_id], dtype=np.int8),
            )
        )
    tensor_io.save_manifest(manifest, root / "manifest.json")
    return tensor_io.load_manifest(root / "manifest.json")


@pytest.fixture
def handcrafted_dataset(tmp_path):
    """2-image, 2-class, 2-channel fixture with hand-computed expectations.

    Image grid equals the feature grid (8x8) so upsampling is the identity
    and every score can be computed on paper.
    """
    ch0_img1 = np.zeros((8, 8))
    ch0_img1[0:4, 0:4] = 2.0  # 16-cell block
    ch0_img1[6, 0] = 2.0      # lone cell
    feats_img1 = np.stack([ch0_img1, np.zeros((8, 8))])

    ch1_img2 = np.zeros((8, 8))
    ch1_img2[1, 1] = 3.0
    ch1_img2[1, 2] = 3.0      # 2-cell component inside the box
    ch1_img2[6, 6] = 3.0      # outside the box
    feats_img2 = np.stack([np.zeros((8, 8)), ch1_img2])

    manifest = build_dataset(
        tmp_path,
        features_by_image={"img1": feats_img1, "img2": feats_img2},
        logits_by_image={
            "img1": np.array([2.0, -1.0]),
            "img2": np.array([-0.5, 1.5]),
        },
        class_names=["A", "B"],
        labels_by_image={"img1": [1, 0], "img2": [0, 1]},
        image_width=8,
        image_height=8,
    )
    annotations_path = tmp_path / "boxes.csv"
    annotations_path.write_text(
        "image_id,label,x,y,w,h\n"
        "img1,A,0,0,4,2\n"
        "img1,A,0,5,2,3\n"
        "img2,B,0,0,4,4\n"
    )
    head_path = tmp_path / "head.fmap"
    tensor_io.write_tensor(np.eye(2), head_path)
    return {
        "root": tmp_path,
        "manifest": manifest,
        "manifest_path": tmp_path / "manifest.json",
        "annotations_path": annotations_path,
        "annotations": tensor_io.load_annotations(annotations_path, manifest),
        "head_path": head_path,
    }


@pytest.fixture
def synthetic_dataset(tmp_path):
    """8 random images, 3 classes, 4 channels, 7x7 grid, 28x28 images."""
    rng = np.random.default_rng(42)
    class_names = ["Atelectasis", "Effusion", "Nodule"]
    features = {}
    logits = {}
    labels = {}
    rows = ["image_id,label,x,y,w,h"]
    for i in range(8):
        image_id = f"img{i}"
        features[image_id] = rng.standard_normal((4, 7, 7))
        logits[image_id] = rng.standard_normal(3)
        labels[image_id] = list(rng.integers(0, 2, size=3))
        for label in rng.choice(class_names, size=rng.integers(1, 3), replace=False):
            x, y = rng.uniform(0, 14, size=2)
            w, h = rng.uniform(4, 14, size=2)
            rows.append(f"{image_id},{label},{x:.2f},{y:.2f},{w:.2f},{h:.2f}")
    manifest = build_dataset(
        tmp_path, features, logits, class_names, labels,
        image_width=28, image_height=28,
    )
    annotations_path = tmp_path / "boxes.csv"
    annotations_path.write_text("\n".join(rows) + "\n")
    head_path = tmp_path / "head.fmap"
    tensor_io.write_tensor(rng.standard_normal((3, 4)), head_path)
    return {
        "root": tmp_path,
        "manifest": manifest,
        "manifest_path": tmp_path / "manifest.json",
        "annotations_path": annotations_path,
        "annotations": tensor_io.load_annotations(annotations_path, manifest),
        "head_path": head_path,
    }
