import json

import numpy as np
import pytest
import torch

from imba_export import toy


@pytest.fixture
def toy_dataset_dir(tmp_path):
    """3-image dataset directory in the exporter's on-disk input layout."""
    rng = np.random.default_rng(0)
    data_dir = tmp_path / "data"
    data_dir.mkdir()
    labels = {}
    for i in range(3):
        image_id = f"img{i}"
        arr = rng.standard_normal((24, 24)).astype(np.float32)
        if i == 0:
            arr[5:8, 5:8] += 2.5
        np.save(data_dir / f"{image_id}.npy", arr)
        labels[image_id] = [1 if i == 0 else 0]
    (data_dir / "labels.json").write_text(json.dumps(labels))
    return data_dir


@pytest.fixture
def toy_model():
    torch.manual_seed(7)
    return toy.ToyConvNet()
