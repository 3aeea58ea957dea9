import numpy as np
import pytest

from imba_lens.dissection import (
    ChannelThresholds,
    DissectionConfig,
    boxes_to_grid_mask,
    channel_thresholds,
    concept_report,
    connected_components,
    detect_concepts,
    quantile_threshold,
    scale_box_to_grid,
)
from imba_lens.tensor_io import Box


def bfs_component_count(mask, connectivity):
    """Independent flood-fill counter."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    if connectivity == 4:
        deltas = [(-1, 0), (1, 0), (0, -1), (0, 1)]
    else:
        deltas = [(dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if dr or dc]
    count = 0
    for r in range(h):
        for c in range(w):
            if mask[r, c] and not seen[r, c]:
                count += 1
                frontier = [(r, c)]
                seen[r, c] = True
                while frontier:
                    cr, cc = frontier.pop()
                    for dr, dc in deltas:
                        nr, nc = cr + dr, cc + dc
                        if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] and not seen[nr, nc]:
                            seen[nr, nc] = True
                            frontier.append((nr, nc))
    return count


class TestQuantileThreshold:
    def test_enumerated_1_to_100(self):
        values = np.arange(1, 101, dtype=float)
        # order statistic v[ceil((1-q)*n)], 1-indexed ascending
        tau = quantile_threshold(values, 0.01)
        assert tau == 99.0
        assert (values >= tau).sum() == 2  # within the +-1/n band around q
        tau = quantile_threshold(values, 0.5)
        assert tau == 50.0
        assert (values >= tau).sum() == 51

    def test_constant_values(self):
        values = np.full(50, 3.0)
        assert quantile_threshold(values, 0.1) == 3.0

    def test_calibration_band_continuous(self):
        rng = np.random.default_rng(0)
        for q in (0.01, 0.04, 0.5):
            for _ in range(20):
                n = int(rng.integers(100, 1500))
                values = rng.standard_normal(n)
                tau = quantile_threshold(values, q)
                count = (values >= tau).sum()
                assert abs(count - q * n) <= 1.0 + 1e-9


class TestConnectedComponents:
    def test_all_false(self):
        assert connected_components(np.zeros((3, 3), dtype=bool)) == []

    def test_all_true_single_component(self):
        comps = connected_components(np.ones((4, 5), dtype=bool))
        assert len(comps) == 1 and len(comps[0]) == 20

    def test_diagonal_touch(self):
        mask = np.array([[1, 0], [0, 1]], dtype=bool)
        assert len(connected_components(mask, 4)) == 2
        assert len(connected_components(mask, 8)) == 1

    @pytest.mark.parametrize("connectivity", [4, 8])
    def test_matches_flood_fill_random(self, connectivity):
        rng = np.random.default_rng(1)
        for _ in range(100):
            h = int(rng.integers(1, 17))
            w = int(rng.integers(1, 17))
            mask = rng.random((h, w)) < rng.uniform(0.2, 0.8)
            got = connected_components(mask, connectivity)
            assert len(got) == bfs_component_count(mask, connectivity)
            # partition check: components cover exactly the true cells
            cells = [cell for comp in got for cell in comp]
            assert len(cells) == len(set(cells)) == int(mask.sum())

    def test_empty_mask_dims_rejected(self):
        with pytest.raises(ValueError):
            connected_components(np.zeros((0, 3), dtype=bool))


class TestBoxScaling:
    def test_grid_equals_image_is_identity(self):
        box = Box("c", 1, 2, 3, 4)
        assert scale_box_to_grid(box, 8, 8, 8, 8) == (2, 6, 1, 4)

    def test_pixel_footprint_intersection(self):
        # 28x28 image on a 7x7 grid: each cell covers 4x4 pixels
        box = Box("c", 5, 0, 2, 4)  # columns 5-6 -> cell 1 only
        r0, r1, c0, c1 = scale_box_to_grid(box, 28, 28, 7, 7)
        assert (c0, c1) == (1, 2)
        assert (r0, r1) == (0, 1)
        box = Box("c", 3, 0, 2, 4)  # columns 3-4 straddle cells 0 and 1
        _, _, c0, c1 = scale_box_to_grid(box, 28, 28, 7, 7)
        assert (c0, c1) == (0, 2)


class TestDetectConcepts:
    def make_thresholds(self, tau, degenerate=None):
        tau = np.asarray(tau, dtype=float)
        if degenerate is None:
            degenerate = np.zeros(tau.size, dtype=bool)
        return ChannelThresholds(tau=tau, degenerate=np.asarray(degenerate))

    def test_component_inside_box(self):
        features = np.zeros((1, 4, 4))
        features[0, 1, 1] = 5.0
        features[0, 1, 2] = 5.0
        box_mask = np.zeros((4, 4), dtype=bool)
        box_mask[0:3, 0:3] = True
        counts = detect_concepts(
            features, self.make_thresholds([1.0]), box_mask, DissectionConfig(q=0.1)
        )
        assert counts.tolist() == [1]

    def test_component_outside_box(self):
        features = np.zeros((1, 4, 4))
        features[0, 3, 3] = 5.0
        box_mask = np.zeros((4, 4), dtype=bool)
        box_mask[0:2, 0:2] = True
        counts = detect_concepts(
            features, self.make_thresholds([1.0]), box_mask, DissectionConfig(q=0.1)
        )
        assert counts.tolist() == [0]

    def test_two_components_one_box(self):
        features = np.zeros((1, 5, 5))
        features[0, 0, 0] = 5.0
        features[0, 4, 4] = 5.0
        box_mask = np.ones((5, 5), dtype=bool)
        counts = detect_concepts(
            features, self.make_thresholds([1.0]), box_mask, DissectionConfig(q=0.1)
        )
        assert counts.tolist() == [2]

    def test_degenerate_channel_counts_zero(self):
        features = np.ones((1, 4, 4))
        box_mask = np.ones((4, 4), dtype=bool)
        counts = detect_concepts(
            features,
            self.make_thresholds([1.0], degenerate=[True]),
            box_mask,
            DissectionConfig(q=0.1),
        )
        assert counts.tolist() == [0]

    def test_mask_superset_at_larger_q(self):
        rng = np.random.default_rng(2)
        values = rng.standard_normal(500)
        tau_small_q = quantile_threshold(values, 0.05)
        tau_large_q = quantile_threshold(values, 0.5)
        small = values >= tau_small_q
        large = values >= tau_large_q
        assert np.all(large[small])  # smaller-q mask is a subset


class TestConceptReport:
    def test_handcrafted_dataset(self, handcrafted_dataset):
        manifest = handcrafted_dataset["manifest"]
        config = DissectionConfig(q=0.02, connectivity=8)
        thresholds = channel_thresholds(manifest, config)
        assert thresholds.tau.tolist() == [2.0, 3.0]
        assert not thresholds.degenerate.any()
        report = concept_report(
            manifest, handcrafted_dataset["annotations"], thresholds, config
        )
        assert report.n_images == 2
        assert report.disjoint == pytest.approx(1.5)  # (2 + 1) / 2
        assert report.unique == pytest.approx(1.0)  # (1 + 1) / 2
        assert report.per_channel[0] == {
            "channel": 0, "images_with_detection": 1, "total_components": 2,
        }
        assert report.per_channel[1] == {
            "channel": 1, "images_with_detection": 1, "total_components": 1,
        }

    def test_degenerate_channels_flagged(self, tmp_path):
        from conftest import build_dataset

        feats = np.zeros((2, 4, 4))
        feats[1, 0, 0] = 1.0
        manifest = build_dataset(
            tmp_path, {"img1": feats}, {"img1": np.array([0.5])}, ["A"],
            {"img1": [1]}, image_width=4, image_height=4,
        )
        config = DissectionConfig(q=0.05)
        thresholds = channel_thresholds(manifest, config)
        assert thresholds.degenerate.tolist() == [True, False]
        report = concept_report(
            manifest, {"img1": [Box("A", 0, 0, 4, 4)]}, thresholds, config
        )
        assert report.degenerate_channels == [0]
        assert report.per_channel[0]["total_components"] == 0

    def test_no_annotations_rejected(self, handcrafted_dataset):
        config = DissectionConfig(q=0.02)
        thresholds = channel_thresholds(handcrafted_dataset["manifest"], config)
        with pytest.raises(ValueError, match="no annotated"):
            concept_report(handcrafted_dataset["manifest"], {}, thresholds, config)

    def test_unique_bounded_by_disjoint(self, synthetic_dataset):
        config = DissectionConfig(q=0.04)
        thresholds = channel_thresholds(synthetic_dataset["manifest"], config)
        report = concept_report(
            synthetic_dataset["manifest"], synthetic_dataset["annotations"],
            thresholds, config,
        )
        assert 0.0 <= report.unique <= report.disjoint
        assert report.unique <= synthetic_dataset["manifest"].layer_shape[0]


class TestConfig:
    def test_invalid_q(self):
        with pytest.raises(ValueError):
            DissectionConfig(q=0.0)
        with pytest.raises(ValueError):
            DissectionConfig(q=1.0)

    def test_invalid_connectivity(self):
        with pytest.raises(ValueError):
            DissectionConfig(connectivity=6)
