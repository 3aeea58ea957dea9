"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Every tolerance and runtime budget is pinned here; oracles are the naive
reference implementations from the per-module test files.
"""

import json
import time
from contextlib import contextmanager

import numpy as np
import pytest

from imba_lens import cli
from imba_lens.alignment import score_heatmap
from imba_lens.cam import Heatmap
from imba_lens.dissection import connected_components, quantile_threshold
from imba_lens.losses import METHODS, LossConfig, class_weights, validate_grad
from imba_lens.metrics import ScoredSamples, auroc, average_precision
from imba_lens.tensor_io import Box

from test_alignment import pixel_loop_scores, random_boxes
from test_dissection import bfs_component_count
from test_metrics import pair_count_auroc, prefix_ap


@contextmanager
def criterion(name, budget_s):
    start = time.perf_counter()
    try:
        yield
    except BaseException:
        print(f"[FAIL] {name}")
        raise
    elapsed = time.perf_counter() - start
    if elapsed > budget_s:
        print(f"[FAIL] {name} (runtime {elapsed:.2f}s > {budget_s}s)")
        pytest.fail(f"{name}: runtime {elapsed:.2f}s exceeds budget {budget_s}s")
    print(f"[PASS] {name} ({elapsed:.2f}s)")


def test_loss_closed_forms():
    with criterion("loss closed forms (1e-12)", 1.0):
        count_grid = [(1, 1), (1, 3), (5, 45), (100, 900), (7, 7)]
        p_grid = [1e-6, 0.1, 0.25, 0.5, 0.75, 0.9, 1 - 1e-6]
        hyper_grid = [
            (0.25, 2.0, 0.9999),  # the reference settings
            (0.5, 0.0, 0.0),
            (0.1, 1.0, 0.5),
            (0.75, 4.0, 0.99),
        ]
        for n_pos, n_neg in count_grid:
            for p in p_grid:
                for alpha, gamma, beta in hyper_grid:
                    counts = [(n_pos, n_neg)]
                    w = class_weights(
                        LossConfig("bce", class_counts=counts), 0, p
                    )
                    assert abs(w[0] - 1.0) < 1e-12 and abs(w[1] - 1.0) < 1e-12
                    w = class_weights(
                        LossConfig("wbce", class_counts=counts), 0, p
                    )
                    assert abs(w[0] - n_neg / (n_pos + n_neg)) < 1e-12
                    assert abs(w[1] - n_pos / (n_pos + n_neg)) < 1e-12
                    w = class_weights(
                        LossConfig("focal", alpha=alpha, gamma=gamma,
                                   class_counts=counts), 0, p
                    )
                    assert abs(w[0] - alpha * (1 - p) ** gamma) < 1e-12
                    assert abs(w[1] - (1 - alpha) * p**gamma) < 1e-12
                    w = class_weights(
                        LossConfig("cbfocal", gamma=gamma, beta=beta,
                                   class_counts=counts), 0, p
                    )
                    eff_pos = (1 - beta) / (1 - beta**n_pos) if beta else 1.0
                    eff_neg = (1 - beta) / (1 - beta**n_neg) if beta else 1.0
                    assert abs(w[0] - eff_pos * (1 - p) ** gamma) < 1e-12
                    assert abs(w[1] - eff_neg * p**gamma) < 1e-12


def test_gradient_oracle():
    with criterion("gradient vs central differences (1e-6)", 5.0):
        for method in METHODS:
            config = LossConfig(method, class_counts=[(5, 45)])
            worst = validate_grad(config, trials=1000, seed=11, step=1e-5)
            assert worst < 1e-6, f"{method}: {worst}"


def test_alignment_oracle():
    with criterion("soft IoBB/IoR vs per-pixel loops (1e-9)", 5.0):
        rng = np.random.default_rng(12)
        for _ in range(500):
            values = rng.random((32, 32))
            boxes = random_boxes(rng, 32, int(rng.integers(1, 4)))
            score = score_heatmap(Heatmap(values, "image-pixels"), boxes)
            ref_iobb, ref_ior = pixel_loop_scores(values, boxes)
            assert abs(score.iobb - ref_iobb) < 1e-9
            assert abs(score.ior - ref_ior) < 1e-9


def test_dissection_oracle():
    with criterion("components vs flood fill + quantile band", 10.0):
        rng = np.random.default_rng(13)
        for _ in range(500):
            h = int(rng.integers(1, 17))
            w = int(rng.integers(1, 17))
            mask = rng.random((h, w)) < rng.uniform(0.2, 0.8)
            for conn in (4, 8):
                got = len(connected_components(mask, conn))
                assert got == bfs_component_count(mask, conn)
        for q in (0.01, 0.04, 0.5):
            for _ in range(30):
                n = int(rng.integers(150, 2000))
                values = rng.standard_normal(n)
                tau = quantile_threshold(values, q)
                count = int((values >= tau).sum())
                assert abs(count - q * n) <= 1.0 + 1e-9


def test_metrics_oracle():
    with criterion("AUROC/AP vs brute force (1e-12)", 5.0):
        rng = np.random.default_rng(14)
        # forced edge cases
        tied = ScoredSamples([0.3] * 10, [1, 0] * 5)
        assert auroc(tied) == 0.5
        perfect = ScoredSamples([4.0, 3.0, 1.0, 0.0], [1, 1, 0, 0])
        assert auroc(perfect) == 1.0 and average_precision(perfect) == 1.0
        for _ in range(200):
            n = int(rng.integers(4, 201))
            scores = np.round(rng.random(n), 2)
            labels = rng.integers(0, 2, size=n)
            if labels.sum() in (0, n):
                labels[0] = 1 - labels[0]
            samples = ScoredSamples(scores, labels)
            assert abs(auroc(samples) - pair_count_auroc(scores, labels)) < 1e-12
            assert abs(
                average_precision(samples) - prefix_ap(scores, labels)
            ) < 1e-12


def test_determinism_across_runs_and_threads(synthetic_dataset, tmp_path):
    with criterion("byte-identical reports across runs and thread counts", 10.0):
        reports = {"align": "alignment.json", "dissect": "dissection.json",
                   "metrics": "metrics.json"}
        outputs = {name: set() for name in reports}
        run_id = 0
        for threads in (1, 4, 8):
            for _ in range(3):
                out = tmp_path / f"run{run_id}"
                run_id += 1
                base = [
                    "--manifest", str(synthetic_dataset["manifest_path"]),
                    "--annotations", str(synthetic_dataset["annotations_path"]),
                    "--head", str(synthetic_dataset["head_path"]),
                    "--out", str(out),
                    "--threads", str(threads),
                ]
                for command, filename in reports.items():
                    assert cli.main([command, *base]) == 0
                    outputs[command].add((out / filename).read_bytes())
        for command, blobs in outputs.items():
            assert len(blobs) == 1, f"{command} reports differ across runs"


def test_end_to_end_fixture(handcrafted_dataset, tmp_path):
    with criterion("handcrafted 2-image fixture, exact values", 1.0):
        base = [
            "--manifest", str(handcrafted_dataset["manifest_path"]),
            "--annotations", str(handcrafted_dataset["annotations_path"]),
            "--head", str(handcrafted_dataset["head_path"]),
            "--out", str(tmp_path),
        ]
        assert cli.main(["align", *base]) == 0
        align = json.loads((tmp_path / "alignment.json").read_text())
        by_class = {r["class"]: r for r in align["per_class"]}
        assert by_class["A"]["mean_iobb"] == 9 / 14
        assert by_class["A"]["mean_ior"] == 9 / 17
        assert by_class["B"]["mean_iobb"] == 2 / 16
        assert by_class["B"]["mean_ior"] == 2 / 3
        assert cli.main(["dissect", *base, "--q", "0.02"]) == 0
        dissect = json.loads((tmp_path / "dissection.json").read_text())
        assert dissect["disjoint"] == 1.5
        assert dissect["unique"] == 1.0
