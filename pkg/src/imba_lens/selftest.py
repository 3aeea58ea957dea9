"""Self-contained oracle suites: slow, obviously-correct references.

Each suite draws seeded random instances, evaluates the fast implementation
against a brute-force reference, and reports the worst error observed. The
references here are deliberately naive (explicit loops, recursion-free flood
fill, O(N^2) pair counts) and share no code with the paths they check.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from imba_lens import alignment, dissection, losses, metrics
from imba_lens.cam import Heatmap
from imba_lens.losses import LossConfig
from imba_lens.metrics import ScoredSamples
from imba_lens.tensor_io import Box


@dataclass
class SuiteResult:
    name: str
    worst_error: float
    tolerance: float

    @property
    def passed(self) -> bool:
        return self.worst_error <= self.tolerance


def brute_force_alignment(values: np.ndarray, boxes: list[Box]) -> tuple[float, float]:
    """Per-pixel loop evaluation of soft IoBB / IoR."""
    h, w = values.shape
    in_union = 0
    inside = 0.0
    total = 0.0
    for r in range(h):
        for c in range(w):
            total += values[r, c]
            covered = False
            for b in boxes:
                if b.x < c + 1 and c < b.x + b.w and b.y < r + 1 and r < b.y + b.h:
                    covered = True
                    break
            if covered:
                in_union += 1
                inside += values[r, c]
    iobb = inside / in_union
    ior = inside / total if total > 0 else 0.0
    return iobb, ior


def flood_fill_count(mask: np.ndarray, connectivity: int) -> int:
    """Component count via explicit-stack flood fill."""
    h, w = mask.shape
    seen = np.zeros_like(mask, dtype=bool)
    if connectivity == 4:
        deltas = ((-1, 0), (1, 0), (0, -1), (0, 1))
    else:
        deltas = tuple(
            (dr, dc) for dr in (-1, 0, 1) for dc in (-1, 0, 1) if (dr, dc) != (0, 0)
        )
    count = 0
    for r in range(h):
        for c in range(w):
            if not mask[r, c] or seen[r, c]:
                continue
            count += 1
            stack = [(r, c)]
            seen[r, c] = True
            while stack:
                cr, cc = stack.pop()
                for dr, dc in deltas:
                    nr, nc = cr + dr, cc + dc
                    if 0 <= nr < h and 0 <= nc < w and mask[nr, nc] and not seen[nr, nc]:
                        seen[nr, nc] = True
                        stack.append((nr, nc))
    return count


def pairwise_auroc(scores: np.ndarray, labels: np.ndarray) -> float:
    """O(N^2) pair-counting AUROC."""
    pos = scores[labels == 1]
    neg = scores[labels == 0]
    correct = 0.0
    for sp in pos:
        for sn in neg:
            if sp > sn:
                correct += 1.0
            elif sp == sn:
                correct += 0.5
    return correct / (len(pos) * len(neg))


def naive_average_precision(scores: np.ndarray, labels: np.ndarray) -> float:
    """Prefix-by-prefix AP with the negatives-first tie rule."""
    items = sorted(range(len(scores)), key=lambda i: (-scores[i], labels[i]))
    n_pos = int(labels.sum())
    hits = 0
    total = 0.0
    for k, i in enumerate(items, start=1):
        if labels[i] == 1:
            hits += 1
            total += hits / k
    return total / n_pos


def run_gradient_suite(trials: int = 1000, seed: int = 0) -> list[SuiteResult]:
    results = []
    counts = [(3, 17)]
    for method in losses.METHODS:
        config = LossConfig(method=method, class_counts=counts)
        worst = losses.validate_grad(config, trials=trials, seed=seed)
        results.append(SuiteResult(f"gradient/{method}", worst, 1e-6))
    return results


def run_alignment_suite(trials: int = 500, seed: int = 0, size: int = 32) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        values = rng.random((size, size))
        boxes = []
        for _ in range(int(rng.integers(1, 4))):
            x = float(rng.uniform(0, size - 2))
            y = float(rng.uniform(0, size - 2))
            w = float(rng.uniform(1, size - x))
            h = float(rng.uniform(1, size - y))
            boxes.append(Box(label="c", x=x, y=y, w=w, h=h))
        score = alignment.score_heatmap(Heatmap(values, "image-pixels"), boxes)
        ref_iobb, ref_ior = brute_force_alignment(values, boxes)
        worst = max(worst, abs(score.iobb - ref_iobb), abs(score.ior - ref_ior))
    return SuiteResult("alignment/brute-force", worst, 1e-9)


def run_components_suite(trials: int = 500, seed: int = 0, max_size: int = 16) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        h = int(rng.integers(1, max_size + 1))
        w = int(rng.integers(1, max_size + 1))
        mask = rng.random((h, w)) < rng.uniform(0.2, 0.8)
        for conn in (4, 8):
            got = len(dissection.connected_components(mask, conn))
            ref = flood_fill_count(mask, conn)
            worst = max(worst, abs(got - ref))
    return SuiteResult("dissection/flood-fill", worst, 0.0)


def run_quantile_suite(
    trials: int = 50, seed: int = 0, qs: tuple[float, ...] = (0.01, 0.04, 0.5)
) -> SuiteResult:
    """Calibration of the order-statistic threshold on tie-free data."""
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(200, 2000))
        values = rng.standard_normal(n)
        for q in qs:
            tau = dissection.quantile_threshold(values, q)
            count = int((values >= tau).sum())
            # band q +- 1/n in counts: |count - q*n| <= 1
            worst = max(worst, abs(count - q * n) - 1.0)
    return SuiteResult("dissection/quantile-band", max(worst, 0.0), 1e-9)


def run_metrics_suite(trials: int = 200, seed: int = 0, max_n: int = 200) -> SuiteResult:
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        n = int(rng.integers(4, max_n + 1))
        scores = np.round(rng.random(n), 2)  # coarse grid to force ties
        labels = rng.integers(0, 2, size=n)
        if labels.sum() in (0, n):
            labels[0] = 1 - labels[0]
        samples = ScoredSamples(scores, labels)
        worst = max(worst, abs(metrics.auroc(samples) - pairwise_auroc(scores, labels)))
        worst = max(
            worst,
            abs(metrics.average_precision(samples) - naive_average_precision(scores, labels)),
        )
    return SuiteResult("metrics/pairwise", worst, 1e-12)


def run_all(trials: int = 500, seed: int = 0) -> list[SuiteResult]:
    results = run_gradient_suite(trials=max(trials, 1), seed=seed)
    results.append(run_alignment_suite(trials=trials, seed=seed))
    results.append(run_components_suite(trials=trials, seed=seed))
    results.append(run_quantile_suite(seed=seed))
    results.append(run_metrics_suite(trials=min(trials, 200), seed=seed))
    return results
