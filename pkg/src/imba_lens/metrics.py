"""Ranking metrics: AUROC, average precision, mean predicted probability.

AUROC uses the tie-corrected rank-sum (Mann-Whitney) form. AP is the
non-interpolated step-wise variant; within a score tie positives sort last,
which makes the value deterministic and pessimistic.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from imba_lens.losses import sigmoid


@dataclass
class ScoredSamples:
    scores: np.ndarray
    labels: np.ndarray
    class_name: str = ""
    scores_are_probabilities: bool = False

    def __post_init__(self):
        self.scores = np.asarray(self.scores, dtype=np.float64)
        self.labels = np.asarray(self.labels, dtype=np.int64)
        if self.scores.shape != self.labels.shape or self.scores.ndim != 1:
            raise ValueError(
                f"scores/labels must be equal-length 1-D, got "
                f"{self.scores.shape} vs {self.labels.shape}"
            )
        if self.scores.size == 0:
            raise ValueError("empty sample set")

    @property
    def probabilities(self) -> np.ndarray:
        if self.scores_are_probabilities:
            return self.scores
        return sigmoid(self.scores)


def _average_ranks(scores: np.ndarray) -> np.ndarray:
    """1-based ranks, ties assigned their average rank."""
    order = np.argsort(scores, kind="stable")
    ranks = np.empty(scores.size, dtype=np.float64)
    sorted_scores = scores[order]
    i = 0
    while i < scores.size:
        j = i
        while j + 1 < scores.size and sorted_scores[j + 1] == sorted_scores[i]:
            j += 1
        ranks[order[i : j + 1]] = (i + j) / 2.0 + 1.0
        i = j + 1
    return ranks


def auroc(samples: ScoredSamples) -> float:
    """(#correctly ordered pos/neg pairs + half the ties) / (N+ * N-)."""
    y = samples.labels
    n_pos = int(y.sum())
    n_neg = y.size - n_pos
    if n_pos == 0 or n_neg == 0:
        raise ValueError("auroc needs at least one positive and one negative")
    ranks = _average_ranks(samples.scores)
    rank_sum = float(ranks[y == 1].sum())
    return (rank_sum - n_pos * (n_pos + 1) / 2.0) / (n_pos * n_neg)


def average_precision(samples: ScoredSamples) -> float:
    """Step-wise AP over descending-score prefixes."""
    y = samples.labels
    n_pos = int(y.sum())
    if n_pos == 0:
        raise ValueError("average precision needs at least one positive")
    # descending score; within a tie negatives first (stable lexsort)
    order = np.lexsort((y, -samples.scores))
    y_sorted = y[order]
    cum_pos = np.cumsum(y_sorted)
    k = np.arange(1, y.size + 1)
    precision = cum_pos / k
    return float(precision[y_sorted == 1].sum() / n_pos)


def mean_predicted_prob(samples: ScoredSamples) -> float:
    """Mean predicted probability over positive-labeled samples."""
    pos = samples.labels == 1
    if not pos.any():
        raise ValueError("no positive samples")
    return float(samples.probabilities[pos].mean())


def metrics_report(manifest, binary_positive_name: str = "Unhealthy") -> dict:
    """Per-class AUROC/AP/mean-prob rows plus a class-wise average row.

    Single-class manifests get one row named after the class (binary task
    presentation); classes lacking both label values report metrics as None.
    """
    from imba_lens import tensor_io

    labels = np.stack([e.labels for e in manifest.entries])
    logits = np.stack(
        [tensor_io.read_tensor(manifest.resolve(e.logits_path)) for e in manifest.entries]
    )
    rows = []
    for m, name in enumerate(manifest.class_names):
        samples = ScoredSamples(logits[:, m], labels[:, m], class_name=name)
        n_pos = int(samples.labels.sum())
        n_neg = samples.labels.size - n_pos
        row = {"class": name, "n_pos": n_pos, "n_neg": n_neg,
               "auroc": None, "ap": None, "mean_prob": None}
        if n_pos > 0:
            row["ap"] = average_precision(samples)
            row["mean_prob"] = mean_predicted_prob(samples)
            if n_neg > 0:
                row["auroc"] = auroc(samples)
        rows.append(row)
    if len(rows) > 1:
        def col_mean(key):
            vals = [r[key] for r in rows if r[key] is not None]
            return float(np.mean(vals)) if vals else None

        rows.append(
            {
                "class": "Average",
                "n_pos": int(labels.sum()),
                "n_neg": int((1 - labels).sum()),
                "auroc": col_mean("auroc"),
                "ap": col_mean("ap"),
                "mean_prob": col_mean("mean_prob"),
            }
        )
    return {"rows": rows}
