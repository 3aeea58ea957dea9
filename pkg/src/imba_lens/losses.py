"""Unified cost-sensitive loss family for intra-class imbalance.

One binary cross-entropy skeleton

    L = - sum_i [ w+ * y_i * log p_i  +  w- * (1 - y_i) * log(1 - p_i) ]

with four weight schemes per class (N+/N- are that class's positive and
negative sample counts):

    bce      w+ = w- = 1
    wbce     w+ = N- / (N+ + N-),          w- = N+ / (N+ + N-)
    focal    w+ = alpha * (1 - p)^gamma,   w- = (1 - alpha) * p^gamma
    cbfocal  w+ = (1-beta)/(1-beta^N+) * (1-p)^gamma
             w- = (1-beta)/(1-beta^N-) * p^gamma

Gradients with respect to logits differentiate through the p-dependent
weights (the focal-loss convention) and are validated against central finite
differences by :func:`validate_grad`.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

EPS = 1e-7

METHODS = ("bce", "wbce", "focal", "cbfocal")


class LossConfigError(ValueError):
    """Invalid loss configuration for the requested evaluation."""


@dataclass
class LossConfig:
    """Loss family selector plus hyper-parameters and per-class counts.

    ``class_counts[m] = (N_plus, N_minus)`` for class ``m``; only needed by
    wbce and cbfocal.
    """

    method: str = "bce"
    alpha: float = 0.25
    gamma: float = 2.0
    beta: float = 0.9999
    class_counts: list[tuple[int, int]] = field(default_factory=list)

    def __post_init__(self):
        self.method = self.method.lower().replace("-", "").replace("_", "")
        if self.method not in METHODS:
            raise LossConfigError(f"unknown method {self.method!r}")
        if self.method in ("focal", "cbfocal") and self.gamma < 0:
            raise LossConfigError(f"gamma must be >= 0, got {self.gamma}")
        if self.method == "focal" and not 0.0 < self.alpha < 1.0:
            raise LossConfigError(f"alpha must be in (0,1), got {self.alpha}")
        if self.method == "cbfocal" and not 0.0 <= self.beta < 1.0:
            raise LossConfigError(f"beta must be in [0,1), got {self.beta}")

    def counts(self, class_index: int) -> tuple[int, int]:
        try:
            n_pos, n_neg = self.class_counts[class_index]
        except IndexError:
            raise LossConfigError(
                f"no class counts for class {class_index}"
            ) from None
        if n_pos < 0 or n_neg < 0 or n_pos + n_neg < 1:
            raise LossConfigError(f"bad counts for class {class_index}: {n_pos}, {n_neg}")
        return n_pos, n_neg


@dataclass
class SampleBatch:
    """Per-class batch of probabilities (or logits) and binary labels."""

    probabilities: np.ndarray
    labels: np.ndarray

    @classmethod
    def from_logits(cls, logits, labels) -> "SampleBatch":
        return cls(sigmoid(np.asarray(logits, dtype=np.float64)), labels)

    def __post_init__(self):
        self.probabilities = np.asarray(self.probabilities, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.probabilities.shape != self.labels.shape:
            raise ValueError(
                f"shape mismatch: p {self.probabilities.shape} vs y {self.labels.shape}"
            )


def sigmoid(z):
    z = np.asarray(z, dtype=np.float64)
    out = np.empty_like(z)
    pos = z >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-z[pos]))
    ez = np.exp(z[~pos])
    out[~pos] = ez / (1.0 + ez)
    return out


def clamp_probs(p):
    return np.clip(np.asarray(p, dtype=np.float64), EPS, 1.0 - EPS)


def _effective_weight(beta: float, n: int) -> float:
    # (1 - beta) / (1 - beta^n); beta=0 gives 1 for any n >= 1
    if n <= 0:
        raise LossConfigError(f"cbfocal needs class count >= 1, got {n}")
    denom = 1.0 - beta**n
    if denom == 0.0:
        raise LossConfigError(f"1 - beta^{n} vanishes for beta={beta}")
    return (1.0 - beta) / denom


def class_weights(config: LossConfig, class_index: int, p):
    """Positive/negative weights (w+, w-) at probability ``p``.

    ``p`` may be a scalar or array; bce/wbce weights are constant in p,
    focal/cbfocal depend on it.
    """
    p = np.asarray(p, dtype=np.float64)
    method = config.method
    if method == "bce":
        w_plus = np.ones_like(p)
        w_minus = np.ones_like(p)
    elif method == "wbce":
        n_pos, n_neg = config.counts(class_index)
        total = n_pos + n_neg
        w_plus = np.full_like(p, n_neg / total)
        w_minus = np.full_like(p, n_pos / total)
    elif method == "focal":
        w_plus = config.alpha * (1.0 - p) ** config.gamma
        w_minus = (1.0 - config.alpha) * p**config.gamma
    else:  # cbfocal
        n_pos, n_neg = config.counts(class_index)
        w_plus = _effective_weight(config.beta, n_pos) * (1.0 - p) ** config.gamma
        w_minus = _effective_weight(config.beta, n_neg) * p**config.gamma
    return w_plus, w_minus


def _weight_derivatives(config: LossConfig, class_index: int, p):
    """d(w+)/dp and d(w-)/dp at clamped probability ``p``."""
    p = np.asarray(p, dtype=np.float64)
    method = config.method
    if method in ("bce", "wbce"):
        zero = np.zeros_like(p)
        return zero, zero
    gamma = config.gamma
    if method == "focal":
        a_pos, a_neg = config.alpha, 1.0 - config.alpha
    else:
        n_pos, n_neg = config.counts(class_index)
        a_pos = _effective_weight(config.beta, n_pos)
        a_neg = _effective_weight(config.beta, n_neg)
    if gamma == 0.0:
        zero = np.zeros_like(p)
        return zero, zero
    dw_plus = -a_pos * gamma * (1.0 - p) ** (gamma - 1.0)
    dw_minus = a_neg * gamma * p ** (gamma - 1.0)
    return dw_plus, dw_minus


def loss_value(
    batch: SampleBatch,
    config: LossConfig,
    class_index: int = 0,
    reduction: str = "sum",
) -> float:
    """Loss over the batch: sum (default) or mean of per-sample terms."""
    if batch.probabilities.size == 0:
        raise ValueError("empty batch")
    if reduction not in ("sum", "mean"):
        raise ValueError(f"unknown reduction {reduction!r}")
    p = clamp_probs(batch.probabilities)
    y = np.asarray(batch.labels, dtype=np.float64)
    w_plus, w_minus = class_weights(config, class_index, p)
    terms = -(w_plus * y * np.log(p) + w_minus * (1.0 - y) * np.log1p(-p))
    total = float(np.sum(terms))
    return total / p.size if reduction == "mean" else total


def loss_grad_logits(
    logits,
    labels,
    config: LossConfig,
    class_index: int = 0,
    reduction: str = "sum",
) -> np.ndarray:
    """Gradient of :func:`loss_value` with respect to each logit.

    Differentiates the exact implemented expression: the probability is
    clamped to [EPS, 1-EPS] before the logs, so inside the clamp band

        dL/dz = dL/dp * p * (1 - p)

    with dL/dp including the p-dependence of focal/cbfocal weights; outside
    the band the clamp makes the loss locally constant and the gradient 0.
    """
    z = np.asarray(logits, dtype=np.float64)
    y = np.asarray(labels, dtype=np.float64)
    if z.shape != y.shape:
        raise ValueError(f"shape mismatch: z {z.shape} vs y {y.shape}")
    p_raw = sigmoid(z)
    p = clamp_probs(p_raw)
    w_plus, w_minus = class_weights(config, class_index, p)
    dw_plus, dw_minus = _weight_derivatives(config, class_index, p)
    log_p = np.log(p)
    log_1mp = np.log1p(-p)
    dl_dp = -(
        y * (dw_plus * log_p + w_plus / p)
        + (1.0 - y) * (dw_minus * log_1mp - w_minus / (1.0 - p))
    )
    dp_dz = np.where((p_raw > EPS) & (p_raw < 1.0 - EPS), p_raw * (1.0 - p_raw), 0.0)
    grad = dl_dp * dp_dz
    return grad / z.size if reduction == "mean" else grad


def validate_grad(
    config: LossConfig,
    trials: int = 1000,
    seed: int = 0,
    step: float = 1e-5,
) -> float:
    """Worst relative error of the analytic gradient vs central differences.

    Draws random (z, y) pairs with z kept away from the clamp band so the
    finite-difference stencil stays on the smooth branch.
    """
    if trials < 1:
        raise ValueError(f"trials must be >= 1, got {trials}")
    rng = np.random.default_rng(seed)
    worst = 0.0
    for _ in range(trials):
        z = float(rng.uniform(-6.0, 6.0))
        y = float(rng.integers(0, 2))
        analytic = float(loss_grad_logits([z], [y], config)[0])
        lo = loss_value(SampleBatch.from_logits([z - step], [y]), config)
        hi = loss_value(SampleBatch.from_logits([z + step], [y]), config)
        numeric = (hi - lo) / (2.0 * step)
        scale = max(abs(analytic), abs(numeric), 1e-12)
        worst = max(worst, abs(analytic - numeric) / scale)
    return worst


def loss_report(manifest, config: LossConfig, p_probe: float = 0.5) -> dict:
    """Per-class loss summary over a manifest's logits and labels.

    For each class: counts, weights at ``p_probe`` (constant methods ignore
    it), and the summed loss over the dataset's sigmoid probabilities.
    """
    from imba_lens import tensor_io

    labels = np.stack([e.labels for e in manifest.entries])  # N x M
    logits = np.stack(
        [tensor_io.read_tensor(manifest.resolve(e.logits_path)) for e in manifest.entries]
    )
    cfg = LossConfig(
        method=config.method,
        alpha=config.alpha,
        gamma=config.gamma,
        beta=config.beta,
        class_counts=[
            (int(labels[:, m].sum()), int((1 - labels[:, m]).sum()))
            for m in range(manifest.num_classes)
        ],
    )
    per_class = []
    for m, name in enumerate(manifest.class_names):
        n_pos, n_neg = cfg.class_counts[m]
        w_plus, w_minus = class_weights(cfg, m, p_probe)
        batch = SampleBatch.from_logits(logits[:, m], labels[:, m])
        per_class.append(
            {
                "class": name,
                "N_plus": n_pos,
                "N_minus": n_neg,
                "w_plus": float(w_plus),
                "w_minus": float(w_minus),
                "loss_value": loss_value(batch, cfg, class_index=m),
            }
        )
    return {
        "method": cfg.method,
        "hyper_params": {"alpha": cfg.alpha, "gamma": cfg.gamma, "beta": cfg.beta},
        "per_class": per_class,
    }
