"""Toy imbalanced-training harness.

A small CNN (global-average-pool + linear head, so CAMs apply) is trained on
a synthetic binary task: noisy images where positives carry a planted bright
blob. The four cost-sensitive losses are implemented here independently of
the analysis core; the analysis core cross-checks them through logged
(p, y) batches.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
import torch
from torch import nn

EPS = 1e-7


@dataclass
class ToyLossConfig:
    method: str = "bce"  # bce | wbce | focal | cbfocal
    alpha: float = 0.25
    gamma: float = 2.0
    beta: float = 0.9999
    n_pos: int = 0
    n_neg: int = 0


def cost_sensitive_loss(logits: torch.Tensor, labels: torch.Tensor,
                        config: ToyLossConfig) -> torch.Tensor:
    """Weighted BCE skeleton, summed over the batch.

    Evaluated in float64 so logged values can be compared against an
    external reimplementation at tight tolerance.
    """
    p = torch.sigmoid(logits.double()).clamp(EPS, 1.0 - EPS)
    y = labels.double()
    method = config.method
    if method == "bce":
        w_pos = torch.ones_like(p)
        w_neg = torch.ones_like(p)
    elif method == "wbce":
        total = config.n_pos + config.n_neg
        w_pos = torch.full_like(p, config.n_neg / total)
        w_neg = torch.full_like(p, config.n_pos / total)
    elif method == "focal":
        w_pos = config.alpha * (1.0 - p) ** config.gamma
        w_neg = (1.0 - config.alpha) * p**config.gamma
    elif method == "cbfocal":
        eff_pos = (1.0 - config.beta) / (1.0 - config.beta**config.n_pos)
        eff_neg = (1.0 - config.beta) / (1.0 - config.beta**config.n_neg)
        w_pos = eff_pos * (1.0 - p) ** config.gamma
        w_neg = eff_neg * p**config.gamma
    else:
        raise ValueError(f"unknown method {method!r}")
    terms = w_pos * y * torch.log(p) + w_neg * (1.0 - y) * torch.log1p(-p)
    return -terms.sum()


class ToyConvNet(nn.Module):
    """Two conv blocks, global average pool, linear head over channels."""

    def __init__(self, channels: int = 8):
        super().__init__()
        self.features = nn.Sequential(
            nn.Conv2d(1, channels, 3, padding=1),
            nn.ReLU(),
            nn.Conv2d(channels, channels, 3, padding=1),
            nn.ReLU(),
        )
        self.pool = nn.AdaptiveAvgPool2d(1)
        self.head = nn.Linear(channels, 1)

    def forward(self, x):
        feats = self.features(x)
        pooled = self.pool(feats).flatten(1)
        return self.head(pooled).squeeze(1)


def make_synthetic_dataset(
    n_pos: int, n_neg: int, seed: int, size: int = 24, blob: float = 2.5
) -> tuple[np.ndarray, np.ndarray]:
    """Noise images; positives get a bright 3x3 blob at a random spot."""
    rng = np.random.default_rng(seed)
    n = n_pos + n_neg
    images = rng.standard_normal((n, 1, size, size)).astype(np.float32)
    labels = np.zeros(n, dtype=np.float32)
    labels[:n_pos] = 1.0
    for i in range(n_pos):
        r = int(rng.integers(1, size - 4))
        c = int(rng.integers(1, size - 4))
        images[i, 0, r : r + 3, c : c + 3] += blob
    order = rng.permutation(n)
    return images[order], labels[order]


@dataclass
class TrainResult:
    model: ToyConvNet
    epoch_losses: list[float]
    epoch_pos_probs: list[float]
    logged_batches: list[dict] = field(default_factory=list)

    @property
    def final_pos_prob(self) -> float:
        return self.epoch_pos_probs[-1]


def train_toy(
    config: ToyLossConfig,
    imbalance_ratio: float,
    epochs: int,
    seed: int,
    n_pos: int = 30,
    batch_size: int = 32,
    lr: float = 1e-3,
    log_batches: int = 4,
) -> TrainResult:
    """Train the toy CNN under the selected loss at N-/N+ = imbalance_ratio.

    Logs per-epoch summed loss and mean predicted probability on positives,
    plus the first few batches' (p, y, loss) for cross-component checks.
    Raises on divergence (non-finite loss).
    """
    if imbalance_ratio < 1:
        raise ValueError(f"imbalance_ratio must be >= 1, got {imbalance_ratio}")
    if epochs < 0:
        raise ValueError(f"epochs must be >= 0, got {epochs}")
    n_neg = int(round(n_pos * imbalance_ratio))
    config.n_pos, config.n_neg = n_pos, n_neg
    torch.manual_seed(seed)
    model = ToyConvNet()
    images, labels = make_synthetic_dataset(n_pos, n_neg, seed)
    x = torch.from_numpy(images)
    y = torch.from_numpy(labels)
    optimizer = torch.optim.Adam(model.parameters(), lr=lr)
    result = TrainResult(model=model, epoch_losses=[], epoch_pos_probs=[])
    for epoch in range(epochs):
        model.train()
        perm = torch.randperm(x.shape[0])
        epoch_loss = 0.0
        for start in range(0, x.shape[0], batch_size):
            idx = perm[start : start + batch_size]
            logits = model(x[idx])
            loss = cost_sensitive_loss(logits, y[idx], config)
            if not torch.isfinite(loss):
                raise FloatingPointError(f"loss diverged at epoch {epoch}")
            optimizer.zero_grad()
            loss.backward()
            optimizer.step()
            epoch_loss += loss.item()
            if len(result.logged_batches) < log_batches:
                p = torch.sigmoid(logits.detach().double()).clamp(EPS, 1 - EPS)
                result.logged_batches.append(
                    {
                        "probabilities": p.numpy().tolist(),
                        "labels": y[idx].numpy().tolist(),
                        "loss": loss.item(),
                    }
                )
        model.eval()
        with torch.no_grad():
            probs = torch.sigmoid(model(x))
            pos_prob = float(probs[y == 1].mean())
        result.epoch_losses.append(epoch_loss)
        result.epoch_pos_probs.append(pos_prob)
    if not epochs:
        model.eval()
        with torch.no_grad():
            probs = torch.sigmoid(model(x))
            result.epoch_pos_probs.append(float(probs[y == 1].mean()))
            result.epoch_losses.append(float("nan"))
    return result
