"""Tour of the cost-sensitive loss family.

Shows how the four weight schemes respond to class imbalance and prediction
confidence, and checks the analytic gradients against finite differences.

Run:  python3 demos/demo_loss_family.py
"""

import numpy as np

from imba_lens.losses import (
    LossConfig,
    SampleBatch,
    class_weights,
    loss_value,
    validate_grad,
)

counts = [(10, 990)]  # a 1:99 imbalanced class

print("Positive/negative weights at a few probabilities (N+=10, N-=990)")
print(f"{'method':>8} {'p':>5} {'w+':>10} {'w-':>10}")
for method in ("bce", "wbce", "focal", "cbfocal"):
    config = LossConfig(method=method, class_counts=counts)
    for p in (0.1, 0.5, 0.9):
        w_plus, w_minus = class_weights(config, 0, p)
        print(f"{method:>8} {p:>5} {float(w_plus):>10.4f} {float(w_minus):>10.4f}")

print("\nLoss on a skewed batch (10 positives at p=0.3, 90 negatives at p=0.1)")
p = np.concatenate([np.full(10, 0.3), np.full(90, 0.1)])
y = np.concatenate([np.ones(10), np.zeros(90)])
batch = SampleBatch(p, y)
for method in ("bce", "wbce", "focal", "cbfocal"):
    config = LossConfig(method=method, class_counts=[(10, 90)])
    print(f"  {method:>8}: {loss_value(batch, config):.4f}")

print("\nGradient check (analytic vs central differences, 1000 trials)")
for method in ("bce", "wbce", "focal", "cbfocal"):
    config = LossConfig(method=method, class_counts=[(10, 90)])
    print(f"  {method:>8}: worst relative error {validate_grad(config, 1000, 0):.2e}")
