"""
Descending the feature losses
=============================

Detector and descriptor maps have analytic gradients with respect to the
image. Here a blurred copy of an image is pulled back toward the original
by gradient descent on the combined detector and descriptor loss, and the
gradients are first checked against finite differences.
"""

import numpy as np

from diffsurf import default_scales, desc_loss, det_loss, gradcheck, loss_grad
from diffsurf.synthetic import blob_field

for op in ("detector", "descriptor"):
    report = gradcheck(op, trials=3, seed=0, coords=16)
    worst = max(c["max_rel_error"] for t in report["trials"] for c in t["checks"])
    print(f"{op}: passed={report['passed']}, worst relative error {worst:.1e}")

# %%
# A 3x3 box blur loses the fine structure that both losses respond to.

target = blob_field(seed=11, shape=(48, 48))
p = np.pad(target, 1, mode="edge")
current = sum(p[i : i + 48, j : j + 48] for i in range(3) for j in range(3)) / 9.0

scales = default_scales(2)
step = 0.5
print(f"start: mean |image - target| {np.abs(current - target).mean():.4f}")
for it in range(31):
    if it % 10 == 0:
        print(f"iter {it:2d}: det {det_loss(current, target, scales):.3e}  "
              f"desc {desc_loss(current, target, scales):.3e}")
    current = current - step * loss_grad("finetune", current, target, scales=scales)
print(f"end:   mean |image - target| {np.abs(current - target).mean():.4f}")
