"""Deterministic synthetic test images."""
from __future__ import annotations

import numpy as np


def gaussian_blob(size: int = 48, sigma: float = 2.0, center=None, contrast: float = 1.0,
                  background: float = 0.0) -> np.ndarray:
    h, w = (size, size) if np.isscalar(size) else size
    cy, cx = ((h - 1) / 2.0, (w - 1) / 2.0) if center is None else center
    y, x = np.mgrid[0:h, 0:w]
    return background + contrast * np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2.0 * sigma**2))


def blob_field(seed: int, shape=(128, 128), n_blobs: int = 60, sigma_range=(1.5, 5.0)) -> np.ndarray:
    """Random bright and dark Gaussian blobs on a smooth ramp, scaled to [0.05, 0.95]."""
    rng = np.random.default_rng(seed)
    h, w = shape
    y, x = np.mgrid[0:h, 0:w].astype(np.float64)
    img = 0.3 * (x / w) + 0.2 * (y / h)
    for _ in range(n_blobs):
        cy, cx = rng.uniform(0, h), rng.uniform(0, w)
        sig = rng.uniform(*sigma_range)
        amp = rng.choice([-1.0, 1.0]) * rng.uniform(0.3, 1.0)
        img += amp * np.exp(-((y - cy) ** 2 + (x - cx) ** 2) / (2.0 * sig * sig))
    img -= img.min()
    img /= img.max()
    return 0.05 + 0.9 * img


def fixture_images(count: int = 5, shape=(128, 128)) -> list[np.ndarray]:
    return [blob_field(1000 + i, shape) for i in range(count)]
