import numpy as np
import pytest

from diffsurf.synthetic import fixture_images


def dense_correlate(img, spec, border="zero"):
    """Brute-force evaluation of a BoxFilterSpec by shifting whole planes.

    ``border="zero"`` treats pixels outside as 0 (same as truncated boxes),
    ``"edge"`` replicates the outermost pixels.
    """
    img = np.asarray(img, dtype=np.float64)
    kernel, r_lo, c_lo = spec.dense_kernel()
    kh, kw = kernel.shape
    H, W = img.shape
    pad = max(abs(r_lo), abs(c_lo), abs(r_lo + kh), abs(c_lo + kw)) + 1
    if border == "zero":
        p = np.pad(img, pad)
    else:
        p = np.pad(img, pad, mode="edge")
    out = np.zeros((H, W))
    for i in range(kh):
        for j in range(kw):
            if kernel[i, j] != 0:
                dy, dx = r_lo + i, c_lo + j
                out += kernel[i, j] * p[pad + dy : pad + dy + H, pad + dx : pad + dx + W]
    return out


@pytest.fixture
def rng():
    return np.random.default_rng(12345)


@pytest.fixture(scope="session")
def fixtures5():
    return fixture_images(5)
