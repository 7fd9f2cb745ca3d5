"""Grayscale images, integral images and O(1) box filtering.

Images are plain 2-D numpy arrays (float32 when loaded from disk). Every
numerical routine promotes to float64 internally.
"""
from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np
from PIL import Image

# Rec.601 luma
LUMA_WEIGHTS = np.array([0.299, 0.587, 0.114])


def as_gray(data, dtype=np.float64) -> np.ndarray:
    """Validate ``data`` as a single-channel image and return it as ``dtype``."""
    arr = np.asarray(data, dtype=dtype)
    if arr.ndim != 2:
        raise ValueError(f"expected a 2-D image, got shape {arr.shape}")
    if arr.shape[0] == 0 or arr.shape[1] == 0:
        raise ValueError("image has a zero dimension")
    if not np.all(np.isfinite(arr)):
        raise ValueError("image contains NaN or Inf")
    return arr


def load_image(path) -> np.ndarray:
    """Read a PNG or binary PGM file as a float32 gray image in [0, 1]."""
    path = Path(path)
    if not path.is_file():
        raise FileNotFoundError(path)
    try:
        with Image.open(path) as im:
            im.load()
            if im.format not in ("PNG", "PPM"):
                raise ValueError(f"unsupported image format: {im.format}")
            mode = im.mode
            if mode == "P":
                im = im.convert("RGBA" if "transparency" in im.info else "RGB")
                mode = im.mode
            arr = np.asarray(im)
    except OSError as exc:
        raise ValueError(f"cannot read image {path}: {exc}") from exc

    if mode in ("1", "L", "LA", "RGB", "RGBA"):
        scale = 255.0
    elif mode.startswith("I;16") or mode == "I":
        scale = 65535.0
    else:
        raise ValueError(f"unsupported pixel mode: {mode}")
    arr = arr.astype(np.float64)
    if mode == "1":
        arr = arr * 255.0
    if arr.ndim == 3:
        if arr.shape[2] in (3, 4):
            arr = arr[..., :3] @ LUMA_WEIGHTS
        else:  # LA
            arr = arr[..., 0]
    gray = arr / scale
    if gray.size == 0:
        raise ValueError("image has a zero dimension")
    return as_gray(gray, np.float32)


def save_image(img, path) -> None:
    """Write an image in [0, 1] as 8-bit PNG or PGM (chosen by extension)."""
    path = Path(path)
    arr = as_gray(img)
    data = np.clip(np.rint(np.clip(arr, 0.0, 1.0) * 255.0), 0, 255).astype(np.uint8)
    suffix = path.suffix.lower()
    if suffix == ".png":
        fmt = "PNG"
    elif suffix in (".pgm", ".pnm"):
        fmt = "PPM"
    else:
        raise ValueError(f"unsupported output extension: {suffix}")
    Image.fromarray(data, mode="L").save(path, format=fmt)


class IntegralImage:
    """Summed-area table with clamped rectangle lookups.

    ``data`` carries a leading zero row and column, so ``data[y + 1, x + 1]``
    is the sum of all source pixels with row <= y and col <= x.
    """

    def __init__(self, img):
        src = as_gray(img)
        self.height, self.width = src.shape
        self.data = np.zeros((self.height + 1, self.width + 1))
        np.cumsum(np.cumsum(src, axis=0), axis=1, out=self.data[1:, 1:])

    def __getitem__(self, idx):
        """Inclusive cumulative sum at source coordinates ``(y, x)``."""
        y, x = idx
        return self.data[y + 1, x + 1]

    @property
    def shape(self):
        return (self.height, self.width)


def integral(img) -> IntegralImage:
    return IntegralImage(img)


def box_sum(ii: IntegralImage, row: int, col: int, h: int, w: int) -> float:
    """Sum of the ``h x w`` rectangle with top-left ``(row, col)``.

    The rectangle is intersected with the image; parts outside contribute
    nothing and a rectangle entirely outside sums to 0.
    """
    if h < 1 or w < 1:
        raise ValueError("box dimensions must be >= 1")
    r0 = min(max(row, 0), ii.height)
    r1 = min(max(row + h, 0), ii.height)
    c0 = min(max(col, 0), ii.width)
    c1 = min(max(col + w, 0), ii.width)
    if r0 >= r1 or c0 >= c1:
        return 0.0
    d = ii.data
    return float(d[r1, c1] - d[r0, c1] - d[r1, c0] + d[r0, c0])


@dataclass(frozen=True)
class Rect:
    row_offset: int
    col_offset: int
    height: int
    width: int
    weight: float


@dataclass(frozen=True)
class BoxFilterSpec:
    """Weighted sum of rectangles placed relative to the output pixel."""

    rects: tuple[Rect, ...]
    scale: float = 1.0

    def __post_init__(self):
        if not self.rects:
            raise ValueError("a box filter needs at least one rectangle")
        for r in self.rects:
            if r.height < 1 or r.width < 1:
                raise ValueError(f"degenerate rectangle {r}")

    @classmethod
    def from_tuples(cls, rects: Iterable[Sequence], scale: float = 1.0) -> "BoxFilterSpec":
        return cls(tuple(Rect(int(a), int(b), int(c), int(d), float(e)) for a, b, c, d, e in rects), scale)

    def transpose(self) -> "BoxFilterSpec":
        return BoxFilterSpec(
            tuple(Rect(r.col_offset, r.row_offset, r.width, r.height, r.weight) for r in self.rects),
            self.scale,
        )

    def adjoint(self) -> "BoxFilterSpec":
        """Point-reflected rectangles: the adjoint under truncated borders."""
        return BoxFilterSpec(
            tuple(
                Rect(-r.row_offset - r.height + 1, -r.col_offset - r.width + 1, r.height, r.width, r.weight)
                for r in self.rects
            ),
            self.scale,
        )

    def dense_kernel(self) -> tuple[np.ndarray, int, int]:
        """Dense correlation kernel and the (row, col) offset of its origin."""
        r_lo = min(r.row_offset for r in self.rects)
        c_lo = min(r.col_offset for r in self.rects)
        r_hi = max(r.row_offset + r.height for r in self.rects)
        c_hi = max(r.col_offset + r.width for r in self.rects)
        k = np.zeros((r_hi - r_lo, c_hi - c_lo))
        for r in self.rects:
            k[r.row_offset - r_lo : r.row_offset - r_lo + r.height,
              r.col_offset - c_lo : r.col_offset - c_lo + r.width] += r.weight
        return k * self.scale, r_lo, c_lo


def convolve_box_filter(ii: IntegralImage, spec: BoxFilterSpec) -> np.ndarray:
    """Evaluate ``spec`` centred on every pixel using clamped box sums."""
    H, W = ii.height, ii.width
    d = ii.data
    ys = np.arange(H)[:, None]
    xs = np.arange(W)[None, :]
    out = np.zeros((H, W))
    for r in spec.rects:
        r0 = np.clip(ys + r.row_offset, 0, H)
        r1 = np.clip(ys + r.row_offset + r.height, 0, H)
        c0 = np.clip(xs + r.col_offset, 0, W)
        c1 = np.clip(xs + r.col_offset + r.width, 0, W)
        out += r.weight * (d[r1, c1] - d[r0, c1] - d[r1, c0] + d[r0, c0])
    if spec.scale != 1.0:
        out *= spec.scale
    return out


def filter_image(img, spec: BoxFilterSpec) -> np.ndarray:
    return convolve_box_filter(IntegralImage(img), spec)


def window_sum(arr: np.ndarray, h: int, w: int) -> np.ndarray:
    """Sums of every ``h x w`` window of ``arr`` (valid positions only).

    Separable summed-area evaluation; a window of exact zeros sums to
    exactly zero, however large the surrounding values.
    """
    cs = np.zeros((arr.shape[0] + 1, arr.shape[1]))
    np.cumsum(arr, axis=0, out=cs[1:])
    rows = cs[h:] - cs[:-h]
    cs = np.zeros((rows.shape[0], rows.shape[1] + 1))
    np.cumsum(rows, axis=1, out=cs[:, 1:])
    return cs[:, w:] - cs[:, :-w]


def pad_edge(arr: np.ndarray, pad: int) -> np.ndarray:
    """Replicate the outermost pixels ``pad`` times on the last two axes."""
    widths = [(0, 0)] * (arr.ndim - 2) + [(pad, pad), (pad, pad)]
    return np.pad(arr, widths, mode="edge")


def pad_edge_adjoint(grad: np.ndarray, pad: int) -> np.ndarray:
    """Fold a gradient on an edge-padded array back onto the source pixels."""
    if pad == 0:
        return grad.copy()
    g = grad.copy()
    g[..., pad, :] += g[..., :pad, :].sum(axis=-2)
    g[..., -pad - 1, :] += g[..., -pad:, :].sum(axis=-2)
    g = g[..., pad:-pad, :]
    g[..., :, pad] += g[..., :, :pad].sum(axis=-1)
    g[..., :, -pad - 1] += g[..., :, -pad:].sum(axis=-1)
    return g[..., :, pad:-pad]
