"""Determinant-of-Hessian response maps and scale-space keypoints."""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .image import BoxFilterSpec, IntegralImage, as_gray, convolve_box_filter

DEFAULT_FILTER_SIZES = (9, 15, 21, 27, 33)
# Relative weight of the mixed-derivative term in the Hessian determinant.
CROSS_WEIGHT = 0.81


def round_half_away(x):
    """Round to nearest integer, halves away from zero."""
    return np.sign(x) * np.floor(np.abs(x) + 0.5)


@dataclass(frozen=True)
class ScaleSpec:
    """One detector/descriptor scale.

    ``filter_size`` is the side of the Hessian box filters, ``sigma`` the
    equivalent Gaussian scale (1.2 at size 9) and ``step`` the descriptor
    sampling step, ``round(sigma)``.
    """

    filter_size: int
    sigma: float
    step: int

    def __post_init__(self):
        if self.filter_size < 9 or self.filter_size % 2 == 0:
            raise ValueError(f"filter size must be odd and >= 9, got {self.filter_size}")
        if self.filter_size % 3 != 0:
            raise ValueError(f"filter size must be a multiple of 3, got {self.filter_size}")
        if not self.sigma > 0 or self.step < 1:
            raise ValueError("sigma must be positive and step >= 1")

    @classmethod
    def from_filter_size(cls, size: int) -> "ScaleSpec":
        sigma = 1.2 * size / 9.0
        return cls(int(size), sigma, max(1, int(round_half_away(sigma))))


def default_scales(count: int = 5, sizes=DEFAULT_FILTER_SIZES) -> list[ScaleSpec]:
    if count < 1 or count > len(sizes):
        raise ValueError(f"scale count must be in [1, {len(sizes)}]")
    return [ScaleSpec.from_filter_size(s) for s in sizes[:count]]


def hessian_filters(spec: ScaleSpec) -> tuple[BoxFilterSpec, BoxFilterSpec, BoxFilterSpec]:
    """Box approximations of the second Gaussian derivatives (xx, yy, xy)."""
    L = spec.filter_size
    lobe = L // 3
    half = (L - 1) // 2
    norm = 1.0 / (L * L)
    tall = 2 * lobe - 1
    dxx = BoxFilterSpec.from_tuples(
        [
            (-(lobe - 1), -half, tall, lobe, 1.0),
            (-(lobe - 1), -half + lobe, tall, lobe, -2.0),
            (-(lobe - 1), -half + 2 * lobe, tall, lobe, 1.0),
        ],
        norm,
    )
    dyy = dxx.transpose()
    dxy = BoxFilterSpec.from_tuples(
        [
            (-lobe, 1, lobe, lobe, 1.0),
            (1, -lobe, lobe, lobe, 1.0),
            (-lobe, -lobe, lobe, lobe, -1.0),
            (1, 1, lobe, lobe, -1.0),
        ],
        norm,
    )
    return dxx, dyy, dxy


def hessian_maps(ii: IntegralImage, spec: ScaleSpec) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    fxx, fyy, fxy = hessian_filters(spec)
    return convolve_box_filter(ii, fxx), convolve_box_filter(ii, fyy), convolve_box_filter(ii, fxy)


def hessian_det(lxx, lyy, lxy) -> np.ndarray:
    return lxx * lyy - CROSS_WEIGHT * (lxy * lxy)


@dataclass
class ResponsePyramid:
    scales: list[ScaleSpec]
    maps: list[np.ndarray]
    lxx: list[np.ndarray] = field(default_factory=list)
    lyy: list[np.ndarray] = field(default_factory=list)
    lxy: list[np.ndarray] = field(default_factory=list)

    def __len__(self):
        return len(self.maps)

    @property
    def shape(self):
        return self.maps[0].shape

    def stack(self) -> np.ndarray:
        return np.stack(self.maps)

    def laplacian_sign(self, scale_index: int, y: int, x: int) -> int:
        if not self.lxx:
            return 1
        return 1 if self.lxx[scale_index][y, x] + self.lyy[scale_index][y, x] >= 0 else -1


def detector_response(img, scales: list[ScaleSpec] | None = None, threads: int = 1) -> ResponsePyramid:
    """Hessian-determinant maps of ``img`` at every scale."""
    img = as_gray(img)
    scales = default_scales() if scales is None else list(scales)
    largest = max(s.filter_size for s in scales)
    if min(img.shape) < largest:
        raise ValueError(f"image {img.shape} is smaller than the largest filter ({largest})")
    ii = IntegralImage(img)

    def one(spec):
        return hessian_maps(ii, spec)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            parts = list(pool.map(one, scales))
    else:
        parts = [one(s) for s in scales]
    pyr = ResponsePyramid(scales, [])
    for lxx, lyy, lxy in parts:
        pyr.maps.append(hessian_det(lxx, lyy, lxy))
        pyr.lxx.append(lxx)
        pyr.lyy.append(lyy)
        pyr.lxy.append(lxy)
    return pyr


@dataclass(frozen=True)
class Keypoint:
    x: int
    y: int
    scale_index: int
    response: float
    laplacian_sign: int = 1


def extract_keypoints(pyr: ResponsePyramid, threshold: float, border: int = 0) -> list[Keypoint]:
    """Strict 3x3x3 scale-space maxima above ``threshold``.

    Neighbours outside the pyramid (image edges, first/last scale) are
    ignored. ``border`` drops candidates closer than that to the image edge.
    """
    stack = pyr.stack()
    S, H, W = stack.shape
    padded = np.pad(stack, 1, mode="constant", constant_values=-np.inf)
    centre = padded[1:-1, 1:-1, 1:-1]
    is_max = centre > threshold
    for ds in (-1, 0, 1):
        for dy in (-1, 0, 1):
            for dx in (-1, 0, 1):
                if ds == dy == dx == 0:
                    continue
                nb = padded[1 + ds : 1 + ds + S, 1 + dy : 1 + dy + H, 1 + dx : 1 + dx + W]
                is_max &= centre > nb
    if border > 0:
        is_max[:, :border, :] = False
        is_max[:, H - border :, :] = False
        is_max[:, :, :border] = False
        is_max[:, :, W - border :] = False
    ss, ys, xs = np.nonzero(is_max)
    resp = stack[ss, ys, xs]
    order = np.lexsort((ss, xs, ys, -resp))
    return [
        Keypoint(int(xs[i]), int(ys[i]), int(ss[i]), float(resp[i]), pyr.laplacian_sign(ss[i], ys[i], xs[i]))
        for i in order
    ]


def keypoints_to_csv(kps: list[Keypoint]) -> str:
    lines = ["x,y,scale_index,response,laplacian_sign"]
    lines += [f"{k.x},{k.y},{k.scale_index},{k.response!r},{k.laplacian_sign}" for k in kps]
    return "\n".join(lines) + "\n"


def keypoints_from_csv(text: str) -> list[Keypoint]:
    rows = text.strip().splitlines()
    if not rows or rows[0].strip() != "x,y,scale_index,response,laplacian_sign":
        raise ValueError("missing keypoint CSV header")
    out = []
    for row in rows[1:]:
        x, y, s, r, sign = row.split(",")
        out.append(Keypoint(int(x), int(y), int(s), float(r), int(sign)))
    return out
