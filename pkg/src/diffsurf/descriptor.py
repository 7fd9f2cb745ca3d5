"""Dense per-pixel upright SURF descriptors.

Each pixel gets a 64-vector built from a 4x4 grid of neighbourhoods. Every
neighbourhood accumulates 9x9 Gaussian-weighted Haar responses as
(sum dx, sum dy, sum |dx|, sum |dy|); the 16 blocks are weighted by a second
Gaussian and the vector is L2-normalised.

The fast path works on whole response planes: the Haar maps are shifted by
each of the 81 sample offsets and accumulated with their weights, then the
accumulated plane is shifted once more per neighbourhood centre. Lookups
outside the image are clamped to the nearest edge pixel.
"""
from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .detector import Keypoint, ScaleSpec, round_half_away
from .image import (
    BoxFilterSpec,
    as_gray,
    pad_edge,
    pad_edge_adjoint,
    window_sum,
)

N_SAMPLES = 81
N_BLOCKS = 16
N_CHANNELS = 64
SAMPLE_SIGMA = 2.5  # in units of the step
BLOCK_SIGMA = 1.5  # in units of the block spacing
GRID = np.arange(-4, 5)
BLOCK_GRID = np.array([-1.5, -0.5, 0.5, 1.5])
BLOCK_SPACING = 5


def gaussian(dy, dx, sigma):
    return np.exp(-(dx * dx + dy * dy) / (2.0 * sigma * sigma)) / (2.0 * np.pi * sigma * sigma)


@dataclass(frozen=True)
class DescriptorLUT:
    step: int
    offsets: np.ndarray  # (81, 2) integer (dy, dx)
    sample_weights: np.ndarray  # (81,)
    centers: np.ndarray  # (16, 2) integer (dy, dx)
    block_weights: np.ndarray  # (16,)

    @property
    def sample_radius(self) -> int:
        return int(np.abs(self.offsets).max())

    @property
    def center_radius(self) -> int:
        return int(np.abs(self.centers).max())

    @property
    def footprint_radius(self) -> int:
        """Chebyshev radius of the input pixels a descriptor can depend on."""
        return self.center_radius + self.sample_radius + self.step


def build_lut(spec: ScaleSpec) -> DescriptorLUT:
    s = spec.step
    gy, gx = np.meshgrid(GRID, GRID, indexing="ij")
    offsets = np.stack([gy.ravel(), gx.ravel()], axis=1) * s
    offsets = round_half_away(offsets).astype(np.int64)
    sample_weights = gaussian(offsets[:, 0], offsets[:, 1], SAMPLE_SIGMA * s)

    by, bx = np.meshgrid(BLOCK_GRID, BLOCK_GRID, indexing="ij")
    centers = round_half_away(np.stack([by.ravel(), bx.ravel()], axis=1) * BLOCK_SPACING * s).astype(np.int64)
    block_weights = gaussian(by.ravel(), bx.ravel(), BLOCK_SIGMA)
    return DescriptorLUT(s, offsets, sample_weights, centers, block_weights)


def haar_filters(step: int) -> tuple[BoxFilterSpec, BoxFilterSpec]:
    """X and Y Haar wavelets of side ``2 * step``, area-normalised."""
    s = step
    norm = 1.0 / (4 * s * s)
    hx = BoxFilterSpec.from_tuples([(-s, 0, 2 * s, s, 1.0), (-s, -s, 2 * s, s, -1.0)], norm)
    return hx, hx.transpose()


class HaarResponses(NamedTuple):
    dx_map: np.ndarray
    dy_map: np.ndarray


def _haar_linear(img: np.ndarray, step: int) -> HaarResponses:
    # Each wavelet is a window sum over a plane of pixel differences taken
    # on the edge-replicated image, so flat regions give exactly zero.
    s = step
    H, W = img.shape
    p = pad_edge(img, s)
    area = 4.0 * s * s
    ex = p[:, s:] - p[:, :-s]
    ey = p[s:, :] - p[:-s, :]
    dx = window_sum(ex, 2 * s, s)[:H, :W] / area
    dy = window_sum(ey, s, 2 * s)[:H, :W] / area
    return HaarResponses(dx, dy)


def haar_responses(img, spec: ScaleSpec) -> HaarResponses:
    return _haar_linear(as_gray(img), spec.step)


def haar_adjoint(g_dx: np.ndarray, g_dy: np.ndarray, step: int) -> np.ndarray:
    """Transpose of :func:`haar_responses` applied to per-map cotangents."""
    s = step
    H, W = g_dx.shape
    area = 4.0 * s * s
    # window_sum over a (h, w) window transposes to a zero-padded full sum
    gx = np.zeros((H + 1, W + 1))
    gx[:H, :W] = g_dx / area
    gx = window_sum(np.pad(gx, ((2 * s - 1, 2 * s - 1), (s - 1, s - 1))), 2 * s, s)
    gy = np.zeros((H + 1, W + 1))
    gy[:H, :W] = g_dy / area
    gy = window_sum(np.pad(gy, ((s - 1, s - 1), (2 * s - 1, 2 * s - 1))), s, 2 * s)
    gp = np.zeros((H + 2 * s, W + 2 * s))
    gp[:, s:] += gx
    gp[:, :-s] -= gx
    gp[s:, :] += gy
    gp[:-s, :] -= gy
    return pad_edge_adjoint(gp, s)


@dataclass
class DenseDescriptorMap:
    """Descriptor field of one scale, ``data`` shaped (64, H, W).

    Channel ``4 * n + c`` holds component ``c`` (sum dx, sum dy, sum |dx|,
    sum |dy|) of neighbourhood ``n``, neighbourhoods in row-major grid order.
    """

    scale_index: int
    data: np.ndarray

    @property
    def height(self):
        return self.data.shape[1]

    @property
    def width(self):
        return self.data.shape[2]

    def at(self, y: int, x: int) -> np.ndarray:
        return self.data[:, y, x]


def _accumulate(planes: np.ndarray, lut: DescriptorLUT) -> np.ndarray:
    """Raw (unnormalised) descriptor channels from stacked response planes.

    ``planes`` is (4, H, W) = (dx, dy, |dx|, |dy|). Returns (64, H, W).
    """
    _, H, W = planes.shape
    rs, rc = lut.sample_radius, lut.center_radius
    padded = pad_edge(planes, rs + rc)
    # acc[q] = sum_k w_k * plane(clamp(q + o_k)) on the image grown by rc
    eh, ew = H + 2 * rc, W + 2 * rc
    acc = np.zeros((4, eh, ew))
    for (oy, ox), w in zip(lut.offsets, lut.sample_weights):
        acc += w * padded[:, rs + oy : rs + oy + eh, rs + ox : rs + ox + ew]
    out = np.empty((N_BLOCKS, 4, H, W))
    for n, ((cy, cx), g) in enumerate(zip(lut.centers, lut.block_weights)):
        np.multiply(acc[:, rc + cy : rc + cy + H, rc + cx : rc + cx + W], g, out=out[n])
    return out.reshape(N_CHANNELS, H, W)


def _accumulate_adjoint(grad: np.ndarray, lut: DescriptorLUT) -> np.ndarray:
    _, H, W = grad.shape
    rs, rc = lut.sample_radius, lut.center_radius
    grad = grad.reshape(N_BLOCKS, 4, H, W)
    eh, ew = H + 2 * rc, W + 2 * rc
    g_acc = np.zeros((4, eh, ew))
    for n, ((cy, cx), g) in enumerate(zip(lut.centers, lut.block_weights)):
        g_acc[:, rc + cy : rc + cy + H, rc + cx : rc + cx + W] += g * grad[n]
    pad = rs + rc
    g_padded = np.zeros((4, H + 2 * pad, W + 2 * pad))
    for (oy, ox), w in zip(lut.offsets, lut.sample_weights):
        g_padded[:, rs + oy : rs + oy + eh, rs + ox : rs + ox + ew] += w * g_acc
    return pad_edge_adjoint(g_padded, pad)


def _normalise(raw: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    norm = np.sqrt(np.einsum("chw,chw->hw", raw, raw))
    safe = np.where(norm > 0, norm, 1.0)
    return np.where(norm > 0, raw / safe, 0.0), norm


class _Forward(NamedTuple):
    dx: np.ndarray
    dy: np.ndarray
    raw: np.ndarray
    norm: np.ndarray
    desc: np.ndarray


def _forward(img: np.ndarray, spec: ScaleSpec, lut: DescriptorLUT) -> _Forward:
    dx, dy = _haar_linear(img, spec.step)
    planes = np.stack([dx, dy, np.abs(dx), np.abs(dy)])
    raw = _accumulate(planes, lut)
    desc, norm = _normalise(raw)
    return _Forward(dx, dy, raw, norm, desc)


def dense_descriptors_fast(img, spec: ScaleSpec, lut: DescriptorLUT | None = None,
                           scale_index: int = 0, normalise: bool = True) -> DenseDescriptorMap:
    img = as_gray(img)
    lut = build_lut(spec) if lut is None else lut
    fw = _forward(img, spec, lut)
    return DenseDescriptorMap(scale_index, fw.desc if normalise else fw.raw)


def _haar_direct(img: np.ndarray, step: int) -> HaarResponses:
    s = step
    H, W = img.shape
    p = np.pad(img, s, mode="edge")
    area = 4.0 * s * s
    dx = np.empty((H, W))
    dy = np.empty((H, W))
    for y in range(H):
        for x in range(W):
            win = p[y : y + 2 * s, x : x + 2 * s]
            dx[y, x] = (win[:, s:].sum() - win[:, :s].sum()) / area
            dy[y, x] = (win[s:, :].sum() - win[:s, :].sum()) / area
    return HaarResponses(dx, dy)


def dense_descriptors_naive(img, spec: ScaleSpec, lut: DescriptorLUT | None = None,
                            scale_index: int = 0, normalise: bool = True) -> DenseDescriptorMap:
    """Per-pixel reference implementation of :func:`dense_descriptors_fast`.

    Haar responses are summed directly from pixel windows and every
    descriptor gathers its 16 x 81 samples explicitly (batched one image row
    at a time). Slow by design.
    """
    img = as_gray(img)
    lut = build_lut(spec) if lut is None else lut
    H, W = img.shape
    dx, dy = _haar_direct(img, spec.step)
    # sample position = pixel + block centre + offset, per (block, sample)
    fy = (lut.centers[:, None, 0] + lut.offsets[None, :, 0]).ravel()
    fx = (lut.centers[:, None, 1] + lut.offsets[None, :, 1]).ravel()
    wts = np.tile(lut.sample_weights, N_BLOCKS)
    out = np.zeros((N_BLOCKS, 4, H, W))
    flat = np.stack([dx, dy]).reshape(2, -1)
    xs = np.arange(W)[:, None]
    for y in range(H):
        # one row of pixels at a time: (W, 16 * 81) clamped sample positions
        idx = np.clip(y + fy, 0, H - 1) * W + np.clip(xs + fx, 0, W - 1)
        samples = flat.take(idx, axis=1)
        samples *= wts
        samples = samples.reshape(2, W, N_BLOCKS, N_SAMPLES)
        out[:, :2, y, :] = samples.sum(axis=3).transpose(2, 0, 1)
        out[:, 2:, y, :] = np.abs(samples).sum(axis=3).transpose(2, 0, 1)
    out *= lut.block_weights[:, None, None, None]
    raw = out.reshape(N_CHANNELS, H, W)
    if not normalise:
        return DenseDescriptorMap(scale_index, raw)
    norm = np.sqrt((raw * raw).sum(axis=0))
    desc = np.zeros_like(raw)
    nz = norm > 0
    desc[:, nz] = raw[:, nz] / norm[nz]
    return DenseDescriptorMap(scale_index, desc)


def dense_descriptor_pyramid(img, scales: list[ScaleSpec], luts: list[DescriptorLUT] | None = None,
                             threads: int = 1) -> list[DenseDescriptorMap]:
    img = as_gray(img)
    luts = [build_lut(s) for s in scales] if luts is None else luts

    def one(i):
        return dense_descriptors_fast(img, scales[i], luts[i], scale_index=i)

    if threads > 1:
        with ThreadPoolExecutor(threads) as pool:
            return list(pool.map(one, range(len(scales))))
    return [one(i) for i in range(len(scales))]


def describe_keypoints(maps: list[DenseDescriptorMap], kps: list[Keypoint]) -> list[np.ndarray]:
    by_scale = {m.scale_index: m for m in maps}
    out = []
    for kp in kps:
        m = by_scale.get(kp.scale_index)
        if m is None:
            raise KeyError(f"no descriptor map for scale {kp.scale_index}")
        if not (0 <= kp.y < m.height and 0 <= kp.x < m.width):
            raise IndexError(f"keypoint ({kp.x}, {kp.y}) outside {m.width}x{m.height} map")
        out.append(m.at(kp.y, kp.x).copy())
    return out
