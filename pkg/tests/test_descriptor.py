import math

import numpy as np
import pytest

from conftest import dense_correlate
from diffsurf.descriptor import (
    DenseDescriptorMap,
    build_lut,
    dense_descriptor_pyramid,
    dense_descriptors_fast,
    dense_descriptors_naive,
    describe_keypoints,
    haar_filters,
    haar_responses,
)
from diffsurf.detector import Keypoint, ScaleSpec, default_scales, detector_response, extract_keypoints
from diffsurf.synthetic import blob_field, gaussian_blob

S1 = ScaleSpec.from_filter_size(9)


def _g(u, v, sigma):
    return math.exp(-(u * u + v * v) / (2 * sigma * sigma)) / (2 * math.pi * sigma * sigma)


def test_lut_step_one():
    lut = build_lut(S1)
    grid = {(dy, dx) for dy in range(-4, 5) for dx in range(-4, 5)}
    assert {tuple(o) for o in lut.offsets} == grid and len(lut.offsets) == 81
    assert sorted(set(lut.centers[:, 0])) == [-8, -3, 3, 8]
    assert sorted(set(lut.centers[:, 1])) == [-8, -3, 3, 8]
    assert lut.footprint_radius == 8 + 4 + 1


def test_lut_scaling_and_determinism():
    for spec in default_scales():
        a, b = build_lut(spec), build_lut(spec)
        assert np.array_equal(a.offsets, b.offsets) and np.array_equal(a.sample_weights, b.sample_weights)
        assert np.abs(a.offsets).max() == 4 * spec.step


def test_sample_weights_monotone():
    lut = build_lut(ScaleSpec.from_filter_size(15))
    r = np.hypot(*lut.offsets.T)
    assert np.argmax(lut.sample_weights) == np.flatnonzero(r == 0)[0]
    order = np.argsort(r, kind="stable")
    rs, ws = r[order], lut.sample_weights[order]
    for i in range(len(rs) - 1):
        if rs[i + 1] > rs[i]:
            assert ws[i + 1] < ws[i]
        else:
            assert ws[i + 1] == pytest.approx(ws[i])
    s = 2
    assert lut.sample_weights[np.flatnonzero(r == 0)[0]] == pytest.approx(_g(0, 0, 2.5 * s))


def test_block_weights_closed_form():
    w = build_lut(S1).block_weights.reshape(4, 4)
    inner = w[1:3, 1:3].ravel()
    corner = w[[0, 0, 3, 3], [0, 3, 0, 3]]
    assert np.allclose(inner, inner[0]) and np.allclose(corner, corner[0])
    assert inner[0] > corner[0]
    assert inner[0] / corner[0] == pytest.approx(_g(0.5, 0.5, 1.5) / _g(1.5, 1.5, 1.5), rel=1e-12)
    assert inner[0] == pytest.approx(_g(0.5, 0.5, 1.5), rel=1e-12)


def test_haar_ramp_and_constant():
    x = np.tile(np.arange(32.0), (32, 1))
    for spec in default_scales():
        dx, dy = haar_responses(x, spec)
        s = spec.step
        inner = (slice(s, -s), slice(s, -s))
        assert np.allclose(dx[inner], s / 2) and (dx[inner] > 0).all()
        assert np.abs(dy).max() == 0.0
        c = haar_responses(np.full((32, 32), 0.3), spec)
        assert not c.dx_map.any() and not c.dy_map.any()


@pytest.mark.parametrize("spec", default_scales(), ids=lambda s: f"s{s.step}")
def test_haar_against_dense_oracle(spec, rng):
    img = rng.random((32, 32))
    hx, hy = haar_filters(spec.step)
    dx, dy = haar_responses(img, spec)
    np.testing.assert_allclose(dx, dense_correlate(img, hx, border="edge"), atol=1e-6)
    np.testing.assert_allclose(dy, dense_correlate(img, hy, border="edge"), atol=1e-6)


@pytest.mark.parametrize("spec", default_scales(), ids=lambda s: f"s{s.step}")
def test_fast_matches_naive(spec):
    img = np.random.default_rng(spec.filter_size).random((40, 40))
    fast = dense_descriptors_fast(img, spec).data
    naive = dense_descriptors_naive(img, spec).data
    assert np.abs(fast - naive).max() < 1e-5


def test_fast_matches_naive_unnormalised(rng):
    img = rng.random((24, 24))
    a = dense_descriptors_fast(img, S1, normalise=False).data
    b = dense_descriptors_naive(img, S1, normalise=False).data
    assert np.abs(a - b).max() < 1e-12


def test_constant_image_gives_zero_map():
    img = np.full((40, 40), 0.6)
    for fn in (dense_descriptors_fast, dense_descriptors_naive):
        for normalise in (True, False):
            assert not fn(img, S1, normalise=normalise).data.any()


def test_unit_norm_contract(rng):
    img = rng.random((48, 48))
    img[:20, :20] = 0.5  # flat patch produces zero vectors
    for spec in default_scales():
        n = np.linalg.norm(dense_descriptors_fast(img, spec).data, axis=0)
        assert np.all((np.abs(n - 1) < 1e-6) | (n == 0))
    assert (np.linalg.norm(dense_descriptors_fast(img, S1).data, axis=0) == 0).any()


@pytest.mark.parametrize("a,b", [(0.5, -0.1), (2.0, 0.2), (3.7, -5.0)])
def test_affine_intensity_invariance(a, b):
    img = blob_field(7, (64, 64))
    for spec in default_scales():
        d0 = dense_descriptors_fast(img, spec).data
        d1 = dense_descriptors_fast(a * img + b, spec).data
        ok = np.linalg.norm(d0, axis=0) > 0
        assert np.abs(d0 - d1)[:, ok].max() < 1e-5


def test_transpose_symmetry(rng):
    img = rng.random((36, 36))
    d = dense_descriptors_fast(img, S1).data.reshape(4, 4, 4, 36, 36)
    dt = dense_descriptors_fast(img.T, S1).data.reshape(4, 4, 4, 36, 36)
    # transposing swaps block rows/cols, dx<->dy and the two pixel axes
    swapped = d.transpose(1, 0, 2, 4, 3)[:, :, [1, 0, 3, 2]]
    assert np.abs(swapped - dt).max() < 1e-12


def test_impulse_locality():
    img = np.zeros((48, 48))
    img[24, 20] = 1.0
    for spec in default_scales(3):
        lut = build_lut(spec)
        data = dense_descriptors_naive(img, spec, lut).data
        ys, xs = np.nonzero(np.abs(data).sum(axis=0))
        assert len(ys)
        assert np.max(np.maximum(np.abs(ys - 24), np.abs(xs - 20))) <= lut.footprint_radius


def test_pyramid_threads_identical(rng):
    img = rng.random((40, 40))
    a = dense_descriptor_pyramid(img, default_scales(3), threads=1)
    b = dense_descriptor_pyramid(img, default_scales(3), threads=3)
    assert [m.scale_index for m in a] == [0, 1, 2]
    for ma, mb in zip(a, b):
        assert np.array_equal(ma.data, mb.data)


def test_describe_keypoints_lookup(rng):
    maps = [DenseDescriptorMap(i, rng.standard_normal((64, 10, 12))) for i in range(2)]
    kps = [Keypoint(3, 7, 1, 1.0), Keypoint(0, 0, 0, 1.0)]
    out = describe_keypoints(maps, kps)
    assert np.array_equal(out[0], maps[1].data[:, 7, 3])
    assert np.array_equal(out[1], maps[0].data[:, 0, 0])
    assert describe_keypoints(maps, []) == []
    with pytest.raises(KeyError):
        describe_keypoints(maps, [Keypoint(0, 0, 5, 1.0)])
    with pytest.raises(IndexError):
        describe_keypoints(maps, [Keypoint(12, 0, 0, 1.0)])


def _classic_upright_surf(img, y0, x0, s):
    """Scalar per-point upright SURF: 4x4 subregions of 5s, 9x9 Haar samples each."""
    H, W = img.shape

    def px(y, x):
        return img[min(max(y, 0), H - 1), min(max(x, 0), W - 1)]

    def haar(y, x):
        hx = hy = 0.0
        for yy in range(y - s, y + s):
            for xx in range(x - s, x + s):
                v = px(yy, xx)
                hx += v if xx >= x else -v
                hy += v if yy >= y else -v
        return hx / (4 * s * s), hy / (4 * s * s)

    vec = []
    for bi in (-1.5, -0.5, 0.5, 1.5):
        for bj in (-1.5, -0.5, 0.5, 1.5):
            cy = y0 + int(math.copysign(math.floor(abs(bi * 5 * s) + 0.5), bi))
            cx = x0 + int(math.copysign(math.floor(abs(bj * 5 * s) + 0.5), bj))
            sdx = sdy = adx = ady = 0.0
            for i in range(-4, 5):
                for j in range(-4, 5):
                    w = _g(i * s, j * s, 2.5 * s)
                    hx, hy = haar(cy + i * s, cx + j * s)
                    sdx += w * hx
                    sdy += w * hy
                    adx += abs(w * hx)
                    ady += abs(w * hy)
            gw = _g(bi, bj, 1.5)
            vec += [gw * sdx, gw * sdy, gw * adx, gw * ady]
    v = np.array(vec)
    return v / np.linalg.norm(v)


def test_keypoint_descriptor_matches_classic_reference():
    img = gaussian_blob(64, sigma=2.5, center=(30.0, 33.0), background=0.1)
    img += 0.6 * gaussian_blob(64, sigma=3.0, center=(24.0, 40.0))
    scales = default_scales(3)
    kps = extract_keypoints(detector_response(img, scales), 1e-4, border=16)
    assert kps
    maps = dense_descriptor_pyramid(img, scales)
    for kp, d in zip(kps[:3], describe_keypoints(maps, kps[:3])):
        ref = _classic_upright_surf(img, kp.y, kp.x, scales[kp.scale_index].step)
        assert float(d @ ref) >= 0.99
