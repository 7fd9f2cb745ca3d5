"""Reverse-mode (and forward-mode) derivatives of the feature maps.

Gradients are taken with respect to the input image only; filters and
look-up tables are constants. ``sign(0)`` is taken as 0 wherever an absolute
value is differentiated, and zero-norm descriptors propagate no gradient.
"""
from __future__ import annotations

import numpy as np

from .descriptor import (
    N_CHANNELS,
    DescriptorLUT,
    _accumulate,
    _accumulate_adjoint,
    _forward,
    _haar_linear,
    build_lut,
    haar_adjoint,
)
from .detector import CROSS_WEIGHT, ScaleSpec, hessian_filters
from .image import IntegralImage, as_gray, convolve_box_filter


def _check_seed(seed, shape) -> np.ndarray:
    seed = np.asarray(seed, dtype=np.float64)
    if seed.shape != tuple(shape):
        raise ValueError(f"seed shape {seed.shape} does not match output shape {tuple(shape)}")
    return seed


def _hessian(img, spec):
    ii = IntegralImage(img)
    filters = hessian_filters(spec)
    return filters, [convolve_box_filter(ii, f) for f in filters]


def detector_vjp(img, spec: ScaleSpec, seed) -> np.ndarray:
    """Gradient of ``<seed, det-map(img)>`` with respect to ``img``."""
    img = as_gray(img)
    seed = _check_seed(seed, img.shape)
    (fxx, fyy, fxy), (lxx, lyy, lxy) = _hessian(img, spec)
    grad = convolve_box_filter(IntegralImage(seed * lyy), fxx.adjoint())
    grad += convolve_box_filter(IntegralImage(seed * lxx), fyy.adjoint())
    grad -= convolve_box_filter(IntegralImage((2.0 * CROSS_WEIGHT) * seed * lxy), fxy.adjoint())
    return grad


def detector_jvp(img, spec: ScaleSpec, tangent) -> np.ndarray:
    """Directional derivative of the det map along ``tangent``."""
    img = as_gray(img)
    tangent = _check_seed(tangent, img.shape)
    (fxx, fyy, fxy), (lxx, lyy, lxy) = _hessian(img, spec)
    ti = IntegralImage(tangent)
    txx, tyy, txy = (convolve_box_filter(ti, f) for f in (fxx, fyy, fxy))
    return lyy * txx + lxx * tyy - 2.0 * CROSS_WEIGHT * lxy * txy


def _normalise_vjp(desc, norm, seed):
    proj = np.einsum("chw,chw->hw", desc, seed)
    safe = np.where(norm > 0, norm, 1.0)
    return np.where(norm > 0, (seed - desc * proj) / safe, 0.0)


def descriptor_vjp(img, spec: ScaleSpec, lut: DescriptorLUT | None, seed) -> np.ndarray:
    """Gradient of ``<seed, descriptor-map(img)>`` with respect to ``img``.

    ``seed`` has shape (64, H, W).
    """
    img = as_gray(img)
    lut = build_lut(spec) if lut is None else lut
    seed = _check_seed(seed, (N_CHANNELS,) + img.shape)
    fw = _forward(img, spec, lut)
    g_raw = _normalise_vjp(fw.desc, fw.norm, seed)
    g_planes = _accumulate_adjoint(g_raw, lut)
    g_dx = g_planes[0] + np.sign(fw.dx) * g_planes[2]
    g_dy = g_planes[1] + np.sign(fw.dy) * g_planes[3]
    return haar_adjoint(g_dx, g_dy, spec.step)


def descriptor_jvp(img, spec: ScaleSpec, lut: DescriptorLUT | None, tangent) -> np.ndarray:
    img = as_gray(img)
    lut = build_lut(spec) if lut is None else lut
    tangent = _check_seed(tangent, img.shape)
    fw = _forward(img, spec, lut)
    tdx, tdy = _haar_linear(tangent, spec.step)
    planes = np.stack([tdx, tdy, np.sign(fw.dx) * tdx, np.sign(fw.dy) * tdy])
    t_raw = _accumulate(planes, lut)
    proj = np.einsum("chw,chw->hw", fw.desc, t_raw)
    safe = np.where(fw.norm > 0, fw.norm, 1.0)
    return np.where(fw.norm > 0, (t_raw - fw.desc * proj) / safe, 0.0)


def descriptor_kink_args(img, spec: ScaleSpec, lut: DescriptorLUT | None = None):
    """Arguments of the non-smooth operations inside the descriptor map.

    Returns ``(signed, norms, weights)``: the Haar responses fed to ``|.|``,
    the per-pixel vector norms fed to the normalisation, and unbounded
    (``inf``) weights for the Haar responses.
    """
    lut = build_lut(spec) if lut is None else lut
    fw = _forward(as_gray(img), spec, lut)
    signed = np.concatenate([fw.dx.ravel(), fw.dy.ravel()])
    return signed, fw.norm.ravel(), np.full(signed.shape, np.inf)


GRADCHECK_OPS = ("detector", "descriptor", "losses")
KINK_MARGIN = 1e-4


def _rel_error(fd: float, an: float, floor: float) -> float:
    return abs(fd - an) / max(abs(fd), abs(an), floor)


def _check_coords(phi, grad, x, coords, h, kinks=None, tol=1e-3):
    """Central differences of scalar ``phi`` at the given flat coordinates.

    ``kinks(x)`` returns ``(signed, norms, weights)``: arguments of ``|.|``,
    vector norms, and the weight with which each signed argument enters
    ``phi`` (``inf`` when the effect cannot be bounded). A coordinate is
    skipped when a norm below ``KINK_MARGIN`` moves, when an unbounded
    argument changes sign, or when the bounded sign changes could shift
    the difference quotient by more than a quarter of the tolerance.
    """
    floor = 1e-6 * float(np.abs(grad).max()) + 1e-12
    k0 = kinks(x) if kinks is not None else None
    worst, checked, excluded = 0.0, 0, 0
    for i in coords:
        xp = x.copy()
        xm = x.copy()
        xp.flat[i] += h
        xm.flat[i] -= h
        if kinks is not None and _crosses_kink(k0, kinks(xp), kinks(xm), h,
                                               0.25 * tol * max(abs(float(grad.flat[i])), floor)):
            excluded += 1
            continue
        fd = (phi(xp) - phi(xm)) / (2.0 * h)
        worst = max(worst, _rel_error(fd, float(grad.flat[i]), floor))
        checked += 1
    return worst, checked, excluded


def _crosses_kink(k0, kp, km, h, budget) -> bool:
    (s0, n0, w), (sp, np_, _), (sm, nm, _) = k0, kp, km
    if (((np_ != n0) | (nm != n0)) & (n0 < KINK_MARGIN)).any():
        return True
    sign0 = np.sign(s0)
    moved = (sp != s0) | (sm != s0)
    flips = moved & ((sign0 == 0) | (np.sign(sp) != sign0) | (np.sign(sm) != sign0))
    if not flips.any():
        return False
    wf = w[flips]
    if np.isinf(wf).any():
        return True
    # |d| differs from its linearisation by twice the part past zero
    s0f, spf, smf = sign0[flips], sp[flips], sm[flips]
    past = np.where(np.sign(spf) != s0f, np.abs(spf), 0.0) + np.where(np.sign(smf) != s0f, np.abs(smf), 0.0)
    bound = np.sum(wf * 2.0 * past) / (2.0 * h)
    return bool(bound > budget)


def gradcheck(op_id: str, trials: int = 10, seed: int = 0, *, size: int | None = None,
              image=None, pair=None, scales=None, coords: int | None = 64,
              h: float = 1e-3, tol: float = 1e-3) -> dict:
    """Randomised finite-difference validation of the analytic gradients.

    Each trial draws a random image (or uses ``image``/``pair``), a random
    cotangent seed and ``coords`` random pixel coordinates (all pixels when
    None), and compares central differences against the analytic gradient.
    Returns a JSON-ready report.
    """
    from . import losses as L
    from .descriptor import dense_descriptors_fast
    from .detector import default_scales, detector_response

    if op_id not in GRADCHECK_OPS:
        raise ValueError(f"unknown op {op_id!r}; expected one of {GRADCHECK_OPS}")
    if trials < 1:
        raise ValueError("trials must be >= 1")
    rng = np.random.default_rng(seed)
    if scales is None:
        scales = default_scales(2) if op_id == "losses" else default_scales(1)
    if size is None:
        size = {"detector": 24, "descriptor": 16, "losses": 24}[op_id]
    luts = [build_lut(s) for s in scales]
    spec, lut = scales[0], luts[0]

    def pick(n_pix):
        if coords is None or coords >= n_pix:
            return np.arange(n_pix)
        return rng.choice(n_pix, size=coords, replace=False)

    results = []
    for t in range(trials):
        entries = []
        if op_id == "detector":
            x = rng.random((size, size)) if image is None else as_gray(image).copy()
            s = rng.standard_normal(x.shape)
            grad = detector_vjp(x, spec, s)
            phi = lambda z: float(np.sum(s * detector_response(z, [spec]).maps[0]))
            entries.append(("detector", *_check_coords(phi, grad, x, pick(x.size), h)))
        elif op_id == "descriptor":
            x = rng.random((size, size)) if image is None else as_gray(image).copy()
            s = rng.standard_normal((N_CHANNELS,) + x.shape)
            if not np.any(descriptor_kink_args(x, spec, lut)[1] > 0):
                results.append({"trial": t, "status": "skipped-degenerate", "checks": []})
                continue
            grad = descriptor_vjp(x, spec, lut, s)
            phi = lambda z: float(np.sum(s * dense_descriptors_fast(z, spec, lut).data))
            kinks = lambda z: descriptor_kink_args(z, spec, lut)
            entries.append(("descriptor", *_check_coords(phi, grad, x, pick(x.size), h, kinks, tol)))
        else:
            if pair is None:
                a, b = rng.random((size, size)), rng.random((size, size))
            else:
                a, b = as_gray(pair[0]).copy(), as_gray(pair[1])
            fns = {
                "rec": lambda z: L.rec_loss(z, b),
                "det": lambda z: L.det_loss(z, b, scales),
                "desc": lambda z: L.desc_loss(z, b, scales, luts),
            }
            idx = pick(a.size)
            for name, phi in fns.items():
                grad = L.loss_grad(name, a, b, scales=scales, luts=luts)
                kinks = lambda z, name=name: L.loss_kink_args(name, z, b, scales, luts)
                entries.append((name, *_check_coords(phi, grad, a, idx, h, kinks, tol)))
        checks = [
            {"target": name, "max_rel_error": err, "checked": n, "excluded": ex}
            for name, err, n, ex in entries
        ]
        if all(c["checked"] == 0 for c in checks):
            status = "subgradient-ambiguous"
        else:
            status = "pass" if all(c["max_rel_error"] <= tol for c in checks) else "fail"
        results.append({"trial": t, "status": status, "checks": checks})
    return {
        "op": op_id,
        "seed": seed,
        "step": h,
        "tolerance": tol,
        "trials": results,
        "passed": all(r["status"] != "fail" for r in results),
    }
