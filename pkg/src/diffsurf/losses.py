"""Training losses over images, feature maps and discriminator score maps.

All L1 norms are means over their elements and all adversarial terms are
means over the score map, so the weights do not depend on resolution.
Discriminators and generators live elsewhere; their outputs come in as
arrays.
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from .autograd import descriptor_vjp, detector_vjp
from .descriptor import DescriptorLUT, build_lut, dense_descriptors_fast
from .detector import ScaleSpec, default_scales, detector_response
from .image import as_gray

DISCRIMINATOR_STRIDE = 8


class ScoreMap:
    """Patch-discriminator output, nominally ``H/8 x W/8`` for an H x W image."""

    def __init__(self, data):
        arr = np.asarray(data, dtype=np.float64)
        if arr.ndim != 2 or arr.size == 0:
            raise ValueError(f"score map must be a non-empty 2-D array, got shape {arr.shape}")
        if not np.all(np.isfinite(arr)):
            raise ValueError("score map contains NaN or Inf")
        self.data = arr

    @property
    def shape(self):
        return self.data.shape

    @staticmethod
    def shape_for(image_shape) -> tuple[int, int]:
        h, w = image_shape
        return h // DISCRIMINATOR_STRIDE, w // DISCRIMINATOR_STRIDE

    @classmethod
    def full(cls, image_shape, value: float) -> "ScoreMap":
        return cls(np.full(cls.shape_for(image_shape), float(value)))


def _scores(score) -> np.ndarray:
    return score.data if isinstance(score, ScoreMap) else ScoreMap(score).data


@dataclass(frozen=True)
class LossWeights:
    lambda_rec: float = 8.0
    lambda_det: float = 2.0
    lambda_desc: float = 2.0
    lambda_adv: float = 1.0

    def __post_init__(self):
        for name, value in asdict(self).items():
            if not value >= 0:
                raise ValueError(f"{name} must be non-negative, got {value}")

    def scaled(self, factor: float) -> "LossWeights":
        return LossWeights(*(factor * v for v in asdict(self).values()))


@dataclass
class LossReport:
    components: dict[str, float] = field(default_factory=dict)
    totals: dict[str, float] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {"components": dict(self.components), "totals": dict(self.totals)}


def _same_shape(a, b):
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")


def _setup(scales, luts):
    scales = default_scales() if scales is None else list(scales)
    if luts is None:
        luts = [build_lut(s) for s in scales]
    return scales, luts


def adv_loss(score) -> float:
    """One-sided least-squares generator term, mean of ``(score - 1)^2``.

    The full adversarial objective sums this over both generators.
    """
    s = _scores(score)
    return float(np.mean((s - 1.0) ** 2))


def disc_loss(real_score, fake_score) -> float:
    real, fake = _scores(real_score), _scores(fake_score)
    _same_shape(real, fake)
    return float(np.mean((real - 1.0) ** 2) + np.mean(fake**2))


def rec_loss(input_img, reconstructed) -> float:
    a, b = as_gray(input_img), as_gray(reconstructed)
    _same_shape(a, b)
    return float(np.mean(np.abs(a - b)))


def _det_maps(img, scales):
    return detector_response(img, scales).maps


def _desc_maps(img, scales, luts):
    return [dense_descriptors_fast(img, s, l).data for s, l in zip(scales, luts)]


def det_loss(img_a, img_b, scales: list[ScaleSpec] | None = None) -> float:
    a, b = as_gray(img_a), as_gray(img_b)
    _same_shape(a, b)
    scales, _ = _setup(scales, [])
    da, db = _det_maps(a, scales), _det_maps(b, scales)
    return float(np.mean([np.mean(np.abs(x - y)) for x, y in zip(da, db)]))


def desc_loss(img_a, img_b, scales: list[ScaleSpec] | None = None,
              luts: list[DescriptorLUT] | None = None) -> float:
    a, b = as_gray(img_a), as_gray(img_b)
    _same_shape(a, b)
    scales, luts = _setup(scales, luts)
    da, db = _desc_maps(a, scales, luts), _desc_maps(b, scales, luts)
    return float(np.mean([np.mean(np.abs(x - y)) for x, y in zip(da, db)]))


def _weighted(components: dict[str, float], weights: dict[str, float]) -> float:
    return float(sum(weights[k] * components[k] for k in weights))


def generator_objective(input_img, reconstructed, fake_score, weights: LossWeights | None = None,
                        scales=None, luts=None) -> LossReport:
    """Weighted cycle objective: reconstruction, detector, descriptor and adversarial.

    ``fake_score`` may be a single score map or a sequence of them (one per
    generator); adversarial terms of a sequence are summed.
    """
    weights = LossWeights() if weights is None else weights
    a, b = as_gray(input_img), as_gray(reconstructed)
    _same_shape(a, b)
    scales, luts = _setup(scales, luts)
    if isinstance(fake_score, (list, tuple)):
        adv = float(sum(adv_loss(s) for s in fake_score))
    else:
        adv = adv_loss(fake_score)
    comps = {
        "rec": rec_loss(a, b),
        "det": det_loss(a, b, scales),
        "desc": desc_loss(a, b, scales, luts),
        "adv": adv,
    }
    return report_from_components(comps, weights)


def report_from_components(comps: dict[str, float], weights: LossWeights) -> LossReport:
    gen = _weighted(
        comps,
        {"rec": weights.lambda_rec, "det": weights.lambda_det,
         "desc": weights.lambda_desc, "adv": weights.lambda_adv},
    )
    return LossReport(dict(comps), {"gen": gen})


def finetune_objective(target, synthetic, weights: LossWeights | None = None,
                       scales=None, luts=None) -> LossReport:
    weights = LossWeights() if weights is None else weights
    a, b = as_gray(target), as_gray(synthetic)
    _same_shape(a, b)
    scales, luts = _setup(scales, luts)
    comps = {
        "finetune_det": det_loss(a, b, scales),
        "finetune_desc": desc_loss(a, b, scales, luts),
    }
    total = _weighted(comps, {"finetune_det": weights.lambda_det, "finetune_desc": weights.lambda_desc})
    return LossReport(comps, {"finetune": total})


def _det_loss_grad(a, b, scales):
    da, db = detector_response(a, scales).maps, detector_response(b, scales).maps
    grad = np.zeros_like(a)
    for spec, x, y in zip(scales, da, db):
        grad += detector_vjp(a, spec, np.sign(x - y) / (x.size * len(scales)))
    return grad


def _desc_loss_grad(a, b, scales, luts):
    grad = np.zeros_like(a)
    for spec, lut in zip(scales, luts):
        x = dense_descriptors_fast(a, spec, lut).data
        y = dense_descriptors_fast(b, spec, lut).data
        grad += descriptor_vjp(a, spec, lut, np.sign(x - y) / (x.size * len(scales)))
    return grad


LOSS_IDS = ("rec", "det", "desc", "gen", "finetune", "adv", "disc")


def loss_grad(loss_id: str, *inputs, wrt: int = 0, weights: LossWeights | None = None,
              scales=None, luts=None) -> np.ndarray:
    """Gradient of a loss with respect to its input number ``wrt``.

    Image losses (rec, det, desc, gen, finetune) take two images; for gen
    only the images are differentiated (``wrt`` in {0, 1}). adv and disc
    are differentiated with respect to their score maps.
    """
    if loss_id not in LOSS_IDS:
        raise ValueError(f"unknown loss {loss_id!r}; expected one of {LOSS_IDS}")
    if loss_id == "adv":
        s = _scores(inputs[0])
        return 2.0 * (s - 1.0) / s.size
    if loss_id == "disc":
        real, fake = _scores(inputs[0]), _scores(inputs[1])
        _same_shape(real, fake)
        return 2.0 * (real - 1.0) / real.size if wrt == 0 else 2.0 * fake / fake.size
    if wrt not in (0, 1):
        raise ValueError("wrt must select one of the two images")
    a, b = as_gray(inputs[0]), as_gray(inputs[1])
    _same_shape(a, b)
    if wrt == 1:
        a, b = b, a
    weights = LossWeights() if weights is None else weights
    scales, luts = _setup(scales, luts)
    if loss_id == "rec":
        return np.sign(a - b) / a.size
    if loss_id == "det":
        return _det_loss_grad(a, b, scales)
    if loss_id == "desc":
        return _desc_loss_grad(a, b, scales, luts)
    grad = weights.lambda_det * _det_loss_grad(a, b, scales)
    grad += weights.lambda_desc * _desc_loss_grad(a, b, scales, luts)
    if loss_id == "gen":
        grad += weights.lambda_rec * np.sign(a - b) / a.size
    return grad


def loss_kink_args(loss_id: str, img_a, img_b, scales=None, luts=None):
    """Non-smooth points of ``loss_id`` as ``(signed, norms, weights)``.

    Signed entries are arguments of ``|.|``; ``weights`` gives the factor
    with which each enters the loss (``inf`` for those buried inside the
    descriptor). Norms feed the descriptor normalisation.
    """
    from .autograd import descriptor_kink_args

    a, b = as_gray(img_a), as_gray(img_b)
    scales, luts = _setup(scales, luts)
    signed, weights, norms = [], [], [np.zeros(0)]

    def l1(diffs, scale):
        for d in diffs:
            signed.append(d.ravel())
            weights.append(np.full(d.size, scale / d.size))

    if loss_id in ("rec", "gen"):
        l1([a - b], 1.0)
    if loss_id in ("det", "gen", "finetune"):
        l1([x - y for x, y in zip(_det_maps(a, scales), _det_maps(b, scales))], 1.0 / len(scales))
    if loss_id in ("desc", "gen", "finetune"):
        l1([x - y for x, y in zip(_desc_maps(a, scales, luts), _desc_maps(b, scales, luts))], 1.0 / len(scales))
        for img in (a, b):
            for s, l in zip(scales, luts):
                sg, n, w = descriptor_kink_args(img, s, l)
                signed.append(sg)
                weights.append(w)
                norms.append(n)
    return np.concatenate(signed), np.concatenate(norms), np.concatenate(weights)
