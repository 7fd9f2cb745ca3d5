"""Descriptor matching, RANSAC homography verification and pair evaluation."""
from __future__ import annotations

import math
import time
from dataclasses import asdict, dataclass, field

import numpy as np

from .descriptor import build_lut, dense_descriptors_fast, describe_keypoints
from .detector import Keypoint, default_scales, detector_response, extract_keypoints
from .config import RunConfig
from .image import as_gray


@dataclass(frozen=True)
class Match:
    index_a: int
    index_b: int
    distance: float
    ratio: float


def match_descriptors(desc_a, desc_b, kps_a, kps_b, ratio_threshold: float = 0.8) -> list[Match]:
    """Nearest-neighbour matching with Lowe's ratio test.

    Candidates are restricted to keypoints with the same Laplacian sign. A
    query needs at least two candidates; ties go to the lower index.
    """
    if len(desc_a) != len(kps_a) or len(desc_b) != len(kps_b):
        raise ValueError("descriptor and keypoint lists must align")
    if not desc_a or not desc_b:
        return []
    A = np.asarray(desc_a, dtype=np.float64)
    B = np.asarray(desc_b, dtype=np.float64)
    sign_a = np.array([k.laplacian_sign for k in kps_a])
    sign_b = np.array([k.laplacian_sign for k in kps_b])
    matches = []
    for sign in (-1, 1):
        ia = np.nonzero(sign_a == sign)[0]
        ib = np.nonzero(sign_b == sign)[0]
        if len(ia) == 0 or len(ib) < 2:
            continue
        diff = A[ia, None, :] - B[None, ib, :]
        dist = np.sqrt(np.einsum("ijk,ijk->ij", diff, diff))
        order = np.argsort(dist, axis=1, kind="stable")
        for row, a in enumerate(ia):
            j1, j2 = order[row, 0], order[row, 1]
            d1, d2 = dist[row, j1], dist[row, j2]
            if d2 == 0:
                continue
            ratio = d1 / d2
            if ratio < ratio_threshold:
                matches.append(Match(int(a), int(ib[j1]), float(d1), float(ratio)))
    matches.sort(key=lambda m: m.index_a)
    return matches


def _normalisation(pts: np.ndarray) -> np.ndarray:
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = math.sqrt(2.0) / d if d > 0 else 1.0
    return np.array([[s, 0, -s * c[0]], [0, s, -s * c[1]], [0, 0, 1.0]])


def fit_homography(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Normalised DLT; maps ``src`` to ``dst`` (N x 2 each, N >= 4)."""
    if len(src) < 4:
        raise ValueError("a homography needs at least 4 correspondences")
    Ts, Td = _normalisation(src), _normalisation(dst)
    hs = np.c_[src, np.ones(len(src))] @ Ts.T
    hd = np.c_[dst, np.ones(len(dst))] @ Td.T
    rows = []
    for (x, y, _), (u, v, _) in zip(hs, hd):
        rows.append([-x, -y, -1, 0, 0, 0, u * x, u * y, u])
        rows.append([0, 0, 0, -x, -y, -1, v * x, v * y, v])
    _, sv, vt = np.linalg.svd(np.asarray(rows))
    Hn = vt[-1].reshape(3, 3)
    H = np.linalg.inv(Td) @ Hn @ Ts
    if abs(H[2, 2]) < 1e-12:
        raise ValueError("degenerate homography")
    return H / H[2, 2]


def _transfer(H, pts):
    p = np.c_[pts, np.ones(len(pts))] @ H.T
    with np.errstate(divide="ignore", invalid="ignore"):
        return p[:, :2] / p[:, 2:3]


def symmetric_transfer_error(H: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Forward plus backward reprojection distance per correspondence."""
    try:
        Hinv = np.linalg.inv(H)
    except np.linalg.LinAlgError:
        return np.full(len(src), np.inf)
    fwd = np.linalg.norm(_transfer(H, src) - dst, axis=1)
    bwd = np.linalg.norm(_transfer(Hinv, dst) - src, axis=1)
    err = fwd + bwd
    return np.where(np.isfinite(err), err, np.inf)


def _collinear(pts: np.ndarray, tol: float = 1e-6) -> bool:
    centred = pts - pts.mean(axis=0)
    sv = np.linalg.svd(centred, compute_uv=False)
    return sv[-1] <= tol * max(sv[0], 1e-12)


def _sample_degenerate(pts: np.ndarray) -> bool:
    for i in range(4):
        tri = np.delete(pts, i, axis=0)
        a, b, c = tri
        if abs((b[0] - a[0]) * (c[1] - a[1]) - (b[1] - a[1]) * (c[0] - a[0])) < 1e-9:
            return True
    return False


@dataclass
class VerificationResult:
    model: np.ndarray
    inliers: list[int]
    inlier_count: int
    rms_residual: float
    iterations: int = 0

    def to_dict(self) -> dict:
        return {
            "model": [float(v) for v in self.model.ravel()],
            "inliers": list(self.inliers),
            "inlier_count": self.inlier_count,
            "rms_residual": self.rms_residual,
            "iterations": self.iterations,
        }


def _required_iterations(inlier_ratio: float, confidence: float, sample_size: int = 4) -> float:
    good = inlier_ratio**sample_size
    if good <= 0:
        return math.inf
    if good >= 1:
        return 1
    return math.log(1 - confidence) / math.log(1 - good)


def _score(H, src, dst, threshold):
    err = symmetric_transfer_error(H, src, dst)
    mask = err <= threshold
    rms = float(np.sqrt(np.mean(err[mask] ** 2))) if mask.any() else math.inf
    return mask, rms


def ransac_verify(matches: list[Match], kps_a: list[Keypoint], kps_b: list[Keypoint],
                  threshold: float = 3.0, max_iters: int = 2000, confidence: float = 0.999,
                  rng_seed: int = 0) -> VerificationResult:
    """Fit a homography to the matched keypoints with RANSAC.

    Hypotheses come from 4-point samples; the best one (most inliers, then
    lowest RMS symmetric transfer error) is refit on its inliers by
    normalised DLT and its inlier set recomputed until it stops growing.
    """
    if len(matches) < 4:
        raise ValueError(f"RANSAC needs at least 4 matches, got {len(matches)}")
    src = np.array([[kps_a[m.index_a].x, kps_a[m.index_a].y] for m in matches], dtype=np.float64)
    dst = np.array([[kps_b[m.index_b].x, kps_b[m.index_b].y] for m in matches], dtype=np.float64)
    return ransac_homography(src, dst, threshold, max_iters, confidence, rng_seed)


def ransac_homography(src, dst, threshold=3.0, max_iters=2000, confidence=0.999, rng_seed=0) -> VerificationResult:
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = len(src)
    if n < 4:
        raise ValueError(f"RANSAC needs at least 4 correspondences, got {n}")
    rng = np.random.default_rng(rng_seed)
    best_mask, best_rms, best_H = None, math.inf, None
    limit = max_iters
    it = 0
    while it < limit:
        it += 1
        idx = rng.choice(n, size=4, replace=False)
        if _sample_degenerate(src[idx]) or _sample_degenerate(dst[idx]):
            continue
        try:
            H = fit_homography(src[idx], dst[idx])
        except (ValueError, np.linalg.LinAlgError):
            continue
        mask, rms = _score(H, src, dst, threshold)
        count = int(mask.sum())
        best_count = -1 if best_mask is None else int(best_mask.sum())
        if count > best_count or (count == best_count and rms < best_rms):
            best_mask, best_rms, best_H = mask, rms, H
            limit = min(max_iters, math.ceil(_required_iterations(count / n, confidence)))
    if best_mask is None:
        raise ValueError("no non-degenerate sample found")

    for _ in range(10):
        if _collinear(src[best_mask]) or _collinear(dst[best_mask]):
            raise ValueError("degenerate (collinear) inlier set")
        try:
            H = fit_homography(src[best_mask], dst[best_mask])
        except (ValueError, np.linalg.LinAlgError):
            break
        mask, rms = _score(H, src, dst, threshold)
        if mask.sum() < best_mask.sum() or (mask.sum() == best_mask.sum() and not rms < best_rms):
            break
        grew = mask.sum() > best_mask.sum()
        best_mask, best_rms, best_H = mask, rms, H
        if not grew:
            break
    inliers = [int(i) for i in np.nonzero(best_mask)[0]]
    return VerificationResult(best_H / best_H[2, 2], inliers, len(inliers), float(best_rms), it)


@dataclass
class PairReport:
    keypoints_a: int
    keypoints_b: int
    matches: int
    inlier_count: int
    rms_residual: float | None
    verified: bool
    model: list[float] | None
    timings: dict[str, float] = field(default_factory=dict)

    def payload(self) -> dict:
        """Deterministic part of the report (no timings)."""
        d = asdict(self)
        d.pop("timings")
        return d


def _features(img, scales, luts, cfg):
    pyr = detector_response(img, scales, threads=cfg.threads)
    border = max(s.filter_size for s in scales) // 2
    kps = extract_keypoints(pyr, cfg.detection_threshold, border=border)
    needed = sorted({k.scale_index for k in kps})
    maps = [dense_descriptors_fast(img, scales[i], luts[i], scale_index=i) for i in needed]
    return kps, describe_keypoints(maps, kps)


def evaluate_pair(img_a, img_b, config: RunConfig | None = None) -> tuple[PairReport, list[Match], VerificationResult | None, tuple]:
    """Detect, describe, match and verify an image pair.

    Returns the report, the matches, the verification result (None when
    verification could not run) and the two keypoint lists.
    """
    cfg = RunConfig() if config is None else config
    a, b = as_gray(img_a), as_gray(img_b)
    scales = default_scales(cfg.scales, cfg.filter_sizes)
    luts = [build_lut(s) for s in scales]
    timings = {}
    t0 = time.perf_counter()
    kps_a, desc_a = _features(a, scales, luts, cfg)
    kps_b, desc_b = _features(b, scales, luts, cfg)
    t1 = time.perf_counter()
    timings["features"] = t1 - t0
    matches = match_descriptors(desc_a, desc_b, kps_a, kps_b, cfg.ratio_threshold)
    t2 = time.perf_counter()
    timings["matching"] = t2 - t1
    result = None
    if len(matches) >= 4:
        try:
            result = ransac_verify(matches, kps_a, kps_b, cfg.ransac_threshold_px,
                                   cfg.ransac_max_iters, cfg.ransac_confidence, cfg.rng_seed)
        except ValueError:
            result = None
    timings["verification"] = time.perf_counter() - t2
    inliers = result.inlier_count if result is not None else 0
    report = PairReport(
        keypoints_a=len(kps_a),
        keypoints_b=len(kps_b),
        matches=len(matches),
        inlier_count=inliers,
        rms_residual=result.rms_residual if result is not None else None,
        verified=inliers >= cfg.min_inliers,
        model=[float(v) for v in result.model.ravel()] if result is not None else None,
        timings=timings,
    )
    return report, matches, result, (kps_a, kps_b)
