"""Feature detection, binary description, matching, and robust homography fitting.

Everything here is a pure function of its arguments; randomness is confined to
the explicit RANSAC seed, so calls are safe to run concurrently on shared
read-only images.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np
from scipy import ndimage

from . import homography
from .raster import require_raster

# Descriptor geometry: all sampling offsets stay within this radius of the
# keypoint, so a 16 px border margin is always sufficient.
PATCH_RADIUS = 15
BORDER_MARGIN = 16
DESCRIPTOR_BITS = 256


class DegenerateInputError(ValueError):
    """Too few correspondences to even attempt estimation."""


class EstimationFailedError(RuntimeError):
    """No valid model could be fit (e.g. every minimal sample was collinear)."""


@dataclass(frozen=True)
class FeaturePoint:
    x: float
    y: float
    response: float
    orientation: float = 0.0


@dataclass
class MatchSet:
    """Cross-checked matches between image A and image B.

    ``pairs`` holds (index in A, index in B, Hamming distance) with each index
    appearing at most once. ``homography`` is present iff RANSAC found a model
    supported by >= 4 inliers.
    """

    pairs: list[tuple[int, int, int]]
    inlier: np.ndarray
    homography: np.ndarray | None

    @property
    def inlier_count(self) -> int:
        return int(np.count_nonzero(self.inlier))


# ---------------------------------------------------------------------------
# Harris corners
# ---------------------------------------------------------------------------

_SOBEL_X = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
_SOBEL_Y = _SOBEL_X.T


def harris_response(img: np.ndarray, k: float = 0.04, sigma: float = 1.0) -> np.ndarray:
    """Harris corner response map: det(M) - k * trace(M)^2 with a Gaussian window."""
    f = np.asarray(img, dtype=np.float64)
    ix = ndimage.correlate(f, _SOBEL_X, mode="nearest")
    iy = ndimage.correlate(f, _SOBEL_Y, mode="nearest")
    sxx = ndimage.gaussian_filter(ix * ix, sigma, mode="nearest")
    syy = ndimage.gaussian_filter(iy * iy, sigma, mode="nearest")
    sxy = ndimage.gaussian_filter(ix * iy, sigma, mode="nearest")
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    return det - k * trace * trace


def harris_corners(
    img: np.ndarray,
    max_points: int = 500,
    min_distance: float = 10.0,
    k: float = 0.04,
    sigma: float = 1.0,
    rel_threshold: float = 0.01,
) -> list[FeaturePoint]:
    """Strongest Harris corners, spatially spread out.

    Candidates are 3x3 local maxima above ``rel_threshold * max(response)``,
    taken in descending response order (ties: smaller y, then smaller x) and
    greedily suppressed so every returned pair is >= ``min_distance`` apart.
    A flat image yields an empty list.
    """
    require_raster(img, channels=1)
    h, w = img.shape
    if h < 32 or w < 32:
        raise ValueError(f"image must be at least 32x32, got {w}x{h}")
    resp = harris_response(img, k=k, sigma=sigma)
    peak = resp.max()
    if peak <= 0:
        return []
    thresh = rel_threshold * peak
    is_max = resp == ndimage.maximum_filter(resp, size=3, mode="nearest")
    ys, xs = np.nonzero(is_max & (resp > thresh))
    if len(ys) == 0:
        return []
    values = resp[ys, xs]
    order = np.lexsort((xs, ys, -values))

    kept_x: list[float] = []
    kept_y: list[float] = []
    out: list[FeaturePoint] = []
    min_d2 = float(min_distance) ** 2
    for idx in order:
        x, y = float(xs[idx]), float(ys[idx])
        ok = True
        for px, py in zip(kept_x, kept_y):
            if (x - px) ** 2 + (y - py) ** 2 < min_d2:
                ok = False
                break
        if not ok:
            continue
        kept_x.append(x)
        kept_y.append(y)
        out.append(FeaturePoint(x=x, y=y, response=float(values[idx])))
        if len(out) >= max_points:
            break
    return out


# ---------------------------------------------------------------------------
# Binary descriptors (steered intensity-pair tests, 256 bits)
# ---------------------------------------------------------------------------


def _make_test_pattern() -> np.ndarray:
    """Fixed set of 256 point pairs inside the patch disc (frozen seed)."""
    rng = np.random.Generator(np.random.PCG64(0x5EED5))
    pairs = []
    r2 = PATCH_RADIUS * PATCH_RADIUS
    while len(pairs) < DESCRIPTOR_BITS:
        x1, y1, x2, y2 = (int(v) for v in rng.integers(-PATCH_RADIUS, PATCH_RADIUS + 1, size=4))
        if x1 * x1 + y1 * y1 > r2 or x2 * x2 + y2 * y2 > r2:
            continue
        if x1 == x2 and y1 == y2:
            continue
        pairs.append((x1, y1, x2, y2))
    return np.array(pairs, dtype=np.float64)


_PATTERN = _make_test_pattern()


def _disc_offsets(radius: int) -> tuple[np.ndarray, np.ndarray]:
    span = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    keep = dx * dx + dy * dy <= radius * radius
    return dx[keep], dy[keep]


_DISC_DX, _DISC_DY = _disc_offsets(PATCH_RADIUS)


def orb_describe(
    img: np.ndarray, points: list[FeaturePoint]
) -> tuple[list[FeaturePoint], np.ndarray]:
    """Steered 256-bit descriptors for each keypoint far enough from the border.

    Points closer than 16 px to any border are dropped; the surviving points
    (with their intensity-centroid orientation filled in) are returned
    alongside an (N, 32) uint8 descriptor array. Deterministic for fixed input.
    """
    require_raster(img, channels=1)
    h, w = img.shape
    smooth = ndimage.uniform_filter(img.astype(np.float64), size=5, mode="nearest")

    survivors = []
    cx = []
    cy = []
    for p in points:
        ix = int(round(p.x))
        iy = int(round(p.y))
        if BORDER_MARGIN <= ix < w - BORDER_MARGIN and BORDER_MARGIN <= iy < h - BORDER_MARGIN:
            survivors.append(p)
            cx.append(ix)
            cy.append(iy)
    if not survivors:
        return [], np.zeros((0, DESCRIPTOR_BITS // 8), dtype=np.uint8)

    cxa = np.array(cx)
    cya = np.array(cy)

    # Intensity-centroid orientation over the patch disc.
    patch = smooth[cya[:, None] + _DISC_DY[None, :], cxa[:, None] + _DISC_DX[None, :]]
    m10 = (patch * _DISC_DX[None, :]).sum(axis=1)
    m01 = (patch * _DISC_DY[None, :]).sum(axis=1)
    theta = np.arctan2(m01, m10)

    cos_t = np.cos(theta)
    sin_t = np.sin(theta)
    px1, py1, px2, py2 = _PATTERN.T  # each (256,)

    def rot(px, py):
        rx = np.round(cos_t[:, None] * px[None, :] - sin_t[:, None] * py[None, :]).astype(np.int64)
        ry = np.round(sin_t[:, None] * px[None, :] + cos_t[:, None] * py[None, :]).astype(np.int64)
        return rx, ry

    rx1, ry1 = rot(px1, py1)
    rx2, ry2 = rot(px2, py2)
    s1 = smooth[cya[:, None] + ry1, cxa[:, None] + rx1]
    s2 = smooth[cya[:, None] + ry2, cxa[:, None] + rx2]
    bits = (s1 < s2).astype(np.uint8)
    desc = np.packbits(bits, axis=1)

    oriented = [replace(p, orientation=float(t)) for p, t in zip(survivors, theta)]
    return oriented, desc


_POPCOUNT = np.unpackbits(np.arange(256, dtype=np.uint8)[:, None], axis=1).sum(axis=1).astype(np.uint16)


def hamming_distances(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """(Na, Nb) Hamming distance matrix between packed descriptor rows."""
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[1]:
        raise ValueError("descriptor arrays must be (N, 32) with equal width")
    xor = a[:, None, :] ^ b[None, :, :]
    return _POPCOUNT[xor].sum(axis=2).astype(np.int64)


def match_descriptors(
    a: np.ndarray, b: np.ndarray, ratio: float = 0.7
) -> list[tuple[int, int, int]]:
    """2-NN Hamming matching with a ratio test.

    Each descriptor in ``a`` keeps its nearest neighbour in ``b`` iff
    best_distance <= ratio * second_distance (the boundary case is kept).
    Fewer than two descriptors in ``b`` yields no matches.
    """
    if not 0.0 < ratio < 1.0:
        raise ValueError(f"ratio must be in (0, 1), got {ratio}")
    if len(a) == 0 or len(b) < 2:
        return []
    d = hamming_distances(a, b)
    order = np.argsort(d, axis=1, kind="stable")
    best = order[:, 0]
    rows = np.arange(len(a))
    d_best = d[rows, best]
    d_second = d[rows, order[:, 1]]
    keep = d_best <= ratio * d_second
    return [(int(i), int(best[i]), int(d_best[i])) for i in np.nonzero(keep)[0]]


def cross_check(
    ab: list[tuple[int, int, int]], ba: list[tuple[int, int, int]]
) -> MatchSet:
    """Keep pair (i, j) iff ab maps i->j and ba maps j->i; result is one-to-one."""
    back = {i: j for i, j, _ in ba}
    pairs = [(i, j, d) for i, j, d in sorted(ab) if back.get(j) == i]
    return MatchSet(pairs=pairs, inlier=np.zeros(len(pairs), dtype=bool), homography=None)


# ---------------------------------------------------------------------------
# RANSAC homography
# ---------------------------------------------------------------------------


def _noncollinear(pts: np.ndarray, eps: float = 1e-6) -> bool:
    a, b, c, d = pts

    def area(p, q, r):
        return 0.5 * abs((q[0] - p[0]) * (r[1] - p[1]) - (q[1] - p[1]) * (r[0] - p[0]))

    return max(area(a, b, c), area(a, b, d), area(a, c, d), area(b, c, d)) > eps


def ransac_homography(
    src: np.ndarray,
    dst: np.ndarray,
    threshold: float = 3.0,
    max_iters: int = 2000,
    seed: int = 0,
    confidence: float = 0.995,
) -> tuple[np.ndarray, np.ndarray]:
    """Robust homography mapping ``src`` points onto ``dst`` points.

    Samples minimal 4-point sets with a seeded PCG64 generator, fits each by
    normalized DLT, and scores by the count of pairs whose symmetric transfer
    error is below ``threshold`` pixels. The iteration budget shrinks
    adaptively to reach ``confidence``; the best model is refit by least
    squares on its inlier set and the flags recomputed under the refit model,
    so every flagged inlier satisfies the threshold under the returned matrix.

    Deterministic: identical inputs and seed give bit-identical output.
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    n = len(src)
    if n < 4 or src.shape != dst.shape or src.shape[1:] != (2,):
        raise DegenerateInputError(f"need >= 4 point pairs of shape (n, 2), got {src.shape}")
    if threshold <= 0:
        raise ValueError(f"threshold must be > 0, got {threshold}")

    rng = np.random.Generator(np.random.PCG64(seed))
    best_count = 0
    best_h: np.ndarray | None = None
    best_inliers: np.ndarray | None = None
    bound = max_iters
    i = 0
    while i < min(max_iters, bound):
        i += 1
        idx = rng.choice(n, size=4, replace=False)
        s4, d4 = src[idx], dst[idx]
        if not (_noncollinear(s4) and _noncollinear(d4)):
            continue
        try:
            h = homography.fit(s4, d4)
        except (ValueError, np.linalg.LinAlgError):
            continue
        if abs(np.linalg.det(h)) < 1e-12:
            continue
        err = homography.symmetric_transfer_error(h, src, dst)
        inliers = err < threshold
        count = int(inliers.sum())
        if count > best_count:
            best_count = count
            best_h = h
            best_inliers = inliers
            ratio = count / n
            denom = math.log(max(1e-12, 1.0 - ratio**4))
            if denom < 0:
                bound = min(bound, int(math.ceil(math.log(1.0 - confidence) / denom)))

    if best_h is None or best_inliers is None or best_count < 4:
        raise EstimationFailedError("no non-degenerate minimal sample produced a model")

    h_final = best_h
    try:
        h_refit = homography.fit(src[best_inliers], dst[best_inliers])
        if abs(np.linalg.det(h_refit)) >= 1e-12:
            h_final = h_refit
    except (ValueError, np.linalg.LinAlgError):
        pass  # degenerate inlier set: keep the minimal-sample model
    err = homography.symmetric_transfer_error(h_final, src, dst)
    flags = err < threshold
    return h_final, flags
