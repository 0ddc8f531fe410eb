"""Independent brute-force oracles. Deliberately loop-based and separate from
the library's vectorized paths so the two sides can disagree."""

from __future__ import annotations

import math

import numpy as np


def _correlate2d_replicate(f: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    kh, kw = kernel.shape
    rh, rw = kh // 2, kw // 2
    p = np.pad(f, ((rh, rh), (rw, rw)), mode="edge")
    h, w = f.shape
    out = np.zeros_like(f)
    for y in range(h):
        for x in range(w):
            acc = 0.0
            for dy in range(kh):
                for dx in range(kw):
                    acc += kernel[dy, dx] * p[y + dy, x + dx]
            out[y, x] = acc
    return out


def _gaussian_kernel_1d(sigma: float) -> np.ndarray:
    radius = int(4.0 * sigma + 0.5)
    xs = np.arange(-radius, radius + 1, dtype=np.float64)
    k = np.exp(-0.5 * xs * xs / (sigma * sigma))
    return k / k.sum()


def _gaussian_blur_replicate(f: np.ndarray, sigma: float) -> np.ndarray:
    k = _gaussian_kernel_1d(sigma)
    out = _correlate2d_replicate(f, k[None, :])
    return _correlate2d_replicate(out, k[:, None])


def harris_response_bruteforce(img: np.ndarray, k: float = 0.04, sigma: float = 1.0) -> np.ndarray:
    f = img.astype(np.float64)
    sx = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
    ix = _correlate2d_replicate(f, sx)
    iy = _correlate2d_replicate(f, sx.T)
    sxx = _gaussian_blur_replicate(ix * ix, sigma)
    syy = _gaussian_blur_replicate(iy * iy, sigma)
    sxy = _gaussian_blur_replicate(ix * iy, sigma)
    det = sxx * syy - sxy * sxy
    trace = sxx + syy
    return det - k * trace * trace


def suppress_bruteforce(
    resp: np.ndarray, max_points: int, min_distance: float, rel_threshold: float
) -> list[tuple[float, float]]:
    """Exhaustive spacing suppression over 3x3 local maxima of a response map."""
    h, w = resp.shape
    peak = resp.max()
    if peak <= 0:
        return []
    thresh = rel_threshold * peak
    cands = []
    for y in range(h):
        for x in range(w):
            v = resp[y, x]
            if v <= thresh:
                continue
            is_max = True
            for dy in (-1, 0, 1):
                for dx in (-1, 0, 1):
                    yy = min(max(y + dy, 0), h - 1)
                    xx = min(max(x + dx, 0), w - 1)
                    if resp[yy, xx] > v:
                        is_max = False
            if is_max:
                cands.append((-v, y, x))
    cands.sort()
    kept: list[tuple[float, float]] = []
    for _, y, x in cands:
        if all((x - px) ** 2 + (y - py) ** 2 >= min_distance**2 for px, py in kept):
            kept.append((float(x), float(y)))
            if len(kept) >= max_points:
                break
    return kept


def warp_pixel_oracle(img: np.ndarray, h_mat: np.ndarray, out_w: int, out_h: int):
    """Direct per-pixel evaluation of the inverse-mapped bilinear warp."""
    h_inv = np.linalg.inv(h_mat)
    src_h, src_w = img.shape[:2]
    out = np.zeros((out_h, out_w), dtype=np.float64)
    valid = np.zeros((out_h, out_w), dtype=bool)
    f = img.astype(np.float64)
    for y in range(out_h):
        for x in range(out_w):
            q = h_inv @ np.array([x, y, 1.0])
            sx, sy = q[0] / q[2], q[1] / q[2]
            if not (0 <= sx <= src_w - 1 and 0 <= sy <= src_h - 1):
                continue
            x0 = min(int(math.floor(sx)), src_w - 2) if src_w > 1 else 0
            y0 = min(int(math.floor(sy)), src_h - 2) if src_h > 1 else 0
            fx, fy = sx - x0, sy - y0
            v = (
                f[y0, x0] * (1 - fx) * (1 - fy)
                + f[y0, x0 + 1] * fx * (1 - fy)
                + f[y0 + 1, x0] * (1 - fx) * fy
                + f[y0 + 1, x0 + 1] * fx * fy
            )
            out[y, x] = v
            valid[y, x] = True
    return out, valid


def scan_argmax(lo: float, hi: float, score_fn, step: float = 0.1) -> float:
    """Exhaustive scan oracle: argmax over [lo, hi] at fixed step."""
    best_x = lo
    best_v = -math.inf
    x = lo
    while x <= hi + 1e-12:
        v = score_fn(x)
        if v > best_v:
            best_v = v
            best_x = x
        x += step
    return best_x


def nearest_record_bruteforce(records, lat: float, lon: float):
    best = None
    best_key = None
    for r in records:
        dlat = lat - r.pose.lat
        dlon = (lon - r.pose.lon) * math.cos(math.radians(lat))
        key = (math.hypot(dlat, dlon), r.id)
        if best_key is None or key < best_key:
            best_key = key
            best = r
    return best
