"""Pixel-based alignment: common-content masks and ECC homography refinement.

A pixel mask is a boolean numpy array with the same (h, w) shape as the image
it selects from. The correlation-maximizing refinement samples the current
frame at positions warped from the database image, so the mask lives in
database-image coordinates throughout.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from . import homography
from .raster import require_raster

# Below this many in-bounds masked pixels the normal equations are junk.
MIN_MASKED_PIXELS = 400

_MODEL_PARAMS = {"translation": 2, "affine": 6, "homography": 8}


@dataclass
class EccResult:
    h: np.ndarray
    rho: float
    iterations: int
    converged: bool


def build_common_mask(
    points: np.ndarray, window: int, width: int, height: int
) -> np.ndarray:
    """Union of window x window squares centered on each matched point, clipped
    to the image bounds."""
    if window < 1 or window % 2 == 0:
        raise ValueError(f"window must be odd and >= 1, got {window}")
    mask = np.zeros((height, width), dtype=bool)
    pts = np.asarray(points, dtype=np.float64).reshape(-1, 2)
    r = window // 2
    for x, y in pts:
        cx = int(round(x))
        cy = int(round(y))
        if not (0 <= cx < width and 0 <= cy < height):
            raise ValueError(f"point ({x}, {y}) outside {width}x{height} image")
        mask[max(0, cy - r) : min(height, cy + r + 1), max(0, cx - r) : min(width, cx + r + 1)] = True
    return mask


def sample_bilinear(img: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Bilinear samples of a float image at (possibly fractional) coordinates.

    Coordinates must already be inside [0, w-1] x [0, h-1]; neighbours are
    clipped so exact-boundary samples are well defined.
    """
    h, w = img.shape[:2]
    x0 = np.floor(xs).astype(np.int64)
    y0 = np.floor(ys).astype(np.int64)
    x0 = np.clip(x0, 0, w - 2) if w > 1 else np.zeros_like(x0)
    y0 = np.clip(y0, 0, h - 2) if h > 1 else np.zeros_like(y0)
    fx = xs - x0
    fy = ys - y0
    i00 = img[y0, x0]
    i01 = img[y0, x0 + 1] if w > 1 else i00
    i10 = img[y0 + 1, x0] if h > 1 else i00
    i11 = img[y0 + 1, x0 + 1] if w > 1 and h > 1 else i00
    if img.ndim == 3:
        fx = fx[..., None]
        fy = fy[..., None]
    return (
        i00 * (1 - fx) * (1 - fy)
        + i01 * fx * (1 - fy)
        + i10 * (1 - fx) * fy
        + i11 * fx * fy
    )


def warp_perspective(
    img: np.ndarray, h: np.ndarray, out_width: int, out_height: int
) -> tuple[np.ndarray, np.ndarray]:
    """Warp a raster by ``h`` into an out_width x out_height frame.

    Output pixel (x, y) is sampled from ``img`` at H^-1 (x, y, 1) with bilinear
    interpolation. Samples falling outside the source are written as 0 and
    reported False in the returned validity mask.
    """
    require_raster(img)
    h = homography.require_invertible(h)
    h_inv = np.linalg.inv(h)

    xs, ys = np.meshgrid(np.arange(out_width, dtype=np.float64), np.arange(out_height, dtype=np.float64))
    pts = np.stack([xs.ravel(), ys.ravel()], axis=1)
    src = homography.apply(h_inv, pts)
    sx = src[:, 0].reshape(out_height, out_width)
    sy = src[:, 1].reshape(out_height, out_width)

    hh, ww = img.shape[:2]
    valid = (sx >= 0) & (sx <= ww - 1) & (sy >= 0) & (sy <= hh - 1)
    sxc = np.clip(sx, 0, ww - 1)
    syc = np.clip(sy, 0, hh - 1)
    sampled = sample_bilinear(img.astype(np.float64), sxc, syc)
    out = np.floor(sampled + 0.5).astype(np.int64)
    out = np.clip(out, 0, 255).astype(np.uint8)
    if img.ndim == 3:
        out[~valid] = 0
    else:
        out[~valid] = 0
    return out, valid


def _warp_params(h: np.ndarray, model: str) -> np.ndarray:
    if model == "translation":
        return np.array([h[0, 2], h[1, 2]])
    if model == "affine":
        return np.array([h[0, 0], h[0, 1], h[0, 2], h[1, 0], h[1, 1], h[1, 2]])
    return np.array([h[0, 0], h[0, 1], h[0, 2], h[1, 0], h[1, 1], h[1, 2], h[2, 0], h[2, 1]])


def _params_to_h(p: np.ndarray, model: str) -> np.ndarray:
    h = np.eye(3)
    if model == "translation":
        h[0, 2], h[1, 2] = p
    elif model == "affine":
        h[0, 0], h[0, 1], h[0, 2], h[1, 0], h[1, 1], h[1, 2] = p
    else:
        h[0, 0], h[0, 1], h[0, 2], h[1, 0], h[1, 1], h[1, 2], h[2, 0], h[2, 1] = p
    return h


def _warp_points(p: np.ndarray, model: str, x: np.ndarray, y: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Warped coordinates (u, v) and the projective denominator w."""
    h = _params_to_h(p, model)
    w = h[2, 0] * x + h[2, 1] * y + 1.0
    u = (h[0, 0] * x + h[0, 1] * y + h[0, 2]) / w
    v = (h[1, 0] * x + h[1, 1] * y + h[1, 2]) / w
    return u, v, w


def _warp_jacobian(
    p: np.ndarray, model: str, x: np.ndarray, y: np.ndarray, gx: np.ndarray, gy: np.ndarray
) -> np.ndarray:
    """Steepest-descent images: d(intensity)/d(params), shape (n, n_params)."""
    n = len(x)
    if model == "translation":
        return np.column_stack([gx, gy])
    if model == "affine":
        return np.column_stack([gx * x, gx * y, gx, gy * x, gy * y, gy])
    u, v, w = _warp_points(p, model, x, y)
    inv_w = 1.0 / w
    g = np.empty((n, 8))
    g[:, 0] = gx * x * inv_w
    g[:, 1] = gx * y * inv_w
    g[:, 2] = gx * inv_w
    g[:, 3] = gy * x * inv_w
    g[:, 4] = gy * y * inv_w
    g[:, 5] = gy * inv_w
    g[:, 6] = -(gx * u + gy * v) * x * inv_w
    g[:, 7] = -(gx * u + gy * v) * y * inv_w
    return g


def _masked_rho(
    template: np.ndarray,
    cur: np.ndarray,
    xs: np.ndarray,
    ys: np.ndarray,
    p: np.ndarray,
    model: str,
) -> tuple[float, int]:
    """Zero-mean correlation over masked template pixels that warp in bounds."""
    u, v, _ = _warp_points(p, model, xs, ys)
    hh, ww = cur.shape
    valid = (u >= 0) & (u <= ww - 1) & (v >= 0) & (v <= hh - 1)
    count = int(valid.sum())
    if count < 2:
        return float("nan"), count
    t = template[valid]
    i = sample_bilinear(cur, u[valid], v[valid])
    tz = t - t.mean()
    iz = i - i.mean()
    denom = np.linalg.norm(tz) * np.linalg.norm(iz)
    if denom < 1e-12:
        return float("nan"), count
    return float(tz @ iz / denom), count


def ecc_refine(
    db_img: np.ndarray,
    cur_img: np.ndarray,
    h0: np.ndarray,
    mask: np.ndarray,
    max_iters: int = 50,
    eps: float = 1e-6,
    model: str = "homography",
) -> EccResult:
    """Refine ``h0`` (database -> current) by maximizing the enhanced correlation
    coefficient over masked pixels.

    The criterion is the normalized correlation of zero-mean intensity vectors
    between the database values at masked pixels and the current frame sampled
    at their warped positions, which makes the fit invariant to gain/bias
    photometric changes. Updates follow the forward-additive scheme with a
    least-squares solve on the steepest-descent images each iteration; the
    loop stops when the parameter-update norm drops below ``eps`` or after
    ``max_iters``.

    Guarantee: the returned correlation never falls below rho(h0) - 1e-9; when
    refinement would do worse (or the normal matrix goes singular, or too few
    masked pixels survive warping), ``h0`` comes back unchanged with
    ``converged=False``.
    """
    require_raster(db_img, channels=1)
    require_raster(cur_img, channels=1)
    if db_img.shape != cur_img.shape:
        raise ValueError(f"image dimensions differ: {db_img.shape} vs {cur_img.shape}")
    if mask.shape != db_img.shape:
        raise ValueError(f"mask shape {mask.shape} does not match image {db_img.shape}")
    if not mask.any():
        raise ValueError("mask is empty")
    if model not in _MODEL_PARAMS:
        raise ValueError(f"unknown motion model {model!r}")
    h0 = homography.require_invertible(h0)

    db = db_img.astype(np.float64)
    cur = cur_img.astype(np.float64)
    gy_full, gx_full = np.gradient(cur)

    ys_i, xs_i = np.nonzero(mask)
    xs = xs_i.astype(np.float64)
    ys = ys_i.astype(np.float64)
    template = db[ys_i, xs_i]

    p0 = _warp_params(h0, model)
    rho0, count0 = _masked_rho(template, cur, xs, ys, p0, model)
    if count0 < MIN_MASKED_PIXELS:
        return EccResult(h=h0.copy(), rho=rho0, iterations=0, converged=False)

    def fallback(iterations: int) -> EccResult:
        return EccResult(h=h0.copy(), rho=rho0, iterations=iterations, converged=False)

    p = p0.copy()
    iterations = 0
    converged = False
    hh, ww = cur.shape
    for it in range(1, max_iters + 1):
        u, v, _ = _warp_points(p, model, xs, ys)
        valid = (u >= 0) & (u <= ww - 1) & (v >= 0) & (v <= hh - 1)
        if int(valid.sum()) < MIN_MASKED_PIXELS:
            return fallback(iterations)
        xv, yv = xs[valid], ys[valid]
        uv, vv = u[valid], v[valid]
        t = template[valid]
        iw = sample_bilinear(cur, uv, vv)
        gx = sample_bilinear(gx_full, uv, vv)
        gy = sample_bilinear(gy_full, uv, vv)

        tz = t - t.mean()
        iz = iw - iw.mean()
        g = _warp_jacobian(p, model, xv, yv, gx, gy)
        g = g - g.mean(axis=0)

        gtg = g.T @ g
        try:
            gtg_inv = np.linalg.inv(gtg)
        except np.linalg.LinAlgError:
            return fallback(iterations)

        norm_iz = np.linalg.norm(iz)
        proj_i = g.T @ iz
        proj_t = g.T @ tz
        lam_num = norm_iz**2 - proj_i @ gtg_inv @ proj_i
        lam_den = tz @ iz - proj_t @ gtg_inv @ proj_i
        if lam_den <= 0:
            # Images decorrelated beyond what the update handles; stop here.
            break
        lam = lam_num / lam_den
        error = lam * tz - iz
        dp = gtg_inv @ (g.T @ error)
        if not np.all(np.isfinite(dp)):
            return fallback(iterations)
        p = p + dp
        iterations = it
        if np.linalg.norm(dp) < eps:
            converged = True
            break

    h_final = homography.normalize(_params_to_h(p, model))
    rho_final, count_final = _masked_rho(template, cur, xs, ys, p, model)
    if count_final < MIN_MASKED_PIXELS or not np.isfinite(rho_final) or rho_final < rho0 - 1e-9:
        return fallback(iterations)
    return EccResult(h=h_final, rho=rho_final, iterations=iterations, converged=converged)
