"""3x3 projective transforms on pixel coordinates.

Convention: a homography ``h`` maps source pixel coordinates ``(x, y)`` to
destination coordinates, normalized so ``h[2, 2] == 1``. In the pipeline the
source is the database (archive) image and the destination is the current
camera frame.
"""

from __future__ import annotations

import numpy as np

IDENTITY = np.eye(3)


def normalize(h: np.ndarray) -> np.ndarray:
    """Scale so the bottom-right entry is exactly 1."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != (3, 3):
        raise ValueError(f"homography must be 3x3, got {h.shape}")
    if not np.all(np.isfinite(h)) or abs(h[2, 2]) < 1e-12:
        raise ValueError("homography is not normalizable (h[2,2] ~ 0 or non-finite)")
    return h / h[2, 2]


def require_invertible(h: np.ndarray) -> np.ndarray:
    h = normalize(h)
    if abs(np.linalg.det(h)) < 1e-12:
        raise ValueError("homography is singular")
    return h


def apply(h: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Map an (N, 2) array of points through ``h``."""
    pts = np.asarray(pts, dtype=np.float64)
    ph = np.column_stack([pts, np.ones(len(pts))])
    q = ph @ np.asarray(h, dtype=np.float64).T
    w = q[:, 2]
    w = np.where(np.abs(w) < 1e-12, 1e-12, w)
    return q[:, :2] / w[:, None]


def symmetric_transfer_error(h: np.ndarray, src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Per-pair sqrt(|h(src)-dst|^2 + |h^-1(dst)-src|^2), in pixels."""
    h_inv = np.linalg.inv(h)
    fwd = apply(h, src) - dst
    bwd = apply(h_inv, dst) - src
    return np.sqrt((fwd**2).sum(axis=1) + (bwd**2).sum(axis=1))


def _normalize_points(pts: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Hartley normalization: centroid at origin, mean distance sqrt(2)."""
    c = pts.mean(axis=0)
    d = np.sqrt(((pts - c) ** 2).sum(axis=1)).mean()
    s = np.sqrt(2.0) / (d + 1e-12)
    t = np.array([[s, 0.0, -s * c[0]], [0.0, s, -s * c[1]], [0.0, 0.0, 1.0]])
    ph = np.column_stack([pts, np.ones(len(pts))])
    pn = (t @ ph.T).T
    return pn[:, :2], t


def fit(src: np.ndarray, dst: np.ndarray) -> np.ndarray:
    """Least-squares homography from >= 4 correspondences via normalized DLT.

    Raises ValueError when the system is rank-deficient (e.g. collinear points).
    """
    src = np.asarray(src, dtype=np.float64)
    dst = np.asarray(dst, dtype=np.float64)
    if len(src) < 4 or src.shape != dst.shape:
        raise ValueError("need >= 4 matched point pairs of equal shape")
    sn, ts = _normalize_points(src)
    dn, td = _normalize_points(dst)

    n = len(sn)
    x, y = sn[:, 0], sn[:, 1]
    u, v = dn[:, 0], dn[:, 1]
    zeros = np.zeros(n)
    ones = np.ones(n)
    a = np.empty((2 * n, 9))
    a[0::2] = np.column_stack([x, y, ones, zeros, zeros, zeros, -u * x, -u * y, -u])
    a[1::2] = np.column_stack([zeros, zeros, zeros, x, y, ones, -v * x, -v * y, -v])
    if np.linalg.matrix_rank(a) < 8:
        raise ValueError("degenerate correspondence set (rank < 8)")
    _, _, vt = np.linalg.svd(a)
    hn = vt[-1].reshape(3, 3)
    if abs(hn[2, 2]) < 1e-12:
        raise ValueError("degenerate homography solution")
    h = np.linalg.inv(td) @ hn @ ts
    return normalize(h)


def corner_error(h_a: np.ndarray, h_b: np.ndarray, width: int, height: int) -> float:
    """Mean displacement, in pixels, of the four image corners between two homographies."""
    corners = np.array(
        [[0.0, 0.0], [width - 1.0, 0.0], [width - 1.0, height - 1.0], [0.0, height - 1.0]]
    )
    d = apply(h_a, corners) - apply(h_b, corners)
    return float(np.sqrt((d**2).sum(axis=1)).mean())
