"""Lane-marker segmentation on clear archive images and projection onto the
current frame.

Marker masks are boolean arrays over the database image. Color ranges are
expressed in the raster's RGB channel order; the shipped defaults correspond
to the conventional blue-green-red ordering of the thresholds they originate
from, re-expressed as RGB (so "yellow" means high red, high green, low blue).
Both interpretations remain selectable through configuration.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import ndimage

from . import homography
from .raster import require_raster, to_gray


@dataclass(frozen=True)
class ColorRange:
    label: str
    low: tuple[int, int, int]
    high: tuple[int, int, int]

    def __post_init__(self) -> None:
        for triple in (self.low, self.high):
            if len(triple) != 3 or any(not 0 <= v <= 255 for v in triple):
                raise ValueError(f"color triple {triple} out of 8-bit range")
        if any(lo > hi for lo, hi in zip(self.low, self.high)):
            raise ValueError(f"range {self.label!r}: low {self.low} exceeds high {self.high}")


DEFAULT_RANGES = (
    ColorRange("white", (190, 180, 180), (255, 255, 255)),
    ColorRange("yellow", (170, 150, 0), (255, 255, 150)),
)


def segment_markers(img: np.ndarray, ranges=DEFAULT_RANGES) -> np.ndarray:
    """Pixels whose channels fall inclusively within any configured range."""
    require_raster(img, channels=3)
    mask = np.zeros(img.shape[:2], dtype=bool)
    for r in ranges:
        lo = np.array(r.low, dtype=np.uint8)
        hi = np.array(r.high, dtype=np.uint8)
        mask |= ((img >= lo) & (img <= hi)).all(axis=2)
    return mask


def _disc(radius: int) -> np.ndarray:
    span = np.arange(-radius, radius + 1)
    dy, dx = np.meshgrid(span, span, indexing="ij")
    return dx * dx + dy * dy <= radius * radius


def canny_edges(gray: np.ndarray, low: float, high: float) -> np.ndarray:
    """Canny edge map: Sobel gradients, non-maximum suppression along the
    quantized gradient direction, then hysteresis between the two thresholds."""
    require_raster(gray, channels=1)
    if not 0 < low < high:
        raise ValueError(f"thresholds must satisfy 0 < low < high, got {low}, {high}")
    f = gray.astype(np.float64)
    kx = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]])
    gx = ndimage.correlate(f, kx, mode="nearest")
    gy = ndimage.correlate(f, kx.T, mode="nearest")
    mag = np.hypot(gx, gy)

    angle = np.rad2deg(np.arctan2(gy, gx)) % 180.0
    h, w = gray.shape
    padded = np.pad(mag, 1, mode="constant")

    def neighbors(dy, dx):
        return padded[1 + dy : 1 + dy + h, 1 + dx : 1 + dx + w]

    # 4 direction bins; compare against the two neighbors along the gradient.
    d0 = (angle < 22.5) | (angle >= 157.5)   # horizontal gradient -> E/W
    d1 = (angle >= 22.5) & (angle < 67.5)    # diagonal  -> NE/SW
    d2 = (angle >= 67.5) & (angle < 112.5)   # vertical gradient -> N/S
    d3 = (angle >= 112.5) & (angle < 157.5)  # anti-diagonal -> NW/SE
    keep = np.zeros_like(mag, dtype=bool)
    keep |= d0 & (mag >= neighbors(0, 1)) & (mag >= neighbors(0, -1))
    keep |= d1 & (mag >= neighbors(1, 1)) & (mag >= neighbors(-1, -1))
    keep |= d2 & (mag >= neighbors(1, 0)) & (mag >= neighbors(-1, 0))
    keep |= d3 & (mag >= neighbors(1, -1)) & (mag >= neighbors(-1, 1))

    strong = keep & (mag >= high)
    weak_or_strong = keep & (mag >= low)
    labels, _ = ndimage.label(weak_or_strong, structure=np.ones((3, 3), dtype=int))
    strong_labels = np.unique(labels[strong])
    strong_labels = strong_labels[strong_labels != 0]
    return np.isin(labels, strong_labels)


def edge_filter(
    mask: np.ndarray,
    img: np.ndarray,
    canny_low: float = 50.0,
    canny_high: float = 150.0,
    edge_radius: int = 3,
) -> np.ndarray:
    """Keep only masked pixels lying within ``edge_radius`` of a Canny edge.

    The output is always a subset of the input mask; interiors of large
    uniform blobs (no edges nearby) are removed while thin outlined markers
    survive intact.
    """
    require_raster(img)
    if mask.shape != img.shape[:2]:
        raise ValueError("mask shape does not match image")
    if not mask.any():
        return mask.copy()
    edges = canny_edges(to_gray(img), canny_low, canny_high)
    if edge_radius > 0:
        near_edge = ndimage.binary_dilation(edges, structure=_disc(edge_radius))
    else:
        near_edge = edges
    return mask & near_edge


def project_markers(
    db_img: np.ndarray,
    mask: np.ndarray,
    h: np.ndarray,
    current: np.ndarray,
    vicinity: int = 2,
    highlight: tuple[int, int, int] | None = None,
) -> np.ndarray:
    """Copy marker pixels from the database image onto the current frame.

    The mask is dilated by a disc of radius ``vicinity`` so pixels around the
    marker outline carry over too; each source pixel's actual color is splat
    bilinearly onto the four neighbours of its warped location. Locations
    falling outside the frame are skipped, and everything not written keeps
    the current frame's value. ``highlight`` substitutes a flat tint for the
    source colors (visualization aid).
    """
    require_raster(db_img, channels=3)
    require_raster(current, channels=3)
    if vicinity < 0:
        raise ValueError(f"vicinity must be >= 0, got {vicinity}")
    if mask.shape != db_img.shape[:2]:
        raise ValueError("mask shape does not match database image")
    h = homography.require_invertible(h)

    out = current.copy()
    if not mask.any():
        return out
    grown = ndimage.binary_dilation(mask, structure=_disc(vicinity)) if vicinity > 0 else mask

    ys, xs = np.nonzero(grown)
    pts = np.stack([xs, ys], axis=1).astype(np.float64)
    tgt = homography.apply(h, pts)
    colors = db_img[ys, xs].astype(np.float64)
    if highlight is not None:
        colors = np.tile(np.asarray(highlight, dtype=np.float64), (len(colors), 1))

    hh, ww = current.shape[:2]
    x0 = np.floor(tgt[:, 0]).astype(np.int64)
    y0 = np.floor(tgt[:, 1]).astype(np.int64)
    fx = tgt[:, 0] - x0
    fy = tgt[:, 1] - y0

    wacc = np.zeros((hh, ww), dtype=np.float64)
    cacc = np.zeros((hh, ww, 3), dtype=np.float64)
    corners = (
        (x0, y0, (1 - fx) * (1 - fy)),
        (x0 + 1, y0, fx * (1 - fy)),
        (x0, y0 + 1, (1 - fx) * fy),
        (x0 + 1, y0 + 1, fx * fy),
    )
    for cx, cy, wgt in corners:
        ok = (cx >= 0) & (cx < ww) & (cy >= 0) & (cy < hh) & (wgt > 0)
        if not ok.any():
            continue
        np.add.at(wacc, (cy[ok], cx[ok]), wgt[ok])
        np.add.at(cacc, (cy[ok], cx[ok]), colors[ok] * wgt[ok][:, None])

    covered = wacc > 1e-12
    blended = cacc[covered] / wacc[covered][:, None]
    out[covered] = np.clip(np.floor(blended + 0.5), 0, 255).astype(np.uint8)
    return out
