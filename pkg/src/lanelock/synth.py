"""Deterministic synthetic street scenes.

A SceneWorld is a large textured plane with a road and painted lane markers;
camera poses map to crop windows, so nearby poses see overlapping content,
heading/pitch pan the view, and identical poses reproduce identical pixels.
Views double as provider imagery and as ground truth (the painted marker
pixels are known exactly), which is what the eval fixtures and the test suite
are built on.

Every non-marker pixel keeps its red channel <= 169, safely outside both
default marker color ranges, so segmentation ground truth is exact.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .imagestore import GeoPose, ImageryNotFound, Store, add_record, open_store
from .raster import save_png

MAX_BACKGROUND_RED = 169

YELLOW_PAINT = (240, 210, 40)
WHITE_PAINT = (235, 235, 235)


@dataclass
class SceneWorld:
    image: np.ndarray
    marker_mask: np.ndarray
    origin: GeoPose
    px_per_deg_lat: float = 2.2e6
    px_per_deg_lon: float = 2.2e6
    px_per_deg_heading: float = 60.0
    px_per_deg_pitch: float = 40.0

    @property
    def size(self) -> int:
        return self.image.shape[0]


def make_world(seed: int = 0, size: int = 2600, origin: GeoPose | None = None) -> SceneWorld:
    """Render a world plane: textured surroundings, a road band, lane markers."""
    if size < 1200:
        raise ValueError("world size must be >= 1200 (road band is 560 px wide)")
    rng = np.random.default_rng(seed)
    origin = origin or GeoPose(40.0, -75.0, 180.0, 0.0)

    img = np.empty((size, size, 3), dtype=np.uint8)
    grad = np.linspace(92, 108, size).astype(np.uint8)
    img[:] = grad[:, None, None]

    # Textured surroundings. A bimodal dark/light palette keeps corner
    # strengths in a similar band, so no single corner dwarfs the rest.
    def block_color():
        base = int(rng.integers(25, 41)) if rng.integers(2) == 0 else int(rng.integers(152, 167))
        return np.clip(base + rng.integers(-6, 7, size=3), 0, 166)

    n_blocks = max(1, size * size // 8000)
    n_squares = max(1, size * size // 1600)
    for _ in range(n_blocks):
        w = int(rng.integers(8, 90))
        h = int(rng.integers(8, 90))
        x = int(rng.integers(0, size - w))
        y = int(rng.integers(0, size - h))
        img[y : y + h, x : x + w] = block_color()
    for _ in range(n_squares):
        s = int(rng.integers(3, 11))
        x = int(rng.integers(0, size - s))
        y = int(rng.integers(0, size - s))
        img[y : y + s, x : x + s] = block_color()

    # Road band down the middle.
    road_w = 240
    x0 = size // 2 - road_w // 2
    asphalt = rng.integers(118, 136, size=(size, road_w, 3))
    img[:, x0 : x0 + road_w] = np.clip(asphalt, 0, 166).astype(np.uint8)

    # Lane-repair patches give the road surface itself some corners.
    patch_rng = np.random.default_rng(seed + 2)
    for _ in range(max(1, size // 20)):
        w = int(patch_rng.integers(8, 40))
        h = int(patch_rng.integers(8, 40))
        x = int(patch_rng.integers(x0, x0 + road_w - w))
        y = int(patch_rng.integers(0, size - h))
        img[y : y + h, x : x + w] = int(patch_rng.integers(50, 70))

    # Per-pixel noise gives visually similar patches distinct descriptors.
    noise = rng.integers(-12, 13, size=img.shape)
    img = np.clip(img.astype(np.int32) + noise, 0, 166).astype(np.uint8)

    img[..., 0] = np.minimum(img[..., 0], MAX_BACKGROUND_RED)

    marker = np.zeros((size, size), dtype=bool)
    cx = size // 2

    def stripe(x_center: int, width: int, dash: int | None, gap: int, color) -> None:
        xs = slice(x_center - width // 2, x_center - width // 2 + width)
        if dash is None:
            marker[:, xs] = True
            img[:, xs] = color
        else:
            y = 0
            while y < size:
                marker[y : min(size, y + dash), xs] = True
                img[y : min(size, y + dash), xs] = color
                y += dash + gap

    # Double yellow center line, dashed white side lines.
    stripe(cx - 12, 5, None, 0, YELLOW_PAINT)
    stripe(cx + 12, 5, None, 0, YELLOW_PAINT)
    stripe(cx - 220, 5, 60, 50, WHITE_PAINT)
    stripe(cx + 220, 5, 60, 50, WHITE_PAINT)

    # Sparse painted road symbols (arrow stems / signs) in white.
    sym_rng = np.random.default_rng(seed + 1)
    for _ in range(24):
        w = int(sym_rng.integers(10, 26))
        h = int(sym_rng.integers(26, 60))
        x = int(sym_rng.integers(x0 + 40, x0 + road_w - 40 - w))
        y = int(sym_rng.integers(0, size - h))
        img[y : y + h, x : x + w] = WHITE_PAINT
        marker[y : y + h, x : x + w] = True

    return SceneWorld(image=img, marker_mask=marker, origin=origin)


def _angle_diff(a: float, b: float) -> float:
    return (a - b + 180.0) % 360.0 - 180.0


def view_center(world: SceneWorld, pose: GeoPose) -> tuple[float, float]:
    o = world.origin
    cx = world.size / 2.0
    cy = world.size / 2.0
    cx += (pose.lon - o.lon) * world.px_per_deg_lon
    cx += _angle_diff(pose.heading, o.heading) * world.px_per_deg_heading
    cy += (o.lat - pose.lat) * world.px_per_deg_lat
    cy += (o.pitch - pose.pitch) * world.px_per_deg_pitch
    return cx, cy


def _crop_bounds(world: SceneWorld, pose: GeoPose, width: int, height: int) -> tuple[int, int]:
    cx, cy = view_center(world, pose)
    x = int(round(cx - width / 2.0))
    y = int(round(cy - height / 2.0))
    if x < 0 or y < 0 or x + width > world.size or y + height > world.size:
        raise ImageryNotFound(f"pose {pose} falls outside the synthetic world")
    return x, y


def view(world: SceneWorld, pose: GeoPose, width: int, height: int) -> np.ndarray:
    x, y = _crop_bounds(world, pose, width, height)
    return world.image[y : y + height, x : x + width].copy()


def view_marker_mask(world: SceneWorld, pose: GeoPose, width: int, height: int) -> np.ndarray:
    x, y = _crop_bounds(world, pose, width, height)
    return world.marker_mask[y : y + height, x : x + width].copy()


class SyntheticProvider:
    """Provider backed by a SceneWorld; fov is accepted and ignored (flat world).

    Optionally counts calls, which the cache tests rely on.
    """

    def __init__(self, world: SceneWorld):
        self.world = world
        self.calls = 0

    def get_image(self, pose: GeoPose, width: int, height: int, fov: float) -> np.ndarray:
        self.calls += 1
        return view(self.world, pose, width, height)


def apply_gain_bias(img: np.ndarray, gain: float, bias: float) -> np.ndarray:
    """Affine photometric distortion, clamped to 8 bits."""
    return np.clip(img.astype(np.float64) * gain + bias, 0, 255).astype(np.uint8)


def black_lower_third(img: np.ndarray) -> np.ndarray:
    """Simulated degraded road view: the bottom third painted out."""
    out = img.copy()
    out[out.shape[0] * 2 // 3 :] = 0
    return out


def add_distractors(img: np.ndarray, seed: int, count: int = 6) -> np.ndarray:
    """Paste opaque blocks (parked cars, equipment) that the other image lacks."""
    rng = np.random.default_rng(seed)
    out = img.copy()
    h, w = img.shape[:2]
    for _ in range(count):
        bw = int(rng.integers(30, 70))
        bh = int(rng.integers(20, 50))
        x = int(rng.integers(0, w - bw))
        y = int(rng.integers(0, h - bh))
        color = rng.integers(20, 160, size=3)
        out[y : y + bh, x : x + bw] = color
    out[..., 0] = np.minimum(out[..., 0], MAX_BACKGROUND_RED)
    return out


def build_store(
    directory,
    world: SceneWorld,
    center: GeoPose,
    step: float = 1e-4,
    n: int = 3,
    width: int = 640,
    height: int = 640,
    captured: str = "2014-09-01",
) -> Store:
    """Materialize an n x n grid of world views as a store on disk."""
    store = open_store(directory)
    half = n // 2
    k = 0
    for i in range(n):
        for j in range(n):
            pose = GeoPose(
                center.lat + (half - i) * step,
                center.lon + (j - half) * step,
                center.heading,
                center.pitch,
            )
            img = view(world, pose, width, height)
            tmp = store.root / f"_tmp_{k}.png"
            save_png(img, tmp)
            add_record(store, tmp, pose, record_id=f"grid_{i}{j}", captured=captured)
            tmp.unlink()
            k += 1
    return store
