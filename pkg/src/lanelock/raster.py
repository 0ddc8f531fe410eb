"""8-bit raster images and PNG IO.

A raster is a plain numpy array: shape ``(h, w)`` for single-channel images,
``(h, w, 3)`` for color, dtype uint8, row-major. Color channel order is RGB.
"""

from __future__ import annotations

import os
from pathlib import Path

import numpy as np
from PIL import Image


class RasterError(ValueError):
    """An array or file does not satisfy the raster convention."""


def require_raster(img: np.ndarray, channels: int | None = None) -> np.ndarray:
    """Validate the raster convention; returns the array unchanged."""
    if not isinstance(img, np.ndarray) or img.dtype != np.uint8:
        raise RasterError("raster must be a uint8 numpy array")
    if img.ndim == 2:
        got = 1
    elif img.ndim == 3 and img.shape[2] == 3:
        got = 3
    else:
        raise RasterError(f"raster shape {img.shape} is not (h, w) or (h, w, 3)")
    if img.shape[0] < 1 or img.shape[1] < 1:
        raise RasterError("raster must be at least 1x1")
    if channels is not None and got != channels:
        raise RasterError(f"expected {channels}-channel raster, got {got}-channel")
    return img


def to_gray(img: np.ndarray) -> np.ndarray:
    """Luma conversion: floor(0.299 R + 0.587 G + 0.114 B + 0.5). 1-channel input passes through."""
    require_raster(img)
    if img.ndim == 2:
        return img
    rgb = img.astype(np.float64)
    luma = 0.299 * rgb[..., 0] + 0.587 * rgb[..., 1] + 0.114 * rgb[..., 2]
    return np.floor(luma + 0.5).astype(np.uint8)


def load_png(path: str | Path) -> np.ndarray:
    """Decode a PNG file to a raster. Non-PNG files are rejected."""
    path = Path(path)
    try:
        with Image.open(path) as im:
            if im.format != "PNG":
                raise RasterError(f"{path}: not a PNG file (format={im.format})")
            if im.mode == "L":
                arr = np.asarray(im, dtype=np.uint8)
            else:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
    except FileNotFoundError:
        raise
    except RasterError:
        raise
    except Exception as exc:
        raise RasterError(f"{path}: failed to decode PNG: {exc}") from exc
    return require_raster(arr)


def save_png(img: np.ndarray, path: str | Path) -> None:
    require_raster(img)
    mode = "L" if img.ndim == 2 else "RGB"
    Image.fromarray(img, mode=mode).save(Path(path), format="PNG")


def save_png_atomic(img: np.ndarray, path: str | Path) -> None:
    """Write via a temp file in the target directory, then rename into place."""
    path = Path(path)
    tmp = path.with_name(f".{path.name}.{os.getpid()}.tmp")
    save_png(img, tmp)
    os.replace(tmp, path)
