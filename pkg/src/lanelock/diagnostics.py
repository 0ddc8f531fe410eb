"""Alignment-quality metrics and difference visualizations."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .raster import require_raster


@dataclass
class AlignmentReport:
    ssd: float
    valid_count: int
    diff_image: np.ndarray


def _check_pair(projected: np.ndarray, current: np.ndarray, validity: np.ndarray) -> None:
    require_raster(projected, channels=1)
    require_raster(current, channels=1)
    if projected.shape != current.shape:
        raise ValueError(f"dimension mismatch: {projected.shape} vs {current.shape}")
    if validity.shape != projected.shape:
        raise ValueError("validity mask shape does not match images")


def diff_image(projected: np.ndarray, current: np.ndarray, validity: np.ndarray) -> np.ndarray:
    """Per valid pixel: clamp(round((projected - current) / 2 + 128)); invalid pixels 0.

    Perfectly aligned content comes out mid-gray (128).
    """
    _check_pair(projected, current, validity)
    p = projected.astype(np.float64)
    c = current.astype(np.float64)
    v = np.floor((p - c) / 2.0 + 128.0 + 0.5)
    out = np.clip(v, 0, 255).astype(np.uint8)
    out[~validity] = 0
    return out


def ssd(projected: np.ndarray, current: np.ndarray, validity: np.ndarray) -> float:
    """Mean squared intensity difference over valid pixels."""
    _check_pair(projected, current, validity)
    if not validity.any():
        raise ValueError("validity mask is empty")
    p = projected.astype(np.float64)[validity]
    c = current.astype(np.float64)[validity]
    return float(((p - c) ** 2).mean())


def report(projected: np.ndarray, current: np.ndarray, validity: np.ndarray) -> AlignmentReport:
    return AlignmentReport(
        ssd=ssd(projected, current, validity),
        valid_count=int(validity.sum()),
        diff_image=diff_image(projected, current, validity),
    )
