"""Pose-stamped road-image store with provider-backed fetching and a disk cache.

Layout of a store directory::

    index.jsonl        one JSON object per line: id, lat, lon, heading, pitch,
                       captured, file (UTF-8, LF line endings)
    images/<id>.png    image payloads added through :func:`add_record`
    cache/...png       fetch cache, keyed by quantized pose and render size

The store is immutable for readers after :func:`open_store`; concurrent reads
are safe. Mutation (``add_record``, cache writes) needs exclusive access, and
cache writes go through write-temp-then-rename so readers never observe a
partial file.
"""

from __future__ import annotations

import json
import math
import os
import shutil
import urllib.error
import urllib.request
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
from PIL import Image

from .raster import RasterError, load_png, require_raster, save_png_atomic

PROVIDER_KEY_ENV = "SAFEDRIVE_PROVIDER_KEY"


class StoreError(Exception):
    """Store-level failure (bad index, missing files, duplicate ids)."""


class ProviderError(Exception):
    """Imagery provider failure. ``retryable`` hints whether a retry can help."""

    retryable = False


class ProviderUnreachable(ProviderError):
    retryable = True


class ImageryNotFound(ProviderError):
    retryable = False


@dataclass(frozen=True)
class GeoPose:
    """A camera pose: WGS-84 latitude/longitude plus compass heading and pitch.

    Heading is degrees clockwise from north, normalized into [0, 360).
    Pitch is degrees above horizontal in [-90, 90].
    """

    lat: float
    lon: float
    heading: float = 0.0
    pitch: float = 0.0

    def __post_init__(self) -> None:
        for name in ("lat", "lon", "heading", "pitch"):
            v = getattr(self, name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ValueError(f"{name} must be a finite number, got {v!r}")
        if not -90.0 <= self.lat <= 90.0:
            raise ValueError(f"lat {self.lat} outside [-90, 90]")
        if not -180.0 <= self.lon <= 180.0:
            raise ValueError(f"lon {self.lon} outside [-180, 180]")
        if not -90.0 <= self.pitch <= 90.0:
            raise ValueError(f"pitch {self.pitch} outside [-90, 90]")
        object.__setattr__(self, "heading", float(self.heading) % 360.0)
        object.__setattr__(self, "lat", float(self.lat))
        object.__setattr__(self, "lon", float(self.lon))
        object.__setattr__(self, "pitch", float(self.pitch))


@dataclass(frozen=True)
class ImageRecord:
    id: str
    pose: GeoPose
    captured: str  # ISO-8601 date
    file: str  # path relative to the store root


def planar_distance(lat1: float, lon1: float, lat2: float, lon2: float) -> float:
    """Equirectangular planar distance in degrees; lon scaled by cos(lat of point 1).

    Adequate at street scale, which is all the grid search needs.
    """
    dlat = lat1 - lat2
    dlon = (lon1 - lon2) * math.cos(math.radians(lat1))
    return math.hypot(dlat, dlon)


def pose_distance(a: GeoPose, b: GeoPose) -> float:
    return planar_distance(a.lat, a.lon, b.lat, b.lon)


@dataclass
class Store:
    root: Path
    records: list[ImageRecord] = field(default_factory=list)

    def __post_init__(self) -> None:
        self._by_id = {r.id: r for r in self.records}

    def get(self, record_id: str) -> ImageRecord:
        try:
            return self._by_id[record_id]
        except KeyError:
            raise StoreError(f"no record with id {record_id!r}") from None

    def __len__(self) -> int:
        return len(self.records)


_INDEX_KEYS = ("id", "lat", "lon", "heading", "pitch", "captured", "file")


def _parse_index_line(line: str, lineno: int) -> ImageRecord:
    try:
        obj = json.loads(line)
    except json.JSONDecodeError as exc:
        raise StoreError(f"index line {lineno}: invalid JSON: {exc}") from exc
    if not isinstance(obj, dict):
        raise StoreError(f"index line {lineno}: expected a JSON object")
    missing = [k for k in _INDEX_KEYS if k not in obj]
    if missing:
        raise StoreError(f"index line {lineno}: missing field(s) {', '.join(missing)}")
    try:
        pose = GeoPose(float(obj["lat"]), float(obj["lon"]), float(obj["heading"]), float(obj["pitch"]))
    except (TypeError, ValueError) as exc:
        raise StoreError(f"index line {lineno}: bad pose: {exc}") from exc
    if not isinstance(obj["id"], str) or not obj["id"]:
        raise StoreError(f"index line {lineno}: id must be a non-empty string")
    if not isinstance(obj["file"], str) or not obj["file"]:
        raise StoreError(f"index line {lineno}: file must be a non-empty string")
    return ImageRecord(id=obj["id"], pose=pose, captured=str(obj["captured"]), file=obj["file"])


def open_store(path: str | Path) -> Store:
    """Open a store directory, parsing index.jsonl if present.

    An empty (or index-less) directory yields an empty store. Malformed index
    lines raise :class:`StoreError` naming the line number; records whose image
    file is missing raise naming the record id.
    """
    root = Path(path)
    if not root.is_dir():
        raise StoreError(f"store path is not a directory: {root}")
    index = root / "index.jsonl"
    records: list[ImageRecord] = []
    seen: set[str] = set()
    if index.exists():
        with open(index, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                rec = _parse_index_line(line, lineno)
                if rec.id in seen:
                    raise StoreError(f"index line {lineno}: duplicate record id {rec.id!r}")
                seen.add(rec.id)
                if not (root / rec.file).exists():
                    raise StoreError(f"record {rec.id!r}: image file not found: {rec.file}")
                records.append(rec)
    return Store(root=root, records=records)


def add_record(
    store: Store,
    image_path: str | Path,
    pose: GeoPose,
    record_id: str | None = None,
    captured: str = "",
) -> ImageRecord:
    """Copy a PNG into the store and append its record to the index.

    Only PNG payloads are accepted; duplicate ids are rejected.
    """
    image_path = Path(image_path)
    try:
        with Image.open(image_path) as im:
            if im.format != "PNG":
                raise StoreError(f"{image_path}: store only accepts PNG images (got {im.format})")
    except FileNotFoundError:
        raise
    except StoreError:
        raise
    except Exception as exc:
        raise StoreError(f"{image_path}: unreadable image: {exc}") from exc

    rid = record_id if record_id is not None else image_path.stem
    if rid in store._by_id:
        raise StoreError(f"duplicate record id {rid!r}")

    images_dir = store.root / "images"
    images_dir.mkdir(exist_ok=True)
    rel = f"images/{rid}.png"
    shutil.copyfile(image_path, store.root / rel)

    rec = ImageRecord(id=rid, pose=pose, captured=captured, file=rel)
    row = {
        "id": rec.id,
        "lat": rec.pose.lat,
        "lon": rec.pose.lon,
        "heading": rec.pose.heading,
        "pitch": rec.pose.pitch,
        "captured": rec.captured,
        "file": rec.file,
    }
    with open(store.root / "index.jsonl", "a", encoding="utf-8", newline="\n") as fh:
        fh.write(json.dumps(row) + "\n")
    store.records.append(rec)
    store._by_id[rec.id] = rec
    return rec


def load_image(store: Store, record: ImageRecord) -> np.ndarray:
    return load_png(store.root / record.file)


def lattice_points(center: GeoPose, step: float, n: int) -> list[tuple[float, float]]:
    """The n x n lat/lon lattice around ``center``, in row-major order
    (north to south rows, west to east columns)."""
    if n < 1 or n % 2 == 0:
        raise ValueError(f"grid side n must be odd and >= 1, got {n}")
    if step <= 0:
        raise ValueError(f"grid step must be > 0, got {step}")
    half = n // 2
    pts = []
    for i in range(n):
        lat = center.lat + (half - i) * step
        for j in range(n):
            lon = center.lon + (j - half) * step
            pts.append((lat, lon))
    return pts


def query_grid(store: Store, center: GeoPose, step: float, n: int) -> list[ImageRecord]:
    """Nearest stored record for each lattice point, deduplicated.

    Returns records in row-major lattice order; ties on distance break by
    record id so the result is a pure function of the store contents.
    """
    pts = lattice_points(center, step, n)
    if not store.records:
        return []
    out: list[ImageRecord] = []
    seen: set[str] = set()
    for lat, lon in pts:
        best = min(store.records, key=lambda r: (planar_distance(lat, lon, r.pose.lat, r.pose.lon), r.id))
        if best.id not in seen:
            seen.add(best.id)
            out.append(best)
    return out


def cache_name(pose: GeoPose, width: int, height: int, fov: float) -> str:
    return (
        f"{pose.lat:.8f}_{pose.lon:.8f}_{pose.heading:.2f}_{pose.pitch:.2f}"
        f"_{width}x{height}_{fov:.1f}.png"
    )


class Provider(Protocol):
    """Source of street imagery for arbitrary poses."""

    def get_image(self, pose: GeoPose, width: int, height: int, fov: float) -> np.ndarray: ...


class LocalDirectoryProvider:
    """Serves pre-rendered PNGs from a directory, keyed by quantized pose.

    File names follow the cache scheme, so a directory can be seeded simply by
    copying a store's cache. Used for offline runs and tests.
    """

    def __init__(self, directory: str | Path):
        self.directory = Path(directory)

    def get_image(self, pose: GeoPose, width: int, height: int, fov: float) -> np.ndarray:
        path = self.directory / cache_name(pose, width, height, fov)
        if not path.exists():
            raise ImageryNotFound(f"no imagery for pose {pose} at {path.name}")
        return load_png(path)


class HttpTemplateProvider:
    """Fetches imagery from a URL template.

    The template may use ``{lat}``, ``{lon}``, ``{heading}``, ``{pitch}``,
    ``{fov}``, ``{w}``, ``{h}`` and ``{key}`` placeholders; the API key is read
    from the SAFEDRIVE_PROVIDER_KEY environment variable.
    """

    def __init__(self, template: str, timeout: float = 10.0):
        self.template = template
        self.timeout = timeout

    def get_image(self, pose: GeoPose, width: int, height: int, fov: float) -> np.ndarray:
        url = self.template.format(
            lat=pose.lat,
            lon=pose.lon,
            heading=pose.heading,
            pitch=pose.pitch,
            fov=fov,
            w=width,
            h=height,
            key=os.environ.get(PROVIDER_KEY_ENV, ""),
        )
        try:
            with urllib.request.urlopen(url, timeout=self.timeout) as resp:
                body = resp.read()
        except urllib.error.HTTPError as exc:
            if exc.code in (204, 400, 404):
                raise ImageryNotFound(f"provider has no imagery for {pose}: HTTP {exc.code}") from exc
            raise ProviderUnreachable(f"provider HTTP {exc.code} for {url}") from exc
        except (urllib.error.URLError, TimeoutError, OSError) as exc:
            raise ProviderUnreachable(f"provider unreachable: {exc}") from exc
        import io

        try:
            with Image.open(io.BytesIO(body)) as im:
                arr = np.asarray(im.convert("RGB"), dtype=np.uint8)
        except Exception as exc:
            raise ProviderUnreachable(f"provider returned undecodable payload: {exc}") from exc
        return arr


def fetch(
    store: Store,
    provider: Provider,
    pose: GeoPose,
    width: int,
    height: int,
    fov: float = 90.0,
) -> np.ndarray:
    """Provider image for ``pose``, cached under the store's ``cache/`` directory.

    A successful fetch is answered from the cache on every later identical
    call, so the provider backend can disappear without changing results.
    """
    if width < 1 or height < 1:
        raise ValueError("fetch dimensions must be >= 1")
    cache_dir = store.root / "cache"
    path = cache_dir / cache_name(pose, width, height, fov)
    if path.exists():
        return load_png(path)
    img = provider.get_image(pose, width, height, fov)
    try:
        require_raster(img)
    except RasterError as exc:
        raise ProviderError(f"provider returned a non-raster image: {exc}") from exc
    cache_dir.mkdir(exist_ok=True)
    save_png_atomic(img, path)
    return img
