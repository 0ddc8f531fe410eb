"""Pose search: find the stored view that best matches the current frame.

Location is searched over an n x n lat/lon lattice, then heading and pitch are
refined one axis at a time by interval halving, under the working assumption
that match support is unimodal in each angle (more accurate angle, more
overlapped content).

Candidate scoring is a pure function, so grid candidates may be scored
concurrently; the winner is reduced deterministically afterwards (max inliers,
ties broken by distance to the initial pose and then record id), making the
result independent of evaluation order and parallelism.
"""

from __future__ import annotations

import dataclasses
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass

import numpy as np

from . import features
from .config import PipelineConfig
from .imagestore import (
    GeoPose,
    ImageRecord,
    Provider,
    Store,
    cache_name,
    fetch,
    lattice_points,
    load_image,
    planar_distance,
    pose_distance,
    query_grid,
)
from .raster import require_raster, to_gray


class NoCandidatesError(LookupError):
    """The store and provider produced nothing to score."""


@dataclass
class CandidateScore:
    record: ImageRecord | None
    pose: GeoPose | None
    inliers: int
    matchset: features.MatchSet
    points_current: np.ndarray
    points_candidate: np.ndarray
    image: np.ndarray

    def inlier_points(self) -> tuple[np.ndarray, np.ndarray]:
        """Matched (current, candidate) coordinates of the inlier pairs, (N, 2) each."""
        cur, cand = [], []
        for flag, (i, j, _) in zip(self.matchset.inlier, self.matchset.pairs):
            if flag:
                cur.append(self.points_current[i])
                cand.append(self.points_candidate[j])
        return np.array(cur).reshape(-1, 2), np.array(cand).reshape(-1, 2)


@dataclass
class LocateResult:
    best: CandidateScore
    pose: GeoPose
    h_feature: np.ndarray | None
    reliable: bool


def score_candidate(
    current: np.ndarray,
    candidate: np.ndarray,
    seed: int = 0,
    config: PipelineConfig | None = None,
) -> CandidateScore:
    """Match support between the current frame and one candidate image.

    Runs corner detection, description, two-way ratio matching, cross-check,
    and robust homography fitting; the score is the inlier count. Fewer than 4
    cross-checked pairs (or a failed fit) is not an error: the candidate simply
    scores 0 with no homography.
    """
    cfg = config or PipelineConfig()
    require_raster(current)
    require_raster(candidate)
    gray_cur = to_gray(current)
    gray_cand = to_gray(candidate)

    hp = cfg.harris
    pts_cur = features.harris_corners(
        gray_cur, hp.max_points, hp.min_distance, hp.k, hp.sigma, hp.rel_threshold
    )
    pts_cand = features.harris_corners(
        gray_cand, hp.max_points, hp.min_distance, hp.k, hp.sigma, hp.rel_threshold
    )
    pts_cur, desc_cur = features.orb_describe(gray_cur, pts_cur)
    pts_cand, desc_cand = features.orb_describe(gray_cand, pts_cand)
    xy_cur = np.array([[p.x, p.y] for p in pts_cur]).reshape(-1, 2)
    xy_cand = np.array([[p.x, p.y] for p in pts_cand]).reshape(-1, 2)

    ab = features.match_descriptors(desc_cur, desc_cand, cfg.ratio)
    ba = features.match_descriptors(desc_cand, desc_cur, cfg.ratio)
    matchset = features.cross_check(ab, ba)

    if len(matchset.pairs) >= 4:
        src = np.array([xy_cand[j] for _, j, _ in matchset.pairs])
        dst = np.array([xy_cur[i] for i, _, _ in matchset.pairs])
        try:
            h, flags = features.ransac_homography(
                src,
                dst,
                threshold=cfg.ransac.threshold,
                max_iters=cfg.ransac.max_iters,
                seed=seed,
                confidence=cfg.ransac.confidence,
            )
            if int(flags.sum()) >= 4:
                matchset.homography = h
                matchset.inlier = flags
        except (features.DegenerateInputError, features.EstimationFailedError):
            pass

    return CandidateScore(
        record=None,
        pose=None,
        inliers=matchset.inlier_count,
        matchset=matchset,
        points_current=xy_cur,
        points_candidate=xy_cand,
        image=candidate,
    )


def _pick_best(scored: list[CandidateScore], pose0: GeoPose) -> CandidateScore:
    def sort_key(c: CandidateScore):
        dist = pose_distance(pose0, c.pose) if c.pose is not None else float("inf")
        rid = c.record.id if c.record is not None else "￿"
        return (-c.inliers, dist, rid)

    return min(scored, key=sort_key)


def grid_search_location(
    current: np.ndarray,
    pose0: GeoPose,
    store: Store,
    provider: Provider | None,
    config: PipelineConfig | None = None,
    seed: int = 0,
) -> CandidateScore:
    """Score every candidate around ``pose0`` and return the best-supported one.

    Candidates are the stored records nearest each lattice point; when a
    provider is configured, lattice points with no stored record within one
    grid step are additionally fetched from it at the initial heading/pitch.
    """
    cfg = config or PipelineConfig()
    require_raster(current)
    h, w = current.shape[:2]

    candidates: list[tuple[ImageRecord | None, GeoPose, np.ndarray, str]] = []
    for rec in query_grid(store, pose0, cfg.grid_step, cfg.grid_size):
        candidates.append((rec, rec.pose, load_image(store, rec), rec.id))
    if provider is not None:
        for lat, lon in lattice_points(pose0, cfg.grid_step, cfg.grid_size):
            covered = any(
                planar_distance(lat, lon, r.pose.lat, r.pose.lon) <= cfg.grid_step
                for r in store.records
            )
            if covered:
                continue
            pose = GeoPose(lat, lon, pose0.heading, pose0.pitch)
            img = fetch(store, provider, pose, w, h, cfg.fov)
            candidates.append((None, pose, img, "fetched:" + cache_name(pose, w, h, cfg.fov)))
    if not candidates:
        raise NoCandidatesError("no candidate imagery near the initial pose")

    def score_one(entry):
        rec, pose, img, _ = entry
        sc = score_candidate(current, img, seed=seed, config=cfg)
        return dataclasses.replace(sc, record=rec, pose=pose)

    if cfg.jobs > 1:
        with ThreadPoolExecutor(max_workers=cfg.jobs) as pool:
            scored = list(pool.map(score_one, candidates))
    else:
        scored = [score_one(c) for c in candidates]
    return _pick_best(scored, pose0)


def interval_search(
    lo: float, hi: float, iters: int, score_fn, initial: float
) -> float:
    """Interval-halving max search for a unimodal score.

    Each iteration scores the midpoints of the two half-intervals and recurses
    into the higher-scoring half; ties go to the half containing ``initial``
    (or the nearer half once the interval has moved away from it). Returns the
    final interval's midpoint, so the result lands within (hi-lo)/2**iters of
    a unimodal argmax.
    """
    if iters < 1:
        raise ValueError(f"iters must be >= 1, got {iters}")
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        s_left = score_fn(0.5 * (lo + mid))
        s_right = score_fn(0.5 * (mid + hi))
        if s_left > s_right:
            hi = mid
        elif s_right > s_left:
            lo = mid
        elif lo <= initial <= mid:
            hi = mid
        elif mid <= initial <= hi:
            lo = mid
        elif abs(initial - 0.5 * (lo + mid)) <= abs(initial - 0.5 * (mid + hi)):
            hi = mid
        else:
            lo = mid
    return 0.5 * (lo + hi)


def refine_angle(
    current: np.ndarray,
    pose: GeoPose,
    axis: str,
    store: Store,
    provider: Provider,
    config: PipelineConfig | None = None,
    seed: int = 0,
    half_range: float | None = None,
    iters: int | None = None,
) -> GeoPose:
    """Refine one camera angle (heading or pitch) by interval halving.

    Searches [pose.axis - half_range, pose.axis + half_range], scoring
    provider imagery against the current frame; provider failures propagate.
    """
    if axis not in ("heading", "pitch"):
        raise ValueError(f"axis must be 'heading' or 'pitch', got {axis!r}")
    cfg = config or PipelineConfig()
    hr = cfg.angle_half_range if half_range is None else half_range
    it = cfg.angle_iters if iters is None else iters
    if hr <= 0:
        raise ValueError(f"half_range must be > 0, got {hr}")
    h, w = current.shape[:2]
    initial = getattr(pose, axis)

    def score_at(angle: float) -> int:
        variant = dataclasses.replace(pose, **{axis: angle})
        img = fetch(store, provider, variant, w, h, cfg.fov)
        return score_candidate(current, img, seed=seed, config=cfg).inliers

    best = interval_search(initial - hr, initial + hr, it, score_at, initial)
    if axis == "heading":
        best = best % 360.0
    return dataclasses.replace(pose, **{axis: best})


def locate(
    current: np.ndarray,
    pose0: GeoPose,
    store: Store,
    provider: Provider | None = None,
    config: PipelineConfig | None = None,
    seed: int = 0,
) -> LocateResult:
    """Full pose search: grid over location, then heading, then pitch.

    Without a provider the result is the best stored record and its exact
    pose. With one, the angles are refined around the grid winner and a final
    candidate is fetched and scored at the refined pose; the returned best
    candidate is whichever of (grid winner, refined fetch) has more inliers.
    A result below the configured inlier floor is still returned, flagged
    unreliable so callers can refuse to overlay.
    """
    cfg = config or PipelineConfig()
    best = grid_search_location(current, pose0, store, provider, cfg, seed)
    pose = best.pose if best.pose is not None else pose0

    if provider is not None:
        pose = refine_angle(current, pose, "heading", store, provider, cfg, seed)
        pose = refine_angle(current, pose, "pitch", store, provider, cfg, seed)
        h, w = current.shape[:2]
        img = fetch(store, provider, pose, w, h, cfg.fov)
        final = score_candidate(current, img, seed=seed, config=cfg)
        final = dataclasses.replace(final, pose=pose)
        if final.inliers > best.inliers:
            best = final

    return LocateResult(
        best=best,
        pose=pose,
        h_feature=best.matchset.homography,
        reliable=best.inliers >= cfg.min_inliers,
    )
