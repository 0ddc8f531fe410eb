"""lanelock: recover lane markers in low-visibility road frames by aligning
archived street imagery to the live view and projecting markers across."""

from .alignment import EccResult, build_common_mask, ecc_refine, warp_perspective
from .config import PipelineConfig
from .diagnostics import diff_image, ssd
from .features import (
    FeaturePoint,
    MatchSet,
    cross_check,
    harris_corners,
    match_descriptors,
    orb_describe,
    ransac_homography,
)
from .imagestore import GeoPose, ImageRecord, Store, fetch, open_store, query_grid
from .lanes import ColorRange, edge_filter, project_markers, segment_markers
from .locator import LocateResult, grid_search_location, locate, refine_angle, score_candidate

__version__ = "0.1.0"

__all__ = [
    "ColorRange",
    "EccResult",
    "FeaturePoint",
    "GeoPose",
    "ImageRecord",
    "LocateResult",
    "MatchSet",
    "PipelineConfig",
    "Store",
    "build_common_mask",
    "cross_check",
    "diff_image",
    "ecc_refine",
    "edge_filter",
    "fetch",
    "grid_search_location",
    "harris_corners",
    "locate",
    "match_descriptors",
    "open_store",
    "orb_describe",
    "project_markers",
    "query_grid",
    "ransac_homography",
    "refine_angle",
    "score_candidate",
    "segment_markers",
    "ssd",
    "warp_perspective",
    "__version__",
]
