"""Bottom-up visibility maps and greedy sampling plans for drone synthetic apertures."""

from .geometry import AreaSpec, RasterGrid
from .projection import (
    ApertureSpec,
    CameraIntrinsics,
    Pose,
    VisibilityMask,
    aperture_poses,
    downsample_to_poses,
    ray_visible,
    render_bottom_up_mask,
    render_bottom_up_masks,
    render_registered_mask,
    render_top_down_mask,
)
from .route import BatchPlan, Route, assign_batches, order_route
from .sampler import (
    GreedyConfig,
    Sample,
    SamplingSet,
    baseline_sampler,
    bitwise_average,
    exhaustive_search,
    greedy_sampling,
    metrics,
    multi_start,
)
from .scene import ForestParams, GroundPoints, PointCloud, generate_forest, make_path_roi, make_rect_roi
from .visibility import (
    CodedVisibilityMap,
    VisibilityMatrix,
    assemble_matrix,
    build_coded_map,
    decode,
    integrate_forward,
    integrate_reciprocal_lowres,
    magnitude,
)

__version__ = "0.1.0"

__all__ = [
    "AreaSpec",
    "RasterGrid",
    "ApertureSpec",
    "CameraIntrinsics",
    "Pose",
    "VisibilityMask",
    "aperture_poses",
    "downsample_to_poses",
    "ray_visible",
    "render_bottom_up_mask",
    "render_bottom_up_masks",
    "render_registered_mask",
    "render_top_down_mask",
    "BatchPlan",
    "Route",
    "assign_batches",
    "order_route",
    "GreedyConfig",
    "Sample",
    "SamplingSet",
    "baseline_sampler",
    "bitwise_average",
    "exhaustive_search",
    "greedy_sampling",
    "metrics",
    "multi_start",
    "ForestParams",
    "GroundPoints",
    "PointCloud",
    "generate_forest",
    "make_path_roi",
    "make_rect_roi",
    "CodedVisibilityMap",
    "VisibilityMatrix",
    "assemble_matrix",
    "build_coded_map",
    "decode",
    "integrate_forward",
    "integrate_reciprocal_lowres",
    "magnitude",
]
