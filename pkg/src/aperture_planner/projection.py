"""Binary visibility masks rendered from a point cloud.

Both renderers work the same way: every ray runs from a single apex (the
drone camera for top-down masks, a ground point for bottom-up masks) to
the center of a cell of a regular grid lying in a horizontal plane (the
ground footprint, or the aperture plane).  Occluder points are splatted
onto that grid: each point is projected from the apex, a conservative
bounding box of cells it can touch is enumerated, and every candidate
cell gets the exact point-to-segment distance test that `ray_visible`
uses.  The raster is therefore the ray oracle sampled at cell centers.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial import cKDTree

from .geometry import AreaSpec, RasterGrid
from .scene import VEGETATION, PointCloud

DEFAULT_GROUND_THRESHOLD_M = 1.0
DEFAULT_OCCLUSION_RADIUS_M = 0.05

NADIR = "nadir"
ZENITH = "zenith"

# candidate boxes wider than this are handled one point at a time
_MAX_GROUPED_WIDTH = 48
_CHUNK_CELLS = 2_000_000


@dataclass(frozen=True)
class CameraIntrinsics:
    fov_deg: float = 50.0
    resolution: int = 512

    def __post_init__(self):
        if not 0 < self.fov_deg < 180:
            raise ValueError("fov_deg must lie in (0, 180)")
        if self.resolution < 2:
            raise ValueError("resolution must be >= 2")

    @property
    def focal_px(self) -> float:
        return 0.5 * self.resolution / math.tan(math.radians(self.fov_deg) / 2.0)


@dataclass(frozen=True)
class ApertureSpec:
    """Synthetic aperture plane: altitude, extent, pose grid and raster size."""

    altitude_agl_m: float = 35.0
    extent: AreaSpec = field(default_factory=AreaSpec)
    grid_n: int = 65
    raster_res: int = 512

    def __post_init__(self):
        if self.altitude_agl_m <= 0:
            raise ValueError("altitude_agl_m must be > 0")
        if self.grid_n < 1:
            raise ValueError("grid_n must be >= 1")
        if self.raster_res < 1:
            raise ValueError("raster_res must be >= 1")

    @property
    def raster(self) -> RasterGrid:
        return RasterGrid.over_area(self.extent, self.raster_res, z=self.altitude_agl_m)

    @property
    def n_poses(self) -> int:
        return self.grid_n * self.grid_n

    def pose_xy(self) -> tuple[np.ndarray, np.ndarray]:
        """Pose grid coordinates as ``(xs, ys)``; ys run north to south."""
        e = self.extent
        if self.grid_n == 1:
            cx, cy = e.center
            return np.array([cx]), np.array([cy])
        xs = np.linspace(e.x_min, e.x_max, self.grid_n)
        ys = np.linspace(e.y_max, e.y_min, self.grid_n)
        return xs, ys


@dataclass(frozen=True)
class Pose:
    position: tuple[float, float, float]
    view: str = NADIR

    def __post_init__(self):
        if self.view not in (NADIR, ZENITH):
            raise ValueError(f"unknown view direction {self.view!r}")


@dataclass
class VisibilityMask:
    """Binary raster (True = visible).  ``grid`` georeferences the ray endpoints."""

    data: np.ndarray
    grid: RasterGrid | None = None
    pose: Pose | None = None
    intrinsics: CameraIntrinsics | None = None

    def __post_init__(self):
        self.data = np.asarray(self.data).astype(bool, copy=False)
        if self.data.ndim != 2:
            raise ValueError("mask data must be 2D")

    @property
    def shape(self) -> tuple[int, int]:
        return self.data.shape


def occluder_points(cloud, ground_threshold_m: float = DEFAULT_GROUND_THRESHOLD_M) -> np.ndarray:
    """Vegetation points high enough above the ground to count as occluders."""
    pts = cloud.vegetation if isinstance(cloud, PointCloud) else np.asarray(cloud, float).reshape(-1, 3)
    return pts[pts[:, 2] > ground_threshold_m]


def ray_visible(a, b, cloud, occlusion_radius_m: float = DEFAULT_OCCLUSION_RADIUS_M) -> bool:
    """True iff no vegetation point lies within the radius of the segment ``a``-``b``."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if tuple(b) < tuple(a):
        a, b = b, a  # canonical order makes the test exactly symmetric
    if isinstance(cloud, PointCloud):
        pts = cloud.points[cloud.labels == VEGETATION]
    else:
        pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    if len(pts) == 0:
        return True
    d = b - a
    dd = float(d @ d)
    if dd == 0.0:
        raise ValueError("segment endpoints coincide")
    w = pts - a
    t = np.clip(w @ d / dd, 0.0, 1.0)
    diff = w - t[:, None] * d
    dist2 = np.einsum("ij,ij->i", diff, diff)
    return not bool(np.any(dist2 <= occlusion_radius_m * occlusion_radius_m))


def rays_visible(a, b, cloud, occlusion_radius_m: float = DEFAULT_OCCLUSION_RADIUS_M, step_m: float = 1.0) -> np.ndarray:
    """Batch form of :func:`ray_visible` for segments ``a[i]``-``b[i]``.

    A k-d tree gathers candidates around the midpoints of sub-segments no
    longer than ``step_m``; the ball radius covers every point within the
    occlusion radius of the sub-segment, so the exact test on the
    candidates gives the same answer as the full scan.
    """
    a = np.asarray(a, dtype=np.float64).reshape(-1, 3)
    b = np.asarray(b, dtype=np.float64).reshape(-1, 3)
    if isinstance(cloud, PointCloud):
        pts = cloud.points[cloud.labels == VEGETATION]
    else:
        pts = np.asarray(cloud, dtype=np.float64).reshape(-1, 3)
    out = np.ones(len(a), dtype=bool)
    if len(pts) == 0:
        return out
    tree = cKDTree(pts)
    r = occlusion_radius_m
    for i, (p, q) in enumerate(zip(a, b)):
        if tuple(q) < tuple(p):
            p, q = q, p
        length = float(np.linalg.norm(q - p))
        n = max(1, math.ceil(length / step_m))
        mids = p + np.outer((np.arange(n) + 0.5) / n, q - p)
        ball = math.sqrt(r * r + (0.5 * length / n) ** 2) * (1 + 1e-9) + 1e-12
        hits = tree.query_ball_point(mids, ball)
        cand = np.unique(np.concatenate([np.asarray(h, dtype=np.int64) for h in hits]))
        if len(cand):
            out[i] = ray_visible(p, q, pts[cand], r)
    return out


def _segment_hits(apex, ex, ey, ez, px, py, pz, r2):
    """Elementwise: is point p within sqrt(r2) of segment apex->e."""
    dx = ex - apex[0]
    dy = ey - apex[1]
    dz = ez - apex[2]
    wx = px - apex[0]
    wy = py - apex[1]
    wz = pz - apex[2]
    dd = dx * dx + dy * dy + dz * dz
    t = np.clip((wx * dx + wy * dy + wz * dz) / dd, 0.0, 1.0)
    rx = wx - t * dx
    ry = wy - t * dy
    rz = wz - t * dz
    return rx * rx + ry * ry + rz * rz <= r2


def occluded_cells(apex, grid: RasterGrid, pts: np.ndarray, radius: float) -> np.ndarray:
    """Boolean raster: True where the ray apex -> cell center passes a point."""
    occ = np.zeros(grid.shape, dtype=bool)
    if len(pts) == 0:
        return occ
    apex = np.asarray(apex, dtype=np.float64)
    r2 = radius * radius
    span = grid.z - apex[2]
    if span == 0:
        raise ValueError("apex lies in the raster plane")
    if np.any(np.sum((pts - apex) ** 2, axis=1) <= r2):
        occ[:] = True
        return occ

    # smallest cosine between any ray and the vertical bounds the footprint of a point
    cx = np.array([grid.x0, grid.x0 + grid.cols * grid.dx]) - apex[0]
    cy = np.array([grid.y_top - grid.rows * grid.dy, grid.y_top]) - apex[1]
    hmax = math.hypot(np.abs(cx).max(), np.abs(cy).max())
    cos_min = abs(span) / math.hypot(hmax, span)

    s = (pts[:, 2] - apex[2]) / span
    inside = (s > 0) & (s < 1)
    gap = np.minimum(np.abs(pts[:, 2] - apex[2]), np.abs(pts[:, 2] - grid.z))
    near_plane = ~inside & (gap <= radius)

    p_in = pts[inside]
    s_in = s[inside]
    qx = apex[0] + (p_in[:, 0] - apex[0]) / s_in
    qy = apex[1] + (p_in[:, 1] - apex[1]) / s_in
    bound = radius / (s_in * cos_min)
    c_lo = np.floor((qx - bound - grid.x0) / grid.dx)
    c_hi = np.floor((qx + bound - grid.x0) / grid.dx)
    r_lo = np.floor((grid.y_top - (qy + bound)) / grid.dy)
    r_hi = np.floor((grid.y_top - (qy - bound)) / grid.dy)
    hit_grid = (c_hi >= 0) & (c_lo < grid.cols) & (r_hi >= 0) & (r_lo < grid.rows)
    width = np.maximum(c_hi - c_lo, r_hi - r_lo) + 1

    keep = hit_grid & (width <= _MAX_GROUPED_WIDTH)
    big = hit_grid & ~keep
    p_small = p_in[keep]
    r_lo_s = r_lo[keep].astype(np.int64)
    c_lo_s = c_lo[keep].astype(np.int64)
    w_s = width[keep].astype(np.int64)
    for w in np.unique(w_s):
        sel = np.flatnonzero(w_s == w)
        off_r, off_c = np.divmod(np.arange(w * w), w)
        step = max(1, _CHUNK_CELLS // (w * w))
        for i in range(0, len(sel), step):
            idx = sel[i : i + step]
            rows = r_lo_s[idx, None] + off_r[None, :]
            cols = c_lo_s[idx, None] + off_c[None, :]
            valid = (rows >= 0) & (rows < grid.rows) & (cols >= 0) & (cols < grid.cols)
            p = p_small[idx]
            ex = grid.x0 + (cols + 0.5) * grid.dx
            ey = grid.y_top - (rows + 0.5) * grid.dy
            hits = _segment_hits(apex, ex, ey, grid.z, p[:, 0:1], p[:, 1:2], p[:, 2:3], r2) & valid
            occ[rows[hits], cols[hits]] = True

    # rare: points whose candidate box is large, or that sit just beyond an endpoint
    boxes = [
        (int(max(a, 0)), int(min(b, grid.rows - 1)), int(max(c, 0)), int(min(d, grid.cols - 1)))
        for a, b, c, d in zip(r_lo[big], r_hi[big], c_lo[big], c_hi[big])
    ]
    boxes += [(0, grid.rows - 1, 0, grid.cols - 1)] * int(near_plane.sum())
    if boxes:
        xs, ys = grid.centers()
    for p, (ra, rb, ca, cb) in zip(np.vstack([p_in[big], pts[near_plane]]), boxes):
        sub = (slice(ra, rb + 1), slice(ca, cb + 1))
        occ[sub] |= _segment_hits(apex, xs[sub], ys[sub], grid.z, p[0], p[1], p[2], r2)
    return occ


def aperture_poses(spec: ApertureSpec) -> list[Pose]:
    """``grid_n**2`` nadir poses, row-major from the north-west corner."""
    xs, ys = spec.pose_xy()
    z = spec.altitude_agl_m
    return [Pose((float(x), float(y), z), NADIR) for y in ys for x in xs]


def footprint_grid(pose: Pose, intr: CameraIntrinsics) -> RasterGrid:
    """Ground cells seen by the pixels of a nadir camera (image up = +y)."""
    x, y, h = pose.position
    s = 2.0 * h * math.tan(math.radians(intr.fov_deg) / 2.0) / intr.resolution
    half = 0.5 * intr.resolution * s
    return RasterGrid(x - half, y + half, s, s, intr.resolution, intr.resolution, 0.0)


def render_top_down_mask(
    pose: Pose,
    intr: CameraIntrinsics,
    cloud,
    area: AreaSpec,
    ground_threshold_m: float = DEFAULT_GROUND_THRESHOLD_M,
    occlusion_radius_m: float = DEFAULT_OCCLUSION_RADIUS_M,
) -> VisibilityMask:
    """Ground visibility through every pixel of a nadir camera at ``pose``.

    Pixels whose ground intersection falls outside ``area`` are 0.
    """
    if pose.view != NADIR:
        raise ValueError("top-down masks need a nadir pose")
    if pose.position[2] <= 0:
        raise ValueError("camera must be above the ground")
    grid = footprint_grid(pose, intr)
    xs, ys = grid.centers()
    in_area = area.contains(xs, ys, tol=0.0)
    occ = occluded_cells(pose.position, grid, occluder_points(cloud, ground_threshold_m), occlusion_radius_m)
    return VisibilityMask(in_area & ~occ, grid, pose, intr)


def render_bottom_up_mask(
    ground_point,
    spec: ApertureSpec,
    cloud,
    area: AreaSpec | None = None,
    ground_threshold_m: float = DEFAULT_GROUND_THRESHOLD_M,
    occlusion_radius_m: float = DEFAULT_OCCLUSION_RADIUS_M,
) -> VisibilityMask:
    """Visibility of ``ground_point`` from every cell of the aperture plane.

    The raster is an orthographic parameterization of the plane
    ``z = altitude`` over ``spec.extent``; one column of the bottom-up
    visibility matrix.
    """
    gx, gy = float(ground_point[0]), float(ground_point[1])
    area = spec.extent if area is None else area
    if not bool(area.contains(gx, gy)):
        raise ValueError(f"ground point ({gx}, {gy}) lies outside the scene area")
    apex = (gx, gy, 0.0)
    grid = spec.raster
    occ = occluded_cells(apex, grid, occluder_points(cloud, ground_threshold_m), occlusion_radius_m)
    return VisibilityMask(~occ, grid, Pose(apex, ZENITH), None)


def render_bottom_up_masks(ground_points, spec: ApertureSpec, cloud, threads: int = 1, **kw):
    """One bottom-up mask per ground point, in ground-point order."""
    pts = np.asarray(ground_points, dtype=float)
    occ = occluder_points(cloud, kw.pop("ground_threshold_m", DEFAULT_GROUND_THRESHOLD_M))
    kw["ground_threshold_m"] = -np.inf  # already filtered
    job = lambda p: render_bottom_up_mask(p, spec, occ, **kw)  # noqa: E731
    if threads <= 1:
        return [job(p) for p in pts]
    with ThreadPoolExecutor(threads) as ex:
        return list(ex.map(job, pts))


def render_registered_mask(
    pose: Pose,
    intr: CameraIntrinsics,
    cloud,
    area: AreaSpec,
    reference: RasterGrid,
    ground_threshold_m: float = DEFAULT_GROUND_THRESHOLD_M,
    occlusion_radius_m: float = DEFAULT_OCCLUSION_RADIUS_M,
) -> VisibilityMask:
    """Top-down mask of ``pose`` reprojected onto a common ground grid.

    Cell ``m`` holds the visibility of the ground at reference cell center
    ``m`` as seen from ``pose``: the ray is cast to that exact ground
    point, so registration adds no resampling error.  Cells outside the
    camera's field of view or outside ``area`` are 0.
    """
    if pose.view != NADIR or pose.position[2] <= 0:
        raise ValueError("registered masks need a nadir pose above the ground")
    xs, ys = reference.centers()
    fp = footprint_grid(pose, intr)
    r, c = fp.cell_of(xs, ys)
    seen = fp.in_bounds(r, c) & area.contains(xs, ys, tol=0.0)
    grid = RasterGrid(reference.x0, reference.y_top, reference.dx, reference.dy, reference.rows, reference.cols, 0.0)
    occ = occluded_cells(pose.position, grid, occluder_points(cloud, ground_threshold_m), occlusion_radius_m)
    return VisibilityMask(seen & ~occ, grid, pose, intr)


def pixel_covering(mask_or_grid, x: float, y: float) -> tuple[int, int] | None:
    grid = mask_or_grid.grid if isinstance(mask_or_grid, VisibilityMask) else mask_or_grid
    r, c = grid.cell_of(x, y)
    if not bool(grid.in_bounds(r, c)):
        return None
    return int(r), int(c)


def register_mask(mask: VisibilityMask, reference: RasterGrid) -> VisibilityMask:
    """Nearest-neighbour resampling of a mask onto a reference ground grid."""
    xs, ys = reference.centers()
    r, c = mask.grid.cell_of(xs, ys)
    ok = mask.grid.in_bounds(r, c)
    out = np.zeros(reference.shape, dtype=bool)
    out[ok] = mask.data[r[ok], c[ok]]
    return VisibilityMask(out, reference, mask.pose, mask.intrinsics)


def reference_grid(spec: ApertureSpec, intr: CameraIntrinsics) -> RasterGrid:
    """Ground grid of the nadir camera above the aperture-plane center."""
    cx, cy = spec.extent.center
    return footprint_grid(Pose((cx, cy, spec.altitude_agl_m)), intr)


def downsample_to_poses(mask: VisibilityMask, spec: ApertureSpec) -> np.ndarray:
    """Box-average a bottom-up mask onto the pose grid, then threshold at 0.5.

    Every raster cell is assigned to its nearest pose; returns a boolean
    ``(grid_n, grid_n)`` array.
    """
    g = spec.grid_n
    grid = mask.grid if mask.grid is not None else spec.raster
    xs, ys = spec.pose_xy()
    cx, cy = grid.centers()
    if g == 1:
        return np.array([[mask.data.mean() >= 0.5]])
    col = np.clip(np.rint((cx[0] - xs[0]) / (xs[1] - xs[0])), 0, g - 1).astype(np.int64)
    row = np.clip(np.rint((cy[:, 0] - ys[0]) / (ys[1] - ys[0])), 0, g - 1).astype(np.int64)
    idx = (row[:, None] * g + col[None, :]).ravel()
    sums = np.bincount(idx, weights=mask.data.ravel().astype(float), minlength=g * g)
    counts = np.bincount(idx, minlength=g * g)
    frac = np.divide(sums, counts, out=np.zeros(g * g), where=counts > 0)
    return (frac >= 0.5).reshape(g, g)
