"""Procedural forest point clouds and ground points of interest.

Trees are a vertical trunk cylinder plus an ellipsoidal crown, both
sampled on their surfaces.  Every tree draws from its own seeded stream,
so a forest generated at a higher density with the same seed contains
the lower-density forest as a prefix (same trees, same points).
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .geometry import AreaSpec

GROUND = 0
VEGETATION = 1

TRUNK_RADIUS_M = 0.15
MIN_TREE_SPACING_M = 1.0
MAX_PLACEMENT_RETRIES = 1000

# crown radius [m], crown center and crown half-height as fractions of tree height
SPECIES_PRESETS = {
    "birch": {"crown_radius_m": 2.5, "crown_center": 0.7, "crown_half_height": 0.3},
    "spruce": {"crown_radius_m": 1.8, "crown_center": 0.55, "crown_half_height": 0.45},
}


@dataclass(frozen=True)
class ForestParams:
    density: float = 100.0
    species_preset: str = "birch"
    seed: int = 0
    mean_height_m: float = 20.0
    height_stddev_m: float = 3.0
    crown_radius_m: float | None = None
    points_per_tree: int = 20000

    def __post_init__(self):
        if self.density < 0:
            raise ValueError("density must be >= 0")
        if self.mean_height_m <= 0:
            raise ValueError("mean_height_m must be > 0")
        if self.height_stddev_m < 0:
            raise ValueError("height_stddev_m must be >= 0")
        if self.points_per_tree < 1:
            raise ValueError("points_per_tree must be >= 1")
        if self.species_preset not in SPECIES_PRESETS:
            raise ValueError(
                f"unknown species preset {self.species_preset!r}; "
                f"choose from {sorted(SPECIES_PRESETS)}"
            )
        if self.crown_radius_m is not None and self.crown_radius_m <= 0:
            raise ValueError("crown_radius_m must be > 0")

    @property
    def resolved_crown_radius(self) -> float:
        if self.crown_radius_m is not None:
            return float(self.crown_radius_m)
        return SPECIES_PRESETS[self.species_preset]["crown_radius_m"]


@dataclass
class PointCloud:
    """3D points in meters with a per-point ground/vegetation label."""

    points: np.ndarray
    labels: np.ndarray = None

    def __post_init__(self):
        self.points = np.asarray(self.points, dtype=np.float64).reshape(-1, 3)
        if self.labels is None:
            self.labels = np.full(len(self.points), VEGETATION, dtype=np.uint8)
        self.labels = np.asarray(self.labels, dtype=np.uint8).reshape(-1)
        if len(self.labels) != len(self.points):
            raise ValueError("labels and points differ in length")
        if not np.all(np.isfinite(self.points)):
            raise ValueError("point coordinates must be finite")

    def __len__(self):
        return len(self.points)

    @property
    def vegetation(self) -> np.ndarray:
        return self.points[self.labels == VEGETATION]

    @property
    def ground(self) -> np.ndarray:
        return self.points[self.labels == GROUND]

    @classmethod
    def empty(cls):
        return cls(np.zeros((0, 3)), np.zeros(0, dtype=np.uint8))

    def merged(self, other: "PointCloud") -> "PointCloud":
        return PointCloud(
            np.vstack([self.points, other.points]),
            np.concatenate([self.labels, other.labels]),
        )


@dataclass(frozen=True)
class Tree:
    x: float
    y: float
    height: float
    crown_radius: float
    crown_center: float
    crown_half_height: float


@dataclass
class GroundPoints:
    """Ordered ground points of interest; index ``k`` is the code bit."""

    points: np.ndarray
    area: AreaSpec | None = field(default=None, repr=False)

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=np.float64)
        if pts.ndim != 2 or pts.shape[1] not in (2, 3):
            raise ValueError("ground points must be an (K, 2) or (K, 3) array")
        if pts.shape[1] == 2:
            pts = np.column_stack([pts, np.zeros(len(pts))])
        if len(pts) < 1:
            raise ValueError("need at least one ground point")
        if not np.all(np.isfinite(pts)):
            raise ValueError("ground points must be finite")
        pts[:, 2] = 0.0
        if len(np.unique(pts[:, :2], axis=0)) != len(pts):
            raise ValueError("ground points must be unique")
        if self.area is not None and not np.all(self.area.contains(pts[:, 0], pts[:, 1])):
            raise ValueError("ground point outside the scene area")
        self.points = pts

    @property
    def K(self) -> int:
        return len(self.points)

    def __len__(self):
        return self.K


def tree_count(area: AreaSpec, density: float) -> int:
    # round half away from zero; density is non-negative
    return int(math.floor(density * area.hectares + 0.5))


def _tree_rng(seed: int, index: int) -> np.random.Generator:
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(index,)))


def plant_trees(area: AreaSpec, params: ForestParams) -> list[Tree]:
    """Place and size ``tree_count`` trees; deterministic in (area, params)."""
    preset = SPECIES_PRESETS[params.species_preset]
    trees: list[Tree] = []
    for i in range(tree_count(area, params.density)):
        rng = _tree_rng(params.seed, i)
        for _ in range(MAX_PLACEMENT_RETRIES):
            x = area.x_min + rng.random() * area.width_m
            y = area.y_min + rng.random() * area.depth_m
            if all(math.hypot(x - t.x, y - t.y) >= MIN_TREE_SPACING_M for t in trees):
                break
        h = float(rng.normal(params.mean_height_m, params.height_stddev_m))
        h = min(max(h, 5.0), 2.0 * params.mean_height_m)
        trees.append(
            Tree(x, y, h, params.resolved_crown_radius, preset["crown_center"], preset["crown_half_height"])
        )
    return trees


def _ellipsoid_area(a: float, b: float, c: float) -> float:
    # Knud Thomsen's approximation, < 1.1% relative error
    p = 1.6075
    return 4.0 * math.pi * (((a * b) ** p + (a * c) ** p + (b * c) ** p) / 3.0) ** (1.0 / p)


def _sample_ellipsoid_surface(rng, n: int, a: float, b: float, c: float) -> np.ndarray:
    """Area-uniform samples on an axis-aligned ellipsoid surface (rejection on the sphere map)."""
    g_max = max(b * c, a * c, a * b)
    out = []
    have = 0
    while have < n:
        m = max(16, 2 * (n - have))
        v = rng.normal(size=(m, 3))
        v /= np.linalg.norm(v, axis=1, keepdims=True)
        g = np.sqrt((b * c * v[:, 0]) ** 2 + (a * c * v[:, 1]) ** 2 + (a * b * v[:, 2]) ** 2)
        keep = rng.random(m) * g_max < g
        v = v[keep][: n - have]
        out.append(v * np.array([a, b, c]))
        have += len(v)
    return np.vstack(out)


def _tree_points(tree: Tree, n: int, rng: np.random.Generator) -> np.ndarray:
    trunk_top = tree.crown_center * tree.height
    semi_z = tree.crown_half_height * tree.height
    trunk_area = 2.0 * math.pi * TRUNK_RADIUS_M * trunk_top
    crown_area = _ellipsoid_area(tree.crown_radius, tree.crown_radius, semi_z)
    n_trunk = int(round(n * trunk_area / (trunk_area + crown_area)))
    n_crown = n - n_trunk

    phi = rng.random(n_trunk) * 2.0 * math.pi
    z = trunk_top * (1.0 - rng.random(n_trunk))  # (0, trunk_top]
    trunk = np.column_stack(
        [tree.x + TRUNK_RADIUS_M * np.cos(phi), tree.y + TRUNK_RADIUS_M * np.sin(phi), z]
    )
    crown = _sample_ellipsoid_surface(rng, n_crown, tree.crown_radius, tree.crown_radius, semi_z)
    crown += np.array([tree.x, tree.y, trunk_top])
    return np.vstack([trunk, crown])


def generate_forest(area: AreaSpec, params: ForestParams) -> PointCloud:
    """Vegetation-only point cloud for the procedural forest."""
    trees = plant_trees(area, params)
    if not trees:
        return PointCloud.empty()
    chunks = []
    for i, tree in enumerate(trees):
        # second stream per tree, independent of the placement draws
        rng = np.random.default_rng(np.random.SeedSequence(params.seed, spawn_key=(i, 1)))
        chunks.append(_tree_points(tree, params.points_per_tree, rng))
    pts = np.vstack(chunks)
    return PointCloud(pts, np.full(len(pts), VEGETATION, dtype=np.uint8))


def make_rect_roi(
    area: AreaSpec,
    rows: int,
    cols: int,
    spacing_m: float,
    center: tuple[float, float] | None = None,
) -> GroundPoints:
    """Regular ``rows x cols`` grid of ground points, row-major from the north-west."""
    if rows < 1 or cols < 1:
        raise ValueError("rows and cols must be >= 1")
    cx, cy = area.center if center is None else center
    xs = cx + (np.arange(cols) - (cols - 1) / 2.0) * spacing_m
    ys = cy - (np.arange(rows) - (rows - 1) / 2.0) * spacing_m
    gx, gy = np.meshgrid(xs, ys)
    pts = np.column_stack([gx.ravel(), gy.ravel(), np.zeros(rows * cols)])
    if not np.all(area.contains(pts[:, 0], pts[:, 1])):
        raise ValueError("rectangular ROI extends outside the scene area")
    return GroundPoints(pts, area)


def make_path_roi(polyline, n_points: int, area: AreaSpec | None = None) -> GroundPoints:
    """``n_points`` ground points equally spaced by arc length, endpoints included."""
    poly = np.asarray(polyline, dtype=np.float64)
    if poly.ndim != 2 or poly.shape[1] != 2 or len(poly) < 2:
        raise ValueError("polyline needs at least two 2D vertices")
    if n_points < 2:
        raise ValueError("n_points must be >= 2")
    if area is not None and not np.all(area.contains(poly[:, 0], poly[:, 1])):
        raise ValueError("polyline vertex outside the scene area")
    seg = np.linalg.norm(np.diff(poly, axis=0), axis=1)
    cum = np.concatenate([[0.0], np.cumsum(seg)])
    total = cum[-1]
    if total <= 0:
        raise ValueError("polyline has zero length")
    s = np.linspace(0.0, total, n_points)
    x = np.interp(s, cum, poly[:, 0])
    y = np.interp(s, cum, poly[:, 1])
    # np.interp with repeated cum values picks the later vertex, which is fine
    return GroundPoints(np.column_stack([x, y, np.zeros(n_points)]), area)
