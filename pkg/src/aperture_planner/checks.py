"""Property suites run by ``aperture-planner verify``.

Each check returns a :class:`CheckResult` carrying a pass flag, the
measured value and a one-line detail string.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .geometry import AreaSpec
from .projection import (
    ApertureSpec,
    CameraIntrinsics,
    aperture_poses,
    downsample_to_poses,
    footprint_grid,
    occluder_points,
    pixel_covering,
    rays_visible,
    reference_grid,
    render_bottom_up_mask,
    render_registered_mask,
)
from .sampler import GreedyConfig, bit_counts, greedy_sampling, norm_of
from .visibility import build_coded_map, decode, magnitude

RECIPROCITY_THRESHOLD = 0.95


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    detail: str

    def line(self) -> str:
        return f"{'PASS' if self.passed else 'FAIL'} {self.name}: {self.detail}"


def ray_symmetry(cloud, area: AreaSpec, altitude_m: float, n_pairs: int, rng: np.random.Generator) -> CheckResult:
    """Visibility of ``a`` from ``b`` equals that of ``b`` from ``a`` on random ground-to-sky pairs."""
    occ = occluder_points(cloud)
    lo = [area.x_min, area.y_min]
    hi = [area.x_max, area.y_max]
    ground = np.column_stack([rng.uniform(lo, hi, (n_pairs, 2)), np.zeros(n_pairs)])
    sky = np.column_stack([rng.uniform(lo, hi, (n_pairs, 2)), np.full(n_pairs, altitude_m)])
    bad = int(np.count_nonzero(rays_visible(ground, sky, occ) != rays_visible(sky, ground, occ)))
    return CheckResult("ray symmetry", bad == 0, float(bad), f"{bad} asymmetric of {n_pairs} pairs")


def reciprocity_agreement(
    cloud,
    spec: ApertureSpec,
    intr: CameraIntrinsics,
    n_ground: int,
    n_poses: int,
    rng: np.random.Generator,
    threshold: float = RECIPROCITY_THRESHOLD,
) -> CheckResult:
    """Agreement of top-down entries with downsampled bottom-up entries.

    Ground points are reference-grid cell centers; only pairs whose ground
    point lies inside the pose's field of view are compared.
    """
    area = spec.extent
    ref = reference_grid(spec, intr)
    occ = occluder_points(cloud)
    cells = []
    while len(cells) < n_ground:
        r, c = (int(v) for v in rng.integers(0, ref.rows, 2))
        x, y = ref.cell_center(r, c)
        if area.contains(x, y, tol=0.0):
            cells.append((r, c, float(x), float(y)))
    poses = aperture_poses(spec)
    chosen = rng.choice(len(poses), size=min(n_poses, len(poses)), replace=False)
    fps = {int(n): footprint_grid(poses[n], intr) for n in chosen}
    top = {int(n): render_registered_mask(poses[n], intr, occ, area, ref, ground_threshold_m=-np.inf) for n in chosen}
    agree = total = 0
    for r, c, x, y in cells:
        up = downsample_to_poses(render_bottom_up_mask((x, y), spec, occ, ground_threshold_m=-np.inf), spec).ravel()
        for n, mask in top.items():
            if pixel_covering(fps[n], x, y) is None:
                continue
            agree += bool(mask.data[r, c]) == bool(up[n])
            total += 1
    frac = agree / total if total else 0.0
    return CheckResult(
        "reciprocity agreement",
        total > 0 and frac >= threshold,
        frac,
        f"{100 * frac:.2f}% of {total} in-view pairs (threshold {100 * threshold:.0f}%)",
    )


def decode_roundtrip(n_instances: int, rng: np.random.Generator, size: int = 64) -> CheckResult:
    bad = 0
    for i in range(n_instances):
        K = (1, 8, 21, 24, 240)[i % 5]
        L = (8, 16, 24, 32, 64)[int(rng.integers(5))]
        masks = rng.random((K, size, size)) < rng.uniform(0.05, 0.95)
        cmap = build_coded_map(list(masks), L=L)
        bad += any(not np.array_equal(decode(cmap, k).data, masks[k]) for k in range(K))
        bad += not np.array_equal(magnitude(cmap), masks.sum(axis=0))
    return CheckResult("decode roundtrip", bad == 0, float(bad), f"{bad} failing of {n_instances} instances")


def greedy_monotonicity(n_maps: int, rng: np.random.Generator, size: int = 8, K: int = 16) -> CheckResult:
    """The bit-average norm strictly increases along every greedy trace."""
    bad = 0
    for _ in range(n_maps):
        masks = rng.random((K, size, size)) < rng.uniform(0.1, 0.9)
        cmap = build_coded_map(list(masks), L=16)
        for norm in ("L1", "L2"):
            cfg = GreedyConfig(norm=norm)
            start = tuple(int(v) for v in rng.integers(0, size, 2))
            S = greedy_sampling(cmap, start, cfg)
            prev = None
            for n in range(1, len(S) + 1):
                cur = norm_of(bit_counts(S.samples[:n], K), n, norm)
                bad += prev is not None and not cur > prev
                prev = cur
            bad += len(set(S.cells)) != len(S)
    return CheckResult("greedy monotonicity", bad == 0, float(bad), f"{bad} violations over {2 * n_maps} traces")
