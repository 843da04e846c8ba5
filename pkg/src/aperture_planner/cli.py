"""Command-line front end: ``aperture-planner {forest,rvmap,plan,route,verify}``.

Configuration is an INI file with the sections listed in ``DEFAULTS``;
unknown sections or keys are rejected.  ``--seed`` and ``--threads``
override ``[run]``.  The fully resolved configuration is written to
``<out>/config.ini`` and can be passed back with ``--config``.

Seeds: every random stream is drawn from
``SeedSequence(run.seed, spawn_key=(i,))`` with a fixed stream index
``i`` (see ``STREAMS``), so results do not depend on thread count or on
which commands ran before.

Exit codes: 0 success, 2 invalid input, 1 internal error.
"""

from __future__ import annotations

import argparse
import configparser
import sys
import time
from pathlib import Path

import numpy as np
from scipy.spatial import cKDTree

from . import io
from .checks import decode_roundtrip, greedy_monotonicity, ray_symmetry, reciprocity_agreement
from .geometry import AreaSpec, RasterGrid
from .projection import ApertureSpec, CameraIntrinsics, render_bottom_up_masks
from .route import assign_batches, order_route
from .sampler import GreedyConfig, bit_counts, exhaustive_search, metrics, multi_start, norm_of, visibility_curve
from .scene import ForestParams, GroundPoints, PointCloud, generate_forest, make_path_roi, make_rect_roi, tree_count
from .visibility import build_coded_map, magnitude

STREAMS = {"forest": 0, "greedy": 1, "verify": 2}

# section -> key -> (type, default); "" means unset for optional values
DEFAULTS: dict[str, dict[str, tuple[type, object]]] = {
    "scene": {
        "width_m": (float, 32.0),
        "depth_m": (float, 32.0),
        "density": (float, 100.0),
        "species_preset": (str, "birch"),
        "mean_height_m": (float, 20.0),
        "height_stddev_m": (float, 3.0),
        "crown_radius_m": (str, ""),
        "points_per_tree": (int, 20000),
        "cloud": (str, ""),
        "cloud_format": (str, "xyz"),
    },
    "camera": {"fov_deg": (float, 50.0), "resolution": (int, 512)},
    "aperture": {"altitude_agl_m": (float, 35.0), "grid_n": (int, 65), "raster_res": (int, 512)},
    "render": {"ground_threshold_m": (float, 1.0), "occlusion_radius_m": (float, 0.05)},
    "roi": {
        "kind": (str, "rect"),
        "rows": (int, 3),
        "cols": (int, 7),
        "spacing_m": (float, 2.0),
        "center_x": (str, ""),
        "center_y": (str, ""),
        "polyline": (str, ""),
        "n_points": (int, 240),
        "points": (str, ""),
    },
    "greedy": {
        "variance_threshold": (float, 33.0),
        "restarts": (int, 50),
        "max_iterations": (int, 200),
        "empty_c_patience": (int, 2),
        "norm": (str, "L1"),
        "selection": (str, "gain"),
        "exhaustive_budget": (int, 0),
    },
    "coding": {"word_bits": (int, 24)},
    "route": {"n_drones": (int, 1), "start_x": (str, ""), "start_y": (str, ""), "start_z": (str, "")},
    "run": {"seed": (int, 0), "threads": (int, 1)},
}


class ConfigError(ValueError):
    pass


class RunConfig:
    """Resolved, typed configuration."""

    def __init__(self, values: dict[str, dict[str, object]], out: Path):
        self.values = values
        self.out = out

    def __getitem__(self, section):
        return self.values[section]

    @property
    def seed(self) -> int:
        return self.values["run"]["seed"]

    @property
    def threads(self) -> int:
        return self.values["run"]["threads"]

    def stream_seed(self, name: str) -> int:
        ss = np.random.SeedSequence(self.seed, spawn_key=(STREAMS[name],))
        return int(ss.generate_state(1, dtype=np.uint32)[0])

    def area(self) -> AreaSpec:
        return AreaSpec(self["scene"]["width_m"], self["scene"]["depth_m"])

    def forest_params(self) -> ForestParams:
        s = self["scene"]
        return ForestParams(
            density=s["density"],
            species_preset=s["species_preset"],
            seed=self.stream_seed("forest"),
            mean_height_m=s["mean_height_m"],
            height_stddev_m=s["height_stddev_m"],
            crown_radius_m=_opt_float(s["crown_radius_m"], "scene.crown_radius_m"),
            points_per_tree=s["points_per_tree"],
        )

    def intrinsics(self) -> CameraIntrinsics:
        return CameraIntrinsics(self["camera"]["fov_deg"], self["camera"]["resolution"])

    def aperture(self) -> ApertureSpec:
        a = self["aperture"]
        return ApertureSpec(a["altitude_agl_m"], self.area(), a["grid_n"], a["raster_res"])

    def greedy(self) -> GreedyConfig:
        g = self["greedy"]
        return GreedyConfig(
            variance_threshold=g["variance_threshold"],
            restarts=g["restarts"],
            max_iterations=g["max_iterations"],
            empty_c_patience=g["empty_c_patience"],
            rng_seed=self.stream_seed("greedy"),
            norm=g["norm"],
            selection=g["selection"],
        )

    def roi(self) -> GroundPoints:
        r, area = self["roi"], self.area()
        if r["kind"] == "rect":
            cx = _opt_float(r["center_x"], "roi.center_x")
            cy = _opt_float(r["center_y"], "roi.center_y")
            center = None if cx is None and cy is None else (cx if cx is not None else area.center[0], cy if cy is not None else area.center[1])
            return make_rect_roi(area, r["rows"], r["cols"], r["spacing_m"], center)
        if r["kind"] == "path":
            return make_path_roi(_parse_points(r["polyline"], "roi.polyline"), r["n_points"], area)
        if r["kind"] == "points":
            return GroundPoints(_parse_points(r["points"], "roi.points"), area)
        raise ConfigError(f"roi.kind must be rect, path or points, not {r['kind']!r}")

    def to_ini(self) -> str:
        lines = []
        for section, keys in self.values.items():
            lines.append(f"[{section}]")
            lines += [f"{k} = {v}" for k, v in keys.items()]
            lines.append("")
        return "\n".join(lines)


def _opt_float(text: str, name: str) -> float | None:
    if text == "":
        return None
    try:
        return float(text)
    except ValueError:
        raise ConfigError(f"{name}: expected a number, got {text!r}") from None


def _parse_points(text: str, name: str) -> np.ndarray:
    """``"x y, x y, ..."`` to an ``(n, 2)`` array."""
    try:
        pts = [[float(v) for v in item.split()] for item in text.split(",") if item.strip()]
    except ValueError:
        raise ConfigError(f"{name}: expected 'x y, x y, ...'") from None
    if not pts or any(len(p) != 2 for p in pts):
        raise ConfigError(f"{name}: expected 'x y, x y, ...'")
    return np.array(pts)


def load_config(path: str | None, out: str, seed: int | None = None, threads: int | None = None) -> RunConfig:
    parser = configparser.ConfigParser(interpolation=None)
    if path is not None:
        if not Path(path).is_file():
            raise ConfigError(f"config file {path} not found")
        parser.read(path)
    values: dict[str, dict[str, object]] = {}
    for section in parser.sections():
        if section not in DEFAULTS:
            raise ConfigError(f"unknown config section [{section}]")
        for key in parser[section]:
            if key not in DEFAULTS[section]:
                raise ConfigError(f"unknown config key {section}.{key}")
    for section, keys in DEFAULTS.items():
        values[section] = {}
        for key, (typ, default) in keys.items():
            raw = parser.get(section, key, fallback=None)
            if raw is None:
                values[section][key] = default
                continue
            try:
                values[section][key] = typ(raw.strip())
            except ValueError:
                raise ConfigError(f"{section}.{key}: cannot parse {raw!r} as {typ.__name__}") from None
    if seed is not None:
        values["run"]["seed"] = seed
    if threads is not None:
        values["run"]["threads"] = threads
    if values["run"]["threads"] < 1:
        raise ConfigError("run.threads must be >= 1")
    if values["scene"]["cloud_format"] not in ("xyz", "ply"):
        raise ConfigError("scene.cloud_format must be xyz or ply")
    cloud = values["scene"]["cloud"]
    if cloud and not Path(cloud).is_file():
        raise ConfigError(f"scene.cloud {cloud} not found")
    return RunConfig(values, Path(out))


def _load_cloud(cfg: RunConfig) -> PointCloud:
    path = cfg["scene"]["cloud"]
    return io.read_cloud(path) if path else generate_forest(cfg.area(), cfg.forest_params())


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise ConfigError(f"{what} {path} not found")
    return path


def cmd_forest(cfg: RunConfig) -> int:
    area, params = cfg.area(), cfg.forest_params()
    cloud = generate_forest(area, params)
    path = cfg.out / f"forest.{cfg['scene']['cloud_format']}"
    (io.write_ply if path.suffix == ".ply" else io.write_xyz)(path, cloud)
    print(f"trees: {tree_count(area, params.density)}")
    print(f"points: {len(cloud)}")
    print(f"wrote {path}")
    return 0


def cmd_rvmap(cfg: RunConfig, dump_masks: bool = False) -> int:
    roi = cfg.roi()
    spec = cfg.aperture()
    cloud = _load_cloud(cfg)
    r = cfg["render"]
    t0 = time.perf_counter()
    masks = render_bottom_up_masks(
        roi.points,
        spec,
        cloud,
        threads=cfg.threads,
        ground_threshold_m=r["ground_threshold_m"],
        occlusion_radius_m=r["occlusion_radius_m"],
    )
    cmap = build_coded_map(masks, L=cfg["coding"]["word_bits"], grid=spec.raster)
    if dump_masks:
        (cfg.out / "masks").mkdir(exist_ok=True)
        for k, m in enumerate(masks):
            io.write_pgm(cfg.out / "masks" / f"bottom_up_{k:04d}.pgm", m.data)
    mag = magnitude(cmap)
    io.write_coded_map(cfg.out / "rvmap.rvc", cmap)
    io.write_pgm(cfg.out / "magnitude.pgm", np.rint(255.0 * mag / cmap.K))
    io.write_ppm(cfg.out / "codes.ppm", io.code_image(cmap))
    with open(cfg.out / "ground_points.csv", "w") as f:
        f.write("k,x_m,y_m\n")
        for k, (x, y, _) in enumerate(roi.points):
            f.write(f"{k},{x:.4f},{y:.4f}\n")
    print(f"K={cmap.K} L={cmap.L} batches={cmap.B} raster={cmap.shape[0]}x{cmap.shape[1]}")
    print(f"magnitude: min {mag.min()} max {mag.max()} mean {mag.mean():.3f}")
    print(f"render time: {time.perf_counter() - t0:.1f} s")
    return 0


def reconstruction_image(roi: GroundPoints, per_point: np.ndarray, grid: RasterGrid) -> np.ndarray:
    """Per-point visibility painted on the scene raster around each ground point."""
    pts = roi.points[:, :2]
    if len(pts) > 1:
        tree = cKDTree(pts)
        radius = 0.5 * float(tree.query(pts, k=2)[0][:, 1].min())
    else:
        tree, radius = cKDTree(pts), 0.5
    xs, ys = grid.centers()
    dist, idx = tree.query(np.column_stack([xs.ravel(), ys.ravel()]), distance_upper_bound=radius)
    img = np.zeros(grid.size)
    hit = np.isfinite(dist)
    img[hit] = 255.0 * per_point[idx[hit]]
    return np.rint(img).reshape(grid.shape)


def cmd_plan(cfg: RunConfig, map_path: Path) -> int:
    spec = cfg.aperture()
    cmap = io.read_coded_map(_require(map_path, "coded map"))
    if cmap.shape != spec.raster.shape:
        raise ConfigError(f"coded map is {cmap.shape}, aperture raster is {spec.raster.shape}")
    cmap.grid = spec.raster
    roi = cfg.roi()
    if roi.K != cmap.K:
        raise ConfigError(f"ROI has {roi.K} points but the coded map has K={cmap.K}")
    gcfg = cfg.greedy()
    S = multi_start(cmap, gcfg, threads=cfg.threads)
    curve = visibility_curve(S)
    m = metrics(S, cmap.K)
    io.write_sampling_csv(cfg.out / "sampling.csv", S, curve)
    io.write_curve_csv(cfg.out / "curve.csv", curve)
    io.write_pgm(cfg.out / "reconstruction.pgm", reconstruction_image(roi, m.per_point, RasterGrid.over_area(cfg.area(), spec.raster_res)))
    report = [
        f"samples: {len(S)}",
        f"mean_visibility_percent: {m.mean_visibility_percent:.4f}",
        f"dispersion_percent: {m.dispersion_percent:.4f}",
        f"uniformity_ok: {S.uniformity_ok}",
        f"start_index: {S.start_index}",
    ]
    budget = cfg["greedy"]["exhaustive_budget"]
    if budget > 0:
        opt = exhaustive_search(cmap, budget, gcfg.norm)
        b = min(budget, len(S))
        greedy_val = norm_of(bit_counts(S.samples[:b], cmap.K), b, gcfg.norm)
        opt_val = norm_of(bit_counts(opt, cmap.K), len(opt), gcfg.norm)
        report += [
            f"exhaustive_budget: {budget}",
            f"exhaustive_norm: {float(opt_val):.6f}",
            f"greedy_norm_first_{b}: {float(greedy_val):.6f}",
            f"greedy_over_optimal: {float(greedy_val / opt_val) if opt_val else float('nan'):.6f}",
        ]
    (cfg.out / "plan_report.txt").write_text("\n".join(report) + "\n")
    print("\n".join(report))
    return 0


def cmd_route(cfg: RunConfig, sampling_path: Path, n_drones: int | None) -> int:
    rows = io.read_sampling_csv(_require(sampling_path, "sampling CSV"))
    if not rows:
        raise ConfigError("sampling CSV is empty")
    pos = np.array([[float(r["x_m"]), float(r["y_m"]), float(r["z_m"])] for r in rows])
    n_drones = cfg["route"]["n_drones"] if n_drones is None else n_drones
    if n_drones < 1:
        raise ConfigError("n_drones must be >= 1")
    if n_drones == 1:
        r = cfg["route"]
        spec = cfg.aperture()
        cx, cy = spec.extent.center
        start = (
            _opt_float(r["start_x"], "route.start_x") if r["start_x"] else cx,
            _opt_float(r["start_y"], "route.start_y") if r["start_y"] else cy,
            _opt_float(r["start_z"], "route.start_z") if r["start_z"] else spec.altitude_agl_m,
        )
        route = order_route(pos, start)
        legs = [(i, 0, k, *pos[k]) for i, k in enumerate(route.order)]
        total = route.length
    else:
        plan = assign_batches(pos, n_drones)
        legs = [(t, d, k, *pos[k]) for t, batch in enumerate(plan.batches) for d, k in enumerate(batch) if k is not None]
        total = plan.travel
    io.write_route_csv(cfg.out / "route.csv", legs, total)
    print(f"drones: {n_drones} samples: {len(pos)} total_length_m: {total:.4f}")
    return 0


def cmd_verify(cfg: RunConfig, pairs: int, ground: int, poses: int) -> int:
    rng = np.random.default_rng(cfg.stream_seed("verify"))
    cloud = _load_cloud(cfg)
    spec, intr = cfg.aperture(), cfg.intrinsics()
    results = [
        ray_symmetry(cloud, cfg.area(), spec.altitude_agl_m, pairs, rng),
        reciprocity_agreement(cloud, spec, intr, ground, poses, rng),
        decode_roundtrip(100, rng),
        greedy_monotonicity(20, rng),
    ]
    lines = [r.line() for r in results]
    (cfg.out / "verify_report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return 0 if all(r.passed for r in results) else 1


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="INI configuration file")
    p.add_argument("--seed", type=int, default=d, help="overrides run.seed")
    p.add_argument("--out", default=d if suppress else "out", help="output directory (default: out)")
    p.add_argument("--threads", type=int, default=d, help="overrides run.threads")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="aperture-planner", description=__doc__.splitlines()[0])
    _add_globals(parser, suppress=False)
    sub = parser.add_subparsers(dest="command", required=True)
    sub_forest = sub.add_parser("forest", help="generate a procedural forest point cloud")
    sub_rvmap = sub.add_parser("rvmap", help="render bottom-up masks and write the coded visibility map")
    sub_rvmap.add_argument("--dump-masks", action="store_true", help="also write every bottom-up mask as PGM")
    sub_plan = sub.add_parser("plan", help="greedy sampling plan from a coded map")
    sub_plan.add_argument("--map", help="coded map file (default: <out>/rvmap.rvc)")
    sub_plan.add_argument("--exhaustive-budget", type=int, help="also report the exhaustive optimum for this budget")
    sub_route = sub.add_parser("route", help="order samples for one drone or batch them for a swarm")
    sub_route.add_argument("--sampling", help="sampling CSV (default: <out>/sampling.csv)")
    sub_route.add_argument("--drones", type=int, help="overrides route.n_drones")
    sub_verify = sub.add_parser("verify", help="run reciprocity, roundtrip and monotonicity checks")
    sub_verify.add_argument("--pairs", type=int, default=10_000, help="ray symmetry pairs")
    sub_verify.add_argument("--ground-points", type=int, default=50, help="ground points for the agreement check")
    sub_verify.add_argument("--poses", type=int, default=50, help="poses for the agreement check")
    for p in (sub_forest, sub_rvmap, sub_plan, sub_route, sub_verify):
        _add_globals(p, suppress=True)
    return parser


def run(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    cfg = load_config(args.config, args.out, args.seed, args.threads)
    if args.command == "plan" and args.exhaustive_budget is not None:
        cfg["greedy"]["exhaustive_budget"] = args.exhaustive_budget
    cfg.out.mkdir(parents=True, exist_ok=True)
    (cfg.out / "config.ini").write_text(cfg.to_ini())
    if args.command == "forest":
        return cmd_forest(cfg)
    if args.command == "rvmap":
        return cmd_rvmap(cfg, args.dump_masks)
    if args.command == "plan":
        return cmd_plan(cfg, Path(args.map) if args.map else cfg.out / "rvmap.rvc")
    if args.command == "route":
        return cmd_route(cfg, Path(args.sampling) if args.sampling else cfg.out / "sampling.csv", args.drones)
    return cmd_verify(cfg, args.pairs, args.ground_points, args.poses)


def main(argv: list[str] | None = None) -> int:
    try:
        return run(argv)
    except (ValueError, IndexError, FileNotFoundError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # noqa: BLE001
        print(f"internal error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
