import numpy as np
import pytest

from aperture_planner import io
from aperture_planner.cli import load_config, main
from aperture_planner.sampler import bit_counts, exhaustive_search, norm_of
from aperture_planner.visibility import decode

SMALL = """
[scene]
density = {density}
points_per_tree = 400
[aperture]
grid_n = 5
raster_res = {res}
[greedy]
restarts = {restarts}
[roi]
{roi}
"""

RECT = "kind = rect\nrows = 3\ncols = 7\nspacing_m = 2.0"
PATH = "kind = path\npolyline = 4 4, 12 20, 28 28\nn_points = 240"


def _config(tmp_path, density=400, res=24, restarts=5, roi=RECT, name="c.ini"):
    path = tmp_path / name
    path.write_text(SMALL.format(density=density, res=res, restarts=restarts, roi=roi))
    return str(path)


def _run(*args):
    return main([str(a) for a in args])


def test_forest_reports_tree_count_and_is_reproducible(tmp_path, capsys):
    cfg = _config(tmp_path, density=100)
    assert _run("--config", cfg, "--out", tmp_path / "a", "forest") == 0
    assert "trees: 10" in capsys.readouterr().out
    assert _run("--config", cfg, "--out", tmp_path / "b", "forest") == 0
    assert (tmp_path / "a/forest.xyz").read_bytes() == (tmp_path / "b/forest.xyz").read_bytes()
    assert _run("--config", cfg, "--out", tmp_path / "c", "--seed", "1", "forest") == 0
    assert (tmp_path / "a/forest.xyz").read_bytes() != (tmp_path / "c/forest.xyz").read_bytes()


def test_forest_density_zero_writes_empty_file(tmp_path):
    cfg = _config(tmp_path, density=0)
    assert _run("--config", cfg, "--out", tmp_path, "forest") == 0
    assert (tmp_path / "forest.xyz").read_text() == ""


def test_full_pipeline_and_reproducibility(tmp_path):
    cfg = _config(tmp_path)
    for out in ("a", "b"):
        d = tmp_path / out
        assert _run("--config", cfg, "--out", d, "rvmap") == 0
        assert _run("--config", cfg, "--out", d, "plan") == 0
        assert _run("--config", cfg, "--out", d, "route") == 0
    for name in ("rvmap.rvc", "magnitude.pgm", "codes.ppm", "sampling.csv", "curve.csv", "reconstruction.pgm", "route.csv", "config.ini"):
        assert (tmp_path / "a" / name).read_bytes() == (tmp_path / "b" / name).read_bytes(), name
    cmap = io.read_coded_map(tmp_path / "a/rvmap.rvc")
    assert (cmap.K, cmap.B) == (21, 1)
    # the echoed config re-runs to the same plan
    d = tmp_path / "echo"
    echoed = str(tmp_path / "a/config.ini")
    assert _run("--config", echoed, "--out", d, "rvmap") == 0
    assert _run("--config", echoed, "--out", d, "plan") == 0
    assert (d / "sampling.csv").read_bytes() == (tmp_path / "a/sampling.csv").read_bytes()


def test_threads_do_not_change_results(tmp_path):
    cfg = _config(tmp_path)
    for out, threads in (("a", 1), ("b", 3)):
        d = tmp_path / out
        assert _run("--config", cfg, "--out", d, "--threads", threads, "rvmap") == 0
        assert _run("--config", cfg, "--out", d, "--threads", threads, "plan") == 0
    assert (tmp_path / "a/sampling.csv").read_bytes() == (tmp_path / "b/sampling.csv").read_bytes()


def test_empty_cloud_gives_full_magnitude(tmp_path):
    cfg = _config(tmp_path, density=0)
    assert _run("--config", cfg, "--out", tmp_path, "rvmap") == 0
    assert np.all(io.read_pgm(tmp_path / "magnitude.pgm") == 255)
    cmap = io.read_coded_map(tmp_path / "rvmap.rvc")
    assert np.all(cmap.planes == 2**21 - 1)


def test_dumped_masks_decode_from_the_map(tmp_path):
    cfg = _config(tmp_path, res=16)
    assert _run("--config", cfg, "--out", tmp_path, "rvmap", "--dump-masks") == 0
    cmap = io.read_coded_map(tmp_path / "rvmap.rvc")
    for k in (0, 7, 20):
        img = io.read_pgm(tmp_path / "masks" / f"bottom_up_{k:04d}.pgm")
        assert np.array_equal(img == 255, decode(cmap, k).data)


def test_path_roi_uses_ten_batches(tmp_path):
    cfg = _config(tmp_path, res=16, restarts=2, roi=PATH)
    assert _run("--config", cfg, "--out", tmp_path, "rvmap") == 0
    cmap = io.read_coded_map(tmp_path / "rvmap.rvc")
    assert (cmap.K, cmap.L, cmap.B) == (240, 24, 10)
    assert _run("--config", cfg, "--out", tmp_path, "plan") == 0
    assert len(io.read_sampling_csv(tmp_path / "sampling.csv")) >= 1


def test_plan_reports_exhaustive_optimum(tmp_path):
    cfg = _config(tmp_path, res=6, restarts=3)
    assert _run("--config", cfg, "--out", tmp_path, "rvmap") == 0
    assert _run("--config", cfg, "--out", tmp_path, "plan", "--exhaustive-budget", "2") == 0
    report = dict(line.split(": ") for line in (tmp_path / "plan_report.txt").read_text().splitlines())
    opt = exhaustive_search(io.read_coded_map(tmp_path / "rvmap.rvc"), 2)
    assert float(report["exhaustive_norm"]) == pytest.approx(float(norm_of(bit_counts(opt, 21), len(opt))))
    assert 0 < float(report["greedy_over_optimal"]) <= 1


def test_route_single_drone_and_one_batch(tmp_path):
    cfg = _config(tmp_path)
    _run("--config", cfg, "--out", tmp_path, "rvmap")
    _run("--config", cfg, "--out", tmp_path, "plan")
    n = len(io.read_sampling_csv(tmp_path / "sampling.csv"))
    assert _run("--config", cfg, "--out", tmp_path, "route", "--drones", "1") == 0
    lines = (tmp_path / "route.csv").read_text().splitlines()
    assert {line.split(",")[1] for line in lines[1:-1]} == {"0"} and len(lines) == n + 2
    assert _run("--config", cfg, "--out", tmp_path, "route", "--drones", n) == 0
    lines = (tmp_path / "route.csv").read_text().splitlines()
    assert {line.split(",")[0] for line in lines[1:-1]} == {"0"}
    assert lines[-1] == "# total_length_m=0.0000"


def test_validation_errors_exit_2(tmp_path):
    assert _run("--config", tmp_path / "missing.ini", "forest") == 2
    (tmp_path / "typo.ini").write_text("[scene]\ndensty = 3\n")
    assert _run("--config", tmp_path / "typo.ini", "forest") == 2
    (tmp_path / "sect.ini").write_text("[scenery]\n")
    assert _run("--config", tmp_path / "sect.ini", "forest") == 2
    (tmp_path / "type.ini").write_text("[aperture]\ngrid_n = many\n")
    assert _run("--config", tmp_path / "type.ini", "forest") == 2
    far = _config(tmp_path, roi="kind = rect\nrows = 3\ncols = 7\nspacing_m = 9", name="far.ini")
    assert _run("--config", far, "--out", tmp_path, "rvmap") == 2
    assert _run("--out", tmp_path / "none", "plan") == 2
    with pytest.raises(SystemExit) as exc:
        main(["bogus"])
    assert exc.value.code == 2


def test_all_zero_map_fails_plan(tmp_path):
    cfg = _config(tmp_path, res=4, roi="kind = points\npoints = 16 16")
    (tmp_path / "z.rvc").write_bytes(b"RVCODE1 4 4 1 24 1\n" + bytes(48))
    assert _run("--config", cfg, "--out", tmp_path, "plan", "--map", tmp_path / "z.rvc") != 0


def test_verify_small_scene_passes(tmp_path, capsys):
    cfg = _config(tmp_path, density=100, res=64)
    code = _run("--config", cfg, "--out", tmp_path, "verify", "--pairs", 300, "--ground-points", 8, "--poses", 8)
    out = capsys.readouterr().out
    assert code == 0, out
    assert out.count("PASS") == 4


def test_seed_streams_are_independent(tmp_path):
    a = load_config(None, str(tmp_path), seed=5)
    assert a.stream_seed("forest") != a.stream_seed("greedy")
    assert a.stream_seed("forest") == load_config(None, str(tmp_path), seed=5, threads=4).stream_seed("forest")
