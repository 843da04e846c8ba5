import numpy as np
import pytest
from conftest import random_cmap
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

from aperture_planner import io
from aperture_planner.sampler import GreedyConfig, greedy_sampling, visibility_curve
from aperture_planner.scene import GROUND, VEGETATION, PointCloud
from aperture_planner.visibility import WORD_DTYPES


def _cloud(rng, n=50):
    pts = np.round(rng.uniform(0, 32, (n, 3)), 4)
    labels = rng.integers(0, 2, n).astype(np.uint8)
    return PointCloud(pts, labels)


def test_xyz_roundtrip(tmp_path, rng):
    cloud = _cloud(rng)
    io.write_xyz(tmp_path / "c.xyz", cloud)
    back = io.read_xyz(tmp_path / "c.xyz")
    assert np.allclose(back.points, cloud.points) and np.array_equal(back.labels, cloud.labels)


def test_xyz_accepts_names_and_missing_labels(tmp_path):
    (tmp_path / "c.xyz").write_text("# header\n1 2 3 ground\n4 5 6\n7 8 9 vegetation\n")
    back = io.read_xyz(tmp_path / "c.xyz")
    assert back.labels.tolist() == [GROUND, VEGETATION, VEGETATION]
    (tmp_path / "bad.xyz").write_text("1 2\n")
    with pytest.raises(io.FormatError):
        io.read_xyz(tmp_path / "bad.xyz")


def test_ply_roundtrip(tmp_path, rng):
    cloud = _cloud(rng)
    io.write_ply(tmp_path / "c.ply", cloud)
    back = io.read_cloud(tmp_path / "c.ply")
    assert np.allclose(back.points, cloud.points, atol=1e-5)
    assert np.array_equal(back.labels, cloud.labels)
    (tmp_path / "x.ply").write_bytes(b"ply\nformat ascii 1.0\nend_header\n")
    with pytest.raises(io.FormatError):
        io.read_ply(tmp_path / "x.ply")


def test_pgm_roundtrip(tmp_path, rng):
    img = rng.integers(0, 256, (7, 11)).astype(np.uint8)
    io.write_pgm(tmp_path / "a.pgm", img)
    assert np.array_equal(io.read_pgm(tmp_path / "a.pgm"), img)
    io.write_pgm(tmp_path / "b.pgm", img > 100)
    assert set(np.unique(io.read_pgm(tmp_path / "b.pgm"))) <= {0, 255}


def test_ppm_header(tmp_path, rng):
    cmap, _ = random_cmap(rng, 5, 4, 6)
    io.write_ppm(tmp_path / "c.ppm", io.code_image(cmap))
    data = (tmp_path / "c.ppm").read_bytes()
    assert data.startswith(b"P6\n6 4\n255\n") and len(data) == 11 + 4 * 6 * 3


def test_palette_is_stable_and_black_for_zero():
    words = np.array([[0], [5], [5], [9]], dtype=np.uint64)
    colors = io.code_palette(words)
    assert colors[0].tolist() == [0, 0, 0]
    assert colors[1].tolist() == colors[2].tolist() != colors[3].tolist()


@settings(max_examples=30, deadline=None, suppress_health_check=[HealthCheck.function_scoped_fixture])
@given(K=st.integers(1, 80), L=st.sampled_from(sorted(WORD_DTYPES)), seed=st.integers(0, 2**32 - 1))
def test_coded_map_file_roundtrip(tmp_path, K, L, seed):
    cmap, _ = random_cmap(np.random.default_rng(seed), K, 5, 3, L=L)
    path = tmp_path / f"m{K}_{L}.rvc"
    io.write_coded_map(path, cmap)
    data = path.read_bytes()
    header = f"RVCODE1 3 5 {K} {L} {cmap.B}\n".encode()
    assert data.startswith(header)
    assert len(data) == len(header) + cmap.B * 15 * (L // 8)
    back = io.read_coded_map(path)
    assert (back.K, back.L, back.B) == (K, L, cmap.B)
    assert np.array_equal(back.planes, cmap.planes)


def test_coded_map_rejects_stray_bits_and_bad_headers(tmp_path):
    good = b"RVCODE1 1 1 20 24 1\n" + bytes([0xFF, 0xFF, 0x0F])
    (tmp_path / "ok.rvc").write_bytes(good)
    assert io.read_coded_map(tmp_path / "ok.rvc").code_at(0, 0) == 2**20 - 1
    (tmp_path / "bits.rvc").write_bytes(b"RVCODE1 1 1 20 24 1\n" + bytes([0xFF, 0xFF, 0x1F]))
    with pytest.raises(io.FormatError):
        io.read_coded_map(tmp_path / "bits.rvc")
    (tmp_path / "hdr.rvc").write_bytes(b"RVCODE1 1 1 20 24 2\n" + bytes(6))
    with pytest.raises(io.FormatError):
        io.read_coded_map(tmp_path / "hdr.rvc")
    (tmp_path / "short.rvc").write_bytes(b"RVCODE1 2 1 20 24 1\n" + bytes(3))
    with pytest.raises(io.FormatError):
        io.read_coded_map(tmp_path / "short.rvc")


def test_sampling_and_curve_csv(tmp_path, rng):
    cmap, _ = random_cmap(rng, 6, 4, 4)
    S = greedy_sampling(cmap, (0, 0), GreedyConfig())
    curve = visibility_curve(S)
    io.write_sampling_csv(tmp_path / "s.csv", S, curve)
    rows = io.read_sampling_csv(tmp_path / "s.csv")
    assert [int(r["code_hex"], 16) for r in rows] == [s.code for s in S]
    assert [(int(r["row"]), int(r["col"])) for r in rows] == S.cells
    io.write_curve_csv(tmp_path / "c.csv", curve)
    lines = (tmp_path / "c.csv").read_text().splitlines()
    assert lines[0] == "step,mean_visibility_percent" and len(lines) == len(S) + 1


def test_route_csv_summary(tmp_path):
    io.write_route_csv(tmp_path / "r.csv", [(0, 0, 1, 1.0, 2.0, 35.0)], 12.5)
    lines = (tmp_path / "r.csv").read_text().splitlines()
    assert lines == ["leg,drone,order,x_m,y_m,z_m", "0,0,1,1.0000,2.0000,35.0000", "# total_length_m=12.5000"]
