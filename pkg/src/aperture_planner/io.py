"""Readers and writers for point clouds, rasters, coded maps and plans.

Formats: ASCII XYZ and binary little-endian PLY clouds, PGM (P5) and
PPM (P6) rasters, ``RVCODE1`` coded visibility maps, CSV plans.
"""

from __future__ import annotations

import csv
import hashlib
from pathlib import Path

import numpy as np

from .scene import GROUND, VEGETATION, PointCloud
from .visibility import WORD_DTYPES, CodedVisibilityMap

_LABEL_NAMES = {"ground": GROUND, "vegetation": VEGETATION}


class FormatError(ValueError):
    pass


# -- point clouds ----------------------------------------------------------


def write_xyz(path, cloud: PointCloud) -> None:
    with open(path, "w", newline="\n") as f:
        for (x, y, z), lab in zip(cloud.points, cloud.labels):
            f.write(f"{x:.6f} {y:.6f} {z:.6f} {int(lab)}\n")


def read_xyz(path) -> PointCloud:
    pts, labels = [], []
    with open(path) as f:
        for lineno, line in enumerate(f, start=1):
            parts = line.split()
            if not parts or parts[0].startswith("#"):
                continue
            if len(parts) not in (3, 4):
                raise FormatError(f"{path}:{lineno}: expected 'x y z [label]'")
            pts.append([float(v) for v in parts[:3]])
            if len(parts) == 4:
                tok = parts[3].lower()
                labels.append(_LABEL_NAMES[tok] if tok in _LABEL_NAMES else int(tok))
            else:
                labels.append(VEGETATION)
    return PointCloud(np.array(pts).reshape(-1, 3), np.array(labels, dtype=np.uint8))


_PLY_DTYPE = np.dtype([("x", "<f4"), ("y", "<f4"), ("z", "<f4"), ("label", "u1")])


def write_ply(path, cloud: PointCloud) -> None:
    rec = np.empty(len(cloud), dtype=_PLY_DTYPE)
    rec["x"], rec["y"], rec["z"] = cloud.points.T
    rec["label"] = cloud.labels
    header = (
        "ply\nformat binary_little_endian 1.0\n"
        f"element vertex {len(cloud)}\n"
        "property float x\nproperty float y\nproperty float z\n"
        "property uchar label\nend_header\n"
    )
    with open(path, "wb") as f:
        f.write(header.encode("ascii"))
        f.write(rec.tobytes())


def read_ply(path) -> PointCloud:
    data = Path(path).read_bytes()
    end = data.find(b"end_header\n")
    if not data.startswith(b"ply\n") or end < 0:
        raise FormatError(f"{path}: not a PLY file")
    header = data[:end].decode("ascii").splitlines()
    if "format binary_little_endian 1.0" not in header:
        raise FormatError(f"{path}: only binary little-endian PLY is supported")
    n = next(int(h.split()[2]) for h in header if h.startswith("element vertex"))
    props = [h.split()[-1] for h in header if h.startswith("property")]
    if props != ["x", "y", "z", "label"]:
        raise FormatError(f"{path}: unexpected vertex properties {props}")
    rec = np.frombuffer(data, dtype=_PLY_DTYPE, count=n, offset=end + len(b"end_header\n"))
    pts = np.column_stack([rec["x"], rec["y"], rec["z"]]).astype(np.float64)
    return PointCloud(pts, rec["label"].copy())


def read_cloud(path) -> PointCloud:
    return read_ply(path) if str(path).lower().endswith(".ply") else read_xyz(path)


# -- rasters ---------------------------------------------------------------


def write_pgm(path, image: np.ndarray) -> None:
    img = np.asarray(image)
    if img.dtype == bool:
        img = img.astype(np.uint8) * 255
    img = np.clip(img, 0, 255).astype(np.uint8)
    h, w = img.shape
    with open(path, "wb") as f:
        f.write(f"P5\n{w} {h}\n255\n".encode("ascii"))
        f.write(img.tobytes())


def read_pgm(path) -> np.ndarray:
    data = Path(path).read_bytes()
    tokens, pos = [], 0
    while len(tokens) < 4:
        while data[pos : pos + 1].isspace():
            pos += 1
        if data[pos : pos + 1] == b"#":
            pos = data.index(b"\n", pos) + 1
            continue
        start = pos
        while not data[pos : pos + 1].isspace():
            pos += 1
        tokens.append(data[start:pos])
    if tokens[0] != b"P5" or int(tokens[3]) != 255:
        raise FormatError(f"{path}: expected an 8-bit binary PGM")
    w, h = int(tokens[1]), int(tokens[2])
    return np.frombuffer(data, dtype=np.uint8, count=w * h, offset=pos + 1).reshape(h, w).copy()


def write_ppm(path, rgb: np.ndarray) -> None:
    rgb = np.asarray(rgb, dtype=np.uint8)
    h, w, _ = rgb.shape
    with open(path, "wb") as f:
        f.write(f"P6\n{w} {h}\n255\n".encode("ascii"))
        f.write(rgb.tobytes())


def code_palette(words: np.ndarray) -> np.ndarray:
    """Fixed hash-based color per code word; code 0 is black."""
    words = np.ascontiguousarray(words, dtype=np.uint64)
    out = np.zeros((len(words), 3), dtype=np.uint8)
    uniq, inv = np.unique(words, axis=0, return_inverse=True)
    colors = np.zeros((len(uniq), 3), dtype=np.uint8)
    for i, w in enumerate(uniq):
        if not w.any():
            continue
        digest = hashlib.blake2b(w.tobytes(), digest_size=3).digest()
        colors[i] = np.frombuffer(digest, dtype=np.uint8) | np.uint8(0x20)
    out[:] = colors[inv.ravel()]
    return out


def code_image(cmap: CodedVisibilityMap) -> np.ndarray:
    return code_palette(cmap.words()).reshape(*cmap.shape, 3)


# -- coded maps --------------------------------------------------------------


def write_coded_map(path, cmap: CodedVisibilityMap) -> None:
    h, w = cmap.shape
    with open(path, "wb") as f:
        f.write(f"RVCODE1 {w} {h} {cmap.K} {cmap.L} {cmap.B}\n".encode("ascii"))
        for plane in cmap.planes:
            if cmap.L == 24:
                raw = plane.astype("<u4").view(np.uint8).reshape(-1, 4)[:, :3]
                f.write(raw.tobytes())
            else:
                f.write(plane.astype(np.dtype(WORD_DTYPES[cmap.L]).newbyteorder("<")).tobytes())


def read_coded_map(path, grid=None) -> CodedVisibilityMap:
    data = Path(path).read_bytes()
    nl = data.find(b"\n")
    head = data[:nl].decode("ascii", errors="replace").split() if nl >= 0 else []
    if len(head) != 6 or head[0] != "RVCODE1":
        raise FormatError(f"{path}: missing RVCODE1 header")
    w, h, K, L, B = (int(v) for v in head[1:])
    if L not in WORD_DTYPES or B != -(-K // L) or K < 1:
        raise FormatError(f"{path}: inconsistent header K={K} L={L} B={B}")
    nbytes = L // 8
    body = data[nl + 1 :]
    if len(body) != B * w * h * nbytes:
        raise FormatError(f"{path}: expected {B * w * h * nbytes} payload bytes, found {len(body)}")
    dtype = WORD_DTYPES[L]
    if L == 24:
        raw = np.frombuffer(body, dtype=np.uint8).reshape(B, h, w, 3)
        planes = (
            raw[..., 0].astype(np.uint32)
            | (raw[..., 1].astype(np.uint32) << 8)
            | (raw[..., 2].astype(np.uint32) << 16)
        )
    else:
        planes = np.frombuffer(body, dtype=np.dtype(dtype).newbyteorder("<")).reshape(B, h, w).astype(dtype)
    spare = B * L - K
    if spare and np.any(planes[-1] >> dtype(L - spare)):
        raise FormatError(f"{path}: bits beyond K are set")
    return CodedVisibilityMap(planes, K, L, grid)


# -- plans -----------------------------------------------------------------

SAMPLING_HEADER = ["order", "row", "col", "x_m", "y_m", "z_m", "code_hex", "mean_visibility_percent_after"]


def write_sampling_csv(path, sset, curve) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(SAMPLING_HEADER)
        for i, (s, v) in enumerate(zip(sset.samples, curve)):
            wr.writerow([i, s.row, s.col, f"{s.x:.4f}", f"{s.y:.4f}", f"{s.z:.4f}", f"{s.code:x}", f"{v:.4f}"])


def read_sampling_csv(path) -> list[dict]:
    with open(path, newline="") as f:
        rows = list(csv.DictReader(f))
    if rows and list(rows[0].keys()) != SAMPLING_HEADER:
        raise FormatError(f"{path}: unexpected sampling CSV columns")
    return rows


def write_curve_csv(path, curve) -> None:
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["step", "mean_visibility_percent"])
        for i, v in enumerate(curve, start=1):
            wr.writerow([i, f"{v:.4f}"])


def write_route_csv(path, legs, total_length: float) -> None:
    """``legs`` yields ``(leg, drone, order, x, y, z)`` tuples."""
    with open(path, "w", newline="") as f:
        wr = csv.writer(f, lineterminator="\n")
        wr.writerow(["leg", "drone", "order", "x_m", "y_m", "z_m"])
        for leg, drone, order, x, y, z in legs:
            wr.writerow([leg, drone, order, f"{x:.4f}", f"{y:.4f}", f"{z:.4f}"])
        f.write(f"# total_length_m={total_length:.4f}\n")
