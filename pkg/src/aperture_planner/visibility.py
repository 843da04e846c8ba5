"""Visibility matrix, integral visibility and bit-coded visibility maps."""

from __future__ import annotations

import math
from collections.abc import Callable, Sequence
from dataclasses import dataclass

import numpy as np

from .geometry import RasterGrid
from .projection import VisibilityMask

WORD_DTYPES = {8: np.uint8, 16: np.uint16, 24: np.uint32, 32: np.uint32, 64: np.uint64}

# dense materialization guard for VisibilityMatrix.dense()
MAX_DENSE_ENTRIES = 50_000_000


class LazyMasks(Sequence):
    """Masks produced on demand by ``render(n)``; nothing is cached."""

    def __init__(self, render: Callable[[int], VisibilityMask], count: int, mask_shape: tuple[int, int]):
        self._render = render
        self._count = count
        self.mask_shape = tuple(mask_shape)

    def __len__(self):
        return self._count

    def __getitem__(self, n):
        if isinstance(n, slice):
            return [self[i] for i in range(*n.indices(self._count))]
        if not -self._count <= n < self._count:
            raise IndexError(n)
        return self._render(n % self._count)


def _as_array(mask) -> np.ndarray:
    return mask.data if isinstance(mask, VisibilityMask) else np.asarray(mask, dtype=bool)


class VisibilityMatrix:
    """M x N binary matrix whose column n is the row-major vectorized mask n.

    The matrix is virtual: it keeps a reference to the mask sequence and
    gathers rows or columns on request.
    """

    def __init__(self, masks: Sequence, mask_shape: tuple[int, int]):
        self.masks = masks
        self.mask_shape = tuple(mask_shape)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.mask_shape[0] * self.mask_shape[1], len(self.masks))

    @property
    def n_entries(self) -> int:
        m, n = self.shape
        return m * n

    def column(self, n: int) -> np.ndarray:
        return _as_array(self.masks[n]).ravel()

    def row(self, m: int) -> np.ndarray:
        return np.array([_as_array(mk).ravel()[m] for mk in self.masks], dtype=bool)

    def rows(self, ms) -> np.ndarray:
        """Sub-matrix of the selected rows, shape ``(len(ms), N)``."""
        ms = np.asarray(ms, dtype=np.int64)
        out = np.empty((len(ms), len(self.masks)), dtype=bool)
        for n, mk in enumerate(self.masks):
            out[:, n] = _as_array(mk).ravel()[ms]
        return out

    def dense(self) -> np.ndarray:
        if self.n_entries > MAX_DENSE_ENTRIES:
            raise MemoryError(f"refusing to materialize {self.n_entries} entries")
        return np.column_stack([self.column(n) for n in range(len(self.masks))])


def assemble_matrix(masks: Sequence) -> VisibilityMatrix:
    if len(masks) == 0:
        raise ValueError("need at least one mask")
    shape = getattr(masks, "mask_shape", None)
    if shape is None:
        shapes = {_as_array(m).shape for m in masks}
        if len(shapes) != 1:
            raise ValueError(f"masks have mixed resolutions: {sorted(shapes)}")
        shape = shapes.pop()
    return VisibilityMatrix(masks, shape)


@dataclass
class IntegralMap:
    values: np.ndarray
    Z: int


def _selection(p, length: int) -> np.ndarray:
    p = np.asarray(p).astype(bool).ravel()
    if len(p) != length:
        raise ValueError(f"selection has length {len(p)}, expected {length}")
    if not p.any():
        raise ValueError("selection vector is all zero")
    return p


def integrate_forward(masks: Sequence, p) -> IntegralMap:
    """Per-pixel mean of the selected masks."""
    sel = _selection(p, len(masks))
    idx = np.flatnonzero(sel)
    acc = None
    for n in idx:
        a = _as_array(masks[n])
        if acc is None:
            acc = np.zeros(a.shape, dtype=np.int64)
        elif a.shape != acc.shape:
            raise ValueError("masks have mixed resolutions")
        acc += a
    return IntegralMap(acc / len(idx), len(idx))


def integrate_reciprocal_lowres(V: VisibilityMatrix, p_up, grid_shape: tuple[int, int] | None = None) -> IntegralMap:
    """Sky-side integral: entry n is the mean of column n over the selected ground pixels."""
    M, N = V.shape
    sel = np.flatnonzero(_selection(p_up, M))
    vals = V.rows(sel).mean(axis=0)
    if grid_shape is None:
        g = math.isqrt(N)
        grid_shape = (g, g) if g * g == N else (N,)
    return IntegralMap(vals.reshape(grid_shape), len(sel))


@dataclass
class CodedVisibilityMap:
    """K-bit visibility words per aperture cell, split into B planes of L bits.

    Bit ``k`` of cell ``c`` is set iff ground point ``k`` is visible from ``c``;
    it lives in plane ``k // L`` at bit position ``k % L``.
    """

    planes: np.ndarray
    K: int
    L: int
    grid: RasterGrid | None = None

    def __post_init__(self):
        if self.L not in WORD_DTYPES:
            raise ValueError(f"L must be one of {sorted(WORD_DTYPES)}")
        if self.K < 1:
            raise ValueError("K must be >= 1")
        self.planes = np.asarray(self.planes, dtype=WORD_DTYPES[self.L])
        if self.planes.ndim != 3 or self.planes.shape[0] != self.B:
            raise ValueError(f"expected {self.B} planes, got array of shape {self.planes.shape}")
        if self.grid is None:
            self.grid = RasterGrid.unit(*self.shape)
        elif self.grid.shape != self.shape:
            raise ValueError("grid shape does not match the planes")

    @property
    def B(self) -> int:
        return -(-self.K // self.L)

    @property
    def shape(self) -> tuple[int, int]:
        return self.planes.shape[1:]

    @property
    def n_cells(self) -> int:
        return self.shape[0] * self.shape[1]

    def code_at(self, row: int, col: int) -> int:
        """Full K-bit word of one cell as a Python integer."""
        word = 0
        for b in range(self.B):
            word |= int(self.planes[b, row, col]) << (b * self.L)
        return word

    def words(self) -> np.ndarray:
        """``(cells, B)`` uint64 array of plane words, row-major cells."""
        return self.planes.reshape(self.B, -1).T.astype(np.uint64)

    def bits_of(self, words: np.ndarray) -> np.ndarray:
        """Expand ``(n, B)`` plane words to an ``(n, K)`` 0/1 matrix."""
        words = np.asarray(words, dtype=np.uint64).reshape(-1, self.B)
        out = np.empty((len(words), self.K), dtype=np.uint8)
        for b in range(self.B):
            k0 = b * self.L
            width = min(self.L, self.K - k0)
            shifts = np.arange(width, dtype=np.uint64)
            out[:, k0 : k0 + width] = (words[:, b, None] >> shifts) & np.uint64(1)
        return out


def build_coded_map(bottom_up_masks: Sequence, L: int = 24, grid: RasterGrid | None = None) -> CodedVisibilityMap:
    """Sum of ``2**k * mask_k``, stored as ``ceil(K / L)`` unnormalized word planes."""
    if L not in WORD_DTYPES:
        raise ValueError(f"L must be one of {sorted(WORD_DTYPES)}")
    K = len(bottom_up_masks)
    if K < 1:
        raise ValueError("need at least one mask")
    arrays = [_as_array(m) for m in bottom_up_masks]
    shape = arrays[0].shape
    if any(a.shape != shape for a in arrays):
        raise ValueError("bottom-up masks have mixed resolutions")
    if grid is None and isinstance(bottom_up_masks[0], VisibilityMask):
        grid = bottom_up_masks[0].grid
    dtype = WORD_DTYPES[L]
    B = -(-K // L)
    planes = np.zeros((B,) + shape, dtype=dtype)
    for k, a in enumerate(arrays):
        b, bit = divmod(k, L)
        planes[b] |= a.astype(dtype) << dtype(bit)
    return CodedVisibilityMap(planes, K, L, grid)


def decode(cmap: CodedVisibilityMap, k: int) -> VisibilityMask:
    if not 0 <= k < cmap.K:
        raise IndexError(f"ground point index {k} outside [0, {cmap.K})")
    b, bit = divmod(k, cmap.L)
    dtype = cmap.planes.dtype.type
    return VisibilityMask((cmap.planes[b] >> dtype(bit)) & dtype(1), cmap.grid)


def magnitude(cmap: CodedVisibilityMap) -> np.ndarray:
    """Number of visible ground points per cell."""
    return np.bitwise_count(cmap.planes).sum(axis=0, dtype=np.int64)
