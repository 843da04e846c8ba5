"""Greedy sampling of aperture positions on a coded visibility map.

Norms are compared in exact integer arithmetic.  With ``a`` the per-bit
visible counts over ``n`` samples and ``b`` the bits of a candidate cell:

* L1:  ||I_b|| * (n + 1) = sum(a) + |b|
* L2:  ||I_b||^2 * (n + 1)^2 = sum(a^2) + 2 a.b + |b|

so every candidate shares one denominator and ties are exact.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from itertools import combinations

import numpy as np

from .visibility import CodedVisibilityMap, magnitude

NORMS = ("L1", "L2")
SELECTIONS = ("gain", "difference")
EXHAUSTIVE_GUARD = 10_000_000


@dataclass(frozen=True)
class Sample:
    row: int
    col: int
    x: float
    y: float
    z: float
    code: int

    @property
    def cell(self) -> tuple[int, int]:
        return (self.row, self.col)


@dataclass
class SamplingSet:
    samples: list[Sample]
    K: int
    start_index: int | None = None
    uniformity_ok: bool | None = None

    def __len__(self):
        return len(self.samples)

    def __iter__(self):
        return iter(self.samples)

    @property
    def cells(self) -> list[tuple[int, int]]:
        return [s.cell for s in self.samples]

    @property
    def positions(self) -> np.ndarray:
        return np.array([(s.x, s.y, s.z) for s in self.samples], dtype=float).reshape(-1, 3)


@dataclass(frozen=True)
class GreedyConfig:
    variance_threshold: float = 33.0
    restarts: int = 50
    max_iterations: int = 200
    empty_c_patience: int = 2
    rng_seed: int = 0
    norm: str = "L1"
    selection: str = "gain"

    def __post_init__(self):
        if self.restarts < 1:
            raise ValueError("restarts must be >= 1")
        if not self.variance_threshold > 0:
            raise ValueError("variance_threshold must be > 0")
        if self.max_iterations < 0 or self.empty_c_patience < 1:
            raise ValueError("max_iterations must be >= 0 and empty_c_patience >= 1")
        if self.norm not in NORMS:
            raise ValueError(f"norm must be one of {NORMS}")
        if self.selection not in SELECTIONS:
            raise ValueError(f"selection must be one of {SELECTIONS}")


@dataclass
class Metrics:
    mean_visibility_percent: float
    dispersion_percent: float
    per_point: np.ndarray


def _code_bits(code: int, K: int) -> np.ndarray:
    return np.array([(code >> k) & 1 for k in range(K)], dtype=np.int64)


def bit_counts(S, K: int) -> np.ndarray:
    samples = S.samples if isinstance(S, SamplingSet) else list(S)
    counts = np.zeros(K, dtype=np.int64)
    for s in samples:
        counts += _code_bits(s.code, K)
    return counts


def bitwise_average(S, K: int) -> np.ndarray:
    """Fraction of samples in which each ground point is visible."""
    n = len(S)
    if n == 0:
        raise ValueError("sampling set is empty")
    return bit_counts(S, K) / n


def dispersion_percent(per_point: np.ndarray) -> float:
    """Population standard deviation of per-point visibility, in percent."""
    return float(np.std(100.0 * np.asarray(per_point, dtype=float)))


def metrics(S, K: int) -> Metrics:
    avg = bitwise_average(S, K)
    return Metrics(float(100.0 * avg.mean()), dispersion_percent(avg), avg)


def norm_of(counts: np.ndarray, n: int, norm: str = "L1") -> Fraction:
    """Exact ||counts / n||, squared for L2 (monotone, so fine for comparisons)."""
    counts = np.asarray(counts, dtype=np.int64)
    if norm == "L1":
        return Fraction(int(counts.sum()), n)
    return Fraction(int((counts * counts).sum()), n * n)


def visibility_curve(S: SamplingSet) -> list[float]:
    """Mean visibility percent after each sampling step."""
    counts = np.zeros(S.K, dtype=np.int64)
    out = []
    for i, s in enumerate(S.samples, start=1):
        counts += _code_bits(s.code, S.K)
        out.append(float(100.0 * counts.mean() / i))
    return out


class CodeIndex:
    """Distinct code words of a map and the cells that carry them.

    Built once per map and shared by every greedy run on it.
    """

    def __init__(self, cmap: CodedVisibilityMap):
        self.cmap = cmap
        words, self.inverse = np.unique(cmap.words(), axis=0, return_inverse=True)
        self.inverse = self.inverse.ravel()
        self.words = words
        self.bits = cmap.bits_of(words)
        self.bits_f = self.bits.astype(np.float64)
        self.mags = self.bits.sum(axis=1, dtype=np.int64)
        self.group_sizes = np.bincount(self.inverse, minlength=len(words)).astype(np.int64)
        rows, cols = cmap.shape
        self.rows, self.cols = np.divmod(np.arange(rows * cols), cols)

    def sample(self, cell: int) -> Sample:
        r, c = int(self.rows[cell]), int(self.cols[cell])
        x, y = self.cmap.grid.cell_center(r, c)
        return Sample(r, c, float(x), float(y), float(self.cmap.grid.z), self.cmap.code_at(r, c))


def _run_greedy(index: CodeIndex, start: int, config: GreedyConfig) -> list[int]:
    grid = index.cmap.grid
    counts = index.bits[index.inverse[start]].astype(np.int64)
    n = 1
    used = np.zeros(len(index.inverse), dtype=bool)
    used[start] = True
    remaining = index.group_sizes.copy()
    remaining[index.inverse[start]] -= 1
    dot = index.bits_f @ counts.astype(np.float64)  # a.b per code, exact for these magnitudes
    chosen = [start]
    current = start
    empty_streak = 0

    for _ in range(config.max_iterations):
        t1 = int(counts.sum())
        ab = np.rint(dot).astype(np.int64)
        if config.norm == "L1":
            num = t1 + index.mags
            increases = n * num > (n + 1) * t1
        else:
            t2 = int((counts * counts).sum())
            num = t2 + 2 * ab + index.mags
            increases = (n * n) * num > ((n + 1) * (n + 1)) * t2
        cand = increases & (remaining > 0)
        if not cand.any():
            empty_streak += 1
            if empty_streak >= config.empty_c_patience:
                break
            continue
        empty_streak = 0

        if config.selection == "gain":
            score = num
        elif config.norm == "L1":
            score = t1 + n * index.mags - 2 * ab
        else:
            score = int((counts * counts).sum()) + n * n * index.mags - 2 * n * ab
        best = score[cand].max()
        tie_codes = cand & (score == best)
        cells = np.flatnonzero(tie_codes[index.inverse] & ~used)
        dr = (index.rows[cells] - index.rows[current]) * grid.dy
        dc = (index.cols[cells] - index.cols[current]) * grid.dx
        pick = int(cells[np.argmin(dr * dr + dc * dc)])  # first minimum = lowest cell index

        code = index.inverse[pick]
        chosen.append(pick)
        used[pick] = True
        remaining[code] -= 1
        counts += index.bits[code]
        dot += index.bits_f @ index.bits_f[code]
        n += 1
        current = pick
    return chosen


def _cell_index(cmap: CodedVisibilityMap, start) -> int:
    r, c = (int(v) for v in start)
    rows, cols = cmap.shape
    if not (0 <= r < rows and 0 <= c < cols):
        raise IndexError(f"start cell {start} outside the {rows}x{cols} map")
    return r * cols + c


def greedy_sampling(
    cmap: CodedVisibilityMap,
    start,
    config: GreedyConfig = GreedyConfig(),
    index: CodeIndex | None = None,
) -> SamplingSet:
    """Grow a sampling set from ``start`` while the bit-average norm strictly increases.

    Each step adds, among cells that raise the norm, the one with the best
    score (largest resulting norm for ``selection="gain"``, largest
    ``||I_b - I_a||`` for ``"difference"``), breaking ties by distance to
    the previous sample and then by row-major cell index.
    """
    cell = _cell_index(cmap, start)
    index = CodeIndex(cmap) if index is None else index
    chosen = _run_greedy(index, cell, config)
    return SamplingSet([index.sample(c) for c in chosen], cmap.K)


@dataclass
class _Candidate:
    order: int
    sset: SamplingSet
    norm: Fraction
    dispersion: float = field(default=0.0)


def multi_start(cmap: CodedVisibilityMap, config: GreedyConfig = GreedyConfig(), threads: int = 1) -> SamplingSet:
    """Best greedy run over seeded random starts, subject to ``dispersion < T``.

    Starts are drawn without replacement from cells with nonzero
    magnitude.  Feasible runs are ranked by norm, then dispersion, then
    start order.  If no run is feasible the least dispersed one is returned
    with ``uniformity_ok = False``.
    """
    mags = magnitude(cmap).ravel()
    nonzero = np.flatnonzero(mags > 0)
    if len(nonzero) == 0:
        raise ValueError("coded map has no visible cell")
    rng = np.random.default_rng(config.rng_seed)
    starts = rng.choice(nonzero, size=min(config.restarts, len(nonzero)), replace=False)
    index = CodeIndex(cmap)

    def run(i_start):
        i, start = i_start
        chosen = _run_greedy(index, int(start), config)
        sset = SamplingSet([index.sample(c) for c in chosen], cmap.K, start_index=i)
        counts = bit_counts(sset, cmap.K)
        return _Candidate(i, sset, norm_of(counts, len(sset), config.norm), dispersion_percent(counts / len(sset)))

    jobs = list(enumerate(starts))
    if threads > 1:
        with ThreadPoolExecutor(threads) as ex:
            results = list(ex.map(run, jobs))
    else:
        results = [run(j) for j in jobs]

    feasible = [r for r in results if r.dispersion < config.variance_threshold]
    if feasible:
        best = min(feasible, key=lambda r: (-r.norm, r.dispersion, r.order))
        best.sset.uniformity_ok = True
    else:
        best = min(results, key=lambda r: (r.dispersion, -r.norm, r.order))
        best.sset.uniformity_ok = False
    return best.sset


def exhaustive_search(cmap: CodedVisibilityMap, budget: int, norm: str = "L1") -> SamplingSet:
    """Globally best cell subset of size <= budget; ties go to the lexicographically smallest."""
    n_cells = cmap.n_cells
    budget = min(budget, n_cells)
    if budget < 1:
        raise ValueError("budget must be >= 1")
    total = sum(math.comb(n_cells, s) for s in range(1, budget + 1))
    if total > EXHAUSTIVE_GUARD:
        raise ValueError(f"{total} subsets exceed the exhaustive-search guard of {EXHAUSTIVE_GUARD}")
    bits = cmap.bits_of(cmap.words()).astype(np.int64)
    best_key = None
    best_subset = None
    for size in range(1, budget + 1):
        combos = np.fromiter(
            combinations(range(n_cells), size), dtype=np.dtype((np.int64, size)), count=math.comb(n_cells, size)
        )
        counts = bits[combos].sum(axis=1)
        num = counts.sum(axis=1) if norm == "L1" else (counts * counts).sum(axis=1)
        i = int(np.argmax(num))  # first maximum is the lexicographically smallest of this size
        value = Fraction(int(num[i]), size if norm == "L1" else size * size)
        subset = tuple(int(c) for c in combos[i])
        if best_key is None or value > best_key or (value == best_key and subset < best_subset):
            best_key, best_subset = value, subset
    index = CodeIndex(cmap)
    return SamplingSet([index.sample(c) for c in best_subset], cmap.K)


def _lattice(count: int, size: int) -> list[int]:
    """``count`` indices in ``range(size)``, evenly spread and mirror-symmetric."""
    out = [0] * count
    for i in range((count + 1) // 2):
        r = ((2 * i + 1) * size) // (2 * count)  # cell holding the stratum center
        out[i] = r
        out[count - 1 - i] = size - 1 - r
    if count % 2:
        out[count // 2] = (size - 1) // 2
    return out


def baseline_sampler(cmap: CodedVisibilityMap, n: int, mode: str = "grid", seed: int = 0) -> SamplingSet:
    """Blind sampling: a centered regular lattice or distinct uniform random cells."""
    rows, cols = cmap.shape
    if n < 1:
        raise ValueError("n must be >= 1")
    if n > rows * cols:
        raise ValueError(f"cannot pick {n} distinct cells from {rows * cols}")
    if mode == "grid":
        lc = math.ceil(math.sqrt(n))
        lr = math.ceil(n / lc)
        cells = []
        for i, r in enumerate(_lattice(lr, rows)):
            in_row = min(lc, n - i * lc)
            cells += [r * cols + c for c in _lattice(in_row, cols)]
        if len(set(cells)) != n:
            raise ValueError(f"map too small for a {lr}x{lc} lattice")
    elif mode == "uniform_random":
        rng = np.random.default_rng(seed)
        cells = [int(c) for c in rng.choice(rows * cols, size=n, replace=False)]
    else:
        raise ValueError(f"unknown baseline mode {mode!r}")
    index = CodeIndex(cmap)
    return SamplingSet([index.sample(c) for c in cells], cmap.K)
