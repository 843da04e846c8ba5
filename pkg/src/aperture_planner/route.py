"""Visiting order for one drone and batch assignment for a swarm."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy.optimize import linear_sum_assignment

MAX_TWO_OPT_PASSES = 10_000
_EPS = 1e-12


@dataclass
class Route:
    order: list[int]  # indices into the input positions
    positions: np.ndarray
    length: float


@dataclass
class BatchPlan:
    """``batches[t][d]`` is the sample index flown by drone ``d`` in batch ``t`` (or None)."""

    batches: list[list[int | None]]
    positions: np.ndarray
    n_drones: int

    def drone_sequence(self, d: int) -> list[int]:
        return [b[d] for b in self.batches if b[d] is not None]

    @property
    def travel(self) -> float:
        """Total inter-batch distance flown by all drones."""
        total = 0.0
        for d in range(self.n_drones):
            seq = self.drone_sequence(d)
            total += path_length(self.positions[seq])
        return total


def _as_positions(S) -> np.ndarray:
    pos = S.positions if hasattr(S, "positions") else S
    return np.asarray(pos, dtype=float).reshape(len(pos), -1)


def path_length(points: np.ndarray) -> float:
    points = np.asarray(points, dtype=float)
    if len(points) < 2:
        return 0.0
    return float(np.linalg.norm(np.diff(points, axis=0), axis=1).sum())


def nearest_neighbor_order(points: np.ndarray, start) -> list[int]:
    """Greedy tour from ``start``; ties go to the lower index."""
    remaining = list(range(len(points)))
    cur = np.asarray(start, dtype=float)[: points.shape[1]]
    order = []
    while remaining:
        d = np.linalg.norm(points[remaining] - cur, axis=1)
        nxt = remaining.pop(int(np.argmin(d)))
        order.append(nxt)
        cur = points[nxt]
    return order


def two_opt(points: np.ndarray, order: list[int]) -> list[int]:
    """First-improvement 2-opt on an open path, repeated until no move helps."""
    order = list(order)
    n = len(order)
    if n < 3:
        return order

    def dist(i, j):
        return math.dist(points[order[i]], points[order[j]])

    for _ in range(MAX_TWO_OPT_PASSES):
        improved = False
        for i in range(n - 1):
            for j in range(i + 1, n):
                # reverse order[i..j]; open-path ends have no outer edge
                before = (dist(i - 1, i) if i > 0 else 0.0) + (dist(j, j + 1) if j < n - 1 else 0.0)
                after = (dist(i - 1, j) if i > 0 else 0.0) + (dist(i, j + 1) if j < n - 1 else 0.0)
                if after < before - _EPS:
                    order[i : j + 1] = order[i : j + 1][::-1]
                    improved = True
        if not improved:
            break
    return order


def order_route(S, start) -> Route:
    """Nearest-neighbour construction from ``start`` refined by 2-opt.

    ``length`` covers the legs between samples; the approach from
    ``start`` to the first sample is not counted.
    """
    pts = _as_positions(S)
    if len(pts) == 0:
        raise ValueError("nothing to route")
    order = two_opt(pts, nearest_neighbor_order(pts, start))
    return Route(order, pts[order], path_length(pts[order]))


def assign_batches(S, n_drones: int) -> BatchPlan:
    """Split samples into batches of ``n_drones`` in sampling order and match drones between batches.

    Each transition is an exact minimum-total-distance assignment of the
    drones (at their current samples) to the next batch.
    """
    if n_drones < 1:
        raise ValueError("n_drones must be >= 1")
    pts = _as_positions(S)
    chunks = [list(range(i, min(i + n_drones, len(pts)))) for i in range(0, len(pts), n_drones)]
    if not chunks:
        return BatchPlan([], pts, n_drones)
    first = chunks[0] + [None] * (n_drones - len(chunks[0]))
    batches = [first]
    for nxt in chunks[1:]:
        prev = batches[-1]
        active = [d for d in range(n_drones) if prev[d] is not None]
        cost = np.linalg.norm(pts[[prev[d] for d in active]][:, None, :] - pts[nxt][None, :, :], axis=2)
        rows, cols = linear_sum_assignment(cost)
        batch: list[int | None] = [None] * n_drones
        for r, c in zip(rows, cols):
            batch[active[r]] = nxt[c]
        batches.append(batch)
    return BatchPlan(batches, pts, n_drones)
