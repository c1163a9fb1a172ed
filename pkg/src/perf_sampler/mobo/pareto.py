"""Pareto dominance, non-dominated sorting and exact hypervolume."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

MINIMIZE = "min"
MAXIMIZE = "max"


def _direction_signs(directions, m):
    if directions is None:
        return np.ones(m)
    if len(directions) != m:
        raise ValueError(f"got {len(directions)} directions for {m} objectives")
    signs = []
    for d in directions:
        d = str(d).lower()
        if d in ("min", "minimize", "minimise"):
            signs.append(1.0)
        elif d in ("max", "maximize", "maximise"):
            signs.append(-1.0)
        else:
            raise ValueError(f"unknown direction {d!r}")
    return np.array(signs)


def to_minimization(points, directions=None) -> np.ndarray:
    """Flip maximized columns so that every objective is minimized."""
    pts = np.asarray(points, dtype=float)
    if pts.ndim == 1:
        pts = pts[:, None]
    return pts * _direction_signs(directions, pts.shape[1])


def dominates(a, b) -> bool:
    """True iff ``a`` weakly improves on ``b`` everywhere and strictly somewhere (minimization)."""
    a = np.asarray(a)
    b = np.asarray(b)
    return bool(np.all(a <= b) and np.any(a < b))


def dominance_matrix(points: np.ndarray) -> np.ndarray:
    """``D[i, j]`` is True iff point i dominates point j."""
    le = np.all(points[:, None, :] <= points[None, :, :], axis=2)
    lt = np.any(points[:, None, :] < points[None, :, :], axis=2)
    return le & lt


def non_dominated_sort(points, directions=None) -> list[list[int]]:
    """Split point indices into successive non-dominated fronts.

    Maximized objectives (per ``directions``) are negated first. Indices inside
    each front are ascending.
    """
    pts = to_minimization(points, directions) if len(points) else np.zeros((0, 1))
    n = len(pts)
    if n == 0:
        return []
    dom = dominance_matrix(pts)
    n_dominators = dom.sum(axis=0)
    remaining = np.ones(n, dtype=bool)
    fronts = []
    while remaining.any():
        front = np.flatnonzero(remaining & (n_dominators == 0))
        fronts.append(front.tolist())
        remaining[front] = False
        n_dominators = n_dominators - dom[front].sum(axis=0)
        n_dominators[~remaining] = -1
    return fronts


def front_ranks(points, directions=None) -> np.ndarray:
    ranks = np.empty(len(points), dtype=int)
    for r, front in enumerate(non_dominated_sort(points, directions)):
        ranks[front] = r
    return ranks


def pareto_mask(points) -> np.ndarray:
    """Boolean mask of the mutually non-dominated subset (minimization)."""
    pts = np.asarray(points, dtype=float)
    n = len(pts)
    if n == 0:
        return np.zeros(0, dtype=bool)
    if n <= 64:
        return ~dominance_matrix(pts).any(axis=0)
    # cull: the lexicographic minimum of the survivors is never dominated
    alive = np.ones(n, dtype=bool)
    mask = np.zeros(n, dtype=bool)
    order = np.lexsort(pts.T[::-1])
    for i in order:
        if not alive[i]:
            continue
        mask[i] = True
        dominated = np.all(pts[i] <= pts, axis=1) & np.any(pts[i] < pts, axis=1)
        alive &= ~dominated
    return mask


@dataclass(frozen=True)
class ParetoFront:
    """Mutually non-dominated points (minimization) and a reference point they all dominate."""

    points: np.ndarray
    reference: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float).reshape(-1, len(self.reference))
        ref = np.asarray(self.reference, dtype=float)
        if len(pts) and not pareto_mask(pts).all():
            raise ValueError("front points must be mutually non-dominated")
        if len(pts) and not np.all(pts < ref):
            raise ValueError("every front point must strictly dominate the reference point")
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "reference", ref)

    @classmethod
    def from_points(cls, points, reference) -> ParetoFront:
        """Keep the non-dominated subset of ``points`` that dominates ``reference``."""
        ref = np.asarray(reference, dtype=float)
        pts = np.asarray(points, dtype=float).reshape(-1, len(ref))
        pts = pts[np.all(pts < ref, axis=1)]
        pts = np.unique(pts, axis=0)
        return cls(pts[pareto_mask(pts)], ref)

    @property
    def n_objectives(self) -> int:
        return len(self.reference)


def _hv2d(pts: np.ndarray, ref: np.ndarray) -> float:
    order = np.argsort(pts[:, 0], kind="stable")
    area, best_y = 0.0, ref[1]
    xs = pts[order, 0]
    ys = pts[order, 1]
    for i in range(len(xs)):
        if ys[i] >= best_y:
            continue
        # horizontal slab [ys[i], best_y) is dominated from xs[i] to the reference
        area += (ref[0] - xs[i]) * (best_y - ys[i])
        best_y = ys[i]
    return float(area)


def _hv(pts: np.ndarray, ref: np.ndarray) -> float:
    if len(pts) == 0:
        return 0.0
    m = pts.shape[1]
    if m == 1:
        return float(ref[0] - pts[:, 0].min())
    if m == 2:
        return _hv2d(pts, ref)
    pts = pts[pareto_mask(pts)]
    pts = pts[np.argsort(pts[:, -1], kind="stable")]
    total = 0.0
    for i in range(len(pts)):
        p = pts[i]
        rest = np.maximum(pts[i + 1:], p)
        total += float(np.prod(ref - p)) - _hv(rest[pareto_mask(rest)] if len(rest) else rest, ref)
    return total


def hypervolume(front, reference=None) -> float:
    """Exact dominated hypervolume (minimization).

    ``front`` is a :class:`ParetoFront` or an array of points, in which case
    ``reference`` is required; dominated points are allowed and ignored.
    Uses a sweep in two dimensions and exclusive-volume recursion above.
    """
    if isinstance(front, ParetoFront):
        pts, ref = front.points, front.reference
    else:
        if reference is None:
            raise ValueError("reference point required")
        ref = np.asarray(reference, dtype=float)
        pts = np.asarray(front, dtype=float).reshape(-1, len(ref))
    if len(pts) and not np.all(pts < ref):
        raise ValueError("every point must strictly dominate the reference point")
    return _hv(pts, ref)
