"""Affine bases, barycentric coordinates, hull certificates, and grid
flood fill for connected components of open sets.

The "surrounds" predicate is deliberately stricter than hull-interior
membership: it demands an affine basis drawn from the given points giving
the target strictly positive coordinates, and the vertices of a square
around its center show the two notions genuinely differ.
"""

import itertools
from collections import deque
from dataclasses import dataclass

import numpy as np
from scipy.optimize import nnls

from .errors import SeedOutside, SingularBasis
from .grids import Grid, GridRegion

__all__ = [
    "AffineBasis",
    "GridComponent",
    "barycentric_coords",
    "is_interior_of_hull",
    "surrounds",
    "caratheodory_select",
    "affine_weights",
    "flood_fill_component",
]

DET_FLOOR = 1e-10
EXHAUSTIVE_LIMIT = 12  # hull feasibility is exact up to this many points
_COMBO_BUDGET = 2_000_000


def _affine_matrix(points):
    """Columns (p_i, 1); the basis test is |det| of this square matrix."""
    pts = np.asarray(points, dtype=float)
    return np.vstack([pts.T, np.ones(len(pts))])


@dataclass(frozen=True)
class AffineBasis:
    """d+1 affinely independent points of a d-dimensional space."""

    points: np.ndarray

    def __post_init__(self):
        pts = np.asarray(self.points, dtype=float)
        if pts.ndim != 2 or pts.shape[0] != pts.shape[1] + 1:
            raise ValueError("need d+1 points in dimension d")
        object.__setattr__(self, "points", pts)
        if abs(np.linalg.det(_affine_matrix(pts))) <= DET_FLOOR:
            raise SingularBasis("points are affinely dependent")

    @property
    def dim(self):
        return self.points.shape[1]

    def matrix(self):
        return _affine_matrix(self.points)


def barycentric_coords(basis: AffineBasis, q):
    """Weights w with sum w_i p_i = q and sum w_i = 1, by one dense solve."""
    q = np.asarray(q, dtype=float).ravel()
    M = basis.matrix()
    if abs(np.linalg.det(M)) <= DET_FLOOR:
        raise SingularBasis("basis matrix is numerically singular")
    return np.linalg.solve(M, np.append(q, 1.0))


def is_interior_of_hull(basis: AffineBasis, q, mu):
    """True iff every barycentric coordinate of q is at least mu (> 0)."""
    if mu <= 0:
        raise ValueError("mu must be positive")
    return bool(np.all(barycentric_coords(basis, q) >= mu))


def surrounds(points, v, mu=1e-6):
    """First affine basis among `points` giving v coordinates >= mu.

    Scans (d+1)-subsets in lexicographic index order for determinism and
    returns (indices, coords), or None when no subset qualifies.  Absence is
    a value, not an error: a loop through the vertices of a square never
    surrounds the center even though the center is in the hull.
    """
    pts = np.asarray(points, dtype=float)
    v = np.asarray(v, dtype=float).ravel()
    n, d = pts.shape
    if n < d + 1:
        return None
    from math import comb

    if comb(n, d + 1) > _COMBO_BUDGET:
        raise ValueError("too many candidate subsets; reduce the point set first")
    target = np.append(v, 1.0)
    for idx in itertools.combinations(range(n), d + 1):
        M = _affine_matrix(pts[list(idx)])
        if abs(np.linalg.det(M)) <= DET_FLOOR:
            continue
        w = np.linalg.solve(M, target)
        if np.all(w >= mu):
            return tuple(idx), w
    return None


def affine_weights(points, v):
    """Least-squares affine combination of `points` hitting v.

    Returns (weights, residual) where residual is |sum w_i p_i - v| plus the
    affine defect |sum w_i - 1|.
    """
    pts = np.asarray(points, dtype=float)
    v = np.asarray(v, dtype=float).ravel()
    A = _affine_matrix(pts)
    b = np.append(v, 1.0)
    w, *_ = np.linalg.lstsq(A, b, rcond=None)
    return w, float(np.linalg.norm(A @ w - b))


def _reduce_support(pts, w, idx, tol=1e-12):
    """Classic support reduction: drop points until at most d+1 carry weight."""
    d = pts.shape[1]
    idx = list(idx)
    w = np.asarray(w, dtype=float).copy()
    while len(idx) > d + 1:
        A = _affine_matrix(pts[idx])
        # nontrivial affine dependence among the support points
        _, _, vt = np.linalg.svd(A)
        lam = vt[-1]
        if np.max(lam) <= 0:
            lam = -lam
        ratios = [w[i] / lam[i] for i in range(len(idx)) if lam[i] > tol]
        if not ratios:
            break
        t = min(ratios)
        w = w - t * lam
        keep = w > tol
        idx = [idx[i] for i in range(len(idx)) if keep[i]]
        w = w[keep]
    return idx, w


def caratheodory_select(points, v, tol=1e-9):
    """Indices of at most d+1 points whose convex hull contains v, or None.

    Up to EXHAUSTIVE_LIMIT points the search is exact: subsets are scanned by
    increasing size, lexicographically within each size, and the first
    feasible one wins.  Larger instances fall back to nonnegative least
    squares followed by support reduction.
    """
    pts = np.asarray(points, dtype=float)
    v = np.asarray(v, dtype=float).ravel()
    n, d = pts.shape
    scale = 1.0 + np.linalg.norm(v)

    if n <= EXHAUSTIVE_LIMIT:
        for k in range(1, d + 2):
            for idx in itertools.combinations(range(n), k):
                w, res = affine_weights(pts[list(idx)], v)
                if res <= tol * scale and np.all(w >= -1e-12):
                    return tuple(idx)
        return None

    A = _affine_matrix(pts)
    A = A * np.append(np.ones(d), scale)[:, None]  # balance the affine row
    b = np.append(v, scale)
    w, rnorm = nnls(A, b)
    if rnorm > tol * scale:
        return None
    total = w.sum()
    if total <= 0:
        return None
    w = w / total
    support = [i for i in range(n) if w[i] > 1e-12]
    support, wred = _reduce_support(pts, w[support], support)
    _, res = affine_weights(pts[support], v)
    if res > tol * scale:
        return None
    return tuple(sorted(support))


@dataclass
class GridComponent:
    """Axis-connected set of grid nodes satisfying a membership predicate."""

    grid: Grid
    h: float
    box: tuple
    region: GridRegion

    def points(self):
        return self.region.nodes()

    def count(self):
        return self.region.count()

    def contains(self, x):
        return self.region.contains(x)


def flood_fill_component(member, seed, box, h):
    """Maximal axis-connected grid component containing (the node nearest) seed.

    box is a pair (lo, hi); nodes are lo + k*h per axis.  Raises SeedOutside
    when member(seed) fails, or when no node within one cell of the seed
    satisfies the predicate.
    """
    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in box)
    if h <= 0:
        raise ValueError("h must be positive")
    seed = np.atleast_1d(np.asarray(seed, dtype=float))
    if not member(seed):
        raise SeedOutside("seed does not satisfy the membership predicate")
    if np.any(seed < lo - 1e-12) or np.any(seed > hi + 1e-12):
        raise SeedOutside("seed lies outside the box")

    counts = np.maximum(1, np.floor((hi - lo) / h + 1e-9).astype(int)) + 1
    axes = [lo[i] + h * np.arange(counts[i]) for i in range(len(lo))]
    grid = Grid(axes)
    shape = grid.shape
    dim = grid.dim

    start = tuple(
        int(min(max(round((seed[i] - lo[i]) / h), 0), shape[i] - 1)) for i in range(dim)
    )
    candidates = [start]
    # the nearest node can just miss an open set; look one cell around
    for off in itertools.product((-1, 0, 1), repeat=dim):
        nb = tuple(start[i] + off[i] for i in range(dim))
        if nb != start and all(0 <= nb[i] < shape[i] for i in range(dim)):
            candidates.append(nb)
    start_node = None
    for cand in candidates:
        if member(grid.node(cand)):
            start_node = cand
            break
    if start_node is None:
        raise SeedOutside("no grid node near the seed satisfies the predicate")

    mask = np.zeros(shape, dtype=bool)
    seen = np.zeros(shape, dtype=bool)
    queue = deque([start_node])
    seen[start_node] = True
    mask[start_node] = True
    while queue:
        cur = queue.popleft()
        for ax in range(dim):
            for step in (-1, 1):
                nb = list(cur)
                nb[ax] += step
                if not 0 <= nb[ax] < shape[ax]:
                    continue
                nb = tuple(nb)
                if seen[nb]:
                    continue
                seen[nb] = True
                if member(grid.node(nb)):
                    mask[nb] = True
                    queue.append(nb)
    return GridComponent(grid=grid, h=float(h), box=(lo, hi), region=GridRegion(grid, mask))
