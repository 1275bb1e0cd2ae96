"""Period-1 loops and loop families: averages, round trips through waypoint
chains, surrounding-loop construction over flood-filled components, the
satisfied-or-refund interpolation, gluing, and the flagship family builder
that combines all of it.

Families evaluate as gamma(x, t, s_array) -> (n, dim_f); everything is built
from smooth primitives, so families are as smooth as their ingredients.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from . import convexity
from .errors import MarginExceeded, NotSurrounded
from .grids import GridRegion
from .smooth import smoothstep, tent, transition

__all__ = [
    "Loop",
    "as_loop",
    "average",
    "LoopFamily",
    "RoundTripFamily",
    "TranslatedFamily",
    "SatisfiedOrRefund",
    "ChainedFamily",
    "BlendedFamily",
    "round_trip_family",
    "surrounding_loop_at",
    "SurroundingLoopResult",
    "translate_family",
    "satisfied_or_refund",
    "glue_families",
    "surround_certificate",
    "build_loop_family",
    "verify_family",
]


class Loop:
    """Period-1 loop wrapping a vectorized callable R -> F."""

    def __init__(self, fn, dim=None):
        self.fn = fn
        self.dim = dim
        self._sample_cache = {}

    def __call__(self, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        out = np.asarray(self.fn(s), dtype=float)
        if out.ndim == 1:
            out = out.reshape(len(s), -1) if len(s) > 1 else out.reshape(1, -1)
        return out

    def samples(self, M):
        """M uniform samples over one period, cached."""
        if M not in self._sample_cache:
            self._sample_cache[M] = self(np.arange(M) / M)
        return self._sample_cache[M]


def as_loop(fn, dim=None):
    """Wrap a possibly scalar-only callable as a vectorized Loop."""
    probe = np.array([0.0, 0.25])
    try:
        out = np.asarray(fn(probe), dtype=float)
        if out.ndim >= 1 and out.shape[0] == 2:
            return Loop(fn, dim)
    except Exception:
        pass

    def vec(s):
        return np.stack([np.atleast_1d(np.asarray(fn(float(si)), dtype=float)) for si in s])

    return Loop(vec, dim)


def _simpson_weights(M):
    if M < 4 or M % 2:
        raise ValueError("Simpson panel count must be even and at least 4")
    w = np.ones(M + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return w / (3.0 * M)


def average(gamma, M=256):
    """Composite-Simpson average of a loop over one period (M panels)."""
    loop = gamma if isinstance(gamma, Loop) else as_loop(gamma)
    nodes = np.linspace(0.0, 1.0, M + 1)
    vals = loop(nodes)
    return _simpson_weights(M) @ vals


class LoopFamily:
    """Base class: a family (x, t) -> loop, evaluated at sample arrays s."""

    dim_f = None

    def eval(self, x, t, s):
        raise NotImplementedError

    def loop_at(self, x, t):
        return Loop(lambda s: self.eval(x, t, s), self.dim_f)

    def average_at(self, x, t, M=256):
        nodes = np.linspace(0.0, 1.0, M + 1)
        return _simpson_weights(M) @ self.eval(x, t, nodes)

    def integral_over(self, x, t, a, b, M=256):
        """int_a^b gamma_{x,t}(s) ds by composite Simpson (oriented)."""
        if b < a:
            return -self.integral_over(x, t, b, a, M=M)
        if b == a:
            return np.zeros(self.dim_f)
        nodes = np.linspace(a, b, M + 1)
        return (_simpson_weights(M) @ self.eval(x, t, nodes)) * (b - a)


class RoundTripFamily(LoopFamily):
    """Loop running out along a waypoint chain and back, grown by t.

    The underlying path P goes base -> w_0 -> ... -> w_m with a flat-ended
    smooth clock per segment; the loop is s -> P(t * tent(s)), so gamma^0 is
    the constant base loop, gamma^t(0) = base, and gamma^1 traverses the whole
    chain out and back.
    """

    def __init__(self, beta, waypoints, anchor=None):
        beta = np.asarray(beta, dtype=float).ravel()
        pts = [beta] + [np.asarray(w, dtype=float).ravel() for w in waypoints]
        if len(pts) < 2:
            raise ValueError("need at least one waypoint")
        self.points = np.stack(pts)
        self.dim_f = beta.size
        self.anchor = None if anchor is None else np.asarray(anchor, dtype=float)
        seg = np.linalg.norm(np.diff(self.points, axis=0), axis=1)
        seg = np.maximum(seg, 1e-9 * (seg.sum() + 1.0))
        self.breaks = np.concatenate([[0.0], np.cumsum(seg)]) / seg.sum()

    def path(self, u):
        """The chain path P: [0,1] -> F, vectorized."""
        u = np.clip(np.atleast_1d(np.asarray(u, dtype=float)), 0.0, 1.0)
        k = np.clip(np.searchsorted(self.breaks, u, side="right") - 1, 0, len(self.breaks) - 2)
        u0 = self.breaks[k]
        du = self.breaks[k + 1] - u0
        loc = smoothstep((u - u0) / du)
        return self.points[k] + loc[:, None] * (self.points[k + 1] - self.points[k])

    def waypoint_param(self, j):
        """Path parameter at which waypoint j is reached."""
        return float(self.breaks[j + 1])

    def eval(self, x, t, s):
        s = np.atleast_1d(np.asarray(s, dtype=float))
        return self.path(np.clip(t, 0.0, 1.0) * tent(s))


def round_trip_family(beta, waypoints):
    return RoundTripFamily(beta, waypoints)


class TranslatedFamily(LoopFamily):
    """gamma_x^t(s) = gamma0^t(s) + beta(x) - beta(x0): one model loop carried
    over a neighbourhood by translating its base point."""

    def __init__(self, gamma0, beta, x0=None):
        self.gamma0 = gamma0
        self.beta = beta
        if x0 is None:
            x0 = getattr(gamma0, "anchor", None)
        if x0 is None:
            raise ValueError("translate_family needs the anchor point x0")
        self.x0 = np.asarray(x0, dtype=float)
        self.beta0 = np.asarray(beta(self.x0), dtype=float).ravel()
        self.dim_f = gamma0.dim_f

    def eval(self, x, t, s):
        base = self.gamma0.eval(self.x0, t, s)
        return base + (np.asarray(self.beta(x), dtype=float).ravel() - self.beta0)


def translate_family(gamma0, beta, x0=None):
    return TranslatedFamily(gamma0, beta, x0)


def _rho_refund(u):
    """Piecewise-affine strength profile: 1 for u <= 1/2, 0 for u >= 1."""
    return float(np.clip(2.0 * (1.0 - u), 0.0, 1.0))


class SatisfiedOrRefund:
    """Contraction of the space of surrounding families.

    delta(tau) runs gamma0 on [0, 1-tau] and gamma1 on [1-tau, 1], each
    time-rescaled, with the homotopy grade damped so the vanishing slot
    degenerates to the constant base loop.  At every tau the t=1 loop contains
    a full copy of gamma0 or of gamma1, so it still surrounds.
    """

    def __init__(self, gamma0, gamma1):
        self.gamma0 = gamma0
        self.gamma1 = gamma1
        self.dim_f = gamma0.dim_f

    def eval(self, tau, x, t, s):
        s = np.mod(np.atleast_1d(np.asarray(s, dtype=float)), 1.0)
        if tau <= 0.0:
            return self.gamma0.eval(x, t, s)
        if tau >= 1.0:
            return self.gamma1.eval(x, t, s)
        cut = 1.0 - tau
        left = s <= cut
        out = np.empty((len(s), self.dim_f))
        if left.any():
            out[left] = self.gamma0.eval(x, _rho_refund(tau) * t, s[left] / cut)
        if (~left).any():
            out[~left] = self.gamma1.eval(x, _rho_refund(1.0 - tau) * t, (s[~left] - cut) / tau)
        return out

    def family_at(self, tau):
        outer = self

        class _Slice(LoopFamily):
            dim_f = outer.dim_f

            def eval(self, x, t, s):
                return outer.eval(tau, x, t, s)

        return _Slice()


def satisfied_or_refund(gamma0, gamma1):
    return SatisfiedOrRefund(gamma0, gamma1)


class ChainedFamily(LoopFamily):
    """Iterated satisfied-or-refund gluing, flattened for evaluation.

    Levels are (tau(x), family) pairs; level j occupies the slot of width
    tau_j * prod_{m>j}(1 - tau_m) at the tail end of the earlier slots, with
    homotopy grade damped by the refund profile exactly as in the nested
    construction.  Flattening keeps evaluation cost linear in the chain
    length instead of exponential.
    """

    def __init__(self, base, levels):
        self.base = base
        self.levels = list(levels)
        self.dim_f = base.dim_f

    def eval(self, x, t, s):
        s = np.mod(np.atleast_1d(np.asarray(s, dtype=float)), 1.0)
        taus = [float(np.clip(fn(x), 0.0, 1.0)) for fn, _ in self.levels]
        k = len(taus)
        widths = np.empty(k + 1)
        grades = np.empty(k + 1)
        suffix_w = 1.0
        suffix_g = 1.0
        for j in range(k - 1, -1, -1):
            widths[j + 1] = taus[j] * suffix_w
            grades[j + 1] = _rho_refund(1.0 - taus[j]) * suffix_g
            suffix_w *= 1.0 - taus[j]
            suffix_g *= _rho_refund(taus[j])
        widths[0] = suffix_w
        grades[0] = suffix_g
        bounds = np.cumsum(widths)
        fams = [self.base] + [fam for _, fam in self.levels]

        idx = np.searchsorted(bounds, s, side="right")
        idx = np.clip(idx, 0, k)
        out = np.empty((len(s), self.dim_f))
        for j in range(k + 1):
            sel = idx == j
            if not sel.any():
                continue
            if widths[j] <= 0.0:
                # zero-width slot can only be hit at a shared boundary, where
                # every family sits at its base point
                out[sel] = fams[j].eval(x, grades[j] * t, np.zeros(int(sel.sum())))
                continue
            a = bounds[j] - widths[j]
            local = (s[sel] - a) / widths[j]
            out[sel] = fams[j].eval(x, grades[j] * t, local)
        return out


class WarpedFamily(LoopFamily):
    """Family with the homotopy grade tied to the point: (x, _, s) -> gamma(x, t_map(x), s).

    Used to absorb a cutoff into the grade, e.g. t_map(x) = t * rho(x); the
    ignored grade argument keeps the LoopFamily interface.
    """

    def __init__(self, family, t_map):
        self.family = family
        self.t_map = t_map
        self.dim_f = family.dim_f

    def eval(self, x, t, s):
        return self.family.eval(x, float(self.t_map(x)), s)

    def average_at(self, x, t, M=256):
        return self.family.average_at(x, float(self.t_map(x)), M=M)

    def integral_over(self, x, t, a, b, M=256):
        return self.family.integral_over(x, float(self.t_map(x)), a, b, M=M)


def glue_families(gamma0, gamma1, cutoff):
    """Glue: equals gamma0 where cutoff = 0, gamma1 where cutoff = 1.

    cutoff is a smooth function of x into [0,1]; the transition runs through
    the satisfied-or-refund interpolation, so every intermediate loop still
    surrounds.
    """
    if isinstance(gamma0, ChainedFamily):
        return ChainedFamily(gamma0.base, gamma0.levels + [(cutoff, gamma1)])
    return ChainedFamily(gamma0, [(cutoff, gamma1)])


class BlendedFamily(LoopFamily):
    """Pointwise convex blend (1 - chi(x)) * beta(x) + chi(x) * family.

    Blending toward the base point preserves base-point and membership
    properties and moves the average by (1 - chi) * (beta - g) only.
    """

    def __init__(self, beta, family, chi):
        self.beta = beta
        self.family = family
        self.chi = chi
        self.dim_f = family.dim_f

    def eval(self, x, t, s):
        c = float(np.clip(self.chi(x), 0.0, 1.0))
        b = np.asarray(self.beta(x), dtype=float).ravel()
        s = np.atleast_1d(np.asarray(s, dtype=float))
        if c <= 0.0:
            return np.tile(b, (len(s), 1))
        vals = self.family.eval(x, t, s)
        if c >= 1.0:
            return vals
        return (1.0 - c) * b + c * vals

    def average_at(self, x, t, M=256):
        c = float(np.clip(self.chi(x), 0.0, 1.0))
        b = np.asarray(self.beta(x), dtype=float).ravel()
        if c <= 0.0:
            return b
        return (1.0 - c) * b + c * self.family.average_at(x, t, M=M)

    def integral_over(self, x, t, a, b_hi, M=256):
        c = float(np.clip(self.chi(x), 0.0, 1.0))
        base = np.asarray(self.beta(x), dtype=float).ravel()
        if c <= 0.0:
            return (b_hi - a) * base
        inner = self.family.integral_over(x, t, a, b_hi, M=M)
        if c >= 1.0:
            return inner
        return (1.0 - c) * (b_hi - a) * base + c * inner


# ---------------------------------------------------------------------------
# surrounding loops at a point


@dataclass
class SurroundingLoopResult:
    family: RoundTripFamily
    basis_points: np.ndarray
    coords: np.ndarray
    component: convexity.GridComponent
    h: float


def _candidate_order(points, target, cap=48):
    """Hull vertices plus nearest points, ordered by distance to the target."""
    pts = np.asarray(points, dtype=float)
    n, d = pts.shape
    idx = set()
    if n > d + 1:
        try:
            from scipy.spatial import ConvexHull

            idx.update(int(i) for i in ConvexHull(pts).vertices)
        except Exception:
            pass
    dists = np.linalg.norm(pts - np.asarray(target, dtype=float), axis=1)
    idx.update(int(i) for i in np.argsort(dists, kind="stable")[: max(cap - len(idx), d + 8)])
    order = sorted(idx, key=lambda i: (dists[i], i))
    return order[:cap]


def _grid_path(component, start, goal):
    """BFS node path inside the component between two member nodes."""
    region = component.region
    grid = component.grid
    mask = region.mask
    from collections import deque

    start = grid.nearest_index(start)
    goal = grid.nearest_index(goal)
    if not mask[start] or not mask[goal]:
        raise NotSurrounded("path endpoints left the component")
    prev = {start: None}
    q = deque([start])
    while q:
        cur = q.popleft()
        if cur == goal:
            break
        for ax in range(grid.dim):
            for step in (-1, 1):
                nb = list(cur)
                nb[ax] += step
                if not 0 <= nb[ax] < grid.shape[ax]:
                    continue
                nb = tuple(nb)
                if nb in prev or not mask[nb]:
                    continue
                prev[nb] = cur
                q.append(nb)
    if goal not in prev:
        raise NotSurrounded("component is not connected between path endpoints")
    path = []
    node = goal
    while node is not None:
        path.append(node)
        node = prev[node]
    return [grid.node(i) for i in reversed(path)]


def _simplify_polyline(points, tol=1e-12):
    """Drop repeated points and interior points of straight runs."""
    pts = [np.asarray(p, dtype=float) for p in points]
    dedup = [pts[0]]
    for p in pts[1:]:
        if np.linalg.norm(p - dedup[-1]) > tol:
            dedup.append(p)
    if len(dedup) <= 2:
        return dedup
    final = [dedup[0]]
    for i in range(1, len(dedup) - 1):
        d1 = dedup[i] - final[-1]
        d2 = dedup[i + 1] - dedup[i]
        n1, n2 = np.linalg.norm(d1), np.linalg.norm(d2)
        cosang = float(d1 @ d2) / (n1 * n2) if n1 > 0 and n2 > 0 else 1.0
        if abs(cosang - 1.0) > 1e-12:
            final.append(dedup[i])
    final.append(dedup[-1])
    return final


_SURROUND_FLOORS = (5e-2, 1e-2, 1e-3, 1e-6)


def surrounding_loop_at(omega_x, beta_x, g_x, box, h, max_refine=3):
    """Build a loop family at one point: based at beta_x, inside omega_x,
    with the t=1 loop surrounding g_x.

    Pipeline: flood-fill the component of omega_x containing beta_x, certify
    an affine basis around g_x among the component points (refining h when
    needed), connect the base to the basis by grid paths inside the
    component, and run a round trip through the result.
    """
    beta_x = np.asarray(beta_x, dtype=float).ravel()
    g_x = np.asarray(g_x, dtype=float).ravel()
    hcur = float(h)
    last_reason = "no certified affine basis"
    for _ in range(max_refine + 1):
        comp = convexity.flood_fill_component(omega_x, beta_x, box, hcur)
        pts = comp.points()
        if len(pts) >= g_x.size + 1:
            order = _candidate_order(pts, g_x)
            cand = pts[order]
            found = None
            for mu in _SURROUND_FLOORS:
                found = convexity.surrounds(cand, g_x, mu)
                if found is not None:
                    break
            if found is not None:
                sub_idx, coords = found
                basis_pts = cand[list(sub_idx)]
                waypoints = []
                cur = beta_x
                for b in basis_pts:
                    leg = _grid_path(comp, cur, b)
                    waypoints.extend(leg if not waypoints else leg[1:])
                    cur = b
                waypoints = _simplify_polyline([beta_x] + waypoints)[1:]
                fam = RoundTripFamily(beta_x, waypoints, anchor=None)
                # the loop must actually stay inside omega_x
                svals = fam.eval(None, 1.0, np.linspace(0.0, 1.0, 129))
                if all(omega_x(v) for v in svals):
                    return SurroundingLoopResult(
                        family=fam,
                        basis_points=basis_pts,
                        coords=coords,
                        component=comp,
                        h=hcur,
                    )
                last_reason = "loop samples left omega"
        hcur *= 0.5
    raise NotSurrounded(f"surrounding loop search failed at h={hcur * 2}: {last_reason}")


def surround_certificate(loop, g, M=64, floors=_SURROUND_FLOORS):
    """Sampling-based surround certificate for a single loop.

    Returns (s_centers, coords, basis_points) where the loop values at the
    s_centers form an affine basis giving g strictly positive coordinates.
    """
    loop = loop if isinstance(loop, Loop) else as_loop(loop)
    g = np.asarray(g, dtype=float).ravel()
    svals = np.arange(M) / M
    pts = loop(svals)
    order = _candidate_order(pts, g)
    cand = pts[order]
    found = None
    for mu in floors:
        found = convexity.surrounds(cand, g, mu)
        if found is not None:
            break
    if found is None:
        raise NotSurrounded("loop does not surround the target on samples")
    sub_idx, coords = found
    sample_idx = [order[i] for i in sub_idx]
    pairs = sorted(zip(sample_idx, range(len(sub_idx))))
    s_centers = np.array([svals[i] for i, _ in pairs])
    perm = [j for _, j in pairs]
    return s_centers, coords[perm], cand[list(sub_idx)][perm]


# ---------------------------------------------------------------------------
# the flagship: families over a whole landscape


_RING_POINTS_2D = 8


def _star_waypoints(dim, rng_points=_RING_POINTS_2D):
    """Unit-scale waypoints surrounding the origin: a circle in a coordinate
    plane when dim = 2, regular-simplex vertices in higher dimension."""
    if dim == 2:
        ang = 2.0 * np.pi * np.arange(rng_points) / rng_points
        return np.stack([np.cos(ang), np.sin(ang)], axis=1)
    # regular simplex: d+1 unit vectors with pairwise equal angles
    eye = np.eye(dim + 1)
    pts = eye - eye.mean(axis=0)
    q, _ = np.linalg.qr(pts.T)
    verts = (pts @ q[:, :dim])
    return verts / np.linalg.norm(verts, axis=1)[:, None]


def _region_distance(grid, region, x):
    return region.distance(x)


def build_loop_family(
    omega,
    beta,
    g,
    K,
    box,
    eps,
    grid,
    value_h=None,
    g_beta_tol=1e-7,
    patch_stride=None,
    verbose=False,
):
    """Smooth family of loops with prescribed values, base points and averages.

    At every x the loops live in omega(x), are based at beta(x), degenerate to
    the base when t = 0 or s = 0 or x is near K, and at t = 1 average exactly
    to g(x) at the grid nodes.  Requires g = beta near K and g(x) inside the
    hull of the component of omega(x) containing beta(x).

    Construction: a small star loop around the base near K (its size set by a
    sampled safety-ball check), translated surrounding loops on a finite patch
    cover elsewhere, glued by satisfied-or-refund with smooth cutoffs,
    reparametrised to fix averages, and finally blended back to the base
    point near K.
    """
    from . import reparam  # deferred: reparam builds on loops

    lo, hi = (np.atleast_1d(np.asarray(b, dtype=float)) for b in box)
    nodes = grid.nodes()
    dim_f = np.asarray(beta(nodes[0]), dtype=float).size
    hx = min(grid.spacing)

    for x in nodes:
        if not omega(x)(np.asarray(beta(x), dtype=float).ravel()):
            raise MarginExceeded(f"beta({x}) is not in omega")

    have_k = K is not None and not K.is_empty
    base_fam = None
    chi = None
    near_k_region = None
    if have_k:
        guard = K.dilate(6)
        worst = max(
            float(np.linalg.norm(np.asarray(g(x), dtype=float) - np.asarray(beta(x), dtype=float)))
            for x in guard.nodes()
        )
        if worst > g_beta_tol:
            raise ValueError(
                f"g must agree with beta near K (max deviation {worst:.3e} on the 6-cell dilation)"
            )
        # sampled safety ball: beta(x) + 2 delta * direction stays in omega
        dirs = _star_waypoints(dim_f)
        delta = float(eps)
        ok = False
        for _ in range(24):
            ok = all(
                omega(x)(np.asarray(beta(x), dtype=float).ravel() + 2.0 * delta * d)
                for x in guard.nodes()
                for d in dirs
            )
            if ok:
                break
            delta *= 0.5
        if not ok:
            raise MarginExceeded("no safety radius found for the near-K loop")
        star = RoundTripFamily(np.zeros(dim_f), 0.5 * delta * _star_waypoints(dim_f))
        star.anchor = np.zeros_like(nodes[0])

        class _NearK(LoopFamily):
            def __init__(self):
                self.dim_f = dim_f

            def eval(self, x, t, s):
                return star.eval(None, t, s) + np.asarray(beta(x), dtype=float).ravel()

        base_fam = _NearK()
        near_k_region = K.dilate(2)
        exclusion = K.dilate(4)
        k2 = near_k_region

        def chi(x, _k2=k2, _h=hx):
            return float(transition(_k2.distance(x), 0.25 * _h, 1.9 * _h))

    else:
        exclusion = None

    # --- patch cover -------------------------------------------------------
    if patch_stride is None:
        patch_stride = max(1, int(np.ceil(max(grid.shape) / 7)))
    centers = []
    it = np.ndindex(*grid.shape)
    for idx in it:
        if all(idx[i] % patch_stride == 0 for i in range(grid.dim)):
            x = grid.node(idx)
            if exclusion is not None and exclusion.contains(x):
                continue
            centers.append(x)
    r_core = 0.85 * patch_stride * max(grid.spacing) * np.sqrt(grid.dim)
    r_outer = 1.6 * r_core

    if value_h is None:
        scale = max(
            1.0,
            max(
                float(np.linalg.norm(np.asarray(g(x), dtype=float) - np.asarray(beta(x), dtype=float)))
                for x in nodes
            ),
        )
        value_h = scale / 8.0

    def value_box(c):
        b = np.asarray(beta(c), dtype=float).ravel()
        gg = np.asarray(g(c), dtype=float).ravel()
        lo_v = np.minimum(b, gg)
        hi_v = np.maximum(b, gg)
        pad = 0.6 * np.linalg.norm(hi_v - lo_v) + 4.0 * value_h
        return lo_v - pad, hi_v + pad

    fam = base_fam
    for c in centers:
        res = surrounding_loop_at(omega(c), beta(c), g(c), value_box(c), value_h)
        res.family.anchor = c
        patch = TranslatedFamily(res.family, beta, x0=c)

        def tau(x, _c=c):
            d2 = 0.0
            for i in range(grid.dim):
                di = grid.axis_delta(i, x[i] - _c[i])
                d2 += di * di
            return float(1.0 - transition(np.sqrt(d2), r_core, r_outer))

        fam = patch if fam is None else glue_families(fam, patch, tau)

    if fam is None:
        raise MarginExceeded("empty patch cover: K fills the whole grid")

    # --- fix averages, then pin the family to the base point near K --------
    fam = reparam.reparametrize_family(fam, g, grid)
    if have_k:
        fam = BlendedFamily(beta, fam, chi)
    return fam


def verify_family(family, omega, beta, g, grid, K=None, t_count=9, s_count=65, avg_m=256):
    """Residual report for the three loop-family guarantees on a grid."""
    t_vals = np.linspace(0.0, 1.0, t_count)
    s_vals = np.linspace(0.0, 1.0, s_count)
    base_res = 0.0
    member_ok = True
    avg_res = 0.0
    near_res = 0.0
    near = K.dilate(2) if K is not None and not K.is_empty else None
    for x in grid.nodes():
        b = np.asarray(beta(x), dtype=float).ravel()
        pred = omega(x)
        for t in t_vals:
            vals = family.eval(x, t, s_vals)
            member_ok = member_ok and all(pred(v) for v in vals)
            base_res = max(base_res, float(np.linalg.norm(vals[0] - b)))
            if near is not None and near.contains(x):
                near_res = max(near_res, float(np.max(np.linalg.norm(vals - b, axis=1))))
        vals0 = family.eval(x, 0.0, s_vals)
        base_res = max(base_res, float(np.max(np.linalg.norm(vals0 - b, axis=1))))
        avg_res = max(
            avg_res,
            float(np.linalg.norm(family.average_at(x, 1.0, M=avg_m) - np.asarray(g(x), dtype=float))),
        )
    return {
        "membership_ok": member_ok,
        "base_point_residual": base_res,
        "average_residual": avg_res,
        "near_k_residual": near_res,
    }
