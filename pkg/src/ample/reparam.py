"""Delta mollifiers and circle reparametrisations: monotone degree-1 maps
phi with phi(0) = 0 making a loop's average hit a prescribed target.

phi is recovered from its inverse, the cumulative integral of a positive
density (a weighted mollifier sum plus a small uniform leak).  Composed
loops are integrated by the exact substitution
int gamma(phi(s)) ds = int gamma(u) rho(u) du / total,
which keeps every downstream quadrature on the well-resolved u-side.
"""

import itertools
from collections import OrderedDict
from dataclasses import dataclass

import numpy as np

from .errors import DegenerateWeights, NoConvergence
from .loops import Loop, LoopFamily, as_loop, average, surround_certificate
from .smooth import bump, smoothstep

__all__ = [
    "DeltaMollifier",
    "mollifier_eval",
    "CircleReparam",
    "reparam_from_weights",
    "adjust_weights",
    "DensityField",
    "ReparametrizedFamily",
    "reparametrize_family",
]

WEIGHT_FLOOR = 1e-4
LEAK = 1e-3


def _bump_mass():
    u = np.linspace(-1.0, 1.0, 4097)
    vals = bump(u)
    w = np.ones(4097)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return float((w @ vals) * (2.0 / 4096) / 3.0)


_BUMP_MASS = _bump_mass()


class DeltaMollifier:
    """Smooth periodic unit-mass bump of half-width eta at a circle point."""

    def __init__(self, center, eta):
        if eta <= 0:
            raise ValueError("eta must be positive")
        self.center = float(center) % 1.0
        self.eta = float(eta)

    def __call__(self, s):
        s = np.asarray(s, dtype=float)
        d = np.abs((s - self.center + 0.5) % 1.0 - 0.5)
        return bump(d / self.eta) / (self.eta * _BUMP_MASS)


def mollifier_eval(m: DeltaMollifier, s):
    return m(s)


def _min_circular_gap(centers):
    c = np.sort(np.mod(np.asarray(centers, dtype=float), 1.0))
    gaps = np.diff(np.concatenate([c, [c[0] + 1.0]]))
    return float(gaps.min())


class CircleReparam:
    """Monotone circle map phi with phi(t+1) = phi(t) + 1 and phi(0) = 0.

    Built as the inverse of psi(t) = int_0^t rho, where rho is a positive
    unit-mass density.  psi is tabulated by cumulative Simpson at a
    resolution set by the sharpest density feature and inverted by a
    monotone-interpolation start plus Newton polish.
    """

    def __init__(self, density, feature=0.05, samples=None):
        self.density = density
        if samples is None:
            samples = max(8192, int(np.ceil(120.0 / max(feature, 1e-4) / 2.0)) * 2)
        n = samples
        t = np.arange(n + 1) / n
        rho = np.asarray(density(t), dtype=float)
        if np.any(rho <= 0):
            raise DegenerateWeights("density must be strictly positive")
        h = 1.0 / n
        cum = np.empty(n + 1)
        cum[0] = 0.0
        even = (h / 3.0) * (rho[0:-2:2] + 4.0 * rho[1:-1:2] + rho[2::2])
        cum[2::2] = np.cumsum(even)
        # odd nodes: integrate half a panel with the local quadratic
        cum[1::2] = cum[0:-1:2] + (h / 12.0) * (5.0 * rho[0:-1:2] + 8.0 * rho[1::2] - rho[2::2])
        self.total = float(cum[-1])
        self._t = t
        self._rho = rho
        self._psi = cum / self.total
        self._n = n

    def density_normalized(self, s):
        return np.asarray(self.density(np.mod(s, 1.0)), dtype=float) / self.total

    def psi(self, t):
        """The inverse map phi^-1 (degree-1 periodic)."""
        t = np.asarray(t, dtype=float)
        k = np.floor(t)
        r = t - k
        idx = np.minimum((r * self._n).astype(int), self._n - 1)
        t0 = self._t[idx]
        dt = r - t0
        # Gauss-2 correction from the nearest table node
        m1 = t0 + dt * (0.5 - 0.5 / np.sqrt(3.0))
        m2 = t0 + dt * (0.5 + 0.5 / np.sqrt(3.0))
        loc = 0.5 * dt * (np.asarray(self.density(m1), dtype=float) + np.asarray(self.density(m2), dtype=float)) / self.total
        return k + self._psi[idx] + loc

    def phi(self, s):
        s = np.asarray(s, dtype=float)
        k = np.floor(s)
        r = s - k
        t = np.interp(r, self._psi, self._t)
        for _ in range(3):
            res = self.psi(t) - r
            t = np.clip(t - res / self.density_normalized(t), 0.0, 1.0)
        return k + t

    def __call__(self, s):
        return self.phi(s)


def _mix_density(weights, centers, eta, lam=LEAK):
    mollifiers = [DeltaMollifier(c, eta) for c in centers]
    w = np.asarray(weights, dtype=float)

    def density(s):
        s = np.asarray(s, dtype=float)
        out = np.full(s.shape, lam)
        for wi, m in zip(w, mollifiers):
            out = out + wi * m(s)
        return out / (1.0 + lam)

    return density


def reparam_from_weights(weights, centers, eta=None, lam=LEAK):
    """Circle reparametrisation spending roughly time w_i at each center s_i.

    The inverse map integrates the weighted mollifier sum plus a uniform leak
    lam keeping it strictly increasing.
    """
    w = np.asarray(weights, dtype=float)
    centers = np.asarray(centers, dtype=float)
    if np.any(w < WEIGHT_FLOOR):
        raise DegenerateWeights(f"weights below floor {WEIGHT_FLOOR}")
    if abs(w.sum() - 1.0) > 1e-9:
        raise DegenerateWeights("weights must sum to 1")
    gap = _min_circular_gap(centers)
    if gap < 1e-9:
        raise DegenerateWeights("centers must be distinct mod 1")
    if eta is None:
        eta = gap / 4.0
    return CircleReparam(_mix_density(w, centers, eta, lam), feature=eta)


def _mollifier_dots(loop, centers, eta, panels=512):
    """a_i = int gamma(s) m_i(s) ds over each mollifier's support."""
    out = []
    for c in centers:
        m = DeltaMollifier(c, eta)
        nodes = np.linspace(c - eta, c + eta, panels + 1)
        w = np.ones(panels + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        w *= (2.0 * eta / panels) / 3.0
        out.append(w @ (loop(nodes) * m(nodes)[:, None]))
    return np.stack(out)


def adjust_weights(
    gamma,
    g,
    centers,
    w0,
    floor=WEIGHT_FLOOR,
    eta=None,
    lam=LEAK,
    tol=1e-8,
    max_iter=50,
):
    """Damped Newton on the simplex making average(gamma . phi_w) = g.

    Under the substitution identity the average is affine in w, so Newton
    lands in one or two steps; the floor keeps weights strictly positive and
    targets outside the hull of the sampled basis values surface as
    NoConvergence with the best residual seen.
    """
    loop = gamma if isinstance(gamma, Loop) else as_loop(gamma)
    g = np.asarray(g, dtype=float).ravel()
    centers = np.asarray(centers, dtype=float)
    k = len(centers)
    gap = _min_circular_gap(centers)
    if eta is None:
        eta = gap / 4.0

    a = _mollifier_dots(loop, centers, eta)  # (k, d)
    abar = average(loop, 2048)

    def project(w):
        w = np.maximum(w, floor)
        excess = w.sum() - 1.0
        slack = w - floor
        total = slack.sum()
        if total <= 0:
            raise DegenerateWeights("floor infeasible for this many centers")
        return w - excess * slack / total

    def residual(w):
        return (w @ a + lam * abar) / (1.0 + lam) - g

    w = project(np.asarray(w0, dtype=float))
    r = residual(w)
    best = (float(np.linalg.norm(r)), w.copy())
    J = np.vstack([a.T / (1.0 + lam), np.ones(k)])
    for _ in range(max_iter):
        if np.linalg.norm(r) <= tol * 0.25:
            return w
        rhs = np.append(-r, 0.0)
        try:
            delta = np.linalg.solve(J, rhs) if J.shape[0] == J.shape[1] else None
        except np.linalg.LinAlgError:
            delta = None
        if delta is None:
            delta, *_ = np.linalg.lstsq(J, rhs, rcond=None)
        step = 1.0
        improved = False
        for _ in range(12):
            wn = project(w + step * delta)
            rn = residual(wn)
            if np.linalg.norm(rn) < np.linalg.norm(r):
                w, r = wn, rn
                improved = True
                break
            step *= 0.5
        if np.linalg.norm(r) < best[0]:
            best = (float(np.linalg.norm(r)), w.copy())
        if not improved:
            break
    if best[0] <= tol:
        return best[1]
    raise NoConvergence(
        f"average residual {best[0]:.3e} after {max_iter} iterations",
        best_residual=best[0],
        best_value=best[1],
    )


# ---------------------------------------------------------------------------
# families of reparametrisations over a grid


@dataclass
class _NodeDensity:
    weights: np.ndarray
    centers: np.ndarray
    eta: float

    def density(self):
        return _mix_density(self.weights, self.centers, self.eta)


class DensityField:
    """Smoothly blended field of node densities over a tensor grid.

    Between nodes the densities themselves are mixed with smoothstep weights
    per axis, so the resulting family of circle maps is smooth in x and exact
    at the nodes.
    """

    def __init__(self, grid, node_densities):
        self.grid = grid
        self.nodes = list(node_densities)
        self._fns = [nd.density() for nd in self.nodes]
        self.eta_min = min(nd.eta for nd in self.nodes)

    def _corners(self, x):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        per_axis = []
        for i in range(self.grid.dim):
            a = self.grid.axes[i]
            n = len(a)
            h = self.grid.spacing[i]
            if self.grid.periodic[i]:
                z = ((x[i] - a[0]) / h) % n
                i0 = int(np.floor(z)) % n
                u = z - np.floor(z)
                i1 = (i0 + 1) % n
            else:
                z = np.clip((x[i] - a[0]) / h, 0.0, n - 1.0)
                i0 = min(int(np.floor(z)), n - 2) if n > 1 else 0
                u = z - i0
                i1 = min(i0 + 1, n - 1)
            wu = float(smoothstep(u))
            per_axis.append(((i0, 1.0 - wu), (i1, wu)))
        out = []
        for combo in itertools.product(*per_axis):
            wt = 1.0
            idx = []
            for i, (ij, wij) in enumerate(combo):
                wt *= wij
                idx.append(ij)
            if wt > 0.0:
                flat = int(np.ravel_multi_index(idx, self.grid.shape))
                out.append((flat, wt))
        return out

    def density_at(self, x):
        corners = self._corners(x)

        def density(s):
            s = np.asarray(s, dtype=float)
            out = np.zeros(s.shape)
            for flat, wt in corners:
                out = out + wt * self._fns[flat](s)
            return out

        return density


class ReparametrizedFamily(LoopFamily):
    """Loop family composed with a field of circle reparametrisations.

    Integrals over the loop parameter are computed by exact substitution on
    the underlying family, which keeps quadrature well-conditioned even for
    strongly concentrated densities.
    """

    def __init__(self, inner, field: DensityField, cache_size=8192):
        self.inner = inner
        self.field = field
        self.dim_f = inner.dim_f
        self._cache = OrderedDict()
        self._cache_size = cache_size
        # quadrature in u must resolve the sharpest mollifier
        self._m_unit = min(int(np.ceil(96.0 / self.field.eta_min / 1024.0)) * 1024, 65536)

    def reparam_at(self, x):
        key = np.atleast_1d(np.asarray(x, dtype=float)).tobytes()
        hit = self._cache.get(key)
        if hit is not None:
            self._cache.move_to_end(key)
            return hit
        rp = CircleReparam(self.field.density_at(x), feature=self.field.eta_min)
        self._cache[key] = rp
        if len(self._cache) > self._cache_size:
            self._cache.popitem(last=False)
        return rp

    def eval(self, x, t, s):
        rp = self.reparam_at(x)
        return self.inner.eval(x, t, rp.phi(np.atleast_1d(np.asarray(s, dtype=float))))

    def integral_over(self, x, t, a, b, M=4096):
        """int_a^b gamma(x, t, phi_x(s)) ds by substitution."""
        if b < a:
            return -self.integral_over(x, t, b, a, M=M)
        rp = self.reparam_at(x)
        ua, ub = float(rp.phi(a)), float(rp.phi(b))
        if ub <= ua:
            return np.zeros(self.dim_f)
        need = int(np.ceil((ub - ua) * self._m_unit / 1024.0)) * 1024
        M = max(M, need, 1024)
        nodes = np.linspace(ua, ub, M + 1)
        vals = self.inner.eval(x, t, nodes) * rp.density_normalized(nodes)[:, None]
        w = np.ones(M + 1)
        w[1:-1:2] = 4.0
        w[2:-1:2] = 2.0
        return (w @ vals) * ((ub - ua) / M) / 3.0

    def average_at(self, x, t, M=4096):
        return self.integral_over(x, t, 0.0, 1.0, M=M)


def reparametrize_family(
    family,
    g,
    grid,
    certificate_m=64,
    tol_grid=1e-6,
    tol_mid=1e-4,
    max_refine=2,
):
    """Reparametrise a surrounding family so t=1 averages equal g at the nodes.

    Per node: sample a surround certificate, solve for weights, build a
    mollifier density.  Between nodes densities are blended smoothly; cell
    midpoints are checked against tol_mid and the node grid is refined when
    the blend drifts too far.
    """
    work = grid
    for attempt in range(max_refine + 1):
        node_densities = []
        for x in work.nodes():
            gx = np.asarray(g(x), dtype=float).ravel()
            loop = family.loop_at(x, 1.0)
            centers, coords, _pts = surround_certificate(loop, gx, M=certificate_m)
            w0 = np.maximum(coords, WEIGHT_FLOOR)
            w0 = w0 / w0.sum()
            eta = _min_circular_gap(centers) / 4.0
            w = adjust_weights(loop, gx, centers, w0, eta=eta)
            node_densities.append(_NodeDensity(np.asarray(w), np.asarray(centers), eta))
        field = DensityField(work, node_densities)
        fam = ReparametrizedFamily(family, field)

        worst_node = 0.0
        for x in work.nodes():
            r = np.linalg.norm(fam.average_at(x, 1.0) - np.asarray(g(x), dtype=float).ravel())
            worst_node = max(worst_node, float(r))
        mids = _cell_midpoints(work)
        worst_mid = 0.0
        for x in mids:
            r = np.linalg.norm(fam.average_at(x, 1.0) - np.asarray(g(x), dtype=float).ravel())
            worst_mid = max(worst_mid, float(r))
        if worst_node <= tol_grid and worst_mid <= tol_mid:
            return fam
        if attempt == max_refine:
            raise NoConvergence(
                f"reparametrised averages off grid: node {worst_node:.2e}, mid {worst_mid:.2e}",
                best_residual=max(worst_node, worst_mid),
            )
        work = _refine_grid(work)
    raise AssertionError("unreachable")


def _cell_midpoints(grid):
    axes = []
    for i in range(grid.dim):
        a = grid.axes[i]
        if grid.periodic[i]:
            axes.append(a + grid.spacing[i] / 2.0)
        else:
            axes.append((a[:-1] + a[1:]) / 2.0 if len(a) > 1 else a)
    mesh = np.meshgrid(*axes, indexing="ij")
    return np.stack([m.ravel() for m in mesh], axis=-1)


def _refine_grid(grid):
    from .grids import Grid

    axes = []
    for i in range(grid.dim):
        a = grid.axes[i]
        h = grid.spacing[i]
        if grid.periodic[i]:
            axes.append(np.sort(np.concatenate([a, a + h / 2.0])))
        else:
            axes.append(np.sort(np.concatenate([a, (a[:-1] + a[1:]) / 2.0])) if len(a) > 1 else a)
    return Grid(axes, grid.periodic)
