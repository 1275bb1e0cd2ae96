"""Landscapes, the inductive corrugation step, the basis fold that turns a
formal solution into a holonomic one near a compact set, and the parametric
wrapper that rides on the parameter-absorbing lift.

The step takes a formal solution F = (f, phi), a dual pair p = (pi, v) and a
landscape (C, K0, K1); it builds a loop family with base phi(x)v and average
Df(x)v inside the slice of the relation, corrugates:

    f_t(x)   = f(x) + t rho(x) Corr_{p,N}(gamma_t)(x)
    phi_t(x) = update(p, phi(x), gamma_x^{t rho(x)}(N pi(x))) + Rem_{p,N}(gamma^{t rho(.)})(x)

and returns the homotopy.  The remainder uses the cutoff-absorbed family so
the homotopy starts exactly at F and is exactly unchanged near C and outside
K1.
"""

from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from .corrugation import CorrugationJob, corrugated_derivative, corrugation, remainder, sup_norms
from .errors import BudgetExceeded, MarginExceeded
from .grids import Grid, GridRegion
from .jets import (
    DualPair,
    FamilyOfSections,
    JetSection,
    OneJet,
    Relation,
    bar_family,
    fd_jacobian,
    holonomy_residual,
    parametric_relation,
    psi_project,
    update,
    relation_slice,
)
from .loops import WarpedFamily, build_loop_family
from .smooth import plateau, smoothstep

__all__ = [
    "Landscape",
    "StepLandscape",
    "AcceptsWitness",
    "Cutoff",
    "Homotopy",
    "ConcatenatedHomotopy",
    "ParametricHomotopy",
    "accepts",
    "improve_step",
    "improve",
    "improve_parametric",
    "verify_conclusions",
    "NEAR_CELLS",
]

NEAR_CELLS = 2  # "near" a region always means this many cells of dilation


@dataclass
class Landscape:
    """Ambient data for one improvement pass: nested compacts and a frozen set."""

    grid: Grid
    k0: GridRegion
    k1: GridRegion
    c: Optional[GridRegion] = None
    box: Optional[tuple] = None

    def __post_init__(self):
        if not self.k0.is_empty and not self.k0.dilate(1).issubset(self.k1):
            raise ValueError("K0 dilated by one cell must sit inside K1")
        if self.box is None:
            lo = np.array([a[0] for a in self.grid.axes])
            hi = np.array(
                [
                    a[-1] + (self.grid.spacing[i] if self.grid.periodic[i] else 0.0)
                    for i, a in enumerate(self.grid.axes)
                ]
            )
            self.box = (lo, hi)


@dataclass
class StepLandscape:
    """Landscape plus the direction data of one step: a subspace inside the
    dual pair's hyperplane."""

    landscape: Landscape
    e_sub: list
    p: DualPair

    def __post_init__(self):
        for u in self.e_sub:
            if abs(self.p.pairing(u)) > 1e-10:
                raise ValueError("improved subspace must lie inside ker pi")


@dataclass
class AcceptsWitness:
    """Grid evidence that a landscape accepts a formal solution."""

    formal_ok: bool
    margin_min: float
    e_holonomy_residual: float
    c_holonomy_residual: float
    hol_tol: float

    @property
    def ok(self):
        return (
            self.formal_ok
            and self.margin_min > 0.0
            and self.e_holonomy_residual <= self.hol_tol
            and self.c_holonomy_residual <= self.hol_tol
        )


def accepts(R: Relation, F: JetSection, S: StepLandscape, hol_tol=1e-6):
    """Check the step preconditions on the landscape grid."""
    L = S.landscape
    formal_ok = True
    margin_min = np.inf
    for x in L.grid.nodes():
        jet = F.jet(x)
        if not R.member(jet):
            formal_ok = False
            margin_min = 0.0
            break
        margin_min = min(margin_min, float(R.margin(jet)))
    e_res = 0.0
    if S.e_sub:
        for x in L.k0.dilate(NEAR_CELLS).nodes():
            e_res = max(e_res, holonomy_residual(F, x, S.e_sub))
    c_res = 0.0
    if L.c is not None and not L.c.is_empty:
        full = list(np.eye(L.grid.dim))
        for x in L.c.dilate(NEAR_CELLS).nodes():
            c_res = max(c_res, holonomy_residual(F, x, full))
    return AcceptsWitness(
        formal_ok=formal_ok,
        margin_min=float(margin_min if formal_ok else 0.0),
        e_holonomy_residual=e_res,
        c_holonomy_residual=c_res,
        hol_tol=hol_tol,
    )


class Cutoff:
    """Smooth cutoff equal to 1 on a dilation of K0 with support inside K1."""

    def __init__(self, landscape: Landscape):
        L = landscape
        h = min(L.grid.spacing)
        self.inner = L.k0.dilate(1)
        outside = L.k1.complement()
        self.trivial = outside.is_empty or self.inner.is_empty
        self.constant = 1.0 if outside.is_empty else 0.0
        if not self.trivial:
            gap = min(self.inner.distance(x) for x in outside.nodes())
            self.d0 = 0.2 * h
            self.d1 = max(gap - 0.55 * h, 0.5 * h)
        self._h = h

    def rho(self, x):
        if self.trivial:
            return self.constant
        return float(plateau(self.inner.distance(x), self.d0, self.d1))

    def drho(self, x, step=1e-6):
        x = np.atleast_1d(np.asarray(x, dtype=float))
        if self.trivial:
            return np.zeros_like(x)
        g = np.zeros_like(x)
        for i in range(x.size):
            e = np.zeros_like(x)
            e[i] = step
            g[i] = (self.rho(x + e) - self.rho(x - e)) / (2.0 * step)
        return g


class Homotopy:
    """Time-indexed family of jet sections produced by one corrugation step."""

    def __init__(self, section: JetSection, S: StepLandscape, gamma, N, cutoff: Cutoff, metadata=None):
        self.section = section
        self.S = S
        self.p = S.p
        self.gamma = gamma
        self.N = float(N)
        self.cutoff = cutoff
        self.metadata = metadata or {}
        self._job = CorrugationJob(self.p, self.N, gamma)
        self._warped = {}

    def _warped_job(self, t):
        key = float(t)
        if key not in self._warped:
            fam = WarpedFamily(self.gamma, lambda x, _t=key: _t * self.cutoff.rho(x))
            self._warped[key] = CorrugationJob(self.p, self.N, fam)
        return self._warped[key]

    def eval(self, t, x):
        t = float(np.clip(t, 0.0, 1.0))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        rho = self.cutoff.rho(x)
        y = self.section.f(x) + t * rho * corrugation(self._job, x, t)
        z = self.N * self.p.pairing(x)
        w = self.gamma.eval(x, t * rho, np.array([z]))[0]
        phi = update(self.p, self.section.phi(x), w) + remainder(self._warped_job(t), x, 0.0)
        return y, phi

    def d_f_at(self, t, x):
        """Analytic derivative of the f-component via the derivative formula."""
        t = float(np.clip(t, 0.0, 1.0))
        x = np.atleast_1d(np.asarray(x, dtype=float))
        rho = self.cutoff.rho(x)
        D = self.section.d_f(x)
        if t == 0.0:
            return D
        corr = corrugation(self._job, x, t)
        D = D + t * np.outer(corr, self.cutoff.drho(x))
        if rho > 0.0:
            D = D + t * rho * corrugated_derivative(self._job, x, t)
        return D

    def section_at(self, t):
        t = float(np.clip(t, 0.0, 1.0))
        return JetSection(
            f=lambda x: self.eval(t, x)[0],
            phi=lambda x: self.eval(t, x)[1],
            df=lambda x: self.d_f_at(t, x),
        )


class ConcatenatedHomotopy:
    """Stage-by-stage composition with flat-ended time warps per stage."""

    def __init__(self, stages):
        if not stages:
            raise ValueError("need at least one stage")
        self.stages = list(stages)

    def eval(self, t, x):
        # stage i is built on top of stage i-1's final section, so evaluating
        # stage i at its warped local time already includes all earlier stages
        t = float(np.clip(t, 0.0, 1.0))
        n = len(self.stages)
        u = t * n
        i = min(int(np.floor(u)), n - 1)
        local = float(smoothstep(u - i))
        return self.stages[i].eval(local, x)

    def section_at(self, t):
        t = float(np.clip(t, 0.0, 1.0))
        n = len(self.stages)
        u = t * n
        i = min(int(np.floor(u)), n - 1)
        local = float(smoothstep(u - i))
        return self.stages[i].section_at(local)

    @property
    def metadata(self):
        return [s.metadata for s in self.stages]


def _choose_step_n(p, gamma, cutoff, points, eps, k_max=30):
    """Doubling search covering both the slice corrugation (the f-term) and
    the cutoff-absorbed remainder (the phi-term)."""
    N = 1.0
    for _ in range(k_max + 1):
        ok = True
        job = CorrugationJob(p, N, gamma)
        for t in (0.5, 1.0):
            warped = CorrugationJob(p, N, WarpedFamily(gamma, lambda x, _t=t: _t * cutoff.rho(x)))
            for xx in points:
                if np.linalg.norm(corrugation(job, xx, t)) > eps:
                    ok = False
                    break
                if np.linalg.norm(remainder(warped, xx, 0.0)) > eps:
                    ok = False
                    break
            if not ok:
                break
        if ok:
            return N
        N *= 2.0
    raise BudgetExceeded(f"no corrugation frequency up to 2^{k_max} met eps={eps}")


def improve_step(
    R: Relation,
    F: JetSection,
    S: StepLandscape,
    eps,
    hol_tol=1e-6,
    sup_stride=2,
    loops_kwargs=None,
):
    """One inductive improvement: returns the corrugation homotopy making F
    E' + Rv holonomic near K0 while staying inside R, unchanged near C and
    outside K1, and moving f by at most eps."""
    L = S.landscape
    p = S.p
    wit = accepts(R, F, S, hol_tol=hol_tol)
    if not wit.ok:
        raise MarginExceeded(f"landscape does not accept the section: {wit}")

    def beta(x):
        return np.asarray(F.phi(x), dtype=float) @ p.v

    def g(x):
        return np.asarray(F.d_f(x), dtype=float) @ p.v

    def omega(x):
        return relation_slice(R, F.jet(x), p)

    if L.c is not None and not L.c.is_empty:
        k_loops = GridRegion(L.grid, L.c.mask & L.k1.mask)
    else:
        k_loops = GridRegion.empty(L.grid)

    gamma = build_loop_family(
        omega, beta, g, k_loops, L.box, eps, L.grid, **(loops_kwargs or {})
    )

    # margin of the relation along the updated jets bounds the allowed
    # remainder and value drift
    m_star = np.inf
    s_probe = np.linspace(0.0, 1.0, 17)
    for x in L.grid.nodes():
        jet = F.jet(x)
        for t in (0.5, 1.0):
            vals = gamma.eval(x, t, s_probe)
            for w in vals:
                m = R.margin(OneJet(jet.x, jet.y, update(p, jet.phi, w)))
                m_star = min(m_star, float(m))
    eps_n = min(eps, m_star / 4.0) if m_star > 0 else eps

    cutoff = Cutoff(L)
    sup_points = L.grid.nodes()[::sup_stride]
    N = _choose_step_n(p, gamma, cutoff, sup_points, eps_n)

    meta = {"N": N, "eps": eps, "eps_n": eps_n, "margin_min": float(m_star), "witness": wit}
    return Homotopy(F, S, gamma, N, cutoff, metadata=meta)


def improve(R: Relation, F0: JetSection, L: Landscape, eps, basis=None, hol_tol=1e-6, **step_kwargs):
    """Fold the inductive step over a basis of directions.

    Each step uses the dual pair of the next direction, improves holonomy on
    the span of the previous ones, and spends an equal share of eps.
    """
    dim = L.grid.dim
    if basis is None:
        basis = [np.eye(dim)[i] for i in range(dim)]
    B = np.stack([np.asarray(b, dtype=float) for b in basis], axis=1)
    duals = np.linalg.pinv(B)
    n = len(basis)
    stages = []
    current = F0
    for i, e in enumerate(basis):
        S = StepLandscape(landscape=L, e_sub=[np.asarray(b, dtype=float) for b in basis[:i]], p=DualPair(duals[i], e))
        hom = improve_step(R, current, S, eps / n, hol_tol=hol_tol, **step_kwargs)
        stages.append(hom)
        current = hom.section_at(1.0)
    return ConcatenatedHomotopy(stages)


class ParametricHomotopy:
    """Read-back of a lifted homotopy: a family over time and parameter."""

    def __init__(self, bar_homotopy, dim_e, param_dim):
        self.bar = bar_homotopy
        self.dim_e = dim_e
        self.param_dim = param_dim

    def eval(self, t, pval, x):
        xp = np.concatenate([np.atleast_1d(np.asarray(x, dtype=float)), np.atleast_1d(np.asarray(pval, dtype=float))])
        y, phi = self.bar.eval(t, xp)
        jet = psi_project(OneJet(xp, y, phi), self.dim_e)
        return jet.y, jet.phi

    def family_at(self, t):
        def ev(pval, x):
            return self.eval(t, pval, x)

        return FamilyOfSections(dim_e=self.dim_e, param_dim=self.param_dim, eval=ev)


def improve_parametric(R: Relation, F0: FamilyOfSections, C, K, eps, grid=None, basis=None, **kwargs):
    """Parametric h-principle driver: lift the family over E x P, improve
    with corrugations along the E directions, read the family back.

    The P-block of the lifted derivative candidate is the actual parameter
    derivative, so only E-directions need improving for every parameter
    slice to become holonomic.
    """
    if grid is None:
        grid = K.grid
    Fbar = bar_family(F0)
    RP = parametric_relation(R, F0.param_dim)
    k1 = K.dilate(2)
    L = Landscape(grid=grid, k0=K, k1=k1, c=C)
    if basis is None:
        basis = [np.eye(grid.dim)[i] for i in range(F0.dim_e)]
    hom = improve(RP, Fbar, L, eps, basis=basis, **kwargs)
    return ParametricHomotopy(hom, F0.dim_e, F0.param_dim)


def verify_conclusions(
    hom,
    F0: JetSection,
    R: Relation,
    L: Landscape,
    eps,
    directions=None,
    t_values=None,
    hol_tol=1e-3,
    t0_tol=1e-9,
    frozen_tol=1e-12,
):
    """Residual report for the five step conclusions, all measured on grids.

    The holonomy check runs finite differences on the corrugated map itself,
    independent of the analytic derivative carried by the homotopy.
    """
    if t_values is None:
        t_values = np.linspace(0.0, 1.0, 11)
    nodes = L.grid.nodes()
    report = {}

    res0 = 0.0
    for x in nodes:
        y, phi = hom.eval(0.0, x)
        res0 = max(res0, float(np.linalg.norm(y - F0.f(x))), float(np.linalg.norm(phi - F0.phi(x))))
    report["starts_at_input"] = {"residual": res0, "tol": t0_tol, "passed": res0 <= t0_tol}

    member_ok = True
    margin_min = np.inf
    witness = None
    for x in nodes:
        for t in t_values:
            y, phi = hom.eval(t, x)
            jet = OneJet(x, y, phi)
            if not R.member(jet):
                member_ok = False
                witness = (float(t), np.array(x))
            else:
                margin_min = min(margin_min, float(R.margin(jet)))
    report["stays_in_relation"] = {
        "residual": 0.0 if member_ok else 1.0,
        "margin_min": float(margin_min) if member_ok else 0.0,
        "tol": 0.5,
        "passed": member_ok,
        "witness": witness,
    }

    frozen = L.k1.complement()
    if L.c is not None and not L.c.is_empty:
        frozen = frozen.union(GridRegion(L.grid, L.c.mask & L.k1.mask).dilate(NEAR_CELLS))
    res_frozen = 0.0
    for x in frozen.nodes():
        f0, p0 = F0.f(x), F0.phi(x)
        for t in t_values:
            y, phi = hom.eval(t, x)
            res_frozen = max(
                res_frozen, float(np.linalg.norm(y - f0)), float(np.linalg.norm(phi - p0))
            )
    report["frozen_outside"] = {
        "residual": res_frozen,
        "tol": frozen_tol,
        "passed": res_frozen <= frozen_tol,
    }

    res_c0 = 0.0
    for x in nodes:
        f0 = F0.f(x)
        for t in t_values:
            y, _ = hom.eval(t, x)
            res_c0 = max(res_c0, float(np.linalg.norm(y - f0)))
    report["value_drift"] = {"residual": res_c0, "tol": eps, "passed": res_c0 <= eps}

    if directions is None:
        directions = list(np.eye(L.grid.dim))
    sec1 = hom.section_at(1.0)
    probe = JetSection(f=sec1.f, phi=sec1.phi, df=None)  # force finite differences
    res_hol = 0.0
    for x in L.k0.nodes():
        res_hol = max(res_hol, holonomy_residual(probe, x, directions))
    report["holonomic_near_k0"] = {"residual": res_hol, "tol": hol_tol, "passed": res_hol <= hol_tol}

    report["all_passed"] = all(v["passed"] for k, v in report.items() if isinstance(v, dict))
    return report
