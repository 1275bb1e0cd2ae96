"""The corrugation operator, its remainder, the exact derivative formula,
and the doubling search for the oscillation frequency N.

For a dual pair p = (pi, v) and a loop family gamma, the corrugation is

    (1/N) int_0^{N pi(x)} (gamma_{t,x}(s) - avg gamma_{t,x}) ds.

Full periods of the integrand cancel, so only the fractional part of
N pi(x) is ever integrated; its x-derivative is the rank-one term
pi (x) (gamma_{t,x}(N pi(x)) - avg) plus the corrugation of the family's
x-derivative.
"""

import math
from dataclasses import dataclass, field, replace
from typing import Callable, Optional

import numpy as np

from .errors import BudgetExceeded
from .jets import FD_SCALE, DualPair

__all__ = [
    "CorrugationJob",
    "quad_integral",
    "corrugation",
    "corrugation_direct",
    "remainder",
    "corrugated_derivative",
    "choose_N",
    "sup_norms",
]


def quad_integral(f, a, b, M):
    """Composite Simpson integral of a (possibly vector-valued) integrand."""
    if M < 4 or M % 2:
        raise ValueError("Simpson panel count must be even and at least 4")
    nodes = np.linspace(a, b, M + 1)
    try:
        vals = np.asarray(f(nodes), dtype=float)
        if vals.shape[0] != len(nodes):
            raise ValueError
    except (ValueError, TypeError):
        vals = np.stack([np.asarray(f(float(s)), dtype=float) for s in nodes])
    w = np.ones(M + 1)
    w[1:-1:2] = 4.0
    w[2:-1:2] = 2.0
    return np.tensordot(w, vals, axes=(0, 0)) * ((b - a) / M) / 3.0


@dataclass
class CorrugationJob:
    """Corrugation data: dual pair, frequency, loop family, optional analytic
    x-derivative of the family ((x, t, s_array) -> (n_s, dim_f, dim_e))."""

    p: DualPair
    N: float
    family: object
    dgamma_dx: Optional[Callable] = None
    avg_m: int = 512
    frac_m: int = 512
    _avg_cache: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if self.N <= 0:
            raise ValueError("N must be positive")

    def average_at(self, x, t):
        key = (np.atleast_1d(np.asarray(x, dtype=float)).tobytes(), float(t))
        hit = self._avg_cache.get(key)
        if hit is None:
            hit = self.family.average_at(x, t, M=self.avg_m)
            if len(self._avg_cache) > 20000:
                self._avg_cache.clear()
            self._avg_cache[key] = hit
        return hit


def _frac_split(job, x):
    z = job.N * job.p.pairing(x)
    k = math.floor(z)
    return z, k, z - k


def corrugation(job: CorrugationJob, x, t):
    """Value of the corrugation map at (x, t).

    Whole periods of gamma - avg integrate to zero, so only the fractional
    part of N pi(x) contributes.
    """
    _, _, r = _frac_split(job, x)
    avg = job.average_at(x, t)
    if r == 0.0:
        return np.zeros_like(avg)
    I = job.family.integral_over(x, t, 0.0, r, M=job.frac_m)
    return (I - r * avg) / job.N


def corrugation_direct(job: CorrugationJob, x, t, M=None):
    """Corrugation by direct quadrature over the full span [0, N pi(x)].

    Reference path for the periodicity reduction; M defaults to the density
    the reduction implicitly uses.
    """
    z, _, _ = _frac_split(job, x)
    if z == 0.0:
        return np.zeros(job.family.dim_f)
    if M is None:
        M = max(2048, 512 * int(np.ceil(abs(z))))
        M += M % 2
    avg = job.average_at(x, t)
    I = job.family.integral_over(x, t, 0.0, z, M=M)
    return (I - z * avg) / job.N


def remainder(job: CorrugationJob, x, t):
    """Corrugation of the family's x-derivative: the error term of the
    derivative formula.  Finite differences are used when no analytic
    derivative was supplied; the integral limits stay frozen at x."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    _, _, r = _frac_split(job, x)
    if r == 0.0:
        e_dim = x.size
        return np.zeros((job.family.dim_f, e_dim))

    if job.dgamma_dx is not None:
        def integrand(s):
            return np.asarray(job.dgamma_dx(x, t, np.atleast_1d(s)), dtype=float)

        avg_d = quad_integral(integrand, 0.0, 1.0, job.avg_m)
        I = quad_integral(integrand, 0.0, r, job.frac_m)
        return (I - r * avg_d) / job.N

    h = FD_SCALE * (1.0 + np.linalg.norm(x))
    cols = []
    for i in range(x.size):
        e = np.zeros_like(x)
        e[i] = h
        up = job.family.integral_over(x + e, t, 0.0, r, M=job.frac_m) - r * job.family.average_at(
            x + e, t, M=job.avg_m
        )
        dn = job.family.integral_over(x - e, t, 0.0, r, M=job.frac_m) - r * job.family.average_at(
            x - e, t, M=job.avg_m
        )
        cols.append((up - dn) / (2.0 * h))
    return np.stack(cols, axis=-1) / job.N


def corrugated_derivative(job: CorrugationJob, x, t):
    """Exact x-derivative of the corrugation map:
    pi (x) (gamma_{t,x}(N pi(x)) - avg) + remainder."""
    x = np.atleast_1d(np.asarray(x, dtype=float))
    z, _, _ = _frac_split(job, x)
    val = job.family.eval(x, t, np.array([z]))[0] - job.average_at(x, t)
    return np.outer(val, job.p.pi) + remainder(job, x, t)


def sup_norms(job: CorrugationJob, points, t_values):
    """Sup over a point/grade grid of |corrugation| and |remainder|_F."""
    sup_c = 0.0
    sup_r = 0.0
    for xx in points:
        for t in t_values:
            sup_c = max(sup_c, float(np.linalg.norm(corrugation(job, xx, t))))
            sup_r = max(sup_r, float(np.linalg.norm(remainder(job, xx, t))))
    return sup_c, sup_r


def choose_N(job: CorrugationJob, points, t_values, eps, n0=1.0, k_max=30):
    """Smallest N in the doubling sequence n0 * 2^k taming both sup norms.

    Doubling rather than bisection: the decay is only asymptotically
    monotone, and the target is just "large enough".
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    N = float(n0)
    for _ in range(k_max + 1):
        trial = replace(job, N=N, _avg_cache={})
        sup_c, sup_r = sup_norms(trial, points, t_values)
        if sup_c <= eps and sup_r <= eps:
            return N
        N *= 2.0
    raise BudgetExceeded(f"no N up to {n0}*2^{k_max} met eps={eps}")
