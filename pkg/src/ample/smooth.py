"""Closed-form C-infinity primitives (exp(-1/x) ramps, bumps, tents).

Every construction in the engine that needs a cutoff, a ramp or a bump is
assembled from these, so smoothness holds by construction and no separate
mollification pass is ever required.
"""

import numpy as np

__all__ = [
    "expm_ramp",
    "smoothstep",
    "transition",
    "bump",
    "tent",
    "plateau",
    "SmoothRamp",
]


def expm_ramp(u):
    """exp(-1/u) for u > 0, identically 0 for u <= 0. Vectorized."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    pos = u > 0
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        out[pos] = np.exp(-1.0 / u[pos])
    return out


def smoothstep(u):
    """Monotone C-infinity step: 0 for u <= 0, 1 for u >= 1, flat at both ends."""
    a = expm_ramp(u)
    b = expm_ramp(1.0 - np.asarray(u, dtype=float))
    with np.errstate(invalid="ignore"):
        s = np.where(a + b > 0, a / np.where(a + b > 0, a + b, 1.0), 0.0)
    return s


def transition(t, t0, t1):
    """Smooth 0 -> 1 transition supported on [t0, t1] (t1 > t0)."""
    return smoothstep((np.asarray(t, dtype=float) - t0) / (t1 - t0))


def bump(u):
    """C-infinity bump exp(-1/(1-u^2)) on (-1, 1), 0 outside. Peak value exp(-1)."""
    u = np.asarray(u, dtype=float)
    out = np.zeros_like(u)
    inside = np.abs(u) < 1.0
    with np.errstate(divide="ignore", over="ignore", under="ignore"):
        ui = u[inside]
        out[inside] = np.exp(-1.0 / (1.0 - ui * ui))
    return out


def tent(s):
    """Period-1 tent: 0 at s=0, 1 at s=1/2, back to 0 at s=1, flat at all three.

    All derivatives vanish at s in {0, 1/2, 1}, so the periodic extension is
    C-infinity despite the fold.
    """
    r = np.mod(np.asarray(s, dtype=float), 1.0)
    return smoothstep(1.0 - np.abs(2.0 * r - 1.0))


def plateau(d, d0, d1):
    """Smooth 1 -> 0 profile of a distance: 1 for d <= d0, 0 for d >= d1."""
    return 1.0 - transition(d, d0, d1)


class SmoothRamp:
    """Monotone C-infinity reparametrisation of [0,1] with flat ends.

    Maps [0, c] to 0 and [1-c, 1] to 1, stays within O(c) of the identity in
    between.  Built as the normalized cumulative integral of a smooth
    indicator, tabulated once on a dense grid; both the value and the
    derivative are exposed.
    """

    def __init__(self, c=0.06, samples=8192):
        if not 0 < c < 0.5:
            raise ValueError("plateau width must be in (0, 1/2)")
        self.c = float(c)
        t = np.linspace(0.0, 1.0, samples + 1)
        chi = transition(t, c / 2, 1.5 * c) * (1.0 - transition(t, 1.0 - 1.5 * c, 1.0 - c / 2))
        cum = np.concatenate([[0.0], np.cumsum((chi[1:] + chi[:-1]) * 0.5 * (t[1] - t[0]))])
        self._t = t
        self._chi = chi
        self._cum = cum / cum[-1]
        self._norm = cum[-1]

    def __call__(self, p):
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        return np.interp(p, self._t, self._cum)

    def derivative(self, p):
        p = np.clip(np.asarray(p, dtype=float), 0.0, 1.0)
        return np.interp(p, self._t, self._chi) / self._norm

    def max_identity_deviation(self, samples=2001):
        p = np.linspace(0.0, 1.0, samples)
        return float(np.max(np.abs(self(p) - p)))
