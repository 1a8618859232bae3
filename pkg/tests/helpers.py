"""Independent oracles shared by the test modules.

These deliberately avoid the library's closed forms: the attack oracle
enumerates a grid of the lp ball, the sphere oracle scans dense
parametrizations. They are the "other route" the fast code is checked against.
"""

import math

import numpy as np


def grid_ball_min_margin(w, x, y, p, r, points_per_axis):
    """min over a grid of the lp ball of y * w.(x + delta), by enumeration."""
    w = np.asarray(w, dtype=float)
    x = np.asarray(x, dtype=float)
    d = w.size
    axes = np.linspace(-r, r, points_per_axis)
    mesh = np.meshgrid(*([axes] * d), indexing="ij")
    pts = np.stack([g.ravel() for g in mesh], axis=1)
    if not math.isinf(p):
        feasible = (np.abs(pts) ** p).sum(axis=1) <= r**p * (1.0 + 1e-12)
        pts = pts[feasible]
    return float((y * ((x[None, :] + pts) @ w)).min())


def grid_step(r, points_per_axis):
    return 2.0 * r / (points_per_axis - 1)


def random_unit_lq(rng, n, d, q):
    """n random unit-lq-norm vectors (exactly unit up to rounding)."""
    if q == 2:
        v = rng.standard_normal((n, d))
        return v / np.sqrt((v * v).sum(axis=1, keepdims=True))
    if q == 1:
        g = rng.exponential(1.0, size=(n, d)) * rng.choice([-1.0, 1.0], size=(n, d))
        return g / np.abs(g).sum(axis=1, keepdims=True)
    raise ValueError(q)


def central_difference(f, z, h=1e-6):
    return (f(z + h) - f(z - h)) / (2.0 * h)
