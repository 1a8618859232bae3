"""Robust error and robust surrogate loss evaluation, OPT oracles, and
angle utilities.

The halfspace robust error under the exact lp attack is the fraction of
samples with y w.x - r||w||_q <= 0; a margin of exactly zero counts as an
error. OPT estimates here are always empirical minima over explicit direction
sets on a named sample, reported with a 3/sqrt(n) Monte Carlo half-width.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .geometry import AttackSpec, DegenerateModelError, lp_norm
from .losses import LossSpec, loss_constants, loss_derivative, loss_value
from .synthdata import Dataset, _row_lp_norms

__all__ = [
    "EvalReport",
    "OracleResult",
    "SandwichBounds",
    "AngleReport",
    "robust_margins",
    "robust_error",
    "robust_surrogate_loss",
    "evaluate",
    "oracle_opt",
    "opt_sandwich",
    "angle_and_sine",
]

GRID2D_DEFAULT_RESOLUTION = 2.0 * math.pi / 4096
RANDOM_SEARCH_DEFAULT_DIRECTIONS = 100_000
_DIRECTION_CHUNK = 1024


@dataclass
class EvalReport:
    clean_error: float
    robust_error: float
    robust_surrogate_loss: float
    attack: AttackSpec
    n_eval: int
    mc_halfwidth: float

    def to_dict(self) -> dict:
        return {
            "clean_error": self.clean_error,
            "robust_error": self.robust_error,
            "robust_surrogate_loss": self.robust_surrogate_loss,
            "attack": self.attack.to_dict(),
            "n_eval": self.n_eval,
            "mc_halfwidth": self.mc_halfwidth,
        }


@dataclass
class OracleResult:
    opt_estimate: float
    argmin_direction: np.ndarray
    method: str
    resolution: float

    def to_dict(self) -> dict:
        return {
            "opt_estimate": self.opt_estimate,
            "argmin_direction": [float(v) for v in self.argmin_direction],
            "method": self.method,
            "resolution": self.resolution,
        }


@dataclass
class SandwichBounds:
    lower: float
    upper: float

    def to_dict(self) -> dict:
        return {"lower": self.lower, "upper": self.upper}


@dataclass
class AngleReport:
    theta: float
    sin_theta: float

    def to_dict(self) -> dict:
        return {"theta": self.theta, "sin_theta": self.sin_theta}


def _nonzero_w(w) -> np.ndarray:
    arr = np.asarray(w, dtype=np.float64)
    if arr.ndim != 1:
        raise ValueError("w must be a 1-d vector")
    if not np.any(arr):
        raise DegenerateModelError("evaluation is undefined for the zero model")
    return arr


def robust_margins(w, ds: Dataset, attack: AttackSpec) -> np.ndarray:
    """Per-sample worst-case margins y_i w.x_i - r||w||_q."""
    arr = _nonzero_w(w)
    if arr.size != ds.d:
        raise ValueError(f"dimension mismatch: data has d={ds.d}, w has d={arr.size}")
    return ds.labels * (ds.features @ arr) - attack.r * lp_norm(arr, attack.q)


def robust_error(w, ds: Dataset, attack: AttackSpec) -> float:
    """Fraction of samples the attack can force to a nonpositive margin."""
    return float((robust_margins(w, ds, attack) <= 0.0).mean())


def robust_surrogate_loss(w, ds: Dataset, attack: AttackSpec, loss: LossSpec) -> float:
    """Mean of ell at the worst-case margins (the sup is exact by the
    closed-form attack). The zero model is admitted only at r = 0, where the
    margin degenerates to zero regardless."""
    arr = np.asarray(w, dtype=np.float64)
    if not np.any(arr):
        if attack.r > 0.0:
            raise DegenerateModelError("robust loss is undefined for the zero model at r > 0")
        margins = np.zeros(ds.n)
    else:
        margins = robust_margins(arr, ds, attack)
    return float(loss_value(loss, margins).mean())


def evaluate(w, ds: Dataset, attack: AttackSpec, loss: LossSpec) -> EvalReport:
    """Full evaluation record; self-checks the clean <= robust ordering and,
    for cross-entropy, the Markov bound err <= ell'(0)^-2 E[ell'(margin)^2]."""
    arr = _nonzero_w(w)
    margins = robust_margins(arr, ds, attack)
    clean = float((ds.labels * (ds.features @ arr) <= 0.0).mean())
    rerr = float((margins <= 0.0).mean())
    assert clean <= rerr, "perturbation removed errors; this cannot happen"
    if loss.kind == "cross_entropy":
        dz0 = loss_constants(loss).derivative_at_zero
        markov = float((loss_derivative(loss, margins) ** 2).mean()) / dz0 ** 2
        assert rerr <= markov * (1.0 + 1e-12) + 1e-15, "Markov bound violated"
    return EvalReport(
        clean_error=clean,
        robust_error=rerr,
        robust_surrogate_loss=robust_surrogate_loss(arr, ds, attack, loss),
        attack=attack,
        n_eval=ds.n,
        mc_halfwidth=3.0 / math.sqrt(ds.n),
    )


def _unit_lq_rows(V: np.ndarray, q: float) -> np.ndarray:
    """Scale or project rows of V onto the unit lq sphere.

    q in {1, 2} uses the exact Euclidean sphere projection (matching
    geometry.project_lq_sphere); other q scale radially, which is all a
    minimization oracle needs for full support."""
    if q == 1.0:
        A = np.abs(V)
        S = -np.sort(-A, axis=1)
        cs = np.cumsum(S, axis=1)
        k = np.arange(1, V.shape[1] + 1)
        ok = S > (cs - 1.0) / k
        rho = ok.shape[1] - 1 - np.argmax(ok[:, ::-1], axis=1)
        tau = (cs[np.arange(V.shape[0]), rho] - 1.0) / (rho + 1.0)
        tau = np.where(_row_lp_norms(V, 1.0) > 1.0, tau, 0.0)
        out = np.sign(V) * np.maximum(A - tau[:, None], 0.0)
        n1 = _row_lp_norms(out, 1.0)
        return out / n1[:, None]
    norms = _row_lp_norms(V, q)
    return V / norms[:, None]


def _direction_errors(ds: Dataset, dirs: np.ndarray, attack: AttackSpec) -> np.ndarray:
    """Empirical robust error of each unit-lq row of dirs, chunked."""
    out = np.empty(dirs.shape[0])
    signed = ds.labels[:, None] * ds.features
    norms = _row_lp_norms(dirs, attack.q)
    for lo in range(0, dirs.shape[0], _DIRECTION_CHUNK):
        hi = min(lo + _DIRECTION_CHUNK, dirs.shape[0])
        margins = signed @ dirs[lo:hi].T - attack.r * norms[lo:hi][None, :]
        out[lo:hi] = (margins <= 0.0).mean(axis=0)
    return out


def oracle_opt(ds: Dataset, attack: AttackSpec, method: str = "grid2d",
               resolution: float | None = None, seed: int = 0) -> OracleResult:
    """Brute-force robust-ERM oracle: the best unit-lq direction on the sample.

    grid2d (d=2 only) sweeps angles theta in [0, 2pi) at the given angular
    resolution (default 2pi/4096) and is deterministic. random_search scores
    `resolution` directions (default 1e5) obtained by pushing seeded Gaussian
    draws onto the unit lq sphere; exact uniformity is unnecessary for a
    minimization oracle. opt_estimate is by construction the empirical robust
    error of argmin_direction on ds.
    """
    if ds.n < 1:
        raise ValueError("empty dataset")
    if method == "grid2d":
        if ds.d != 2:
            raise ValueError("grid2d requires d = 2")
        step = GRID2D_DEFAULT_RESOLUTION if resolution is None else float(resolution)
        if not (0.0 < step < math.pi):
            raise ValueError("grid2d resolution must be an angle step in (0, pi)")
        angles = np.arange(0.0, 2.0 * math.pi, step)
        dirs = _unit_lq_rows(np.column_stack([np.cos(angles), np.sin(angles)]), attack.q)
        used = step
    elif method == "random_search":
        m = RANDOM_SEARCH_DEFAULT_DIRECTIONS if resolution is None else int(resolution)
        if m < 1:
            raise ValueError("random_search needs at least one direction")
        rng = np.random.default_rng(seed)
        dirs = _unit_lq_rows(rng.standard_normal((m, ds.d)), attack.q)
        used = float(m)
    else:
        raise ValueError(f"unknown oracle method {method!r}")
    errors = _direction_errors(ds, dirs, attack)
    best = int(np.argmin(errors))
    direction = dirs[best].copy()
    return OracleResult(
        opt_estimate=robust_error(direction, ds, attack),
        argmin_direction=direction,
        method=method,
        resolution=used,
    )


def opt_sandwich(ds: Dataset, teacher, attack: AttackSpec) -> SandwichBounds:
    """Empirical OPT bounds at a supplied unit-lq direction:

        lower = P_n[|w.x| <= r],   upper = lower + clean error of w,

    and lower <= robust_error(w) <= upper holds exactly on the sample (the
    band and the clean mistakes outside it partition the robust error event).
    """
    t = np.asarray(teacher, dtype=np.float64)
    nq = lp_norm(t, attack.q)
    if abs(nq - 1.0) > 1e-9:
        raise ValueError(f"teacher must have unit l{attack.q} norm, got {nq}")
    scores = ds.features @ t
    rt = attack.r * nq  # the same float the margin computation subtracts
    lower = float((np.abs(scores) <= rt).mean())
    clean = float((ds.labels * scores <= 0.0).mean())
    upper = lower + clean
    mid = robust_error(t, ds, attack)
    assert lower <= mid <= upper, "sandwich violated; partition argument broken"
    return SandwichBounds(lower=lower, upper=upper)


def angle_and_sine(w, w_star) -> AngleReport:
    """Angle between two nonzero vectors; sin computed from the norm of the
    orthogonal component, which stays accurate near zero angle."""
    a = np.asarray(w, dtype=np.float64)
    b = np.asarray(w_star, dtype=np.float64)
    na = lp_norm(a, 2.0)
    nb = lp_norm(b, 2.0)
    if na == 0.0 or nb == 0.0:
        raise DegenerateModelError("angle undefined for the zero vector")
    ua = a / na
    ub = b / nb
    c = min(1.0, max(-1.0, float(ua @ ub)))
    perp = ua - c * ub
    s = min(1.0, float(np.sqrt(perp @ perp)))
    return AngleReport(theta=float(np.arccos(c)), sin_theta=s)
