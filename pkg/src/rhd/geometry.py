"""Norms, Holder conjugacy, the exact lp attack, and lq sphere projections.

For a halfspace w and an lp ball of radius r, the worst-case perturbation of a
labeled point (x, y) has the closed form

    delta_j = -r * y * sgn(w_j) * |w_j|^(q-1) / ||w||_q^(q-1),

where q is the Holder conjugate of p. The perturbation does not depend on x,
and the perturbed functional margin is y w.x - r ||w||_q.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "AttackSpec",
    "DegenerateModelError",
    "UnsupportedCaseError",
    "holder_conjugate",
    "lp_norm",
    "dual_map",
    "perturbation_direction",
    "optimal_perturbation",
    "robust_margin",
    "project_lq_sphere",
]

INF = math.inf


class DegenerateModelError(ValueError):
    """An operation received an all-zero weight vector."""


class UnsupportedCaseError(ValueError):
    """A parameter combination the library deliberately does not cover."""


def _check_p(p: float) -> float:
    p = float(p)
    if math.isnan(p) or p < 1.0:
        raise ValueError(f"exponent must lie in [1, inf], got {p}")
    return p


def holder_conjugate(p: float) -> float:
    """Return q with 1/p + 1/q = 1; exact at the endpoints (1 <-> inf, 2 <-> 2)."""
    p = _check_p(p)
    if math.isinf(p):
        return 1.0
    if p == 1.0:
        return INF
    return p / (p - 1.0)


@dataclass(frozen=True)
class AttackSpec:
    """Perturbation geometry: the lp ball of radius r, with q derived.

    p may be math.inf; q always satisfies 1/p + 1/q = 1 with the endpoint
    conventions p=1 <-> q=inf and p=inf <-> q=1.
    """

    p: float
    r: float
    q: float = field(init=False)

    def __post_init__(self):
        p = _check_p(self.p)
        r = float(self.r)
        if math.isnan(r) or math.isinf(r) or r < 0.0:
            raise ValueError(f"radius must be a finite nonnegative real, got {r}")
        object.__setattr__(self, "p", p)
        object.__setattr__(self, "r", r)
        object.__setattr__(self, "q", holder_conjugate(p))

    def to_dict(self) -> dict:
        return {"p": "inf" if math.isinf(self.p) else self.p, "r": self.r}

    @classmethod
    def from_dict(cls, d: dict) -> "AttackSpec":
        return cls(p=float(d["p"]), r=float(d["r"]))


def _as_vector(v, name: str = "vector") -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1 or arr.size < 1:
        raise ValueError(f"{name} must be a 1-d array with at least one entry")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} must have finite entries")
    return arr


def lp_norm(v, p: float) -> float:
    """The lp norm of v; p=inf returns max |v_j|."""
    arr = _as_vector(v)
    p = _check_p(p)
    a = np.abs(arr)
    if math.isinf(p):
        return float(a.max())
    if p == 1.0:
        return float(a.sum())
    if p == 2.0:
        return float(np.sqrt(arr @ arr))
    m = float(a.max())
    if m == 0.0:
        return 0.0
    # scale by the max entry so a**p cannot overflow for large p
    return float(m * np.power(a / m, p).sum() ** (1.0 / p))


def dual_map(w, q: float) -> np.ndarray:
    """Map w to w_bar with components |w_j|^(q-1) sgn(w_j).

    Satisfies w . w_bar = ||w||_q^q. Defined for finite q only: at q = inf the
    attack degenerates to a single coordinate and is handled by
    optimal_perturbation directly.
    """
    arr = _as_vector(w, "w")
    q = float(q)
    if math.isinf(q):
        raise UnsupportedCaseError(
            "dual_map is undefined at q=inf; optimal_perturbation handles the "
            "p=1 attack by placing all mass on one coordinate"
        )
    _check_p(q)
    if q == 2.0:
        return arr.copy()
    if q == 1.0:
        return np.sign(arr)
    return np.sign(arr) * np.abs(arr) ** (q - 1.0)


def perturbation_direction(w, q: float) -> np.ndarray:
    """Unit-cost attack direction u with w . u = ||w||_q and ||u||_p = 1.

    The optimal perturbation is delta = -r * y * u. For q = inf the mass sits
    on one coordinate of maximal |w_j| (ties broken by lowest index).
    """
    arr = _as_vector(w, "w")
    if not np.any(arr):
        raise DegenerateModelError("all-zero weight vector has no attack direction")
    q = _check_p(q)
    if math.isinf(q):
        j = int(np.argmax(np.abs(arr)))  # argmax returns the lowest tied index
        u = np.zeros_like(arr)
        u[j] = np.sign(arr[j])
        return u
    if q == 1.0:
        return np.sign(arr)
    return dual_map(arr, q) / lp_norm(arr, q) ** (q - 1.0)


def _check_label(y) -> float:
    y = float(y)
    if y not in (1.0, -1.0):
        raise ValueError(f"label must be +1 or -1, got {y}")
    return y


def optimal_perturbation(w, y, spec: AttackSpec) -> np.ndarray:
    """The exact minimizer of y w.(x + delta) over the lp ball of radius r.

    The result is independent of x, satisfies ||delta||_p <= r, and attains
    y w.(x + delta) = y w.x - r ||w||_q.
    """
    y = _check_label(y)
    return (-spec.r * y) * perturbation_direction(w, spec.q)


def robust_margin(w, x, y, spec: AttackSpec) -> float:
    """Worst-case functional margin y w.x - r ||w||_q under the lp attack."""
    arr = _as_vector(w, "w")
    if not np.any(arr):
        raise DegenerateModelError("robust margin is undefined for the zero model")
    xv = _as_vector(x, "x")
    if xv.shape != arr.shape:
        raise ValueError(f"dimension mismatch: w has d={arr.size}, x has d={xv.size}")
    y = _check_label(y)
    return float(y * (arr @ xv) - spec.r * lp_norm(arr, spec.q))


def project_lq_sphere(v, q: int) -> np.ndarray:
    """Euclidean projection of v onto the unit lq sphere, q in {1, 2}.

    q=2 is radial normalization. q=1 with ||v||_1 >= 1 is sign-preserving
    soft-thresholding with the threshold chosen so the result sums to one in
    absolute value (the classic sorted simplex projection). For ||v||_1 < 1,
    which a projected-gradient loop never produces, v is scaled onto the
    sphere by 1/||v||_1 so the call stays total.
    """
    arr = _as_vector(v, "v")
    if int(q) != q or int(q) not in (1, 2):
        raise UnsupportedCaseError(f"sphere projection supports q in {{1, 2}}, got {q}")
    q = int(q)
    if q == 2:
        nrm = lp_norm(arr, 2.0)
        if nrm == 0.0:
            raise DegenerateModelError("cannot project the zero vector onto a sphere")
        return arr / nrm
    n1 = float(np.abs(arr).sum())
    if n1 == 0.0:
        raise DegenerateModelError("cannot project the zero vector onto a sphere")
    if n1 <= 1.0:
        return arr / n1
    a = np.sort(np.abs(arr))[::-1]
    cs = np.cumsum(a)
    k = np.arange(1, arr.size + 1)
    # largest k with a_k > (sum_{i<=k} a_i - 1)/k; such k exists since ||v||_1 > 1
    ok = a > (cs - 1.0) / k
    rho = int(np.nonzero(ok)[0].max())
    tau = (cs[rho] - 1.0) / (rho + 1.0)
    return np.sign(arr) * np.maximum(np.abs(arr) - tau, 0.0)
