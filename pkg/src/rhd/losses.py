"""Surrogate losses with values, derivatives, constants, and inverses.

Three decreasing surrogates of the 0-1 loss:

    cross_entropy   log(1 + e^-z)                 convex, 1-Lipschitz, 1/4-smooth
    hinge           max(0, 1 - z)                 convex, 1-Lipschitz
    sigmoidal       e^(-z/sigma)        for z > 0
                    2 - e^(z/sigma)     for z <= 0   nonconvex, (1/sigma)-Lipschitz

All entry points accept scalars or numpy arrays of scores z.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

__all__ = [
    "LossSpec",
    "LossConstants",
    "loss_value",
    "loss_derivative",
    "loss_constants",
    "loss_inverse",
]

KINDS = ("cross_entropy", "hinge", "sigmoidal")


@dataclass(frozen=True)
class LossSpec:
    """Identity of a surrogate loss; sigmoidal carries its temperature sigma."""

    kind: str
    sigma: float | None = None

    def __post_init__(self):
        if self.kind not in KINDS:
            raise ValueError(f"unknown loss kind {self.kind!r}; expected one of {KINDS}")
        if self.kind == "sigmoidal":
            if self.sigma is None or not (float(self.sigma) > 0.0):
                raise ValueError("sigmoidal loss requires sigma > 0")
            object.__setattr__(self, "sigma", float(self.sigma))
        elif self.sigma is not None:
            raise ValueError(f"{self.kind} takes no sigma")

    def to_dict(self) -> dict:
        d = {"kind": self.kind}
        if self.sigma is not None:
            d["sigma"] = self.sigma
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "LossSpec":
        return cls(kind=d["kind"], sigma=d.get("sigma"))


@dataclass(frozen=True)
class LossConstants:
    lipschitz: float
    smoothness: float | None
    value_at_zero: float
    derivative_at_zero: float


def _ret(z_in, out):
    return float(out) if np.isscalar(z_in) or np.ndim(z_in) == 0 else out


def loss_value(spec: LossSpec, z):
    """ell(z); nonnegative and decreasing for every kind."""
    za = np.asarray(z, dtype=np.float64)
    if spec.kind == "cross_entropy":
        out = np.logaddexp(0.0, -za)
    elif spec.kind == "hinge":
        out = np.maximum(0.0, 1.0 - za)
    else:
        e = np.exp(-np.abs(za) / spec.sigma)
        out = np.where(za > 0.0, e, 2.0 - e)
    return _ret(z, out)


def loss_derivative(spec: LossSpec, z):
    """ell'(z), everywhere nonpositive.

    At the hinge kink z=1 the left subgradient -1 is returned. The sigmoidal
    derivative -e^(-|z|/sigma)/sigma is the common value of both one-sided
    limits at 0.
    """
    za = np.asarray(z, dtype=np.float64)
    if spec.kind == "cross_entropy":
        e = np.exp(-np.abs(za))
        out = np.where(za >= 0.0, -e / (1.0 + e), -1.0 / (1.0 + e))
    elif spec.kind == "hinge":
        out = np.where(za <= 1.0, -1.0, 0.0)
    else:
        out = -np.exp(-np.abs(za) / spec.sigma) / spec.sigma
    return _ret(z, out)


def loss_constants(spec: LossSpec) -> LossConstants:
    """Lipschitz constant L, smoothness M (None when the theory has none),
    ell(0), and ell'(0)."""
    if spec.kind == "cross_entropy":
        return LossConstants(1.0, 0.25, float(np.log(2.0)), -0.5)
    if spec.kind == "hinge":
        return LossConstants(1.0, None, 1.0, -1.0)
    return LossConstants(1.0 / spec.sigma, None, 1.0, -1.0 / spec.sigma)


def loss_inverse(spec: LossSpec, u):
    """The z with ell(z) = u.

    Valid ranges: cross_entropy u > 0; hinge u >= 0; sigmoidal 0 < u < 2.
    """
    ua = np.asarray(u, dtype=np.float64)
    if spec.kind == "cross_entropy":
        if np.any(ua <= 0.0):
            raise ValueError("cross-entropy values are strictly positive")
        # log(e^u - 1), split to stay finite for large u
        small = ua <= 0.5
        out = np.where(
            small,
            -np.log(np.expm1(np.where(small, ua, 0.5))),
            -(ua + np.log1p(-np.exp(-ua))),
        )
    elif spec.kind == "hinge":
        if np.any(ua < 0.0):
            raise ValueError("hinge values are nonnegative")
        out = 1.0 - ua
    else:
        if np.any((ua <= 0.0) | (ua >= 2.0)):
            raise ValueError("sigmoidal values lie in (0, 2)")
        out = np.where(
            ua <= 1.0,
            -spec.sigma * np.log(np.where(ua <= 1.0, ua, 1.0)),
            spec.sigma * np.log(np.where(ua > 1.0, 2.0 - ua, 1.0)),
        )
    return _ret(u, out)
