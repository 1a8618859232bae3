"""Synthetic data generation and dataset persistence.

Families:

    gaussian_isotropic   rows i.i.d. standard normal (mean zero, identity
                         covariance)
    uniform_lp_ball      uniform on the unit lp ball; log-concave and isotropic
                         up to the scalar ball_covariance_scale(p, d)
    hard_margin          gaussian rows conditioned on |teacher.x| >= gamma0 by
                         rejection, labeled sgn(teacher.x)

Label noise is agnostic: features are never touched. random_flip flips each
label independently; boundary_flip deterministically flips the floor(rate*n)
correctly-labeled points closest to the teacher boundary, which concentrates
the damage where it hurts robust accuracy most.

File format (UTF-8, LF): a header line

    rhd v1 n=<n> d=<d> p=<p|none> bound=<float|none>

followed by n rows "<label> <x_1> ... <x_d>" with shortest round-trip decimal
floats.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from statistics import NormalDist

import numpy as np

from .geometry import UnsupportedCaseError, _check_p

__all__ = [
    "NoiseSpec",
    "GeneratorSpec",
    "NormBound",
    "Dataset",
    "DatasetFormatError",
    "GenerationTimeoutError",
    "generate",
    "save_dataset",
    "load_dataset",
    "empirical_soft_margin",
    "ball_covariance_scale",
    "DatasetSampler",
    "GeneratorSampler",
]

FAMILIES = ("gaussian_isotropic", "uniform_lp_ball", "hard_margin")
NOISE_KINDS = ("none", "random_flip", "boundary_flip")

REJECTION_CAP_FACTOR = 1000  # hard-margin sampling gives up after 1000*n draws


class DatasetFormatError(ValueError):
    """A dataset file failed to parse or violated an invariant."""


class GenerationTimeoutError(RuntimeError):
    """Rejection sampling hit its attempt cap (infeasible margin)."""


@dataclass(frozen=True)
class NoiseSpec:
    kind: str = "none"
    rate: float = 0.0

    def __post_init__(self):
        if self.kind not in NOISE_KINDS:
            raise ValueError(f"unknown noise kind {self.kind!r}")
        rate = float(self.rate)
        if not (0.0 <= rate < 0.5):
            raise ValueError(f"noise rate must lie in [0, 0.5), got {rate}")
        if self.kind == "none" and rate != 0.0:
            raise ValueError("noise kind 'none' requires rate 0")
        object.__setattr__(self, "rate", rate)

    def to_dict(self) -> dict:
        return {"kind": self.kind, "rate": self.rate}

    @classmethod
    def from_dict(cls, d: dict) -> "NoiseSpec":
        return cls(kind=d.get("kind", "none"), rate=float(d.get("rate", 0.0)))


@dataclass(frozen=True)
class GeneratorSpec:
    """Recipe for a synthetic distribution.

    teacher (when present) provides the labels y = sgn(teacher.x); without it
    labels are i.i.d. uniform signs. normalize_to_lp=p rescales all rows of a
    generated dataset by the maximum row lp norm so that ||x||_p <= 1 holds,
    as the convex-loss guarantees assume; leave it unset for experiments that
    need exact isotropy. ball_p selects the ball for uniform_lp_ball.
    """

    family: str
    d: int
    teacher: tuple[float, ...] | None = None
    gamma0: float | None = None
    noise: NoiseSpec = field(default_factory=NoiseSpec)
    normalize_to_lp: float | None = None
    ball_p: float = 2.0

    def __post_init__(self):
        if self.family not in FAMILIES:
            raise ValueError(f"unknown family {self.family!r}")
        if int(self.d) < 1:
            raise ValueError("d must be >= 1")
        object.__setattr__(self, "d", int(self.d))
        if self.teacher is not None:
            t = tuple(float(v) for v in self.teacher)
            if len(t) != self.d:
                raise ValueError(f"teacher has length {len(t)}, expected d={self.d}")
            if not any(t):
                raise ValueError("teacher must be nonzero")
            object.__setattr__(self, "teacher", t)
        if self.gamma0 is not None:
            g = float(self.gamma0)
            if g < 0.0:
                raise ValueError("gamma0 must be nonnegative")
            object.__setattr__(self, "gamma0", g)
        if self.family == "hard_margin" and (self.teacher is None or self.gamma0 is None):
            raise ValueError("hard_margin requires a teacher and gamma0")
        if self.normalize_to_lp is not None:
            object.__setattr__(self, "normalize_to_lp", _check_p(self.normalize_to_lp))
        object.__setattr__(self, "ball_p", _check_p(self.ball_p))

    @property
    def teacher_array(self) -> np.ndarray | None:
        return None if self.teacher is None else np.asarray(self.teacher, dtype=np.float64)

    def to_dict(self) -> dict:
        return {
            "family": self.family,
            "d": self.d,
            "teacher": list(self.teacher) if self.teacher is not None else None,
            "gamma0": self.gamma0,
            "noise": self.noise.to_dict(),
            "normalize_to_lp": (
                "inf" if self.normalize_to_lp is not None and math.isinf(self.normalize_to_lp)
                else self.normalize_to_lp
            ),
            "ball_p": "inf" if math.isinf(self.ball_p) else self.ball_p,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "GeneratorSpec":
        norm = d.get("normalize_to_lp")
        return cls(
            family=d["family"],
            d=int(d["d"]),
            teacher=d.get("teacher"),
            gamma0=d.get("gamma0"),
            noise=NoiseSpec.from_dict(d.get("noise", {})),
            normalize_to_lp=None if norm is None else float(norm),
            ball_p=float(d.get("ball_p", 2.0)),
        )


@dataclass(frozen=True)
class NormBound:
    p: float
    bound: float


@dataclass
class Dataset:
    """An n x d design matrix with +-1 labels and generation provenance."""

    features: np.ndarray
    labels: np.ndarray
    norm_bound: NormBound | None = None
    provenance: dict = field(default_factory=dict)

    def __post_init__(self):
        self.features = np.ascontiguousarray(self.features, dtype=np.float64)
        self.labels = np.asarray(self.labels)
        if self.features.ndim != 2 or self.features.shape[0] < 1 or self.features.shape[1] < 1:
            raise ValueError("features must be an n x d matrix with n, d >= 1")
        if self.labels.shape != (self.features.shape[0],):
            raise ValueError("labels must be a length-n vector")
        if not np.all(np.isfinite(self.features)):
            raise ValueError("features must be finite")
        lab = self.labels.astype(np.int64, copy=False)
        if not np.all((lab == 1) | (lab == -1)):
            bad = int(np.nonzero((lab != 1) & (lab != -1))[0][0])
            raise ValueError(f"labels must be +1 or -1; row {bad} has {self.labels[bad]}")
        self.labels = lab
        if self.norm_bound is not None:
            norms = _row_lp_norms(self.features, self.norm_bound.p)
            if norms.max() > self.norm_bound.bound + 1e-12:
                raise ValueError(
                    f"norm bound violated: max row l{self.norm_bound.p} norm "
                    f"{norms.max()} > {self.norm_bound.bound}"
                )

    @property
    def n(self) -> int:
        return self.features.shape[0]

    @property
    def d(self) -> int:
        return self.features.shape[1]

    def signed_features(self) -> np.ndarray:
        """Rows y_i * x_i, the form every trainer consumes."""
        return np.ascontiguousarray(self.labels[:, None] * self.features)


def _row_lp_norms(X: np.ndarray, p: float) -> np.ndarray:
    a = np.abs(X)
    if math.isinf(p):
        return a.max(axis=1)
    if p == 1.0:
        return a.sum(axis=1)
    if p == 2.0:
        return np.sqrt((X * X).sum(axis=1))
    return np.power(a, p).sum(axis=1) ** (1.0 / p)


def ball_covariance_scale(p: float, d: int) -> float:
    """c with Cov = c*I for the uniform law on the unit lp ball in R^d.

    Closed form via the Schechtman-Zinn representation:
        c = Gamma(3/p) Gamma(1 + d/p) / (Gamma(1/p) Gamma(1 + (d+2)/p)),
    which reduces to 1/(d+2) at p=2 and 1/3 at p=inf.
    """
    p = _check_p(p)
    if math.isinf(p):
        return 1.0 / 3.0
    return math.exp(
        math.lgamma(3.0 / p)
        + math.lgamma(1.0 + d / p)
        - math.lgamma(1.0 / p)
        - math.lgamma(1.0 + (d + 2.0) / p)
    )


def _uniform_ball(rng: np.random.Generator, n: int, d: int, p: float) -> np.ndarray:
    if math.isinf(p):
        return rng.uniform(-1.0, 1.0, size=(n, d))
    if p == 2.0:
        g = rng.standard_normal((n, d))
        g /= np.sqrt((g * g).sum(axis=1, keepdims=True))
        radii = rng.random(n) ** (1.0 / d)
        return g * radii[:, None]
    # Schechtman-Zinn: g_i ~ density exp(-|t|^p), w ~ Exp(1), then
    # g / (sum |g_i|^p + w)^(1/p) is uniform on the ball. Exact, no MCMC.
    g = rng.gamma(1.0 / p, 1.0, size=(n, d)) ** (1.0 / p)
    g *= rng.choice(np.array([-1.0, 1.0]), size=(n, d))
    w = rng.exponential(1.0, size=n)
    denom = (np.power(np.abs(g), p).sum(axis=1) + w) ** (1.0 / p)
    return g / denom[:, None]


def _teacher_labels(X: np.ndarray, teacher: np.ndarray) -> np.ndarray:
    scores = X @ teacher
    return np.where(scores >= 0.0, 1, -1).astype(np.int64)


def generate(spec: GeneratorSpec, n: int, seed: int) -> Dataset:
    """Draw a dataset of n rows; bitwise deterministic given (spec, seed)."""
    if n < 1:
        raise ValueError("n must be >= 1")
    rng = np.random.default_rng(seed)
    teacher = spec.teacher_array
    d = spec.d

    if spec.family == "gaussian_isotropic":
        X = rng.standard_normal((n, d))
        isotropy_scale = 1.0
    elif spec.family == "uniform_lp_ball":
        X = _uniform_ball(rng, n, d, spec.ball_p)
        isotropy_scale = ball_covariance_scale(spec.ball_p, d)
    else:  # hard_margin: rejection from the gaussian base
        rows = []
        kept = 0
        drawn = 0
        cap = REJECTION_CAP_FACTOR * n
        while kept < n:
            batch = min(max(n, 1024), cap - drawn)
            if batch <= 0:
                raise GenerationTimeoutError(
                    f"hard margin gamma0={spec.gamma0} infeasible after {drawn} draws"
                )
            cand = rng.standard_normal((batch, d))
            drawn += batch
            keep = np.abs(cand @ teacher) >= spec.gamma0
            rows.append(cand[keep])
            kept += int(keep.sum())
        X = np.concatenate(rows, axis=0)[:n]
        isotropy_scale = None

    if teacher is not None:
        y = _teacher_labels(X, teacher)
    else:
        y = rng.choice(np.array([-1, 1], dtype=np.int64), size=n)

    n_flipped = 0
    if spec.noise.kind == "random_flip":
        flips = rng.random(n) < spec.noise.rate
        y = np.where(flips, -y, y)
        n_flipped = int(flips.sum())
    elif spec.noise.kind == "boundary_flip":
        if teacher is None:
            raise ValueError("boundary_flip requires a teacher")
        k = int(spec.noise.rate * n)
        order = np.argsort(np.abs(X @ teacher), kind="stable")
        y = y.copy()
        y[order[:k]] = -y[order[:k]]
        n_flipped = k

    norm_bound = None
    normalization_scale = None
    if spec.normalize_to_lp is not None:
        normalization_scale = float(_row_lp_norms(X, spec.normalize_to_lp).max())
        if normalization_scale > 0.0:
            X = X / normalization_scale
        norm_bound = NormBound(p=spec.normalize_to_lp, bound=1.0)

    provenance = {
        "generator": spec.to_dict(),
        "seed": int(seed),
        "n": int(n),
        "n_flipped": n_flipped,
        "isotropy_scale": isotropy_scale,
        "normalization_scale": normalization_scale,
    }
    return Dataset(features=X, labels=y, norm_bound=norm_bound, provenance=provenance)


def _fmt_p(p: float | None) -> str:
    if p is None:
        return "none"
    return "inf" if math.isinf(p) else repr(float(p))


def save_dataset(ds: Dataset, path) -> None:
    """Write the rhd v1 text format; features and labels round-trip bitwise."""
    nb = ds.norm_bound
    header = (
        f"rhd v1 n={ds.n} d={ds.d} "
        f"p={_fmt_p(nb.p if nb else None)} "
        f"bound={_fmt_p(nb.bound if nb else None)}"
    )
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        fh.write(header + "\n")
        for i in range(ds.n):
            row = " ".join(repr(float(v)) for v in ds.features[i])
            fh.write(f"{int(ds.labels[i]):+d} {row}\n")


def load_dataset(path) -> Dataset:
    """Parse the rhd v1 format; malformed input raises DatasetFormatError."""
    with open(path, "r", encoding="utf-8") as fh:
        header = fh.readline()
        if not header:
            raise DatasetFormatError(f"{path}: empty file")
        parts = header.split()
        if parts[:2] != ["rhd", "v1"] or len(parts) != 6:
            raise DatasetFormatError(f"{path}: line 1: bad header {header.strip()!r}")
        try:
            kv = dict(tok.split("=", 1) for tok in parts[2:])
            n = int(kv["n"])
            d = int(kv["d"])
            p = None if kv["p"] == "none" else float(kv["p"])
            bound = None if kv["bound"] == "none" else float(kv["bound"])
        except (KeyError, ValueError) as exc:
            raise DatasetFormatError(f"{path}: line 1: bad header field ({exc})") from exc
        if n < 1 or d < 1:
            raise DatasetFormatError(f"{path}: line 1: need n >= 1 and d >= 1")
        if (p is None) != (bound is None):
            raise DatasetFormatError(f"{path}: line 1: p and bound must both be set or 'none'")

        features = np.empty((n, d), dtype=np.float64)
        labels = np.empty(n, dtype=np.int64)
        for i in range(n):
            line = fh.readline()
            if not line:
                raise DatasetFormatError(f"{path}: line {i + 2}: truncated, expected {n} rows")
            toks = line.split()
            if len(toks) != d + 1:
                raise DatasetFormatError(
                    f"{path}: line {i + 2}: expected {d + 1} fields, got {len(toks)}"
                )
            try:
                lab = int(toks[0])
            except ValueError as exc:
                raise DatasetFormatError(f"{path}: line {i + 2}: bad label {toks[0]!r}") from exc
            if lab not in (1, -1):
                raise DatasetFormatError(f"{path}: row {i}: label must be +1 or -1, got {lab}")
            labels[i] = lab
            try:
                features[i] = [float(t) for t in toks[1:]]
            except ValueError as exc:
                raise DatasetFormatError(f"{path}: line {i + 2}: bad float ({exc})") from exc
        trailing = fh.readline()
        if trailing.strip():
            raise DatasetFormatError(f"{path}: line {n + 2}: trailing content after {n} rows")

    nb = NormBound(p=p, bound=bound) if p is not None else None
    try:
        return Dataset(
            features=features, labels=labels, norm_bound=nb,
            provenance={"source": str(path)},
        )
    except ValueError as exc:
        raise DatasetFormatError(f"{path}: {exc}") from exc


def empirical_soft_margin(ds: Dataset, vbar, q: float, gammas) -> np.ndarray:
    """Empirical band masses phi(gamma) = (1/n) #{i : |vbar.x_i| <= gamma}.

    vbar must be unit lq norm (within 1e-9), matching the soft-margin
    definition the guarantees are stated in.
    """
    from .geometry import lp_norm

    v = np.asarray(vbar, dtype=np.float64)
    if abs(lp_norm(v, q) - 1.0) > 1e-9:
        raise ValueError(f"vbar must have unit l{q} norm, got {lp_norm(v, q)}")
    scores = np.sort(np.abs(ds.features @ v))
    g = np.atleast_1d(np.asarray(gammas, dtype=np.float64))
    return np.searchsorted(scores, g, side="right") / ds.n


class DatasetSampler:
    """Stream of samples drawn with replacement from a fixed dataset."""

    mode = "resample"

    def __init__(self, ds: Dataset, seed: int):
        self._xy = ds.signed_features()
        self._rng = np.random.default_rng(seed)

    @property
    def d(self) -> int:
        return self._xy.shape[1]

    def next_signed(self, m: int) -> np.ndarray:
        idx = self._rng.integers(0, self._xy.shape[0], size=m)
        return self._xy[idx]


class GeneratorSampler:
    """Stream of fresh draws from a generator spec.

    Differences from batch generation, both forced by the absence of a finite
    sample: normalize_to_lp caps each draw individually via x / max(1, ||x||_p),
    and boundary_flip flips labels inside the fixed population band
    |teacher.x| <= t with P(|teacher.x| <= t) = rate (gaussian family only).
    """

    mode = "fresh"

    def __init__(self, spec: GeneratorSpec, seed: int):
        if spec.family == "uniform_lp_ball" and spec.noise.kind == "boundary_flip":
            raise UnsupportedCaseError("boundary_flip streams are defined for gaussian families only")
        self.spec = spec
        self._rng = np.random.default_rng(seed)
        self._teacher = spec.teacher_array
        self._flip_band = None
        if spec.noise.kind == "boundary_flip":
            if self._teacher is None:
                raise ValueError("boundary_flip requires a teacher")
            t2 = float(np.sqrt(self._teacher @ self._teacher))
            self._flip_band = t2 * NormalDist().inv_cdf(0.5 + spec.noise.rate / 2.0)

    @property
    def d(self) -> int:
        return self.spec.d

    def next_raw(self, m: int) -> tuple[np.ndarray, np.ndarray]:
        spec = self.spec
        rng = self._rng
        if spec.family == "gaussian_isotropic":
            X = rng.standard_normal((m, spec.d))
        elif spec.family == "uniform_lp_ball":
            X = _uniform_ball(rng, m, spec.d, spec.ball_p)
        else:
            out = np.empty((m, spec.d))
            got = 0
            drawn = 0
            cap = REJECTION_CAP_FACTOR * m
            while got < m:
                if drawn >= cap:
                    raise GenerationTimeoutError("hard margin stream stalled")
                cand = rng.standard_normal((max(m, 256), spec.d))
                drawn += cand.shape[0]
                keep = cand[np.abs(cand @ self._teacher) >= spec.gamma0]
                take = min(m - got, keep.shape[0])
                out[got : got + take] = keep[:take]
                got += take
            X = out
        if self._teacher is not None:
            scores = X @ self._teacher
            y = np.where(scores >= 0.0, 1.0, -1.0)
        else:
            scores = None
            y = rng.choice(np.array([-1.0, 1.0]), size=m)
        if spec.noise.kind == "random_flip":
            y = np.where(rng.random(m) < spec.noise.rate, -y, y)
        elif spec.noise.kind == "boundary_flip":
            y = np.where(np.abs(scores) <= self._flip_band, -y, y)
        if spec.normalize_to_lp is not None:
            norms = _row_lp_norms(X, spec.normalize_to_lp)
            X = X / np.maximum(norms, 1.0)[:, None]
        return X, y

    def next_signed(self, m: int) -> np.ndarray:
        X, y = self.next_raw(m)
        return np.ascontiguousarray(y[:, None] * X)
