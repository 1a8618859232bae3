"""The three adversarial training algorithms.

    gd     full-batch gradient descent on the exactly-perturbed sample
    sgd    online stochastic gradient descent, one fresh draw per step
    psat   projected stochastic adversarial training: SGD on the lq-normalized
           score with the sigmoidal loss, re-projected onto the unit lq sphere
           after every step

All three treat the perturbed points as constants in the update (no
differentiation through the attack). A trace records weight snapshots plus
cheap per-step series; identical config and seed reproduce a trace bitwise.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field

import numpy as np

from . import _kernels
from .geometry import AttackSpec, UnsupportedCaseError, lp_norm
from .losses import LossSpec, loss_constants, loss_derivative, loss_value
from .synthdata import Dataset, DatasetSampler, GeneratorSampler, GeneratorSpec, NormBound

__all__ = [
    "TrainConfig",
    "TrainTrace",
    "Snapshot",
    "SnapshotMetrics",
    "train_gd",
    "train_sgd",
    "train_psat",
    "evaluate_snapshot_policy",
    "annotate_trace_metrics",
    "psat_gradient",
    "snapshot_robust_errors",
]

ALGORITHMS = ("gd", "sgd", "psat")
_LOSS_KIND_ID = {"cross_entropy": 0, "hinge": 1, "sigmoidal": 2}

STREAM_CHUNK = 65536


@dataclass
class TrainConfig:
    algorithm: str
    loss: LossSpec
    attack: AttackSpec
    eta: float
    steps: int
    w_init: np.ndarray
    eval_every: int | None = None
    seed: int = 0

    def __post_init__(self):
        if self.algorithm not in ALGORITHMS:
            raise ValueError(f"unknown algorithm {self.algorithm!r}")
        self.eta = float(self.eta)
        if not (self.eta >= 0.0) or math.isinf(self.eta):
            raise ValueError("eta must be a finite nonnegative real")
        self.steps = int(self.steps)
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        self.w_init = np.ascontiguousarray(self.w_init, dtype=np.float64)
        if self.w_init.ndim != 1 or not np.all(np.isfinite(self.w_init)):
            raise ValueError("w_init must be a finite 1-d vector")
        if self.eval_every is not None and int(self.eval_every) < 1:
            raise ValueError("eval_every must be >= 1")
        q = self.attack.q
        if self.algorithm == "gd":
            if self.loss.kind not in ("cross_entropy", "hinge"):
                raise ValueError("gd requires a convex loss (cross_entropy or hinge)")
        elif self.algorithm == "sgd":
            if loss_constants(self.loss).smoothness is None:
                raise ValueError(
                    f"sgd requires a smooth convex loss (cross_entropy); "
                    f"{self.loss.kind} has no smoothness constant"
                )
        else:
            if self.loss.kind != "sigmoidal":
                raise ValueError("psat requires the sigmoidal loss")
            if q not in (1.0, 2.0):
                raise UnsupportedCaseError(
                    f"psat projection supports q in {{1, 2}} (p in {{2, inf}}), got q={q}"
                )
            if abs(lp_norm(self.w_init, q) - 1.0) > 1e-9:
                raise ValueError(f"psat requires ||w_init||_q = 1, got {lp_norm(self.w_init, q)}")

    def resolved_eval_every(self) -> int:
        if self.eval_every is not None:
            return int(self.eval_every)
        if self.algorithm == "gd":
            return 1 if self.steps <= 5000 else max(1, self.steps // 200)
        return 50

    def to_dict(self) -> dict:
        return {
            "algorithm": self.algorithm,
            "loss": self.loss.to_dict(),
            "attack": self.attack.to_dict(),
            "eta": self.eta,
            "steps": self.steps,
            "eval_every": self.resolved_eval_every(),
            "seed": self.seed,
            "w_init": [float(v) for v in self.w_init],
        }


@dataclass
class SnapshotMetrics:
    robust_loss: float
    robust_error: float
    l2_norm: float
    lq_norm: float

    def to_dict(self) -> dict:
        return {
            "robust_loss": self.robust_loss,
            "robust_error": self.robust_error,
            "l2_norm": self.l2_norm,
            "lq_norm": self.lq_norm,
        }


@dataclass
class Snapshot:
    iteration: int
    weights: np.ndarray
    metrics: SnapshotMetrics | None = None


@dataclass
class TrainTrace:
    algorithm: str
    config: dict
    snapshots: list[Snapshot]
    mode: str
    best_index: int | None = None
    validation_errors: np.ndarray | None = None
    # per-step series (in memory only; the JSON form carries a summary)
    step_loss: np.ndarray | None = None
    step_error: np.ndarray | None = None
    step_grad_sqnorm: np.ndarray | None = None
    step_dist_sq: np.ndarray | None = None
    step_ref_loss: np.ndarray | None = None
    max_sphere_dev: float | None = None
    min_preproj_norm: float | None = None
    extras: dict = field(default_factory=dict)

    def weight_matrix(self) -> np.ndarray:
        return np.stack([s.weights for s in self.snapshots])

    def best_snapshot(self) -> Snapshot:
        idx = self.best_index if self.best_index is not None else len(self.snapshots) - 1
        return self.snapshots[idx]

    def to_json_dict(self) -> dict:
        summary = {
            "final_step_loss": float(self.step_loss[-1]) if self.step_loss is not None else None,
            "max_grad_sqnorm": (
                float(self.step_grad_sqnorm.max())
                if self.step_grad_sqnorm is not None and self.step_grad_sqnorm.size
                else None
            ),
            "max_sphere_dev": self.max_sphere_dev,
            "min_preproj_norm": self.min_preproj_norm,
        }
        summary.update(self.extras)
        return {
            "algorithm": self.algorithm,
            "config": self.config,
            "mode": self.mode,
            "snapshots": [
                {
                    "iteration": s.iteration,
                    "weights": [float(v) for v in s.weights],
                    "metrics": s.metrics.to_dict() if s.metrics else None,
                }
                for s in self.snapshots
            ],
            "best_index": self.best_index,
            "summary": summary,
        }

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            json.dump(self.to_json_dict(), fh, indent=1)
            fh.write("\n")

    @classmethod
    def load(cls, path) -> "TrainTrace":
        with open(path, "r", encoding="utf-8") as fh:
            d = json.load(fh)
        snaps = [
            Snapshot(
                iteration=int(s["iteration"]),
                weights=np.asarray(s["weights"], dtype=np.float64),
                metrics=SnapshotMetrics(**s["metrics"]) if s.get("metrics") else None,
            )
            for s in d["snapshots"]
        ]
        return cls(
            algorithm=d["algorithm"],
            config=d["config"],
            snapshots=snaps,
            mode=d.get("mode", "full_batch"),
            best_index=d.get("best_index"),
            extras=d.get("summary", {}),
        )


def _q_dispatch(q: float) -> tuple[int, float]:
    if q == 2.0:
        return 0, 2.0
    if q == 1.0:
        return 1, 1.0
    if math.isinf(q):
        return 2, 0.0
    return 3, float(q)


def _snapshot_iters(first: int, last: int, every: int) -> np.ndarray:
    ks = np.arange(first, last + 1, every, dtype=np.int64)
    return np.unique(np.concatenate([ks, np.array([first, last], dtype=np.int64)]))


def _check_dims(d_data: int, w_init: np.ndarray) -> None:
    if w_init.size != d_data:
        raise ValueError(f"dimension mismatch: data has d={d_data}, w_init has d={w_init.size}")


def _maybe_assert_grad_bound(ds_bound, attack: AttackSpec, loss: LossSpec,
                             step_gsq: np.ndarray, d: int) -> float | None:
    """On lp-normalized data with r <= 1, the per-step squared update norm is
    bounded by H = 4L^2 (p <= 2) or 4L^2 d (p > 2)."""
    if ds_bound is None or step_gsq is None or step_gsq.size == 0:
        return None
    if ds_bound.p != attack.p or ds_bound.bound > 1.0 + 1e-12 or attack.r > 1.0:
        return None
    L = loss_constants(loss).lipschitz
    H = 4.0 * L * L if attack.p <= 2.0 else 4.0 * L * L * d
    mx = float(step_gsq.max())
    assert mx <= H * (1.0 + 1e-9), f"gradient bound violated: max ||g||^2 = {mx} > H = {H}"
    return H


def train_gd(ds: Dataset, cfg: TrainConfig, validation: Dataset | None = None,
             track_ref: np.ndarray | None = None) -> TrainTrace:
    """Full-batch adversarial training.

    w_{k+1} = w_k - (eta/n) sum_i ell'(z_i) y_i (x_i + delta_i) with
    z_i = y_i w_k.x_i - r||w_k||_q and delta_i the exact attack on (x_i, y_i).
    At w_k = 0 the attack is taken to be zero (margins vanish regardless).

    track_ref additionally records ||w_k - ref||^2 per iterate, which lets the
    caller verify the one-step potential decrease against any reference vector.
    """
    if cfg.algorithm != "gd":
        raise ValueError("config algorithm must be 'gd'")
    _check_dims(ds.d, cfg.w_init)
    Xy = ds.signed_features()
    q_kind, qv = _q_dispatch(cfg.attack.q)
    loss_kind = _LOSS_KIND_ID[cfg.loss.kind]
    sigma = cfg.loss.sigma or 0.0
    steps = cfg.steps
    snap_iters = _snapshot_iters(0, steps, cfg.resolved_eval_every())
    W_out = np.empty((snap_iters.size, ds.d))
    step_loss = np.empty(steps + 1)
    step_err = np.full(steps + 1, np.nan)  # filled at snapshot iterations only
    step_gsq = np.empty(steps)
    track = track_ref is not None
    ref = np.ascontiguousarray(track_ref, dtype=np.float64) if track else np.zeros(ds.d)
    step_dist = np.empty(steps + 1) if track else np.empty(0)
    w = cfg.w_init.copy()

    sp = _kernels.gd_loop(Xy, w, cfg.eta, cfg.attack.r, q_kind, qv, loss_kind, sigma,
                          steps, snap_iters, W_out, ref, track,
                          step_loss, step_err, step_gsq, step_dist)
    assert sp == snap_iters.size

    snapshots = []
    for i, k in enumerate(snap_iters):
        wk = W_out[i].copy()
        snapshots.append(Snapshot(
            iteration=int(k),
            weights=wk,
            metrics=SnapshotMetrics(
                robust_loss=float(step_loss[k]),
                robust_error=float(step_err[k]),
                l2_norm=lp_norm(wk, 2.0) if np.any(wk) else 0.0,
                lq_norm=lp_norm(wk, cfg.attack.q) if np.any(wk) else 0.0,
            ),
        ))
    trace = TrainTrace(
        algorithm="gd", config=cfg.to_dict(), snapshots=snapshots, mode="full_batch",
        step_loss=step_loss, step_error=step_err, step_grad_sqnorm=step_gsq,
        step_dist_sq=step_dist if track else None,
    )
    _maybe_assert_grad_bound(ds.norm_bound, cfg.attack, cfg.loss, step_gsq, ds.d)
    if validation is not None:
        evaluate_snapshot_policy(trace, validation, cfg.attack)
    return trace


def _make_sampler(source, cfg: TrainConfig):
    if isinstance(source, Dataset):
        return DatasetSampler(source, cfg.seed)
    if isinstance(source, GeneratorSpec):
        return GeneratorSampler(source, cfg.seed)
    raise TypeError(f"source must be a Dataset or GeneratorSpec, got {type(source)!r}")


def train_sgd(source, cfg: TrainConfig, validation: Dataset | None = None,
              track_ref: np.ndarray | None = None) -> TrainTrace:
    """Online-SGD adversarial training: one fresh (x_k, y_k) per step.

    source is either a Dataset (sampled with replacement) or a GeneratorSpec
    (fresh draws); the mode is recorded in the trace. step_loss[k] holds the
    robust surrogate of w_k on its own sample, whose running average the
    regret bound controls; with track_ref the same samples are also scored at
    the reference vector.
    """
    if cfg.algorithm != "sgd":
        raise ValueError("config algorithm must be 'sgd'")
    sampler = _make_sampler(source, cfg)
    _check_dims(sampler.d, cfg.w_init)
    d = sampler.d
    q_kind, qv = _q_dispatch(cfg.attack.q)
    loss_kind = _LOSS_KIND_ID[cfg.loss.kind]
    sigma = cfg.loss.sigma or 0.0
    steps = cfg.steps
    snap_iters = _snapshot_iters(0, steps, cfg.resolved_eval_every())
    W_out = np.empty((snap_iters.size, d))
    step_loss = np.empty(steps)
    step_gsq = np.empty(steps)
    track = track_ref is not None
    ref = np.ascontiguousarray(track_ref, dtype=np.float64) if track else np.zeros(d)
    ref_rnorm = cfg.attack.r * lp_norm(ref, cfg.attack.q) if track and np.any(ref) else 0.0
    step_ref_loss = np.empty(steps) if track else np.empty(0)
    w = cfg.w_init.copy()

    sp = 0
    done = 0
    while done < steps:
        m = min(STREAM_CHUNK, steps - done)
        Xy = sampler.next_signed(m)
        sp = _kernels.sgd_chunk(Xy, w, cfg.eta, cfg.attack.r, q_kind, qv, loss_kind, sigma,
                                done, snap_iters, sp, W_out,
                                track, ref, ref_rnorm,
                                step_loss, step_ref_loss, step_gsq)
        done += m
    assert sp == snap_iters.size - 1 and snap_iters[sp] == steps
    W_out[sp] = w

    snapshots = [Snapshot(iteration=int(k), weights=W_out[i].copy())
                 for i, k in enumerate(snap_iters)]
    trace = TrainTrace(
        algorithm="sgd", config=cfg.to_dict(), snapshots=snapshots, mode=sampler.mode,
        step_loss=step_loss, step_grad_sqnorm=step_gsq,
        step_ref_loss=step_ref_loss if track else None,
        extras={"mean_step_loss": float(step_loss.mean()),
                "mean_ref_loss": float(step_ref_loss.mean()) if track else None},
    )
    if isinstance(source, Dataset):
        bound = source.norm_bound
    elif source.normalize_to_lp is not None:
        bound = NormBound(p=source.normalize_to_lp, bound=1.0)
    else:
        bound = None
    _maybe_assert_grad_bound(bound, cfg.attack, cfg.loss, step_gsq, d)
    if validation is not None:
        evaluate_snapshot_policy(trace, validation, cfg.attack)
    return trace


def train_psat(source, cfg: TrainConfig, validation: Dataset | None = None) -> TrainTrace:
    """Projected stochastic adversarial training on the normalized score.

    Per step, with z = y_k w_k.x_k / ||w_k||_q - r:
        g   = ell'(z) y_k (I - wbar w_k^T / ||w_k||_q^q) (x_k + delta_k) / ||w_k||_q
        w    <- project_lq_sphere(w_k - eta g, q)
    The gradient is orthogonal to w_k, so every iterate stays on the unit lq
    sphere; the trace records the worst per-step deviation.
    """
    if cfg.algorithm != "psat":
        raise ValueError("config algorithm must be 'psat'")
    sampler = _make_sampler(source, cfg)
    _check_dims(sampler.d, cfg.w_init)
    d = sampler.d
    q_is_one = cfg.attack.q == 1.0
    steps = cfg.steps
    # psat iterates are 1-based: w_1 is the initial point, w_{K+1} the final
    snap_iters = _snapshot_iters(1, steps + 1, cfg.resolved_eval_every())
    W_out = np.empty((snap_iters.size, d))
    step_loss = np.empty(steps)
    stats = np.array([0.0, np.inf])
    scratch = np.empty(d)
    w = cfg.w_init.copy()

    sp = 0
    done = 0
    while done < steps:
        m = min(STREAM_CHUNK, steps - done)
        Xy = sampler.next_signed(m)
        sp = _kernels.psat_chunk(Xy, w, cfg.eta, cfg.attack.r, cfg.loss.sigma, q_is_one,
                                 done + 1, snap_iters, sp, W_out,
                                 step_loss, stats, scratch)
        done += m
    assert sp == snap_iters.size - 1 and snap_iters[sp] == steps + 1
    W_out[sp] = w

    snapshots = [Snapshot(iteration=int(k), weights=W_out[i].copy())
                 for i, k in enumerate(snap_iters)]
    trace = TrainTrace(
        algorithm="psat", config=cfg.to_dict(), snapshots=snapshots, mode=sampler.mode,
        step_loss=step_loss,
        max_sphere_dev=float(stats[0]), min_preproj_norm=float(stats[1]),
        extras={"mean_step_loss": float(step_loss.mean())},
    )
    if validation is not None:
        evaluate_snapshot_policy(trace, validation, cfg.attack)
    return trace


def psat_gradient(w, x, y, attack: AttackSpec, loss: LossSpec) -> np.ndarray:
    """Reference (uncompiled) psat per-sample gradient, for checking the
    kernel and finite differences. Requires ||w||_q = 1 up to rounding."""
    w = np.asarray(w, dtype=np.float64)
    x = np.asarray(x, dtype=np.float64)
    q = attack.q
    nrm = lp_norm(w, q)
    z = y * (w @ x) / nrm - attack.r
    wb = np.sign(w) if q == 1.0 else w.copy()
    t = y * x - (attack.r / nrm ** (q - 1.0)) * wb
    coef = (w @ t) / nrm ** q
    return loss_derivative(loss, z) * (t - wb * coef) / nrm


def snapshot_robust_errors(trace: TrainTrace, ds: Dataset, attack: AttackSpec) -> np.ndarray:
    """Empirical robust error of every snapshot on ds, in snapshot order.

    A zero-weight snapshot (gd started at the origin) scores 1.0: its margins
    are identically zero and ties count as errors.
    """
    W = trace.weight_matrix()
    norms = np.array([lp_norm(wk, attack.q) if np.any(wk) else 0.0 for wk in W])
    margins = (ds.labels[:, None] * (ds.features @ W.T)) - attack.r * norms[None, :]
    return (margins <= 0.0).mean(axis=0)


def annotate_trace_metrics(trace: TrainTrace, ds: Dataset, attack: AttackSpec,
                           loss: LossSpec) -> None:
    """Fill per-snapshot metrics (robust surrogate loss, robust error, norms)
    from the given dataset; used for stream-trained traces before saving."""
    W = trace.weight_matrix()
    norms = np.array([lp_norm(wk, attack.q) if np.any(wk) else 0.0 for wk in W])
    margins = (ds.labels[:, None] * (ds.features @ W.T)) - attack.r * norms[None, :]
    losses = loss_value(loss, margins).mean(axis=0)
    errors = (margins <= 0.0).mean(axis=0)
    for i, snap in enumerate(trace.snapshots):
        snap.metrics = SnapshotMetrics(
            robust_loss=float(losses[i]),
            robust_error=float(errors[i]),
            l2_norm=lp_norm(snap.weights, 2.0) if np.any(snap.weights) else 0.0,
            lq_norm=float(norms[i]),
        )


def evaluate_snapshot_policy(trace: TrainTrace, validation: Dataset,
                             attack: AttackSpec) -> int:
    """Index of the snapshot minimizing validation robust error (ties -> the
    earliest iteration); stored on the trace and returned."""
    if not trace.snapshots:
        raise ValueError("trace has no snapshots")
    if validation.n < 1:
        raise ValueError("validation set is empty")
    errors = snapshot_robust_errors(trace, validation, attack)
    best = int(np.argmin(errors))  # argmin takes the first minimum
    trace.validation_errors = errors
    trace.best_index = best
    return best
