"""Command-line front end.

    rhd gen     write a synthetic dataset in the rhd v1 text format
    rhd train   run gd / sgd / psat, write a JSON trace
    rhd eval    robust evaluation report for a model on a dataset
    rhd oracle  brute-force empirical OPT search
    rhd sweep   cross-product experiment grid -> CSV

Exit codes: 0 success, 1 I/O failure, 2 usage or validation error,
3 sweep completed with failing cells.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
import time
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .evaluation import evaluate, oracle_opt, angle_and_sine, robust_error
from .geometry import AttackSpec
from .losses import LossSpec
from .synthdata import GeneratorSpec, NoiseSpec, generate, load_dataset, save_dataset
from .trainers import (
    TrainConfig,
    TrainTrace,
    annotate_trace_metrics,
    train_gd,
    train_psat,
    train_sgd,
)

SWEEP_COLUMNS = [
    "r", "noise_rate", "seed", "algorithm", "opt_estimate",
    "teacher_robust_error", "learned_robust_error", "learned_clean_error",
    "sin_theta", "iterations_to_best", "wall_ms", "error",
]

_FAMILY_FLAGS = {
    "gaussian": "gaussian_isotropic",
    "lp-ball": "uniform_lp_ball",
    "hard-margin": "hard_margin",
}
_LOSS_FLAGS = {"xent": "cross_entropy", "hinge": "hinge", "sigmoidal": "sigmoidal"}


def _parse_p(text: str) -> float:
    try:
        p = float(text)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad exponent {text!r}") from None
    return p


def _parse_noise(text: str) -> NoiseSpec:
    if text == "none":
        return NoiseSpec()
    try:
        kind, rate = text.split(":", 1)
        kind = {"random": "random_flip", "boundary": "boundary_flip"}[kind]
        return NoiseSpec(kind=kind, rate=float(rate))
    except (ValueError, KeyError):
        raise argparse.ArgumentTypeError(
            f"bad noise {text!r}; expected none, random:RATE, or boundary:RATE"
        ) from None


def _parse_vector(text: str, d: int, what: str) -> np.ndarray:
    if text == "zero":
        return np.zeros(d)
    if text == "e1":
        v = np.zeros(d)
        v[0] = 1.0
        return v
    try:
        v = np.array([float(t) for t in text.split(",")], dtype=np.float64)
    except ValueError:
        raise ValueError(f"bad {what} {text!r}; expected zero, e1, or comma floats") from None
    if v.size != d:
        raise ValueError(f"{what} has {v.size} entries, expected d={d}")
    return v


def _add_generator_flags(p: argparse.ArgumentParser, required: bool) -> None:
    p.add_argument("--family", choices=sorted(_FAMILY_FLAGS), required=required)
    p.add_argument("--d", type=int, required=required, help="ambient dimension")
    p.add_argument("--teacher", help="e1 or comma-separated floats")
    p.add_argument("--gamma0", type=float, help="hard margin width")
    p.add_argument("--noise", type=_parse_noise, default=NoiseSpec(),
                   help="none | random:RATE | boundary:RATE")
    p.add_argument("--normalize-lp", type=_parse_p,
                   help="rescale rows so max ||x||_p = 1")
    p.add_argument("--ball-p", type=_parse_p, default=2.0,
                   help="ball exponent for the lp-ball family")


def _generator_from_args(args) -> GeneratorSpec:
    teacher = None
    if args.teacher is not None:
        teacher = tuple(_parse_vector(args.teacher, args.d, "teacher"))
    return GeneratorSpec(
        family=_FAMILY_FLAGS[args.family],
        d=args.d,
        teacher=teacher,
        gamma0=args.gamma0,
        noise=args.noise,
        normalize_to_lp=args.normalize_lp,
        ball_p=args.ball_p,
    )


def cmd_gen(args) -> int:
    spec = _generator_from_args(args)
    ds = generate(spec, args.n, args.seed)
    save_dataset(ds, args.output)
    prov = ds.provenance
    print(
        f"wrote {args.output}: n={ds.n} d={ds.d} family={spec.family} "
        f"noise={spec.noise.kind}:{spec.noise.rate} flipped={prov['n_flipped']} "
        f"norm_bound={'l%g<=1' % ds.norm_bound.p if ds.norm_bound else 'none'}"
    )
    return 0


def _resolve_loss(args, attack: AttackSpec) -> LossSpec:
    kind = _LOSS_FLAGS[args.loss]
    if kind != "sigmoidal":
        return LossSpec(kind=kind)
    if args.sigma in (None, "auto"):
        return LossSpec(kind="sigmoidal", sigma=attack.r)
    return LossSpec(kind="sigmoidal", sigma=float(args.sigma))


def cmd_train(args) -> int:
    attack = AttackSpec(p=args.p, r=args.r)
    loss = _resolve_loss(args, attack)

    generator = None
    if args.data is not None:
        ds = load_dataset(args.data)
        d = ds.d
    else:
        if args.family is None or args.d is None:
            raise ValueError("train needs --data or generator flags (--family, --d, ...)")
        generator = _generator_from_args(args)
        d = generator.d
        ds = None
        if args.algo == "gd":
            if args.n is None:
                raise ValueError("gd on a generator needs --n for the batch size")
            ds = generate(generator, args.n, args.seed)

    default_init = "zero" if args.algo in ("gd", "sgd") else "e1"
    w_init = _parse_vector(args.w_init or default_init, d, "w_init")
    cfg = TrainConfig(
        algorithm=args.algo, loss=loss, attack=attack, eta=args.eta,
        steps=args.k, w_init=w_init, eval_every=args.eval_every, seed=args.seed,
    )

    if args.val_data is not None:
        validation = load_dataset(args.val_data)
    elif generator is not None:
        validation = generate(generator, args.val_n, args.seed + 7919)
    else:
        validation = ds  # no held-out data supplied: select on the training set

    if args.algo == "gd":
        trace = train_gd(ds, cfg, validation=validation)
    elif args.algo == "sgd":
        trace = train_sgd(ds if ds is not None else generator, cfg, validation=validation)
    else:
        trace = train_psat(ds if ds is not None else generator, cfg, validation=validation)

    metrics_data = ds if ds is not None else validation
    annotate_trace_metrics(trace, metrics_data, attack, loss)
    trace.save(args.output)
    best = trace.best_snapshot()
    best_err = (
        trace.validation_errors[trace.best_index]
        if trace.validation_errors is not None and trace.best_index is not None
        else best.metrics.robust_error
    )
    print(
        f"wrote {args.output}: algo={args.algo} mode={trace.mode} steps={cfg.steps} "
        f"best_iteration={best.iteration} best_robust_error={best_err:.6f}"
    )
    return 0


def _weights_from_args(args, d: int) -> np.ndarray:
    if args.weights is not None:
        return _parse_vector(args.weights, d, "weights")
    if args.trace is None:
        raise ValueError("need --weights or --trace")
    trace = TrainTrace.load(args.trace)
    sel = args.snapshot
    if sel == "best":
        snap = trace.best_snapshot()
    elif sel == "last":
        snap = trace.snapshots[-1]
    else:
        snap = trace.snapshots[int(sel)]
    return snap.weights


def cmd_eval(args) -> int:
    ds = load_dataset(args.data)
    w = _weights_from_args(args, ds.d)
    attack = AttackSpec(p=args.p, r=args.r)
    loss = _resolve_loss(args, attack)
    report = evaluate(w, ds, attack, loss)
    print(json.dumps(report.to_dict(), indent=1))
    return 0


def cmd_oracle(args) -> int:
    ds = load_dataset(args.data)
    attack = AttackSpec(p=args.p, r=args.r)
    method = "random_search" if args.method == "random" else "grid2d"
    resolution = args.resolution if method == "grid2d" else args.m
    result = oracle_opt(ds, attack, method=method, resolution=resolution, seed=args.seed)
    print(json.dumps(result.to_dict(), indent=1))
    return 0


def _sweep_cell(base: dict, r: float, noise_rate: float, seed: int) -> dict:
    t0 = time.perf_counter()
    row = {
        "r": r, "noise_rate": noise_rate, "seed": seed,
        "algorithm": base["train"]["algorithm"], "error": "",
    }
    try:
        gen_dict = dict(base["generator"])
        noise_kind = gen_dict.get("noise", {}).get("kind", "random_flip")
        gen_dict["noise"] = {"kind": noise_kind if noise_rate > 0 else "none",
                             "rate": noise_rate if noise_rate > 0 else 0.0}
        spec = GeneratorSpec.from_dict(gen_dict)
        teacher = spec.teacher_array
        if teacher is None:
            raise ValueError("sweep requires generator.teacher for the report columns")

        tr = base["train"]
        attack = AttackSpec(p=float(tr["p"]), r=r)
        loss_dict = dict(tr.get("loss", {"kind": "cross_entropy"}))
        if loss_dict.get("kind") == "sigmoidal" and loss_dict.get("sigma") in (None, "auto"):
            loss_dict["sigma"] = attack.r
        loss = LossSpec.from_dict(loss_dict)
        algo = tr["algorithm"]

        train_n = int(base.get("train_n", 5000))
        val_n = int(base.get("val_n", 10000))
        eval_n = int(base.get("eval_n", 20000))

        w_init = tr.get("w_init", "zero" if algo in ("gd", "sgd") else "e1")
        if isinstance(w_init, str):
            w_init = _parse_vector(w_init, spec.d, "w_init")
        else:
            w_init = np.asarray(w_init, dtype=np.float64)
        cfg = TrainConfig(
            algorithm=algo, loss=loss, attack=attack, eta=float(tr["eta"]),
            steps=int(tr["steps"]), w_init=w_init,
            eval_every=tr.get("eval_every"), seed=seed,
        )
        validation = generate(spec, val_n, seed + 7919)
        evalset = generate(spec, eval_n, seed + 15817)
        if algo == "gd":
            ds = generate(spec, train_n, seed)
            trace = train_gd(ds, cfg, validation=validation)
        elif algo == "sgd":
            trace = train_sgd(spec, cfg, validation=validation)
        else:
            trace = train_psat(spec, cfg, validation=validation)

        best = trace.best_snapshot()
        w = best.weights
        ev = evaluate(w, evalset, attack, loss)
        oracle_cfg = base.get("oracle", {})
        method = oracle_cfg.get("method", "grid2d" if spec.d == 2 else "random_search")
        resolution = oracle_cfg.get("resolution", None if spec.d == 2 else 4096)
        opt = oracle_opt(evalset, attack, method=method, resolution=resolution, seed=seed)
        row.update({
            "opt_estimate": opt.opt_estimate,
            "teacher_robust_error": robust_error(teacher, evalset, attack),
            "learned_robust_error": ev.robust_error,
            "learned_clean_error": ev.clean_error,
            "sin_theta": angle_and_sine(w, teacher).sin_theta,
            "iterations_to_best": best.iteration,
        })
    except Exception as exc:  # cell failure populates the error column
        row["error"] = f"{type(exc).__name__}: {exc}"
    row["wall_ms"] = round((time.perf_counter() - t0) * 1000.0, 3)
    return row


def cmd_sweep(args) -> int:
    with open(args.config, "r", encoding="utf-8") as fh:
        base = json.load(fh)
    for key in ("generator", "train", "r_values", "noise_rates", "seeds"):
        if key not in base or (isinstance(base[key], list) and not base[key]):
            raise ValueError(f"sweep config needs a non-empty {key!r}")
    for key in ("algorithm", "eta", "steps", "p"):
        if key not in base["train"]:
            raise ValueError(f"sweep config train section needs {key!r}")
    if int(base.get("eval_n", 20000)) < 1000:
        raise ValueError("eval_n must be >= 1000")
    out_path = args.output or base.get("output")
    if out_path is None:
        raise ValueError("sweep needs -o or an 'output' entry in the config")

    cells = sorted(
        (float(r), float(nr), int(s))
        for r in base["r_values"] for nr in base["noise_rates"] for s in base["seeds"]
    )
    if args.jobs > 1:
        with ThreadPoolExecutor(max_workers=args.jobs) as pool:
            rows = list(pool.map(lambda c: _sweep_cell(base, *c), cells))
    else:
        rows = [_sweep_cell(base, *cell) for cell in cells]

    with open(out_path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: row.get(k, "") for k in SWEEP_COLUMNS})
    failures = sum(1 for row in rows if row["error"])
    print(f"wrote {out_path}: {len(rows)} rows, {failures} failed")
    return 3 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="rhd", description=__doc__,
                                     formatter_class=argparse.RawDescriptionHelpFormatter)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen", help="generate a synthetic dataset")
    _add_generator_flags(p, required=True)
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("train", help="train a halfspace adversarially")
    p.add_argument("--algo", choices=("gd", "sgd", "psat"), required=True)
    p.add_argument("--loss", choices=sorted(_LOSS_FLAGS), required=True)
    p.add_argument("--sigma", help="sigmoidal temperature, or 'auto' for sigma = r")
    p.add_argument("--p", type=_parse_p, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--eta", type=float, required=True)
    p.add_argument("--k", type=int, required=True, help="number of update steps")
    p.add_argument("--eval-every", type=int)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--data", help="dataset file; sgd/psat resample from it")
    _add_generator_flags(p, required=False)
    p.add_argument("--n", type=int, help="batch size when gd runs on a generator")
    p.add_argument("--val-data", help="validation dataset file")
    p.add_argument("--val-n", type=int, default=10000,
                   help="validation draw size in generator mode")
    p.add_argument("--w-init", help="zero | e1 | comma floats")
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="robust evaluation report")
    p.add_argument("--data", required=True)
    p.add_argument("--weights", help="comma floats")
    p.add_argument("--trace", help="trace JSON to read weights from")
    p.add_argument("--snapshot", default="best", help="best | last | index")
    p.add_argument("--p", type=_parse_p, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--loss", choices=sorted(_LOSS_FLAGS), default="xent")
    p.add_argument("--sigma")
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("oracle", help="brute-force empirical OPT search")
    p.add_argument("--data", required=True)
    p.add_argument("--p", type=_parse_p, required=True)
    p.add_argument("--r", type=float, required=True)
    p.add_argument("--method", choices=("grid2d", "random"), default="grid2d")
    p.add_argument("--resolution", type=float, help="grid2d angle step")
    p.add_argument("--m", type=int, help="random-search direction count")
    p.add_argument("--seed", type=int, default=0)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("sweep", help="experiment grid -> CSV")
    p.add_argument("--config", required=True, help="ExperimentConfig JSON")
    p.add_argument("-o", "--output")
    p.add_argument("--jobs", type=int, default=1)
    p.set_defaults(func=cmd_sweep)

    return parser


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:  # argparse reports usage errors with code 2
        return int(exc.code or 0)
    try:
        return args.func(args)
    except OSError as exc:
        print(f"rhd: i/o error: {exc}", file=sys.stderr)
        return 1
    except (ValueError, TypeError, KeyError) as exc:
        print(f"rhd: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
