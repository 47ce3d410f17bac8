"""The pipeline as composable subcommands.

make-oracle, design, simulate, fit, cv, extrapolate, calibrate,
baseline, averages, metrics.

Each subcommand wraps one library operation and persists a
self-describing record file (schema-versioned, with input checksums and
the effective configuration embedded). Outputs are deterministic: the
config file, input checksums, and seeds determine every output byte.
Timing goes to stderr, never into files.

Exit codes: 0 success, 2 validation failure, 3 runtime failure.
"""

from __future__ import annotations

import argparse
import json
import sys
import time
from dataclasses import asdict
from pathlib import Path

from . import calibrate as cal
from . import lattice, lawfit, metrics, optimize, records, simdyn, surrogate
from .config import RunConfig, load_run_config
from .errors import DomainError, TrainingError


def _input_stamp(path: str | Path) -> dict:
    return {"file": Path(path).name, "sha256": records.file_checksum(path)}


def _cmd_make_oracle(args) -> int:
    cfg = load_run_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    spec = simdyn.make_oracle(cfg.m, cfg.k, seed, preset=args.preset)
    simdyn.save_oracle(spec, args.out)
    print(f"oracle {spec.oracle_id} ({args.preset}, m={cfg.m}, k={cfg.k}) -> {args.out}")
    return 0


def _cmd_design(args) -> int:
    cfg = load_run_config(args.config)
    seed = cfg.seed if args.seed is None else args.seed
    n = cfg.n_mixtures if args.n is None else args.n
    points = lattice.sample_lattice(cfg.m, cfg.b, n, seed)
    records.write_plan(points, args.out, cfg.m, cfg.b, cfg.T, list(cfg.grid), seed)
    print(f"plan: {n} mixtures x {len(cfg.grid)} checkpoints = {n * len(cfg.grid)} cells -> {args.out}")
    return 0


def _cmd_simulate(args) -> int:
    header, points = records.read_plan(args.plan)
    spec = simdyn.load_oracle(args.oracle)
    m, b, T = int(header["m"]), int(header["b"]), int(header["T"])
    grid = [int(t) for t in header["grid"]]
    if spec.m != m:
        raise DomainError(f"plan has m={m} but oracle has m={spec.m}")
    model_id = f"oracle-{spec.oracle_id}"
    samples = []
    for i, pt in enumerate(points):
        p = lattice.to_proportions(pt)
        for t in grid:
            scores = simdyn.oracle_eval(spec, p, t, T)
            samples.append(records.make_sample(pt, t, T, scores, model_id, f"run{i:05d}"))
    records.write_samples(samples, args.out, m, spec.k, b, T, model_id)
    print(f"simulated {len(samples)} records ({len(points)} mixtures) -> {args.out}")
    return 0


def _cmd_fit(args) -> int:
    cfg = load_run_config(args.config)
    header, samples = records.read_samples(args.samples)
    _check_dims(cfg, header, args.samples)
    train_cfg = cfg.train if args.seed is None else \
        surrogate.TrainConfig(**{**asdict(cfg.train), "seed": args.seed})
    model = surrogate.fit_surrogate(samples, train_cfg)
    surrogate.save_surrogate(model, args.out)
    X, Y = records.design_matrix(samples)
    report = {
        "schema": records.SCHEMA_VERSION,
        "kind": "fit_report",
        "config": cfg.effective(),
        "inputs": {"samples": _input_stamp(args.samples)},
        "n_samples": len(samples),
        "initial_loss": float(model.loss_history_[0]),
        "final_loss": float(model.loss_history_[-1]),
        "train_r2": surrogate.r_squared(model.predict(X), Y),
        "model_sha256": records.file_checksum(args.out),
    }
    if args.report:
        records.write_json_atomic(report, args.report)
    print(
        f"fit: loss {report['initial_loss']:.6g} -> {report['final_loss']:.6g}, "
        f"train R2 {report['train_r2']:.4f}, model -> {args.out}"
    )
    return 0


def _cmd_cv(args) -> int:
    cfg = load_run_config(args.config)
    header, samples = records.read_samples(args.samples)
    _check_dims(cfg, header, args.samples)
    folds = cfg.folds if args.folds is None else args.folds
    seed = cfg.seed if args.seed is None else args.seed
    result = surrogate.cross_validate(samples, folds=folds, cfg=cfg.train, seed=seed)
    for i, r2 in enumerate(result.fold_r2):
        print(f"fold {i + 1:2d}: R2 = {r2:.4f}  ({result.fold_sizes[i]} samples)")
    print(f"mean R2 = {result.mean_r2:.4f}")
    report = {
        "schema": records.SCHEMA_VERSION,
        "kind": "cv_report",
        "config": cfg.effective(),
        "inputs": {"samples": _input_stamp(args.samples)},
        "folds": folds,
        "seed": seed,
        "fold_r2": list(result.fold_r2),
        "fold_sizes": list(result.fold_sizes),
        "mean_r2": result.mean_r2,
    }
    if args.out:
        records.write_json_atomic(report, args.out)
    return 0


def _cmd_extrapolate(args) -> int:
    cfg = load_run_config(args.config)
    model = surrogate.load_surrogate(args.model)
    top_k = cfg.top_k if args.top_k is None else args.top_k
    t0 = time.perf_counter()
    result = optimize.rank_lattice(
        model, cfg.m, cfg.b, list(cfg.grid), cfg.T, top_k,
        shards=args.shards, workers=args.workers,
    )
    elapsed = time.perf_counter() - t0
    header = {
        "schema": records.SCHEMA_VERSION,
        "kind": "ranking",
        "config": cfg.effective(),
        "inputs": {"model": _input_stamp(args.model)},
        "top_k": result.top_k_requested,
        "capped": result.capped,
        "lattice_points": result.lattice_points,
    }
    rows = [
        {
            "rank": e.rank,
            "counts": list(e.mixture.counts),
            "best_step": e.best_step,
            "scores": list(e.scores),
            "average": e.average,
        }
        for e in result.entries
    ]
    records.write_jsonl_atomic(header, rows, args.out)
    print(
        f"ranked {result.lattice_points} mixtures, kept top {len(result.entries)} -> {args.out}"
    )
    if result.capped:
        print(f"warning: top-k {result.top_k_requested} exceeds lattice size; full ranking written", file=sys.stderr)
    print(f"sweep wall time: {elapsed:.2f}s", file=sys.stderr)
    return 0


def _cmd_calibrate(args) -> int:
    model = surrogate.load_surrogate(args.model)
    header, samples = records.read_samples(args.samples)
    X, Y = records.design_matrix(samples)
    preds = model.predict(X)
    cmap = cal.fit_calibration(preds, Y, mode=args.mode)
    report = cal.correlation_report(preds, Y, cmap)
    cal.save_calibration(cmap, args.out, base_model="surrogate", target_model=header.get("model_id", ""))
    if args.report:
        records.write_json_atomic(
            {
                "schema": records.SCHEMA_VERSION,
                "kind": "calibration_report",
                "mode": args.mode,
                "inputs": {
                    "model": _input_stamp(args.model),
                    "samples": _input_stamp(args.samples),
                },
                "n_samples": report.n_samples,
                "pearson_r_before": report.pearson_r_before,
                "pearson_r_after": report.pearson_r_after,
                "pairs_before": [list(p) for p in report.pairs_before],
                "pairs_after": [list(p) for p in report.pairs_after],
            },
            args.report,
        )
    print(
        f"calibration ({args.mode}, {report.n_samples} samples): "
        f"r {report.pearson_r_before:.4f} -> {report.pearson_r_after:.4f}, map -> {args.out}"
    )
    return 0


def _cmd_baseline(args) -> int:
    cfg = load_run_config(args.config)
    header = {
        "schema": records.SCHEMA_VERSION,
        "kind": "baseline_report",
        "baseline": args.kind,
        "config": cfg.effective(),
    }
    rows = []
    if args.kind == "uniform":
        p = lattice.uniform_mixture(cfg.m)
        rows.append({"proportions": p.tolist()})
    elif args.kind == "natural":
        if not args.catalog:
            raise DomainError("natural baseline needs --catalog")
        catalog = lattice.load_catalog(args.catalog)
        if catalog.m != cfg.m:
            raise DomainError(f"catalog has {catalog.m} datasets, config says m={cfg.m}")
        header["inputs"] = {"catalog": _input_stamp(args.catalog)}
        p = lattice.natural_mixture(catalog)
        rows.append({"proportions": p.tolist(), "names": list(catalog.names)})
    else:  # dml
        if not args.samples:
            raise DomainError("dml baseline needs --samples")
        s_header, samples = records.read_samples(args.samples)
        _check_dims(cfg, s_header, args.samples)
        header["inputs"] = {"samples": _input_stamp(args.samples)}
        step = max(s.step for s in samples)
        laws = lawfit.fit_all_tasks(samples, step=step, seed=cfg.seed)
        for j, law in enumerate(laws):
            rows.append(
                {
                    "task": j,
                    "intercept": law.intercept,
                    "scale": law.scale,
                    "slopes": list(law.slopes),
                    "residual_mse": law.residual_mse,
                    "iterations": law.iterations,
                    "converged": law.converged,
                }
            )
        best = lawfit.exp_law_best_mixture(laws, cfg.b)
        rows.append(
            {
                "selection": {
                    "counts": list(best.counts),
                    "proportions": lattice.to_proportions(best).tolist(),
                    "step": step,
                }
            }
        )
    records.write_jsonl_atomic(header, rows, args.out)
    print(f"{args.kind} baseline -> {args.out}")
    return 0


def _cmd_averages(args) -> int:
    """Emit per-record overall averages as CSV (histogram/scatter data for external plotting)."""
    import csv
    import io

    header, samples = records.read_samples(args.samples)
    buf = io.StringIO()
    writer = csv.writer(buf, lineterminator="\n")
    writer.writerow(["run_id", "counts", "step", "average"])
    for s in samples:
        writer.writerow([s.run_id, " ".join(map(str, s.mixture.counts)), s.step,
                         float(sum(s.scores) / len(s.scores))])
    records.write_text_atomic(buf.getvalue(), args.out)
    print(f"{len(samples)} overall averages -> {args.out}")
    return 0


def _cmd_metrics(args) -> int:
    lines = [line.strip() for line in Path(args.queries).read_text(encoding="utf-8").splitlines()]
    queries = [metrics.tokenize(line) for line in lines if line]
    report = {
        "schema": records.SCHEMA_VERSION,
        "kind": "metrics_report",
        "inputs": {"queries": _input_stamp(args.queries)},
        "n_queries": len(queries),
        "diversity": metrics.diversity(queries),
    }
    if args.nodes is not None or args.edges is not None:
        if args.nodes is None or args.edges is None:
            raise DomainError("--nodes and --edges must be given together")
        report["dag_complexity"] = metrics.dag_complexity(metrics.PlanGraph(args.nodes, args.edges))
    records.write_json_atomic(report, args.out)
    print(f"metrics ({len(queries)} queries): diversity = {report['diversity']:.4f} -> {args.out}")
    return 0


def _check_dims(cfg: RunConfig, header: dict, path) -> None:
    for field in ("m", "k", "b", "T"):
        if int(header[field]) != getattr(cfg, field):
            raise DomainError(
                f"{path}: field '{field}' is {header[field]} but config says {getattr(cfg, field)}"
            )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="mixopt",
        description="Surrogate-based data-mixture optimization over the fixed mixing lattice.",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("make-oracle", help="generate a synthetic dynamics oracle")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--preset", choices=sorted(simdyn.PRESETS), default="smooth")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_make_oracle)

    p = sub.add_parser("design", help="sample mixtures and emit an experiment plan")
    p.add_argument("--config", required=True)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--n", type=int, default=None, help="override n_mixtures")
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_design)

    p = sub.add_parser("simulate", help="fill a plan's cells with oracle scores")
    p.add_argument("--plan", required=True)
    p.add_argument("--oracle", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_simulate)

    p = sub.add_parser("fit", help="train the surrogate on a sample record file")
    p.add_argument("--config", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--seed", type=int, default=None, help="override training seed")
    p.add_argument("--out", required=True, help="model checkpoint path")
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_fit)

    p = sub.add_parser("cv", help="grouped k-fold cross-validation R^2")
    p.add_argument("--config", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--folds", type=int, default=None)
    p.add_argument("--seed", type=int, default=None)
    p.add_argument("--out", default=None)
    p.set_defaults(func=_cmd_cv)

    p = sub.add_parser("extrapolate", help="rank every lattice mixture with a trained surrogate")
    p.add_argument("--config", required=True)
    p.add_argument("--model", required=True)
    p.add_argument("--top-k", type=int, default=None)
    p.add_argument("--shards", type=int, default=1)
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_extrapolate)

    p = sub.add_parser("calibrate", help="fit an affine cross-model correction")
    p.add_argument("--model", required=True)
    p.add_argument("--samples", required=True, help="calibration samples from the target model")
    p.add_argument("--mode", choices=cal.MODES, default="diagonal")
    p.add_argument("--out", required=True, help="calibration map path")
    p.add_argument("--report", default=None)
    p.set_defaults(func=_cmd_calibrate)

    p = sub.add_parser("baseline", help="uniform / natural / exponential-law baselines")
    p.add_argument("--kind", choices=("uniform", "natural", "dml"), required=True)
    p.add_argument("--config", required=True)
    p.add_argument("--catalog", default=None)
    p.add_argument("--samples", default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_baseline)

    p = sub.add_parser("averages", help="dump overall average scores as CSV plot data")
    p.add_argument("--samples", required=True)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_averages)

    p = sub.add_parser("metrics", help="benchmark quality metrics for a query file")
    p.add_argument("--queries", required=True, help="text file, one query per line")
    p.add_argument("--nodes", type=int, default=None)
    p.add_argument("--edges", type=int, default=None)
    p.add_argument("--out", required=True)
    p.set_defaults(func=_cmd_metrics)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (DomainError, FileNotFoundError, json.JSONDecodeError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except TrainingError as exc:
        print(f"training failed: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # runtime failures keep a distinct exit code
        print(f"unexpected failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    raise SystemExit(main())
