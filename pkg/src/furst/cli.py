"""Experiment orchestration CLI.

Subcommands: generate | verify | stats | pipeline run | sweep | fit.
Exit codes: 0 ok, 2 config error, 3 degenerate pipeline, 4 invariant
violation. FURST_THREADS caps sweep parallelism.
"""

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

from . import stats
from .errors import (
    ConfigError,
    FurstError,
    InvariantViolation,
    PipelineDegenerate,
)
from .generators import GENERATORS, FurstInstance
from .grid import Scale
from .pipeline import PipelineParams, run_pipeline

STAGE_COLUMNS = [
    "E", "E1", "E2", "E3", "omega_prime", "Eprime_selection",
    "sum_omega_prime", "A_columns", "A_star", "pullback_mass", "J_count",
    "J_line_floor", "mu_decay", "F_radius", "fiber_lines_floor",
    "final_lower_bound",
]

SWEEP_COLUMNS = (
    ["k", "seed", "generator", "alpha", "beta", "cells", "measure",
     "gamma_measured", "product_deficiency", "appendix_ratio", "degenerate"]
    + [f"ratio:{name}" for name in STAGE_COLUMNS]
)


def _threads() -> int:
    try:
        return max(1, int(os.environ.get("FURST_THREADS", "1")))
    except ValueError:
        return 1


def _make_instance(generator: str, alpha: float, beta: float, k: int, seed: int):
    if generator not in GENERATORS:
        raise ConfigError(f"unknown generator {generator!r}; choose from {sorted(GENERATORS)}")
    return GENERATORS[generator](alpha, beta, Scale(k), seed)


def cmd_generate(args) -> int:
    inst = _make_instance(args.generator, args.alpha, args.beta, args.k, args.seed)
    inst.save(args.out)
    print(f"wrote instance to {args.out}: {len(inst.omega)} lines, "
          f"{inst.e_union.cell_count} cells, measure {inst.e_union.measure:.6g}")
    return 0


def cmd_verify(args) -> int:
    inst = FurstInstance.load(args.inst, validate=False)
    report = inst.verify(raise_on_failure=False)
    print(json.dumps({k: v for k, v in report.items()}, indent=2, default=float))
    return 0 if report["ok"] else 4


def cmd_stats(args) -> int:
    inst = FurstInstance.load(args.inst, validate=False)
    pc = stats.relation_pairs(inst)
    appendix = stats.appendix_bound(inst)
    inter = stats.pairwise_intersections(inst)
    out = {
        "cells": pc.cells,
        "union_pairs": pc.union_pairs,
        "sum_pairs": pc.sum_pairs,
        "gamma_measured": pc.gamma_measured,
        "product_deficiency": pc.product_deficiency,
        "appendix_ratio": appendix.ratio,
        "appendix_shells": {str(k): v for k, v in appendix.shells.items()},
        "appendix_identity_ok": appendix.identity_ok,
        "pairwise_cap_ratio": inter.max_cap_ratio,
        "double_counting_ok": stats.double_counting_identity(inst),
    }
    text = json.dumps(out, indent=2)
    if args.out:
        Path(args.out).write_text(text)
    print(text)
    return 0


def cmd_pipeline_run(args) -> int:
    inst = _make_instance(args.generator, args.alpha, args.beta, args.k, args.seed)
    params = None
    if args.gamma is not None:
        params = PipelineParams(alpha=args.alpha, gamma=args.gamma, eps=args.eps)
    trace = run_pipeline(inst, params=params, seed=args.seed)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    (out / "trace.json").write_text(json.dumps(trace.to_json_obj(), indent=2))
    with open(out / "stages.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        for row in trace.csv_rows():
            writer.writerow(row)
    for name, obj in trace.sets.items():
        if hasattr(obj, "to_bytes"):
            (out / f"{name}.bin").write_bytes(obj.to_bytes())
    print(f"pipeline completed; trace in {out}")
    print(f"  gamma_used={trace.gamma_used:.4f} "
          f"lower_bound={trace.values.get('final_lower_bound'):.4g} "
          f"|E|={inst.e_union.measure:.4g}")
    return 0


def _load_config(path: str) -> dict:
    try:
        cfg = json.loads(Path(path).read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    for key in ("generator", "alpha", "beta", "k_min", "k_max", "seeds", "out"):
        if key not in cfg:
            raise ConfigError(f"config missing key {key!r}")
    if not (4 <= cfg["k_min"] <= cfg["k_max"] <= 12):
        raise ConfigError("k range must sit inside [4, 12]")
    if not cfg["seeds"]:
        raise ConfigError("need at least one seed")
    if cfg["generator"] not in GENERATORS:
        raise ConfigError(f"unknown generator {cfg['generator']!r}")
    return cfg


def _sweep_row(cfg: dict, k: int, seed: int) -> dict:
    inst = _make_instance(cfg["generator"], cfg["alpha"], cfg["beta"], k, seed)
    pc = stats.relation_pairs(inst)
    appendix = stats.appendix_bound(inst)
    row = {
        "k": k, "seed": seed, "generator": cfg["generator"],
        "alpha": cfg["alpha"], "beta": cfg["beta"],
        "cells": inst.e_union.cell_count, "measure": inst.e_union.measure,
        "gamma_measured": pc.gamma_measured,
        "product_deficiency": pc.product_deficiency,
        "appendix_ratio": appendix.ratio,
        "degenerate": "",
    }
    for name in STAGE_COLUMNS:
        row[f"ratio:{name}"] = ""
    if cfg.get("include_pipeline"):
        try:
            trace = run_pipeline(inst, seed=seed)
            ratios = {r.stage: r.ratio for r in trace.records}
            for name in STAGE_COLUMNS:
                if ratios.get(name) is not None:
                    row[f"ratio:{name}"] = ratios[name]
        except PipelineDegenerate as exc:
            row["degenerate"] = exc.stage
    if cfg.get("save_instances"):
        inst.save(Path(cfg["out"]) / f"inst_k{k}_s{seed}")
    return row


def cmd_sweep(args) -> int:
    cfg = _load_config(args.config)
    jobs = [(k, seed) for k in range(cfg["k_min"], cfg["k_max"] + 1)
            for seed in cfg["seeds"]]
    workers = _threads()
    if workers > 1:
        with ThreadPoolExecutor(max_workers=workers) as pool:
            rows = list(pool.map(lambda job: _sweep_row(cfg, *job), jobs))
    else:
        rows = [_sweep_row(cfg, *job) for job in jobs]
    rows.sort(key=lambda r: (r["k"], r["seed"]))
    out = Path(cfg["out"])
    out.mkdir(parents=True, exist_ok=True)
    target = out / "sweep.csv"
    with open(target, "w", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
    print(f"wrote {len(rows)} rows to {target}")
    return 0


def cmd_fit(args) -> int:
    try:
        with open(args.csv, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read {args.csv}: {exc}") from exc
    if not rows or "k" not in rows[0] or "measure" not in rows[0]:
        raise ConfigError("CSV must carry k and measure columns")
    try:
        runs = [(int(r["k"]), float(r["measure"])) for r in rows]
    except (ValueError, TypeError) as exc:
        raise ConfigError(f"malformed CSV: {exc}") from exc
    fit = stats.exponent_fit(runs)
    print(f"dimension estimate d = {fit.dimension:.4f} "
          f"(slope {fit.slope:.4f}, residual {fit.residual:.4f})")
    if args.alpha is not None and args.beta is not None:
        a, b = args.alpha, args.beta
        lines = {
            "max(2a+b-1, a+b/2)": max(2 * a + b - 1, a + b / 2),
            "a+min(a,b)": a + min(a, b),
            "2a (the improved-bound baseline)": 2 * a,
        }
        print("comparison against the reference exponents:")
        for name, val in lines.items():
            print(f"  {name:34s} {val:.4f}   fit - ref = {fit.dimension - val:+.4f}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    p = argparse.ArgumentParser(prog="furst", description=__doc__)
    sub = p.add_subparsers(dest="command", required=True)

    g = sub.add_parser("generate", help="generate an instance directory")
    g.add_argument("--generator", required=True, choices=sorted(GENERATORS))
    g.add_argument("--alpha", type=float, required=True)
    g.add_argument("--beta", type=float, required=True)
    g.add_argument("--k", type=int, required=True)
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_generate)

    v = sub.add_parser("verify", help="re-run instance invariants")
    v.add_argument("--inst", required=True)
    v.set_defaults(func=cmd_verify)

    st = sub.add_parser("stats", help="pair counts and appendix diagnostics")
    st.add_argument("--inst", required=True)
    st.add_argument("--out")
    st.set_defaults(func=cmd_stats)

    pl = sub.add_parser("pipeline", help="proof pipeline")
    plsub = pl.add_subparsers(dest="pipeline_command", required=True)
    pr = plsub.add_parser("run", help="generate an instance and run all stages")
    pr.add_argument("--alpha", type=float, required=True)
    pr.add_argument("--beta", type=float, required=True)
    pr.add_argument("--k", type=int, required=True)
    pr.add_argument("--generator", default="cantor_target", choices=sorted(GENERATORS))
    pr.add_argument("--seed", type=int, default=0)
    pr.add_argument("--eps", type=float, default=0.01)
    pr.add_argument("--gamma", type=float, default=None,
                    help="override the measured deficiency exponent")
    pr.add_argument("--out", required=True)
    pr.set_defaults(func=cmd_pipeline_run)

    sw = sub.add_parser("sweep", help="scale sweep from a JSON config")
    sw.add_argument("--config", required=True)
    sw.set_defaults(func=cmd_sweep)

    f = sub.add_parser("fit", help="box-dimension regression over a sweep CSV")
    f.add_argument("--csv", required=True)
    f.add_argument("--alpha", type=float)
    f.add_argument("--beta", type=float)
    f.set_defaults(func=cmd_fit)
    return p


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 2
    except PipelineDegenerate as exc:
        print(f"degenerate pipeline: {exc}", file=sys.stderr)
        return 3
    except InvariantViolation as exc:
        print(f"invariant violation: {exc}", file=sys.stderr)
        return 4
    except FurstError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
