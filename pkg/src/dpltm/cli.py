"""Command line: ``dpltm {simulate,fit,infer,evaluate,benchmark}``.

Exit codes: 0 success, 2 configuration error, 3 data error, 4 numerical failure
(including benchmark runs with failed replicates).
"""
from __future__ import annotations

import argparse
import csv
import hashlib
import json
import logging
import os
import sys
import traceback
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np
from threadpoolctl import threadpool_limits

from . import __version__
from . import config as config_mod
from .data import SurvivalDataset, read_csv, split, write_csv
from .errors import ConfigError, DataError, DpltmError, NumericalError
from .inference import infer
from .metrics import evaluate
from .model import load_model, save_model
from .simulator import H0, calibrate_c0, make_rng, simulate
from .trainer import grid_search, select_error_model

log = logging.getLogger("dpltm")


# ---------------------------------------------------------------- helpers

def _fmt(v):
    if v is None:
        return ""
    if isinstance(v, (bool, np.bool_)):
        return str(bool(v))
    if isinstance(v, (int, np.integer)):
        return str(int(v))
    if isinstance(v, (float, np.floating)):
        return repr(float(v))
    return str(v)


def write_rows(path, rows, fieldnames=None) -> None:
    if fieldnames is None:
        fieldnames = []
        for row in rows:
            fieldnames += [k for k in row if k not in fieldnames]
    with Path(path).open("w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=fieldnames)
        w.writeheader()
        for row in rows:
            w.writerow({k: _fmt(row.get(k)) for k in fieldnames})


def _sha256(path) -> str:
    return hashlib.sha256(Path(path).read_bytes()).hexdigest()


def write_manifest(out: Path, command: str, cfg: dict, files, extra=None) -> None:
    doc = {"artifact_version": __version__, "command": command, "seed": cfg["seed"],
           "config_hash": config_mod.config_hash(cfg), "config": cfg,
           "outputs": {Path(f).name: _sha256(f) for f in files}}
    doc.update(extra or {})
    (out / "manifest.json").write_text(json.dumps(doc, indent=1, sort_keys=True) + "\n")


def _resolve_c0(cfg: dict) -> dict:
    """Fill ``simulate.c0`` by calibration when requested."""
    sim = cfg["simulate"]
    if sim["calibrate"] and sim["c0"] is None:
        design = config_mod.sim_design(cfg)
        sim = {**sim, "c0": calibrate_c0(design, float(sim["censoring_target"]))}
        cfg = {**cfg, "simulate": sim}
    return cfg


def _truth_rows(truth):
    return [{"u_true": u, "g0": g, "linpred": lp} for u, g, lp in zip(truth.u_true, truth.g0, truth.linpred)]


def _fit(cfg: dict, train: SurvivalDataset, val: SurvivalDataset, seed: int):
    grid = config_mod.train_grid(cfg, seed)
    rs = cfg["fit"]["r_candidates"]
    if len(rs) == 1:
        best, board = grid_search(train, val, grid, float(rs[0]))
        return best, board
    best, _, board = select_error_model(train, val, grid, rs, cfg["fit"]["selection"])
    return best, board


class _Truth:
    def __init__(self, g0, r):
        self.g0 = np.asarray(g0, dtype=float)
        self.r = float(r)

    def H0(self, t):
        return H0(self.r, t)


def _read_truth(path, r: float) -> _Truth:
    path = Path(path)
    try:
        with path.open(newline="") as fh:
            rows = list(csv.DictReader(fh))
        g0 = [float(row["g0"]) for row in rows]
    except (OSError, KeyError, ValueError) as exc:
        raise DataError(f"{path}: unreadable truth file ({exc})") from None
    return _Truth(g0, r)


# ---------------------------------------------------------------- commands

def cmd_simulate(cfg: dict, out: Path, args) -> int:
    cfg = _resolve_c0(cfg)
    design = config_mod.sim_design(cfg)
    data, truth = simulate(design)
    write_csv(data, out / "data.csv")
    write_rows(out / "truth.csv", _truth_rows(truth), ["u_true", "g0", "linpred"])
    write_manifest(out, "simulate", cfg, [out / "data.csv", out / "truth.csv"],
                   {"design": design.to_dict(), "c0": design.censoring_bound(),
                    "censoring_rate": data.censoring_rate()})
    log.info("simulated %d records, censoring rate %.3f", data.n, data.censoring_rate())
    return 0


def cmd_fit(cfg: dict, out: Path, args) -> int:
    data = read_csv(args.data)
    parts = split(data, cfg["fit"]["split"], rng=make_rng(cfg["seed"], 5))
    train, val = parts[0], parts[1]
    best, board = _fit(cfg, train, val, cfg["seed"])
    meta = {"validation_loglik": best.validation_loglik, "best_epoch": best.best_epoch,
            "config": best.config.to_dict(), "r": best.error.r, "n_train": train.n,
            "n_validation": val.n, "z_names": data.z_names, "x_names": data.x_names}
    save_model(best.params, out / "model.json", meta)
    write_rows(out / "leaderboard.csv", board)
    write_rows(out / "fit_log.csv", [{"epoch": i + 1, "train_loss": a, "validation_loss": b}
                                     for i, (a, b) in enumerate(zip(best.train_loss_curve,
                                                                    best.validation_loss_curve))])
    files = [out / "model.json", out / "leaderboard.csv", out / "fit_log.csv"]
    for part in parts:
        write_csv(part, out / f"{part.split}.csv")
        files.append(out / f"{part.split}.csv")
    write_manifest(out, "fit", cfg, files, {"data": str(args.data)})
    log.info("selected r=%g, validation log-likelihood %.4f (epoch %d)", best.error.r,
             best.validation_loglik, best.best_epoch)
    return 0


def cmd_infer(cfg: dict, out: Path, args) -> int:
    params, _ = load_model(args.model)
    data = read_csv(args.data)
    report, info = infer(params, data, config_mod.direction_config(cfg), cfg["infer"]["level"])
    (out / "inference.csv").write_text(report.to_csv())
    (out / "inference.json").write_text(report.to_json() + "\n")
    (out / "inference.txt").write_text(report.table() + "\n")
    write_manifest(out, "infer", cfg, [out / "inference.csv", out / "inference.json", out / "inference.txt"],
                   {"model": str(args.model), "data": str(args.data),
                    "direction_objective": float(info.directions.objective_curve[-1])})
    if not args.quiet:
        print(report.table())
    return 0


def cmd_evaluate(cfg: dict, out: Path, args) -> int:
    params, _ = load_model(args.model)
    data = read_csv(args.data)
    truth = None
    if args.truth:
        r = cfg["evaluate"]["true_r"]
        truth = _read_truth(args.truth, cfg["simulate"]["r"] if r is None else r)
        if truth.g0.size != data.n:
            raise DataError(f"truth file has {truth.g0.size} rows, data has {data.n}")
    t0 = cfg["evaluate"]["t0"]
    report = evaluate(params, data, truth, t0=t0, wise_grid=cfg["evaluate"]["wise_grid"])
    row = report.to_dict()
    write_rows(out / "evaluation.csv", [row])
    (out / "evaluation.json").write_text(json.dumps(row, indent=1) + "\n")
    write_manifest(out, "evaluate", cfg, [out / "evaluation.csv", out / "evaluation.json"],
                   {"model": str(args.model), "data": str(args.data), "truth": args.truth})
    if not args.quiet:
        print(json.dumps(row, indent=1))
    return 0


def replicate_seed(master: int, index: int) -> int:
    return int(np.random.SeedSequence([master, index]).generate_state(1)[0])


def run_replicate(cfg: dict, index: int) -> dict:
    """Simulate, split, fit, infer and evaluate one replicate; never raises."""
    master = cfg["seed"]
    row = {"replicate": index, "seed": replicate_seed(master, index)}
    try:
        with threadpool_limits(1):
            design = config_mod.sim_design(cfg)
            data, _ = simulate(design, rng=make_rng(master, index, 0))
            n_test = max(1, int(round(cfg["benchmark"]["test_fraction"] * design.n)))
            test, test_truth = simulate(design, rng=make_rng(master, index, 1), n=n_test)
            train, val = split(data, cfg["fit"]["split"][:2] if len(cfg["fit"]["split"]) == 2
                               else (0.8, 0.2), rng=make_rng(master, index, 2))
            best, _ = _fit(cfg, train, val, row["seed"])
            row.update({"censoring_rate": data.censoring_rate(), "r": best.error.r,
                        "best_epoch": best.best_epoch, "validation_loglik": best.validation_loglik,
                        "initial_train_loss": best.initial_train_loss,
                        "final_train_loss": float(best.train_loss_curve[best.best_epoch - 1])})
            beta0 = np.asarray(design.beta0)
            for j, b in enumerate(best.params.beta):
                row[f"beta{j + 1}"] = float(b)
            if cfg["infer"]["enabled"]:
                report, _ = infer(best.params, train, config_mod.direction_config(cfg, row["seed"]),
                                  cfg["infer"]["level"])
                for j in range(beta0.size):
                    row[f"se{j + 1}"] = float(report.se[j])
                    row[f"cover{j + 1}"] = int(report.ci_low[j] <= beta0[j] <= report.ci_high[j])
                    row[f"p{j + 1}"] = float(report.p_value[j])
            ev = evaluate(best.params, test, test_truth, t0=cfg["evaluate"]["t0"],
                          wise_grid=cfg["evaluate"]["wise_grid"])
            row.update(ev.to_dict())
        row["status"] = "ok"
    except Exception as exc:  # recorded, the run continues
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
        row["traceback"] = traceback.format_exc(limit=3)
    return row


def _run_one(args):
    return run_replicate(*args)


def aggregate(rows: list, beta0) -> dict:
    ok = [r for r in rows if r["status"] == "ok"]
    agg = {"replicates": len(rows), "ok": len(ok), "failed": len(rows) - len(ok)}
    if not ok:
        return agg

    def col(k):
        return np.array([r[k] for r in ok if r.get(k) is not None], dtype=float)

    for j, b0 in enumerate(beta0, start=1):
        b = col(f"beta{j}")
        agg[f"beta{j}_mean"] = float(b.mean())
        agg[f"beta{j}_bias"] = float(b.mean() - b0)
        agg[f"beta{j}_sd"] = float(b.std(ddof=1)) if b.size > 1 else float("nan")
        if all(f"se{j}" in r for r in ok):
            agg[f"beta{j}_mean_se"] = float(col(f"se{j}").mean())
            agg[f"beta{j}_coverage_count"] = int(col(f"cover{j}").sum())
            agg[f"beta{j}_coverage"] = float(col(f"cover{j}").mean())
    metric_keys = [k for k in ok[0] if k in ("c_index", "re_g", "wise_h") or k.startswith("ici_")]
    for k in metric_keys:
        v = col(k)
        agg[f"{k}_mean"] = float(v.mean())
        agg[f"{k}_sd"] = float(v.std(ddof=1)) if v.size > 1 else float("nan")
    return agg


def run_benchmark(cfg: dict, threads: int) -> tuple:
    cfg = _resolve_c0(cfg)
    R = cfg["benchmark"]["replicates"]
    jobs = [(cfg, i) for i in range(R)]
    if threads <= 1:
        rows = [run_replicate(c, i) for c, i in jobs]
    else:
        with ProcessPoolExecutor(max_workers=min(threads, R)) as pool:
            rows = list(pool.map(_run_one, jobs))
    rows.sort(key=lambda r: r["replicate"])
    return cfg, rows, aggregate(rows, cfg["simulate"]["beta0"])


def cmd_benchmark(cfg: dict, out: Path, args) -> int:
    threads = args.threads or cfg["benchmark"]["threads"] or os.cpu_count() or 1
    cfg, rows, agg = run_benchmark(cfg, threads)
    failures = [r for r in rows if r["status"] != "ok"]
    write_rows(out / "replicates.csv", [{k: v for k, v in r.items() if k != "traceback"} for r in rows])
    write_rows(out / "aggregate.csv", [agg])
    files = [out / "replicates.csv", out / "aggregate.csv"]
    if failures:
        write_rows(out / "failures.csv", [{"replicate": r["replicate"], "seed": r["seed"],
                                           "error": r["error"], "traceback": r["traceback"]}
                                          for r in failures])
        files.append(out / "failures.csv")
    write_manifest(out, "benchmark", cfg, files, {"failed_replicates": len(failures)})
    for r in failures:
        log.warning("replicate %d (seed %d) failed: %s", r["replicate"], r["seed"], r["error"])
    log.info("%d replicates, %d failed", len(rows), len(failures))
    return 4 if failures else 0


COMMANDS = {"simulate": cmd_simulate, "fit": cmd_fit, "infer": cmd_infer,
            "evaluate": cmd_evaluate, "benchmark": cmd_benchmark}


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", help="YAML or JSON run configuration")
    common.add_argument("--seed", type=int, help="master seed (overrides the config)")
    common.add_argument("--out", default=".", help="output directory (created if missing)")
    common.add_argument("--threads", type=int, help="worker processes for benchmark")
    common.add_argument("--quiet", action="store_true", help="only warnings and errors on stderr")

    parser = argparse.ArgumentParser(prog="dpltm", description=__doc__.splitlines()[0])
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("simulate", parents=[common], help="draw a synthetic dataset")
    p = sub.add_parser("fit", parents=[common], help="fit a model to a dataset CSV")
    p.add_argument("--data", required=True)
    p = sub.add_parser("infer", parents=[common], help="Wald inference for the linear coefficients")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p = sub.add_parser("evaluate", parents=[common], help="C-index, ICI and (with truth) RE/WISE")
    p.add_argument("--model", required=True)
    p.add_argument("--data", required=True)
    p.add_argument("--truth", help="truth CSV written by simulate (enables RE and WISE)")
    sub.add_parser("benchmark", parents=[common], help="replicated simulate/fit/infer/evaluate")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO,
                        format="%(levelname)s %(message)s", stream=sys.stderr)
    try:
        cfg = config_mod.load(args.config) if args.config else config_mod.parse({})
        if args.seed is not None:
            if args.seed < 0:
                raise ConfigError("--seed must be nonnegative")
            cfg = {**cfg, "seed": args.seed}
        if args.threads is not None and args.threads < 1:
            raise ConfigError("--threads must be positive")
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        return COMMANDS[args.command](cfg, out, args)
    except DpltmError as exc:
        log.error("%s", exc)
        return exc.exit_code
    except ValueError as exc:
        # remaining domain errors come from numerical routines
        log.error("%s", exc)
        return NumericalError.exit_code
    except OSError as exc:
        log.error("%s", exc)
        return DataError.exit_code


if __name__ == "__main__":
    sys.exit(main())
