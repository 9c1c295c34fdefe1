"""Command line front end: ``python3 -m implicitbias <subcommand>``.

Subcommands
-----------
gen-data      write a canonical dataset to CSV
solve-margin  max-margin report (JSON) for a dataset CSV
run           one optimizer config on one dataset, or a JSON manifest of cells
rates         predicted gaps on the checkpoint grid used by ``run``
ode-example   gradient flow on {(1,0), (0,2)} against the closed forms
report        SVG plots and fitted constants from trajectory CSVs
"""

from __future__ import annotations

import argparse
import csv
import json
import math
import os
import sys
from concurrent.futures import ProcessPoolExecutor
from pathlib import Path

import numpy as np

from . import dataset as D
from . import flow as F
from . import optimize as O
from . import rates as R
from .losses import LossSpec
from .maxmargin import MaxMarginError, solve_a, solve_hard_margin, solve_wtilde
from .svg import write_plot

SCHEMA_VERSION = 1


class CLIError(Exception):
    pass


def _dump_json(obj, path) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True, default=_jsonable) + "\n")


def _jsonable(o):
    if isinstance(o, np.ndarray):
        return o.tolist()
    if isinstance(o, (np.floating, np.integer)):
        return o.item()
    if isinstance(o, np.bool_):
        return bool(o)
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _fmt(v) -> str:
    return "" if v is None or not math.isfinite(v) else "%.17g" % v


# ---------------------------------------------------------------------------
# datasets

def build_dataset(spec: dict, base: Path | None = None) -> D.Dataset:
    """Dataset from a manifest entry: ``{"path": ...}`` or ``{"kind": ...}``."""
    if "path" in spec:
        p = Path(spec["path"])
        return D.load_csv(p if p.is_absolute() or base is None else base / p)
    kind = spec.get("kind")
    if kind == "fig1":
        return D.make_fig1_dataset(int(spec.get("n_extra_per_class", 6)), int(spec.get("seed", 0)),
                                   bool(spec.get("rescaled", True)))
    if kind == "appendix_d":
        return D.make_appendix_d_dataset(bool(spec.get("rescaled", False)))
    if kind == "gaussian":
        return D.make_gaussian_dataset(int(spec.get("n_per_class", 10)), int(spec.get("seed", 0)),
                                       tuple(spec.get("mean", (5.0, 2.0))), float(spec.get("scale", 1.0)),
                                       bool(spec.get("rescaled", False)))
    raise CLIError(f"unknown dataset kind {kind!r}")


def cmd_gen_data(args) -> int:
    spec = {"kind": args.kind.replace("-", "_"), "seed": args.seed, "n_extra_per_class": args.n_extra,
            "n_per_class": args.n_per_class}
    if args.no_rescale:
        spec["rescaled"] = False
    elif args.rescale:
        spec["rescaled"] = True
    ds = build_dataset(spec)
    D.save_csv(ds, args.out)
    print(f"wrote {args.out}: n={ds.n} dim={ds.dim}")
    return 0


# ---------------------------------------------------------------------------
# margin report

def margin_report(ds, nus=(), eta: float = 1.0) -> dict:
    sol = solve_hard_margin(ds)
    rep = {"schema_version": SCHEMA_VERSION, "points": ds.points, "w_hat": sol.w_hat,
           "w_hat_norm": float(np.linalg.norm(sol.w_hat)), "gamma": sol.gamma,
           "support": list(sol.support), "alpha": sol.alpha, "theta": sol.theta,
           "residuals": sol.residuals, "kkt_ok": sol.kkt_ok}
    try:
        c = R.table1_constants(sol)
        rep["a"] = solve_a(sol)
        rep["constants"] = {"C1": c.C1, "C2": c.C2, "C3": c.C3, "C2_printed": c.C2_printed}
    except MaxMarginError as exc:
        rep["a"] = None
        rep["constants"] = None
        rep["a_error"] = f"{type(exc).__name__}: {exc}"
    rep["w_tilde"] = {}
    for nu in nus:
        try:
            rep["w_tilde"][f"{nu:g}"] = solve_wtilde(sol, nu, eta)
        except MaxMarginError as exc:
            rep["w_tilde"][f"{nu:g}"] = f"{type(exc).__name__}: {exc}"
    rep["eta"] = eta
    return rep


def cmd_solve_margin(args) -> int:
    ds = D.load_csv(args.data)
    rep = margin_report(ds, args.nu or (), args.eta)
    _dump_json(rep, args.out)
    print(f"gamma={rep['gamma']:.12g} support={rep['support']} kkt_ok={rep['kkt_ok']}")
    return 0


# ---------------------------------------------------------------------------
# run

HARD_CHECKS = {"thm4": "thm4", "loss_bound": "loss_bound", "polyak": "polyak"}


def _fits(rec, algorithm: str) -> dict:
    t = rec.t
    out = {}
    slow = algorithm == "gd"
    plan = [("margin_gap", "inv_log" if slow else "logt_over_sqrt"),
            ("dist_gap", "inv_log"), ("angle_gap", "inv_log_sq")]
    for col, model in plan:
        y = rec[col]
        ok = (t > 1) & np.isfinite(y) & (y > 0)
        try:
            fit = R.fit_rate(t[ok], y[ok], model)
        except ValueError:
            continue
        out[col] = {"model": model, "constant": fit.constant, "drift": fit.drift,
                    "drift_shrinks": fit.drift_shrinks}
    return out


def trajectory_direction(rec, sol) -> dict:
    fr = F.FlowResult(rec.t, rec.iterates, np.exp(rec["logL"]))
    r = F.direction_limit_report(fr, sol)
    return {"classification": r.classification, "terminal_angle": r.terminal_angle,
            "relative_change": r.relative_change}


def summarize(rec, sol, cfg: O.OptimizerConfig) -> dict:
    hard = {}
    for name in HARD_CHECKS:
        c = rec.checks.get(name)
        hard[name] = "n/a" if c is None else ("pass" if c["passed"] else "fail")
    hard["kkt"] = "pass" if sol.kkt_ok else "fail"
    last = rec.at(int(rec.t[-1]))
    return {"config": cfg.to_dict(), "meta": rec.meta, "checks": rec.checks, "hard_checks": hard,
            "final": {k: (v if math.isfinite(v) else None) for k, v in last.items()},
            "fits": _fits(rec, cfg.algorithm), "direction": trajectory_direction(rec, sol)}


def run_cell(cfg_dict: dict, points, out_csv) -> dict:
    """Worker for one manifest cell; returns its summary."""
    ds = D.Dataset(points)
    cfg = O.OptimizerConfig.from_dict(cfg_dict)
    sol = solve_hard_margin(ds)
    rec = O.run(cfg, ds, sol)
    if out_csv is not None:
        rec.to_csv(out_csv)
    return summarize(rec, sol, cfg)


def _threads() -> int:
    v = os.environ.get("MD_THREADS")
    if v:
        try:
            return max(1, int(v))
        except ValueError:
            raise CLIError(f"MD_THREADS must be an integer, got {v!r}")
    return max(1, os.cpu_count() or 1)


def _all_pass(summary: dict) -> bool:
    return all(v != "fail" for v in summary["hard_checks"].values())


def run_manifest(manifest: dict, outdir: Path, base: Path | None = None) -> dict:
    """Execute every cell of ``manifest`` and write its artifacts into ``outdir``."""
    outdir.mkdir(parents=True, exist_ok=True)
    if "dataset" not in manifest or not manifest.get("cells"):
        raise CLIError("manifest needs 'dataset' and a non-empty 'cells' list")
    ds = build_dataset(manifest["dataset"], base)
    D.save_csv(ds, outdir / "dataset.csv")
    sol = solve_hard_margin(ds)
    preds = manifest.get("predictions", [])
    rep = margin_report(ds, [p["nu"] for p in preds if "nu" in p])
    _dump_json(rep, outdir / "margin.json")

    keys = [c["key"] for c in manifest["cells"]]
    if len(set(keys)) != len(keys):
        raise CLIError("cell keys must be unique")
    seed = manifest.get("seed")
    jobs = []
    for cell in manifest["cells"]:
        cfg = dict(cell["optimizer"])
        if seed is not None:
            cfg.setdefault("seed", seed)
        O.OptimizerConfig.from_dict(cfg)
        jobs.append((cell["key"], cfg, outdir / f"{cell['key']}.csv"))
    n = min(_threads(), len(jobs))
    if n <= 1:
        results = [run_cell(cfg, ds.points, p) for _, cfg, p in jobs]
    else:
        with ProcessPoolExecutor(max_workers=n) as ex:
            futs = [ex.submit(run_cell, cfg, ds.points, p) for _, cfg, p in jobs]
            results = [f.result() for f in futs]
    cells = dict(zip(keys, results))

    T = max(int(c["optimizer"].get("iterations", 10_000)) for c in manifest["cells"])
    ratio = float(manifest["cells"][0]["optimizer"].get("ratio", 1.25))
    if preds:
        write_predictions(sol, preds, O.checkpoint_grid(T, ratio), outdir / "predictions.csv")
    summary = {"schema_version": SCHEMA_VERSION, "name": manifest.get("name", ""),
               "dataset": {"n": ds.n, "dim": ds.dim, "scale_certificate": list(ds.scale_certificate)},
               "margin": {"gamma": sol.gamma, "support": list(sol.support), "kkt_ok": sol.kkt_ok,
                          "constants": rep["constants"]},
               "cells": cells, "all_hard_checks_pass": all(_all_pass(c) for c in cells.values())}
    if manifest.get("plots", True):
        recs = [(k, O.TrajectoryRecord.from_csv(outdir / f"{k}.csv")) for k in keys]
        pred = read_predictions(outdir / "predictions.csv") if preds else None
        summary["plots"] = emit_plots(recs, pred, outdir)
    _dump_json(summary, outdir / "summary.json")
    return summary


def cmd_run(args) -> int:
    cfg_obj = json.loads(Path(args.config).read_text())
    if "cells" in cfg_obj:
        outdir = Path(args.out)
        summary = run_manifest(cfg_obj, outdir, Path(args.config).resolve().parent)
        if args.data:
            print("note: --data ignored, the manifest defines its dataset", file=sys.stderr)
        for k, c in summary["cells"].items():
            print(f"{k}: {c['hard_checks']} direction={c['direction']['classification']}")
        return 0 if summary["all_hard_checks_pass"] else 1
    if not args.data:
        raise CLIError("--data is required with a single optimizer config")
    ds = D.load_csv(args.data)
    cfg = O.OptimizerConfig.from_dict(cfg_obj)
    sol = solve_hard_margin(ds)
    rec = O.run(cfg, ds, sol)
    rec.to_csv(args.out)
    summary = {"schema_version": SCHEMA_VERSION, **summarize(rec, sol, cfg)}
    spath = args.summary or str(Path(args.out).with_suffix(".summary.json"))
    _dump_json(summary, spath)
    print(f"wrote {args.out} and {spath}: {summary['hard_checks']}")
    return 0 if _all_pass(summary) else 1


# ---------------------------------------------------------------------------
# predictions

PRED_COLUMNS = ("t", "g", "dist", "angle", "margin")


def predictions_for(sol, p: dict, ts):
    """Predicted gap columns for one entry ``{"nu": v}`` or ``{"tail": name, "heavy": bool}``."""
    ts = np.asarray(ts, dtype=float)
    cols = {c: np.full(len(ts), np.nan) for c in PRED_COLUMNS}
    cols["t"] = ts
    if "nu" in p:
        ok = ts > math.e
        if np.any(ok):
            pr = R.predicted_gaps_table1(sol, float(p["nu"]), ts[ok])
    else:
        tail = R.named_tail(p["tail"])
        ok = ts >= 10.0
        if np.any(ok):
            pr = R.predicted_gaps_generic(sol, tail, ts[ok], bool(p.get("heavy", True)))
    if np.any(ok):
        cols["g"][ok], cols["dist"][ok] = pr.g, pr.dist
        cols["angle"][ok], cols["margin"][ok] = pr.angle, pr.margin
    return cols


def write_predictions(sol, preds, ts, path) -> None:
    with open(path, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("key",) + PRED_COLUMNS)
        for p in preds:
            key = p.get("key") or (f"nu={p['nu']:g}" if "nu" in p else p["tail"])
            cols = predictions_for(sol, p, ts)
            for i in range(len(ts)):
                wr.writerow([key, str(int(ts[i]))] + [_fmt(cols[c][i]) for c in PRED_COLUMNS[1:]])


def read_predictions(path) -> dict:
    with open(path, newline="") as fh:
        rows = list(csv.reader(fh))
    if not rows or tuple(rows[0]) != ("key",) + PRED_COLUMNS:
        raise CLIError(f"{path}: not a prediction CSV")
    out = {}
    for r in rows[1:]:
        d = out.setdefault(r[0], {c: [] for c in PRED_COLUMNS})
        for c, v in zip(PRED_COLUMNS, r[1:]):
            d[c].append(float(v) if v else math.nan)
    return {k: {c: np.array(v) for c, v in d.items()} for k, d in out.items()}


def cmd_rates(args) -> int:
    rep = json.loads(Path(args.margin).read_text())
    ds = D.Dataset(rep["points"])
    sol = solve_hard_margin(ds)
    if np.linalg.norm(sol.w_hat - np.asarray(rep["w_hat"])) > 1e-8:
        raise CLIError("margin report does not match its own points")
    preds = [{"nu": v} for v in (args.nu or [])] + [{"tail": n, "heavy": not args.light} for n in (args.tail or [])]
    if not preds:
        raise CLIError("give at least one --nu or --tail")
    write_predictions(sol, preds, O.checkpoint_grid(args.tmax, args.ratio), args.out)
    print(f"wrote {args.out}")
    return 0


# ---------------------------------------------------------------------------
# ode example

def ode_example(example: str, t_max: float, epsilon: float = 2.0, w0=None) -> dict:
    ds = D.make_appendix_d_dataset()
    sol = solve_hard_margin(ds)
    if example == "exp":
        spec, cf = LossSpec.exp(), F.exp_closed_form
        w0 = np.array([1.0, 1.0]) if w0 is None else np.asarray(w0, float)
    elif example == "powerlaw":
        spec, cf = LossSpec.powerlaw(), F.powerlaw_closed_form
        w0 = np.array([1.0, 1.0]) if w0 is None else np.asarray(w0, float)
    elif example == "subpoly":
        spec = LossSpec.subpolyexp(epsilon)
        cf = F.closed_form_for(spec)
        w0 = np.array([math.e, math.e]) if w0 is None else np.asarray(w0, float)
    else:
        raise CLIError(f"unknown example {example!r}")
    times = F.flow_time_grid(t_max)
    if example == "subpoly":
        lw1, lw2 = F.subpoly_closed_form_log(times, w0, epsilon)
    else:
        ref = cf(times, w0)
        lw1, lw2 = np.log(ref[:, 0]), np.log(ref[:, 1])
    note = None
    try:
        with np.errstate(over="raise"):
            fr = F.integrate_flow(spec, ds, w0, t_max, closed_form=cf if example != "subpoly" or np.all(
                np.isfinite(lw1) & (lw1 < 700)) else None, times=times)
        states, err = fr.states, fr.closed_form_error
        rep = F.direction_limit_report(fr, sol)
    except (RuntimeError, FloatingPointError) as exc:
        states, err, rep, note = None, None, None, str(exc)
    return {"example": example, "epsilon": epsilon if example == "subpoly" else None, "w0": w0,
            "times": times, "states": states, "log_w1_closed": lw1, "log_w2_closed": lw2,
            "ratio_closed": np.exp(lw1 - lw2), "closed_form_error": err, "report": rep, "note": note}


def cmd_ode_example(args) -> int:
    res = ode_example(args.example, args.tmax, args.epsilon, args.w0)
    with open(args.out, "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("t", "w1", "w2", "log_w1_closed", "log_w2_closed", "ratio_flow", "ratio_closed"))
        for i, t in enumerate(res["times"]):
            if res["states"] is not None:
                w1, w2 = res["states"][i]
                r = w1 / w2 if w2 != 0 else math.nan
            else:
                w1 = w2 = r = math.nan
            wr.writerow([_fmt(t), _fmt(w1), _fmt(w2), _fmt(res["log_w1_closed"][i]),
                         _fmt(res["log_w2_closed"][i]), _fmt(r), _fmt(res["ratio_closed"][i])])
    rep = res["report"]
    info = {"example": args.example, "closed_form_error": res["closed_form_error"],
            "terminal_ratio_closed": float(res["ratio_closed"][-1]),
            "classification": rep.classification if rep else None,
            "terminal_angle": rep.terminal_angle if rep else None, "note": res["note"]}
    print(json.dumps(info, default=_jsonable))
    return 0


# ---------------------------------------------------------------------------
# report

PLOTS = (("logL", "loss", "log L", False), ("w_norm", "norm", "||w||", True),
         ("angle_gap", "angle_gap", "1 - cos", True), ("margin_gap", "margin_gap", "margin gap", True))
PRED_FOR = {"angle_gap": "angle", "margin_gap": "margin"}


def emit_plots(recs, pred, outdir: Path) -> list:
    if not recs:
        raise CLIError("no trajectories given")
    t0 = recs[0][1].t
    for k, r in recs[1:]:
        if len(r.t) != len(t0) or np.any(r.t != t0):
            raise CLIError(f"checkpoint grid of {k!r} differs from {recs[0][0]!r}")
    if pred is not None:
        for k, p in pred.items():
            if len(p["t"]) != len(t0) or np.any(p["t"] != t0):
                raise CLIError(f"prediction grid {k!r} differs from the trajectories")
    written = []
    for col, stem, ylabel, logy in PLOTS:
        series = [(k, r.t, r[col], False) for k, r in recs]
        if pred is not None and col in PRED_FOR:
            series += [(f"pred {k}", p["t"], p[PRED_FOR[col]], True) for k, p in pred.items()]
        path = outdir / f"{stem}.svg"
        try:
            write_plot(path, series, title=stem, ylabel=ylabel, logy=logy)
        except ValueError:
            continue
        written.append(path.name)
    return written


def cmd_report(args) -> int:
    if not args.traj:
        raise CLIError("no trajectories given")
    labels = args.labels or [Path(p).stem for p in args.traj]
    if len(labels) != len(args.traj):
        raise CLIError("--labels must match --traj in count")
    recs = [(lab, O.TrajectoryRecord.from_csv(p)) for lab, p in zip(labels, args.traj)]
    pred = read_predictions(args.pred) if args.pred else None
    outdir = Path(args.out_dir)
    outdir.mkdir(parents=True, exist_ok=True)
    plots = emit_plots(recs, pred, outdir)
    table = {}
    for lab, r in recs:
        table[lab] = _fits(r, "gd")
    _dump_json({"schema_version": SCHEMA_VERSION, "plots": plots, "fits": table}, outdir / "report.json")
    with open(outdir / "constants.csv", "w", newline="") as fh:
        wr = csv.writer(fh, lineterminator="\n")
        wr.writerow(("trajectory", "column", "model", "constant", "drift", "drift_shrinks"))
        for lab, fits in table.items():
            for col, f in fits.items():
                wr.writerow((lab, col, f["model"], _fmt(f["constant"]), _fmt(f["drift"]), f["drift_shrinks"]))
    print(f"wrote {len(plots)} plots and constants.csv to {outdir}")
    return 0


# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="python3 -m implicitbias", description=__doc__.splitlines()[0])
    sub = ap.add_subparsers(dest="cmd", required=True)

    p = sub.add_parser("gen-data", help="write a canonical dataset")
    p.add_argument("--kind", choices=("fig1", "appendix-d", "gaussian"), default="fig1")
    p.add_argument("--n-extra", type=int, default=6, help="fig1: extra points per class")
    p.add_argument("--n-per-class", type=int, default=10, help="gaussian: points per class")
    p.add_argument("--seed", type=int, default=0)
    g = p.add_mutually_exclusive_group()
    g.add_argument("--rescale", action="store_true")
    g.add_argument("--no-rescale", action="store_true")
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_data)

    p = sub.add_parser("solve-margin", help="max-margin report")
    p.add_argument("--data", required=True)
    p.add_argument("--nu", type=float, action="append", help="tail exponent for w_tilde (repeatable)")
    p.add_argument("--eta", type=float, default=1.0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_solve_margin)

    p = sub.add_parser("run", help="run an optimizer config or a manifest")
    p.add_argument("--config", required=True, help="optimizer config JSON, or manifest JSON with 'cells'")
    p.add_argument("--data", help="dataset CSV (single config only)")
    p.add_argument("--out", required=True, help="trajectory CSV, or output directory for a manifest")
    p.add_argument("--summary", help="summary JSON path (single config)")
    p.set_defaults(func=cmd_run)

    p = sub.add_parser("rates", help="predicted gaps CSV")
    p.add_argument("--margin", required=True, help="report written by solve-margin")
    p.add_argument("--nu", type=float, action="append")
    p.add_argument("--tail", action="append", help="exp, polyexp:<nu> or subpolyexp:<eps>")
    p.add_argument("--light", action="store_true", help="order-only predictions for --tail")
    p.add_argument("--tmax", type=int, required=True)
    p.add_argument("--ratio", type=float, default=1.25)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_rates)

    p = sub.add_parser("ode-example", help="gradient flow on the two-point set")
    p.add_argument("--example", choices=("powerlaw", "exp", "subpoly"), required=True)
    p.add_argument("--epsilon", type=float, default=2.0)
    p.add_argument("--tmax", type=float, default=1e8)
    p.add_argument("--w0", type=float, nargs=2)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_ode_example)

    p = sub.add_parser("report", help="plots and fitted constants")
    p.add_argument("--traj", nargs="+", default=[])
    p.add_argument("--labels", nargs="+")
    p.add_argument("--pred")
    p.add_argument("--out-dir", required=True)
    p.set_defaults(func=cmd_report)
    return ap


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except O.StepSizeError as exc:
        print(f"error: step size: {exc}", file=sys.stderr)
        return 2
    except (CLIError, ValueError, KeyError, OSError, MaxMarginError, AssertionError,
            RuntimeError, FloatingPointError) as exc:
        print(f"error: {args.cmd}: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
