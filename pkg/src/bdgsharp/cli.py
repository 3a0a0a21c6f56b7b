"""Command-line front end: ``python -m bdgsharp <command> ...``.

Every output file carries the configuration that produced it: JSON outputs
under the key ``"config"``, CSV outputs as a first line ``# {json}`` followed
by the fixed column header.
"""
from __future__ import annotations

import argparse
import csv
import json
import os
import sys
import time
import warnings
from pathlib import Path

import numpy as np

from . import densities as dens
from . import mc
from .critical import (SearchConfig, ScanResolutionWarning, bounded_solution, find_critical,
                       find_regime_interval)
from .extension import ExtendedValue, hedge_table, surface_rows
from .oide import SolverParams, StepPolicy, StepSizeUnderflow, solve

C_REFERENCE = 1.27267
T0_REFERENCE = 0.9036


def _sweep(text):
    """'a:b:n' -> n evenly spaced values."""
    try:
        a, b, n = text.split(":")
        return np.linspace(float(a), float(b), int(n))
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected a:b:n, got {text!r}")


def _pair(text):
    try:
        a, b = text.split(":")
        return float(a), float(b)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected lo:hi, got {text!r}")


def _floats(text):
    return [float(x) for x in text.split(",") if x]


def _workers(args):
    if getattr(args, "threads", None):
        return args.threads
    env = os.environ.get("BDGSHARP_THREADS")
    return max(1, int(env)) if env else (os.cpu_count() or 1)


def _dump(record, path=None):
    text = json.dumps(record, indent=2, sort_keys=True, default=float)
    if path:
        Path(path).write_text(text + "\n", encoding="utf-8")
    print(text)


def _write_csv(path, config, header, rows):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        fh.write("# " + json.dumps(config, sort_keys=True) + "\n")
        w = csv.writer(fh)
        w.writerow(header)
        for r in rows:
            w.writerow([repr(float(x)) for x in r])


def _load_config(path):
    if not path:
        return {}
    text = Path(path).read_text(encoding="utf-8")
    if text.startswith("# "):
        text = text.splitlines()[0][2:]
    d = json.loads(text)
    return d.get("config", d)


# --- solve ------------------------------------------------------------------------

def cmd_solve(args):
    base = _load_config(args.config)
    grid = StepPolicy(**base["grid"]) if "grid" in base else StepPolicy()
    if args.halve:
        grid = grid.halved()
    C = args.C if args.C is not None else base.get("C")
    p = args.p if args.p is not None else base.get("p", 1.0)
    t_min = args.t_min if args.t_min is not None else base.get("t_min", 1e-5)
    max_steps = args.max_steps if args.max_steps is not None else base.get("max_steps", 20000)
    if args.t0_sweep is not None:
        t0s = list(args.t0_sweep)
    elif args.t0 is not None:
        t0s = [args.t0]
    elif "t0" in base:
        t0s = [base["t0"]]
    else:
        raise SystemExit("solve: need --t0, --t0-sweep or --config")
    if C is None:
        raise SystemExit("solve: need --C or --config")
    out = Path(args.out)
    if len(t0s) > 1:
        out.mkdir(parents=True, exist_ok=True)
    summary = []
    failed = False
    for t0 in t0s:
        params = SolverParams(C=float(C), t0=float(t0), p=float(p), t_min=float(t_min),
                              grid=grid, max_steps=int(max_steps))
        try:
            g = solve(params)
        except (StepSizeUnderflow, ValueError) as exc:
            print(f"solve failed at t0={t0}: {exc}", file=sys.stderr)
            failed = True
            continue
        target = out / f"solution_t0_{t0:.6f}.{args.format}" if len(t0s) > 1 else out
        cfg = params.to_dict()
        rec = {"config": cfg, "regime": g.regime.value, "t_end": g.t_end,
               "u_at_floor": g.u_at_floor, "n_points": len(g.ts)}
        if args.format == "csv":
            _write_csv(target, {**cfg, "regime": g.regime.value}, ["t", "U", "analytic_floor"],
                       g.rows())
        else:
            body = {**rec, "columns": ["t", "U", "analytic_floor"], "rows": g.rows()}
            Path(target).write_text(json.dumps(body, sort_keys=True) + "\n", encoding="utf-8")
        summary.append({"t0": float(t0), "regime": g.regime.value, "file": str(target)})
    _dump({"C": float(C), "p": float(p), "solutions": summary})
    return 1 if failed else 0


# --- critical -----------------------------------------------------------------------

def _search_config(args, base):
    cfg = SearchConfig.from_dict(base) if base else SearchConfig()
    d = cfg.to_dict()
    for key, val in (("c_range", args.c_range), ("t0_range", args.t0_range),
                     ("n_scan", args.n_scan), ("tol_c", args.tol_c), ("tol_t0", args.tol_t0),
                     ("edge_tol", args.edge_tol)):
        if val is not None:
            d[key] = val
    d["workers"] = _workers(args)
    cfg = SearchConfig.from_dict(d)
    return cfg.halved() if args.halve else cfg


def cmd_critical(args):
    base = _load_config(args.config)
    p = args.p if args.p is not None else base.pop("p", 1.0)
    base.pop("p", None)
    cfg = _search_config(args, base)
    t = time.time()
    if args.emit_interval:
        if args.C is None:
            raise SystemExit("critical: --emit-interval needs --C")
        with warnings.catch_warnings():
            warnings.simplefilter("ignore", ScanResolutionWarning)
            iv = find_regime_interval(args.C, p, cfg.t0_range, cfg)
        rec = {"C": args.C, "p": p, "config": cfg.to_dict(), "elapsed_s": time.time() - t}
        if iv is None:
            rec["interval"] = None
        else:
            rec["interval"] = {"t1": iv.t1, "t2": iv.t2, "t1_bracket": list(iv.t1_bracket),
                               "t2_bracket": list(iv.t2_bracket)}
        _dump(rec, args.out)
        return 0
    res = find_critical(p, cfg)
    rec = res.to_dict()
    rec["config"]["p"] = p
    rec["elapsed_s"] = time.time() - t
    _dump(rec, args.out)
    return 0


# --- extend -------------------------------------------------------------------------

def critical_value(C, p=1.0, search_range=(0.85, 0.95), cfg=None):
    """ExtendedValue built on the bounded approximant at the lower edge t1(C)."""
    cfg = cfg or SearchConfig()
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", ScanResolutionWarning)
        iv = find_regime_interval(C, p, search_range, cfg)
    if iv is None:
        raise SystemExit(f"no PlusInfinity interval at C={C} in {search_range}")
    return ExtendedValue(bounded_solution(C, "lower", p, cfg, interval=iv))


def cmd_extend(args):
    if args.t0 is not None:
        g = solve(SolverParams(C=args.C, t0=args.t0, p=args.p))
        ev = ExtendedValue(g)
    else:
        ev = critical_value(args.C, args.p, args.search_range)
    rows = surface_rows(ev, args.t_grid, args.b_grid, args.bstar)
    cfg = {"C": args.C, "p": args.p, "t0": ev.t0, "bstar": args.bstar,
           "t_grid": list(map(float, args.t_grid)), "b_grid": list(map(float, args.b_grid))}
    if args.format == "csv":
        _write_csv(args.out, cfg, ["t", "b", "bstar", "U", "H"], rows)
    else:
        Path(args.out).write_text(json.dumps({"config": cfg, "columns": ["t", "b", "bstar", "U", "H"],
                                              "rows": rows}, sort_keys=True) + "\n",
                                  encoding="utf-8")
    return 0


# --- densities ----------------------------------------------------------------------

def cmd_densities(args):
    rows = []
    for h in args.h:
        fh = dens.eval_fh(h, args.s_grid)
        for s, v in zip(args.s_grid, fh):
            rows.append((s, h, v, dens.eval_g(s)))
    cfg = {"h": args.h, "s_grid": list(map(float, args.s_grid)),
           "series": dens.DEFAULT_SERIES.__dict__}
    _write_csv(args.out, cfg, ["s", "h", "f_h", "g"], rows)
    return 0


# --- verify -------------------------------------------------------------------------

def _check(name, ok, **values):
    return {"name": name, "pass": bool(ok), **values}


def verify_densities():
    checks = []
    for h in (0.1, 0.3, 0.5, 0.9):
        m0 = dens.fh_moment(h, 0.0)
        m1 = dens.fh_moment(h, 1.0)
        checks.append(_check(f"mass h={h}", abs(m0 - 1) < 1e-8, value=m0))
        checks.append(_check(f"mean h={h}", abs(m1 - h * (2 - h)) < 1e-8, value=m1))
    gm = dens.g_moment(1.0)
    checks.append(_check("g mean", abs(gm - 2) < 1e-6, value=gm))
    s = np.linspace(0.2, 5, 49)
    worst = 0.0
    for h in (0.1, 0.3, 0.5, 0.9):
        a, b = dens.fh_small(h, s), dens.fh_spectral(h, s)
        worst = max(worst, float(np.max(np.abs(a - b) / np.abs(b))))
    a, b = dens.g_small(s), dens.g_spectral(s)
    worst = max(worst, float(np.max(np.abs(a - b) / np.abs(b))))
    checks.append(_check("dual series", worst <= 1e-10, max_rel=worst))
    for h in (0.2, 0.5):
        d = 1e-6
        # one-sided: the transform is only defined for theta >= 0
        deriv = -(-3 * dens.laplace_sigma(0, h) + 4 * dens.laplace_sigma(d, h)
                  - dens.laplace_sigma(2 * d, h)) / (2 * d)
        checks.append(_check(f"E sigma h={h}", abs(deriv - h * (2 + h)) < 1e-5, value=deriv))
    ratios = [dens.half_moment_sigma(h) / h for h in (0.1, 0.01, 0.001)]
    checks.append(_check("half moment superlinear", ratios[0] < ratios[1] < ratios[2],
                         ratios=ratios))
    return checks


def verify_bdg(n_paths, dt, seed, t0_hat, workers):
    res = mc.run_battery(n_paths, dt, seed, t0_hat, workers=workers)
    checks = []
    for name, r in res.items():
        checks.append(_check(f"ratio {name}", r.ratio <= C_REFERENCE + 3 * r.std_error,
                             **r.to_dict()))
    near = res["boundary-t0hat"]
    checks.append(_check("near-optimal ratio >= 1.20", near.ratio >= 1.20, ratio=near.ratio))
    return checks


def verify_dichotomy(n_paths, dt, seed, workers):
    checks = []
    for thr, plateau in ((0.7, True), (1.2, False)):
        cfg = mc.PathConfig(dt=dt, horizon=1e4, n_paths=n_paths, seed=seed, geometric_from=1.0)
        rows = mc.moment_dichotomy(thr, cfg, [10, 100, 1e3, 1e4], workers)
        growth = rows[-1].mean / rows[-2].mean - 1
        ok = growth < 0.10 if plateau else growth > 0.25
        checks.append(_check(f"threshold {thr}", ok, growth=growth,
                             rows=[r.__dict__ for r in rows]))
    return checks


def verify_hedging(n_paths, dt, seed, C, workers, slack=0.05):
    ev = critical_value(C)
    table = hedge_table(ev)
    cfg = mc.PathConfig(dt=dt, horizon=10.0, n_paths=n_paths, seed=seed)
    rep = mc.hedging_check(table, C, cfg, mc.RegionHitOnBoundary(T0_REFERENCE), slack, workers)
    return [
        _check("pathwise fraction", rep.fraction >= 0.99, **rep.to_dict()),
        _check("expectation gap", rep.mean_gap >= -3 * rep.gap_std_error, mean_gap=rep.mean_gap),
    ]


def cmd_verify(args):
    w = _workers(args)
    t = time.time()
    if args.suite == "densities":
        checks = verify_densities()
    elif args.suite == "bdg":
        checks = verify_bdg(args.n_paths or 200_000, args.dt, args.seed, args.t0_hat, w)
    elif args.suite == "dichotomy":
        checks = verify_dichotomy(args.n_paths or 200_000, args.dt, args.seed, w)
    else:
        checks = verify_hedging(args.n_paths or 100_000, args.dt, args.seed, args.C, w)
    failed = [c["name"] for c in checks if not c["pass"]]
    rec = {"suite": args.suite, "checks": checks, "failed": failed,
           "config": {"seed": args.seed, "dt": args.dt, "n_paths": args.n_paths,
                      "t0_hat": args.t0_hat, "C": args.C},
           "elapsed_s": time.time() - t}
    _dump(rec, args.out)
    return 1 if failed else 0


# --- dichotomy ----------------------------------------------------------------------

def cmd_dichotomy(args):
    cfg = mc.PathConfig(dt=args.dt, horizon=max(args.caps), n_paths=args.n_paths,
                        seed=args.seed, geometric_from=1.0)
    table = {}
    for thr in args.threshold:
        rows = mc.moment_dichotomy(thr, cfg, args.caps, _workers(args))
        table[str(thr)] = [r.__dict__ for r in rows]
    _dump({"config": {**cfg.to_dict(), "thresholds": args.threshold, "caps": args.caps},
           "estimates": table}, args.out)
    return 0


# --- parser -------------------------------------------------------------------------

def build_parser():
    ap = argparse.ArgumentParser(prog="bdgsharp", allow_abbrev=False)
    ap.add_argument("--threads", type=int, default=None,
                    help="worker processes (default: BDGSHARP_THREADS or CPU count)")
    sub = ap.add_subparsers(dest="command", required=True)

    s = sub.add_parser("solve", help="backward OIDE solve(s) to CSV/JSON", allow_abbrev=False)
    s.add_argument("--C", type=float)
    s.add_argument("--t0", type=float)
    s.add_argument("--t0-sweep", type=_sweep, help="a:b:n")
    s.add_argument("--p", type=float)
    s.add_argument("--t-min", type=float)
    s.add_argument("--max-steps", type=int)
    s.add_argument("--halve", action="store_true", help="halve steps and tolerances")
    s.add_argument("--config", help="rerun from an echoed config (CSV or JSON)")
    s.add_argument("--format", choices=("csv", "json"), default="csv")
    s.add_argument("--out", default="solution.csv", help="file, or directory for sweeps")
    s.set_defaults(func=cmd_solve)

    c = sub.add_parser("critical", help="critical pair or regime interval", allow_abbrev=False)
    c.add_argument("--p", type=float)
    c.add_argument("--C", type=float)
    c.add_argument("--emit-interval", action="store_true")
    c.add_argument("--c-range", type=_pair)
    c.add_argument("--t0-range", type=_pair)
    c.add_argument("--n-scan", type=int)
    c.add_argument("--tol-c", type=float)
    c.add_argument("--tol-t0", type=float)
    c.add_argument("--edge-tol", type=float)
    c.add_argument("--halve", action="store_true")
    c.add_argument("--config")
    c.add_argument("--out")
    c.set_defaults(func=cmd_critical)

    e = sub.add_parser("extend", help="export U and H on a (t, b) grid", allow_abbrev=False)
    e.add_argument("--C", type=float, default=1.2726806640625)
    e.add_argument("--p", type=float, default=1.0)
    e.add_argument("--t0", type=float, help="plain solve at (C, t0) instead of the critical edge")
    e.add_argument("--search-range", type=_pair, default=(0.85, 0.95))
    e.add_argument("--t-grid", type=_sweep, default=_sweep("0.1:2:20"))
    e.add_argument("--b-grid", type=_sweep, default=_sweep("-1:1:21"))
    e.add_argument("--bstar", type=float, default=1.0)
    e.add_argument("--format", choices=("csv", "json"), default="csv")
    e.add_argument("--out", default="surface.csv")
    e.set_defaults(func=cmd_extend)

    v = sub.add_parser("verify", help="run a check battery", allow_abbrev=False)
    v.add_argument("suite", choices=("densities", "bdg", "dichotomy", "hedging"))
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--n-paths", type=int)
    v.add_argument("--dt", type=float, default=1e-4)
    v.add_argument("--t0-hat", type=float, default=T0_REFERENCE)
    v.add_argument("--C", type=float, default=1.2726806640625)
    v.add_argument("--out")
    v.set_defaults(func=cmd_verify)

    d = sub.add_parser("densities", help="tabulate f^h and g", allow_abbrev=False)
    d.add_argument("--h", type=_floats, default=[0.1, 0.5, 1.0])
    d.add_argument("--s-grid", type=_sweep, default=_sweep("0.01:5:500"))
    d.add_argument("--out", default="densities.csv")
    d.set_defaults(func=cmd_densities)

    m = sub.add_parser("dichotomy", help="capped sqrt-moments of region hitting times",
                       allow_abbrev=False)
    m.add_argument("--threshold", type=_floats, default=[0.7, 1.2])
    m.add_argument("--caps", type=_floats, default=[10.0, 100.0, 1e3, 1e4])
    m.add_argument("--n-paths", type=int, default=100_000)
    m.add_argument("--dt", type=float, default=1e-3)
    m.add_argument("--seed", type=int, default=0)
    m.add_argument("--out")
    m.set_defaults(func=cmd_dichotomy)
    return ap


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, dens.DomainError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
