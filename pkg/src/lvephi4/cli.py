"""Command-line front end: one subcommand per analysis, file-based outputs.

Every run writes a deterministic payload (payload.json, or CSV tables with
--format csv) and a separate manifest.json holding the configuration,
package versions, wall time and timestamps.  Exit codes: 0 success,
1 failed check, 2 usage error.
"""

from __future__ import annotations

import argparse
import csv
import datetime as _dt
import json
import math
import os
import platform
import sys
import time
from collections import Counter

import numpy as np

from . import __version__, figures
from .errors import LveError

SUBCOMMANDS = ("trees", "bkar-check", "covariance", "series", "lve", "cancel", "cleaning", "cluster",
               "nelson", "borel")
THREADS_ENV = "LVEPHI4_THREADS"


def parse_sites(text: str) -> tuple[int, int]:
    try:
        if "x" in text:
            a, b = text.lower().split("x")
            shape = (int(a), int(b))
        else:
            shape = (int(text), 1)
    except ValueError:
        raise argparse.ArgumentTypeError(f"bad site argument {text!r}; use n or AxB") from None
    if min(shape) < 1:
        raise argparse.ArgumentTypeError("site counts must be positive")
    return shape


def _positive_int(text: str) -> int:
    v = int(text)
    if v <= 0:
        raise argparse.ArgumentTypeError("must be positive")
    return v


def build_parser() -> argparse.ArgumentParser:
    common = argparse.ArgumentParser(add_help=False)
    g = common.add_argument_group("model and run options")
    g.add_argument("--sites", type=parse_sites, default=(2, 1), help="n (a ring) or AxB torus")
    g.add_argument("--spacing", type=float, default=1.0, help="lattice spacing a")
    g.add_argument("--mass", type=float, default=1.0)
    g.add_argument("--slice-ratio", type=float, default=math.e * 1.01, help="scale ratio M > 1")
    g.add_argument("--jmax", type=int, default=2, help="ultraviolet scale index")
    g.add_argument("--cutoff", choices=("slice", "momentum"), default="slice")
    g.add_argument("--order", type=_positive_int, default=2, help="order in lambda")
    g.add_argument("--nmax", type=_positive_int, default=4, help="tree size or cluster size cap")
    g.add_argument("--a", type=float, default=1.0, help="stopping-rule or Nelson parameter")
    g.add_argument("--cap", type=_positive_int, default=100_000, help="record cap")
    g.add_argument("--seed", type=int, default=0)
    g.add_argument("--lam", type=float, default=0.1, help="coupling")
    g.add_argument("--n", type=_positive_int, default=5, help="size parameter (trees, cancel, bkar-check)")
    g.add_argument("--samples", type=_positive_int, default=20)
    g.add_argument("--decay", type=float, default=2.0, help="cluster decay rate c")
    g.add_argument("--radius", type=_positive_int, default=4, help="cluster radius")
    g.add_argument("--out", default="lvephi4-out")
    g.add_argument("--format", choices=("json", "csv"), default="json")
    g.add_argument("--no-figures", action="store_true")
    g.add_argument("--dry-run", action="store_true", help="print the resolved config and exit")
    parser = argparse.ArgumentParser(prog="lvephi4", description=__doc__.splitlines()[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in SUBCOMMANDS:
        sub.add_parser(name, parents=[common])
    return parser


def resolve_config(args) -> dict:
    cfg = {k: v for k, v in vars(args).items() if k not in ("dry_run", "no_figures")}
    cfg["sites"] = list(args.sites)
    return dict(sorted(cfg.items()))


def _model(cfg):
    from .covariance import lattice_covariance

    return lattice_covariance(tuple(cfg["sites"]), a=cfg["spacing"], m=cfg["mass"], mode=cfg["cutoff"],
                              M=cfg["slice_ratio"], j_max=cfg["jmax"])


# ---------------------------------------------------------------------------
# subcommands: each returns (payload, tables, ok, figure function, extra files)


def run_trees(cfg):
    from .graphs import enumerate_labeled_trees, tree_to_prufer

    n = cfg["n"]
    trees = enumerate_labeled_trees(n)
    expected = n ** (n - 2) if n >= 2 else 1
    hist = Counter(len(t.leaves()) for t in trees)
    rows = [[i, " ".join(map(str, tree_to_prufer(t))), " ".join(f"{a}-{b}" for a, b in t.edges)]
            for i, t in enumerate(trees)]
    payload = {"n": n, "count": len(trees), "expected": expected,
               "leaf_histogram": {str(k): hist[k] for k in sorted(hist)},
               "trees": [{"prufer": list(tree_to_prufer(t)), "edges": [list(e) for e in t.edges]} for t in trees]}
    return payload, {"trees": [["index", "prufer", "edges"]] + rows}, len(trees) == expected, figures.tree_degrees


def run_bkar(cfg):
    from .forest import bkar_decompose, forest_sum, random_pair_polynomial

    rng = np.random.default_rng(cfg["seed"])
    tol = 1e-9
    samples = []
    for i in range(cfg["samples"]):
        n = int(rng.integers(2, min(cfg["n"], 5) + 1))
        poly = random_pair_polynomial(n, rng)
        direct = poly.value_at_ones()
        fs = forest_sum(bkar_decompose(poly))
        samples.append({"n": n, "direct": direct, "forest_sum": fs,
                        "rel_err": abs(fs - direct) / max(abs(direct), 1e-300)})
    ok = all(s["rel_err"] <= tol for s in samples)
    rows = [["sample", "n", "direct", "forest_sum", "rel_err"]] + [
        [i, s["n"], repr(s["direct"]), repr(s["forest_sum"]), repr(s["rel_err"])] for i, s in enumerate(samples)]
    return {"tolerance": tol, "samples": samples, "passed": ok}, {"bkar": rows}, ok, figures.bkar_errors


def run_covariance(cfg):
    from .covariance import ContinuumCovariance, kernel_table, tadpole_table

    c = ContinuumCovariance(cfg["mass"], cfg["slice_ratio"], cfg["jmax"])
    rs = np.linspace(0.0, 3.0, 31)
    table = kernel_table(c, rs)
    tad = tadpole_table(c)
    worst = max(abs(sum(row[2:]) - row[1]) / max(abs(row[1]), 1e-300) for row in table if row[1] > 1e-250)
    payload = {"model": {"m": c.m, "M": c.M, "j_max": c.j_max}, "tadpoles": tad.to_dict(),
               "kernel_table": table, "slice_sum_rel_err": worst,
               "expected_tadpole_slope": math.log(c.M) / (2 * math.pi)}
    head = ["r", "C_Lambda"] + [f"C_{j}" for j in range(c.j_max + 1)]
    tables = {"kernel": [head] + table,
              "tadpoles": [["j", "T_j", "T_cumulative"]] + [
                  [j, a, b] for j, (a, b) in enumerate(zip(tad.per_slice.tolist(), tad.cumulative.tolist()))]}
    return payload, tables, worst < 1e-9, figures.covariance_slices


def run_series(cfg):
    from .wick import logZ_series

    model = _model(cfg)
    s = logZ_series(model, cfg["order"])
    payload = {"model": model.to_dict(), "series": s.to_dict(), "coefficients": {"oracle": s.coefficients}}
    rows = [["n", "value", "abs_err"]] + [[n, repr(v), repr(e)] for n, (v, e) in
                                            enumerate(zip(s.coefficients, s.abs_err))]
    return payload, {"series": rows}, True, figures.series_coefficients


def run_lve(cfg):
    from .lve import calibrate_convention, lve_logZ_series
    from .wick import logZ_series

    model = _model(cfg)
    order = min(cfg["order"], 3)
    oracle = logZ_series(model, order)
    cal = calibrate_convention(model, oracle, order)
    flag = cal["passing"] == ["half_per_line"]
    s = lve_logZ_series(model, min(cfg["nmax"], 4), order, half_per_line=flag)
    rel = [abs(a - b) / max(abs(b), 1e-300) for a, b in zip(s.coefficients[2:], oracle.coefficients[2:])]
    ok = len(cal["passing"]) == 1 and all(r <= 1e-8 for r in rel)
    payload = {"model": model.to_dict(), "series": s.to_dict(), "oracle": oracle.to_dict(),
               "coefficients": {"lve": s.coefficients, "oracle": oracle.coefficients},
               "relative_errors": rel, "convention": cal["passing"]}
    rows = [["n", "lve", "oracle"]] + [[n, repr(a), repr(b)] for n, (a, b) in
                                       enumerate(zip(s.coefficients, oracle.coefficients))]
    return payload, {"lve": rows}, ok, figures.series_coefficients


def run_cancel(cfg):
    from fractions import Fraction

    from .cleaning import net_tadpole_value, pair_tadpoles, primary_divergent_ledger
    from .lve import order_one_parts, renormalized_planar_sum

    n = cfg["n"]
    A = Fraction(3, 7)
    planar = [{"n": k, "value": str(renormalized_planar_sum(k, A, A))} for k in range(1, n + 1)]
    T = {j: Fraction(1, j + 2) for j in range(cfg["jmax"] + 1)}
    ledgers = []
    for k in range(1, min(n, 4) + 1):
        led = pair_tadpoles(primary_divergent_ledger(k, cfg["jmax"]))
        net = net_tadpole_value(led, T)
        ledgers.append({"n": k, "records": len(led.records), "net": {str(j): str(v) for j, v in net.items()}})
    parts = order_one_parts(_model(cfg))
    ok = (all(p["value"] == "0" for p in planar) and all(v == "0" for L in ledgers for v in L["net"].values())
          and abs(parts["total"]) <= 1e-12)
    payload = {"planar_sums": planar, "tadpole_ledgers": ledgers, "order_one": parts}
    rows = [["n", "planar_sum"]] + [[p["n"], p["value"]] for p in planar]
    return payload, {"cancel": rows}, ok, figures.cancellation


def run_cleaning(cfg):
    from . import cleaning as cl
    from .covariance import lattice_covariance

    J = cfg["jmax"]
    led = cl.run_cleaning(cl.two_resolvent_word(J), cfg["a"], J, cfg["cap"])
    paired = cl.pair_tadpoles(led)
    finals = led.finals()
    model = lattice_covariance((2, 1), a=cfg["spacing"], m=cfg["mass"], mode="slice", M=cfg["slice_ratio"], j_max=J)
    ctx = cl.word_context(model, cfg["lam"], degree=48)
    net = cl.net_tadpole_value(paired, {j: float(D[0, 0]) for j, D in enumerate(ctx.slices)})
    payload = {"j_max": J, "a": cfg["a"], "records": len(led.records), "final_records": len(finals),
               "truncated": led.truncated, "stop_scale": led.stop_scale,
               "counters": {str(k): v for k, v in sorted(led.counters.items())},
               "class_counts": dict(sorted(Counter(r.classification for r in finals).items())),
               "net_tadpole": {str(k): str(v) for k, v in sorted(net.items())},
               "bound": cl.bound_product(led, cfg["lam"], cfg["slice_ratio"])}
    ok = all(v == 0 for v in net.values()) and payload["bound"]["all_ok"]
    if len(finals) <= 5000:
        start = cl.word_value(cl.TermRecord(word=cl.two_resolvent_word(J)), ctx)
        total = cl.ledger_value(led, ctx)
        err = abs(total - start) / max(abs(start), 1e-300)
        payload["conservation"] = {"start": [start.real, start.imag], "ledger_sum": [total.real, total.imag],
                                   "rel_err": err}
        ok = ok and err <= 1e-9
    rows = [["id", "parent", "op", "classification", "prefactor", "kappa_power", "word"]] + [
        [r.id, r.parent, r.op, r.classification, str(r.prefactor), r.kappa_power, cl.fmt_word(r.word)]
        for r in paired.records]
    return payload, {"ledger": rows}, ok, figures.cleaning_classes, {"ledger.jsonl": paired.to_jsonl()}


def run_cluster(cfg):
    from .bounds import cluster_sum

    r = cluster_sum(cfg["decay"], cfg["radius"], cfg["nmax"])
    ok = all(b >= a for a, b in zip(r["partial_sums"], r["partial_sums"][1:]))
    rows = [["k", "count", "increment", "partial_sum"]] + [
        [k + 1, c, repr(i), repr(p)] for k, (c, i, p) in enumerate(zip(r["counts"], r["increments"], r["partial_sums"]))]
    return r, {"cluster": rows}, ok, figures.cluster_partials


def run_nelson(cfg):
    from .bounds import nelson_scan
    from .covariance import tadpole_slope

    fit = tadpole_slope(cfg["mass"], cfg["slice_ratio"])
    js = range(0, max(cfg["jmax"], 60) + 1)
    r = nelson_scan(cfg["a"], cfg["lam"], fit["slope"], js)
    r["tadpole_fit"] = {k: fit[k] for k in ("slope", "intercept", "r2", "expected_slope")}
    rows = [["j", "log_value", "below_one"]] + [[q["j"], repr(q["log_value"]), q["below_one"]] for q in r["rows"]]
    return r, {"nelson": rows}, True, figures.nelson_curve


def run_borel(cfg):
    from .bounds import borel_partial_transform, factorial_bound_fit, one_site_oracle, taylor_remainder
    from .covariance import site_model
    from .wick import logZ_series

    model = site_model(1, a=cfg["spacing"], m=cfg["mass"], M=cfg["slice_ratio"], j_max=cfg["jmax"])
    d = one_site_oracle(model)
    N_max = min(cfg["order"], 3) if cfg["order"] >= 2 else 3
    reps = [taylor_remainder(None, N, lam, derivatives=d) for lam in (0.02, 0.05, 0.1) for N in range(N_max + 1)]
    fit = factorial_bound_fit(reps)
    coeffs = logZ_series(model, 4).coefficients
    b = borel_partial_transform(coeffs, np.linspace(0, 0.1, 11))
    ok = fit["finite"] and fit["violations"] == 0 and all(r.agreement <= 1e-5 for r in reps)
    payload = {"remainders": [r.to_dict() for r in reps], "fit": fit, "series": coeffs, "borel": b}
    rows = [["N", "lambda", "direct", "integral"]] + [[r.N, r.lam, repr(r.direct), repr(r.integral)] for r in reps]
    return payload, {"remainders": rows}, ok, figures.borel_report


RUNNERS = {"trees": run_trees, "bkar-check": run_bkar, "covariance": run_covariance, "series": run_series,
           "lve": run_lve, "cancel": run_cancel, "cleaning": run_cleaning, "cluster": run_cluster,
           "nelson": run_nelson, "borel": run_borel}


# ---------------------------------------------------------------------------


def _versions() -> dict:
    import matplotlib
    import scipy

    return {"lvephi4": __version__, "python": platform.python_version(), "numpy": np.__version__,
            "scipy": scipy.__version__, "matplotlib": matplotlib.__version__}


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, (np.floating, np.integer, np.bool_)):
        return obj.item()
    if isinstance(obj, np.ndarray):
        return _jsonable(obj.tolist())
    return obj


def _write_csv(path: str, rows) -> None:
    with open(path, "w", newline="") as fh:
        csv.writer(fh, lineterminator="\n").writerows(rows)


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return int(exc.code) if exc.code is not None else 0
    cfg = resolve_config(args)
    if args.dry_run:
        print(json.dumps(cfg, sort_keys=True, indent=2))
        return 0
    started = _dt.datetime.now(_dt.timezone.utc).isoformat()
    t0 = time.perf_counter()
    try:
        result = RUNNERS[args.command](cfg)
    except LveError as exc:
        print(f"lvephi4 {args.command}: {exc}", file=sys.stderr)
        return 2
    payload, tables, ok, figure = result[:4]
    extra = result[4] if len(result) > 4 else {}
    os.makedirs(args.out, exist_ok=True)
    written = []
    # the output location lives in the manifest only, so payloads compare across directories
    run_cfg = {k: v for k, v in cfg.items() if k != "out"}
    payload = _jsonable({"command": args.command, "config": run_cfg, "passed": bool(ok), "result": payload})
    if args.format == "json":
        path = os.path.join(args.out, "payload.json")
        with open(path, "w") as fh:
            fh.write(json.dumps(payload, sort_keys=True, indent=2) + "\n")
        written.append(path)
    else:
        for name, rows in tables.items():
            path = os.path.join(args.out, f"{name}.csv")
            _write_csv(path, rows)
            written.append(path)
    for name, text in extra.items():
        path = os.path.join(args.out, name)
        with open(path, "w") as fh:
            fh.write(text)
        written.append(path)
    if not args.no_figures:
        written.append(figure(payload["result"], args.out))
    manifest = {"command": args.command, "config": cfg, "seed": cfg["seed"], "versions": _versions(),
                "started": started, "finished": _dt.datetime.now(_dt.timezone.utc).isoformat(),
                "wall_time_s": time.perf_counter() - t0, "passed": bool(ok),
                "threads": os.environ.get(THREADS_ENV), "files": sorted(os.path.basename(p) for p in written)}
    if args.command == "lve":
        manifest["line_convention"] = payload["result"]["convention"]
    with open(os.path.join(args.out, "manifest.json"), "w") as fh:
        fh.write(json.dumps(_jsonable(manifest), sort_keys=True, indent=2) + "\n")
    print(f"lvephi4 {args.command}: {'ok' if ok else 'CHECK FAILED'} -> {args.out}")
    return 0 if ok else 1


if __name__ == "__main__":
    sys.exit(main())
