"""Acceptance suite: one PASS/FAIL line per criterion, at the stated tolerances.

Run with ``pytest -v tests/test_acceptance.py`` or ``python3 tests/test_acceptance.py``.
"""

import json
import math
import sys
import time
from fractions import Fraction
from pathlib import Path

import numpy as np
import pytest

from lvephi4 import cleaning as cl
from lvephi4.bounds import cluster_sum, factorial_bound_fit, nelson_check, one_site_oracle, taylor_remainder
from lvephi4.cli import main as cli_main
from lvephi4.covariance import DEFAULT_M, ContinuumCovariance, lattice_covariance, site_model, tadpole_slope, tadpole_table
from lvephi4.forest import bkar_decompose, forest_sum, random_pair_polynomial
from lvephi4.graphs import decoration_report, enumerate_labeled_trees, path_infimum_matrix, random_tree
from lvephi4.lve import calibrate_convention, lve_logZ_series, order_one_parts, renormalized_planar_sum
from lvephi4.wick import logZ_series

FIXTURE = Path(__file__).parent / "data" / "two_resolvent_first_levels.json"
ACCEPTANCE_LINES: list = []  # shown in the terminal summary by conftest.py


def report(number: int, title: str, ok: bool, detail: str) -> None:
    line = f"ACCEPTANCE {number:2d} {'PASS' if ok else 'FAIL'}: {title} ({detail})"
    ACCEPTANCE_LINES.append(line)
    print(line)
    assert ok, line


def test_01_tree_census():
    t0 = time.perf_counter()
    counts = {n: len(enumerate_labeled_trees(n)) for n in range(2, 9)}
    dt = time.perf_counter() - t0
    ok = all(counts[n] == n ** (n - 2) for n in counts) and dt < 10
    report(1, "labeled tree census n^(n-2), n = 2..8", ok, f"counts {counts}, {dt:.2f} s")


def test_02_forest_identity():
    rng = np.random.default_rng(2024)
    t0 = time.perf_counter()
    worst = 0.0
    for _ in range(200):
        n = int(rng.integers(2, 6))
        poly = random_pair_polynomial(n, rng)
        direct = poly.value_at_ones()
        fs = forest_sum(bkar_decompose(poly))
        worst = max(worst, abs(fs - direct) / max(abs(direct), 1e-12))
    dt = time.perf_counter() - t0
    report(2, "forest sum equals direct value, 200 polynomials, n <= 5", worst <= 1e-9 and dt < 60,
           f"worst relative error {worst:.2e}, {dt:.1f} s")


def test_03_path_infimum_psd():
    rng = np.random.default_rng(7)
    worst = math.inf
    for _ in range(1000):
        n = int(rng.integers(2, 9))
        t = random_tree(n, rng)
        X = path_infimum_matrix(t, {e: float(rng.random()) for e in t.edges})
        worst = min(worst, float(np.linalg.eigvalsh(X).min()))
    report(3, "path-infimum matrices are positive, 1000 draws, n <= 8", worst >= -1e-10,
           f"smallest eigenvalue {worst:.3e}")


def test_04_decoration_counts():
    rows = decoration_report(6)
    positive = [r for r in rows if r["k"] >= 1]
    zero = [r for r in rows if r["k"] == 0]
    ok = all(r["match"] for r in positive) and len(zero) == 6
    shown = ", ".join(f"n={r['n']}: brute {r['brute_force']} vs formula {r['closed_form']}" for r in zero)
    report(4, "planar decoration counts (2n-k)(n-1)!/(n-k)!, k >= 1, n <= 6", ok,
           f"{len(positive)} cases match; k=0 reported: {shown}")


def test_05_tadpole_cancellation():
    planar_ok = all(renormalized_planar_sum(n, A, A) == 0
                    for n in range(1, 31) for A in (Fraction(1), Fraction(-7, 3), Fraction(22, 7)))
    nets = {}
    for n in range(1, 5):
        led = cl.pair_tadpoles(cl.primary_divergent_ledger(n, 3))
        nets[n] = cl.net_tadpole_value(led, {3: Fraction(5, 17)})[3]
    ok = planar_ok and all(v == 0 for v in nets.values())
    report(5, "renormalized planar sums vanish (n <= 30); paired primary ledgers net zero (n <= 4)", ok,
           f"planar exact zero: {planar_ok}; ledger nets {[str(v) for v in nets.values()]}")


def test_06_order_one_cancellation():
    models = [site_model(n, mode="slice", j_max=2) for n in (1, 2, 3)]
    models.append(lattice_covariance(2, mode="momentum", j_max=3))
    worst_a1, worst_parts = 0.0, 0.0
    for m in models:
        a1 = lve_logZ_series(m, 2, 1).coefficients[1]
        parts = order_one_parts(m)
        vt2 = m.n_sites * m.a**2 * m.T**2
        worst_a1 = max(worst_a1, abs(a1))
        worst_parts = max(worst_parts, abs(parts["Z1"] - 2 * vt2), abs(parts["CT_CT"] + 2 * vt2))
    ok = worst_a1 <= 1e-12 and worst_parts <= 1e-10
    report(6, "order-lambda coefficient cancels; +-2 lam |V| T^2 pieces reproduced", ok,
           f"max |a_1| {worst_a1:.1e}, max piece error {worst_parts:.1e}, {len(models)} models")


def test_07_lve_matches_oracle():
    t0 = time.perf_counter()
    worst = 0.0
    conventions = set()
    for n in (1, 2, 3):
        m = site_model(n, mode="slice", j_max=2)
        oracle = logZ_series(m, 3)
        cal = calibrate_convention(m, oracle, 3)
        conventions.add(tuple(cal["passing"]))
        flag = cal["passing"] == ["half_per_line"]
        lve = lve_logZ_series(m, 4, 3, half_per_line=flag)
        for k in (2, 3):
            worst = max(worst, abs(lve.coefficients[k] - oracle.coefficients[k]) / abs(oracle.coefficients[k]))
    dt = time.perf_counter() - t0
    single = len(conventions) == 1 and len(next(iter(conventions))) == 1
    ok = worst <= 1e-8 and single and dt < 300
    report(7, "LVE series equals oracle at orders 2 and 3 on 1, 2, 3 sites", ok,
           f"worst relative error {worst:.1e}, passing convention {sorted(conventions)}, {dt:.1f} s")


def test_08_tadpole_slope():
    c = ContinuumCovariance(1.0, DEFAULT_M, 14)
    per = tadpole_table(c).per_slice
    target = math.log(DEFAULT_M) / (2 * math.pi)
    worst = max(abs(per[j] - target) / target for j in range(8, 15))
    fit = tadpole_slope()
    ok = worst <= 0.01 and fit["r2"] >= 0.999
    report(8, "per-slice tadpole tends to log M / 2 pi; cumulative tadpole linear in j_max", ok,
           f"worst slice deviation {worst:.2e}, R^2 {fit['r2']:.6f}, slope {fit['slope']:.6f} vs {target:.6f}")


def _summary(rec):
    return {"op": rec.op, "prefactor": str(rec.prefactor), "kappa_power": rec.kappa_power,
            "word": cl.fmt_word(rec.word)}


def test_09_cleaning_conservation_and_golden_branches():
    led = cl.run_cleaning(cl.two_resolvent_word(2), a=1.0, j_max=2)
    ctx = cl.word_context(site_model(2, mode="slice", j_max=2), lam=0.05, degree=40)
    start = cl.word_value(cl.TermRecord(word=cl.two_resolvent_word(2)), ctx)
    rel = abs(cl.ledger_value(led, ctx) - start) / abs(start)

    gold = json.loads(FIXTURE.read_text())
    big = cl.run_cleaning(cl.two_resolvent_word(3), a=1.0, j_max=3, cap=3000)

    def kids(pid):
        return [r for r in big.records if r.parent == pid]

    def rows(key):
        return [{k: r[k] for k in ("op", "prefactor", "kappa_power", "word")} for r in gold[key]]

    l1 = kids(0)
    l2 = kids(l1[1].id)
    l3 = kids(l2[1].id)
    golden = ([_summary(r) for r in l1] == rows("cleaning") and [_summary(r) for r in l2] == rows("first_contraction")
              and [_summary(r) for r in l3] == rows("second_contraction"))
    ok = rel <= 1e-9 and golden and not led.truncated
    report(9, "cleaning ledger conserves the two-resolvent amplitude; golden branches match", ok,
           f"relative error {rel:.1e} over {len(led.finals())} final records; golden match {golden}")


def test_10_nelson_crossover():
    lam = 0.1
    s = tadpole_slope()["slope"]
    t0 = time.perf_counter()
    below = all(nelson_check(3 * lam, lam, j, s)[1] for j in range(15, 61))
    above = all(not nelson_check(lam / 10, lam, j, s)[1] for j in range(15, 61))
    dt = time.perf_counter() - t0
    report(10, "Nelson product < 1 for a = 3 lam and > 1 for a = lam/10 on j in [15, 60]",
           below and above and dt < 1.0, f"s = {s:.5f}, below {below}, above {above}, {dt:.2f} s")


def test_11_cluster_sum_convergence():
    rep = cluster_sum(2.0, 5, 6)
    p = rep["partial_sums"]
    change = (p[-1] - p[-2]) / p[-2]
    report(11, "cluster partial sums, c = 2, |Gamma| <= 6, radius 5, last change < 1%", change < 0.01,
           f"last relative change {change:.3%}, increments ratio {rep['ratios'][-1]:.3f}")


def test_12_borel_remainder():
    d = one_site_oracle()
    reps = [taylor_remainder(None, N, lam, derivatives=d) for lam in (0.02, 0.05, 0.1) for N in range(4)]
    fit = factorial_bound_fit(reps)
    agree = max(r.agreement for r in reps)
    ok = fit["finite"] and fit["violations"] == 0 and agree <= 1e-5
    report(12, "one-site remainders admit a one-sided factorial bound; two methods agree", ok,
           f"A = {fit['A']:.3g}, B = {fit['B']:.3g}, violations {fit['violations']}, max disagreement {agree:.1e}")


def test_13_reproducibility(tmp_path):
    runs = [["bkar-check", "--samples", "10", "--seed", "11"], ["cleaning", "--jmax", "1"],
            ["trees", "--n", "4"], ["cluster", "--nmax", "4"]]
    same = []
    for i, cmd in enumerate(runs):
        outs = []
        for rep in (0, 1):
            out = tmp_path / f"{i}-{rep}"
            cli_main(cmd + ["--out", str(out), "--no-figures"])
            outs.append((out / "payload.json").read_bytes())
        same.append(outs[0] == outs[1])
    report(13, "repeated CLI runs give byte-identical JSON payloads", all(same),
           f"{sum(same)}/{len(same)} subcommands identical")


if __name__ == "__main__":
    sys.exit(pytest.main([__file__, "-q", "-s"]))
