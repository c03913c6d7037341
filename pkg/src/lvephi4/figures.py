"""Report figures for the command-line runs, rendered to PNG files."""

from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.tight_layout()
    fig.savefig(path, dpi=110, metadata={"Software": None})
    plt.close(fig)
    return path


def tree_degrees(payload: dict, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    counts = payload["leaf_histogram"]
    ax.bar([int(k) for k in counts], list(counts.values()), color="tab:blue")
    ax.set_xlabel("number of leaves")
    ax.set_ylabel("trees")
    ax.set_title(f"labeled trees on {payload['n']} vertices")
    return _save(fig, out_dir, "trees.png")


def bkar_errors(payload: dict, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    errs = [max(r["rel_err"], 1e-18) for r in payload["samples"]]
    ax.semilogy(range(len(errs)), errs, "o", ms=3)
    ax.axhline(payload["tolerance"], color="k", ls="--", lw=1)
    ax.set_xlabel("sample")
    ax.set_ylabel("relative error")
    ax.set_title("forest sum against direct evaluation")
    return _save(fig, out_dir, "bkar.png")


def covariance_slices(payload: dict, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(5.5, 3.8))
    rows = payload["kernel_table"]
    r = [row[0] for row in rows]
    ax.semilogy(r, [max(row[1], 1e-300) for row in rows], "k-", lw=2, label="full")
    for j in range(len(rows[0]) - 2):
        ax.semilogy(r, [max(row[2 + j], 1e-300) for row in rows], lw=1, label=f"slice {j}")
    ax.set_ylim(1e-12, None)
    ax.set_xlabel("r")
    ax.set_ylabel("C(r)")
    ax.legend(fontsize=7)
    return _save(fig, out_dir, "covariance.png")


def series_coefficients(payload: dict, out_dir: str, name: str = "series.png") -> str:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    for label, coeffs in payload["coefficients"].items():
        ax.plot(range(len(coeffs)), coeffs, "o-", label=label)
    ax.set_xlabel("order")
    ax.set_ylabel("coefficient of log Z")
    ax.legend()
    return _save(fig, out_dir, name)


def cancellation(payload: dict, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    parts = payload["order_one"]
    keys = ["CC", "W", "Z1", "CT_CT", "total"]
    ax.bar(keys, [parts[k] for k in keys], color="tab:green")
    ax.axhline(0, color="k", lw=0.8)
    ax.set_title("order-one contributions")
    return _save(fig, out_dir, "cancel.png")


def cleaning_classes(payload: dict, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(5.5, 3.5))
    counts = payload["class_counts"]
    ax.bar(list(counts), list(counts.values()), color="tab:orange")
    ax.set_ylabel("final records")
    ax.set_title(f"cleaning ledger, j_max = {payload['j_max']}, a = {payload['a']}")
    plt.setp(ax.get_xticklabels(), rotation=20)
    return _save(fig, out_dir, "cleaning.png")


def cluster_partials(payload: dict, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    k = range(1, len(payload["partial_sums"]) + 1)
    ax.plot(k, payload["partial_sums"], "o-", label="partial sum")
    ax.semilogy(k, payload["increments"], "s--", label="increment")
    ax.set_xlabel("cluster size")
    ax.legend()
    ax.set_title(f"c = {payload['c']}, radius {payload['R']}")
    return _save(fig, out_dir, "cluster.png")


def nelson_curve(payload: dict, out_dir: str) -> str:
    fig, ax = plt.subplots(figsize=(5, 3.5))
    rows = payload["rows"]
    ax.plot([r["j"] for r in rows], [r["log_value"] for r in rows], "-")
    ax.axhline(0, color="k", lw=0.8)
    ax.set_xlabel("j")
    ax.set_ylabel("log of the Nelson product")
    return _save(fig, out_dir, "nelson.png")


def borel_report(payload: dict, out_dir: str) -> str:
    fig, (a1, a2) = plt.subplots(1, 2, figsize=(9, 3.5))
    for lam in sorted({r["lambda"] for r in payload["remainders"]}):
        rows = [r for r in payload["remainders"] if r["lambda"] == lam]
        a1.semilogy([r["N"] for r in rows], [abs(r["direct"]) for r in rows], "o-", label=f"lam={lam}")
    a1.set_xlabel("N")
    a1.set_ylabel("|remainder|")
    a1.legend(fontsize=7)
    b = payload["borel"]
    a2.plot(b["u"], b["values"])
    a2.set_xlabel("u")
    a2.set_ylabel("truncated Borel transform")
    return _save(fig, out_dir, "borel.png")
