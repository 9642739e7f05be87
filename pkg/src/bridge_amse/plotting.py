"""SVG figures rendered from experiment CSV files."""

from __future__ import annotations

import math
import os
from collections import defaultdict

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .experiments import OK, read_csv  # noqa: E402

# fixed hash salt and no date stamp so reruns give identical files
_RC = {"svg.hashsalt": "bridge-amse", "figure.figsize": (5.0, 3.6), "font.size": 9}
_META = {"Date": None}


def _cell_name(kind: str, key: tuple) -> str:
    d, e, q = key
    return f"{kind}_delta{d:g}_eps{e:g}_q{q:g}.svg"


def _save(fig, out_dir: str, name: str) -> str:
    path = os.path.join(out_dir, name)
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def _cells(rows):
    cells = defaultdict(list)
    for r in rows:
        cells[(r["delta"], r["epsilon"], r["q"])].append(r)
    return dict(sorted(cells.items()))


def _ok(rows):
    return [r for r in rows if r["status"] == OK]


def _plot_phase(rows, out_dir):
    fig, ax = plt.subplots()
    by_q = defaultdict(list)
    for r in _ok(rows):
        by_q[r["q"]].append(r)
    for q, rs in sorted(by_q.items()):
        rs.sort(key=lambda r: r["epsilon"])
        eps = [r["epsilon"] for r in rs]
        m = [r["m_value"] for r in rs]
        style = "-" if q == 1.0 else "--"
        ax.plot(eps, m, style, label=f"q = {q:g}")
    ax.set_xlim(0, 1)
    ax.set_ylim(0, 1.05)
    ax.set_xlabel(r"$\epsilon$")
    ax.set_ylabel(r"$\delta$")
    ax.set_title("phase transition $M_q(\\epsilon)$")
    ax.legend(frameon=False)
    fig.tight_layout()
    return [_save(fig, out_dir, "phase.svg")]


def _plot_amse(rows, kind, out_dir):
    paths = []
    for key, rs in _cells(_ok(rows)).items():
        rs.sort(key=lambda r: r["sigma_w"])
        sw = np.array([r["sigma_w"] for r in rs])
        fig, ax = plt.subplots()
        ax.plot(sw, [r["amse"] for r in rs], "k-", label="AMSE")
        first = np.array([r["first_order"] for r in rs])
        second = np.array([r["second_order"] for r in rs])
        if np.any(np.isfinite(first)):
            ax.plot(sw, first, "b--", label="first order")
        if np.any(np.isfinite(second)) and not np.allclose(second, first, equal_nan=True):
            ax.plot(sw, second, "r:", label="second order")
        ax.set_xlabel(r"$\sigma_w$")
        ax.set_ylabel("AMSE")
        d, e, q = key
        ax.set_title(rf"$\delta={d:g},\ \epsilon={e:g},\ q={q:g}$")
        ax.legend(frameon=False)
        fig.tight_layout()
        paths.append(_save(fig, out_dir, _cell_name(kind, key)))
    return paths


def _plot_expansion(rows, out_dir):
    paths = []
    for key, rs in _cells(_ok(rows)).items():
        rs = [r for r in rs if r["sigma_w"] > 0 and math.isfinite(r["normalized_gap"])]
        if not rs:
            continue
        rs.sort(key=lambda r: r["sigma_w"])
        fig, ax = plt.subplots()
        sw = [r["sigma_w"] for r in rs]
        ax.semilogx(sw, [r["normalized_gap"] for r in rs], "ko-", ms=3, label="(AMSE - first) / $\\sigma_w^{k}$")
        coeff = rs[0]["second_order_coeff"]
        if math.isfinite(coeff):
            ax.axhline(coeff, color="r", ls=":", label="second-order constant")
        ax.set_xlabel(r"$\sigma_w$")
        d, e, q = key
        ax.set_title(rf"$\delta={d:g},\ \epsilon={e:g},\ q={q:g}$")
        ax.legend(frameon=False)
        fig.tight_layout()
        paths.append(_save(fig, out_dir, _cell_name("expansion", key)))
    return paths


def _plot_finite(rows, out_dir):
    paths = []
    for key, rs in _cells(_ok(rows)).items():
        fig, ax = plt.subplots()
        by_p = defaultdict(lambda: defaultdict(list))
        theory = {}
        for r in rs:
            by_p[r["p"]][r["sigma_w"]].append(r["mse"])
            theory[r["sigma_w"]] = (r["amse"], r["first_order"], r["second_order"])
        sw = sorted(theory)
        ax.plot(sw, [theory[s][0] for s in sw], "k-", label="AMSE")
        first = [theory[s][1] for s in sw]
        second = [theory[s][2] for s in sw]
        if np.any(np.isfinite(first)):
            ax.plot(sw, first, "b--", label="first order")
        if np.any(np.isfinite(second)) and not np.allclose(second, first, equal_nan=True):
            ax.plot(sw, second, "r:", label="second order")
        for p, per in sorted(by_p.items()):
            s = sorted(per)
            mean = np.array([np.mean(per[v]) for v in s])
            sd = np.array([np.std(per[v], ddof=1) if len(per[v]) > 1 else 0.0 for v in s])
            line, = ax.plot(s, mean, "o-", ms=2.5, lw=0.8, label=f"p = {p:g}")
            ax.fill_between(s, mean - sd, mean + sd, color=line.get_color(), alpha=0.15, lw=0)
        ax.set_xlabel(r"$\sigma_w$")
        ax.set_ylabel("MSE")
        d, e, q = key
        ax.set_title(rf"$\delta={d:g},\ \epsilon={e:g},\ q={q:g}$")
        ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        paths.append(_save(fig, out_dir, _cell_name("finite_sample", key)))
    return paths


def _plot_trace(rows, out_dir):
    paths = []
    for key, rs in _cells(_ok(rows)).items():
        fig, ax = plt.subplots()
        groups = defaultdict(lambda: defaultdict(list))
        theory = {}
        for r in rs:
            groups[(r["p"], r["sigma_w"])][r["t"]].append(r["mse_emp"])
            theory[(r["p"], r["sigma_w"], r["t"])] = r["mse_theory"]
        for (p, s), per in sorted(groups.items()):
            t = sorted(per)
            line, = ax.semilogy(t, [np.mean(per[v]) for v in t], "o", ms=3, label=f"p = {p:g}, $\\sigma_w$ = {s:g}")
            ax.semilogy(t, [theory[(p, s, v)] for v in t], "-", color=line.get_color(), lw=0.8)
        ax.set_xlabel("iteration t")
        ax.set_ylabel(r"$\|\beta^t - \beta\|^2 / p$")
        d, e, q = key
        ax.set_title(rf"$\delta={d:g},\ \epsilon={e:g},\ q={q:g}$ (lines: recursion)")
        ax.legend(frameon=False, fontsize=7)
        fig.tight_layout()
        paths.append(_save(fig, out_dir, _cell_name("amp_trace", key)))
    return paths


def emit_figures(csv_path: str, out_dir: str) -> list:
    """Render the figures for one CSV file; returns the SVG paths."""
    kind, rows = read_csv(csv_path)
    os.makedirs(out_dir, exist_ok=True)
    with plt.rc_context(_RC):
        if kind == "phase":
            return _plot_phase(rows, out_dir)
        if kind == "amse_curve":
            return _plot_amse(rows, "amse", out_dir)
        if kind == "expansion_check":
            return _plot_expansion(rows, out_dir)
        if kind == "finite_sample":
            return _plot_finite(rows, out_dir)
        return _plot_trace(rows, out_dir)
