"""Static PNG figures rendered from sweep rows with the non-interactive Agg backend."""
from __future__ import annotations

from collections import defaultdict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402


def _x_axis(scn, rows):
    if scn.mode == "iterate":
        return "step"
    if scn.alpha is not None and len(scn.alpha) > 1:
        return "alpha"
    if scn.m is not None and len({r["psi"] for r in rows}) > 1:
        return "psi"
    if len({r["phi"] for r in rows}) > 1:
        return "phi"
    if len({r["lambda"] for r in rows}) > 1:
        return "lambda"
    return "c2"


def _curve_key(row, x):
    keys = [k for k in ("p2", "c2", "n", "alpha", "psi", "lambda") if k != x]
    return tuple((k, row[k]) for k in keys if row.get(k) is not None)


def _label(key, varying):
    parts = [f"{k}={v:.3g}" for k, v in key if k in varying]
    return ", ".join(parts) or "all"


def _pareto(ax, rows):
    """Mixed-data error against real-only error (p2 = 0) at matching (n, m, c2)."""
    real = {(r["n"], r["m"], r["c2"]): r for r in rows if r["p2"] == 0}
    groups = defaultdict(list)
    for r in rows:
        if r["p2"] == 0:
            continue
        base = real.get((r["n"], r["m"], r["c2"]))
        col = "E_emp_mean" if r["E_emp_mean"] is not None else "E_theory"
        if base is None or r[col] is None or base[col] is None:
            continue
        groups[(r["p2"], r["c2"])].append((base[col], r[col]))
    for (p2, c2), pts in sorted(groups.items()):
        pts.sort()
        ax.plot([p[0] for p in pts], [p[1] for p in pts], "o-", ms=3, label=f"p2={p2:.3g}, c2={c2:.3g}")
    ax.set_xlabel("real-only test error")
    ax.set_ylabel("mixed-data test error")
    ax.set_xscale("log")
    ax.set_yscale("log")


def render_scenario(scn, rows: list[dict], path: str | Path) -> Path:
    """Draw theory curves (lines) and empirical means with SE bars (markers)."""
    path = Path(path)
    fig, ax = plt.subplots(figsize=(7.0, 4.8), layout="constrained")
    if scn.mode == "pareto":
        _pareto(ax, rows)
    else:
        x = _x_axis(scn, rows)
        curves = defaultdict(list)
        for r in rows:
            if r.get(x) is not None:
                curves[_curve_key(r, x)].append(r)
        varying = {k for k in ("p2", "c2", "n", "alpha", "psi", "lambda")
                   if len({r.get(k) for r in rows}) > 1}
        for i, (key, pts) in enumerate(sorted(curves.items(), key=lambda kv: str(kv[0]))):
            pts.sort(key=lambda r: r[x])
            color = f"C{i % 10}"
            label = _label(key, varying)
            th = [(r[x], r["E_theory"]) for r in pts if r["E_theory"] is not None]
            if th:
                ax.plot(*zip(*th), "-", color=color, label=label)
            emp = [(r[x], r["E_emp_mean"], r["E_emp_se"] or 0.0) for r in pts if r["E_emp_mean"] is not None]
            if emp:
                xs, ys, es = zip(*emp)
                ax.errorbar(xs, ys, yerr=es, fmt="o", ms=3, color=color, capsize=2,
                            label=None if th else label)
        ax.set_xlabel(x)
        ax.set_ylabel("test error")
        if x in ("psi", "lambda"):
            ax.set_xscale("log")
        ax.set_yscale("log")
    ax.set_title(scn.name)
    if ax.get_legend_handles_labels()[0]:
        ax.legend(fontsize=6, ncol=2)
    fig.savefig(path, dpi=120)
    plt.close(fig)
    return path
