"""Figure emission.

All figures are SVG with a fixed hash salt and no timestamp metadata, so
identical inputs produce byte-identical files. Rendering works back-end-free
via matplotlib's Agg canvas.
"""

from __future__ import annotations

import math
import os
import tempfile

import matplotlib

matplotlib.use("Agg")

import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .hamiltonian import SENTINEL  # noqa: E402


def _save(fig, path, salt):
    plt.rcParams["svg.hashsalt"] = salt or "hjhomog"
    d = os.path.dirname(os.path.abspath(path)) or "."
    os.makedirs(d, exist_ok=True)
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-", suffix=".svg")
    os.close(fd)
    try:
        fig.savefig(tmp, format="svg", metadata={"Date": None})
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
    finally:
        plt.close(fig)


def _field_grid(field, level):
    window = field.window
    vals = field.values(level).reshape(window.shape)
    axes = [window.axis(i) for i in range(window.ndim)]
    masked = np.where(field.admissible.reshape(window.shape), vals, np.nan)
    masked = np.where(masked >= SENTINEL / 2, np.nan, masked)
    return axes, masked


def front_plot(field, times, path, level_value=0.0, salt=""):
    """Zero-level fronts of the value function at the given times."""
    fig, ax = plt.subplots(figsize=(6.0, 5.0))
    cmap = plt.get_cmap("viridis")
    for i, t in enumerate(sorted(times)):
        k = field.grid.level_of(t)
        axes, vals = _field_grid(field, k)
        color = cmap(i / max(1, len(times) - 1))
        ax.contour(axes[0], axes[1], vals.T, levels=[level_value],
                   colors=[color], linewidths=1.4)
        ax.plot([], [], color=color, label=f"t = {t:g}")
    hole = np.isnan(_field_grid(field, 0)[1])
    if np.any(hole):
        axes = [field.window.axis(i) for i in range(2)]
        ax.contourf(axes[0], axes[1], hole.T.astype(float), levels=[0.5, 1.5],
                    colors=["0.82"])
    ax.set_aspect("equal")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    ax.set_title(f"front {{V = {level_value:g}}}")
    ax.legend(loc="upper right", fontsize=8)
    _save(fig, path, salt)


def field_plot(field, t, path, salt=""):
    """Filled contour snapshot of V at one time."""
    k = field.grid.level_of(t)
    axes, vals = _field_grid(field, k)
    fig, ax = plt.subplots(figsize=(6.4, 5.0))
    im = ax.pcolormesh(axes[0], axes[1], vals.T, shading="nearest")
    fig.colorbar(im, ax=ax, label=f"V(x, {t:g})")
    ax.set_aspect("equal")
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    _save(fig, path, salt)


def loglog_plot(eps_list, errors, path, slope=None, c_fit=None, salt="",
                ylabel="sup error"):
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    ax.loglog(eps_list, errors, "o-", label="measured")
    if slope is not None and c_fit is not None:
        e = np.asarray(eps_list, dtype=float)
        ax.loglog(e, c_fit * e ** slope, "--",
                  label=f"fit: slope {slope:.2f}")
        ref = errors[-1] / eps_list[-1]
        ax.loglog(e, ref * e, ":", color="0.5", label="order 1")
    ax.set_xlabel("eps")
    ax.set_ylabel(ylabel)
    ax.grid(True, which="both", alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path, salt)


def path_plot(path_obj, domain, out_path, window=None, salt=""):
    """Reflected trajectory over the obstacle field."""
    eta = path_obj.eta
    fig, ax = plt.subplots(figsize=(5.6, 5.0))
    lo = eta.min(axis=0) - 0.6
    hi = eta.max(axis=0) + 0.6
    if window is not None:
        lo, hi = np.minimum(lo, window[0]), np.maximum(hi, window[1])
    xs = np.linspace(lo[0], hi[0], 240)
    ys = np.linspace(lo[1], hi[1], 240)
    gx, gy = np.meshgrid(xs, ys, indexing="ij")
    pts = np.stack([gx.ravel(), gy.ravel()], axis=-1)
    psi = np.asarray(domain.psi(pts), dtype=float).reshape(gx.shape)
    ax.contourf(xs, ys, (psi > 0).T.astype(float), levels=[0.5, 1.5],
                colors=["0.82"])
    ax.contour(xs, ys, psi.T, levels=[0.0], colors=["0.4"], linewidths=0.8)
    ax.plot(eta[:, 0], eta[:, 1], "-", color="C0", lw=1.4)
    ax.plot(eta[0, 0], eta[0, 1], "o", color="C2", label="start")
    ax.plot(eta[-1, 0], eta[-1, 1], "s", color="C3", label="end")
    touched = path_obj.l > 0
    if np.any(touched):
        ax.plot(eta[:-1][touched, 0], eta[:-1][touched, 1], ".",
                color="C1", ms=3, label="reflection active")
    ax.set_aspect("equal")
    ax.legend(fontsize=8)
    ax.set_xlabel("x1")
    ax.set_ylabel("x2")
    _save(fig, out_path, salt)


def table_plot(table, path, salt=""):
    """Effective Lagrangian samples with the free-space parabola reference."""
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    ax.plot(table.q_grid, table.values, "o-", label="effective")
    ax.plot(table.q_grid, 0.5 * table.q_grid ** 2, "--", color="0.5",
            label="free space q^2/2")
    ax.set_xlabel("q1")
    ax.set_ylabel("L(q)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path, salt)


def lagrangian_plot(evaluator, y, l_values, path, qmax=2.5, salt=""):
    """Cost sections q -> L(y, q, l) for a few reflection rates."""
    q = np.linspace(-qmax, qmax, 301)
    fig, ax = plt.subplots(figsize=(5.2, 4.2))
    for l in l_values:
        vals = np.array([evaluator.lagrangian(y, np.array([qq, 0.0]), l)
                         for qq in q])
        vals = np.where(vals >= SENTINEL / 2, np.nan, vals)
        ax.plot(q, vals, label=f"l = {l:g}")
    ax.set_xlabel("q1")
    ax.set_ylabel("L(y, q, l)")
    ax.grid(alpha=0.3)
    ax.legend(fontsize=8)
    _save(fig, path, salt)


def additivity_plot(report, path, salt=""):
    """Sub/super-additivity defects across the sampling plan."""
    rows = report["samples"]
    idx = np.arange(len(rows))
    sub = [r["sub_defect"] for r in rows]
    sup = [r["super_defect"] for r in rows]
    fig, ax = plt.subplots(figsize=(5.6, 4.0))
    ax.bar(idx - 0.2, sub, width=0.4, label="sub-additivity defect")
    ax.bar(idx + 0.2, sup, width=0.4, label="super-additivity defect")
    ax.axhline(report["C_estimate"], color="C3", ls="--",
               label=f"C = {report['C_estimate']:.3g}")
    ax.axhline(0.0, color="0.3", lw=0.8)
    ax.set_xticks(idx)
    ax.set_xticklabels([f"t={r['t']:g}" for r in rows], fontsize=7)
    ax.legend(fontsize=8)
    _save(fig, path, salt)
