"""SVG line charts for protocol reports.  CSVs remain the data contract."""
from __future__ import annotations

import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

# fixed ids and no timestamp so reruns write identical files
plt.rcParams["svg.hashsalt"] = "kreslingcap"
_META = {"Date": None, "Creator": None}


def _save(fig, path):
    fig.tight_layout()
    fig.savefig(path, format="svg", metadata=_META)
    plt.close(fig)
    return path


def _lines(results, x_of, y_of, xlabel, ylabel, title, path):
    fig, ax = plt.subplots(figsize=(6, 4))
    for r in results:
        ax.plot(x_of(r), y_of(r), marker=".", label=f"{r.delta:+g} mm")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    ax.set_title(title)
    ax.grid(True, alpha=0.3)
    ax.legend(fontsize="small", title="offset")
    return _save(fig, path)


def protocol_plots(results, out_dir):
    paths = [
        _lines(results, lambda r: r.theta, lambda r: r.torque, "twist (deg)", "torque (N mm)",
               "Torque vs twist", os.path.join(out_dir, "torque_vs_theta.svg")),
        _lines(results, lambda r: r.theta, lambda r: r.capacitance, "twist (deg)", "C (pF)",
               "Capacitance vs twist", os.path.join(out_dir, "capacitance_vs_theta.svg")),
        _lines(results, lambda r: r.t, lambda r: r.normalized, "t (s)", "normalized (0-100)",
               "Calibrated signal", os.path.join(out_dir, "normalized_signal.svg")),
    ]
    d = np.array([r.delta for r in results])
    order = np.argsort(d)
    fig, axes = plt.subplots(1, 2, figsize=(8, 3.5))
    axes[0].plot(d[order], [results[i].summary[1] for i in order], marker="o")
    axes[0].set_xlabel("offset (mm)")
    axes[0].set_ylabel("peak torque (N mm)")
    axes[1].plot(d[order], [results[i].summary[6] for i in order], marker="o")
    axes[1].set_xlabel("offset (mm)")
    axes[1].set_ylabel("modulation (C range / C min)")
    for ax in axes:
        ax.grid(True, alpha=0.3)
    paths.append(_save(fig, os.path.join(out_dir, "summary.svg")))
    return paths


def curve_plot(x, y, xlabel, ylabel, path, title=""):
    fig, ax = plt.subplots(figsize=(6, 4))
    ax.plot(x, y, marker=".")
    ax.set_xlabel(xlabel)
    ax.set_ylabel(ylabel)
    if title:
        ax.set_title(title)
    ax.grid(True, alpha=0.3)
    return _save(fig, path)
