"""Figures written next to the CSV reports of ``analyze``, ``eval`` and ``bench``."""
from __future__ import annotations

from collections import OrderedDict
from pathlib import Path

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402

_RC = {
    "font.size": 9,
    "axes.spines.top": False,
    "axes.spines.right": False,
    "axes.grid": True,
    "grid.alpha": 0.3,
    "savefig.dpi": 150,
}


def _group(name: str) -> str:
    # enc3.ddc.first -> enc3.ddc, mia.ass.k5 -> mia.ass, head -> head
    parts = name.split(".")
    return ".".join(parts[:2])


def _save(fig, path):
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    fig.tight_layout()
    fig.savefig(path)
    plt.close(fig)
    return path


def plot_complexity(report, path):
    params, flops = OrderedDict(), OrderedDict()
    for layer in report.layers:
        g = _group(layer.name)
        params[g] = params.get(g, 0) + layer.params
        flops[g] = flops.get(g, 0) + layer.flops
    names = list(params)
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 0.22 * len(names) + 1.5), sharey=True)
        y = range(len(names))
        ax1.barh(y, [params[n] / 1e6 for n in names], color="tab:blue")
        ax1.set_xlabel("parameters (M)")
        ax1.set_yticks(list(y))
        ax1.set_yticklabels(names)
        ax1.invert_yaxis()
        ax2.barh(y, [flops[n] / 1e9 for n in names], color="tab:orange")
        ax2.set_xlabel("GFLOPs (MAC)")
        h, w = report.input_hw
        fig.suptitle(f"{report.mparams:.2f} M params, {report.gflops:.2f} GFLOPs at {h}x{w}")
        return _save(fig, path)


def plot_eval(report, path):
    rows = report.rows
    names = [r["image"] for r in rows]
    with plt.rc_context(_RC):
        fig, ax = plt.subplots(figsize=(max(4, 0.35 * len(rows) + 2), 3.2))
        x = range(len(rows))
        ax.bar([i - 0.2 for i in x], [r["IoU"] for r in rows], width=0.4, label="IoU")
        ax.bar([i + 0.2 for i in x], [r["F1"] for r in rows], width=0.4, label="F1")
        agg = report.aggregate
        ax.axhline(agg["IoU"], color="tab:blue", ls="--", lw=1, label=f"pooled IoU {agg['IoU']:.4f}")
        ax.set_xticks(list(x))
        ax.set_xticklabels(names, rotation=60, ha="right")
        ax.set_ylim(0, 1.05)
        ax.legend(loc="lower right", frameon=False)
        return _save(fig, path)


def plot_bench(profile, iter_fps, path):
    items = sorted(profile.items(), key=lambda kv: kv[1], reverse=True)
    with plt.rc_context(_RC):
        fig, (ax1, ax2) = plt.subplots(1, 2, figsize=(10, 0.2 * len(items) + 1.5),
                                       gridspec_kw={"width_ratios": [2, 1]})
        ax1.barh(range(len(items)), [v * 1e3 for _, v in items], color="tab:green")
        ax1.set_yticks(range(len(items)))
        ax1.set_yticklabels([k for k, _ in items])
        ax1.invert_yaxis()
        ax1.set_xlabel("mean time per iteration (ms)")
        ax2.plot(range(1, len(iter_fps) + 1), iter_fps, marker="o")
        ax2.set_xlabel("iteration")
        ax2.set_ylabel("FPS")
        return _save(fig, path)
