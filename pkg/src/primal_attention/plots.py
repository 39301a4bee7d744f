"""Figure rendering for the report paths; CSV stays the data contract."""

from __future__ import annotations

import os
import tempfile


def _savefig_atomic(fig, path):
    directory = os.path.dirname(os.path.abspath(path)) or "."
    fd, tmp = tempfile.mkstemp(dir=directory, prefix=".tmp-", suffix=".png")
    os.close(fd)
    try:
        fig.savefig(tmp, dpi=150, bbox_inches="tight")
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise


def _pyplot():
    import matplotlib

    matplotlib.use("Agg")
    import matplotlib.pyplot as plt

    return plt


def render_spectrum_figure(report, path) -> None:
    plt = _pyplot()
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.5))
    ks = range(1, len(report.singular_values) + 1)
    left.plot(ks, report.singular_values, marker="o", ms=3)
    left.set_xlabel("k")
    left.set_ylabel("singular value")
    left.set_yscale("log")
    left.grid(alpha=0.3)
    right.plot(ks, report.explained_variance, marker="o", ms=3, label="sigma^2-normalized")
    right.plot(ks, report.explained_sigma, marker="s", ms=3, label="sigma-normalized")
    for tau, rank in sorted(report.effective_ranks.items()):
        right.axvline(rank, color="gray", lw=0.8, ls="--")
    right.set_xlabel("k")
    right.set_ylabel("cumulative explained variance")
    right.set_ylim(0, 1.02)
    right.legend(fontsize=8)
    right.grid(alpha=0.3)
    fig.tight_layout()
    _savefig_atomic(fig, path)
    plt.close(fig)


def render_bench_figure(rows, path) -> None:
    plt = _pyplot()
    fig, (left, right) = plt.subplots(1, 2, figsize=(9, 3.5))
    mechanisms = sorted({row["mechanism"] for row in rows})
    for mech in mechanisms:
        sub = [row for row in rows if row["mechanism"] == mech]
        ns = [row["n"] for row in sub]
        left.plot(ns, [row["median_wall_time_s"] for row in sub], marker="o", label=mech)
        right.plot(ns, [row["flops"] for row in sub], marker="o", label=mech)
    for axis, ylabel in ((left, "median wall time (s)"), (right, "FLOPs per forward")):
        axis.set_xscale("log", base=2)
        axis.set_yscale("log")
        axis.set_xlabel("sequence length N")
        axis.set_ylabel(ylabel)
        axis.grid(alpha=0.3)
        axis.legend(fontsize=8)
    fig.tight_layout()
    _savefig_atomic(fig, path)
    plt.close(fig)


def render_train_figure(log, path) -> None:
    plt = _pyplot()
    steps = [row["step"] for row in log.rows]
    fig, (left, mid, right) = plt.subplots(1, 3, figsize=(12, 3.2))
    left.plot(steps, [row["task_loss"] for row in log.rows], label="task loss")
    left.plot(steps, [row["total_loss"] for row in log.rows], label="total loss", ls="--")
    left.set_xlabel("step")
    left.set_ylabel("loss")
    left.legend(fontsize=8)
    left.grid(alpha=0.3)
    for layer in range(log.layers):
        mid.plot(steps, [row["per_layer_j"][layer] for row in log.rows], label=f"layer {layer}")
    mid.set_xlabel("step")
    mid.set_ylabel("J per layer")
    mid.legend(fontsize=8)
    mid.grid(alpha=0.3)
    right.plot(steps, [row["eval_metric"] for row in log.rows], color="tab:green")
    right.set_xlabel("step")
    right.set_ylabel("eval metric")
    right.grid(alpha=0.3)
    fig.tight_layout()
    _savefig_atomic(fig, path)
    plt.close(fig)
