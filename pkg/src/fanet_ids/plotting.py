"""Report figures (rendered off-screen with the Agg backend)."""
from collections import defaultdict
import os

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

ATTACK_ORDER = ("sinkhole", "blackhole", "flooding")


def _runs(rows):
    return [r for r in rows if r["row_type"] == "run"]


def accuracy_vs_ratio(rows, path, metric="accuracy"):
    """One panel per attack: ``metric`` against attacker ratio, one line per (variant, model)."""
    runs = _runs(rows)
    attacks = [a for a in ATTACK_ORDER if any(r["attack_kind"] == a for r in runs)]
    if not attacks:
        return None
    fig, axes = plt.subplots(1, len(attacks), figsize=(4.2 * len(attacks), 3.4), sharey=True, squeeze=False)
    for ax, attack in zip(axes[0], attacks):
        series = defaultdict(lambda: defaultdict(list))
        for r in runs:
            if r["attack_kind"] == attack and r[metric] is not None:
                series[(r["ids_variant"], r["model"], r["shot_size"])][r["attacker_ratio"]].append(r[metric])
        for (variant, model, shot), pts in sorted(series.items()):
            xs = sorted(pts)
            ys = [100.0 * np.mean(pts[x]) for x in xs]
            err = [100.0 * np.std(pts[x]) for x in xs]
            ax.errorbar([100 * x for x in xs], ys, yerr=err, marker="o", capsize=3, lw=1.2,
                        label=f"{variant}-IDS {model.upper()} {shot}-shot")
        ax.set_title(attack)
        ax.set_xlabel("attacker ratio (%)")
        ax.grid(alpha=0.3)
    axes[0][0].set_ylabel(f"{metric} (%)" if metric != "dr" else "detection rate (%)")
    axes[0][-1].legend(fontsize=7, loc="lower right")
    fig.tight_layout()
    os.makedirs(os.path.dirname(os.path.abspath(path)), exist_ok=True)
    # fixed metadata keeps the PNG bytes stable across runs
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def comm_cost_bars(rows, path):
    """Bytes moved per federated configuration (log scale)."""
    costs = {}
    for r in _runs(rows):
        if r.get("comm_cost"):
            costs[f"{r['ids_variant']} {r['model']} E={r['comm_E']}"] = r["comm_cost"]
    if not costs:
        return None
    labels = sorted(costs)
    fig, ax = plt.subplots(figsize=(1.2 + 1.1 * len(labels), 3.2))
    ax.bar(range(len(labels)), [costs[k] for k in labels], color="0.45")
    ax.set_xticks(range(len(labels)), labels, rotation=30, ha="right", fontsize=8)
    ax.set_yscale("log")
    ax.set_ylabel("bytes")
    fig.tight_layout()
    fig.savefig(path, dpi=120, metadata={"Software": None})
    plt.close(fig)
    return path


def render_all(rows, out_dir):
    out = []
    for metric, name in (("accuracy", "accuracy_vs_ratio.png"), ("dr", "dr_vs_ratio.png")):
        p = accuracy_vs_ratio(rows, os.path.join(out_dir, name), metric)
        if p:
            out.append(p)
    p = comm_cost_bars(rows, os.path.join(out_dir, "comm_cost.png"))
    if p:
        out.append(p)
    return out
