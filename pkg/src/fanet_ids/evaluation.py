"""Detection metrics, communication cost and experiment reports.

Report files written by :func:`write_report`:

``results.csv``
    one ``run`` row per (plan, topology, seed) followed, for every group of
    rows sharing a plan, by a ``mean`` row whose ``*_std`` columns hold the
    population standard deviation. Columns are fixed (:data:`REPORT_COLUMNS`).
``summary.txt``
    the same numbers as percentages with two decimals, plus an
    attack x ratio x model accuracy pivot for any variant whose 30 cells
    are all present.
``timings.csv``
    wall-clock seconds per run. Kept apart so that the two files above are
    byte-identical across re-runs.
"""
from collections import defaultdict
import csv
from dataclasses import dataclass
import os

import numpy as np

ATTACKS = ("sinkhole", "blackhole", "flooding")
RATIOS = (0.05, 0.10, 0.15, 0.20, 0.25)
MODELS = ("dnn", "cnn")


@dataclass(frozen=True)
class ConfusionMatrix:
    tp: int = 0
    fp: int = 0
    tn: int = 0
    fn: int = 0

    def __post_init__(self):
        if min(self.tp, self.fp, self.tn, self.fn) < 0:
            raise ValueError("confusion counts must be non-negative")

    @property
    def total(self):
        return self.tp + self.fp + self.tn + self.fn

    def __add__(self, other):
        return ConfusionMatrix(self.tp + other.tp, self.fp + other.fp, self.tn + other.tn, self.fn + other.fn)

    def scaled(self, k):
        return ConfusionMatrix(k * self.tp, k * self.fp, k * self.tn, k * self.fn)


def confusion(labels, probs, threshold=0.5):
    """Counts with malicious (1) as the positive class; ``p >= threshold`` flags."""
    y = np.asarray(labels).astype(int)
    pred = (np.asarray(probs) >= threshold).astype(int)
    return ConfusionMatrix(tp=int(np.sum((pred == 1) & (y == 1))), fp=int(np.sum((pred == 1) & (y == 0))),
                           tn=int(np.sum((pred == 0) & (y == 0))), fn=int(np.sum((pred == 0) & (y == 1))))


def metrics(cm):
    """Accuracy, detection rate and false-positive rate.

    A rate whose denominator is zero is reported as ``None`` (not
    applicable) rather than 0.
    """
    if cm.total == 0:
        raise ValueError("empty confusion matrix")
    pos = cm.tp + cm.fn
    neg = cm.fp + cm.tn
    return {
        "accuracy": (cm.tp + cm.tn) / cm.total,
        "dr": cm.tp / pos if pos else None,
        "fpr": cm.fp / neg if neg else None,
    }


def comm_cost(N, W, E, S):
    """Bytes moved by federated training: nodes x weights x rounds x bytes per weight."""
    for name, v in (("N", N), ("W", W), ("E", E), ("S", S)):
        if not v > 0:
            raise ValueError(f"{name} must be positive, got {v}")
    return N * W * E * S


# -- reports --------------------------------------------------------------------

REPORT_COLUMNS = (
    "row_type", "ids_variant", "model", "head", "attack_kind", "attacker_ratio", "shot_size", "rounds", "epochs",
    "learning_rate", "topology_id", "seed", "n_clients", "train_rows", "accuracy", "dr", "fpr", "tp", "fp", "tn",
    "fn", "comm_N", "comm_W", "comm_E", "comm_S", "comm_cost", "server_sample_reads", "accuracy_std", "dr_std",
    "fpr_std",
)
GROUP_KEY = ("ids_variant", "model", "head", "attack_kind", "attacker_ratio", "shot_size", "rounds", "epochs",
             "learning_rate")


def fmt_value(v):
    if v is None:
        return ""
    if isinstance(v, float):
        return repr(v)
    return str(v)


def report_row(rep):
    p = rep.plan
    comm = rep.comm or {}
    return {
        "row_type": "run", "ids_variant": p.ids_variant, "model": p.model, "head": p.train.head,
        "attack_kind": p.attack_kind, "attacker_ratio": float(p.attacker_ratio), "shot_size": p.shot_size,
        "rounds": rep.rounds, "epochs": rep.epochs, "learning_rate": float(p.train.learning_rate),
        "topology_id": rep.topology_id, "seed": rep.seed, "n_clients": rep.n_clients, "train_rows": rep.train_rows,
        "accuracy": rep.accuracy, "dr": rep.dr, "fpr": rep.fpr, "tp": rep.cm.tp, "fp": rep.cm.fp,
        "tn": rep.cm.tn, "fn": rep.cm.fn, "comm_N": comm.get("N"), "comm_W": comm.get("W"),
        "comm_E": comm.get("E"), "comm_S": comm.get("S"), "comm_cost": comm.get("cost"),
        "server_sample_reads": rep.server_sample_reads,
    }


def _mean_std(values):
    vals = [v for v in values if v is not None]
    if not vals:
        return None, None
    return float(np.mean(vals)), float(np.std(vals))


def aggregate_rows(rows):
    """Group run rows by plan; each group gets a trailing mean/std row."""
    groups = defaultdict(list)
    for r in rows:
        groups[tuple(r[k] for k in GROUP_KEY)].append(r)
    out = []
    for key in sorted(groups, key=lambda k: tuple(str(x) for x in k)):
        grp = sorted(groups[key], key=lambda r: (r["topology_id"], r["seed"]))
        out += grp
        if len(grp) > 1:
            agg = dict(zip(GROUP_KEY, key), row_type="mean")
            for m in ("accuracy", "dr", "fpr"):
                agg[m], agg[m + "_std"] = _mean_std(r[m] for r in grp)
            agg["n_clients"] = grp[0]["n_clients"]
            for k in ("tp", "fp", "tn", "fn"):
                agg[k] = sum(r[k] for r in grp)
            out.append(agg)
    return out


def _pct(v):
    return "n/a" if v is None else f"{100.0 * v:.2f}%"


def pivot(rows, variant):
    """``{(attack, ratio, model): mean accuracy}`` when the full grid is present, else None."""
    acc = defaultdict(list)
    for r in rows:
        if r["row_type"] == "run" and r["ids_variant"] == variant:
            acc[(r["attack_kind"], round(r["attacker_ratio"], 4), r["model"])].append(r["accuracy"])
    cells = {(a, ra, m) for a in ATTACKS for ra in RATIOS for m in MODELS}
    if not cells <= set(acc):
        return None
    return {c: float(np.mean(acc[c])) for c in sorted(cells)}


def summary_text(rows):
    lines = ["IDS evaluation summary", ""]
    header = f"{'variant':<6} {'model':<5} {'attack':<10} {'ratio':>6} {'shot':>5} {'row':<5} {'topo':>5} " \
             f"{'seed':>5} {'accuracy':>15} {'DR':>9} {'FPR':>9}"
    lines += [header, "-" * len(header)]
    for r in rows:
        acc = _pct(r["accuracy"])
        if r["row_type"] == "mean" and r.get("accuracy_std") is not None:
            acc = f"{acc} +/- {100.0 * r['accuracy_std']:.2f}"
        lines.append(f"{r['ids_variant']:<6} {r['model']:<5} {r['attack_kind']:<10} "
                     f"{100 * r['attacker_ratio']:>5.0f}% {r['shot_size']:>5} {r['row_type']:<5} "
                     f"{fmt_value(r.get('topology_id')):>5} {fmt_value(r.get('seed')):>5} {acc:>15} {_pct(r['dr']):>9} "
                     f"{_pct(r['fpr']):>9}")
    costs = sorted({(r["ids_variant"], r["comm_N"], r["comm_W"], r["comm_E"], r["comm_S"], r["comm_cost"])
                    for r in rows if r["row_type"] == "run" and r.get("comm_cost")})
    if costs:
        lines += ["", "Communication cost (N x W x E x S bytes)"]
        for v, n, w, e, s, c in costs:
            lines.append(f"{v:<6} N={n} W={w} E={e} S={s} -> {c} bytes")
    for variant in ("FSFL", "FL", "C", "L"):
        pv = pivot(rows, variant)
        if pv is None:
            continue
        lines += ["", f"{variant}-IDS mean accuracy by attack, ratio and model"]
        lines.append(f"{'attack':<10} {'model':<5} " + " ".join(f"{100 * r:>7.0f}%" for r in RATIOS))
        for a in ATTACKS:
            for m in MODELS:
                lines.append(f"{a:<10} {m:<5} " + " ".join(f"{_pct(pv[(a, r, m)]):>8}" for r in RATIOS))
    return "\n".join(lines) + "\n"


def write_report(reports, out_dir, timings=None):
    """Write ``results.csv`` and ``summary.txt`` (and ``timings.csv`` when given)."""
    if not reports:
        raise ValueError("nothing to report")
    os.makedirs(out_dir, exist_ok=True)
    rows = aggregate_rows([report_row(r) for r in reports])
    path = os.path.join(out_dir, "results.csv")
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(REPORT_COLUMNS)
        for r in rows:
            w.writerow([fmt_value(r.get(c)) for c in REPORT_COLUMNS])
    with open(os.path.join(out_dir, "summary.txt"), "w") as fh:
        fh.write(summary_text(rows))
    if timings:
        with open(os.path.join(out_dir, "timings.csv"), "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(("run", "wall_time_s"))
            for name, secs in timings:
                w.writerow((name, f"{secs:.3f}"))
    return rows


def read_results(path):
    """Load ``results.csv`` back into typed row dicts."""
    ints = {"shot_size", "rounds", "epochs", "topology_id", "seed", "n_clients", "train_rows", "tp", "fp", "tn",
            "fn", "comm_N", "comm_W", "comm_E", "comm_S", "comm_cost", "server_sample_reads"}
    floats = {"attacker_ratio", "learning_rate", "accuracy", "dr", "fpr", "accuracy_std", "dr_std", "fpr_std"}
    out = []
    with open(path, newline="") as fh:
        for raw in csv.DictReader(fh):
            row = {}
            for k, v in raw.items():
                if v == "":
                    row[k] = None
                elif k in ints:
                    row[k] = int(v)
                elif k in floats:
                    row[k] = float(v)
                else:
                    row[k] = v
            out.append(row)
    return out
