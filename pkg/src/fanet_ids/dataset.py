"""Per-UAV balanced datasets: decimation, K-shot reduction, splitting, CSV I/O."""
from collections import defaultdict
import csv
import dataclasses
from dataclasses import dataclass, field
import math

import numpy as np

from .features import BENIGN, FEATURE_NAMES, MALICIOUS, N_FEATURES, Sample
from .rng import substream

FEATURE_COLUMNS = tuple(f"f{i:02d}" for i in range(1, N_FEATURES + 1))
KEY_COLUMNS = ("topology_id", "attack_kind", "attacker_ratio", "node_id", "window_start_s")
CSV_COLUMNS = KEY_COLUMNS + FEATURE_COLUMNS + ("label",)
TRACE_EXTRA = ("attacker_node", "attacker_contact")


@dataclass
class UavDataset:
    """Balanced per-UAV sample sets."""

    topology_id: int
    uav_id: int
    benign: list
    malicious: list
    fallback: str = "decimated"

    def __post_init__(self):
        # canonical order so in-memory and CSV round-tripped sets behave alike
        self.benign = sorted(self.benign, key=row_order)
        self.malicious = sorted(self.malicious, key=row_order)

    @property
    def shot_size(self):
        return len(self.benign)

    def classes(self):
        return {BENIGN: self.benign, MALICIOUS: self.malicious}

    def samples(self):
        return list(self.benign) + list(self.malicious)

    def arrays(self):
        return to_arrays(self.samples())


def to_arrays(samples):
    if not samples:
        return np.zeros((0, N_FEATURES)), np.zeros(0)
    X = np.stack([s.features for s in samples]).astype(float)
    y = np.array([s.label for s in samples], dtype=float)
    return X, y


def decimation_indices(n_windows, per_class, stride=None):
    """Window indices kept when thinning the 5 s stream to ``per_class`` samples.

    With 360 windows and 36 samples this is ``{0, 10, ..., 350}`` (one
    window every 50 s).
    """
    if stride is None:
        stride = n_windows // per_class
    if stride < 1 or (per_class - 1) * stride >= n_windows:
        raise ValueError(f"cannot take {per_class} windows at stride {stride} from {n_windows}")
    return [k * stride for k in range(per_class)]


def _by_node(samples, window_s):
    out = defaultdict(dict)
    for s in samples:
        out[s.node_id][int(round(s.window_start_s / window_s))] = s
    return out


def _draw(pool, n, rng):
    """All of ``pool`` (shuffled) then top up with replacement when short."""
    if len(pool) >= n:
        idx = rng.permutation(len(pool))[:n]
        return [pool[i] for i in sorted(idx)]
    extra = rng.integers(0, len(pool), size=n - len(pool))
    return list(pool) + [pool[i] for i in extra]


def build_uav_datasets(attacked, attack_free, per_class=36, stride=None, window_s=5.0, seed=0, log=None):
    """Pair an attacked run with its attack-free twin into balanced per-UAV sets.

    Benign samples come from the twin run; malicious ones from the attacked
    run's malicious-labelled windows at the decimated indices. A UAV short
    of those is topped up with its other (full-resolution) malicious
    windows, then, if still short, by resampling with replacement. A UAV
    with no malicious window at all borrows from the network-wide pool.
    """
    free = _by_node(attack_free, window_s)
    hit = _by_node(attacked, window_s)
    if set(free) != set(hit):
        raise ValueError("attacked and attack-free runs cover different UAVs")
    n_windows = max(len(w) for w in free.values())
    keep = decimation_indices(n_windows, per_class, stride)
    topo = next(iter(attacked)).topology_id if attacked else 0
    network_pool = [s for s in attacked if s.label == MALICIOUS]
    out = {}
    for uav in sorted(free):
        benign = [free[uav][k] for k in keep]
        if any(s.label != BENIGN for s in benign):
            raise ValueError(f"attack-free run has malicious windows for UAV {uav}")
        rng = substream(seed, "fill", topo, uav)
        pool = [hit[uav][k] for k in keep if hit[uav][k].label == MALICIOUS]
        level = "decimated"
        if len(pool) < per_class:
            # top up with distinct full-resolution windows before repeating any
            kept = set(keep)
            extra = [s for k, s in sorted(hit[uav].items()) if k not in kept and s.label == MALICIOUS]
            if extra:
                extra = [extra[i] for i in sorted(rng.permutation(len(extra))[:per_class - len(pool)])]
                level = "full-resolution" if not pool else "decimated+full-resolution"
                pool = pool + extra
        if not pool:
            pool = network_pool
            level = "network"
        if not pool:
            raise ValueError(f"no malicious windows at all in topology {topo}")
        if len(pool) < per_class:
            level += "+resampled"
        mal = _draw(pool, per_class, rng)
        if level.startswith("network"):
            mal = [dataclasses.replace(s, node_id=uav) for s in mal]
        out[uav] = UavDataset(topo, uav, benign, mal, level)
        if log is not None and level != "decimated":
            log.append((topo, uav, level, len(pool)))
    return out


def kshot_sample(uav_dataset, n_ways=2, k_shots=10, seed=0):
    """N-way K-shot support: ``k_shots`` per class without replacement.

    Each class is ordered by one seeded permutation and the first
    ``k_shots`` are kept, so smaller supports are nested in larger ones.
    """
    classes = uav_dataset.classes()
    if n_ways != len(classes):
        raise ValueError(f"dataset has {len(classes)} classes, asked for {n_ways}-way")
    picked = {}
    for label, pool in classes.items():
        if k_shots > len(pool):
            raise ValueError(f"class {label} of UAV {uav_dataset.uav_id} has {len(pool)} < {k_shots} samples")
        rng = substream(seed, "kshot", uav_dataset.topology_id, uav_dataset.uav_id, label)
        order = rng.permutation(len(pool))[:k_shots]
        picked[label] = [pool[i] for i in order]
    return UavDataset(uav_dataset.topology_id, uav_dataset.uav_id, picked[BENIGN], picked[MALICIOUS],
                      uav_dataset.fallback)


def sample_key(s):
    """Identity of the underlying window; resampled copies share it."""
    return (s.window_start_s, np.asarray(s.features, dtype=float).tobytes())


def split_train_test(uav_dataset, train_frac=0.8, seed=0):
    """Stratified split: ``floor(train_frac * m)`` per class to train.

    Copies of one window (left by resampling) are kept adjacent in the
    shuffled order, so at most one window per class straddles the split.
    """
    train, test = [], []
    for label, pool in uav_dataset.classes().items():
        m = len(pool)
        if m < 2:
            raise ValueError(f"class {label} of UAV {uav_dataset.uav_id} has {m} < 2 samples")
        n_train = int(math.floor(train_frac * m + 1e-9))
        rng = substream(seed, "split", uav_dataset.topology_id, uav_dataset.uav_id, label)
        groups = defaultdict(list)
        for i, s in enumerate(pool):
            groups[sample_key(s)].append(i)
        keys = list(groups)
        order = [i for g in rng.permutation(len(keys)) for i in groups[keys[g]]]
        train += [pool[i] for i in order[:n_train]]
        test += [pool[i] for i in order[n_train:]]
    return train, test


# -- CSV ----------------------------------------------------------------------

def _fmt(x):
    return repr(float(x))


def row_order(s):
    return (s.topology_id, s.node_id, s.window_start_s, s.label)


def export_dataset(samples, path, with_provenance=False):
    """Write samples as CSV (one row per sample, fixed column order)."""
    cols = CSV_COLUMNS + (TRACE_EXTRA if with_provenance else ())
    rows = sorted(samples, key=row_order)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(cols)
        for s in rows:
            row = [s.topology_id, s.attack_kind, _fmt(s.attacker_ratio), s.node_id, _fmt(s.window_start_s)]
            row += [_fmt(v) for v in s.features]
            row.append(int(s.label))
            if with_provenance:
                row += [int(s.attacker_node), int(s.attacker_contact)]
            w.writerow(row)
    return path


def import_dataset(path):
    out = []
    with open(path, newline="") as fh:
        r = csv.reader(fh)
        header = tuple(next(r))
        if header[:len(CSV_COLUMNS)] != CSV_COLUMNS:
            raise ValueError(f"{path}: unexpected header")
        extra = header[len(CSV_COLUMNS):]
        for row in r:
            feats = np.array([float(v) for v in row[5:5 + N_FEATURES]])
            s = Sample(int(row[0]), row[1], float(row[2]), int(row[3]), float(row[4]), feats,
                       int(row[5 + N_FEATURES]))
            if extra:
                s.attacker_node = bool(int(row[len(CSV_COLUMNS)]))
                s.attacker_contact = bool(int(row[len(CSV_COLUMNS) + 1]))
            out.append(s)
    return out


def group_uav_datasets(samples):
    """Rebuild ``{topology_id: {uav_id: UavDataset}}`` from flat rows."""
    groups = defaultdict(lambda: {BENIGN: [], MALICIOUS: []})
    for s in samples:
        groups[(s.topology_id, s.node_id)][s.label].append(s)
    out = defaultdict(dict)
    for (topo, uav), cls in sorted(groups.items()):
        out[topo][uav] = UavDataset(topo, uav, cls[BENIGN], cls[MALICIOUS])
    return dict(out)
