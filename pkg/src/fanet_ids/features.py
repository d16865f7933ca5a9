"""Per-node windowed feature extraction and labelling.

Each UAV owns a :class:`WindowAccumulator`. The routing agent reports
events into it while the window is open; at window close the engine calls
:func:`finalize_window`, which turns counters, the routing-table snapshot
and the position history into a 31-element feature vector.
"""
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

AODV_CONTROL = (
    "rreq_sent", "rreq_recv", "rreq_fwd",
    "rrep_sent", "rrep_recv", "rrep_fwd",
    "rerr_sent", "rerr_recv", "rerr_fwd",
    "rreq_originated", "rrep_originated", "duplicate_rreq_dropped",
)
DATA_PLANE = (
    "data_originated", "data_recv_as_dest", "data_fwd",
    "data_dropped", "data_buffered", "delivery_ratio_window",
)
ROUTING_TABLE = (
    "routes_added", "routes_invalidated", "active_routes", "avg_hop_count",
    "max_dest_seq_seen", "avg_dest_seq_delta", "rerr_destinations_listed",
)
TOPOLOGY = (
    "neighbor_count", "neighbor_added", "neighbor_removed",
    "avg_speed_mps", "distance_traveled_m", "link_breaks_detected",
)
FEATURE_NAMES = AODV_CONTROL + DATA_PLANE + ROUTING_TABLE + TOPOLOGY
N_FEATURES = len(FEATURE_NAMES)
FEATURE_INDEX = {name: i for i, name in enumerate(FEATURE_NAMES)}
assert N_FEATURES == 31

# counters incremented directly by events; the rest are derived at close
COUNTERS = frozenset(FEATURE_NAMES) - {
    "delivery_ratio_window", "active_routes", "avg_hop_count", "max_dest_seq_seen",
    "avg_dest_seq_delta", "neighbor_count", "avg_speed_mps", "distance_traveled_m",
}

BENIGN, MALICIOUS = 0, 1


class FeatureEvent(NamedTuple):
    time_s: float
    kind: str
    value: float = 1.0
    creator: object = None


class WindowError(RuntimeError):
    """An event was reported outside the accumulator's open window."""


class WindowAccumulator:
    """Counters for one node over one collection window."""

    __slots__ = ("node_id", "window_s", "start", "counts", "creators", "seq_max",
                 "seq_delta_sum", "seq_delta_n", "handled", "passed")

    def __init__(self, node_id, window_s=5.0, start=0.0):
        self.node_id = node_id
        self.window_s = window_s
        self.start = start
        self._reset()

    def _reset(self):
        self.counts = dict.fromkeys(COUNTERS, 0.0)
        self.creators = set()
        self.seq_max = 0
        self.seq_delta_sum = 0.0
        self.seq_delta_n = 0
        self.handled = 0
        self.passed = 0

    @property
    def end(self):
        return self.start + self.window_s

    def add(self, kind, value=1.0):
        self.counts[kind] += value

    def record(self, now, kind, value=1.0, creator=None):
        accumulate_event(self, FeatureEvent(now, kind, value, creator))


def accumulate_event(acc, event):
    """Fold one event into ``acc``.

    Besides the plain counters, a few pseudo-kinds feed derived features:
    ``packet_in`` (marks the creator of a processed packet), ``seq_seen``,
    ``seq_delta``, ``handled`` and ``passed`` (delivery ratio).
    """
    t = event.time_s
    if t < acc.start - 1e-9 or t > acc.end + 1e-9:
        raise WindowError(f"event at t={t} outside window [{acc.start}, {acc.end}] of node {acc.node_id}")
    kind = event.kind
    if kind in acc.counts:
        acc.counts[kind] += event.value
    elif kind == "packet_in":
        pass
    elif kind == "seq_seen":
        if event.value > acc.seq_max:
            acc.seq_max = event.value
    elif kind == "seq_delta":
        acc.seq_delta_sum += event.value
        acc.seq_delta_n += 1
    elif kind == "handled":
        acc.handled += int(event.value)
    elif kind == "passed":
        acc.passed += int(event.value)
    else:
        raise KeyError(f"unknown feature event kind {kind!r}")
    if event.creator is not None:
        acc.creators.add(event.creator)
    return acc


def finalize_window(acc, positions, neighbor_count, route_hops):
    """Close the window and return its feature vector.

    ``positions`` is the position history inside the window, starting with
    the position at window open. ``route_hops`` lists hop counts of the
    node's valid routes at close. Ratios use the 0/0 -> 0 convention. The
    accumulator is reset and moved to the next window.
    """
    f = np.zeros(N_FEATURES)
    for name, v in acc.counts.items():
        f[FEATURE_INDEX[name]] = v
    f[FEATURE_INDEX["delivery_ratio_window"]] = min(1.0, acc.passed / acc.handled) if acc.handled else 0.0
    f[FEATURE_INDEX["active_routes"]] = len(route_hops)
    f[FEATURE_INDEX["avg_hop_count"]] = float(np.mean(route_hops)) if len(route_hops) else 0.0
    f[FEATURE_INDEX["max_dest_seq_seen"]] = acc.seq_max
    f[FEATURE_INDEX["avg_dest_seq_delta"]] = acc.seq_delta_sum / acc.seq_delta_n if acc.seq_delta_n else 0.0
    f[FEATURE_INDEX["neighbor_count"]] = neighbor_count
    pos = np.asarray(positions, dtype=float)
    if len(pos) > 1:
        dist = float(np.sqrt(((pos[1:] - pos[:-1]) ** 2).sum(axis=1)).sum())
    else:
        dist = 0.0
    f[FEATURE_INDEX["distance_traveled_m"]] = dist
    f[FEATURE_INDEX["avg_speed_mps"]] = dist / acc.window_s
    acc.start = acc.end
    acc._reset()
    return f


def label_sample(node_id, attacker_ids, creators, mode="contact"):
    """Malicious iff the node is an attacker, or (``contact`` mode) it
    processed at least one packet created by an attacker in the window."""
    if node_id in attacker_ids:
        return MALICIOUS
    if mode == "contact" and not attacker_ids.isdisjoint(creators):
        return MALICIOUS
    return BENIGN


@dataclass
class Sample:
    topology_id: int
    attack_kind: str
    attacker_ratio: float
    node_id: int
    window_start_s: float
    features: np.ndarray
    label: int
    attacker_node: bool = False
    attacker_contact: bool = False

    def relabel(self, mode="contact"):
        if self.attacker_node:
            return MALICIOUS
        if mode == "contact" and self.attacker_contact:
            return MALICIOUS
        return BENIGN
