from collections import deque

import numpy as np
import pytest

from fanet_ids.aodv import AodvAgent
from fanet_ids.features import WindowAccumulator
from fanet_ids.sim import SimConfig, run_simulation


class LineNet:
    """Minimal network for protocol tests: fixed adjacency, FIFO delivery, frozen clock."""

    def __init__(self, adjacency, agent_classes=None, **cfg):
        self.adj = np.asarray(adjacency, dtype=bool)
        n = len(self.adj)
        self.config = SimConfig(uav_count=n - 1, **{"traffic_connections": 0, **cfg})
        self.now = 0.0
        self.queue = deque()
        self._uid = 0
        self.delivered_packets = []
        self.sent = []
        classes = agent_classes or {}
        self.accs = [WindowAccumulator(i, 1e9) for i in range(n)]
        self.agents = [classes.get(i, AodvAgent)(i, self, self.accs[i]) for i in range(n)]

    def new_uid(self):
        self._uid += 1
        return self._uid

    def neighbors(self, i):
        return np.flatnonzero(self.adj[i]).tolist()

    def broadcast(self, sender, packet):
        self.sent.append((sender, None, packet))
        for nb in self.neighbors(sender):
            self.queue.append((nb, sender, packet))

    def unicast(self, sender, nxt, packet):
        self.sent.append((sender, nxt, packet))
        if not self.adj[sender, nxt]:
            return False
        self.queue.append((nxt, sender, packet))
        return True

    def delivered(self, node, packet):
        self.delivered_packets.append((node, packet))

    def run(self, limit=100000):
        n = 0
        while self.queue and n < limit:
            to, frm, pkt = self.queue.popleft()
            self.agents[to].receive(pkt, frm)
            n += 1
        return n


def line_adjacency(n):
    adj = np.zeros((n, n), dtype=bool)
    for i in range(n - 1):
        adj[i, i + 1] = adj[i + 1, i] = True
    return adj


@pytest.fixture
def line_net():
    return lambda n, **kw: LineNet(line_adjacency(n), **kw)


SMALL = dict(uav_count=8, duration_s=60.0, area_x=600.0, area_y=600.0, area_z=100.0, traffic_connections=2, seed=5)


@pytest.fixture(scope="session")
def small_trace():
    return run_simulation(SimConfig(**SMALL))


@pytest.fixture(scope="session")
def desk_runs():
    """20 UAVs, 600 s, one topology at 25%: the attack-invariant fixture."""
    from fanet_ids.pipeline import PRESETS
    base = SimConfig(**PRESETS["desk"], seed=11)
    out = {"none": run_simulation(base)}
    for kind in ("sinkhole", "blackhole", "flooding"):
        out[kind] = run_simulation(base.replace(attack_kind=kind, attacker_ratio=0.25))
    return out


def synthetic_datasets(n_uavs=3, per_class=10, seed=0, topo=0, shift=1.5):
    """``{uav: UavDataset}`` with separable classes; no simulation needed."""
    from fanet_ids.dataset import UavDataset
    from fanet_ids.features import Sample
    rng = np.random.default_rng(seed)
    out = {}
    for u in range(1, n_uavs + 1):
        ben = [Sample(topo, "none", 0.0, u, 5.0 * k, rng.gamma(2.0, 1.0, 31), 0) for k in range(per_class)]
        mal = [Sample(topo, "sinkhole", 0.25, u, 5.0 * k, rng.gamma(2.0, 1.0, 31) + shift * (np.arange(31) % 3 == 0), 1)
               for k in range(per_class)]
        out[u] = UavDataset(topo, u, ben, mal)
    return out
