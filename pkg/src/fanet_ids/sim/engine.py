"""Deterministic discrete-event loop: mobility, unit-disk radio, traffic, attacks.

Events pop in ``(time, insertion sequence)`` order. Mobility ticks are
self-rescheduling; a tick that lands on a window boundary enqueues the
``WindowClose`` for that instant, so the close sees the positions of the
same instant.
"""
from collections import Counter
from dataclasses import dataclass, field
import hashlib
import heapq
import enum

import numpy as np

from ..aodv import AodvAgent
from ..attacks import ATTACK_AGENTS, FloodingAgent, assign_attackers
from ..features import Sample, WindowAccumulator, finalize_window, label_sample
from ..rng import substream
from .config import AttackKind
from .mobility import gm_update, initial_motion, neighbor_matrix


class EventKind(str, enum.Enum):
    MOBILITY_TICK = "MobilityTick"
    PACKET_ARRIVAL = "PacketArrival"
    TRAFFIC_TICK = "TrafficTick"
    ATTACK_TICK = "AttackTick"
    WINDOW_CLOSE = "WindowClose"


@dataclass(order=True)
class Event:
    time_s: float
    seq: int
    kind: EventKind = field(compare=False)
    payload: tuple = field(compare=False, default=())


class SimulationError(RuntimeError):
    pass


@dataclass
class SimTrace:
    config: object
    digest: str
    kind_counts: Counter
    samples: list
    attackers: tuple
    traffic_pairs: tuple
    totals: dict
    forged_rreps: list
    flood_rreqs: dict
    data_sent: dict
    data_delivered: dict
    lost_in_flight: int
    events: list = None

    @property
    def digest64(self):
        return int(self.digest, 16)


def draw_traffic_pairs(rng, uav_ids, n):
    """``n`` distinct ordered (source, destination) UAV pairs."""
    pairs = [(s, d) for s in uav_ids for d in uav_ids if s != d]
    idx = rng.choice(len(pairs), size=n, replace=False) if n else []
    return tuple(pairs[i] for i in idx)


def transmission_delay(size_bytes, bandwidth_bps):
    return size_bytes * 8.0 / bandwidth_bps


class Simulator:
    """One network run. Node 0 is the immobile ground station."""

    def __init__(self, config, protocol_hooks=None, attack_hooks=None, feature_sink=None,
                 record_events=False, topology_id=0):
        self.config = config
        self.topology_id = topology_id
        self.now = 0.0
        self._queue = []
        self._seq = 0
        self._uid = 0
        self._hash = hashlib.blake2b(digest_size=8)
        self.kind_counts = Counter()
        self.events = [] if record_events else None
        self.lost_in_flight = 0

        cfg = config
        n = cfg.node_count
        self.uav_ids = list(range(1, n))
        lo, hi = cfg.bounds
        self.lo = np.array(lo, dtype=float)
        self.hi = np.array(hi, dtype=float)

        mob = substream(cfg.seed, "mobility")
        pos, vel, mean_vel = initial_motion(mob, n, cfg.avg_speed_mps, self.lo, self.hi)
        self.alpha = mob.uniform(cfg.alpha_range[0], cfg.alpha_range[1], size=n)
        pos[0] = (self.lo + self.hi) / 2.0
        vel[0] = 0.0
        mean_vel[0] = 0.0
        self.pos, self.vel, self.mean_vel = pos, vel, mean_vel
        self.noise_std = np.full(n, cfg.noise_scale * cfg.avg_speed_mps)
        self._mob_rng = mob

        traffic_rng = substream(cfg.seed, "traffic")
        self.traffic_pairs = draw_traffic_pairs(traffic_rng, self.uav_ids, cfg.traffic_connections)
        self._traffic_phase = traffic_rng.random(len(self.traffic_pairs)) / cfg.packet_rate_hz

        if cfg.attack_kind is AttackKind.NONE:
            self.attackers = frozenset()
        else:
            self.attackers = assign_attackers(cfg.seed, cfg.attacker_ratio, self.traffic_pairs,
                                              self.uav_ids, cfg.attack_kind).attacker_ids

        honest = protocol_hooks or AodvAgent
        attack_hooks = ATTACK_AGENTS if attack_hooks is None else attack_hooks
        self.accs = [WindowAccumulator(i, cfg.window_s) for i in range(n)]
        self.agents = []
        for i in range(n):
            cls = attack_hooks[cfg.attack_kind] if i in self.attackers else honest
            self.agents.append(cls(i, self, self.accs[i]))

        self.adj = neighbor_matrix(self.pos, cfg.tx_range_m)
        self._window_positions = [self.pos.copy()]
        self.samples = []
        self._sink = feature_sink if feature_sink is not None else self.samples.append
        self.totals = {i: Counter() for i in self.uav_ids}
        self.data_sent = Counter()
        self.data_delivered = Counter()
        self._data_delay = transmission_delay(cfg.packet_size_bytes, cfg.bandwidth_bps)
        self._ctrl_delay = transmission_delay(cfg.control_packet_bytes, cfg.bandwidth_bps)

    # -- network interface used by the agents --------------------------------
    def new_uid(self):
        self._uid += 1
        return self._uid

    def _delay(self, packet):
        return self._data_delay if type(packet).__name__ == "Data" else self._ctrl_delay

    def neighbors(self, node_id):
        return np.flatnonzero(self.adj[node_id]).tolist()

    def broadcast(self, sender, packet):
        t = self.now + self._delay(packet)
        for nb in self.neighbors(sender):
            self.schedule(t, EventKind.PACKET_ARRIVAL, (nb, sender, packet))

    def unicast(self, sender, next_hop, packet):
        if not self.adj[sender, next_hop]:
            self.lost_in_flight += 1
            return False
        self.schedule(self.now + self._delay(packet), EventKind.PACKET_ARRIVAL, (next_hop, sender, packet))
        return True

    def delivered(self, node_id, packet):
        self.data_delivered[packet.conn] += 1

    # -- event loop -------------------------------------------------------------
    def schedule(self, time_s, kind, payload=()):
        self._seq += 1
        heapq.heappush(self._queue, Event(time_s, self._seq, kind, payload))

    def _log(self, ev, detail):
        line = f"{ev.time_s!r}|{ev.kind.value}|{detail}\n"
        self._hash.update(line.encode())
        if self.events is not None:
            self.events.append((ev.time_s, ev.kind.value, detail))

    def run(self):
        cfg = self.config
        dt = cfg.mobility_dt_s
        self.schedule(dt, EventKind.MOBILITY_TICK, (1,))
        for c, phase in enumerate(self._traffic_phase):
            if phase < cfg.duration_s:
                self.schedule(float(phase), EventKind.TRAFFIC_TICK, (c, 0))
        if cfg.attack_kind is AttackKind.FLOODING and self.attackers:
            phase_rng = substream(cfg.seed, "flood-phase", round(cfg.attacker_ratio, 6))
            for a in sorted(self.attackers):
                phase = float(phase_rng.random() * cfg.flood_period_s)
                self.schedule(phase, EventKind.ATTACK_TICK, (a, 0))
            self._flood_rngs = {a: substream(cfg.seed, "flooding", a) for a in sorted(self.attackers)}

        end = cfg.duration_s
        closed = 0
        while self._queue:
            ev = heapq.heappop(self._queue)
            if ev.time_s > end + 1e-9:
                break
            self.now = ev.time_s
            self.kind_counts[ev.kind.value] += 1
            handler = getattr(self, "_on_" + ev.kind.name.lower())
            handler(ev)
            if ev.kind is EventKind.WINDOW_CLOSE:
                closed += 1
        if closed != cfg.n_windows:
            raise SimulationError(f"event queue drained after {closed} of {cfg.n_windows} windows")
        return self._trace()

    def _on_mobility_tick(self, ev):
        cfg = self.config
        step = ev.payload[0]
        self._log(ev, str(step))
        xi = self._mob_rng.standard_normal((len(self.uav_ids), 3))
        u = slice(1, None)
        self.pos[u], self.vel[u], self.mean_vel[u] = gm_update(
            self.pos[u], self.vel[u], self.mean_vel[u], self.alpha[u], self.noise_std[u],
            cfg.mobility_dt_s, self.lo, self.hi, xi)
        self._window_positions.append(self.pos.copy())
        old = self.adj
        self.adj = neighbor_matrix(self.pos, cfg.tx_range_m)
        changed = np.flatnonzero((old != self.adj).any(axis=1))
        for i in changed.tolist():
            added = np.flatnonzero(self.adj[i] & ~old[i]).tolist()
            removed = np.flatnonzero(old[i] & ~self.adj[i]).tolist()
            self.agents[i].on_neighbors_changed(added, removed)
        for agent in self.agents:
            agent.expire_routes()
        steps_per_window = int(round(cfg.window_s / cfg.mobility_dt_s))
        if step % steps_per_window == 0:
            self.schedule(self.now, EventKind.WINDOW_CLOSE, (step // steps_per_window,))
        nxt = (step + 1) * cfg.mobility_dt_s
        if nxt <= cfg.duration_s + 1e-9:
            self.schedule(nxt, EventKind.MOBILITY_TICK, (step + 1,))

    def _on_traffic_tick(self, ev):
        c, k = ev.payload
        src, dst = self.traffic_pairs[c]
        self._log(ev, f"{c}:{k}")
        self.data_sent[c] += 1
        self.agents[src].send_data(dst, conn=c, seq_no=k)
        nxt = self._traffic_phase[c] + (k + 1) / self.config.packet_rate_hz
        if nxt < self.config.duration_s:
            self.schedule(float(nxt), EventKind.TRAFFIC_TICK, (c, k + 1))

    def _on_attack_tick(self, ev):
        a, k = ev.payload
        self._log(ev, f"{a}:{k}")
        agent = self.agents[a]
        if isinstance(agent, FloodingAgent):
            agent.flooding_tick(self.now, self._flood_rngs[a], self.uav_ids)
        nxt = ev.time_s + self.config.flood_period_s
        if nxt < self.config.duration_s:
            self.schedule(nxt, EventKind.ATTACK_TICK, (a, k + 1))

    def _on_packet_arrival(self, ev):
        receiver, sender, packet = ev.payload
        self._log(ev, f"{sender}>{receiver}:{type(packet).__name__}:{packet.uid}")
        if not self.adj[sender, receiver]:
            self.lost_in_flight += 1
            return
        self.agents[receiver].receive(packet, sender)

    def _on_window_close(self, ev):
        cfg = self.config
        self._log(ev, str(ev.payload[0]))
        history = np.stack(self._window_positions)
        for i in self.uav_ids:
            acc = self.accs[i]
            start = acc.start
            creators = frozenset(acc.creators)
            counts = acc.counts
            for k, v in counts.items():
                if v:
                    self.totals[i][k] += v
            feats = finalize_window(acc, history[:, i, :], int(self.adj[i].sum()), self.agents[i].active_hops())
            label = label_sample(i, self.attackers, creators, cfg.label_mode)
            self._sink(Sample(self.topology_id, cfg.attack_kind.value, cfg.attacker_ratio, i, start, feats, label,
                              attacker_node=i in self.attackers,
                              attacker_contact=not self.attackers.isdisjoint(creators)))
        # the ground station keeps an accumulator too; roll it without emitting
        finalize_window(self.accs[0], history[:, 0, :], int(self.adj[0].sum()), self.agents[0].active_hops())
        self._window_positions = [self.pos.copy()]

    def _trace(self):
        forged = []
        flood = {}
        for a in sorted(self.attackers):
            agent = self.agents[a]
            forged.extend(getattr(agent, "forged", []))
            if isinstance(agent, FloodingAgent):
                flood[a] = agent.flood_rreqs
        return SimTrace(self.config, self._hash.hexdigest(), self.kind_counts, self.samples,
                        tuple(sorted(self.attackers)), self.traffic_pairs, self.totals, forged, flood,
                        dict(self.data_sent), dict(self.data_delivered), self.lost_in_flight, self.events)


def run_simulation(config, protocol_hooks=None, attack_hooks=None, feature_sink=None, record_events=False,
                   topology_id=0):
    """Run one simulation to ``config.duration_s`` and return its trace."""
    sim = Simulator(config, protocol_hooks, attack_hooks, feature_sink, record_events, topology_id)
    return sim.run()
