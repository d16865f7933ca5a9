"""Attacker selection and the three malicious AODV behaviours."""
from dataclasses import dataclass

from .aodv import AodvAgent, Rrep, Rreq
from .rng import substream
from .sim.config import AttackKind, attacker_count


@dataclass(frozen=True)
class AttackerAssignment:
    attack_kind: AttackKind
    attacker_ids: frozenset
    ratio: float


def assign_attackers(topology_seed, ratio, traffic_pairs, uav_ids, attack_kind=AttackKind.NONE):
    """Pick ``round(ratio * |UAVs|)`` attackers among non-endpoint UAVs.

    The draw is keyed only by ``(topology_seed, ratio)`` so every attack
    kind sees the same attackers for a given topology and ratio.
    """
    uav_ids = sorted(uav_ids)
    endpoints = {n for pair in traffic_pairs for n in pair}
    eligible = [u for u in uav_ids if u not in endpoints]
    k = attacker_count(ratio, len(uav_ids))
    if k > len(eligible):
        raise ValueError(f"need {k} attackers but only {len(eligible)} non-endpoint UAVs are eligible")
    rng = substream(topology_seed, "attackers", round(float(ratio), 6))
    chosen = rng.choice(len(eligible), size=k, replace=False) if k else []
    return AttackerAssignment(AttackKind.parse(attack_kind), frozenset(eligible[i] for i in chosen), ratio)


class SinkholeAgent(AodvAgent):
    """Answers every foreign RREQ with a forged one-hop, boosted-sequence RREP.

    The attacker still forwards the data it attracts (buffering and running
    its own discovery when it has no real route).
    """

    buffers_on_miss = True

    def __init__(self, node_id, net, acc=None):
        super().__init__(node_id, net, acc)
        self.seq_boost = net.config.seq_boost
        self.forged = []  # (dest_seq_known, forged dest_seq, hop_count)
        self._lies = set()  # (destination, forged dest_seq)

    def reply_or_forward(self, rreq, frm):
        if rreq.destination == self.id:
            return super().reply_or_forward(rreq, frm)
        return self.sinkhole_on_rreq(rreq, frm)

    def sinkhole_on_rreq(self, rreq, frm):
        if rreq.origin == self.id:
            return "drop"
        rrep = Rrep(rreq.destination, rreq.dest_seq_known + self.seq_boost, 1, rreq.origin, self.id,
                    self.net.new_uid(), forged=True)
        self.forged.append((rreq.dest_seq_known, rrep.dest_seq, rrep.hop_count))
        self._lies.add((rrep.destination, rrep.dest_seq))
        self._count("rrep_originated")
        self._send_rrep(rrep, frm)
        return "forge"


    def handle_rrep(self, rrep, frm):
        # neighbours that cached a forged reply echo it back when the attacker
        # runs its own discovery; the attacker knows better than to route on it
        if (rrep.destination, rrep.dest_seq) in self._lies:
            self._count("rrep_recv", creator=rrep.creator)
            return "drop"
        return super().handle_rrep(rrep, frm)


class BlackholeAgent(SinkholeAgent):
    """Sinkhole plus unconditional dropping of every data packet received."""

    def __init__(self, node_id, net, acc=None):
        super().__init__(node_id, net, acc)
        self.blackholed = 0

    def forward_data(self, pkt, frm):
        return self.blackhole_on_data(pkt, frm)

    def blackhole_on_data(self, pkt, frm):
        self._count("handled", creator=pkt.creator)
        self._count("data_dropped")
        self.blackholed += 1
        return "drop"


class FloodingAgent(AodvAgent):
    """Honest forwarding, plus bursts of RREQs to random destinations."""

    def __init__(self, node_id, net, acc=None):
        super().__init__(node_id, net, acc)
        self.flood_rreqs = 0
        self.burst = net.config.flood_burst
        self.flood_destinations = []

    def flooding_tick(self, now, rng, candidates):
        """Emit one burst of RREQs with consecutive ids to one random UAV."""
        others = [c for c in candidates if c != self.id]
        dest = others[int(rng.integers(len(others)))]
        self.flood_destinations.append(dest)
        out = []
        for _ in range(self.burst):
            out.append(self._emit_rreq(dest))
            self.flood_rreqs += 1
        return out


ATTACK_AGENTS = {
    AttackKind.SINKHOLE: SinkholeAgent,
    AttackKind.BLACKHOLE: BlackholeAgent,
    AttackKind.FLOODING: FloodingAgent,
}
