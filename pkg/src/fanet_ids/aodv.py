"""Simplified AODV: reactive discovery (RREQ/RREP) and maintenance (RERR).

One :class:`AodvAgent` runs per node. It talks to the network through a
small interface offered by the simulation engine:

``net.now``, ``net.broadcast(sender, packet)``, ``net.unicast(sender,
next_hop, packet)``, ``net.delivered(node, packet)``, ``net.new_uid()`` and
``net.config``.

Every packet carries a ``creator``: the node that generated that copy of
the information (the originator for RREQ and data, the replier for RREP,
the emitter for RERR). Labelling keys off it.
"""
from collections import deque
from dataclasses import dataclass, replace


@dataclass(slots=True)
class RouteEntry:
    destination: int
    next_hop: int
    hop_count: int
    dest_seq: int
    valid: bool
    lifetime_expiry_s: float


@dataclass(frozen=True, slots=True)
class Rreq:
    origin: int
    origin_seq: int
    rreq_id: int
    destination: int
    dest_seq_known: int
    hop_count: int
    creator: int
    uid: int = 0


@dataclass(frozen=True, slots=True)
class Rrep:
    destination: int
    dest_seq: int
    hop_count: int
    origin: int
    creator: int
    uid: int = 0
    forged: bool = False


@dataclass(frozen=True, slots=True)
class Rerr:
    unreachable: tuple  # ((destination, dest_seq), ...)
    creator: int
    uid: int = 0


@dataclass(frozen=True, slots=True)
class Data:
    src: int
    dst: int
    seq_no: int
    creator: int
    uid: int = 0
    conn: int = -1
    ttl: int = 64


class AodvAgent:
    """Honest AODV behaviour for one node."""

    buffers_on_miss = False  # intermediates drop data they cannot route

    def __init__(self, node_id, net, acc=None):
        self.id = node_id
        self.net = net
        self.acc = acc
        cfg = net.config
        self.lifetime = cfg.route_lifetime_s
        self.discovery_timeout = cfg.discovery_timeout_s
        self.buffer_size = cfg.buffer_size
        self.seq = 0
        self.rreq_id = 0
        self.routes = {}
        self.seen = set()
        self.pending = {}
        self.buffer = deque()
        self.stats = {"rrep_no_reverse": 0}

    # -- bookkeeping --------------------------------------------------
    def _count(self, kind, value=1.0, creator=None):
        if self.acc is not None:
            self.acc.record(self.net.now, kind, value, creator)

    def lookup(self, dest):
        e = self.routes.get(dest)
        if e is not None and e.valid and e.lifetime_expiry_s > self.net.now:
            return e
        return None

    def active_hops(self):
        now = self.net.now
        return [e.hop_count for e in self.routes.values() if e.valid and e.lifetime_expiry_s > now]

    def expire_routes(self):
        now = self.net.now
        for e in self.routes.values():
            if e.valid and e.lifetime_expiry_s <= now:
                e.valid = False
                self._count("routes_invalidated")

    def install(self, dest, next_hop, hops, seq):
        """Install/refresh a route; fresher sequence wins, then fewer hops."""
        if dest == self.id:
            return False
        now = self.net.now
        e = self.routes.get(dest)
        live = e is not None and e.valid and e.lifetime_expiry_s > now
        if e is None or seq > e.dest_seq or (seq == e.dest_seq and (not live or hops < e.hop_count)):
            self._count("seq_delta", seq - (e.dest_seq if e is not None else 0))
            self.routes[dest] = RouteEntry(dest, next_hop, hops, seq, True, now + self.lifetime)
            self._count("routes_added")
            self.pending.pop(dest, None)
            self._flush(dest)
            return True
        if live and e.next_hop == next_hop:
            e.lifetime_expiry_s = now + self.lifetime
        return False

    def _invalidate(self, e, bump_seq):
        e.valid = False
        if bump_seq:
            e.dest_seq += 1
        self._count("routes_invalidated")

    # -- route discovery ------------------------------------------------
    def originate_route_discovery(self, destination):
        """Broadcast a RREQ unless a route exists or a discovery is pending."""
        now = self.net.now
        if self.lookup(destination) is not None:
            return None
        if self.pending.get(destination, -1.0) > now:
            return None
        self.pending[destination] = now + self.discovery_timeout
        return self._emit_rreq(destination)

    def _emit_rreq(self, destination):
        self.seq += 1
        self.rreq_id += 1
        known = self.routes[destination].dest_seq if destination in self.routes else 0
        rreq = Rreq(self.id, self.seq, self.rreq_id, destination, known, 0, self.id, self.net.new_uid())
        self.seen.add((self.id, self.rreq_id))
        self._count("rreq_originated")
        self._count("rreq_sent")
        self.net.broadcast(self.id, rreq)
        return rreq

    def receive(self, packet, frm):
        if isinstance(packet, Data):
            return self.forward_data(packet, frm)
        if isinstance(packet, Rreq):
            return self.handle_rreq(packet, frm)
        if isinstance(packet, Rrep):
            return self.handle_rrep(packet, frm)
        if isinstance(packet, Rerr):
            return self.handle_rerr(packet, frm)
        raise TypeError(f"unknown packet {packet!r}")

    def handle_rreq(self, rreq, frm):
        self._count("rreq_recv", creator=rreq.creator)
        self._count("seq_seen", rreq.dest_seq_known)
        key = (rreq.origin, rreq.rreq_id)
        if key in self.seen:
            self._count("duplicate_rreq_dropped")
            return "drop"
        self.seen.add(key)
        self.install(rreq.origin, frm, rreq.hop_count + 1, rreq.origin_seq)
        return self.reply_or_forward(rreq, frm)

    def reply_or_forward(self, rreq, frm):
        if rreq.destination == self.id:
            self.seq = max(self.seq, rreq.dest_seq_known)
            self._send_rrep(Rrep(self.id, self.seq, 0, rreq.origin, self.id, self.net.new_uid()), frm)
            self._count("rrep_originated")
            return "reply"
        e = self.lookup(rreq.destination)
        if e is not None and e.dest_seq >= rreq.dest_seq_known:
            self._send_rrep(Rrep(rreq.destination, e.dest_seq, e.hop_count, rreq.origin, self.id,
                                 self.net.new_uid()), frm)
            self._count("rrep_originated")
            return "reply"
        self._count("rreq_fwd")
        self._count("rreq_sent")
        self.net.broadcast(self.id, replace(rreq, hop_count=rreq.hop_count + 1, uid=self.net.new_uid()))
        return "rebroadcast"

    def _send_rrep(self, rrep, next_hop):
        self._count("rrep_sent")
        self.net.unicast(self.id, next_hop, rrep)

    def handle_rrep(self, rrep, frm):
        self._count("rrep_recv", creator=rrep.creator)
        self._count("seq_seen", rrep.dest_seq)
        self.install(rrep.destination, frm, rrep.hop_count + 1, rrep.dest_seq)
        if rrep.origin == self.id:
            return "consume"
        back = self.lookup(rrep.origin)
        if back is None or rrep.hop_count >= self.net.config.node_count:
            self.stats["rrep_no_reverse"] += 1
            return "drop"
        back.lifetime_expiry_s = self.net.now + self.lifetime
        self._count("rrep_fwd")
        self._send_rrep(replace(rrep, hop_count=rrep.hop_count + 1, uid=self.net.new_uid()), back.next_hop)
        return "forward"

    # -- maintenance ------------------------------------------------------
    def handle_link_break(self, broken_neighbor):
        """Invalidate routes through a lost neighbour; one RERR lists them all."""
        lost = []
        for e in self.routes.values():
            if e.valid and e.next_hop == broken_neighbor and e.lifetime_expiry_s > self.net.now:
                self._invalidate(e, bump_seq=True)
                lost.append((e.destination, e.dest_seq))
        if not lost:
            return None
        self._count("link_breaks_detected")
        return self._emit_rerr(lost)

    def _emit_rerr(self, lost):
        rerr = Rerr(tuple(lost), self.id, self.net.new_uid())
        self._count("rerr_sent")
        self._count("rerr_destinations_listed", len(lost))
        self.net.broadcast(self.id, rerr)
        return rerr

    def handle_rerr(self, rerr, frm):
        self._count("rerr_recv", creator=rerr.creator)
        self._count("rerr_destinations_listed", len(rerr.unreachable))
        lost = []
        for dest, seq in rerr.unreachable:
            e = self.routes.get(dest)
            if e is not None and e.valid and e.next_hop == frm:
                e.valid = False
                e.dest_seq = max(e.dest_seq, seq)
                self._count("routes_invalidated")
                lost.append((dest, e.dest_seq))
        if lost:
            self._count("rerr_fwd")
            self._emit_rerr(lost)
            return "forward"
        return "drop"

    def on_neighbors_changed(self, added, removed):
        if added:
            self._count("neighbor_added", len(added))
        if removed:
            self._count("neighbor_removed", len(removed))
        for nb in sorted(removed):
            self.handle_link_break(nb)

    # -- data plane ---------------------------------------------------------
    def send_data(self, dst, conn=-1, seq_no=0):
        pkt = Data(self.id, dst, seq_no, self.id, self.net.new_uid(), conn)
        self._count("data_originated")
        self._count("handled")
        return self._route_data(pkt, None)

    def forward_data(self, pkt, frm):
        self._count("handled", creator=pkt.creator)
        return self._route_data(pkt, frm)

    def _route_data(self, pkt, frm):
        if pkt.dst == self.id:
            self._count("data_recv_as_dest")
            self._count("passed")
            self.net.delivered(self.id, pkt)
            return "deliver"
        if frm is not None and pkt.ttl <= 1:
            # forged routes can form loops; TTL bounds them
            self._count("data_dropped")
            return "drop"
        e = self.lookup(pkt.dst)
        if e is not None:
            e.lifetime_expiry_s = self.net.now + self.lifetime
            if frm is not None:
                self._count("data_fwd")
                pkt = replace(pkt, ttl=pkt.ttl - 1)
            self._count("passed")
            self.net.unicast(self.id, e.next_hop, pkt)
            return "forward"
        if frm is None or self.buffers_on_miss:
            self._buffer(pkt)
            self.originate_route_discovery(pkt.dst)
            return "buffer"
        self._count("data_dropped")
        known = self.routes[pkt.dst].dest_seq if pkt.dst in self.routes else 0
        self._emit_rerr([(pkt.dst, known)])
        return "drop"

    def _buffer(self, pkt):
        if len(self.buffer) >= self.buffer_size:
            self.buffer.popleft()
            self._count("data_dropped")
        self.buffer.append(pkt)
        self._count("data_buffered")

    def _flush(self, dest):
        if not self.buffer:
            return
        e = self.routes[dest]
        keep = deque()
        for pkt in self.buffer:
            if pkt.dst == dest:
                if pkt.src != self.id:
                    self._count("data_fwd")
                self._count("passed")
                self.net.unicast(self.id, e.next_hop, pkt)
            else:
                keep.append(pkt)
        self.buffer = keep
