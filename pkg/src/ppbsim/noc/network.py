"""Mesh of routers plus one network interface (NI) per tile."""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, TextIO

from ..protocol.types import MessageKind as K
from .arbiter import ArbiterState, Candidate, arbitrate
from .router import NUM_PORTS, Flit, Packet, Port, Router

REQUEST_VNET, FORWARD_VNET, RESPONSE_VNET = 0, 1, 2

_VNET = {
    K.GetS: REQUEST_VNET, K.GetM: REQUEST_VNET, K.PutM: REQUEST_VNET,
    K.MemRead: REQUEST_VNET, K.MemWriteBack: REQUEST_VNET,
    K.FwdGetS: FORWARD_VNET, K.FwdGetM: FORWARD_VNET, K.Inv: FORWARD_VNET,
}


def vnet_of(kind) -> int:
    return _VNET.get(kind, RESPONSE_VNET)


def split_vcs(vcs: int) -> List[List[int]]:
    """One VC each for requests and forwards, the rest for responses."""
    if vcs < 3:
        raise ValueError("need at least 3 virtual channels (one per virtual network)")
    return [[0], [1], list(range(2, vcs))]


def packet_flits(has_data: bool, flit_bits: int, block_size: int) -> int:
    if not has_data:
        return 1
    return 1 + -(-block_size * 8 // flit_bits)


@dataclass
class NocStats:
    flits_injected: int = 0
    flits_ejected: int = 0
    packets_injected: int = 0
    packets_ejected: int = 0
    buf_writes: int = 0
    buf_reads: int = 0
    xbar: int = 0
    arb_grants: int = 0
    link_traversals: int = 0
    link_flits: Dict[tuple, int] = field(default_factory=dict)
    flit_latency_sum: int = 0  # per flit, NI injection -> ejection
    head_latency_sum: int = 0  # per packet, injection -> head written at destination router


class NetworkInterface:
    def __init__(self, tile: int, vcs: int, depth: int, vnet_vcs, ppb: bool, threshold):
        self.tile = tile
        self.queue: List[Packet] = []
        self.credits = [depth] * vcs
        self.free = [True] * vcs
        self.vnet_vcs = vnet_vcs
        self.ppb = ppb
        self.arb = ArbiterState(1 << 30, threshold=threshold if ppb else None)
        self.active: Dict[int, int] = {}  # packet id -> local VC
        self.sent: Dict[int, int] = {}  # packet id -> flits injected
        self.max_wait_age = 0

    def inject(self, t: int, net: "Network") -> None:
        """Put at most one flit into the router's local input port.

        Candidates are the packets already streaming into a local VC plus the
        oldest waiting packet of each virtual network, so at most
        ``vcs + 3`` packets contend.
        """
        if not self.queue:
            return
        cands = []
        heads = set()
        for pkt in self.queue:
            vc = self.active.get(pkt.id)
            if vc is not None:
                if self.credits[vc] > 0:
                    cands.append(pkt)
            elif pkt.vnet not in heads:
                heads.add(pkt.vnet)
                if any(self.free[v] for v in self.vnet_vcs[pkt.vnet]):
                    cands.append(pkt)
        if not cands:
            return
        if self.ppb:
            # FIFO order doubles as the tiebreak
            self.arb.pointer = 0
            win_seq = arbitrate([Candidate(p.seq, p.tag, p.ni_age, p.addr) for p in cands], self.arb)
            win = next(p for p in cands if p.seq == win_seq)
        else:
            win = cands[0]
        for p in cands:
            if p is not win:
                p.ni_age += 1
                if p.ni_age > self.max_wait_age:
                    self.max_wait_age = p.ni_age
        win.ni_age = 0
        vc = self.active.get(win.id)
        if vc is None:
            vc = next(v for v in self.vnet_vcs[win.vnet] if self.free[v])
            self.free[vc] = False
            self.active[win.id] = vc
            self.sent[win.id] = 0
            win.inject_cycle = t
            win.msg.injected = t
            net.stats.packets_injected += 1
        idx = self.sent[win.id]
        self.sent[win.id] = idx + 1
        self.credits[vc] -= 1
        net.stats.flits_injected += 1
        flit = Flit(win, idx, inject=t)
        if idx == win.flits - 1:
            self.queue.remove(win)
            del self.active[win.id]
            del self.sent[win.id]
        net.log(t, self.tile, "inject", flit, vc)
        net.routers[self.tile].write(Port.L, vc, flit, t, net)
        net.active.add(self.tile)


class Network:
    def __init__(self, mesh_x: int, mesh_y: int, *, vcs: int = 5, depth: int = 4, link_latency: int = 2,
                 ppb: bool = False, threshold: Optional[int] = 64, flit_bits: int = 128,
                 block_size: int = 64, pipeline: int = 4, log: Optional[TextIO] = None):
        if mesh_x < 1 or mesh_y < 1:
            raise ValueError("mesh dimensions must be positive")
        if link_latency < 1:
            raise ValueError("link latency must be at least 1 cycle")
        self.mesh_x, self.mesh_y = mesh_x, mesh_y
        self.ntiles = mesh_x * mesh_y
        self.coords = [(i % mesh_x, i // mesh_x) for i in range(self.ntiles)]
        self.link_latency = link_latency
        self.flit_bits, self.block_size = flit_bits, block_size
        self.ppb = ppb
        self.vnet_vcs = split_vcs(vcs)
        self.routers = [Router(i, x, y, vcs, depth, self.vnet_vcs, ppb, threshold, pipeline)
                        for i, (x, y) in enumerate(self.coords)]
        for r in self.routers:
            x, y = r.coords
            for port, (nx, ny) in ((Port.N, (x, y - 1)), (Port.S, (x, y + 1)),
                                   (Port.E, (x + 1, y)), (Port.W, (x - 1, y))):
                if 0 <= nx < mesh_x and 0 <= ny < mesh_y:
                    r.neighbors[port] = self.routers[ny * mesh_x + nx]
        self.nis = [NetworkInterface(i, vcs, depth, self.vnet_vcs, ppb, threshold) for i in range(self.ntiles)]
        self.stats = NocStats()
        self.active = set()  # routers with buffered flits
        self.events: Dict[int, list] = {}
        self.delivered: List[Packet] = []
        self.on_eject: Optional[Callable[[Packet, int], None]] = None
        self._log = log
        self._next_id = 0
        self._seq = 0
        self.in_flight = 0  # packets handed to the NoC and not yet ejected

    # -- interface ------------------------------------------------------------

    def links(self) -> List[tuple]:
        out = []
        for r in self.routers:
            for p in (Port.N, Port.S, Port.E, Port.W):
                if r.neighbors[p] is not None:
                    out.append((r.idx, p))
        return out

    def send(self, msg, src: int, dst: int, t: int) -> Packet:
        """Queue ``msg`` at the NI of tile ``src``."""
        if not (0 <= src < self.ntiles and 0 <= dst < self.ntiles):
            raise ValueError(f"tile out of range: {src} -> {dst}")
        pkt = Packet(self._next_id, msg, packet_flits(msg.kind.has_data, self.flit_bits, self.block_size),
                     vnet_of(msg.kind), src, dst, msg.tag, msg.addr, self._seq)
        self._next_id += 1
        self._seq += 1
        self.nis[src].queue.append(pkt)
        self.in_flight += 1
        return pkt

    def idle(self) -> bool:
        return self.in_flight == 0 and not self.events

    def next_event(self) -> Optional[int]:
        return min(self.events) if self.events else None

    # -- scheduling -----------------------------------------------------------

    def _at(self, t, ev):
        self.events.setdefault(t, []).append(ev)

    def schedule_arrival(self, t, router, port, vc, flit):
        self._at(t, (0, router, port, vc, flit))

    def schedule_credit(self, t, router, port, vc, free):
        self._at(t, (1, router, port, vc, free))

    def schedule_ni_credit(self, t, tile, vc, free):
        self._at(t, (2, tile, vc, free))

    def schedule_eject(self, t, tile, flit):
        self._at(t, (3, tile, flit))

    # -- per-cycle ------------------------------------------------------------

    def deliver(self, t: int) -> List[Packet]:
        """Apply link arrivals, credits and ejections due at cycle ``t``.

        Returns packets whose tail reached the destination NI this cycle.
        """
        evs = self.events.pop(t, None)
        done = []
        if not evs:
            return done
        st = self.stats
        for ev in evs:
            kind = ev[0]
            if kind == 0:
                _, router, port, vc, flit = ev
                router.write(port, vc, flit, t, self)
                self.active.add(router.idx)
            elif kind == 1:
                _, router, port, vc, free = ev
                router.credits[port][vc] += 1
                if free:
                    router.out_free[port][vc] = True
            elif kind == 2:
                _, tile, vc, free = ev
                ni = self.nis[tile]
                ni.credits[vc] += 1
                if free:
                    ni.free[vc] = True
            else:
                _, tile, flit = ev
                st.flits_ejected += 1
                st.flit_latency_sum += t - flit.inject
                self.log(t, tile, "eject", flit, -1)
                if flit.is_tail:
                    pkt = flit.packet
                    pkt.eject_cycle = t
                    st.packets_ejected += 1
                    st.head_latency_sum += pkt.dest_arrival - pkt.inject_cycle
                    self.in_flight -= 1
                    done.append(pkt)
        return done

    def step(self, t: int) -> None:
        """NI injection followed by every active router, row-major."""
        for ni in self.nis:
            if ni.queue:
                ni.inject(t, self)
        if not self.active:
            return
        for idx in sorted(self.active):
            r = self.routers[idx]
            r.cycle(t, self)
        self.active = {i for i in self.active if self.routers[i].buffered}

    def max_wait_age(self) -> int:
        return max([r.max_wait_age for r in self.routers] + [ni.max_wait_age for ni in self.nis])

    def buffered_flits(self) -> int:
        return sum(r.buffered for r in self.routers)

    # -- logging --------------------------------------------------------------

    def log(self, t, node, event, flit, vc):
        if self._log is None:
            return
        pkt = flit.packet
        tag = pkt.tag
        pr = "0/0" if tag is None else f"{tag.outer}/{tag.inner}"
        self._log.write(f"{t},{node},{event},{pkt.id}.{flit.index},{vc},{pr}\n")


def ni_inject(net: Network, node: int, t: int) -> None:
    """One injection attempt at a single NI (a no-op on an empty queue)."""
    ni = net.nis[node]
    if ni.queue:
        ni.inject(t, net)


def router_cycle(net: Network, node: int, t: int) -> None:
    """Advance one router by a cycle. ``Network.step`` does this for every
    active router in row-major order."""
    r = net.routers[node]
    if r.buffered:
        r.cycle(t, net)
