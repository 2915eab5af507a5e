"""Virtual-channel wormhole router with an RC/VA/SA/ST pipeline.

Timing per hop, for a flit written into an input buffer at cycle ``a``:

    a      buffer write + route computation (head only)
    a+1    VC allocation (head only)
    a+2    switch allocation
    a+3    switch traversal
    a+4..  link traversal, ``link_latency`` cycles

so the flit lands in the next router's buffer at ``a + 4 + link_latency``.
Deeper pipelines add their extra stages between VA and SA.
Body flits skip RC/VA but still wait two cycles before they may bid for the
switch. The crossbar lets any number of flits leave one input port in a
cycle but at most one flit per output port.
"""

from __future__ import annotations

import enum
from collections import deque
from dataclasses import dataclass, field
from typing import List, Optional

from ..phase import PhaseTag
from .arbiter import Candidate, make_arbiter


class Port(enum.IntEnum):
    N = 0  # toward row 0
    S = 1
    E = 2
    W = 3
    L = 4  # local NI


OPPOSITE = {Port.N: Port.S, Port.S: Port.N, Port.E: Port.W, Port.W: Port.E}
_OPP = [1, 0, 3, 2]
NUM_PORTS = 5
LOCAL = int(Port.L)

# position of a flit within its packet
HEAD, BODY, TAIL, HEAD_TAIL = "head", "body", "tail", "head_tail"


def route_xy(cur, dst) -> int:
    """Dimension-ordered routing: correct x first, then y."""
    (cx, cy), (dx, dy) = cur, dst
    if dx > cx:
        return 2  # E
    if dx < cx:
        return 3  # W
    if dy > cy:
        return 1  # S
    if dy < cy:
        return 0  # N
    return 4  # L


@dataclass(eq=False)
class Packet:
    id: int
    msg: object  # CoherenceMessage
    flits: int
    vnet: int
    src: int  # tile
    dst: int  # tile
    tag: Optional[PhaseTag] = None
    addr: Optional[int] = None
    seq: int = 0  # NI enqueue order
    inject_cycle: int = -1
    dest_arrival: int = -1  # head written into the destination router
    eject_cycle: int = -1
    hops: int = 0
    ni_age: int = 0

    @property
    def priority(self) -> int:
        t = self.tag
        return 0 if t is None else (t.outer << 6) | t.inner


@dataclass(eq=False)
class Flit:
    packet: Packet
    index: int
    arrival: int = 0
    inject: int = 0
    va_age: int = 0
    sa_age: int = 0

    @property
    def position(self) -> str:
        n = self.packet.flits
        if n == 1:
            return HEAD_TAIL
        if self.index == 0:
            return HEAD
        return TAIL if self.index == n - 1 else BODY

    @property
    def is_head(self) -> bool:
        return self.index == 0

    @property
    def is_tail(self) -> bool:
        return self.index == self.packet.flits - 1


@dataclass(eq=False)
class InputVC:
    buf: deque = field(default_factory=deque)
    out_port: int = -1
    out_vc: int = -1
    va_cycle: int = -1


class Router:
    def __init__(self, idx: int, x: int, y: int, vcs: int, depth: int, vnet_vcs: List[List[int]],
                 ppb: bool, threshold: Optional[int], pipeline: int = 4):
        self.idx, self.x, self.y = idx, x, y
        self.sa_delay = pipeline - 2  # cycles from buffer write to switch allocation
        self.coords = (x, y)
        self.vcs, self.depth = vcs, depth
        self.vnet_vcs = vnet_vcs
        self.ppb = ppb
        self.inputs = [[InputVC() for _ in range(vcs)] for _ in range(NUM_PORTS)]
        self.credits = [[depth] * vcs for _ in range(NUM_PORTS)]
        self.out_free = [[True] * vcs for _ in range(NUM_PORTS)]
        self.neighbors: List[Optional["Router"]] = [None] * NUM_PORTS
        nslots = NUM_PORTS * vcs
        self.va_arb = {(p, v): make_arbiter(nslots, ppb, threshold)
                       for p in range(NUM_PORTS) for v in range(len(vnet_vcs))}
        self.sa_arb = [make_arbiter(nslots, ppb, threshold) for _ in range(NUM_PORTS)]
        self.buffered = 0
        self.occupied = set()  # slots (port * vcs + vc) holding flits
        self.max_wait_age = 0

    def __repr__(self):
        return f"Router({self.x},{self.y})"

    def write(self, port: int, vc: int, flit: Flit, cycle: int, net) -> None:
        ivc = self.inputs[port][vc]
        if len(ivc.buf) >= self.depth:
            raise RuntimeError(f"{self}: buffer overflow on port {Port(port).name} vc {vc}")
        flit.arrival = cycle
        flit.va_age = flit.sa_age = 0
        ivc.buf.append(flit)
        self.occupied.add(port * self.vcs + vc)
        self.buffered += 1
        net.stats.buf_writes += 1
        if flit.index == 0:
            pkt = flit.packet
            ivc.out_port = route_xy(self.coords, net.coords[pkt.dst])
            if pkt.dst == self.idx and pkt.dest_arrival < 0:
                pkt.dest_arrival = cycle
        if net._log is not None:
            net.log(cycle, self.idx, "arrive", flit, vc)

    def cycle(self, t: int, net) -> None:
        slots = sorted(self.occupied)
        self._switch_allocation(t, net, slots)
        self._vc_allocation(t, net, slots)

    # -- VA -------------------------------------------------------------------

    def _vc_allocation(self, t: int, net, slots) -> None:
        requests = {}
        vcs = self.vcs
        inputs = self.inputs
        for slot in slots:
            ivc = inputs[slot // vcs][slot % vcs]
            if not ivc.buf or ivc.out_vc >= 0:
                continue
            f = ivc.buf[0]
            if f.index != 0 or f.arrival >= t:
                continue
            key = (ivc.out_port, f.packet.vnet)
            if key in requests:
                requests[key].append((slot, ivc, f))
            else:
                requests[key] = [(slot, ivc, f)]
        for (op, vnet), reqs in requests.items():
            if op == LOCAL:
                # the local sink never runs out of VCs
                for slot, ivc, f in reqs:
                    ivc.out_vc = self.vnet_vcs[vnet][0]
                    ivc.va_cycle = t
                    net.stats.arb_grants += 1
                continue
            out_free = self.out_free[op]
            free = [v for v in self.vnet_vcs[vnet] if out_free[v]]
            if not free:
                continue
            arb = self.va_arb[(op, vnet)]
            pending = {slot: (ivc, f) for slot, ivc, f in reqs}
            while free and pending:
                if len(pending) == 1:
                    win = next(iter(pending))
                    arb.state.pointer = (win + 1) % arb.state.size
                else:
                    cands = [Candidate(s, f.packet.tag, f.va_age, f.packet.addr) for s, (ivc, f) in pending.items()]
                    win = arb.pick(cands)
                ivc, f = pending.pop(win)
                v = free.pop(0)
                out_free[v] = False
                ivc.out_vc = v
                ivc.va_cycle = t
                net.stats.arb_grants += 1
                if net._log is not None:
                    net.log(t, self.idx, "va", f, v)
            for ivc, f in pending.values():
                f.va_age += 1
                if f.va_age > self.max_wait_age:
                    self.max_wait_age = f.va_age

    # -- SA + ST --------------------------------------------------------------

    def _switch_allocation(self, t: int, net, slots) -> None:
        bids = {}
        vcs = self.vcs
        inputs = self.inputs
        credits = self.credits
        ready = t - self.sa_delay
        for slot in slots:
            ivc = inputs[slot // vcs][slot % vcs]
            if not ivc.buf or ivc.out_vc < 0 or ivc.va_cycle >= t:
                continue
            f = ivc.buf[0]
            if f.arrival > ready:
                continue
            op = ivc.out_port
            if op != LOCAL and credits[op][ivc.out_vc] <= 0:
                continue
            if op in bids:
                bids[op].append((slot, ivc, f))
            else:
                bids[op] = [(slot, ivc, f)]
        for op in sorted(bids):
            entries = bids[op]
            if len(entries) == 1:
                slot, ivc, f = entries[0]
                arb = self.sa_arb[op].state
                arb.pointer = (slot + 1) % arb.size
                self._traverse(t, net, op, slot, ivc, f)
                continue
            cands = [Candidate(s, f.packet.tag, f.sa_age, f.packet.addr) for s, _, f in entries]
            win = self.sa_arb[op].pick(cands)
            for slot, ivc, f in entries:
                if slot == win:
                    self._traverse(t, net, op, slot, ivc, f)
                else:
                    f.sa_age += 1
                    if f.sa_age > self.max_wait_age:
                        self.max_wait_age = f.sa_age

    def _traverse(self, t, net, op, slot, ivc, f):
        ivc.buf.popleft()
        if not ivc.buf:
            self.occupied.discard(slot)
        self.buffered -= 1
        st = net.stats
        st.buf_reads += 1
        st.xbar += 1
        st.arb_grants += 1
        out_vc = ivc.out_vc
        tail = f.index == f.packet.flits - 1
        if net._log is not None:
            net.log(t, self.idx, "sa", f, out_vc)
        if tail:
            ivc.out_port = ivc.out_vc = ivc.va_cycle = -1
        # credit back to whoever feeds this input VC
        p, v = divmod(slot, self.vcs)
        if p == LOCAL:
            net.schedule_ni_credit(t + 1, self.idx, v, tail)
        else:
            net.schedule_credit(t + net.link_latency, self.neighbors[p], _OPP[p], v, tail)
        if op == LOCAL:
            net.schedule_eject(t + 2, self.idx, f)
            return
        self.credits[op][out_vc] -= 1
        key = (self.idx, op)
        st.link_flits[key] = st.link_flits.get(key, 0) + 1
        st.link_traversals += 1
        if f.index == 0:
            f.packet.hops += 1
        net.schedule_arrival(t + 2 + net.link_latency, self.neighbors[op], _OPP[op], out_vc, f)
