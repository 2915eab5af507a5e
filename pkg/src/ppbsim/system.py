"""Tiled CMP model: cores, L1s, directory-bearing L2 banks, memory and the NoC.

Each cycle runs in a fixed order:

1. link arrivals and ejections (plus same-tile hand-offs),
2. every controller handles at most one queued message,
3. retirements and core issue,
4. ready messages enter their NI, then NIs and routers advance,
5. metrics (counters are updated in place; nothing is sampled).
"""

from __future__ import annotations

import hashlib
import random
from collections import OrderedDict, deque
from dataclasses import dataclass
from typing import Dict, List, Optional, TextIO

from .config import SystemConfig, dump_config, memory_tiles
from .metrics import MetricsRecorder, StatsReport, build_report
from .noc.network import Network
from .phase import InnerPhaseBuffer
from .protocol import (
    CoherenceMessage,
    DirContext,
    L1State,
    NodeKind,
    Op,
    ProtocolError,
    can_evict,
    dir_evict,
    dir_handle_message,
    l1,
    l1_evict,
    l1_handle_core_request,
    l1_handle_message,
    l2,
    mem,
    mem_handle_message,
)
from .protocol.directory import dump_entry
from .protocol.l1_controller import dump_line
from .protocol.types import MessageKind as K
from .workload import TraceRecord, fingerprint


class SimulationAbort(RuntimeError):
    """Protocol error, invariant failure or a run that never drains."""

    def __init__(self, message: str, dump: str = ""):
        super().__init__(message)
        self.dump = dump


@dataclass(eq=False)
class Transaction:
    core: int
    op: Op
    addr: int
    issue: int
    index: int
    store_value: Optional[int] = None
    retire: int = -1
    hit: bool = False
    value: Optional[int] = None
    last_msg: Optional[CoherenceMessage] = None
    ok_values: Optional[set] = None  # debug: values a load may legally return

    @property
    def is_load(self) -> bool:
        return self.op is Op.LOAD


class _Cache:
    """Lines plus per-set LRU order (most recent last)."""

    def __init__(self, sets: int, assoc: int, block_size: int):
        self.sets, self.assoc, self.block_size = sets, assoc, block_size
        self.lines: Dict[int, object] = {}
        self.lru = [OrderedDict() for _ in range(sets)]

    def set_of(self, addr: int) -> OrderedDict:
        return self.lru[(addr // self.block_size) % self.sets]

    def touch(self, addr: int) -> None:
        s = self.set_of(addr)
        s[addr] = None
        s.move_to_end(addr)

    def put(self, addr: int, rec) -> None:
        if rec is None:
            if self.lines.pop(addr, None) is not None:
                self.set_of(addr).pop(addr, None)
        else:
            self.lines[addr] = rec
            s = self.set_of(addr)
            if addr not in s:
                s[addr] = None


class L1Cache(_Cache):
    def __init__(self, core: int, cfg: SystemConfig):
        super().__init__(cfg.l1_sets, cfg.l1_assoc, cfg.block_size)
        self.core = core
        self.inq: deque = deque()

    def resident(self, s: OrderedDict) -> int:
        # lines waiting for a writeback ack sit in a victim buffer
        return sum(1 for a in s if not self.lines[a].state.evicting)


class L2Bank(_Cache):
    def __init__(self, idx: int, cfg: SystemConfig):
        super().__init__(cfg.l2_sets_per_bank, cfg.l2_assoc, cfg.block_size)
        self.idx = idx
        self.inq: List[CoherenceMessage] = []
        self.blocked = False  # every queued message is a stalled request
        self.inner = InnerPhaseBuffer(cfg.inner_buffer_entries) if cfg.ppb else None


class MemoryController:
    def __init__(self, idx: int, tile: int):
        self.idx, self.tile = idx, tile
        self.values: Dict[int, int] = {}
        self.inq: deque = deque()


class _Core:
    def __init__(self, idx: int):
        self.idx = idx
        self.pending: deque = deque()  # (effective tick, TraceRecord, index)
        self.txn: Optional[Transaction] = None
        self.ready_at = 0


class System:
    def __init__(self, cfg: SystemConfig, *, flit_log: Optional[TextIO] = None, metrics: bool = True):
        cfg.validate()
        self.cfg = cfg
        self.block_size = cfg.block_size
        self.net = Network(cfg.mesh_x, cfg.mesh_y, vcs=cfg.vcs, depth=cfg.buffer_depth,
                           link_latency=cfg.link_latency, ppb=cfg.ppb,
                           threshold=cfg.starvation_threshold, flit_bits=cfg.flit_bits,
                           block_size=cfg.block_size, pipeline=cfg.router_pipeline, log=flit_log)
        self.l1s = [L1Cache(i, cfg) for i in range(cfg.cores)]
        self.banks = [L2Bank(i, cfg) for i in range(cfg.cores)]
        self.mem_tiles = memory_tiles(cfg)
        self.mems = [MemoryController(i, t) for i, t in enumerate(self.mem_tiles)]
        self.cores = [_Core(i) for i in range(cfg.cores)]
        self.rec = MetricsRecorder(metrics)
        self.ctx = [DirContext(l2(i), self.mem_node, cfg.ppb,
                               self._inner_fn(b) if cfg.ppb else None) for i, b in enumerate(self.banks)]
        self.cycle = 0
        self.outbox: Dict[int, list] = {}
        self.local: Dict[int, list] = {}
        self.retires: Dict[int, list] = {}
        self.next_value = 0
        self.next_msg_id = 0
        self.sent = self.received = self.local_count = 0
        self.trace_fp = fingerprint([])
        self.last_progress = 0
        self.latest: Dict[int, int] = {}
        self.loads_waiting: Dict[int, list] = {}

    # -- address mapping ------------------------------------------------------

    def home(self, addr: int) -> int:
        return (addr // self.block_size) % self.cfg.cores

    def mem_node(self, addr: int):
        return mem((addr // self.cfg.mem_interleave) % len(self.mems))

    def tile_of(self, node) -> int:
        if node.kind is NodeKind.MEM:
            return self.mem_tiles[node.index]
        return node.index

    def _inner_fn(self, bank: L2Bank):
        return lambda addr: bank.inner.next_inner(addr, self.cycle)

    # -- trace ----------------------------------------------------------------

    def load(self, trace: List[TraceRecord]) -> None:
        cfg = self.cfg
        self.trace_fp = fingerprint(trace)
        rngs = [random.Random(f"jitter:{cfg.seed}:{c}") for c in range(cfg.cores)]
        for i, r in enumerate(trace):
            if not 0 <= r.core < cfg.cores:
                raise ValueError(f"trace record {i} names core {r.core}; system has {cfg.cores}")
            tick = r.tick + (rngs[r.core].randint(0, cfg.issue_jitter) if cfg.issue_jitter else 0)
            q = self.cores[r.core].pending
            if q and tick < q[-1][0]:
                tick = q[-1][0]
            q.append((tick, r, i))

    # -- messaging ------------------------------------------------------------

    def _send(self, msgs, t: int, latency: int) -> None:
        if not msgs:
            return
        box = self.outbox.setdefault(t + latency, [])
        for m in msgs:
            m.id = self.next_msg_id
            self.next_msg_id += 1
            m.created = t
            m.ready = t + latency
            box.append(m)
            self.sent += 1

    def _enqueue(self, msg: CoherenceMessage) -> None:
        d = msg.dst
        if d.kind is NodeKind.L1:
            self.l1s[d.index].inq.append(msg)
        elif d.kind is NodeKind.L2:
            b = self.banks[d.index]
            b.inq.append(msg)
            b.blocked = False
        else:
            self.mems[d.index].inq.append(msg)
        self.rec.record_event("message", msg, self.cycle)

    # -- one cycle ------------------------------------------------------------

    def step(self) -> None:
        t = self.cycle
        # 1. arrivals
        for pkt in self.net.deliver(t):
            pkt.msg.delivered = t
            self._enqueue(pkt.msg)
        for m in self.local.pop(t, ()):
            m.delivered = t
            self._enqueue(m)
        # 2. controllers
        try:
            for c in self.l1s:
                if c.inq:
                    self._l1_message(c, c.inq.popleft(), t)
            for b in self.banks:
                if b.inq and not b.blocked:
                    self._l2_cycle(b, t)
            for m in self.mems:
                if m.inq:
                    self._mem_message(m, m.inq.popleft(), t)
            # 3. retire, then issue
            for txn in self.retires.pop(t, ()):
                self._retire(txn, t)
            for core in self.cores:
                if core.txn is None and core.pending and core.pending[0][0] <= t and core.ready_at <= t:
                    self._issue(core, t)
        except ProtocolError as e:
            raise SimulationAbort(f"cycle {t}: protocol error: {e}", self.dump_state()) from None
        # 4. NoC
        for m in self.outbox.pop(t, ()):
            src, dst = self.tile_of(m.src), self.tile_of(m.dst)
            if src == dst:
                m.injected = t
                m.local = True
                self.local.setdefault(t + 1, []).append(m)
                self.local_count += 1
            else:
                m.local = False
                self.net.send(m, src, dst, t)
        self.net.step(t)
        self.cycle = t + 1

    # -- L1 -------------------------------------------------------------------

    def _l1_message(self, cache: L1Cache, msg: CoherenceMessage, t: int) -> None:
        msg.handled = t
        self.received += 1
        core = cache.core
        res = l1_handle_message(cache.lines.get(msg.addr), core, msg, l2(self.home(msg.addr)), t)
        cache.put(msg.addr, res.line)
        for ev in res.events:
            self.rec.record_event(ev, None, t)
        self._send(res.msgs, t, self.cfg.l1_latency)
        if res.retired is Op.LOAD or res.retired is Op.STORE:
            txn = self.cores[core].txn
            txn.value = res.value
            txn.last_msg = msg
            if res.retired is Op.STORE:
                self._performed(txn.addr, txn.store_value)
            self.retires.setdefault(t + self.cfg.l1_latency, []).append(txn)
        if self.cfg.debug:
            self._check_swmr(msg.addr)

    def _issue(self, core: _Core, t: int) -> None:
        cfg = self.cfg
        tick, rec, idx = core.pending[0]
        addr = rec.addr - rec.addr % self.block_size
        op = Op.STORE if rec.op == "W" else Op.LOAD
        txn = Transaction(core.idx, op, addr, t, idx)
        cache = self.l1s[core.idx]
        line = cache.lines.get(addr)
        if line is not None and not line.state.stable:
            # previous transaction on this block (a writeback) still open
            self.rec.bump("core_retries")
            core.ready_at = t + 1
            return
        core.pending.popleft()
        if op is Op.STORE:
            self.next_value += 1
            txn.store_value = self.next_value
        home = l2(self.home(addr))
        res = l1_handle_core_request(line, core.idx, op, addr, home, txn.store_value, t, cfg.ppb)
        core.txn = txn
        self.last_progress = t
        if cfg.debug and op is Op.LOAD:
            txn.ok_values = {self.latest.get(addr, 0)}
            self.loads_waiting.setdefault(addr, []).append(txn)
        if res.hit:
            txn.hit = True
            txn.value = res.value
            cache.put(addr, res.line)
            cache.touch(addr)
            if op is Op.STORE:
                self._performed(addr, txn.store_value)
            self.retires.setdefault(t + cfg.l1_latency, []).append(txn)
            return
        # miss: make room first, then send the request
        s = cache.set_of(addr)
        if addr not in s and cache.resident(s) >= cache.assoc:
            victim = next(a for a in s if cache.lines[a].state.stable)
            vres = l1_evict(cache.lines[victim], core.idx, victim, l2(self.home(victim)), t, cfg.ppb)
            cache.put(victim, vres.line)
            self._send(vres.msgs, t, cfg.l1_latency)
            self.rec.bump("l1_evictions")
        cache.put(addr, res.line)
        cache.touch(addr)
        self._send(res.msgs, t, cfg.l1_latency)

    def _retire(self, txn: Transaction, t: int) -> None:
        txn.retire = t
        core = self.cores[txn.core]
        core.txn = None
        core.ready_at = t
        self.last_progress = t
        parts = None if txn.hit else self.decompose(txn)
        if self.cfg.debug:
            self._check_value(txn)
        self.rec.record_event("retire", (txn, parts), t)

    def decompose(self, txn: Transaction):
        """Split a miss's issue-to-retire time into controller, queue and network cycles."""
        m = txn.last_msg
        ctrl = txn.retire - m.handled
        queue = net = 0
        while m is not None:
            queue += m.handled - m.delivered
            net += m.delivered - m.ready
            ctrl += m.ready - m.created
            p = m.parent
            queue += m.created - (p.handled if p is not None else txn.issue)
            m = p
        if ctrl + queue + net != txn.retire - txn.issue:
            raise SimulationAbort(f"delay decomposition mismatch for P{txn.core} {txn.addr:#x}",
                                  self.dump_state())
        return ctrl, queue, net

    # -- L2 / directory -------------------------------------------------------

    def _l2_cycle(self, bank: L2Bank, t: int) -> None:
        q = bank.inq
        for i, msg in enumerate(q):
            entry = bank.lines.get(msg.addr)
            if msg.kind.is_request and entry is not None and entry.state.busy:
                if not msg.stalled:
                    msg.stalled = True
                    self.rec.bump("l2_stalls")
                continue
            del q[i]
            self._l2_message(bank, msg, t)
            return
        bank.blocked = True

    def _l2_message(self, bank: L2Bank, msg: CoherenceMessage, t: int) -> None:
        msg.handled = t
        self.received += 1
        cfg = self.cfg
        ctx = self.ctx[bank.idx]
        addr = msg.addr
        entry = bank.lines.get(addr)
        if entry is None and msg.kind in (K.GetS, K.GetM):
            s = bank.set_of(addr)
            if len(s) >= bank.assoc:
                victim = next((a for a in s if can_evict(bank.lines[a])), None)
                if victim is None:
                    self.rec.bump("l2_set_overflows")
                else:
                    vres = dir_evict(bank.lines[victim], victim, ctx)
                    bank.put(victim, vres.entry)
                    self._send(vres.msgs, t, cfg.l2_latency)
                    self.rec.bump("l2_evictions")
        res = dir_handle_message(entry, msg, ctx)
        bank.put(addr, res.entry)
        if res.entry is not None:
            bank.touch(addr)
        for ev in res.events:
            self.rec.record_event(ev, None, t)
        self._send(res.msgs, t, cfg.l2_latency)

    # -- memory ---------------------------------------------------------------

    def _mem_message(self, mc: MemoryController, msg: CoherenceMessage, t: int) -> None:
        msg.handled = t
        self.received += 1
        value, reply = mem_handle_message(mc.values.get(msg.addr, 0), msg, mem(mc.idx))
        mc.values[msg.addr] = value
        self.rec.bump("mem_reads" if msg.kind is K.MemRead else "mem_writes")
        self._send([reply], t, self.cfg.mem_latency)

    # -- debug invariants -----------------------------------------------------

    def _performed(self, addr: int, value: int) -> None:
        if not self.cfg.debug:
            return
        self.latest[addr] = value
        for txn in self.loads_waiting.get(addr, ()):
            txn.ok_values.add(value)

    def _check_value(self, txn: Transaction) -> None:
        if txn.op is not Op.LOAD:
            return
        waiting = self.loads_waiting.get(txn.addr, [])
        waiting.remove(txn)
        if not waiting:
            self.loads_waiting.pop(txn.addr, None)
        if txn.value not in txn.ok_values:
            raise SimulationAbort(
                f"data-value violation: P{txn.core} load {txn.addr:#x} returned {txn.value}, "
                f"expected one of {sorted(txn.ok_values)}", self.dump_state())

    def _check_swmr(self, addr: int) -> None:
        writers = readers = 0
        for c in self.l1s:
            line = c.lines.get(addr)
            if line is None:
                continue
            if line.state in (L1State.M, L1State.E):
                writers += 1
            elif line.state is L1State.S:
                readers += 1
        if writers > 1 or (writers and readers):
            raise SimulationAbort(f"cycle {self.cycle}: SWMR violation on {addr:#x}", self.dump_state())

    # -- running --------------------------------------------------------------

    def _busy_now(self) -> bool:
        if any(c.inq for c in self.l1s) or any(m.inq for m in self.mems):
            return True
        if any(b.inq and not b.blocked for b in self.banks):
            return True
        net = self.net
        return bool(net.active) or any(ni.queue for ni in net.nis)

    def _next_time(self) -> Optional[int]:
        t = self.cycle
        if self._busy_now():
            return t
        cands = []
        for d in (self.outbox, self.local, self.retires, self.net.events):
            if d:
                cands.append(min(d))
        for core in self.cores:
            if core.txn is None and core.pending:
                cands.append(max(core.pending[0][0], core.ready_at))
        return max(t, min(cands)) if cands else None

    def drained(self) -> bool:
        return (all(c.txn is None and not c.pending for c in self.cores) and not self.outbox
                and not self.local and not self.retires and self.net.idle() and not self._busy_now())

    def run(self, trace: Optional[List[TraceRecord]] = None) -> StatsReport:
        if trace is not None:
            self.load(trace)
        bound = self.cfg.drain_bound
        while True:
            nxt = self._next_time()
            if nxt is None:
                if self.drained():
                    break
                raise SimulationAbort(f"cycle {self.cycle}: deadlock, nothing left to schedule",
                                      self.dump_state())
            if nxt - self.last_progress > bound:
                raise SimulationAbort(f"no transaction made progress for {bound} cycles "
                                      f"(last at cycle {self.last_progress})", self.dump_state())
            self.cycle = nxt
            self.step()
        self.check_conservation()
        return self.report()

    def check_conservation(self) -> None:
        st = self.net.stats
        problems = []
        if st.flits_injected != st.flits_ejected:
            problems.append(f"flits injected {st.flits_injected} != ejected {st.flits_ejected}")
        if self.sent != self.received:
            problems.append(f"messages sent {self.sent} != received {self.received}")
        mshrs = sum(1 for c in self.l1s for ln in c.lines.values() if ln.mshr is not None)
        if mshrs:
            problems.append(f"{mshrs} MSHRs still allocated")
        busy = sum(1 for b in self.banks for e in b.lines.values() if e.state.busy)
        if busy:
            problems.append(f"{busy} directory entries still Busy")
        if problems:
            raise SimulationAbort("conservation violated: " + "; ".join(problems), self.dump_state())

    def config_fingerprint(self) -> str:
        text = "\n".join(l for l in dump_config(self.cfg).splitlines() if not l.startswith("mode ="))
        return hashlib.sha256(text.encode()).hexdigest()[:16]

    def report(self) -> StatsReport:
        inner_ev = sum(b.inner.evictions for b in self.banks) if self.cfg.ppb else 0
        return build_report(self.rec, self.net, self.cfg, self.cycle, trace_fingerprint=self.trace_fp,
                            config_fingerprint=self.config_fingerprint(), sent=self.sent,
                            received=self.received, local=self.local_count, inner_evictions=inner_ev)

    # -- dumps ----------------------------------------------------------------

    def dump_state(self) -> str:
        out = [f"cycle {self.cycle}"]
        for core in self.cores:
            txn = core.txn
            if txn is not None:
                out.append(f"P{core.idx}: outstanding {txn.op.value} {txn.addr:#x} since {txn.issue}")
            elif core.pending:
                out.append(f"P{core.idx}: {len(core.pending)} records waiting")
        for c in self.l1s:
            for addr, line in sorted(c.lines.items()):
                if not line.state.stable or line.mshr is not None:
                    out.append(f"L1 P{c.core} " + dump_line(addr, line))
            for m in c.inq:
                out.append(f"L1 P{c.core} queued: {m.describe()}")
        for b in self.banks:
            for addr, e in sorted(b.lines.items()):
                if e.state.busy:
                    out.append(f"L2 bank {b.idx} " + dump_entry(addr, e))
            for m in b.inq:
                out.append(f"L2 bank {b.idx} queued{' (stalled)' if m.stalled else ''}: {m.describe()}")
        for mc in self.mems:
            for m in mc.inq:
                out.append(f"MEM {mc.idx} queued: {m.describe()}")
        for ni in self.net.nis:
            for p in ni.queue:
                out.append(f"NI {ni.tile} waiting: {p.msg.describe()}")
        out.append(f"flits in routers: {self.net.buffered_flits()}")
        return "\n".join(out)


def build_system(cfg: SystemConfig, **kw) -> System:
    return System(cfg, **kw)


def step(sys: System) -> None:
    sys.step()


def run(sys: System, trace: List[TraceRecord]) -> StatsReport:
    return sys.run(trace)


def simulate(cfg: SystemConfig, trace: List[TraceRecord], *, flit_log: Optional[TextIO] = None,
             metrics: bool = True) -> StatsReport:
    return System(cfg, flit_log=flit_log, metrics=metrics).run(trace)
