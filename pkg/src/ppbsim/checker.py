"""Exhaustive explicit-state exploration of the coherence protocol.

The checker drives the very same transition functions the timing simulator
uses, but replaces the mesh with one unordered channel per (src, dst) pair:
any in-flight message may be delivered next. That is a superset of every
order the NoC can produce (including an invalidation overtaking data),
so a clean exploration covers both the baseline and the priority-arbitrated
network.

Checked at every reachable state:

* SWMR: at most one L1 holds a block in E/M, and never alongside S copies;
* data value: stable copies hold the latest stored value, and every load
  returns a value that was current at some instant between its issue and
  its retirement;
* directory consistency: with nothing in flight for a block, the presence
  vector equals the set of L1s that hold it;
* no stuck state: a state without successors has no pending work;
* (PPB) inner phases are handed out consecutively per address in
  serialization order, and no two in-flight transactions on one address
  share an inner phase.
"""

from __future__ import annotations

import time
from collections import deque
from dataclasses import dataclass, field
from typing import Optional, Sequence

from .phase import INNER_MOD, POST_ORDER, InnerPhaseBuffer, PhaseTag
from .protocol import (
    DirContext,
    L1State,
    MessageKind,
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
from .protocol.types import DirEntry, L1Line, bits, message_from_key, popcount

MAX_CORES = 3
MAX_BLOCKS = 2
# deliberate protocol bugs the checker must catch
MUTATIONS = ("drop_inv_in_is_d", "skip_inv")
STATE_BOUND = 50_000_000

HOME = l2(0)
MEMNODE = mem(0)
BLOCK = 64

# indices into CoherenceMessage.key()
_KIND, _ADDR, _DSTK, _DSTI, _PAYLOAD, _TAG = 0, 1, 4, 5, 8, 9


class CheckerError(RuntimeError):
    pass


@dataclass
class Violation:
    kind: str
    message: str
    trace: list

    def format(self) -> str:
        lines = [f"VIOLATION ({self.kind}): {self.message}"]
        for i, step in enumerate(self.trace, 1):
            lines.append(f"{i:4d}. {step}")
        return "\n".join(lines)


@dataclass
class ExploreResult:
    cores: int
    blocks: int
    ppb: bool
    states_visited: int = 0
    transitions: int = 0
    terminal_states: int = 0
    violations: list = field(default_factory=list)
    phase_violations: list = field(default_factory=list)
    serialized: int = 0  # directory orderings whose inner phase was checked (PPB)
    elapsed: float = 0.0

    @property
    def ok(self) -> bool:
        return not self.violations and not self.phase_violations


def _addr(b):
    return b * BLOCK


def _put(t, i, v):
    return t[:i] + (v,) + t[i + 1:]


def _fresh_value(state):
    seen = set()
    nc, nb = len(state[0]), len(state[1])
    _relabel(state, tuple(range(nc)), tuple(range(nb)), lambda v: seen.add(v) or v)
    return max(seen) + 1


def _namer():
    names = {}

    def name(v):
        n = names.get(v)
        if n is None:
            n = names[v] = len(names)
        return n

    return name


def _inverse(p):
    inv = [0] * len(p)
    for i, x in enumerate(p):
        inv[x] = i
    return tuple(inv)


def _perm_mask(mask, p):
    out = 0
    for c in bits(mask):
        out |= 1 << p[c]
    return out


_KEY_CACHE: dict = {}


def _relabel_key(key, p, q):
    """Core/block renaming of a message key; the payload is left alone."""
    ck = (key, p, q)
    out = _KEY_CACHE.get(ck)
    if out is None:
        k = list(key)
        k[_ADDR] = q[key[_ADDR] // BLOCK] * BLOCK
        if key[2] == NodeKind.L1:
            k[3] = p[key[3]]
        if key[_DSTK] == NodeKind.L1:
            k[_DSTI] = p[key[_DSTI]]
        if key[6] >= 0:
            k[6] = p[key[6]]
        out = _KEY_CACHE[ck] = tuple(k)
    return out


def _relabel(state, p, q, f):
    """Rename cores by ``p``, blocks by ``q`` (old index -> new index) and
    data values by ``f``. Values are visited in a fixed order of the
    *relabelled* state so that ``f`` can hand out names on first sight."""
    cores, dirs, memv, evl, net, latest, buf, serial = state
    nb = len(dirs)
    qi = _inverse(q)
    ident_p = p == tuple(range(len(p)))
    ident_q = q == tuple(range(nb))
    latest = tuple([f(latest[x]) for x in qi])
    memv = tuple([f(memv[x]) for x in qi])
    new_dirs = []
    for x in qi:
        e = dirs[x]
        if e is not None:
            pend = e.pending
            if ident_p:
                e = e._replace(value=f(e.value))
            else:
                if pend is not None:
                    pend = pend._replace(
                        requestor=p[pend.requestor],
                        former_owner=None if pend.former_owner is None else p[pend.former_owner],
                    )
                e = DirEntry(e.state, _perm_mask(e.sharers, p), None if e.owner is None else p[e.owner],
                             e.modified, f(e.value), pend)
        new_dirs.append(e)
    out = []
    for core in (cores if ident_p else [cores[x] for x in _inverse(p)]):
        ops_done, busy, lines = core
        if busy is not None:
            v = busy[2]
            v = f(v) if busy[0] is Op.STORE else frozenset([f(x) for x in sorted(v)])
            busy = (busy[0], q[busy[1]], v)
        new_lines = []
        for x in qi:
            line = lines[x]
            if line is not None:
                m = line.mshr
                if m is not None and m.store_value is not None:
                    m = m._replace(store_value=f(m.store_value))
                line = L1Line(line.state, f(line.value), m)
            new_lines.append(line)
        out.append((ops_done, busy, tuple(new_lines)))
    if ident_p and ident_q:
        new_net = net  # identity: already sorted
    else:
        new_net = sorted([(_relabel_key(key, p, q), g) for key, g in net])
    renamed = []
    for k, g in new_net:
        v = k[_PAYLOAD]
        if v >= 0:
            k = k[:_PAYLOAD] + (f(v),) + k[_PAYLOAD + 1:]
        renamed.append((k, g))
    renamed.sort()
    if not ident_q:
        buf = tuple([(q[a // BLOCK] * BLOCK, inner) for a, inner in buf])
        serial = tuple([serial[x] for x in qi])
    return (tuple(out), tuple(new_dirs), memv, evl, tuple(renamed), latest, buf, serial)


def shift_phases(state):
    """Renumber each block's transactions so the oldest one still live is 0.

    In the checker the network ignores priorities, so only differences
    between inner phases (and between ghost transaction ids) of one block
    matter. Subtracting a per-block constant from all of them, from the
    serialization counter and from the inner phase buffer yields an
    equivalent state.
    """
    cores, dirs, memv, evl, net, latest, buf, serial = state
    nb = len(dirs)
    # keep the newest ordered transaction numbered >= 0 so a block with
    # history never looks cold
    base = [max(n - 1, 0) for n in serial]
    for key, g in net:
        if g >= 0:
            b = key[_ADDR] // BLOCK
            if g < base[b]:
                base[b] = g
    if not any(base):
        return state
    new_net = []
    for key, g in net:
        b = key[_ADDR] // BLOCK
        d = base[b]
        if d and g >= 0:
            t = key[_TAG]
            t = (t & ~63) | ((t - d) & 63)
            key = key[:_TAG] + (t,) + key[_TAG + 1:]
            g -= d
        new_net.append((key, g))
    new_net.sort()
    new_dirs = []
    for b, e in enumerate(dirs):
        d = base[b]
        if d and e is not None and e.pending is not None and e.pending.tag is not None:
            t = e.pending.tag
            e = e._replace(pending=e.pending._replace(tag=PhaseTag(t.outer, (t.inner - d) % INNER_MOD)))
        new_dirs.append(e)
    buf = tuple([(a, (inner - base[a // BLOCK]) % INNER_MOD) for a, inner in buf])
    serial = tuple([serial[b] - base[b] for b in range(nb)])
    return (cores, tuple(new_dirs), memv, evl, tuple(new_net), latest, buf, serial)


def canonical_values(state):
    nc, nb = len(state[0]), len(state[1])
    return _relabel(state, tuple(range(nc)), tuple(range(nb)), _namer())


def _sort_perm(sigs):
    order = sorted(range(len(sigs)), key=sigs.__getitem__)
    return _inverse(order)  # old index -> rank


def canonical(state):
    """Representative of ``state`` under core, block and value renaming.

    Cores and blocks are ordered by signatures that do not mention any core
    or block index; ties keep their current order, so an orbit may keep more
    than one representative, which costs time but never soundness.
    Returns the representative and the (core, block) permutation applied.
    """
    cores, dirs, memv, evl, net, latest, buf, serial = state
    nb = len(dirs)
    per_block = [[] for _ in range(nb)]
    for key, _ in net:
        per_block[key[_ADDR] // BLOCK].append(key[_KIND])
    bsig = []
    for b in range(nb):
        e = dirs[b]
        esig = () if e is None else (e.state, popcount(e.sharers), e.owner is not None, e.modified,
                                         e.pending is not None and e.pending.need_data)
        lsig = sorted(-1 if c[2][b] is None else c[2][b].state for c in cores)
        busy = sorted(c[1][0] is Op.STORE for c in cores if c[1] is not None and c[1][1] == b)
        bsig.append((esig, lsig, sorted(per_block[b]), serial[b], busy))
    q = _sort_perm(bsig)
    qi = _inverse(q)
    roles = [[] for _ in cores]
    for key, _ in net:
        nbk = q[key[_ADDR] // BLOCK]
        if key[2] == NodeKind.L1:
            roles[key[3]].append((key[_KIND], nbk, 0))
        if key[_DSTK] == NodeKind.L1:
            roles[key[_DSTI]].append((key[_KIND], nbk, 1))
        if key[6] >= 0:
            roles[key[6]].append((key[_KIND], nbk, 2))
    csig = []
    for c, (ops_done, busy, lines) in enumerate(cores):
        bs = (-1, -1) if busy is None else (busy[0] is Op.STORE, q[busy[1]])
        ls = []
        for b in qi:
            line = lines[b]
            e = dirs[b]
            ls.append((
                -1 if line is None else line.state,
                () if line is None or line.mshr is None else (line.mshr.acks_outstanding,
                                                              line.mshr.data_arrived, line.mshr.invalidated),
                () if e is None else (e.sharers >> c & 1, e.owner == c,
                                     e.pending is not None and e.pending.requestor == c,
                                     e.pending is not None and e.pending.former_owner == c),
            ))
        csig.append((ops_done, bs, ls, sorted(roles[c])))
    p = _sort_perm(csig)
    return _relabel(state, p, q, _namer()), (p, q)


class _Model:
    """Transition relation over flat, hashable states.

    state = (cores, dirs, mem, evicts_left, net, latest, inner_buf, serial)
      cores[c] = (ops_done, busy, lines)
      evicts_left = (L1 replacements left, L2 replacements left), shared by all cores
      busy     = (op, block, store value | frozenset of acceptable load values)
      net      = sorted tuple of (message key, ghost transaction id)
      serial   = per-block count of transactions ordered so far (PPB only)
    The protocol only moves data values around, so states that differ by a
    renaming of values are equivalent. Every state is stored with its values
    renamed to 0, 1, 2... in order of first appearance; a store writes a
    value not present anywhere in the state.
    """

    def __init__(self, cores, blocks, max_ops, l1_evictions, l2_evictions, ppb, mutations,
                 programs, inner_buffer_entries):
        self.n, self.nb, self.max_ops = cores, blocks, max_ops
        self.l1_evictions, self.l2_evictions = l1_evictions, l2_evictions
        self.ppb = ppb
        self.mutations = frozenset(mutations)
        self.programs = programs
        self.inner_cap = inner_buffer_entries
        self._ctx = DirContext(HOME, lambda a: MEMNODE, ppb, None, self.mutations)
        self.orderings_checked = 0
        self._choices = [(op, b) for b in range(blocks) for op in (Op.LOAD, Op.STORE)]

    def initial(self):
        core = (0, None, (None,) * self.nb)
        zeros = (0,) * self.nb
        evl = (self.l1_evictions, self.l2_evictions)
        return ((core,) * self.n, (None,) * self.nb, zeros, evl, (), zeros, (), zeros)

    def next_ops(self, c, ops_done):
        if self.programs is not None:
            prog = self.programs[c]
            return prog[ops_done:ops_done + 1]
        return self._choices if ops_done < self.max_ops else ()

    def steps(self, state):
        cores, dirs, _, (l1left, l2left), net, _, _, _ = state
        for c, (ops_done, busy, lines) in enumerate(cores):
            if busy is not None:
                continue
            for op, b in self.next_ops(c, ops_done):
                yield ("issue", c, op, b)
            # replacements happen between a core's operations, as on a miss
            if l1left > 0:
                for b, line in enumerate(lines):
                    if line is not None and line.state.readable:
                        yield ("evict", c, b)
        if l2left > 0:
            for b, e in enumerate(dirs):
                if can_evict(e):
                    yield ("l2evict", b)
        prev = None
        for i, item in enumerate(net):
            if item != prev:
                yield ("deliver", item, i)
            prev = item

    def apply(self, state, step):
        what = step[0]
        if what == "deliver":
            return self.do_deliver(state, step[2])
        if what == "issue":
            return self.do_issue(state, step[1], step[2], step[3])
        if what == "evict":
            return self.do_evict(state, step[1], step[2])
        return self.do_l2_evict(state, step[1])

    def _keys(self, msgs, ghost):
        out = []
        for m in msgs:
            g = ghost if (self.ppb and m.tag is not None and m.tag.outer == POST_ORDER) else -1
            out.append((m.key(), g))
        return out

    def _retire(self, cores, latest, c, res, b):
        if res.retired is None or res.retired is Op.EVICT:
            return cores, latest
        ops_done, busy, lines = cores[c]
        if busy is None or busy[1] != b or busy[0] is not res.retired:
            raise CheckerError(f"P{c} retired {res.retired} on block {b} without a matching pending op")
        if res.retired is Op.LOAD:
            if res.value not in busy[2]:
                raise _Bad("data_value", f"P{c} load of block {b} returned {res.value}, "
                                         f"acceptable values {sorted(busy[2])}")
        else:
            latest = _put(latest, b, res.value)
            upd = list(cores)
            for d, other in enumerate(cores):
                ob = other[1]
                if d != c and ob is not None and ob[0] is Op.LOAD and ob[1] == b:
                    upd[d] = (other[0], (Op.LOAD, b, ob[2] | {res.value}), other[2])
            cores = tuple(upd)
        return _put(cores, c, (ops_done + 1, None, lines)), latest

    def do_issue(self, state, c, op, b):
        cores, dirs, memv, evl, net, latest, buf, serial = state
        ops_done, busy, lines = cores[c]
        value = None
        if op is Op.STORE:
            value = _fresh_value(state)
        res = l1_handle_core_request(lines[b], c, op, _addr(b), HOME, value, ppb=self.ppb)
        if res.retry:
            return None
        busy = (op, b, value) if op is Op.STORE else (op, b, frozenset((latest[b],)))
        cores = _put(cores, c, (ops_done, busy, _put(lines, b, res.line)))
        if res.msgs:
            net = tuple(sorted(net + tuple(self._keys(res.msgs, -1))))
        if res.hit:
            cores, latest = self._retire(cores, latest, c, res, b)
        return (cores, dirs, memv, evl, net, latest, buf, serial)

    def do_evict(self, state, c, b):
        cores, dirs, memv, evl, net, latest, buf, serial = state
        ops_done, busy, lines = cores[c]
        res = l1_evict(lines[b], c, _addr(b), HOME, ppb=self.ppb)
        cores = _put(cores, c, (ops_done, busy, _put(lines, b, res.line)))
        net = tuple(sorted(net + tuple(self._keys(res.msgs, -1))))
        return (cores, dirs, memv, (evl[0] - 1, evl[1]), net, latest, buf, serial)

    def do_l2_evict(self, state, b):
        cores, dirs, memv, evl, net, latest, buf, serial = state
        res = dir_evict(dirs[b], _addr(b), self._ctx)
        if res.msgs:
            net = tuple(sorted(net + tuple(self._keys(res.msgs, -1))))
        return (cores, _put(dirs, b, res.entry), memv, (evl[0], evl[1] - 1), net, latest, buf, serial)

    def do_deliver(self, state, i):
        cores, dirs, memv, evl, net, latest, buf, serial = state
        key, ghost = net[i]
        rest = net[:i] + net[i + 1:]
        msg = message_from_key(key)
        b = key[_ADDR] // BLOCK
        dk = key[_DSTK]
        if dk == NodeKind.L1:
            c = key[_DSTI]
            ops_done, busy, lines = cores[c]
            res = l1_handle_message(lines[b], c, msg, HOME, mutations=self.mutations)
            cores = _put(cores, c, (ops_done, busy, _put(lines, b, res.line)))
            out = self._keys(res.msgs, ghost)
            cores, latest = self._retire(cores, latest, c, res, b)
        elif dk == NodeKind.L2:
            inner_log = []
            if self.ppb:
                def nxt(addr):
                    ib = InnerPhaseBuffer.from_snapshot(self.inner_cap, buf)
                    inner_log.append(ib.next_inner(addr))
                    inner_log.append(ib.snapshot())
                    return inner_log[0]
                ctx = DirContext(HOME, self._ctx.mem_node, True, nxt, self.mutations)
            else:
                ctx = self._ctx
            res = dir_handle_message(dirs[b], msg, ctx)
            if res.stalled:
                return None
            dirs = _put(dirs, b, res.entry)
            g = -1
            if self.ppb:
                # a Busy entry belongs to the most recently ordered transaction
                g = serial[b] - 1
                if res.serialized:
                    inner, buf = inner_log
                    g = serial[b]
                    expected = g % INNER_MOD
                    serial = _put(serial, b, g + 1)
                    self.orderings_checked += 1
                    if inner != expected:
                        raise _Bad("phase", f"block {b}: transaction {g} got inner phase {inner}, "
                                            f"expected {expected}")
            out = self._keys(res.msgs, g)
        else:
            v, reply = mem_handle_message(memv[b], msg, MEMNODE)
            memv = _put(memv, b, v)
            out = self._keys([reply], ghost)
        if out:
            rest = tuple(sorted(rest + tuple(out)))
        return (cores, dirs, memv, evl, rest, latest, buf, serial)

    # -- invariants -----------------------------------------------------------

    def check(self, state):
        cores, dirs, memv, evl, net, latest, buf, serial = state
        inflight = {key[_ADDR] // BLOCK for key, _ in net}
        for b in range(self.nb):
            writers, readers = [], []
            transient = False
            for c, core in enumerate(cores):
                line = core[2][b]
                if line is None:
                    continue
                st = line.state
                if st is L1State.M or st is L1State.E:
                    writers.append(c)
                elif st is L1State.S:
                    readers.append(c)
                else:
                    transient = True
                    continue
                if line.value != latest[b]:
                    raise _Bad("data_value", f"P{c} holds block {b} in {st.name} with value {line.value}, "
                                             f"latest is {latest[b]}")
            if len(writers) > 1 or (writers and readers):
                raise _Bad("swmr", f"block {b}: writers {writers} readers {readers}")
            e = dirs[b]
            if b not in inflight and not transient and (e is None or not e.state.busy):
                holders = set(writers) | set(readers)
                if e is None:
                    tracked = set()
                elif e.owner is not None:
                    tracked = {e.owner}
                else:
                    tracked = set(bits(e.sharers))
                if holders != tracked:
                    raise _Bad("dir_consistency", f"block {b}: directory tracks {sorted(tracked)}, "
                                                  f"L1s holding it {sorted(holders)}")
        if self.ppb:
            last = dict(buf)
            for b in range(self.nb):
                if serial[b] and last.get(_addr(b)) != (serial[b] - 1) % INNER_MOD:
                    raise _Bad("phase", f"block {b}: inner phase buffer holds {last.get(_addr(b))} after "
                                        f"{serial[b]} ordered transactions")
            seen = {}
            for key, ghost in net:
                t = key[_TAG]
                if ghost >= 0 and (t >> 6) == POST_ORDER:
                    k = (key[_ADDR], t & 63)
                    if seen.setdefault(k, ghost) != ghost:
                        raise _Bad("phase", f"block {key[_ADDR] // BLOCK}: transactions {seen[k]} and "
                                            f"{ghost} in flight with the same inner phase {t & 63}")

    def pending_work(self, state):
        cores, dirs, memv, evl, net, latest, buf, serial = state
        if net:
            return "messages in flight"
        for c, core in enumerate(cores):
            if core[1] is not None:
                return f"P{c} has an outstanding {core[1][0].value}"
            for b, line in enumerate(core[2]):
                if line is not None and not line.state.stable:
                    return f"P{c} block {b} stuck in {line.state.name}"
        for b, e in enumerate(dirs):
            if e is not None and e.state.busy:
                return f"directory entry for block {b} stuck in {e.state.name}"
        return None


class _Bad(Exception):
    def __init__(self, kind, message):
        super().__init__(message)
        self.kind = kind


def _label(step) -> str:
    what = step[0]
    if what == "issue":
        _, c, op, b = step
        return f"P{c} issues {op.value} to block {b}"
    if what == "evict":
        return f"P{step[1]} evicts block {step[2]}"
    if what == "l2evict":
        return f"L2 evicts block {step[1]}"
    key, ghost = step[1]
    s = f"deliver {message_from_key(key).describe()}"
    if ghost >= 0:
        s += f" (txn {ghost})"
    return s


def _unmap(step, p, q):
    """Translate a step from a representative's labelling back to the run's."""
    pi, qi = _inverse(p), _inverse(q)
    what = step[0]
    if what == "issue":
        return ("issue", pi[step[1]], step[2], qi[step[3]])
    if what == "evict":
        return ("evict", pi[step[1]], qi[step[2]])
    if what == "l2evict":
        return ("l2evict", qi[step[1]])
    key, ghost = step[1]
    return ("deliver", (_relabel_key(key, pi, qi), ghost), step[2])


def _trace(parents, state, last=None):
    chain = []
    while True:
        link = parents[state]
        if link is None:
            break
        state, step, perm = link
        chain.append((step, perm))
    chain.reverse()
    p, q = tuple(range(len(state[0]))), tuple(range(len(state[1])))
    steps = []
    for step, perm in chain + ([(last, None)] if last is not None else []):
        steps.append(_label(_unmap(step, p, q)))
        if perm is not None:
            # compose: run labelling -> previous representative -> this one
            p = tuple(perm[0][x] for x in p)
            q = tuple(perm[1][x] for x in q)
    return steps


def explore(
    cores: int = 2,
    blocks: int = 1,
    values: int = 2,
    max_ops_per_core: int = 2,
    *,
    ppb: bool = False,
    l1_evictions: int = 0,
    l2_evictions: int = 0,
    programs: Optional[Sequence[Sequence[tuple]]] = None,
    mutations=(),
    inner_buffer_entries: int = 32,
    state_bound: int = STATE_BOUND,
    max_violations: int = 1,
    symmetry: bool = True,
) -> ExploreResult:
    """Breadth-first search over every interleaving of core operations,
    replacements and message deliveries.

    ``values`` is kept for interface compatibility: every store writes a
    value not present anywhere in the system, so a stale read can never alias
    a fresh one. ``programs`` optionally fixes each core's op sequence as a
    list of ``(Op, block)`` pairs; by default each op is chosen
    nondeterministically, and then cores and blocks are interchangeable, which
    ``symmetry`` exploits. ``l1_evictions`` and ``l2_evictions`` bound the
    number of replacements over the whole run.
    """
    if not 1 <= cores <= MAX_CORES:
        raise ValueError(f"cores must be in 1..{MAX_CORES} for exhaustive search")
    if not 1 <= blocks <= MAX_BLOCKS:
        raise ValueError(f"blocks must be in 1..{MAX_BLOCKS} for exhaustive search")
    if values < 2:
        raise ValueError("need at least two data values")
    unknown = set(mutations) - set(MUTATIONS)
    if unknown:
        raise ValueError(f"unknown mutation(s): {', '.join(sorted(unknown))}")
    if programs is not None:
        if len(programs) != cores:
            raise ValueError("one program per core")
        programs = [tuple(p) for p in programs]
    model = _Model(cores, blocks, max_ops_per_core, l1_evictions, l2_evictions, ppb, mutations,
                   programs, inner_buffer_entries)
    res = ExploreResult(cores, blocks, ppb)
    t0 = time.perf_counter()
    init = model.initial()
    parents = {init: None}
    frontier = deque([init])
    check, apply, steps = model.check, model.apply, model.steps
    symmetric = symmetry and programs is None
    identity = (tuple(range(cores)), tuple(range(blocks)))
    bad = 0
    while frontier and bad < max_violations:
        state = frontier.popleft()
        any_enabled = False
        for step in steps(state):
            try:
                nxt = apply(state, step)
            except ProtocolError as e:
                res.violations.append(Violation("protocol", str(e), _trace(parents, state, step)))
                bad += 1
                any_enabled = True
                continue
            except _Bad as e:
                v = Violation(e.kind, str(e), _trace(parents, state, step))
                (res.phase_violations if e.kind == "phase" else res.violations).append(v)
                bad += 1
                any_enabled = True
                continue
            if nxt is None:
                continue
            if ppb:
                nxt = shift_phases(nxt)
            if symmetric:
                nxt, perm = canonical(nxt)
            else:
                nxt, perm = canonical_values(nxt), identity
            any_enabled = True
            res.transitions += 1
            if nxt in parents:
                continue
            parents[nxt] = (state, step, perm)
            try:
                check(nxt)
            except _Bad as e:
                v = Violation(e.kind, str(e), _trace(parents, nxt))
                (res.phase_violations if e.kind == "phase" else res.violations).append(v)
                bad += 1
                continue
            frontier.append(nxt)
        if len(parents) > state_bound:
            raise CheckerError(f"state bound {state_bound} exceeded")
        if not any_enabled:
            res.terminal_states += 1
            why = model.pending_work(state)
            if why is not None:
                res.violations.append(Violation("deadlock", why, _trace(parents, state)))
                bad += 1
    res.serialized = model.orderings_checked
    res.states_visited = len(parents)
    res.elapsed = time.perf_counter() - t0
    return res


def check_phase_consistency(result: ExploreResult) -> bool:
    """Pass iff a PPB exploration ordered at least one transaction and never
    handed out an out-of-sequence or duplicated in-flight inner phase."""
    if not result.ppb:
        raise ValueError("phase consistency needs an exploration run with PPB tagging")
    return not result.phase_violations and result.serialized > 0


def format_result(res: ExploreResult) -> str:
    lines = [
        f"cores={res.cores} blocks={res.blocks} mode={'ppb' if res.ppb else 'baseline'}",
        f"states_visited={res.states_visited} transitions={res.transitions} "
        f"terminal={res.terminal_states} elapsed={res.elapsed:.1f}s",
        f"violations={len(res.violations)} phase_violations={len(res.phase_violations)}",
    ]
    for v in res.violations + res.phase_violations:
        lines.append(v.format())
    return "\n".join(lines)
