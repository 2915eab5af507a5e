"""Directory controller embedded in each L2 bank.

The directory is the ordering point. Clean reads of a Shared (or
L2-resident, uncached) block are two-hop and do not block the entry; every
grant of exclusive permission, every read that must be forwarded to an
owner and every L2 fill blocks the entry in a Busy state until the
requestor's Unblock (and the owner's writeback copy, when one is owed)
arrives. Requests that find the entry Busy are stalled by the caller.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable, Optional

from ..phase import MEMORY, POST_ORDER, PhaseTag
from .types import (
    CoherenceMessage,
    DirEntry,
    DirState,
    MessageKind as K,
    Node,
    NodeKind,
    Pending,
    ProtocolError,
    bits,
    l1,
    popcount,
)

D = DirState
_MEM_TAG = PhaseTag(MEMORY, 0)


@dataclass(slots=True)
class DirContext:
    bank: Node
    mem_node: Callable[[int], Node]
    ppb: bool = False
    # called once per ordered transaction; returns the inner phase (PPB only)
    next_inner: Optional[Callable[[int], int]] = None
    mutations: frozenset = frozenset()


@dataclass(slots=True)
class DirResult:
    entry: Optional[DirEntry]
    msgs: list = field(default_factory=list)
    stalled: bool = False
    serialized: bool = False
    events: list = field(default_factory=list)


def _no_row(ctx, entry, msg):
    st = "absent" if entry is None else entry.state.name
    raise ProtocolError(f"{ctx.bank}: no transition for {msg.describe()} with entry {st}")


class _Out:
    """Collects outgoing messages, stamping tag and parent."""

    def __init__(self, ctx: DirContext, cause: CoherenceMessage, tag):
        self.ctx, self.cause, self.tag, self.msgs = ctx, cause, tag, []

    def send(self, kind, addr, dst, tag=None, **kw):
        m = CoherenceMessage(kind, addr, self.ctx.bank, dst, tag=tag if tag is not None else self.tag, **kw)
        m.parent = self.cause
        self.msgs.append(m)
        return m


def _grant(entry: DirEntry, req: int, kind, addr, out: _Out, tag) -> DirEntry:
    """Serve a request from the L2 copy: entry is Invalid or Shared."""
    if kind is K.GetS:
        if entry.state is D.Shared:
            out.send(K.Data, addr, l1(req), requestor=req, payload=entry.value)
            return entry._replace(sharers=entry.sharers | (1 << req), pending=None)
        out.send(K.DataExcl, addr, l1(req), requestor=req, payload=entry.value)
        return entry._replace(state=D.Busy_RD, sharers=0, owner=None,
                       pending=Pending(req, kind, tag, exclusive=True))
    # GetM
    others = entry.sharers & ~(1 << req) if entry.state is D.Shared else 0
    if "skip_inv" in out.ctx.mutations:
        others = 0
    for c in bits(others):
        out.send(K.Inv, addr, l1(c), requestor=req)
    out.send(K.Data, addr, l1(req), requestor=req, ack_count=popcount(others), payload=entry.value)
    return entry._replace(state=D.Busy_WR, pending=Pending(req, kind, tag, exclusive=True))


def _commit(entry: DirEntry) -> DirEntry:
    p = entry.pending
    if p.need_unblock or p.need_data:
        return entry
    if p.exclusive:
        return entry._replace(state=D.Exclusive, sharers=0, owner=p.requestor, pending=None)
    sharers = (1 << p.requestor) | (1 << p.former_owner)
    return entry._replace(state=D.Shared, sharers=sharers, owner=None, pending=None)


def dir_handle_message(entry: Optional[DirEntry], msg: CoherenceMessage, ctx: DirContext) -> DirResult:
    k = msg.kind
    addr = msg.addr

    if k.is_request:
        if entry is not None and entry.state.busy:
            return DirResult(entry, stalled=True)
        req = msg.requestor
        tag = None
        if ctx.ppb:
            tag = PhaseTag(POST_ORDER, ctx.next_inner(addr))
        out = _Out(ctx, msg, tag)
        res = DirResult(entry, out.msgs, serialized=True)

        if k is K.PutM:
            if entry is None:
                # stale writeback after the block left L2
                out.send(K.WBAck, addr, l1(req), requestor=req)
                return res
            if entry.state is D.Exclusive and entry.owner == req:
                entry = entry._replace(state=D.Invalid, owner=None, value=msg.payload,
                                modified=entry.modified or msg.dirty)
            elif entry.state is D.Shared and entry.sharers >> req & 1:
                left = entry.sharers & ~(1 << req)
                entry = entry._replace(sharers=left, state=D.Shared if left else D.Invalid)
            out.send(K.WBAck, addr, l1(req), requestor=req)
            res.entry = entry
            return res

        if entry is None:
            out.send(K.MemRead, addr, ctx.mem_node(addr), requestor=req, tag=_MEM_TAG if ctx.ppb else None)
            res.entry = DirEntry(D.Busy_MEM, pending=Pending(req, k, tag))
            return res

        if entry.state in (D.Invalid, D.Shared):
            res.entry = _grant(entry, req, k, addr, out, tag)
            return res

        if entry.state is D.Exclusive:
            owner = entry.owner
            if owner == req:
                _no_row(ctx, entry, msg)
            if k is K.GetS:
                out.send(K.FwdGetS, addr, l1(owner), requestor=req)
                res.entry = entry._replace(state=D.Busy_RD, pending=Pending(
                    req, k, tag, exclusive=False, need_data=True, former_owner=owner))
            else:
                out.send(K.FwdGetM, addr, l1(owner), requestor=req)
                res.entry = entry._replace(state=D.Busy_WR, pending=Pending(req, k, tag, exclusive=True))
            return res
        _no_row(ctx, entry, msg)

    if entry is None:
        _no_row(ctx, entry, msg)
    p = entry.pending

    if k is K.MemData and entry.state is D.Busy_MEM:
        filled = DirEntry(D.Invalid, value=msg.payload, modified=False)
        out = _Out(ctx, msg, p.tag)
        return DirResult(_grant(filled, p.requestor, p.kind, addr, out, p.tag), out.msgs)

    if k is K.Unblock and entry.state in (D.Busy_RD, D.Busy_WR) and msg.requestor == p.requestor:
        return DirResult(_commit(entry._replace(pending=p._replace(need_unblock=False))))

    if k is K.Data and entry.state is D.Busy_RD and p.need_data and msg.src == l1(p.former_owner):
        upd = entry._replace(value=msg.payload, modified=entry.modified or msg.dirty,
                      pending=p._replace(need_data=False))
        return DirResult(_commit(upd))

    if k is K.WBAck and entry.state is D.Busy_WB and msg.src.kind is NodeKind.MEM:
        return DirResult(None)

    _no_row(ctx, entry, msg)


def can_evict(entry: Optional[DirEntry]) -> bool:
    """Only blocks no L1 holds can leave the (inclusive) L2."""
    return entry is not None and entry.state is D.Invalid


def dir_evict(entry: DirEntry, addr: int, ctx: DirContext) -> DirResult:
    """Replace an uncached block from L2; dirty data goes back to memory."""
    if not can_evict(entry):
        raise ProtocolError(f"{ctx.bank}: cannot evict {addr:#x} in state {entry.state.name if entry else 'absent'}")
    if not entry.modified:
        return DirResult(None)
    m = CoherenceMessage(K.MemWriteBack, addr, ctx.bank, ctx.mem_node(addr), payload=entry.value,
                         dirty=True, tag=_MEM_TAG if ctx.ppb else None)
    return DirResult(entry._replace(state=D.Busy_WB, pending=None), [m])


def dump_entry(addr: int, entry: Optional[DirEntry]) -> str:
    if entry is None:
        return f"{addr:#x}: absent"
    s = f"{addr:#x}: {entry.state.name} sharers={sorted(bits(entry.sharers))} owner={entry.owner} mod={int(entry.modified)} val={entry.value}"
    if entry.pending is not None:
        p = entry.pending
        s += f" pending(P{p.requestor} {p.kind.name} unblock={p.need_unblock} data={p.need_data})"
    return s
