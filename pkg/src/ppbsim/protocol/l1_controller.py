"""L1 cache controller: blocking MESI with explicit transient states.

Every function here is pure: it takes the current line record (``None`` for
a line that is not present, i.e. state I) plus the stimulus and returns the
new record together with the messages to send.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

from ..phase import PRE_ORDER, PhaseTag
from .types import (
    CoherenceMessage,
    L1Line,
    L1State,
    MessageKind as K,
    Mshr,
    Node,
    NodeKind,
    Op,
    ProtocolError,
    l1,
)

S = L1State

# named pathology counters; "inv_in_is_d" is the unnecessary-transient metric
INV_IN_IS_D = "inv_in_is_d"
INV_IN_SM_AD = "inv_in_sm_ad"
INV_IN_SI_A = "inv_in_si_a"
FWD_IN_EVICT = "fwd_in_evicting"

_REQUEST_TAG = PhaseTag(PRE_ORDER, 0)


@dataclass(slots=True)
class L1Result:
    line: Optional[L1Line]
    msgs: list = field(default_factory=list)
    events: list = field(default_factory=list)
    retired: Optional[Op] = None
    value: Optional[int] = None
    hit: bool = False
    retry: bool = False


def _new(kind, addr, core, dst, ppb, **kw) -> CoherenceMessage:
    return CoherenceMessage(kind, addr, l1(core), dst, tag=_REQUEST_TAG if ppb else None, **kw)


def _reply(cause: CoherenceMessage, kind, core, dst, **kw) -> CoherenceMessage:
    # acknowledgments and owner data inherit the tag of the message that spawned them
    m = CoherenceMessage(kind, cause.addr, l1(core), dst, tag=cause.tag, **kw)
    m.parent = cause
    return m


def _state(line):
    return S.I if line is None else line.state


def l1_handle_core_request(
    line: Optional[L1Line],
    core: int,
    op: Op,
    addr: int,
    home: Node,
    store_value: Optional[int] = None,
    cycle: int = 0,
    ppb: bool = False,
) -> L1Result:
    st = _state(line)
    if not st.stable:
        return L1Result(line, retry=True)
    if op is Op.LOAD:
        if st.readable:
            return L1Result(line, retired=Op.LOAD, value=line.value, hit=True)
        mshr = Mshr(Op.LOAD, birth_cycle=cycle)
        return L1Result(
            L1Line(S.IS_D, 0, mshr),
            [_new(K.GetS, addr, core, home, ppb, requestor=core)],
        )
    if op is not Op.STORE:
        raise ValueError(f"core request must be a load or store, got {op}")
    if st in (S.M, S.E):
        # silent E -> M upgrade
        return L1Result(L1Line(S.M, store_value), retired=Op.STORE, value=store_value, hit=True)
    mshr = Mshr(Op.STORE, birth_cycle=cycle, store_value=store_value)
    nxt = S.SM_AD if st is S.S else S.IM_AD
    value = line.value if line is not None else 0
    return L1Result(
        L1Line(nxt, value, mshr),
        [_new(K.GetM, addr, core, home, ppb, requestor=core)],
    )


def l1_evict(line: L1Line, core: int, addr: int, home: Node, cycle: int = 0, ppb: bool = False) -> L1Result:
    """Start a replacement of a stable S/E/M line."""
    to = {S.S: S.SI_A, S.E: S.EI_A, S.M: S.MI_A}.get(_state(line))
    if to is None:
        raise ProtocolError(f"P{core}: cannot evict {addr:#x} in state {_state(line).name}")
    msg = _new(K.PutM, addr, core, home, ppb, requestor=core, payload=line.value, dirty=line.state is S.M)
    return L1Result(L1Line(to, line.value, Mshr(Op.EVICT, birth_cycle=cycle)), [msg])


def _complete_write(line: L1Line, mshr: Mshr, cause, core, home) -> L1Result:
    return L1Result(
        L1Line(S.M, mshr.store_value),
        [_reply(cause, K.Unblock, core, home, requestor=core)],
        retired=Op.STORE,
        value=mshr.store_value,
    )


def _no_row(core, line, msg):
    raise ProtocolError(f"P{core}: no transition for {msg.describe()} in state {_state(line).name}")


def l1_handle_message(
    line: Optional[L1Line],
    core: int,
    msg: CoherenceMessage,
    home: Node,
    cycle: int = 0,
    mutations: frozenset = frozenset(),
) -> L1Result:
    st = _state(line)
    k = msg.kind
    mshr = line.mshr if line is not None else None

    if st is S.IS_D:
        if k is K.Data or k is K.DataExcl:
            owner_data = msg.src.kind is NodeKind.L1
            need_unblock = k is K.DataExcl or owner_data
            if mshr.invalidated:
                if need_unblock:
                    # directory would have been busy; an Inv cannot have overtaken this data
                    _no_row(core, line, msg)
                return L1Result(None, retired=Op.LOAD, value=msg.payload)
            out = [_reply(msg, K.Unblock, core, home, requestor=core)] if need_unblock else []
            nxt = S.E if k is K.DataExcl else S.S
            return L1Result(L1Line(nxt, msg.payload), out, retired=Op.LOAD, value=msg.payload)
        if k is K.Inv:
            if "drop_inv_in_is_d" in mutations:
                _no_row(core, line, msg)
            # consume the data once when it arrives, then drop to I
            return L1Result(
                line._replace(mshr=mshr._replace(invalidated=True)),
                [_reply(msg, K.InvAck, core, l1(msg.requestor), requestor=msg.requestor)],
                [INV_IN_IS_D],
            )
        _no_row(core, line, msg)

    if st in (S.IM_AD, S.SM_AD, S.IM_A, S.SM_A):
        if k is K.Data and st in (S.IM_AD, S.SM_AD):
            m2 = mshr._replace(acks_outstanding=mshr.acks_outstanding + msg.ack_count, data_arrived=True)
            if m2.acks_outstanding == 0:
                return _complete_write(line, m2, msg, core, home)
            nxt = S.SM_A if st is S.SM_AD else S.IM_A
            return L1Result(L1Line(nxt, msg.payload, m2))
        if k is K.InvAck:
            m2 = mshr._replace(acks_outstanding=mshr.acks_outstanding - 1)
            if m2.data_arrived and m2.acks_outstanding == 0:
                return _complete_write(line, m2, msg, core, home)
            return L1Result(line._replace(mshr=m2))
        if k is K.Inv and st is S.SM_AD:
            # another writer was ordered first; our copy is gone but the GetM stands
            return L1Result(
                L1Line(S.IM_AD, line.value, mshr),
                [_reply(msg, K.InvAck, core, l1(msg.requestor), requestor=msg.requestor)],
                [INV_IN_SM_AD],
            )
        _no_row(core, line, msg)

    if st is S.S:
        if k is K.Inv:
            return L1Result(None, [_reply(msg, K.InvAck, core, l1(msg.requestor), requestor=msg.requestor)])
        _no_row(core, line, msg)

    if st in (S.E, S.M, S.MI_A, S.EI_A):
        evicting = st in (S.MI_A, S.EI_A)
        dirty = st in (S.M, S.MI_A)
        if k is K.FwdGetS:
            out = [
                _reply(msg, K.Data, core, l1(msg.requestor), requestor=msg.requestor, payload=line.value),
                _reply(msg, K.Data, core, home, requestor=msg.requestor, payload=line.value, dirty=dirty),
            ]
            if evicting:
                return L1Result(L1Line(S.SI_A, line.value, mshr), out, [FWD_IN_EVICT])
            return L1Result(L1Line(S.S, line.value), out)
        if k is K.FwdGetM:
            out = [_reply(msg, K.Data, core, l1(msg.requestor), requestor=msg.requestor, payload=line.value)]
            if evicting:
                return L1Result(L1Line(S.II_A, line.value, mshr), out, [FWD_IN_EVICT])
            return L1Result(None, out)
        if k is K.WBAck and evicting:
            return L1Result(None, retired=Op.EVICT)
        _no_row(core, line, msg)

    if st is S.SI_A:
        if k is K.Inv:
            return L1Result(
                L1Line(S.II_A, line.value, mshr),
                [_reply(msg, K.InvAck, core, l1(msg.requestor), requestor=msg.requestor)],
                [INV_IN_SI_A],
            )
        if k is K.WBAck:
            return L1Result(None, retired=Op.EVICT)
        _no_row(core, line, msg)

    if st is S.II_A and k is K.WBAck:
        return L1Result(None, retired=Op.EVICT)

    _no_row(core, line, msg)


def dump_line(addr: int, line: Optional[L1Line]) -> str:
    if line is None:
        return f"{addr:#x}: I"
    s = f"{addr:#x}: {line.state.name} val={line.value}"
    if line.mshr is not None:
        m = line.mshr
        s += f" mshr(op={m.op.value} acks={m.acks_outstanding} data={m.data_arrived} born={m.birth_cycle}"
        if m.invalidated:
            s += " inv"
        s += ")"
    return s
