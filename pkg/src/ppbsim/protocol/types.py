from __future__ import annotations

import enum
from dataclasses import dataclass, field
from typing import NamedTuple, Optional

from ..phase import PhaseTag

BLOCK_SIZE = 64


class ProtocolError(RuntimeError):
    """A controller received a message with no legal transition."""


def block_align(addr: int, block_size: int = BLOCK_SIZE) -> int:
    return addr - (addr % block_size)


class NodeKind(enum.IntEnum):
    L1 = 0
    L2 = 1
    MEM = 2


class Node(NamedTuple):
    kind: NodeKind
    index: int

    def __str__(self):
        return f"{self.kind.name}{self.index}"


def l1(i: int) -> Node:
    return Node(NodeKind.L1, i)


def l2(i: int) -> Node:
    return Node(NodeKind.L2, i)


def mem(i: int) -> Node:
    return Node(NodeKind.MEM, i)


class MessageKind(enum.IntEnum):
    GetS = 0
    GetM = 1
    PutM = 2
    FwdGetS = 3
    FwdGetM = 4
    Inv = 5
    InvAck = 6
    Data = 7
    DataExcl = 8
    WBAck = 9
    Unblock = 10
    MemRead = 11
    MemWriteBack = 12
    MemData = 13

    @property
    def has_data(self) -> bool:
        return self in DATA_KINDS

    @property
    def is_request(self) -> bool:
        return self in REQUEST_KINDS


DATA_KINDS = frozenset(
    {MessageKind.Data, MessageKind.DataExcl, MessageKind.MemData, MessageKind.PutM, MessageKind.MemWriteBack}
)
REQUEST_KINDS = frozenset({MessageKind.GetS, MessageKind.GetM, MessageKind.PutM})
MEMORY_KINDS = frozenset({MessageKind.MemRead, MessageKind.MemWriteBack, MessageKind.MemData})


@dataclass(slots=True, eq=False)
class CoherenceMessage:
    kind: MessageKind
    addr: int
    src: Node
    dst: Node
    requestor: Optional[int] = None  # core index
    ack_count: int = 0
    payload: Optional[int] = None
    tag: Optional[PhaseTag] = None
    dirty: bool = False
    id: int = 0
    # bookkeeping filled in by the simulator; never read by protocol logic
    parent: Optional["CoherenceMessage"] = field(default=None, repr=False)
    created: int = -1
    ready: int = -1
    injected: int = -1
    delivered: int = -1
    handled: int = -1
    stalled: bool = False
    local: bool = False  # same-tile hand-off, never entered the NoC

    def key(self) -> tuple:
        """Protocol-relevant fields only, as a sortable tuple of ints."""
        return (
            int(self.kind),
            self.addr,
            int(self.src.kind),
            self.src.index,
            int(self.dst.kind),
            self.dst.index,
            -1 if self.requestor is None else self.requestor,
            self.ack_count,
            -1 if self.payload is None else self.payload,
            -1 if self.tag is None else (self.tag.outer << 6) | self.tag.inner,
            int(self.dirty),
        )

    def describe(self) -> str:
        s = f"{self.kind.name}[{self.addr:#x}] {self.src}->{self.dst}"
        if self.requestor is not None:
            s += f" req=P{self.requestor}"
        if self.kind in (MessageKind.Data, MessageKind.DataExcl):
            s += f" acks={self.ack_count}"
        if self.payload is not None:
            s += f" val={self.payload}"
        if self.tag is not None:
            s += f" tag={self.tag}"
        return s


def message_from_key(k: tuple) -> CoherenceMessage:
    from ..phase import decode_tag

    return CoherenceMessage(
        kind=MessageKind(k[0]),
        addr=k[1],
        src=Node(NodeKind(k[2]), k[3]),
        dst=Node(NodeKind(k[4]), k[5]),
        requestor=None if k[6] < 0 else k[6],
        ack_count=k[7],
        payload=None if k[8] < 0 else k[8],
        tag=None if k[9] < 0 else decode_tag(k[9]),
        dirty=bool(k[10]),
    )


class L1State(enum.IntEnum):
    I = 0
    S = 1
    E = 2
    M = 3
    IS_D = 4
    IM_AD = 5
    IM_A = 6
    SM_AD = 7
    SM_A = 8
    MI_A = 9
    EI_A = 10
    SI_A = 11
    II_A = 12

    @property
    def stable(self) -> bool:
        return self <= L1State.M

    @property
    def readable(self) -> bool:
        return L1State.S <= self <= L1State.M

    @property
    def evicting(self) -> bool:
        return self >= L1State.MI_A


class DirState(enum.IntEnum):
    Invalid = 0
    Shared = 1
    Exclusive = 2
    Busy_RD = 3
    Busy_WR = 4
    Busy_WB = 5
    Busy_MEM = 6

    @property
    def busy(self) -> bool:
        return self >= DirState.Busy_RD


class Op(enum.Enum):
    LOAD = "load"
    STORE = "store"
    EVICT = "evict"


class Mshr(NamedTuple):
    op: Op
    acks_outstanding: int = 0  # signed: InvAcks may arrive before the Data that carries the count
    data_arrived: bool = False
    birth_cycle: int = 0
    store_value: Optional[int] = None
    invalidated: bool = False  # Inv consumed while waiting for data


class L1Line(NamedTuple):
    state: L1State = L1State.I
    value: int = 0
    mshr: Optional[Mshr] = None


class Pending(NamedTuple):
    """Directory-side bookkeeping for the transaction a Busy entry waits on."""

    requestor: int
    kind: MessageKind
    tag: Optional[PhaseTag] = None
    exclusive: bool = False  # requestor ends up sole owner
    need_unblock: bool = True
    need_data: bool = False  # owner writeback copy still expected
    former_owner: Optional[int] = None


class DirEntry(NamedTuple):
    state: DirState = DirState.Invalid
    sharers: int = 0  # presence bit vector over cores
    owner: Optional[int] = None
    modified: bool = False
    value: int = 0  # L2 copy of the block
    pending: Optional[Pending] = None


def bits(mask: int):
    i = 0
    while mask:
        if mask & 1:
            yield i
        mask >>= 1
        i += 1


def popcount(mask: int) -> int:
    return bin(mask).count("1")
