"""Phase tags: the 8-bit outer/inner priority carried by coherence messages.

Outer phase 1 marks requests that have not yet reached their directory,
outer phase 2 marks traffic produced after the directory ordered the
transaction, and outer phase 3 marks L2 <-> memory traffic. The inner phase
is a per-address sequence number handed out by the directory when it
orders a transaction; an earlier transaction outranks a later one.
"""

from __future__ import annotations

import enum
from collections import OrderedDict
from dataclasses import dataclass
from typing import Iterable, Optional

OUTER_BITS = 2
INNER_BITS = 6
INNER_MOD = 1 << INNER_BITS  # 64
HALF_WINDOW = INNER_MOD // 2  # 32

UNTAGGED = 0
PRE_ORDER = 1
POST_ORDER = 2
MEMORY = 3


class Origin(enum.Enum):
    L1_PRE_ORDER = "l1_pre_order"
    DIRECTORY_POST_ORDER = "directory_post_order"
    L2_MEMORY = "l2_memory"


class Winner(enum.Enum):
    A = "a_wins"
    B = "b_wins"
    TIE = "tie"


@dataclass(frozen=True, slots=True)
class PhaseTag:
    outer: int = UNTAGGED
    inner: int = 0

    def __post_init__(self):
        if not 0 <= self.outer < (1 << OUTER_BITS):
            raise ValueError(f"outer phase {self.outer} does not fit in 2 bits")
        if not 0 <= self.inner < INNER_MOD:
            raise ValueError(f"inner phase {self.inner} does not fit in 6 bits")

    def __str__(self):
        return f"{self.outer}/{self.inner}"


def encode_tag(tag: PhaseTag) -> int:
    return (tag.outer << INNER_BITS) | tag.inner


def decode_tag(value: int) -> PhaseTag:
    value &= 0xFF
    return PhaseTag(value >> INNER_BITS, value & (INNER_MOD - 1))


def assign_outer(kind, origin: Origin) -> int:
    """Outer phase for a message leaving ``origin``.

    ``kind`` is accepted for symmetry with the call sites; the phase is a
    function of where the message sits relative to the ordering point.
    """
    if origin is Origin.L1_PRE_ORDER:
        return PRE_ORDER
    if origin is Origin.L2_MEMORY:
        return MEMORY
    return POST_ORDER


def inner_earlier(a: int, b: int) -> Optional[bool]:
    """True if ``a`` precedes ``b`` in mod-64 sequence space, False if it
    follows, None when they are equal or exactly half a window apart."""
    d = (b - a) % INNER_MOD
    if d == 0 or d == HALF_WINDOW:
        return None
    return d < HALF_WINDOW


def compare_priority(a: PhaseTag, b: PhaseTag) -> Winner:
    if a.outer != b.outer:
        return Winner.A if a.outer > b.outer else Winner.B
    if a.outer != POST_ORDER:
        return Winner.TIE
    earlier = inner_earlier(a.inner, b.inner)
    if earlier is None:
        return Winner.TIE
    return Winner.A if earlier else Winner.B


def outranks(a: Optional[PhaseTag], a_addr, b: Optional[PhaseTag], b_addr) -> bool:
    """Strict "a beats b" used by the NoC arbiters.

    Inner phases are only comparable between messages for the same block;
    two phase-2 messages for different blocks rank equal.
    """
    ao = a.outer if a is not None else UNTAGGED
    bo = b.outer if b is not None else UNTAGGED
    if ao != bo:
        return ao > bo
    if ao != POST_ORDER:
        return False
    if a_addr is not None and b_addr is not None and a_addr != b_addr:
        return False
    return inner_earlier(a.inner, b.inner) is True


@dataclass(slots=True)
class _InnerEntry:
    addr: int
    last_inner: int
    last_touch_cycle: int


class InnerPhaseBuffer:
    """Per-bank record of the latest inner phase handed out per address.

    Fixed capacity; on a miss with a full buffer the least recently touched
    entry is dropped and the incoming address restarts at inner 0.
    """

    def __init__(self, capacity: int = 32):
        if capacity < 1:
            raise ValueError("inner phase buffer needs at least one entry")
        self.capacity = capacity
        self._entries: "OrderedDict[int, _InnerEntry]" = OrderedDict()
        self.evictions = 0

    def __len__(self):
        return len(self._entries)

    def __contains__(self, addr):
        return addr in self._entries

    def lookup(self, addr) -> Optional[int]:
        e = self._entries.get(addr)
        return None if e is None else e.last_inner

    def next_inner(self, addr: int, cycle: int = 0) -> int:
        e = self._entries.get(addr)
        if e is not None:
            e.last_inner = (e.last_inner + 1) % INNER_MOD
            e.last_touch_cycle = cycle
            self._entries.move_to_end(addr)
            return e.last_inner
        if len(self._entries) >= self.capacity:
            self._entries.popitem(last=False)
            self.evictions += 1
        self._entries[addr] = _InnerEntry(addr, 0, cycle)
        return 0

    def entries(self):
        return [(e.addr, e.last_inner, e.last_touch_cycle) for e in self._entries.values()]

    def snapshot(self) -> tuple:
        """Hashable (addr, last_inner) pairs in recency order; used by the checker."""
        return tuple((e.addr, e.last_inner) for e in self._entries.values())

    @classmethod
    def from_snapshot(cls, capacity: int, snap: Iterable[tuple]) -> "InnerPhaseBuffer":
        buf = cls(capacity)
        for addr, inner in snap:
            buf._entries[addr] = _InnerEntry(addr, inner, 0)
        return buf
