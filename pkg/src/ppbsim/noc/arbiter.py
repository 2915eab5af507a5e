"""Arbiters shared by the NI, the VC allocator and the switch allocator."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple, Optional, Sequence

from ..phase import PhaseTag, outranks


class Candidate(NamedTuple):
    slot: int
    tag: Optional[PhaseTag] = None
    age: int = 0
    addr: Optional[int] = None  # None compares as "same block" for every pair


@dataclass
class ArbiterState:
    size: int
    pointer: int = 0
    threshold: Optional[int] = 64  # None disables aging
    max_age_seen: int = 0

    def __post_init__(self):
        if self.size < 1:
            raise ValueError("arbiter needs at least one slot")
        if not 0 <= self.pointer < self.size:
            raise ValueError("round-robin pointer out of range")


def _rr_order(cands: Sequence[Candidate], pointer: int, size: int):
    return sorted(cands, key=lambda c: (c.slot - pointer) % size)


def arbitrate(candidates: Sequence[Candidate], st: ArbiterState, use_priority: bool = True) -> int:
    """Pick a winning slot and advance the round-robin pointer past it.

    Candidates whose wait age reached the threshold are served first (oldest
    first). Otherwise the highest priority wins; equal priorities, and
    everything when ``use_priority`` is off, go round-robin.
    """
    if not candidates:
        raise ValueError("arbitrate needs at least one candidate")
    order = _rr_order(candidates, st.pointer, st.size)
    aged = []
    if st.threshold is not None:
        aged = [c for c in order if c.age >= st.threshold]
    if aged:
        best = aged[0]
        for c in aged[1:]:
            if c.age > best.age:
                best = c
    elif use_priority:
        best = order[0]
        for c in order[1:]:
            if outranks(c.tag, c.addr, best.tag, best.addr):
                best = c
    else:
        best = order[0]
    st.pointer = (best.slot + 1) % st.size
    return best.slot


class RoundRobinArbiter:
    """Baseline arbiter: plain round-robin, no priorities, no aging."""

    def __init__(self, size: int):
        self.state = ArbiterState(size, threshold=None)

    def pick(self, candidates: Sequence[Candidate]) -> int:
        return arbitrate(candidates, self.state, use_priority=False)


class PhasePriorityArbiter:
    """Priority arbiter with an anti-starvation threshold."""

    def __init__(self, size: int, threshold: Optional[int] = 64):
        self.state = ArbiterState(size, threshold=threshold)

    def pick(self, candidates: Sequence[Candidate]) -> int:
        return arbitrate(candidates, self.state, use_priority=True)


def make_arbiter(size: int, ppb: bool, threshold: Optional[int]):
    return PhasePriorityArbiter(size, threshold) if ppb else RoundRobinArbiter(size)
