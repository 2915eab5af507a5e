"""Synthetic trace generators and the plain-text trace format."""

from __future__ import annotations

import hashlib
import random
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, List, NamedTuple, Optional

PATTERNS = ("uniform", "hotspot", "producer_consumer", "private")


class TraceError(ValueError):
    pass


class TraceRecord(NamedTuple):
    tick: int
    core: int
    op: str  # "R" or "W"
    addr: int

    def line(self) -> str:
        return f"{self.tick} {self.core} {self.op} {self.addr:#x}"


@dataclass
class WorkloadParams:
    cores: int = 16
    footprint: int = 1 << 20  # bytes
    write_fraction: float = 0.3
    hot_fraction: float = 0.5
    hot_blocks: int = 64
    refs_per_core: int = 1000
    issue_gap: int = 1
    block_size: int = 64

    def validate(self) -> "WorkloadParams":
        if self.cores < 1 or self.refs_per_core < 0 or self.issue_gap < 0:
            raise ValueError("cores must be positive; refs_per_core and issue_gap non-negative")
        if self.footprint <= 0 or self.footprint % self.block_size:
            raise ValueError("footprint must be a positive multiple of the block size")
        if not 0.0 <= self.write_fraction <= 1.0 or not 0.0 <= self.hot_fraction <= 1.0:
            raise ValueError("fractions must lie in [0, 1]")
        if self.hot_blocks < 1:
            raise ValueError("hot_blocks must be positive")
        return self


def _sorted(recs: Iterable[TraceRecord]) -> List[TraceRecord]:
    return sorted(recs, key=lambda r: (r.tick, r.core))


def gen_synthetic(pattern: str, params: Optional[WorkloadParams] = None, seed: int = 1,
                  **overrides) -> List[TraceRecord]:
    """Generate a trace; ``overrides`` patch individual ``WorkloadParams`` fields."""
    if pattern not in PATTERNS:
        raise ValueError(f"unknown pattern {pattern!r}; choose from {', '.join(PATTERNS)}")
    p = params or WorkloadParams()
    if overrides:
        p = WorkloadParams(**{**p.__dict__, **overrides})
    p.validate()
    rng = random.Random(f"{pattern}:{seed}")
    bs = p.block_size
    nblocks = p.footprint // bs
    recs = []

    def op():
        return "W" if rng.random() < p.write_fraction else "R"

    if pattern == "uniform":
        for c in range(p.cores):
            for j in range(p.refs_per_core):
                recs.append(TraceRecord(j * p.issue_gap, c, op(), rng.randrange(nblocks) * bs))
    elif pattern == "hotspot":
        hot = min(p.hot_blocks, nblocks)
        for c in range(p.cores):
            for j in range(p.refs_per_core):
                if rng.random() < p.hot_fraction:
                    b = rng.randrange(hot)
                else:
                    b = hot + rng.randrange(max(1, nblocks - hot))
                recs.append(TraceRecord(j * p.issue_gap, c, op(), b * bs))
    elif pattern == "producer_consumer":
        # each core owns a buffer; a round is "fill own buffer, then read the
        # neighbour's", so core i+1 reads what core i wrote the round before
        per = max(1, min(nblocks // p.cores, 16))
        for c in range(p.cores):
            src = (c - 1) % p.cores
            j = 0
            rnd = 0
            while j < p.refs_per_core:
                for k in range(per):
                    if j >= p.refs_per_core:
                        break
                    blk = (c * per + (k + rnd) % per) % nblocks
                    recs.append(TraceRecord(j * p.issue_gap, c, "W", blk * bs))
                    j += 1
                for k in range(per):
                    if j >= p.refs_per_core:
                        break
                    blk = (src * per + (k + rnd) % per) % nblocks
                    recs.append(TraceRecord(j * p.issue_gap, c, "R", blk * bs))
                    j += 1
                rnd += 1
    else:  # private
        # block k*cores + c is homed at bank c, the core's own tile
        per = max(1, nblocks // p.cores)
        for c in range(p.cores):
            for j in range(p.refs_per_core):
                b = rng.randrange(per) * p.cores + c
                recs.append(TraceRecord(j * p.issue_gap, c, op(), b * bs))
    return _sorted(recs)


def mesh_distance(a: int, b: int, mesh_x: int) -> int:
    return abs(a % mesh_x - b % mesh_x) + abs(a // mesh_x - b // mesh_x)


def gen_race(seed: int = 1, *, mesh_x: int = 4, mesh_y: int = 4, rounds: int = 24, spacing: int = 1500,
             block_size: int = 64, background: int = 0) -> List[TraceRecord]:
    """Directed read/write race on freshly shared blocks.

    Each round picks a block, lets two cores read it so the directory holds
    it Shared, then has a far reader issue a load with a writer's store
    right behind it. The reader's Data and the writer's Inv leave the home
    bank back to back and race to the reader. ``background`` adds that
    many uniform random loads per core per round to load the network.
    """
    ncores = mesh_x * mesh_y
    if ncores < 4:
        raise ValueError("the race needs at least four cores")
    rng = random.Random(f"race:{seed}")
    recs = []
    for r in range(rounds):
        home = rng.randrange(ncores)
        blk = (r + 1) * ncores * 4 + home  # fresh block, homed at ``home``
        addr = blk * block_size
        others = [c for c in range(ncores) if c != home]
        far = max(mesh_distance(c, home, mesh_x) for c in others)
        reader = rng.choice([c for c in others if mesh_distance(c, home, mesh_x) >= max(2, far - 1)])
        rest = [c for c in others if c != reader]
        rng.shuffle(rest)
        s1, s2 = rest[0], rest[1]
        # the writer should reach the bank just after the reader
        d_reader = mesh_distance(reader, home, mesh_x)
        writers = sorted(rest[2:], key=lambda c: abs(mesh_distance(c, home, mesh_x) - d_reader))
        writer = writers[0] if writers else rest[2 % len(rest)]
        t0 = r * spacing
        recs.append(TraceRecord(t0, s1, "R", addr))
        recs.append(TraceRecord(t0 + 400, s2, "R", addr))
        t1 = t0 + 800 + rng.randrange(4)
        lag = 6 * (d_reader - mesh_distance(writer, home, mesh_x)) + 1 + rng.randrange(3)
        recs.append(TraceRecord(t1, reader, "R", addr))
        recs.append(TraceRecord(max(t0 + 800, t1 + lag), writer, "W", addr))
        for c in range(ncores):
            for k in range(background):
                b = rng.randrange(1 << 12) * ncores * 4 + rng.randrange(ncores) + 2 * ncores
                recs.append(TraceRecord(t0 + 700 + rng.randrange(200), c, "R", b * block_size))
    return _sorted(recs)


def save_trace(trace: Iterable[TraceRecord], path) -> None:
    Path(path).write_text(format_trace(trace))


def format_trace(trace: Iterable[TraceRecord]) -> str:
    return "".join(r.line() + "\n" for r in trace)


def parse_trace(text: str, source: str = "<trace>") -> List[TraceRecord]:
    out = []
    last = {}
    for n, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        parts = line.split()
        if len(parts) != 4:
            raise TraceError(f"{source}:{n}: expected 'tick core R|W 0xADDR', got {raw!r}")
        tick_s, core_s, op, addr_s = parts
        if op not in ("R", "W"):
            raise TraceError(f"{source}:{n}: bad op {op!r} (expected R or W)")
        try:
            tick, core = int(tick_s), int(core_s)
            addr = int(addr_s, 16) if addr_s.lower().startswith("0x") else int(addr_s)
        except ValueError:
            raise TraceError(f"{source}:{n}: bad number in {raw!r}") from None
        if tick < 0 or core < 0 or addr < 0:
            raise TraceError(f"{source}:{n}: negative field in {raw!r}")
        if tick < last.get(core, 0):
            raise TraceError(f"{source}:{n}: tick goes backwards for core {core}")
        last[core] = tick
        out.append(TraceRecord(tick, core, op, addr))
    return out


def load_trace(path) -> List[TraceRecord]:
    p = Path(path)
    return parse_trace(p.read_text(), str(p))


def fingerprint(trace: Iterable[TraceRecord]) -> str:
    return hashlib.sha256(format_trace(trace).encode()).hexdigest()[:16]
