"""Read-only latency audit over a flit log.

Log lines look like ``cycle,node,event,packet.flit,vc,outer/inner`` with
events ``inject``, ``arrive``, ``va``, ``sa`` and ``eject``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict


class FlitLogError(ValueError):
    pass


@dataclass
class _Pkt:
    inject: int = -1
    head_arrival: int = -1
    tail_eject: int = -1
    injected: int = 0
    ejected: int = 0
    hops: int = 0
    src: int = -1
    priority: str = "0/0"


def parse_line(line: str, n: int):
    parts = line.strip().split(",")
    if len(parts) != 6:
        raise FlitLogError(f"line {n}: expected 6 comma-separated fields")
    try:
        t, node = int(parts[0]), int(parts[1])
        pid, flit = (int(x) for x in parts[3].split("."))
        vc = int(parts[4])
    except ValueError:
        raise FlitLogError(f"line {n}: malformed number") from None
    return t, node, parts[2], pid, flit, vc, parts[5]


def audit_flit_log(path) -> dict:
    pkts: Dict[int, _Pkt] = {}
    with Path(path).open() as fh:
        for n, line in enumerate(fh, 1):
            if not line.strip():
                continue
            t, node, ev, pid, flit, vc, pr = parse_line(line, n)
            p = pkts.setdefault(pid, _Pkt())
            if ev == "inject":
                p.injected += 1
                if flit == 0:
                    p.inject, p.src, p.priority = t, node, pr
            elif ev == "arrive":
                if flit == 0:
                    p.head_arrival = t  # the last one is the destination router
            elif ev == "sa":
                if flit == 0:
                    p.hops += 1
            elif ev == "eject":
                p.ejected += 1
                p.tail_eject = max(p.tail_eject, t)
            elif ev != "va":
                raise FlitLogError(f"line {n}: unknown event {ev!r}")
    heads = [p.head_arrival - p.inject for p in pkts.values() if p.inject >= 0 and p.head_arrival >= 0]
    whole = [p.tail_eject - p.inject for p in pkts.values() if p.inject >= 0 and p.ejected == p.injected]
    hist: Dict[str, int] = {}
    for h in heads:
        hist[str(h)] = hist.get(str(h), 0) + 1
    by_prio: Dict[str, list] = {}
    for p in pkts.values():
        if p.inject >= 0 and p.head_arrival >= 0:
            s = by_prio.setdefault(p.priority.split("/")[0], [0, 0])
            s[0] += p.head_arrival - p.inject
            s[1] += 1
    injected = sum(p.injected for p in pkts.values())
    ejected = sum(p.ejected for p in pkts.values())
    return {
        "packets": len(pkts),
        "flits_injected": injected,
        "flits_ejected": ejected,
        "complete": injected == ejected,
        "mean_head_latency": sum(heads) / len(heads) if heads else 0.0,
        "max_head_latency": max(heads) if heads else 0,
        "mean_packet_latency": sum(whole) / len(whole) if whole else 0.0,
        "head_latency_hist": dict(sorted(hist.items(), key=lambda kv: int(kv[0]))),
        "mean_head_latency_by_outer": {k: v[0] / v[1] for k, v in sorted(by_prio.items())},
    }
