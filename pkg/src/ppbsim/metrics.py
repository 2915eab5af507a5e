"""Counters, histograms, the energy proxy and baseline-vs-PPB comparison."""

from __future__ import annotations

import csv
import io
import json
from dataclasses import asdict, dataclass, field, fields
from typing import Dict, Optional

from .protocol.types import MessageKind as K

# pathology counters reported under their own names
PATHOLOGIES = ("inv_in_is_d", "inv_in_sm_ad", "inv_in_si_a", "fwd_in_evicting")

_PHASE1 = frozenset({K.GetS, K.GetM, K.PutM})
_PHASE3 = frozenset({K.MemRead, K.MemWriteBack, K.MemData})


def phase_class(msg) -> int:
    """Outer phase a message belongs to, derived from its kind and source.

    Works the same in both modes, so baseline traffic can be bucketed
    like tagged PPB traffic.
    """
    k = msg.kind
    if k in _PHASE1:
        return 1
    if k in _PHASE3 or (k is K.WBAck and msg.src.kind == 2):
        return 3
    return 2


@dataclass
class StatsReport:
    mode: str = "baseline"
    seed: int = 0
    trace_fingerprint: str = ""
    config_fingerprint: str = ""
    cycles_total: int = 0
    transactions: int = 0
    loads: int = 0
    stores: int = 0
    hits: int = 0
    misses: int = 0
    core_retries: int = 0
    unnecessary_transient: int = 0
    inv_in_sm_ad: int = 0
    inv_in_si_a: int = 0
    fwd_in_evicting: int = 0
    l2_stalls: int = 0
    l1_evictions: int = 0
    l2_evictions: int = 0
    l2_set_overflows: int = 0
    mem_reads: int = 0
    mem_writes: int = 0
    messages_sent: int = 0
    messages_received: int = 0
    messages_local: int = 0
    tagged_messages: int = 0
    msg_counts: Dict[str, int] = field(default_factory=dict)
    txn_delay_hist: Dict[int, int] = field(default_factory=dict)
    noc_delay_hist: Dict[int, int] = field(default_factory=dict)
    mean_txn_delay: float = 0.0
    mean_miss_delay: float = 0.0
    delay_controller: int = 0
    delay_queue: int = 0
    delay_network: int = 0
    noc_delay_by_phase: Dict[int, list] = field(default_factory=dict)  # phase -> [sum, count]
    noc_delay_mean: float = 0.0
    noc_delay_phase23_mean: float = 0.0
    flits_total: int = 0
    flits_ejected: int = 0
    packets_injected: int = 0
    packets_ejected: int = 0
    link_traversals: int = 0
    flit_latency_mean: float = 0.0
    head_latency_mean: float = 0.0
    link_utilization_mean: float = 0.0
    link_utilization_max: float = 0.0
    buf_writes: int = 0
    buf_reads: int = 0
    xbar: int = 0
    arb_grants: int = 0
    energy_link: float = 0.0
    energy_router: float = 0.0
    dynamic_energy: float = 0.0
    max_wait_age: int = 0
    inner_buffer_evictions: int = 0

    # -- serialization --------------------------------------------------------

    def to_dict(self) -> dict:
        d = asdict(self)
        for name in ("txn_delay_hist", "noc_delay_hist"):
            d[name] = {str(k): v for k, v in sorted(d[name].items())}
        d["noc_delay_by_phase"] = {str(k): v for k, v in sorted(d["noc_delay_by_phase"].items())}
        d["msg_counts"] = dict(sorted(d["msg_counts"].items()))
        return d

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True) + "\n"

    @classmethod
    def from_dict(cls, d: dict) -> "StatsReport":
        d = dict(d)
        for name in ("txn_delay_hist", "noc_delay_hist", "noc_delay_by_phase"):
            d[name] = {int(k): v for k, v in d.get(name, {}).items()}
        known = {f.name for f in fields(cls)}
        return cls(**{k: v for k, v in d.items() if k in known})

    @classmethod
    def from_json(cls, text: str) -> "StatsReport":
        return cls.from_dict(json.loads(text))

    def scalars(self) -> Dict[str, object]:
        return {f.name: getattr(self, f.name) for f in fields(self)
                if not isinstance(getattr(self, f.name), dict)}

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "value"])
        for k, v in self.scalars().items():
            w.writerow([k, _fmt(v)])
        for k, v in sorted(self.msg_counts.items()):
            w.writerow([f"msg_count.{k}", v])
        return buf.getvalue()


def _fmt(v) -> str:
    if isinstance(v, float):
        return f"{v:.6f}"
    return str(v)


class MetricsRecorder:
    """Accumulates events; purely observational.

    With ``enabled=False`` every call is a no-op, which is how the
    observation-only property is tested.
    """

    def __init__(self, enabled: bool = True):
        self.enabled = enabled
        self.counters: Dict[str, int] = {}
        self.msg_counts: Dict[str, int] = {}
        self.txn_hist: Dict[int, int] = {}
        self.noc_hist: Dict[int, int] = {}
        self.noc_by_phase: Dict[int, list] = {}
        self.miss_delay_sum = 0
        self.delay_parts = [0, 0, 0]  # controller, queue, network
        self.tagged = 0

    def bump(self, name: str, n: int = 1) -> None:
        if self.enabled:
            self.counters[name] = self.counters.get(name, 0) + n

    def record_event(self, kind: str, payload=None, cycle: int = 0) -> None:
        if not self.enabled:
            return
        if kind == "message":
            # payload: delivered CoherenceMessage
            m = payload
            name = m.kind.name
            self.msg_counts[name] = self.msg_counts.get(name, 0) + 1
            if m.tag is not None:
                self.tagged += 1
            if m.injected >= 0 and not getattr(m, "local", False):
                d = m.delivered - m.ready
                self.noc_hist[d] = self.noc_hist.get(d, 0) + 1
                slot = self.noc_by_phase.setdefault(phase_class(m), [0, 0])
                slot[0] += d
                slot[1] += 1
        elif kind == "retire":
            # payload: (transaction, (controller, queue, network) or None)
            txn, parts = payload
            delay = txn.retire - txn.issue
            self.txn_hist[delay] = self.txn_hist.get(delay, 0) + 1
            self.bump("transactions")
            self.bump("loads" if txn.is_load else "stores")
            if txn.hit:
                self.bump("hits")
            else:
                self.bump("misses")
                self.miss_delay_sum += delay
            if parts is not None:
                for i in range(3):
                    self.delay_parts[i] += parts[i]
        else:
            self.bump(kind, 1 if payload is None else payload)


def energy(report: StatsReport, cfg) -> Dict[str, float]:
    link = report.link_traversals * cfg.e_link_per_flit_hop
    router = (report.buf_writes * cfg.e_buf_write + report.buf_reads * cfg.e_buf_read
              + report.arb_grants * cfg.e_arb + report.xbar * cfg.e_xbar)
    return {"link": link, "router": router, "total": link + router}


def build_report(rec: MetricsRecorder, net, cfg, cycles: int, *, trace_fingerprint: str = "",
                 config_fingerprint: str = "", sent: int = 0, received: int = 0, local: int = 0,
                 inner_evictions: int = 0) -> StatsReport:
    c = rec.counters
    st = net.stats
    r = StatsReport(mode=cfg.mode, seed=cfg.seed, trace_fingerprint=trace_fingerprint,
                    config_fingerprint=config_fingerprint, cycles_total=cycles)
    for name in ("transactions", "loads", "stores", "hits", "misses", "core_retries", "l2_stalls",
                 "l1_evictions", "l2_evictions", "l2_set_overflows", "mem_reads", "mem_writes"):
        setattr(r, name, c.get(name, 0))
    r.unnecessary_transient = c.get("inv_in_is_d", 0)
    for name in PATHOLOGIES[1:]:
        setattr(r, name, c.get(name, 0))
    r.messages_sent, r.messages_received, r.messages_local = sent, received, local
    r.tagged_messages = rec.tagged
    r.msg_counts = dict(rec.msg_counts)
    r.txn_delay_hist = dict(rec.txn_hist)
    r.noc_delay_hist = dict(rec.noc_hist)
    n = sum(rec.txn_hist.values())
    r.mean_txn_delay = sum(k * v for k, v in rec.txn_hist.items()) / n if n else 0.0
    r.mean_miss_delay = rec.miss_delay_sum / r.misses if r.misses else 0.0
    r.delay_controller, r.delay_queue, r.delay_network = rec.delay_parts
    r.noc_delay_by_phase = {k: list(v) for k, v in rec.noc_by_phase.items()}
    n = sum(rec.noc_hist.values())
    r.noc_delay_mean = sum(k * v for k, v in rec.noc_hist.items()) / n if n else 0.0
    s23 = sum(rec.noc_by_phase.get(p, [0, 0])[0] for p in (2, 3))
    n23 = sum(rec.noc_by_phase.get(p, [0, 0])[1] for p in (2, 3))
    r.noc_delay_phase23_mean = s23 / n23 if n23 else 0.0
    if rec.enabled:
        r.flits_total = st.flits_injected
        r.flits_ejected = st.flits_ejected
        r.packets_injected, r.packets_ejected = st.packets_injected, st.packets_ejected
        r.link_traversals = st.link_traversals
        r.flit_latency_mean = st.flit_latency_sum / st.flits_ejected if st.flits_ejected else 0.0
        r.head_latency_mean = st.head_latency_sum / st.packets_ejected if st.packets_ejected else 0.0
        links = net.links()
        if cycles and links:
            utils = [st.link_flits.get(l, 0) / cycles for l in links]
            r.link_utilization_mean = sum(utils) / len(utils)
            r.link_utilization_max = max(utils)
        r.buf_writes, r.buf_reads, r.xbar, r.arb_grants = st.buf_writes, st.buf_reads, st.xbar, st.arb_grants
        e = energy(r, cfg)
        r.energy_link, r.energy_router, r.dynamic_energy = e["link"], e["router"], e["total"]
        r.max_wait_age = net.max_wait_age()
        r.inner_buffer_evictions = inner_evictions
    return r


# -- comparison ---------------------------------------------------------------

COMPARED = (
    "unnecessary_transient", "l2_stalls", "inv_in_sm_ad", "inv_in_si_a", "fwd_in_evicting",
    "cycles_total", "mean_txn_delay", "mean_miss_delay", "noc_delay_mean", "noc_delay_phase23_mean",
    "flit_latency_mean", "link_utilization_mean", "flits_total", "link_traversals",
    "energy_link", "energy_router", "dynamic_energy", "max_wait_age",
)


class CompareError(ValueError):
    pass


@dataclass
class DeltaRow:
    metric: str
    baseline: float
    ppb: float
    reduction: Optional[float]  # fraction, None when the baseline is zero

    @property
    def reduction_text(self) -> str:
        return "n/a" if self.reduction is None else f"{self.reduction * 100:.2f}%"


@dataclass
class DeltaReport:
    trace_fingerprint: str
    seed: int
    rows: list

    def row(self, metric: str) -> DeltaRow:
        for r in self.rows:
            if r.metric == metric:
                return r
        raise KeyError(metric)

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["metric", "baseline", "ppb", "reduction"])
        for r in self.rows:
            w.writerow([r.metric, _fmt(r.baseline), _fmt(r.ppb), r.reduction_text])
        return buf.getvalue()

    def to_json(self) -> str:
        d = {
            "trace_fingerprint": self.trace_fingerprint,
            "seed": self.seed,
            "metrics": {r.metric: {"baseline": r.baseline, "ppb": r.ppb, "reduction": r.reduction_text}
                        for r in self.rows},
        }
        return json.dumps(d, indent=2, sort_keys=True) + "\n"


def reduction(base: float, new: float) -> Optional[float]:
    if base == 0:
        return None
    return (base - new) / base


def compare_reports(base: StatsReport, ppb: StatsReport) -> DeltaReport:
    if base.trace_fingerprint != ppb.trace_fingerprint:
        raise CompareError("reports come from different traces; refusing to compare")
    if base.config_fingerprint != ppb.config_fingerprint:
        raise CompareError("reports come from different configurations")
    if base.seed != ppb.seed:
        raise CompareError("reports come from different seeds")
    rows = [DeltaRow(m, getattr(base, m), getattr(ppb, m), reduction(getattr(base, m), getattr(ppb, m)))
            for m in COMPARED]
    return DeltaReport(base.trace_fingerprint, base.seed, rows)
