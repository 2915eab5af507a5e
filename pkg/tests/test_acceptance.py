"""Acceptance suite. Each test prints one ``ACCEPT <n> PASS|FAIL`` line.

The hotspot runs and the 3x2 explorations are shared through module
fixtures, so the whole file takes roughly 20 minutes on one core.
"""

import io
import random
import time

import pytest

from ppbsim.checker import check_phase_consistency, explore
from ppbsim.cli import main
from ppbsim.config import SystemConfig
from ppbsim.noc.network import Network
from ppbsim.phase import PhaseTag, Winner, compare_priority, decode_tag
from ppbsim.protocol.types import CoherenceMessage, MessageKind as K, l1, l2
from ppbsim.system import System, simulate
from ppbsim.workload import gen_race, gen_synthetic

pytestmark = pytest.mark.slow

SEEDS = (1, 2, 3, 4, 5)
CHECK_BUDGET = 300.0


def verdict(capsys, n, title, ok, detail=""):
    with capsys.disabled():
        print(f"\nACCEPT {n:2d} {'PASS' if ok else 'FAIL'}  {title}  {detail}".rstrip())
    assert ok, detail


# -- shared runs ----------------------------------------------------------------

@pytest.fixture(scope="module")
def explorations():
    out = {}
    for cores, blocks in ((2, 1), (3, 2)):
        for ppb in (False, True):
            t = time.perf_counter()
            res = explore(cores, blocks, ppb=ppb)
            out[cores, blocks, ppb] = (res, time.perf_counter() - t)
    return out


def hotspot_trace(seed):
    return gen_synthetic("hotspot", seed=seed, cores=16, hot_blocks=64, write_fraction=0.3,
                         hot_fraction=1.0, footprint=256 * 1024, refs_per_core=6250)


@pytest.fixture(scope="module")
def hotspot_runs():
    runs = {}
    for seed in SEEDS:
        trace = hotspot_trace(seed)
        assert len(trace) >= 100_000
        runs[seed] = tuple(simulate(SystemConfig(mode=m, seed=seed), trace) for m in ("baseline", "ppb"))
    return runs


# -- criteria -------------------------------------------------------------------

def test_01_checker_clean_within_budget(capsys, explorations):
    parts, ok = [], True
    for (cores, blocks, ppb), (res, secs) in sorted(explorations.items()):
        good = res.ok and secs < CHECK_BUDGET
        ok &= good
        parts.append(f"{cores}x{blocks}/{'ppb' if ppb else 'base'}: {res.states_visited} states "
                     f"{len(res.violations)} viol {secs:.0f}s")
    capsys.readouterr()
    ok &= main(["check", "--cores", "2", "--blocks", "1", "--mode", "ppb"]) == 0
    capsys.readouterr()
    verdict(capsys, 1, "exhaustive check 2x1 and 3x2, both modes", ok, "; ".join(parts))


def test_02_phase_consistency(capsys, explorations):
    runs = [explorations[2, 1, True][0], explorations[3, 2, True][0],
            explore(2, 1, ppb=True, l1_evictions=1, l2_evictions=1)]
    ok = all(check_phase_consistency(r) for r in runs)
    detail = ", ".join(f"{r.cores}x{r.blocks}: {r.serialized} orderings" for r in runs)
    verdict(capsys, 2, "inner phases consecutive per address", ok, detail)


def _oracle(a, b):
    ao, ai, bo, bi = a >> 6, a & 63, b >> 6, b & 63
    if ao != bo:
        return Winner.A if ao > bo else Winner.B
    if ao != 2:
        return Winner.TIE
    d = (bi - ai) % 64
    if d in (0, 32):
        return Winner.TIE
    return Winner.A if d < 32 else Winner.B


def test_03_comparator_oracle(capsys):
    bad = sum(compare_priority(decode_tag(a), decode_tag(b)) is not _oracle(a, b)
              for a in range(256) for b in range(256))
    verdict(capsys, 3, "compare_priority vs brute-force oracle", bad == 0, f"65536 pairs, {bad} mismatches")


def test_04_zero_load_latency(capsys):
    seen, ok = [], True
    for ppb in (False, True):
        for dst, hops in ((1, 1), (2, 2), (3, 3)):
            net = Network(4, 4, ppb=ppb)
            m = CoherenceMessage(K.GetS, 0, l1(0), l2(dst), tag=PhaseTag(1, 0) if ppb else None)
            pkt = net.send(m, 0, dst, 0)
            t = 0
            while not net.idle():
                net.deliver(t)
                net.step(t)
                t += 1
            lat = pkt.dest_arrival - pkt.inject_cycle
            ok &= pkt.hops == hops and lat == 6 * hops
            seen.append(f"{'ppb' if ppb else 'base'} H={hops}:{lat}")
    verdict(capsys, 4, "zero-load latency 6H", ok, " ".join(seen))


def test_05_directional_effect(capsys, hotspot_runs):
    strict_t = strict_s = 0
    ok = True
    rows = []
    agg = {"baseline": [0, 0], "ppb": [0, 0]}
    for seed, (base, ppb) in sorted(hotspot_runs.items()):
        ok &= ppb.unnecessary_transient <= base.unnecessary_transient and ppb.l2_stalls <= base.l2_stalls
        strict_t += ppb.unnecessary_transient < base.unnecessary_transient
        strict_s += ppb.l2_stalls < base.l2_stalls
        for rep in (base, ppb):
            for phase in (2, 3):
                s, n = rep.noc_delay_by_phase.get(phase, (0, 0))
                agg[rep.mode][0] += s
                agg[rep.mode][1] += n
        rows.append(f"seed {seed}: transient {base.unnecessary_transient}->{ppb.unnecessary_transient} "
                    f"stalls {base.l2_stalls}->{ppb.l2_stalls} "
                    f"noc23 {base.noc_delay_phase23_mean:.3f}->{ppb.noc_delay_phase23_mean:.3f}")
    ok &= strict_t >= 4 and strict_s >= 4
    noc_base = agg["baseline"][0] / agg["baseline"][1]
    noc_ppb = agg["ppb"][0] / agg["ppb"][1]
    ok &= noc_ppb < noc_base
    tb = sum(b.unnecessary_transient for b, _ in hotspot_runs.values())
    tp = sum(p.unnecessary_transient for _, p in hotspot_runs.values())
    sb = sum(b.l2_stalls for b, _ in hotspot_runs.values())
    sp = sum(p.l2_stalls for _, p in hotspot_runs.values())
    with capsys.disabled():
        for r in rows:
            print("\n   " + r, end="")
        print(f"\n   transient reduction {100 * (tb - tp) / tb:.1f}% (reference 24%), "
              f"stall reduction {100 * (sb - sp) / sb:.1f}% (reference 19%), "
              f"outer-2/3 NoC delay {noc_base:.4f} -> {noc_ppb:.4f}", end="")
    verdict(capsys, 5, "hotspot: PPB reduces transients and stalls", ok,
            f"strict transient {strict_t}/5, strict stalls {strict_s}/5")


def test_06_private_histograms_identical(capsys):
    ok, same = True, 0
    for seed in SEEDS:
        trace = gen_synthetic("private", seed=seed, cores=16, refs_per_core=400)
        a = simulate(SystemConfig(seed=seed), trace)
        b = simulate(SystemConfig(mode="ppb", seed=seed), trace)
        ok &= a.txn_delay_hist == b.txn_delay_hist
        same += a.txn_delay_hist == b.txn_delay_hist
    verdict(capsys, 6, "private pattern: identical delay histograms", ok, f"{same}/{len(SEEDS)} seeds")


def test_07_starvation_bound(capsys, hotspot_runs):
    bound = 64 + 8 * 5
    ages = [p.max_wait_age for _, p in hotspot_runs.values()]
    # saturating random traffic with mixed tags, straight into the mesh
    rng = random.Random(11)
    net = Network(4, 4, ppb=True)
    t = 0
    for i in range(3000):
        src, dst = rng.sample(range(16), 2)
        kind = rng.choice([K.GetS, K.Inv, K.Data, K.MemData, K.InvAck])
        net.send(CoherenceMessage(kind, rng.randrange(16) * 64, l1(src), l2(dst),
                                  tag=PhaseTag(rng.randint(1, 3), rng.randrange(64))), src, dst, t)
        if i % 3 == 2:
            net.deliver(t)
            net.step(t)
            t += 1
    while not net.idle():
        net.deliver(t)
        net.step(t)
        t += 1
    ages.append(net.max_wait_age())
    verdict(capsys, 7, f"max wait age <= {bound}", max(ages) <= bound, f"observed max {max(ages)}")


def test_08_byte_identical_outputs(capsys):
    trace = gen_synthetic("hotspot", seed=3, cores=16, refs_per_core=300, hot_blocks=16, hot_fraction=0.8)
    ok = True
    for mode in ("baseline", "ppb"):
        outs = []
        for _ in range(2):
            log = io.StringIO()
            rep = System(SystemConfig(mode=mode, seed=3), flit_log=log).run(trace)
            outs.append((rep.to_json(), rep.to_csv(), log.getvalue()))
        ok &= outs[0] == outs[1] and len(outs[0][2]) > 0
    verdict(capsys, 8, "identical inputs give byte-identical reports and flit logs", ok)


def test_09_conservation(capsys):
    checked = 0
    for pattern in ("uniform", "hotspot", "producer_consumer", "private"):
        trace = gen_synthetic(pattern, seed=4, cores=16, refs_per_core=200, hot_blocks=8)
        for mode in ("baseline", "ppb"):
            sys = System(SystemConfig(mode=mode, debug=True))
            rep = sys.run(trace)  # raises on any conservation failure
            sys.check_conservation()
            assert rep.messages_sent == rep.messages_received and rep.flits_total == rep.flits_ejected
            checked += 1
    verdict(capsys, 9, "conservation at drain", checked == 8, f"{checked} runs")


def test_10_race_trace(capsys):
    ok, rows = True, []
    for seed in SEEDS:
        trace = gen_race(seed)
        base = simulate(SystemConfig(seed=seed), trace).unnecessary_transient
        ppb = simulate(SystemConfig(mode="ppb", seed=seed), trace).unnecessary_transient
        ok &= base >= 1 and ppb <= base
        rows.append(f"{base}->{ppb}")
    verdict(capsys, 10, "directed race: baseline hits the transient, PPB no worse", ok, " ".join(rows))
