"""Command-line entry point: ``ppbsim {run,compare,gen-trace,check,replay}``.

Exit codes: 0 ok, 1 usage or input error, 2 simulation abort, 3 check violation.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import fields
from pathlib import Path
from typing import List, Optional

from .config import MODES, ConfigError, SystemConfig, coerce, load_config
from .metrics import CompareError, compare_reports
from .system import SimulationAbort, System
from .workload import PATTERNS, TraceError, WorkloadParams, gen_race, gen_synthetic, load_trace, save_trace

EXIT_OK, EXIT_USAGE, EXIT_ABORT, EXIT_VIOLATION = 0, 1, 2, 3


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _config_flags(p: argparse.ArgumentParser) -> None:
    g = p.add_argument_group("system configuration (each overrides the config file)")
    for f in fields(SystemConfig):
        names = [f"--{f.name}"]
        dashed = f"--{f.name.replace('_', '-')}"
        if dashed != names[0]:
            names.append(dashed)
        kw = {"dest": f"cfg_{f.name}", "default": None, "metavar": f.name.upper()}
        if f.name == "mode":
            kw["choices"] = MODES
            kw.pop("metavar")
        else:
            kw["type"] = (lambda name: lambda text: _coerce_flag(name, text))(f.name)
        g.add_argument(*names, **kw)


def _coerce_flag(name, text):
    try:
        return coerce(name, text)
    except ConfigError as e:
        raise argparse.ArgumentTypeError(str(e)) from None


def _build_config(args, **force) -> SystemConfig:
    overrides = {k[4:]: v for k, v in vars(args).items() if k.startswith("cfg_") and v is not None}
    overrides.update(force)
    if args.config:
        return load_config(args.config, **overrides)
    return SystemConfig(**overrides).validate()


def _out_paths(out: str):
    p = Path(out)
    if p.suffix in (".json", ".csv"):
        p = p.with_suffix("")
    return p.with_name(p.name + ".json"), p.with_name(p.name + ".csv")


def _simulate(cfg, trace, flit_log: Optional[str] = None):
    if flit_log:
        with open(flit_log, "w") as fh:
            return System(cfg, flit_log=fh).run(trace)
    return System(cfg).run(trace)


# -- commands -----------------------------------------------------------------

def cmd_run(args) -> int:
    cfg = _build_config(args)
    trace = load_trace(args.trace)
    rep = _simulate(cfg, trace, args.flit_log)
    js, cs = _out_paths(args.out)
    js.write_text(rep.to_json())
    cs.write_text(rep.to_csv())
    print(f"{cfg.mode}: {rep.transactions} transactions in {rep.cycles_total} cycles; "
          f"unnecessary_transient={rep.unnecessary_transient} l2_stalls={rep.l2_stalls} "
          f"tagged_messages={rep.tagged_messages}")
    print(f"wrote {js} and {cs}")
    return EXIT_OK


def cmd_compare(args) -> int:
    trace = load_trace(args.trace)
    base = _simulate(_build_config(args, mode="baseline"), trace)
    ppb = _simulate(_build_config(args, mode="ppb"), trace)
    delta = compare_reports(base, ppb)
    js, cs = _out_paths(args.out)
    js.write_text(delta.to_json())
    cs.write_text(delta.to_csv())
    stem = js.with_suffix("")
    Path(f"{stem}.baseline.json").write_text(base.to_json())
    Path(f"{stem}.ppb.json").write_text(ppb.to_json())
    sys.stdout.write(delta.to_csv())
    return EXIT_OK


def cmd_gen_trace(args) -> int:
    if args.pattern == "race":
        trace = gen_race(args.seed, mesh_x=args.mesh_x, mesh_y=args.cores // args.mesh_x,
                         rounds=args.rounds, block_size=args.block_size, background=args.background)
    else:
        params = WorkloadParams(cores=args.cores, footprint=args.footprint, write_fraction=args.write_fraction,
                                hot_fraction=args.hot_fraction, hot_blocks=args.hot_blocks,
                                refs_per_core=args.refs_per_core, issue_gap=args.issue_gap,
                                block_size=args.block_size)
        try:
            params.validate()
        except ValueError as e:
            raise UsageError(str(e)) from None
        trace = gen_synthetic(args.pattern, params, args.seed)
    save_trace(trace, args.out)
    print(f"wrote {len(trace)} records to {args.out}")
    return EXIT_OK


def cmd_check(args) -> int:
    from .checker import MAX_BLOCKS, MAX_CORES, check_phase_consistency, explore, format_result

    if not 1 <= args.cores <= MAX_CORES:
        raise UsageError(f"--cores must be 1..{MAX_CORES} (exhaustive search bound)")
    if not 1 <= args.blocks <= MAX_BLOCKS:
        raise UsageError(f"--blocks must be 1..{MAX_BLOCKS} (exhaustive search bound)")
    if args.ops_per_core < 1:
        raise UsageError("--ops-per-core must be positive")
    res = explore(args.cores, args.blocks, max_ops_per_core=args.ops_per_core, ppb=args.mode == "ppb",
                  l1_evictions=args.l1_evictions, l2_evictions=args.l2_evictions,
                  mutations=tuple(args.mutate or ()), inner_buffer_entries=args.inner_buffer_entries,
                  symmetry=not args.no_symmetry)
    print(format_result(res))
    ok = res.ok
    if res.ppb:
        consistent = check_phase_consistency(res)
        print(f"phase_consistency={'pass' if consistent else 'FAIL'} orderings_checked={res.serialized}")
        ok = ok and consistent
    return EXIT_OK if ok else EXIT_VIOLATION


def cmd_replay(args) -> int:
    from .replay import audit_flit_log

    summary = audit_flit_log(args.flit_log)
    text = json.dumps(summary, indent=2, sort_keys=True) + "\n"
    if args.out:
        Path(args.out).write_text(text)
    sys.stdout.write(text)
    return EXIT_OK if summary["complete"] else EXIT_ABORT


# -- parser -------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="ppbsim", description="Tiled CMP coherence + NoC simulator with phase-priority arbitration.")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    r = sub.add_parser("run", help="simulate one trace in one mode")
    r.add_argument("--config", help="key = value configuration file")
    r.add_argument("--trace", required=True)
    r.add_argument("--out", required=True, help="report path stem; writes STEM.json and STEM.csv")
    r.add_argument("--flit-log", dest="flit_log")
    _config_flags(r)
    r.set_defaults(func=cmd_run)

    c = sub.add_parser("compare", help="run baseline and PPB on the same trace and report reductions")
    c.add_argument("--config")
    c.add_argument("--trace", required=True)
    c.add_argument("--out", required=True, help="delta report stem; writes STEM.json and STEM.csv")
    _config_flags(c)
    c.set_defaults(func=cmd_compare)

    g = sub.add_parser("gen-trace", help="write a synthetic trace")
    g.add_argument("--pattern", choices=PATTERNS + ("race",), required=True)
    d = WorkloadParams()
    g.add_argument("--cores", type=int, default=d.cores)
    g.add_argument("--footprint", type=int, default=d.footprint)
    g.add_argument("--write-fraction", type=float, default=d.write_fraction)
    g.add_argument("--hot-fraction", type=float, default=d.hot_fraction)
    g.add_argument("--hot-blocks", type=int, default=d.hot_blocks)
    g.add_argument("--refs-per-core", type=int, default=d.refs_per_core)
    g.add_argument("--issue-gap", type=int, default=d.issue_gap)
    g.add_argument("--block-size", type=int, default=d.block_size)
    g.add_argument("--mesh-x", type=int, default=4, help="race pattern only")
    g.add_argument("--rounds", type=int, default=24, help="race pattern only")
    g.add_argument("--background", type=int, default=0, help="race pattern only")
    g.add_argument("--seed", type=int, default=1)
    g.add_argument("--out", required=True)
    g.set_defaults(func=cmd_gen_trace)

    k = sub.add_parser("check", help="exhaustively model-check the protocol")
    k.add_argument("--cores", type=int, default=2)
    k.add_argument("--blocks", type=int, default=1)
    k.add_argument("--mode", choices=MODES, default="baseline")
    k.add_argument("--ops-per-core", type=int, default=2)
    k.add_argument("--l1-evictions", type=int, default=0, help="L1 replacements allowed over the whole run")
    k.add_argument("--l2-evictions", type=int, default=0, help="L2 replacements allowed over the whole run")
    k.add_argument("--inner-buffer-entries", type=int, default=32)
    k.add_argument("--mutate", action="append", choices=("drop_inv_in_is_d", "skip_inv"),
                   help="check a deliberately broken protocol")
    k.add_argument("--no-symmetry", action="store_true", help="disable core/block symmetry reduction")
    k.set_defaults(func=cmd_check)

    y = sub.add_parser("replay", help="audit latencies recorded in a flit log")
    y.add_argument("--flit-log", dest="flit_log", required=True)
    y.add_argument("--out")
    y.set_defaults(func=cmd_replay)
    return p


def main(argv: Optional[List[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (UsageError, ConfigError, TraceError, CompareError, FileNotFoundError, IsADirectoryError) as e:
        print(f"ppbsim: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except ValueError as e:
        print(f"ppbsim: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except SimulationAbort as e:
        print(f"ppbsim: simulation aborted: {e}", file=sys.stderr)
        if e.dump:
            print(e.dump, file=sys.stderr)
        return EXIT_ABORT


if __name__ == "__main__":
    sys.exit(main())
