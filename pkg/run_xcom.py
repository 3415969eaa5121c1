#!/usr/bin/env python3
"""
XCOM Simulator Command Line
===========================
Runs scenario programs and the built-in validation experiments:

    run        config + scenario program -> trace.jsonl, summary.json, summary.txt
    latency    round-robin message stream; every latency must be identical
    soak       100,000-message latency run on three boards
    sync       AUTO-ID + clock sync + multi-day skew probes
    autoid     AUTO-ID only; prints the assigned IDs
    wraptest   board programs waiting across the 2^48 counter wrap
    tokenring  flag-bit token ring lap times

Exit codes:
    0  success
    1  usage or configuration error
    2  scenario parse error
    3  runtime fault (partial trace still written for `run`)

Environment:
    XCOM_SEED  default seed (overridden by --seed)
    XCOM_OUT   default output directory (overridden by --out)

Examples:
    python run_xcom.py run --config configs/three_boards.json --scenario scenarios/conditional_jump.xsc
    python run_xcom.py latency --boards 2 --size D32 --link-clock 322500000 --count 1000
    python run_xcom.py sync --boards 3 --phases 0,12000,-8000 --days 3
    python run_xcom.py run --scenario scenarios/sync_pulse.xsc --sweep 20 --jobs 4
"""

import argparse
import json
import sys
from concurrent.futures import ProcessPoolExecutor
from copy import copy
from pathlib import Path
from typing import Callable, Dict, List, Optional

from tabulate import tabulate
from tqdm import tqdm

ROOT = Path(__file__).parent
sys.path.insert(0, str(ROOT))

from experiments.latency import DEFAULT_MESSAGE_COUNT, experiment_latency, soak
from experiments.sync_stability import DEFAULT_PROBES_PER_DAY, build_network, experiment_sync, experiment_wrap
from experiments.token_ring import experiment_token_ring
from network.sync import run_auto_id
from pipeline.scenario import resolve_config, run_scenario
from pipeline.summary import RunSummary, summary_table, write_summary
from pipeline.trace import write_trace
from protocol.errors import (
    AutoIdError,
    ConfigError,
    DriftError,
    LatencyDeviationError,
    MeasurementError,
    ScriptParseError,
    ScriptRuntimeError,
    SimulationFault,
    SyncError,
    XcomError,
)
from simulation.run_config import RunConfig, env_out_dir

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_PARSE = 2
EXIT_RUNTIME = 3

RUNTIME_ERRORS = (
    SimulationFault,
    ScriptRuntimeError,
    AutoIdError,
    SyncError,
    MeasurementError,
    LatencyDeviationError,
    DriftError,
)

DEFAULT_OUT = 'out'


class XcomArgumentParser(argparse.ArgumentParser):
    """argparse exits with 2 on usage errors; here 2 means a parse error in a scenario."""

    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def exit_code_for(exc: BaseException) -> int:
    if isinstance(exc, ScriptParseError):
        return EXIT_PARSE
    if isinstance(exc, RUNTIME_ERRORS):
        return EXIT_RUNTIME
    if isinstance(exc, (ConfigError, ValueError)):
        return EXIT_USAGE
    return EXIT_RUNTIME


def _int_list(text: str) -> List[int]:
    try:
        return [int(x, 0) for x in text.split(',') if x.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'") from None


def _int(text: str) -> int:
    try:
        return int(text, 0)
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected an integer, got '{text}'") from None


# ---------------------------------------------------------------------------
# Subcommands
# ---------------------------------------------------------------------------

def _config(args) -> RunConfig:
    return resolve_config(args.config, seed=args.seed, horizon=getattr(args, 'horizon', None))


def _boards(args, config: RunConfig) -> int:
    return args.boards if args.boards is not None else config.boards


def _report(summary: RunSummary, out: Path, quiet: bool) -> None:
    write_summary(summary, out)
    if not quiet:
        print(summary_table(summary))


def _write_json(data: Dict, path: Path) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    with open(path, 'w') as f:
        json.dump(data, f, indent=2, sort_keys=True)


def cmd_run(args) -> int:
    if not args.scenario:
        raise ConfigError("run needs --scenario")
    result = run_scenario(args.config, args.scenario, seed=args.seed, out_dir=args.out,
                          horizon=args.horizon, csv=args.csv, verbose=not args.quiet)
    if not args.quiet:
        print(summary_table(result.summary))
    return EXIT_OK


def cmd_latency(args) -> int:
    config = _config(args)
    summary = experiment_latency(
        n_boards=_boards(args, config),
        size_class=args.size,
        link_clock_hz=args.link_clock or config.link_clock_hz,
        count=args.count,
        seed=config.seed,
        delay_fs=args.delay,
        progress=not args.quiet,
    )
    _report(summary, Path(args.out), args.quiet)
    return EXIT_OK


def cmd_soak(args) -> int:
    config = _config(args)
    summary = soak(count=args.count, seed=config.seed, progress=not args.quiet)
    _report(summary, Path(args.out), args.quiet)
    return EXIT_OK


def cmd_sync(args) -> int:
    config = _config(args)
    report, verdict = experiment_sync(
        n_boards=_boards(args, config),
        phase_fs=args.phases if args.phases is not None else config.phase_fs,
        phase_bound_fs=args.phase_bound if args.phase_bound is not None else config.phase_bound_fs,
        days=args.days,
        probes_per_day=args.probes_per_day,
        seed=config.seed,
        master=args.master if args.master is not None else config.master,
        progress=not args.quiet,
    )
    _write_json({'sync': report.to_dict(), 'stability': verdict.to_dict()}, Path(args.out) / 'sync.json')
    if not args.quiet:
        rows = [[b, report.apply_time_fs[b], report.apply_edge[b], report.probe_ticks[b]]
                for b in sorted(report.apply_time_fs)]
        print(tabulate(rows, headers=['board', 'START applied (fs)', 'edge', 'probe tick'], tablefmt='github'))
        print(f"\nskew {report.skew_fs:,} fs, aligned={report.aligned}, "
              f"{len(verdict.skews_fs)} probes stable={verdict.stable}, crossed wrap={verdict.crossed_wrap}")
    return EXIT_OK


def cmd_autoid(args) -> int:
    config = _config(args)
    n = _boards(args, config)
    net = build_network(n, config.phase_fs, config.phase_bound_fs, config.seed)
    forced = {1: [0x5A5A] * n} if args.collide else None
    ids = run_auto_id(net, max_rounds=config.autoid_max_rounds, forced_nonces=forced)
    write_trace(net.trace, Path(args.out) / 'trace.jsonl')
    if not args.quiet:
        rounds = {r.board: r.get('round') for r in net.trace if r.event == 'id_assigned'}
        rows = [[port, ids[port], rounds.get(port)] for port in sorted(ids)]
        print(tabulate(rows, headers=['port', 'XCOM ID', 'round'], tablefmt='github'))
    return EXIT_OK


def cmd_wraptest(args) -> int:
    config = _config(args)
    n = _boards(args, config)
    net, result = experiment_wrap(
        n_boards=n,
        phase_fs=args.phases if args.phases is not None else config.phase_fs,
        seed=config.seed,
        master=config.master,
    )
    out = Path(args.out)
    write_trace(net.trace, out / 'trace.jsonl')
    _write_json(result.to_dict(), out / 'wrap.json')
    if not args.quiet:
        rows = [[b, result.pre_tick[b], result.post_tick[b], result.edges_between[b]] for b in range(n)]
        print(tabulate(rows, headers=['board', 'pre tick', 'post tick', 'edges'], tablefmt='github'))
        print(f"\nskew {result.pre_skew_fs:,} fs before the wrap, {result.post_skew_fs:,} fs after")
    return EXIT_OK


def cmd_tokenring(args) -> int:
    config = _config(args)
    result = experiment_token_ring(
        n_boards=_boards(args, config),
        laps=args.laps,
        link_clock_hz=args.link_clock or config.link_clock_hz,
        delay_fs=args.delay,
        seed=config.seed,
    )
    _write_json(result.to_dict(), Path(args.out) / 'tokenring.json')
    if not args.quiet:
        print(f"{len(result.lap_times_fs)} laps of {result.expected_lap_fs:,} fs on {result.n_boards} boards")
    return EXIT_OK


COMMANDS: Dict[str, Callable[[argparse.Namespace], int]] = {
    'run': cmd_run,
    'latency': cmd_latency,
    'soak': cmd_soak,
    'sync': cmd_sync,
    'autoid': cmd_autoid,
    'wraptest': cmd_wraptest,
    'tokenring': cmd_tokenring,
}


# ---------------------------------------------------------------------------
# Parser and dispatch
# ---------------------------------------------------------------------------

def build_parser() -> argparse.ArgumentParser:
    common = XcomArgumentParser(add_help=False)
    common.add_argument('--config', help='run config (JSON)')
    common.add_argument('--seed', type=_int, help='run seed (default: config, then XCOM_SEED)')
    common.add_argument('--out', help='output directory (default: XCOM_OUT, then ./out)')
    common.add_argument('--horizon', type=_int, help='simulated time limit in fs')
    common.add_argument('--sweep', type=_int, default=1, metavar='N',
                        help='run N seeds (seed .. seed+N-1) into out/seed-<s>/')
    common.add_argument('--jobs', type=_int, default=1, help='parallel workers for --sweep')
    common.add_argument('--quiet', action='store_true', help='no progress output')

    parser = XcomArgumentParser(prog='run_xcom.py', description='XCOM full-mesh network simulator')
    sub = parser.add_subparsers(dest='command', metavar='command')
    sub.required = True

    p = sub.add_parser('run', parents=[common], help='run a scenario program')
    p.add_argument('--scenario', help='scenario program (.xsc)')
    p.add_argument('--csv', action='store_true', help='also export the trace as CSV')

    p = sub.add_parser('latency', parents=[common], help='latency determinism run')
    p.add_argument('--boards', type=_int)
    p.add_argument('--size', default='D32', choices=['D8', 'D16', 'D32'])
    p.add_argument('--link-clock', type=_int, help='link clock in Hz')
    p.add_argument('--count', type=_int, default=DEFAULT_MESSAGE_COUNT)
    p.add_argument('--delay', type=_int, default=0, help='cable delay in fs')

    p = sub.add_parser('soak', parents=[common], help='100K-message DATA32 run on three boards')
    p.add_argument('--count', type=_int, default=DEFAULT_MESSAGE_COUNT)

    p = sub.add_parser('sync', parents=[common], help='sync + multi-day skew stability')
    p.add_argument('--boards', type=_int)
    p.add_argument('--phases', type=_int_list, help='per-board phase offsets in fs, comma-separated')
    p.add_argument('--phase-bound', type=_int, help='draw phases uniformly in +/- bound fs')
    p.add_argument('--days', type=float, default=3.0)
    p.add_argument('--probes-per-day', type=_int, default=DEFAULT_PROBES_PER_DAY)
    p.add_argument('--master', type=_int)

    p = sub.add_parser('autoid', parents=[common], help='AUTO-ID only')
    p.add_argument('--boards', type=_int)
    p.add_argument('--collide', action='store_true', help='force equal nonces in round 1')

    p = sub.add_parser('wraptest', parents=[common], help='programs waiting across the 2^48 wrap')
    p.add_argument('--boards', type=_int)
    p.add_argument('--phases', type=_int_list)

    p = sub.add_parser('tokenring', parents=[common], help='flag-bit token ring')
    p.add_argument('--boards', type=_int)
    p.add_argument('--laps', type=_int, default=10)
    p.add_argument('--link-clock', type=_int, help='link clock in Hz')
    p.add_argument('--delay', type=_int, default=0, help='cable delay in fs')
    return parser


def dispatch(args: argparse.Namespace) -> int:
    """Run one command; map library errors to exit codes."""
    try:
        return COMMANDS[args.command](args)
    except XcomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    except ValueError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE


def _sweep_one(args: argparse.Namespace) -> int:
    return dispatch(args)


def run_sweep(args: argparse.Namespace, base_seed: int) -> int:
    out = Path(args.out)
    runs = []
    for s in range(base_seed, base_seed + args.sweep):
        run_args = copy(args)
        run_args.seed = s
        run_args.out = str(out / f"seed-{s}")
        run_args.quiet = True
        runs.append(run_args)

    if args.jobs > 1:
        with ProcessPoolExecutor(max_workers=args.jobs) as pool:
            codes = list(tqdm(pool.map(_sweep_one, runs), total=len(runs), desc='seeds', disable=args.quiet))
    else:
        codes = [_sweep_one(r) for r in tqdm(runs, desc='seeds', disable=args.quiet)]

    if not args.quiet:
        rows = [[r.seed, code, r.out] for r, code in zip(runs, codes)]
        print(tabulate(rows, headers=['seed', 'exit', 'out'], tablefmt='github'))
    return max(codes)


def main(argv: Optional[List[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    env_out = env_out_dir()
    if args.out is None:
        args.out = str(env_out) if env_out else DEFAULT_OUT
    if args.sweep < 1 or args.jobs < 1:
        print("error: --sweep and --jobs must be >= 1", file=sys.stderr)
        return EXIT_USAGE

    if args.sweep == 1:
        return dispatch(args)
    try:
        base_seed = args.seed if args.seed is not None else resolve_config(args.config).seed
    except XcomError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exit_code_for(exc)
    return run_sweep(args, base_seed)


if __name__ == "__main__":
    sys.exit(main())
