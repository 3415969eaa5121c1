"""
Synchronization Stability Experiments
=====================================
Long-horizon checks that the synchronized counters stay locked:

experiment_sync
    AUTO-ID, RESET/START, then probe pulses on every board at common
    counter values spread over `days` of simulated time. The skew of every
    probe must equal the skew at sync (the static phase spread). Probes are
    scheduled one interval at a time, so intervals stay inside the 2^47-tick
    comparison window even when the run crosses the 2^48 wrap (about
    7.57 days at 430 MHz).

experiment_wrap
    Board programs wait for tick 2^48 - 10, pulse, then wait for tick 5 and
    pulse again. The second pulse must come 15 edges after the first on
    every board, with the same skew.

Only events are simulated, never individual cycles, so multi-day horizons
cost a few hundred events.
"""

import sys
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional, Sequence, Tuple

from tqdm import tqdm

sys.path.insert(0, str(Path(__file__).parent.parent))

from network.fabric import build_full_mesh, set_phase_offsets
from network.mesh import XcomNetwork
from network.sync import SyncReport, measure_pulse_skew, pulse_times, run_auto_id, run_clock_sync
from protocol.errors import ConfigError, DriftError
from scripting.program import parse_program
from simulation.rng import STREAM_PHASE, CounterRng
from timing.clock_math import (
    DEFAULT_FABRIC_CLOCK_HZ,
    FS_PER_SECOND,
    SECONDS_PER_DAY,
    TICK_HALF_RANGE,
    TICK_MODULUS,
    tick_add,
    wrap_horizon,
)

DEFAULT_PROBES_PER_DAY = 4
WRAP_PRE_TICK = TICK_MODULUS - 10
WRAP_POST_TICK = 5


@dataclass
class StabilityVerdict:
    stable: bool
    skews_fs: List[int] = field(default_factory=list)
    probe_ticks: List[int] = field(default_factory=list)
    probe_times_fs: List[int] = field(default_factory=list)
    crossed_wrap: bool = False
    horizon_fs: int = 0

    @property
    def skew_fs(self) -> Optional[int]:
        return self.skews_fs[0] if self.skews_fs else None

    def to_dict(self) -> Dict:
        return {
            'stable': self.stable,
            'skew_fs': self.skew_fs,
            'skews_fs': self.skews_fs,
            'probe_ticks': self.probe_ticks,
            'probe_times_fs': self.probe_times_fs,
            'crossed_wrap': self.crossed_wrap,
            'horizon_fs': self.horizon_fs,
        }


@dataclass
class WrapResult:
    pre_tick: Dict[int, int]
    post_tick: Dict[int, int]
    edges_between: Dict[int, int]
    pre_skew_fs: int
    post_skew_fs: int

    def to_dict(self) -> Dict:
        return {
            'pre_tick': {str(b): v for b, v in self.pre_tick.items()},
            'post_tick': {str(b): v for b, v in self.post_tick.items()},
            'edges_between': {str(b): v for b, v in self.edges_between.items()},
            'pre_skew_fs': self.pre_skew_fs,
            'post_skew_fs': self.post_skew_fs,
        }


def draw_phases(n_boards: int, bound_fs: int, seed: int) -> List[int]:
    """Uniform static phase offsets in [-bound, +bound] from the phase stream."""
    rng = CounterRng(seed)
    return [rng.draw_range(STREAM_PHASE, -bound_fs, bound_fs) for _ in range(n_boards)]


def build_network(
    n_boards: int,
    phase_fs: Optional[Sequence[int]] = None,
    phase_bound_fs: Optional[int] = None,
    seed: int = 0,
    fabric_clock_hz: int = DEFAULT_FABRIC_CLOCK_HZ,
    delay_fs: int = 0,
) -> XcomNetwork:
    if phase_fs is None:
        phase_fs = draw_phases(n_boards, phase_bound_fs, seed) if phase_bound_fs else [0] * n_boards
    if len(phase_fs) != n_boards:
        raise ConfigError(f"need {n_boards} phase offsets, got {len(phase_fs)}")
    topo = set_phase_offsets(build_full_mesh(n_boards, delay_fs), phase_fs)
    return XcomNetwork(topo, fabric_clock_hz=fabric_clock_hz, seed=seed)


def experiment_sync(
    n_boards: int = 3,
    phase_fs: Optional[Sequence[int]] = None,
    phase_bound_fs: Optional[int] = None,
    days: float = 3.0,
    probes_per_day: int = DEFAULT_PROBES_PER_DAY,
    seed: int = 0,
    master: int = 0,
    progress: bool = False,
) -> Tuple[SyncReport, StabilityVerdict]:
    """
    Sync the network, then probe the pulse skew over `days` of simulated
    time. Raises DriftError if any probe's skew differs from the first.
    """
    if probes_per_day < 1:
        raise ConfigError(f"probes_per_day must be >= 1, got {probes_per_day}")
    net = build_network(n_boards, phase_fs, phase_bound_fs, seed)
    run_auto_id(net)
    report = run_clock_sync(net, master)

    horizon = int(days * SECONDS_PER_DAY) * FS_PER_SECOND
    n_probes = max(1, int(days * probes_per_day))
    interval = horizon * net.nodes[0].fabric.freq_hz // (n_probes * FS_PER_SECOND)
    if not 0 < interval < TICK_HALF_RANGE:
        raise ConfigError(f"probe interval of {interval} ticks does not fit the comparison window")

    verdict = StabilityVerdict(stable=True, horizon_fs=horizon)
    tick = report.probe_ticks[master]
    for k in tqdm(range(1, n_probes + 1), desc='probes', disable=not progress):
        tick = tick_add(tick, interval)
        tag = f"probe-{k}"
        latest = max(net.schedule_pulse_at_tick(b, tick, tag) for b in range(n_boards))
        net.run_until(latest)
        skew = measure_pulse_skew(net.trace, tag, boards=range(n_boards))
        if verdict.probe_ticks and tick < verdict.probe_ticks[-1]:
            verdict.crossed_wrap = True
        verdict.skews_fs.append(skew)
        verdict.probe_ticks.append(tick)
        verdict.probe_times_fs.append(min(pulse_times(net.trace, tag).values()))

    verdict.stable = all(s == report.skew_fs for s in verdict.skews_fs)
    if not verdict.stable:
        raise DriftError(f"pulse skew drifted from {report.skew_fs} fs: {sorted(set(verdict.skews_fs))}")
    return report, verdict


def wrap_program(n_boards: int, master: int = 0) -> str:
    lines = []
    for board in range(n_boards):
        lines.append(f"board {board}:")
        if board == master:
            lines.append("    SYNC")
        lines += [
            f"    WAITT 0x{TICK_HALF_RANGE - 1:X}",
            f"    WAITT 0x{WRAP_PRE_TICK:X}",
            "    PULSE pre_wrap",
            f"    WAITT {WRAP_POST_TICK}",
            "    PULSE post_wrap",
            "    HALT",
        ]
    return '\n'.join(lines) + '\n'


def experiment_wrap(
    n_boards: int = 2,
    phase_fs: Optional[Sequence[int]] = None,
    seed: int = 0,
    master: int = 0,
) -> Tuple[XcomNetwork, WrapResult]:
    """Run the counter across the 2^48 wrap under program control."""
    net = build_network(n_boards, phase_fs, seed=seed)
    run_auto_id(net)
    net.set_master(master)
    net.load_program(parse_program(wrap_program(n_boards, master)))
    net.run_until(net.now + wrap_horizon(net.nodes[0].fabric.freq_hz) + FS_PER_SECOND)

    pre = {r.board: r for r in net.trace if r.event == 'pulse' and r.get('tag') == 'pre_wrap'}
    post = {r.board: r for r in net.trace if r.event == 'pulse' and r.get('tag') == 'post_wrap'}
    boards = range(n_boards)
    result = WrapResult(
        pre_tick={b: pre[b].get('tick') for b in boards if b in pre},
        post_tick={b: post[b].get('tick') for b in boards if b in post},
        edges_between={b: post[b].get('edge') - pre[b].get('edge') for b in boards if b in pre and b in post},
        pre_skew_fs=measure_pulse_skew(net.trace, 'pre_wrap', boards=boards),
        post_skew_fs=measure_pulse_skew(net.trace, 'post_wrap', boards=boards),
    )
    if result.pre_skew_fs != result.post_skew_fs:
        raise DriftError(f"skew changed across the wrap: {result.pre_skew_fs} -> {result.post_skew_fs} fs")
    return net, result


if __name__ == "__main__":
    report, verdict = experiment_sync(3, phase_fs=[0, 12_000, -8_000], days=3, progress=True)
    print(f"sync skew {report.skew_fs} fs, aligned={report.aligned}, stable={verdict.stable}")
    _, wrap = experiment_wrap(3, phase_fs=[0, 12_000, -8_000])
    print(f"wrap: edges between pulses {wrap.edges_between}, skew {wrap.post_skew_fs} fs")
