"""
Run Summary
===========
Reduces a trace to the numbers a run is judged by: message latency
statistics, sync skew, per-tag pulse skew and the error counters.

Latency statistics are taken over accepted data-frame deliveries. With one
size class, one link clock and matched delays the variance is exactly 0;
check_latencies() cross-checks every delivery against the wire model.
"""

import json
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Any, Dict, List, Optional, Sequence

import pandas as pd
from tabulate import tabulate

from network.fabric import Topology
from network.sync import measure_pulse_skew
from pipeline.trace import TraceRecord, trace_frame
from protocol.wire import DATA_COMMANDS, Command, LinkClock, frame_latency
from timing.clock_math import fs_to_ns

DATA_CMD_NAMES = sorted(cmd.name for cmd in DATA_COMMANDS)

COUNTED_EVENTS = {
    'rx_overflow': 'rx_overflows',
    'tx_backpressure': 'tx_backpressure',
    'rx_filtered': 'rx_filtered',
    'script_error': 'script_errors',
    'autoid_retry': 'autoid_retries',
    'clk_note': 'clock_notes',
}


@dataclass
class RunSummary:
    message_count: int = 0
    latency_min_fs: Optional[int] = None
    latency_max_fs: Optional[int] = None
    latency_mean_fs: Optional[float] = None
    latency_variance_fs2: Optional[float] = None
    distinct_latencies_fs: List[int] = field(default_factory=list)
    latency_by_cmd: Dict[str, Dict[str, float]] = field(default_factory=dict)
    sync_skew_fs: Optional[int] = None
    pulse_skew_fs: Dict[str, int] = field(default_factory=dict)
    counters: Dict[str, int] = field(default_factory=dict)
    events_executed: int = 0
    trace_records: int = 0
    runtime_s: float = 0.0
    seed: Optional[int] = None
    status: str = "ok"
    error: Optional[str] = None
    extra: Dict[str, Any] = field(default_factory=dict)

    @property
    def deterministic(self) -> bool:
        return len(self.distinct_latencies_fs) <= 1

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def build_summary(
    trace: Sequence[TraceRecord],
    n_boards: int,
    events_executed: int = 0,
    runtime_s: float = 0.0,
    seed: Optional[int] = None,
) -> RunSummary:
    df = trace_frame(trace)
    summary = RunSummary(
        events_executed=events_executed,
        trace_records=len(df),
        runtime_s=runtime_s,
        seed=seed,
    )

    counts = df['event'].value_counts() if len(df) else pd.Series(dtype=int)
    summary.counters = {name: int(counts.get(event, 0)) for event, name in COUNTED_EVENTS.items()}

    if len(df) and 'latency_fs' in df.columns:
        rx = df[(df['event'] == 'rx_deliver')]
        data = rx[rx['cmd'].isin(DATA_CMD_NAMES)]
        lat = data['latency_fs'].astype('int64')
        summary.message_count = int(len(lat))
        if len(lat):
            summary.latency_min_fs = int(lat.min())
            summary.latency_max_fs = int(lat.max())
            summary.latency_mean_fs = float(lat.mean())
            summary.latency_variance_fs2 = float(lat.var(ddof=0))
            summary.distinct_latencies_fs = sorted(int(v) for v in lat.unique())
        if len(rx):
            grouped = rx.groupby('cmd')['latency_fs']
            summary.latency_by_cmd = {
                cmd: {
                    'count': int(g.count()),
                    'min_fs': int(g.min()),
                    'max_fs': int(g.max()),
                    'variance_fs2': float(g.astype('int64').var(ddof=0)),
                }
                for cmd, g in grouped
            }

    summary.sync_skew_fs = sync_skew_from_trace(trace, n_boards)
    for tag in sorted({r.get('tag') for r in trace if r.event == 'pulse'}):
        boards = {r.board for r in trace if r.event == 'pulse' and r.get('tag') == tag}
        if len(boards) >= 2:
            summary.pulse_skew_fs[tag] = measure_pulse_skew(trace, tag)
    return summary


def sync_skew_from_trace(trace: Sequence[TraceRecord], n_boards: int) -> Optional[int]:
    """Spread of the first START apply on every board; None if some board never started."""
    first: Dict[int, int] = {}
    for r in trace:
        if r.event == 'clk_applied' and r.get('cmd') == 'CLK_START':
            first.setdefault(r.board, r.t_fs)
    if len(first) < n_boards:
        return None
    return max(first.values()) - min(first.values())


def check_latencies(trace: Sequence[TraceRecord], topology: Topology, link_clock: LinkClock) -> List[TraceRecord]:
    """Deliveries whose latency differs from serialization time plus cable delay."""
    mismatches = []
    for r in trace:
        if r.event != 'rx_deliver':
            continue
        expected = frame_latency(Command[r.get('cmd')], link_clock) + topology.delay(r.get('port'), r.board)
        if r.get('latency_fs') != expected:
            mismatches.append(r)
    return mismatches


def summary_table(summary: RunSummary) -> str:
    def ns(value):
        return '-' if value is None else f"{fs_to_ns(value):.3f} ns"

    rows = [
        ['status', summary.status],
        ['messages', f"{summary.message_count:,}"],
        ['latency min', ns(summary.latency_min_fs)],
        ['latency max', ns(summary.latency_max_fs)],
        ['latency mean', ns(summary.latency_mean_fs)],
        ['latency variance', '-' if summary.latency_variance_fs2 is None else f"{summary.latency_variance_fs2:g} fs^2"],
        ['sync skew', '-' if summary.sync_skew_fs is None else f"{summary.sync_skew_fs:,} fs"],
    ]
    rows += [[f"pulse skew '{tag}'", f"{skew:,} fs"] for tag, skew in sorted(summary.pulse_skew_fs.items())]
    rows += [[name.replace('_', ' '), value] for name, value in sorted(summary.counters.items())]
    rows += [
        ['events executed', f"{summary.events_executed:,}"],
        ['runtime', f"{summary.runtime_s:.2f} s"],
    ]
    if summary.error:
        rows.append(['error', summary.error])
    return tabulate(rows, headers=['metric', 'value'], tablefmt='github')


def write_summary(summary: RunSummary, out_dir: Path) -> Path:
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    path = out_dir / 'summary.json'
    with open(path, 'w') as f:
        json.dump(summary.to_dict(), f, indent=2, sort_keys=True)
    with open(out_dir / 'summary.txt', 'w') as f:
        f.write(summary_table(summary))
        f.write('\n')
    return path
