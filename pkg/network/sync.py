"""
Network Procedures: AUTO-ID, Clock Sync, Skew Measurement
==========================================================
The one-time power-up sequence of an XCOM network:

    1. AUTO-ID: every board learns which hub port it sits on and adopts
       the port number as its XCOM ID.
    2. The master broadcasts CLK_RESET.
    3. The master broadcasts CLK_START; every board (master included, via
       its own loopback) starts counting on the same fabric edge.

AUTO-ID discrimination
----------------------
All boards probe at once, so a board cannot tell its own probe apart by
timing alone. Each board sends an AUTOID_PROBE broadcast carrying a 16-bit
nonce from its own RNG stream; the single port on which it hears its own
nonce is its port. If two boards drew the same nonce, both hear it twice
and retry in the next round with fresh nonces. Boards already resolved
stay quiet.

Skew
----
Reports are pure post-processing of the trace. With matched delays, every
board latches START on the same nominal edge, so the wall-time spread of
the apply events (and of any pulse timed off the counter) is exactly the
spread of the boards' phase offsets.
"""

from dataclasses import dataclass, field
from typing import TYPE_CHECKING, Dict, Iterable, Mapping, Optional, Sequence

from network.node import TxSlot
from pipeline.trace import TraceRecord
from protocol.errors import AutoIdError, MeasurementError, SyncError
from protocol.wire import BROADCAST_ADDR, Command, Frame, frame_latency
from simulation.rng import STREAM_AUTOID_BASE, rng_draw
from timing.clock_math import WallTime, cycles_to_fs, edge_time, period_fs

if TYPE_CHECKING:
    from network.mesh import XcomNetwork

DEFAULT_AUTOID_MAX_ROUNDS = 8
NONCE_BITS = 16
# Extra time allowed for a START stuck behind other traffic on the master's channel
SYNC_GRACE_FS = 10 ** 9


@dataclass
class SyncReport:
    master: int
    apply_time_fs: Dict[int, WallTime]
    apply_edge: Dict[int, int]
    skew_fs: int
    aligned: bool
    probe_time_fs: WallTime
    probe_ticks: Dict[int, int] = field(default_factory=dict)

    def to_dict(self) -> Dict:
        return {
            'master': self.master,
            'apply_time_fs': {str(b): t for b, t in sorted(self.apply_time_fs.items())},
            'apply_edge': {str(b): e for b, e in sorted(self.apply_edge.items())},
            'skew_fs': self.skew_fs,
            'aligned': self.aligned,
            'probe_time_fs': self.probe_time_fs,
            'probe_ticks': {str(b): k for b, k in sorted(self.probe_ticks.items())},
        }


# ---------------------------------------------------------------------------
# AUTO-ID
# ---------------------------------------------------------------------------

def run_auto_id(
    net: "XcomNetwork",
    max_rounds: int = DEFAULT_AUTOID_MAX_ROUNDS,
    forced_nonces: Optional[Mapping[int, Sequence[int]]] = None,
) -> Dict[int, int]:
    """
    Assign every unassigned board its hub port number as XCOM ID.

    forced_nonces maps round number (1-based) to per-board nonces indexed
    by port; it overrides the RNG for that round (used to force collisions).
    Returns {port: id}.
    """
    unresolved = [node.index for node in net.nodes if node.id is None]
    for rnd in range(1, max_rounds + 1):
        if not unresolved:
            break
        forced = (forced_nonces or {}).get(rnd)
        nonces: Dict[int, int] = {}
        last_end = net.now
        for board in unresolved:
            if forced is not None:
                nonce = forced[board]
            else:
                nonce = rng_draw(net.rng, STREAM_AUTOID_BASE + board, NONCE_BITS)
            nonces[board] = nonce
            slot = net.send(board, Frame(BROADCAST_ADDR, Command.AUTOID_PROBE, nonce))
            if slot is None:
                raise AutoIdError(f"board on port {board} could not queue its probe")
            last_end = max(last_end, slot.t_end)

        round_end = last_end + net.topology.max_delay
        net.run_until(round_end)
        net.engine.advance_to(round_end)

        still = []
        for node in net.nodes:
            ports = node.claim_autoid_probes(nonces.get(node.index))
            if node.index not in nonces:
                continue
            if len(ports) == 1:
                node.id = ports[0]
                net.emit(node.index, 'id_assigned', id=node.id, round=rnd)
            else:
                still.append(node.index)
        if still:
            net.emit(None, 'autoid_retry', round=rnd, unresolved=still)
        unresolved = still

    if unresolved:
        raise AutoIdError(f"AUTO-ID did not converge after {max_rounds} rounds; unresolved ports {unresolved}")
    return {node.index: node.id for node in net.nodes}


# ---------------------------------------------------------------------------
# Clock synchronization
# ---------------------------------------------------------------------------

def start_sync_broadcast(net: "XcomNetwork", master: int) -> TxSlot:
    """Queue RESET now and START a configurable gap after RESET leaves the wire."""
    if not net.nodes[master].is_master:
        raise SyncError(f"board {master} is not the master")
    reset = net.send(master, Frame(BROADCAST_ADDR, Command.CLK_RESET))
    if reset is None:
        raise SyncError("master tx queue full; RESET not sent")
    gap = cycles_to_fs(net.sync_gap_cycles, net.link_clock.freq_hz)
    net.schedule_send(master, Frame(BROADCAST_ADDR, Command.CLK_START), reset.t_end + gap)
    return reset


def sync_deadline(net: "XcomNetwork", reset: TxSlot) -> WallTime:
    """Latest START apply time when the master's channel carries nothing else."""
    period = period_fs(net.nodes[0].fabric.freq_hz)
    return (
        reset.t_end
        + cycles_to_fs(net.sync_gap_cycles, net.link_clock.freq_hz)
        + frame_latency(Command.CLK_START, net.link_clock)
        + net.topology.max_delay
        + 3 * period
    )


def run_clock_sync(net: "XcomNetwork", master: int) -> SyncReport:
    unassigned = [node.index for node in net.nodes if node.id is None]
    if unassigned:
        raise SyncError(f"sync refused: boards on ports {unassigned} have no XCOM ID")
    net.set_master(master)
    mark = len(net.trace)
    reset = start_sync_broadcast(net, master)
    deadline = sync_deadline(net, reset)
    net.run_until(deadline)
    if not _all_started(net, net.trace[mark:]):
        net.run_until(deadline + SYNC_GRACE_FS)
    return sync_report_from_trace(net, net.trace[mark:], master)


def _all_started(net: "XcomNetwork", records: Iterable[TraceRecord]) -> bool:
    started = {r.board for r in records if r.event == 'clk_applied' and r.get('cmd') == 'CLK_START'}
    return len(started) == net.n_boards


def sync_report_from_trace(net: "XcomNetwork", records: Iterable[TraceRecord], master: int) -> SyncReport:
    """
    Build a SyncReport from the START apply records. The alignment probe
    reads every counter at the nominal edge after the last START; counters
    count the nominal grid, so synced boards agree at any instant.
    """
    times: Dict[int, WallTime] = {}
    edges: Dict[int, int] = {}
    for r in records:
        if r.event == 'clk_applied' and r.get('cmd') == 'CLK_START':
            times[r.board] = r.t_fs
            edges[r.board] = r.get('edge')
    missing = set(range(net.n_boards)) - times.keys()
    if missing:
        raise SyncError(f"START never applied on boards {sorted(missing)}")

    nominal = net.nodes[0].fabric.nominal
    probe_time = edge_time(nominal, max(edges.values()) + 1)
    ticks = {node.index: node.read_abs_clock(probe_time) for node in net.nodes}
    return SyncReport(
        master=master,
        apply_time_fs=times,
        apply_edge=edges,
        skew_fs=max(times.values()) - min(times.values()),
        aligned=len(set(ticks.values())) == 1,
        probe_time_fs=probe_time,
        probe_ticks=ticks,
    )


# ---------------------------------------------------------------------------
# Pulse skew
# ---------------------------------------------------------------------------

def pulse_times(trace: Iterable[TraceRecord], tag: str) -> Dict[int, WallTime]:
    """First pulse with `tag` on each board."""
    times: Dict[int, WallTime] = {}
    for r in trace:
        if r.event == 'pulse' and r.get('tag') == tag and r.board not in times:
            times[r.board] = r.t_fs
    return times


def measure_pulse_skew(
    trace: Iterable[TraceRecord],
    tag: str,
    boards: Optional[Iterable[int]] = None,
) -> int:
    """Max pairwise wall-time difference between the boards' `tag` pulses."""
    times = pulse_times(trace, tag)
    if boards is not None:
        missing = set(boards) - times.keys()
        if missing:
            raise MeasurementError(f"pulse '{tag}' absent on some boards", missing=missing)
    if len(times) < 2:
        raise MeasurementError(f"pulse '{tag}' seen on {len(times)} board(s); need at least 2")
    return max(times.values()) - min(times.values())
