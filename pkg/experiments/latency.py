"""
Latency Determinism Experiments
===============================
Reproduces the message-latency validation: boards exchange a long stream of
messages and every single one must take exactly the same time.

Method
------
    1. Build an n-board mesh with matched cables; IDs are the port numbers.
    2. Message i goes from board i mod n to board (i + 1) mod n and is
       issued at i x (frame latency), so no channel ever has a backlog and
       every latency is serialization time plus cable delay.
    3. Payloads are drawn from the run's payload stream, so the bits on the
       wire vary while the timing must not.
    4. Every accepted delivery's latency is collected from the trace; more
       than one distinct value is a failure.

Reference values (zero cable delay):
    DATA32 @ 107.5 MHz   186,046,511 fs   (186.05 ns)
    DATA32 @ 322.5 MHz    62,015,503 fs   ( 62.02 ns)
    DATA8  @ 107.5 MHz    74,418,604 fs   ( 74.42 ns)

The concurrent-broadcast check fires one broadcast from every board at the
same instant; channels are independent, so each delivery still lands at
serialization time plus its own cable delay.
"""

import sys
import time
from pathlib import Path
from typing import Optional

from tqdm import tqdm

sys.path.insert(0, str(Path(__file__).parent.parent))

from network.fabric import build_full_mesh, topology_from_matrix
from network.mesh import XcomNetwork
from pipeline.summary import RunSummary, build_summary
from protocol.errors import ConfigError, LatencyDeviationError
from protocol.wire import (
    BROADCAST_ADDR,
    DEFAULT_LINK_CLOCK_HZ,
    PAYLOAD_WIDTH,
    SIZE_CLASSES,
    Frame,
    LinkClock,
    frame_latency,
)
from simulation.rng import STREAM_PAYLOAD, rng_draw

DEFAULT_MESSAGE_COUNT = 100_000
SOAK_BOARDS = 3
# Messages scheduled per engine slice; receive FIFOs are drained between slices
CHUNK = 1_000


def _size_command(size_class: str):
    cmd = SIZE_CLASSES.get(size_class.upper())
    if cmd is None:
        raise ConfigError(f"unknown size class '{size_class}' (D8, D16, D32)")
    return cmd


def _drain(net: XcomNetwork) -> None:
    for node in net.nodes:
        while node.pop_rx() is not None:
            pass


def experiment_latency(
    n_boards: int = SOAK_BOARDS,
    size_class: str = 'D32',
    link_clock_hz: int = DEFAULT_LINK_CLOCK_HZ,
    count: int = DEFAULT_MESSAGE_COUNT,
    seed: int = 0,
    delay_fs: int = 0,
    progress: bool = False,
) -> RunSummary:
    """
    Send `count` round-robin unicast messages and check every latency is
    identical. Raises LatencyDeviationError otherwise.
    """
    cmd = _size_command(size_class)
    if count < 1:
        raise ConfigError(f"count must be positive, got {count}")
    started = time.perf_counter()
    link = LinkClock(link_clock_hz)
    net = XcomNetwork(
        build_full_mesh(n_boards, delay_fs),
        link_clock=link,
        seed=seed,
        fifo_depth=CHUNK,
        trace_filtered=False,
    )
    net.assign_port_ids()

    spacing = frame_latency(cmd, link)
    payloads = net.rng.draw_many(STREAM_PAYLOAD, PAYLOAD_WIDTH[cmd], count)
    chunks = range(0, count, CHUNK)
    for lo in tqdm(chunks, desc=f"{size_class} x{count:,}", unit='chunk', disable=not progress):
        hi = min(lo + CHUNK, count)
        for i in range(lo, hi):
            frame = Frame(dst=(i + 1) % n_boards, cmd=cmd, payload=int(payloads[i]))
            net.schedule_send(i % n_boards, frame, i * spacing)
        # stop short of the next slice's first send
        net.run_until(hi * spacing - 1)
        _drain(net)
    net.engine.run()

    summary = build_summary(
        net.trace,
        n_boards=n_boards,
        events_executed=net.engine.events_executed,
        runtime_s=time.perf_counter() - started,
        seed=seed,
    )
    expected = spacing + delay_fs
    summary.extra.update(
        n_boards=n_boards,
        size_class=size_class.upper(),
        link_clock_hz=link_clock_hz,
        expected_latency_fs=expected,
    )
    if summary.message_count != count:
        raise LatencyDeviationError(f"{count} messages sent, {summary.message_count} delivered")
    if summary.distinct_latencies_fs != [expected]:
        raise LatencyDeviationError(
            f"latencies {summary.distinct_latencies_fs[:5]} fs differ from the expected {expected} fs"
        )
    return summary


def soak(count: int = DEFAULT_MESSAGE_COUNT, seed: int = 0, progress: bool = True) -> RunSummary:
    """The long-run determinism check: three boards, DATA32, default link clock."""
    return experiment_latency(SOAK_BOARDS, 'D32', count=count, seed=seed, progress=progress)


def experiment_concurrent_broadcast(
    n_boards: int = SOAK_BOARDS,
    size_class: str = 'D32',
    link_clock_hz: int = DEFAULT_LINK_CLOCK_HZ,
    seed: int = 0,
    delay_matrix: Optional[list] = None,
) -> RunSummary:
    """All boards broadcast at t=0; each delivery must land at latency + its own cable delay."""
    cmd = _size_command(size_class)
    link = LinkClock(link_clock_hz)
    topo = build_full_mesh(n_boards)
    if delay_matrix is not None:
        topo = topology_from_matrix(delay_matrix)
    net = XcomNetwork(topo, link_clock=link, seed=seed)
    net.assign_port_ids()
    for board in range(n_boards):
        payload = rng_draw(net.rng, STREAM_PAYLOAD, PAYLOAD_WIDTH[cmd])
        net.send(board, Frame(BROADCAST_ADDR, cmd, payload))
    net.engine.run()

    serialization = frame_latency(cmd, link)
    wrong = [
        r for r in net.trace
        if r.event == 'rx_deliver'
        and r.t_fs != serialization + topo.delay(r.get('port'), r.board)
    ]
    if wrong:
        raise LatencyDeviationError(f"{len(wrong)} broadcast deliveries off schedule, first at t={wrong[0].t_fs} fs")
    summary = build_summary(net.trace, n_boards=n_boards, events_executed=net.engine.events_executed, seed=seed)
    summary.extra.update(n_boards=n_boards, size_class=size_class.upper(), link_clock_hz=link_clock_hz)
    return summary


if __name__ == "__main__":
    s = experiment_latency(3, 'D32', count=10_000, progress=True)
    print(f"{s.message_count:,} messages, latency {s.distinct_latencies_fs} fs, variance {s.latency_variance_fs2}")
