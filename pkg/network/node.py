"""
XCOM Peripheral: Per-Board Node State Machine
=============================================
One BoardNode models the XCOM peripheral of one board as seen by its tProc:

    Tx   serialization on the board's own channel (one frame in flight,
         bounded FIFO of outstanding frames, backpressure when full)
    Rx   address filter on every port, per-port latest value and bounded
         FIFO (drop-oldest on overflow)
    Flag out-of-band line per channel, one edge per link cycle at most
    Clock the 48-bit absolute counter and the RESET / START / STOP commands

Clock-domain crossing
---------------------
A clock command delivered at wall time t latches on the first edge of the
shared *nominal* fabric grid (phase 0) at or after t + one fabric period.
Every board with matched delivery times therefore picks the same edge
index; the board's own phase offset shows up only in the wall time at
which that edge (and everything timed from it) appears at the output.
The counter also counts nominal-grid edges, so synced boards read the
same value at any common wall instant.

The node is passive: it returns outcomes and the simulation host
(network/mesh.py) schedules the resulting events and writes the trace.
"""

from collections import deque
from dataclasses import dataclass, field
from enum import Enum
from typing import Deque, List, Optional, Tuple, Union

from protocol.errors import ScriptRuntimeError
from protocol.wire import (
    CLOCK_COMMANDS,
    DATA_COMMANDS,
    Command,
    Frame,
    LinkClock,
    flag_latency,
    frame_latency,
)
from timing.clock_math import (
    AbsTick48,
    ClockDomain,
    WallTime,
    edge_index_at_or_before,
    edge_time,
    next_edge_at_or_after,
    period_fs,
    tick_add,
    tick_before,
    tick_diff,
)

UNASSIGNED_ID = None
DEFAULT_FIFO_DEPTH = 16
DEFAULT_TX_QUEUE_DEPTH = 16

# Peripheral pipeline between delivery and clock-command latch (fabric cycles)
CLOCK_LATCH_CYCLES = 1


@dataclass(frozen=True)
class ClockStopped:
    base: AbsTick48 = 0


@dataclass(frozen=True)
class ClockRunning:
    start_edge: int
    base: AbsTick48 = 0


ClockState = Union[ClockStopped, ClockRunning]


@dataclass(frozen=True)
class ClockCommandEffect:
    cmd: Command
    apply_edge: int
    apply_time: WallTime


class DeliveryAction(Enum):
    FILTERED = "filtered"
    STORED = "stored"
    CLOCK = "clock"
    ACCEPTED = "accepted"     # addressed to us, no stored state (NOP)


@dataclass
class DeliveryOutcome:
    action: DeliveryAction
    effect: Optional[ClockCommandEffect] = None
    dropped: Optional[Frame] = None    # oldest entry evicted by overflow


@dataclass(frozen=True)
class TxSlot:
    frame: Frame
    t_start: WallTime
    t_end: WallTime


@dataclass
class BoardNode:
    """XCOM peripheral state for the board on hub port `index`."""
    index: int
    n_ports: int
    fabric: ClockDomain = field(default_factory=ClockDomain)
    link: LinkClock = field(default_factory=LinkClock)
    id: Optional[int] = UNASSIGNED_ID
    is_master: bool = False
    fifo_depth: int = DEFAULT_FIFO_DEPTH
    tx_queue_depth: int = DEFAULT_TX_QUEUE_DEPTH

    clock_state: ClockState = field(default_factory=ClockStopped)
    tx_busy_until: WallTime = 0
    tx_queue: Deque[TxSlot] = field(default_factory=deque)
    rx_last: List[Optional[Frame]] = field(default_factory=list)
    rx_fifo: List[Deque[Tuple[Frame, WallTime]]] = field(default_factory=list)
    flag_in: List[bool] = field(default_factory=list)
    flag_out: bool = False
    flag_busy_until: WallTime = 0
    overflow_count: int = 0
    backpressure_count: int = 0

    def __post_init__(self):
        self.rx_last = [None] * self.n_ports
        self.rx_fifo = [deque() for _ in range(self.n_ports)]
        self.flag_in = [False] * self.n_ports

    # ------------------------------------------------------------------
    # Tx
    # ------------------------------------------------------------------

    def enqueue_send(self, frame: Frame, t_now: WallTime) -> Optional[TxSlot]:
        """
        Queue a frame on this board's channel.

        Transmission starts at max(t_now, tx_busy_until). Returns the slot,
        or None when the outstanding-frame queue is full (backpressure; the
        send is dropped and counted).
        """
        frame.validate()
        if self.id is UNASSIGNED_ID and frame.cmd != Command.AUTOID_PROBE:
            raise ScriptRuntimeError(f"board on port {self.index} has no XCOM ID yet")
        while self.tx_queue and self.tx_queue[0].t_end <= t_now:
            self.tx_queue.popleft()
        if len(self.tx_queue) >= self.tx_queue_depth:
            self.backpressure_count += 1
            return None
        t_start = max(t_now, self.tx_busy_until)
        slot = TxSlot(frame=frame, t_start=t_start, t_end=t_start + frame_latency(frame.cmd, self.link))
        self.tx_busy_until = slot.t_end
        self.tx_queue.append(slot)
        return slot

    # ------------------------------------------------------------------
    # Rx
    # ------------------------------------------------------------------

    def accepts(self, frame: Frame) -> bool:
        return frame.is_broadcast or (self.id is not UNASSIGNED_ID and frame.dst == self.id)

    def on_delivery(self, port: int, frame: Frame, t: WallTime) -> DeliveryOutcome:
        if not 0 <= port < self.n_ports:
            raise ValueError(f"rx port {port} out of range")
        if not self.accepts(frame):
            return DeliveryOutcome(DeliveryAction.FILTERED)

        if frame.cmd in CLOCK_COMMANDS:
            return DeliveryOutcome(DeliveryAction.CLOCK, effect=self.clock_effect(frame.cmd, t))

        if frame.cmd in DATA_COMMANDS or frame.cmd == Command.AUTOID_PROBE:
            self.rx_last[port] = frame
            fifo = self.rx_fifo[port]
            fifo.append((frame, t))
            dropped = None
            if len(fifo) > self.fifo_depth:
                dropped = fifo.popleft()[0]
                self.overflow_count += 1
            return DeliveryOutcome(DeliveryAction.STORED, dropped=dropped)

        return DeliveryOutcome(DeliveryAction.ACCEPTED)

    def clock_effect(self, cmd: Command, t: WallTime) -> ClockCommandEffect:
        """Latch edge for a clock command delivered at t (nominal grid)."""
        latch_after = t + CLOCK_LATCH_CYCLES * period_fs(self.fabric.freq_hz)
        apply_edge, _ = next_edge_at_or_after(self.fabric.nominal, latch_after)
        return ClockCommandEffect(cmd=cmd, apply_edge=apply_edge, apply_time=edge_time(self.fabric, apply_edge))

    def pop_rx(self, port: Optional[int] = None) -> Optional[Tuple[int, Frame]]:
        """Oldest data frame on `port`, or on the lowest non-empty port for ANY."""
        ports = range(self.n_ports) if port is None else (port,)
        for p in ports:
            fifo = self.rx_fifo[p]
            while fifo:
                frame, _ = fifo.popleft()
                if frame.cmd in DATA_COMMANDS:
                    return p, frame
        return None

    def has_rx(self, port: Optional[int] = None) -> bool:
        ports = range(self.n_ports) if port is None else (port,)
        return any(frame.cmd in DATA_COMMANDS for p in ports for frame, _ in self.rx_fifo[p])

    def claim_autoid_probes(self, nonce: Optional[int]) -> List[int]:
        """Drain AUTO-ID probes from every FIFO; ports whose probe carried `nonce`."""
        matches = []
        for p, fifo in enumerate(self.rx_fifo):
            kept = deque()
            for frame, t in fifo:
                if frame.cmd == Command.AUTOID_PROBE:
                    if nonce is not None and frame.payload == nonce:
                        matches.append(p)
                else:
                    kept.append((frame, t))
            self.rx_fifo[p] = kept
        return matches

    # ------------------------------------------------------------------
    # Absolute clock
    # ------------------------------------------------------------------

    def apply_clock_command(self, effect: ClockCommandEffect) -> Optional[str]:
        """Latch a clock command. Returns a note when the command was a no-op."""
        state = self.clock_state
        if effect.cmd == Command.CLK_RESET:
            self.clock_state = ClockStopped(base=0)
        elif effect.cmd == Command.CLK_START:
            if isinstance(state, ClockRunning):
                return "START while running ignored"
            self.clock_state = ClockRunning(start_edge=effect.apply_edge, base=state.base)
        elif effect.cmd == Command.CLK_STOP:
            if isinstance(state, ClockStopped):
                return "STOP while stopped ignored"
            frozen = tick_add(state.base, max(0, effect.apply_edge - state.start_edge))
            self.clock_state = ClockStopped(base=frozen)
        else:
            raise ValueError(f"{effect.cmd!r} is not a clock command")
        return None

    @property
    def clock_running(self) -> bool:
        return isinstance(self.clock_state, ClockRunning)

    def current_edge(self, t: WallTime) -> int:
        """Nominal-grid edge index at or before t. Phase never moves the count."""
        return edge_index_at_or_before(self.fabric.nominal, t)

    def tick_at_edge(self, edge: int) -> AbsTick48:
        state = self.clock_state
        if isinstance(state, ClockStopped):
            return state.base
        return tick_add(state.base, max(0, edge - state.start_edge))

    def read_abs_clock(self, t: WallTime) -> AbsTick48:
        return self.tick_at_edge(self.current_edge(t))

    def tick_reached(self, tick: AbsTick48, t: WallTime) -> bool:
        return not tick_before(self.read_abs_clock(t), tick)

    def edge_when_tick(self, tick: AbsTick48, edge: int) -> Optional[int]:
        """
        Edge index at which the counter reads `tick`, counting forward from
        `edge` (windowed, so at most 2^47 - 1 ticks ahead). None if stopped.
        """
        state = self.clock_state
        if isinstance(state, ClockStopped):
            return None
        current = max(edge, state.start_edge)
        return current + tick_diff(self.tick_at_edge(current), tick)

    # ------------------------------------------------------------------
    # Flag line
    # ------------------------------------------------------------------

    def set_flag(self, level: bool, t: WallTime) -> Optional[WallTime]:
        """
        Drive the flag line. Returns the launch time of the edge, or None if
        the level is unchanged. Edges are at least one link cycle apart.
        """
        if level == self.flag_out:
            return None
        launch = max(t, self.flag_busy_until)
        self.flag_busy_until = launch + flag_latency(self.link)
        self.flag_out = level
        return launch

    def on_flag(self, port: int, level: bool) -> None:
        self.flag_in[port] = level
