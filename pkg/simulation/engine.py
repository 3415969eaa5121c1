"""
Discrete-Event Simulation Kernel
================================
Single-threaded event queue ordered by (t, seq): timestamp first, then
insertion order, so events at equal times run first-in first-out and a run
is a pure function of its inputs.

Clock counters are never ticked; they are evaluated lazily from edge
arithmetic when read. Simulating days of wall time therefore costs
O(#events), not O(#clock cycles).

The engine also owns the trace sink. Records are stamped with the current
simulation time, which is nondecreasing by construction.
"""

import heapq
import itertools
from enum import Enum
from typing import Any, Callable, List, NamedTuple, Optional, Tuple

from pipeline.trace import EVENT_NAMES, TraceRecord
from protocol.errors import SimulationFault, XcomError
from timing.clock_math import WallTime


class EventKind(Enum):
    SEND = "send"
    TX_START = "tx_start"
    TX_END = "tx_end"
    DELIVERY = "delivery"
    FLAG_EDGE = "flag_edge"
    CLK_APPLY = "clk_apply"
    SCRIPT_STEP = "script_step"
    PROBE = "probe"


class Event(NamedTuple):
    # Heap order is (t, seq); seq is unique so later fields never compare.
    t: WallTime
    seq: int
    kind: EventKind
    handler: Callable[..., Any]
    args: Tuple[Any, ...]


class Engine:
    def __init__(self):
        self.now: WallTime = 0
        self.trace: List[TraceRecord] = []
        self.events_executed = 0
        self._queue: List[Event] = []
        self._seq = itertools.count()

    def schedule(self, t: WallTime, kind: EventKind, handler: Callable[..., Any], *args) -> Event:
        if t < self.now:
            raise SimulationFault(
                f"retro-causal {kind.value} event at t={t} fs (now {self.now} fs)"
            )
        event = Event(t, next(self._seq), kind, handler, args)
        heapq.heappush(self._queue, event)
        return event

    @property
    def pending(self) -> int:
        return len(self._queue)

    def next_time(self) -> Optional[WallTime]:
        return self._queue[0].t if self._queue else None

    def run_until(self, horizon: WallTime) -> List[TraceRecord]:
        """
        Execute events in (t, seq) order while t <= horizon. Events beyond
        the horizon stay queued. Library errors propagate unchanged; any
        other exception is an internal fault. The partial trace remains
        available on self.trace either way.
        """
        queue = self._queue
        while queue and queue[0].t <= horizon:
            event = heapq.heappop(queue)
            self.now = event.t
            try:
                event.handler(*event.args)
            except XcomError:
                raise
            except Exception as exc:
                raise SimulationFault(
                    f"internal fault in {event.kind.value} event at t={event.t} fs: {exc}"
                ) from exc
            self.events_executed += 1
        return self.trace

    def run(self) -> List[TraceRecord]:
        """Run until the queue is empty."""
        while self._queue:
            self.run_until(max(event.t for event in self._queue))
        return self.trace

    def advance_to(self, t: WallTime) -> None:
        """Move the clock forward across an idle interval."""
        if self._queue and self._queue[0].t < t:
            raise SimulationFault(f"cannot skip to t={t} fs with events pending at t={self._queue[0].t} fs")
        self.now = max(self.now, t)

    def emit(self, board: Optional[int], event: str, **fields) -> TraceRecord:
        if event not in EVENT_NAMES:
            raise SimulationFault(f"unknown trace event '{event}'")
        record = TraceRecord(t_fs=self.now, board=board, event=event, fields=fields)
        self.trace.append(record)
        return record
