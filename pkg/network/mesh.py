"""
XCOM Network Simulation Host
============================
Binds the pieces into one runnable network: the event engine, the
full-mesh topology, one BoardNode per hub port and, optionally, one script
interpreter per board. Every node-level state change is dispatched from
here as an engine event, and every observable effect is written to the
trace here.
"""

from typing import Callable, Dict, List, Optional, Sequence

from network.fabric import Delivery, Topology, schedule_transmission
from network.node import (
    BoardNode,
    ClockCommandEffect,
    ClockRunning,
    DeliveryAction,
    TxSlot,
    DEFAULT_FIFO_DEPTH,
    DEFAULT_TX_QUEUE_DEPTH,
)
from protocol.errors import ScriptRuntimeError, SyncError
from protocol.wire import FlagToggle, Frame, LinkClock
from scripting.interpreter import BoardInterpreter
from simulation.engine import Engine, EventKind
from simulation.rng import CounterRng
from timing.clock_math import (
    DEFAULT_FABRIC_CLOCK_HZ,
    ClockDomain,
    WallTime,
    edge_time,
    next_edge_at_or_after,
)

# Default gap between the RESET and START broadcasts, in link cycles
DEFAULT_SYNC_GAP_CYCLES = 10

FlagListener = Callable[[int, int, bool, WallTime], None]


class XcomNetwork:
    def __init__(
        self,
        topology: Topology,
        fabric_clock_hz: int = DEFAULT_FABRIC_CLOCK_HZ,
        link_clock: Optional[LinkClock] = None,
        seed: int = 0,
        fifo_depth: int = DEFAULT_FIFO_DEPTH,
        tx_queue_depth: int = DEFAULT_TX_QUEUE_DEPTH,
        sync_gap_cycles: int = DEFAULT_SYNC_GAP_CYCLES,
        power_on_edge: Optional[Sequence[Optional[int]]] = None,
        trace_filtered: bool = True,
    ):
        self.topology = topology
        self.link_clock = link_clock or LinkClock()
        self.sync_gap_cycles = sync_gap_cycles
        self.trace_filtered = trace_filtered
        self.engine = Engine()
        self.rng = CounterRng(seed)
        self.nodes: List[BoardNode] = [
            BoardNode(
                index=i,
                n_ports=topology.n_boards,
                fabric=ClockDomain(fabric_clock_hz, topology.phase_fs[i]),
                link=self.link_clock,
                fifo_depth=fifo_depth,
                tx_queue_depth=tx_queue_depth,
            )
            for i in range(topology.n_boards)
        ]
        # Boards that free-run from power-up (unsynchronized counters)
        for i, edge in enumerate(power_on_edge or ()):
            if edge is not None:
                self.nodes[i].clock_state = ClockRunning(start_edge=edge, base=0)
        self.interpreters: Dict[int, BoardInterpreter] = {}
        self.flag_listeners: List[FlagListener] = []

    @classmethod
    def from_config(cls, config) -> "XcomNetwork":
        """Build from a simulation.run_config.RunConfig."""
        return cls(
            topology=config.topology(),
            fabric_clock_hz=config.fabric_clock_hz,
            link_clock=LinkClock(config.link_clock_hz),
            seed=config.seed,
            fifo_depth=config.fifo_depth,
            tx_queue_depth=config.tx_queue_depth,
            sync_gap_cycles=config.sync_gap_cycles,
            power_on_edge=config.power_on_edge,
            trace_filtered=config.trace_filtered,
        )

    @property
    def n_boards(self) -> int:
        return self.topology.n_boards

    @property
    def now(self) -> WallTime:
        return self.engine.now

    @property
    def trace(self):
        return self.engine.trace

    def emit(self, board: Optional[int], event: str, **fields):
        return self.engine.emit(board, event, **fields)

    def run_until(self, horizon: WallTime):
        return self.engine.run_until(horizon)

    def assign_port_ids(self) -> None:
        """Skip AUTO-ID: every board takes its port index as its ID."""
        for node in self.nodes:
            node.id = node.index

    def set_master(self, master: int) -> None:
        if not 0 <= master < self.n_boards:
            raise SyncError(f"master board {master} out of range")
        for node in self.nodes:
            node.is_master = node.index == master

    # ------------------------------------------------------------------
    # Tx path
    # ------------------------------------------------------------------

    def send(self, board: int, frame: Frame) -> Optional[TxSlot]:
        """Queue a frame on `board`'s channel at the current time."""
        node = self.nodes[board]
        slot = node.enqueue_send(frame, self.now)
        if slot is None:
            self.emit(board, 'tx_backpressure', dropped_total=node.backpressure_count, **frame.describe())
            return None
        self.engine.schedule(slot.t_start, EventKind.TX_START, self._on_tx_start, board, slot)
        return slot

    def schedule_send(self, board: int, frame: Frame, t: WallTime) -> None:
        self.engine.schedule(t, EventKind.SEND, self.send, board, frame)

    def _on_tx_start(self, board: int, slot: TxSlot) -> None:
        self.emit(board, 'tx_start', end_fs=slot.t_end, **slot.frame.describe())
        for delivery in schedule_transmission(self.topology, board, slot.frame, slot.t_start, self.link_clock):
            self.engine.schedule(delivery.t_deliver, EventKind.DELIVERY, self._on_delivery, delivery)
        self.engine.schedule(slot.t_end, EventKind.TX_END, self._on_tx_end, board, slot)

    def _on_tx_end(self, board: int, slot: TxSlot) -> None:
        self.emit(board, 'tx_end', dst=f"0x{slot.frame.dst:X}", cmd=slot.frame.cmd.name)

    # ------------------------------------------------------------------
    # Rx path
    # ------------------------------------------------------------------

    def _on_delivery(self, delivery: Delivery) -> None:
        if isinstance(delivery.payload, FlagToggle):
            self._on_flag_delivery(delivery)
            return
        board, port, frame = delivery.dst_board, delivery.rx_port, delivery.payload
        node = self.nodes[board]
        outcome = node.on_delivery(port, frame, self.now)

        if outcome.action is DeliveryAction.FILTERED:
            if self.trace_filtered:
                self.emit(board, 'rx_filtered', port=port, dst=f"0x{frame.dst:X}", cmd=frame.cmd.name)
            return

        self.emit(board, 'rx_deliver', port=port, latency_fs=self.now - delivery.t_start, **frame.describe())
        if outcome.dropped is not None:
            self.emit(board, 'rx_overflow', port=port, overflow_total=node.overflow_count,
                      **outcome.dropped.describe())
        if outcome.action is DeliveryAction.CLOCK:
            effect = outcome.effect
            self.engine.schedule(effect.apply_time, EventKind.CLK_APPLY, self._on_clk_apply, board, effect)
        elif outcome.action is DeliveryAction.STORED:
            interp = self.interpreters.get(board)
            if interp is not None:
                interp.on_rx(self.now)

    def _on_clk_apply(self, board: int, effect: ClockCommandEffect) -> None:
        node = self.nodes[board]
        note = node.apply_clock_command(effect)
        if note:
            self.emit(board, 'clk_note', cmd=effect.cmd.name, edge=effect.apply_edge, note=note)
        else:
            self.emit(board, 'clk_applied', cmd=effect.cmd.name, edge=effect.apply_edge,
                      tick=node.tick_at_edge(effect.apply_edge))
        interp = self.interpreters.get(board)
        if interp is not None:
            interp.on_clock_change(self.now)

    # ------------------------------------------------------------------
    # Flag line
    # ------------------------------------------------------------------

    def set_flag(self, board: int, level: bool) -> Optional[WallTime]:
        launch = self.nodes[board].set_flag(level, self.now)
        if launch is None:
            return None
        for delivery in schedule_transmission(self.topology, board, FlagToggle(level), launch, self.link_clock):
            self.engine.schedule(delivery.t_deliver, EventKind.FLAG_EDGE, self._on_delivery, delivery)
        return launch

    def _on_flag_delivery(self, delivery: Delivery) -> None:
        board, port, level = delivery.dst_board, delivery.rx_port, delivery.payload.level
        self.nodes[board].on_flag(port, level)
        self.emit(board, 'flag_edge', port=port, level=int(level), latency_fs=self.now - delivery.t_start)
        interp = self.interpreters.get(board)
        if interp is not None:
            interp.on_flag(self.now)
        for listener in self.flag_listeners:
            listener(board, port, level, self.now)

    # ------------------------------------------------------------------
    # Pulses and clock probes
    # ------------------------------------------------------------------

    def emit_pulse(self, board: int, tag: str, edge: Optional[int] = None) -> None:
        """Pulse record stamped with the board's own edge wall time and counter value."""
        node = self.nodes[board]
        if edge is None:
            edge = node.current_edge(self.now)
        self.emit(board, 'pulse', tag=tag, edge=edge, tick=node.tick_at_edge(edge))

    def schedule_pulse_at_tick(self, board: int, tick: int, tag: str) -> WallTime:
        """Emit a pulse on `board` at the fabric edge where its counter reads `tick`."""
        node = self.nodes[board]
        edge = node.edge_when_tick(tick, node.current_edge(self.now))
        if edge is None:
            raise SyncError(f"board {board} clock is stopped; cannot time a pulse at tick {tick}")
        t = edge_time(node.fabric, edge)
        if t < self.now:
            raise SyncError(f"tick {tick} already passed on board {board}")
        self.engine.schedule(t, EventKind.PROBE, self.emit_pulse, board, tag, edge)
        return t

    # ------------------------------------------------------------------
    # Scripts
    # ------------------------------------------------------------------

    def next_edge(self, board: int, t: WallTime) -> int:
        return next_edge_at_or_after(self.nodes[board].fabric, t)[0]

    def schedule_step(self, board: int, edge: int, callback: Callable[..., None], *args) -> None:
        t = edge_time(self.nodes[board].fabric, edge)
        self.engine.schedule(t, EventKind.SCRIPT_STEP, self._run_step, board, callback, args)

    def _run_step(self, board: int, callback: Callable[..., None], args) -> None:
        try:
            callback(*args)
        except ScriptRuntimeError as exc:
            interp = self.interpreters.get(board)
            ins = interp.current_instruction if interp is not None else None
            self.emit(board, 'script_error', pc=interp.pc if interp else -1,
                      line=ins.line if ins else 0, message=str(exc))
            raise

    def load_program(self, program) -> None:
        """Attach one interpreter per board section and start each at its next edge."""
        program.validate_boards(self.n_boards)
        for board, board_program in sorted(program.boards.items()):
            interp = BoardInterpreter(self, board, board_program)
            self.interpreters[board] = interp
            interp.start(self.now)
