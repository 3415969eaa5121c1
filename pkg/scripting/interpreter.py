"""
Board Program Interpreter
=========================
Runs one board's program against the simulation host. The interpreter
advances only on SCRIPT_STEP events at the board's own fabric edges:

    - a non-blocking instruction takes one edge; the next runs on edge + 1
    - a blocking instruction (WAITT, RECV, WFLAG) that has to wait resumes
      on the edge where its condition holds, and the instruction after it
      runs on that same edge

So `WAITT 1000; PULSE t` pulses on the edge where the counter reads 1000.
The counter value at edge k is the nominal-grid count, so a board whose
edges lead the grid by its phase offset wakes on the same edge index.
Wake-ups are tagged with a token; bumping the token cancels stale ones.
"""

from enum import Enum
from typing import List, Optional

from network.sync import start_sync_broadcast
from protocol.errors import ScriptRuntimeError
from protocol.wire import BROADCAST_ADDR, CLOCK_COMMANDS, PAYLOAD_WIDTH, Frame
from scripting.program import NUM_REGISTERS, STATUS_REG, BoardProgram, Instruction, Opcode
from timing.clock_math import WallTime, tick_before

TIMEOUT_SENTINEL = 0xFFFFFFFF


class RunState(Enum):
    READY = "ready"
    WAIT_TIME = "wait_time"
    WAIT_CLOCK = "wait_clock"      # WAITT while the counter is stopped
    WAIT_RX = "wait_rx"
    WAIT_FLAG = "wait_flag"
    HALTED = "halted"


class _Blocked(Exception):
    pass


class BoardInterpreter:
    def __init__(self, host, board: int, program: BoardProgram):
        self.host = host
        self.board = board
        self.program = program
        self.regs: List[int] = [0] * NUM_REGISTERS
        self.pc = 0
        self.state = RunState.READY
        self.steps_executed = 0
        self._token = 0
        self._resuming = False
        self._wait_edge = 0
        self._wake_edge: Optional[int] = None
        self._deadline: Optional[int] = None

    @property
    def node(self):
        return self.host.nodes[self.board]

    @property
    def current_instruction(self) -> Optional[Instruction]:
        if 0 <= self.pc < len(self.program.instructions):
            return self.program.instructions[self.pc]
        return None

    @property
    def halted(self) -> bool:
        return self.state is RunState.HALTED

    # ------------------------------------------------------------------
    # Scheduling
    # ------------------------------------------------------------------

    def start(self, t: WallTime) -> None:
        self._schedule(self.host.next_edge(self.board, t))

    def _schedule(self, edge: int, resuming: bool = False) -> None:
        self._token += 1
        self._resuming = resuming
        self._wake_edge = edge if resuming else None
        self.host.schedule_step(self.board, edge, self.step, edge, self._token)

    def _wake(self, t: WallTime) -> None:
        """Resume a blocked instruction no earlier than the edge after it blocked."""
        edge = max(self._wait_edge + 1, self.host.next_edge(self.board, t))
        if self._wake_edge is not None and self._wake_edge <= edge:
            return
        self._schedule(edge, resuming=True)

    def on_rx(self, t: WallTime) -> None:
        if self.state is not RunState.WAIT_RX:
            return
        if self.node.has_rx(self.current_instruction.args[1]):
            self._wake(t)

    def on_flag(self, t: WallTime) -> None:
        if self.state is not RunState.WAIT_FLAG:
            return
        port, level = self.current_instruction.args
        if self.node.flag_in[port] == level:
            self._wake(t)

    def on_clock_change(self, t: WallTime) -> None:
        if self.state in (RunState.WAIT_TIME, RunState.WAIT_CLOCK):
            self._schedule(self.host.next_edge(self.board, t), resuming=True)

    # ------------------------------------------------------------------
    # Execution
    # ------------------------------------------------------------------

    def step(self, edge: int, token: Optional[int] = None) -> None:
        if self.halted or (token is not None and token != self._token):
            return
        resuming, self._resuming = self._resuming, False
        self._wake_edge = None
        self.state = RunState.READY
        while True:
            ins = self.current_instruction
            if ins is None:
                self._halt()
                return
            try:
                self._execute(ins, edge, resuming)
            except _Blocked:
                return
            self.steps_executed += 1
            if self.halted:
                return
            if not resuming:
                self._schedule(edge + 1)
                return
            resuming = False

    def _block(self, state: RunState, edge: int) -> None:
        self.state = state
        self._wait_edge = edge
        raise _Blocked()

    def _halt(self) -> None:
        self.state = RunState.HALTED
        self._token += 1
        self.host.emit(self.board, 'script_halt', pc=self.pc)

    def _value(self, operand, width: int) -> int:
        value = self.regs[operand.value] if operand.is_reg else operand.value
        return value & ((1 << width) - 1)

    def _execute(self, ins: Instruction, edge: int, resuming: bool) -> None:
        op, args = ins.op, ins.args
        node = self.node

        if op is Opcode.WAITT:
            (tick,) = args
            if not tick_before(node.tick_at_edge(edge), tick):
                self.pc += 1
                return
            target = node.edge_when_tick(tick, edge)
            if target is None:
                self._block(RunState.WAIT_CLOCK, edge)
            self.state = RunState.WAIT_TIME
            self._wait_edge = edge
            self._schedule(target, resuming=True)
            raise _Blocked()

        if op is Opcode.RECV:
            reg, port, timeout = args
            if node.id is None:
                raise ScriptRuntimeError(f"RECV on board {self.board} before it has an XCOM ID")
            if not resuming:
                self._deadline = None if timeout is None else edge + timeout
            got = node.pop_rx(port)
            if got is not None:
                src, frame = got
                self.regs[reg] = frame.payload
                self.regs[reg + 1] = src
                self.regs[STATUS_REG] = 0
                self._deadline = None
                self.pc += 1
                return
            if self._deadline is not None and edge >= self._deadline:
                self.regs[reg] = TIMEOUT_SENTINEL
                self.regs[reg + 1] = TIMEOUT_SENTINEL
                self.regs[STATUS_REG] = 1
                self._deadline = None
                self.pc += 1
                return
            if self._deadline is not None:
                self.state = RunState.WAIT_RX
                self._wait_edge = edge
                self._schedule(self._deadline, resuming=True)
                raise _Blocked()
            self._block(RunState.WAIT_RX, edge)

        if op is Opcode.SEND:
            dst, cmd, operand = args
            self.host.send(self.board, Frame(dst, cmd, self._value(operand, PAYLOAD_WIDTH[cmd])))
            self.pc += 1
            return

        if op is Opcode.BCAST:
            cmd, operand = args
            if cmd in CLOCK_COMMANDS and not node.is_master:
                raise ScriptRuntimeError(f"BCAST {cmd.name} from board {self.board}, which is not the master")
            payload = self._value(operand, PAYLOAD_WIDTH[cmd]) if operand is not None else 0
            self.host.send(self.board, Frame(BROADCAST_ADDR, cmd, payload))
            self.pc += 1
            return

        if op is Opcode.SYNC:
            if not node.is_master:
                raise ScriptRuntimeError(f"SYNC on board {self.board}, which is not the master")
            start_sync_broadcast(self.host, self.board)
            self.pc += 1
            return

        if op in (Opcode.SETF, Opcode.CLRF):
            self.host.set_flag(self.board, op is Opcode.SETF)
            self.pc += 1
            return

        if op is Opcode.WFLAG:
            port, level = args
            if node.flag_in[port] == level:
                self.pc += 1
                return
            self._block(RunState.WAIT_FLAG, edge)

        if op is Opcode.PULSE:
            self.host.emit_pulse(self.board, args[0], edge)
            self.pc += 1
            return

        if op is Opcode.SET:
            reg, imm = args
            self.regs[reg] = imm
            self.pc += 1
            return

        if op in (Opcode.BEQ, Opcode.BNE):
            reg, imm = args
            taken = (self.regs[reg] == imm) == (op is Opcode.BEQ)
            self.pc = ins.target if taken else self.pc + 1
            return

        if op is Opcode.JMP:
            self.pc = ins.target
            return

        if op is Opcode.HALT:
            self._halt()
            return

        raise ScriptRuntimeError(f"unhandled opcode {op.value}")
