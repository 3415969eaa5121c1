"""
Scenario Program Parser
=======================
Parses the line-based board-program format into per-board instruction
lists with resolved branch targets. The grammar is in scripting/GRAMMAR.md.

    ; conditional jump on received data
    board 0:
        SEND 1 D32 0xDEADBEEF
        HALT
    board 1:
        RECV r1 ANY
        BNE r1 0xDEADBEEF fail
        PULSE ok
        HALT
    fail:
        PULSE bad
        HALT

Labels are scoped to their board section. Mnemonics are case-insensitive;
labels and pulse tags are not.
"""

import re
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Tuple

from protocol.errors import ScriptParseError
from protocol.wire import BROADCAST_ADDR, PAYLOAD_WIDTH, SIZE_CLASSES, Command
from timing.clock_math import TICK_MODULUS

NUM_REGISTERS = 16
REGISTER_WIDTH = 32
STATUS_REG = 15          # RECV timeout flag
MAX_RECV_REG = 13        # RECV writes reg and reg + 1; r14/r15 excluded
MAX_PORT = 14

BOARD_HEADER = re.compile(r'^board\s+(\d+)\s*:\s*$', re.IGNORECASE)
LABEL = re.compile(r'^([A-Za-z_][A-Za-z0-9_]*):$')
IDENT = re.compile(r'^[A-Za-z_][A-Za-z0-9_.\-]*$')
REGISTER = re.compile(r'^[rR](\d+)$')


class Opcode(Enum):
    WAITT = "WAITT"
    RECV = "RECV"
    SEND = "SEND"
    BCAST = "BCAST"
    SYNC = "SYNC"
    SETF = "SETF"
    CLRF = "CLRF"
    WFLAG = "WFLAG"
    PULSE = "PULSE"
    SET = "SET"
    BEQ = "BEQ"
    BNE = "BNE"
    JMP = "JMP"
    HALT = "HALT"


BRANCH_OPS = frozenset({Opcode.BEQ, Opcode.BNE, Opcode.JMP})

# BCAST command words
BCAST_COMMANDS: Dict[str, Command] = {
    'NOP': Command.NOP,
    'RESET': Command.CLK_RESET,
    'START': Command.CLK_START,
    'STOP': Command.CLK_STOP,
    **SIZE_CLASSES,
}


@dataclass(frozen=True)
class Operand:
    """Immediate value, or register index when is_reg."""
    value: int
    is_reg: bool = False


@dataclass
class Instruction:
    op: Opcode
    args: Tuple = ()
    line: int = 0
    label: Optional[str] = None      # branch target name
    target: Optional[int] = None     # resolved instruction index

    def __str__(self) -> str:
        parts = [self.op.value] + [str(a) for a in self.args]
        if self.label:
            parts.append(self.label)
        return ' '.join(parts)


@dataclass
class BoardProgram:
    board: int
    instructions: List[Instruction] = field(default_factory=list)
    labels: Dict[str, int] = field(default_factory=dict)
    line: int = 0                     # header line


@dataclass
class Program:
    boards: Dict[int, BoardProgram] = field(default_factory=dict)

    def validate_master(self, master: int) -> None:
        """SYNC may only appear in the master board's program."""
        for board, bp in sorted(self.boards.items()):
            if board == master:
                continue
            for ins in bp.instructions:
                if ins.op is Opcode.SYNC:
                    raise ScriptParseError(f"SYNC in board {board}'s program, but the master is board {master}",
                                           line=ins.line)

    def validate_boards(self, n_boards: int) -> None:
        """Board sections and RECV/WFLAG ports must exist in an n-board network."""
        for board, bp in sorted(self.boards.items()):
            if not 0 <= board < n_boards:
                raise ScriptParseError(
                    f"section for board {board}, but the network has {n_boards} boards", line=bp.line
                )
            for ins in bp.instructions:
                if ins.op is Opcode.RECV:
                    port = ins.args[1]
                elif ins.op is Opcode.WFLAG:
                    port = ins.args[0]
                else:
                    continue
                if port is not None and port >= n_boards:
                    raise ScriptParseError(
                        f"port {port} out of range [0, {n_boards - 1}] for a {n_boards}-board network",
                        line=ins.line,
                    )


# ---------------------------------------------------------------------------
# Operand parsing
# ---------------------------------------------------------------------------

def _literal(token: str, line: int) -> int:
    try:
        if token.lower().startswith('0x'):
            return int(token[2:], 16)
        return int(token, 10)
    except ValueError:
        raise ScriptParseError(f"expected a number, got '{token}'", line=line) from None


def _ranged(token: str, line: int, limit: int, what: str) -> int:
    value = _literal(token, line)
    if not 0 <= value < limit:
        raise ScriptParseError(f"{what} {value} out of range [0, {limit - 1}]", line=line)
    return value


def _register(token: str, line: int, highest: int = NUM_REGISTERS - 1) -> int:
    m = REGISTER.match(token)
    if not m:
        raise ScriptParseError(f"expected a register r0-r{highest}, got '{token}'", line=line)
    index = int(m.group(1))
    if index > highest:
        raise ScriptParseError(f"register r{index} out of range (r0-r{highest})", line=line)
    return index


def _value(token: str, line: int, width: int) -> Operand:
    if REGISTER.match(token):
        return Operand(_register(token, line), is_reg=True)
    return Operand(_ranged(token, line, 1 << width, f"{width}-bit immediate"))


def _expect(args: List[str], lo: int, hi: int, op: Opcode, line: int) -> None:
    if not lo <= len(args) <= hi:
        want = str(lo) if lo == hi else f"{lo}-{hi}"
        raise ScriptParseError(f"{op.value} takes {want} operand(s), got {len(args)}", line=line)


def _label_name(token: str, line: int) -> str:
    if not IDENT.match(token):
        raise ScriptParseError(f"bad label name '{token}'", line=line)
    return token


def parse_instruction(tokens: List[str], line: int) -> Instruction:
    mnemonic, args = tokens[0].upper(), tokens[1:]
    try:
        op = Opcode(mnemonic)
    except ValueError:
        raise ScriptParseError(f"unknown mnemonic '{tokens[0]}'", line=line) from None

    if op is Opcode.WAITT:
        _expect(args, 1, 1, op, line)
        return Instruction(op, (_ranged(args[0], line, TICK_MODULUS, "tick"),), line)

    if op is Opcode.RECV:
        _expect(args, 2, 4, op, line)
        reg = _register(args[0], line, highest=MAX_RECV_REG)
        port = None if args[1].upper() == 'ANY' else _ranged(args[1], line, MAX_PORT + 1, "port")
        timeout = None
        if len(args) > 2:
            if len(args) != 4 or args[2].upper() != 'TIMEOUT':
                raise ScriptParseError("RECV expects 'TIMEOUT <ticks>' after the port", line=line)
            timeout = _ranged(args[3], line, TICK_MODULUS, "timeout")
        return Instruction(op, (reg, port, timeout), line)

    if op is Opcode.SEND:
        _expect(args, 3, 3, op, line)
        dst = _literal(args[0], line)
        if not 0 <= dst <= BROADCAST_ADDR:
            raise ScriptParseError(f"dst {dst} exceeds the 4-bit address field", line=line)
        cmd = SIZE_CLASSES.get(args[1].upper())
        if cmd is None:
            raise ScriptParseError(f"unknown size class '{args[1]}' (D8, D16, D32)", line=line)
        return Instruction(op, (dst, cmd, _value(args[2], line, PAYLOAD_WIDTH[cmd])), line)

    if op is Opcode.BCAST:
        _expect(args, 1, 2, op, line)
        cmd = BCAST_COMMANDS.get(args[0].upper())
        if cmd is None:
            raise ScriptParseError(f"unknown broadcast command '{args[0]}'", line=line)
        width = PAYLOAD_WIDTH[cmd]
        if width and len(args) != 2:
            raise ScriptParseError(f"BCAST {args[0]} needs a value", line=line)
        if not width and len(args) != 1:
            raise ScriptParseError(f"BCAST {args[0]} takes no value", line=line)
        value = _value(args[1], line, width) if width else None
        return Instruction(op, (cmd, value), line)

    if op in (Opcode.SYNC, Opcode.SETF, Opcode.CLRF, Opcode.HALT):
        _expect(args, 0, 0, op, line)
        return Instruction(op, (), line)

    if op is Opcode.WFLAG:
        _expect(args, 2, 2, op, line)
        return Instruction(op, (_ranged(args[0], line, MAX_PORT + 1, "port"),
                                bool(_ranged(args[1], line, 2, "flag level"))), line)

    if op is Opcode.PULSE:
        _expect(args, 1, 1, op, line)
        if not IDENT.match(args[0]):
            raise ScriptParseError(f"bad pulse tag '{args[0]}'", line=line)
        return Instruction(op, (args[0],), line)

    if op is Opcode.SET:
        _expect(args, 2, 2, op, line)
        return Instruction(op, (_register(args[0], line),
                                _ranged(args[1], line, 1 << REGISTER_WIDTH, "32-bit immediate")), line)

    if op in (Opcode.BEQ, Opcode.BNE):
        _expect(args, 3, 3, op, line)
        return Instruction(op, (_register(args[0], line),
                                _ranged(args[1], line, 1 << REGISTER_WIDTH, "32-bit immediate")),
                           line, label=_label_name(args[2], line))

    # JMP
    _expect(args, 1, 1, op, line)
    return Instruction(op, (), line, label=_label_name(args[0], line))


def _tokens(text: str) -> List[str]:
    return text.replace(',', ' ').split()


# ---------------------------------------------------------------------------
# Program parsing
# ---------------------------------------------------------------------------

def parse_program(text: str) -> Program:
    program = Program()
    current: Optional[BoardProgram] = None

    for lineno, raw in enumerate(text.splitlines(), start=1):
        code = raw.split(';', 1)[0].strip()
        if not code:
            continue

        header = BOARD_HEADER.match(code)
        if header:
            _close_section(current)
            board = int(header.group(1))
            if board in program.boards:
                raise ScriptParseError(f"duplicate section for board {board}", line=lineno)
            current = BoardProgram(board=board, line=lineno)
            program.boards[board] = current
            continue

        if current is None:
            raise ScriptParseError("instruction outside a 'board <n>:' section", line=lineno)

        tokens = _tokens(code)
        label = LABEL.match(tokens[0])
        if label:
            name = label.group(1)
            if name in current.labels:
                raise ScriptParseError(f"duplicate label '{name}'", line=lineno)
            current.labels[name] = len(current.instructions)
            tokens = tokens[1:]
            if not tokens:
                continue
        current.instructions.append(parse_instruction(tokens, lineno))

    _close_section(current)
    if not program.boards:
        raise ScriptParseError("program has no board sections")
    return program


def _close_section(bp: Optional[BoardProgram]) -> None:
    """Reject empty sections and bind branch labels."""
    if bp is None:
        return
    if not bp.instructions:
        raise ScriptParseError(f"board {bp.board} section has no instructions", line=bp.line)
    for ins in bp.instructions:
        if ins.op in BRANCH_OPS:
            if ins.label not in bp.labels:
                raise ScriptParseError(f"unresolved label '{ins.label}'", line=ins.line)
            ins.target = bp.labels[ins.label]


def load_program(path) -> Program:
    with open(path) as f:
        return parse_program(f.read())
