"""
XCOM Wire Format and Link Latency Model
========================================
Bit-exact frame codec and the deterministic DDR serialization latency.

Frame layout (transmission order, MSB-first in every field):

    | dst (4) | cmd (4) | payload (0 / 8 / 16 / 32) |

    dst 0x0-0xE  unicast board ID
    dst 0xF      broadcast

Frames are 8, 16, 24 or 40 bits long. The link is source-synchronous with a
separate clock line and samples on both clock edges, so a frame of b bits
occupies ceil(b / 2) link-clock cycles. With zero extra pipeline cycles this
reproduces the prototype numbers exactly:

    DATA32 (40 bits) = 20 cycles = 186.05 ns at 107.5 MHz (fabric / 4)
                                  =  62.02 ns at 322.5 MHz (3x clock)

The flag bit is a separate line-level toggle, one link cycle per edge; it is
not a frame and uses no command code.

See protocol/PROTOCOL.md for the reference table.
"""

import warnings
from dataclasses import dataclass
from enum import IntEnum
from typing import Dict, Sequence, Tuple

from protocol.errors import FrameEncodingError, InvalidCommandError, MalformedFrameError
from timing.clock_math import WallTime, cycles_to_fs

BROADCAST_ADDR = 0xF
MAX_UNICAST_ADDR = 0xE
HEADER_BITS = 8
VALID_FRAME_LENGTHS = (8, 16, 24, 40)

# Link clock: ~100 MHz in the prototype, calibrated to fabric/4 so a 32-bit
# word costs the quoted 186 ns. HP LVDS I/O is rated to 312.9 MHz.
DEFAULT_LINK_CLOCK_HZ = 107_500_000
MAX_LINK_CLOCK_HZ = 312_900_000
BITS_PER_CYCLE = 2   # DDR: one bit per clock edge


class Command(IntEnum):
    """4-bit command field. Codes 0x8-0xF are reserved."""
    NOP = 0x0
    AUTOID_PROBE = 0x1
    CLK_RESET = 0x2
    CLK_START = 0x3
    CLK_STOP = 0x4
    DATA8 = 0x5
    DATA16 = 0x6
    DATA32 = 0x7


PAYLOAD_WIDTH: Dict[Command, int] = {
    Command.NOP: 0,
    Command.AUTOID_PROBE: 16,   # nonce
    Command.CLK_RESET: 0,
    Command.CLK_START: 0,
    Command.CLK_STOP: 0,
    Command.DATA8: 8,
    Command.DATA16: 16,
    Command.DATA32: 32,
}

CLOCK_COMMANDS = frozenset({Command.CLK_RESET, Command.CLK_START, Command.CLK_STOP})
DATA_COMMANDS = frozenset({Command.DATA8, Command.DATA16, Command.DATA32})

# Script size mnemonics -> data command
SIZE_CLASSES: Dict[str, Command] = {
    'D8': Command.DATA8,
    'D16': Command.DATA16,
    'D32': Command.DATA32,
}


def command_from_code(code: int) -> Command:
    """Map a 4-bit code to a Command, rejecting the reserved range."""
    if not 0 <= code < 16:
        raise InvalidCommandError(f"command code {code!r} does not fit in 4 bits")
    try:
        return Command(code)
    except ValueError:
        raise InvalidCommandError(f"reserved command code 0x{code:X}") from None


def payload_width(cmd: int) -> int:
    return PAYLOAD_WIDTH[command_from_code(int(cmd))]


@dataclass(frozen=True)
class Frame:
    """One XCOM message."""
    dst: int
    cmd: Command
    payload: int = 0

    @property
    def is_broadcast(self) -> bool:
        return self.dst == BROADCAST_ADDR

    def validate(self) -> "Frame":
        if not 0 <= self.dst <= BROADCAST_ADDR:
            raise FrameEncodingError(f"dst {self.dst} exceeds the 4-bit address field")
        width = payload_width(self.cmd)
        if not 0 <= self.payload < (1 << width):
            raise FrameEncodingError(
                f"payload 0x{self.payload:X} does not fit {Command(self.cmd).name} "
                f"({width}-bit payload)"
            )
        return self

    def describe(self) -> Dict[str, str]:
        """Trace fields: hex address and payload, command name."""
        fields = {'dst': f"0x{self.dst:X}", 'cmd': Command(self.cmd).name}
        if payload_width(self.cmd):
            fields['payload'] = f"0x{self.payload:X}"
        return fields


@dataclass(frozen=True)
class FlagToggle:
    """Out-of-band flag line edge (not a frame)."""
    level: bool


@dataclass(frozen=True)
class LinkClock:
    freq_hz: int = DEFAULT_LINK_CLOCK_HZ

    def __post_init__(self):
        if self.freq_hz <= 0:
            raise ValueError(f"link clock must be positive, got {self.freq_hz}")
        if self.freq_hz > MAX_LINK_CLOCK_HZ:
            warnings.warn(
                f"link clock {self.freq_hz} Hz exceeds the rated {MAX_LINK_CLOCK_HZ} Hz",
                UserWarning,
                stacklevel=3,
            )


BitVector = Tuple[int, ...]


def frame_bit_length(cmd: int) -> int:
    """Header plus payload bits: 8, 16, 24 or 40."""
    return HEADER_BITS + payload_width(cmd)


def _to_bits(value: int, width: int) -> BitVector:
    return tuple((value >> shift) & 1 for shift in range(width - 1, -1, -1))


def _from_bits(bits: Sequence[int]) -> int:
    value = 0
    for bit in bits:
        value = (value << 1) | bit
    return value


def encode_frame(f: Frame) -> BitVector:
    """dst nibble, cmd nibble, then payload; every field MSB-first."""
    f.validate()
    width = payload_width(f.cmd)
    return _to_bits(f.dst, 4) + _to_bits(int(f.cmd), 4) + _to_bits(f.payload, width)


def decode_frame(b: Sequence[int]) -> Frame:
    """Inverse of encode_frame. Length must agree with the decoded command."""
    bits = tuple(b)
    if len(bits) not in VALID_FRAME_LENGTHS:
        raise MalformedFrameError(f"frame length {len(bits)} is not one of {VALID_FRAME_LENGTHS}")
    if any(bit not in (0, 1) for bit in bits):
        raise MalformedFrameError("bit vector contains values other than 0 and 1")
    dst = _from_bits(bits[0:4])
    cmd = command_from_code(_from_bits(bits[4:8]))
    expected = frame_bit_length(cmd)
    if len(bits) != expected:
        raise MalformedFrameError(
            f"{cmd.name} frames are {expected} bits, got a {len(bits)}-bit vector"
        )
    return Frame(dst=dst, cmd=cmd, payload=_from_bits(bits[HEADER_BITS:]))


def bits_to_str(bits: Sequence[int]) -> str:
    """'11110010' -> '1111 0010 ...' grouped as header nibbles then payload."""
    s = ''.join(str(bit) for bit in bits)
    groups = [s[0:4], s[4:8]]
    if len(s) > HEADER_BITS:
        groups.append(s[HEADER_BITS:])
    return ' '.join(g for g in groups if g)


def bits_from_str(text: str) -> BitVector:
    return tuple(int(ch) for ch in text if ch in '01')


def frame_cycles(cmd: int) -> int:
    return -(-frame_bit_length(cmd) // BITS_PER_CYCLE)


def frame_latency(cmd: int, clk: LinkClock) -> WallTime:
    """Serialization time of one frame: ceil(bits / 2) link cycles, in fs."""
    return cycles_to_fs(frame_cycles(cmd), clk.freq_hz)


def flag_latency(clk: LinkClock) -> WallTime:
    """One link-clock cycle: the fastest message type."""
    return cycles_to_fs(1, clk.freq_hz)
