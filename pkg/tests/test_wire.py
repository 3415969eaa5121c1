import numpy as np
import pytest

from protocol.errors import FrameEncodingError, InvalidCommandError, MalformedFrameError
from protocol.wire import (
    BROADCAST_ADDR,
    PAYLOAD_WIDTH,
    Command,
    Frame,
    LinkClock,
    bits_from_str,
    bits_to_str,
    command_from_code,
    decode_frame,
    encode_frame,
    flag_latency,
    frame_bit_length,
    frame_cycles,
    frame_latency,
)


def test_broadcast_reset_bits():
    bits = encode_frame(Frame(BROADCAST_ADDR, Command.CLK_RESET))
    assert bits_to_str(bits) == "1111 0010"


def test_data8_bits():
    bits = encode_frame(Frame(3, Command.DATA8, 0xA5))
    assert bits_to_str(bits) == "0011 0101 10100101"
    assert decode_frame(bits_from_str("0011 0101 10100101")) == Frame(3, Command.DATA8, 0xA5)


def test_data32_is_40_bits_msb_first():
    bits = encode_frame(Frame(1, Command.DATA32, 0xDEADBEEF))
    assert len(bits) == 40
    assert bits[8:12] == (1, 1, 0, 1)
    assert bits[-4:] == (1, 1, 1, 1)


def test_every_header_decodes_or_is_rejected():
    for header in range(256):
        dst, code = header >> 4, header & 0xF
        if code >= 8:
            with pytest.raises(InvalidCommandError):
                command_from_code(code)
            continue
        cmd = Command(code)
        bits = tuple((header >> s) & 1 for s in range(7, -1, -1)) + (0,) * PAYLOAD_WIDTH[cmd]
        frame = decode_frame(bits)
        assert (frame.dst, frame.cmd, frame.payload) == (dst, cmd, 0)


def test_random_frames_survive_encode_decode():
    rng = np.random.default_rng(2024)
    codes = [c for c in Command]
    for _ in range(100_000):
        cmd = codes[int(rng.integers(0, len(codes)))]
        width = PAYLOAD_WIDTH[cmd]
        payload = int(rng.integers(0, 1 << width, dtype=np.uint64)) if width else 0
        frame = Frame(int(rng.integers(0, 16)), cmd, payload)
        assert decode_frame(encode_frame(frame)) == frame


def test_frame_lengths():
    assert [frame_bit_length(c) for c in (Command.NOP, Command.DATA8, Command.DATA16, Command.DATA32)] == [8, 16, 24, 40]
    assert frame_bit_length(Command.AUTOID_PROBE) == 24
    assert frame_cycles(Command.DATA32) == 20


@pytest.mark.parametrize("length", [0, 7, 9, 32, 41])
def test_decode_rejects_bad_lengths(length):
    with pytest.raises(MalformedFrameError):
        decode_frame((0,) * length)


def test_decode_rejects_length_command_mismatch():
    # DATA32 header followed by only 8 payload bits
    with pytest.raises(MalformedFrameError):
        decode_frame(bits_from_str("0001 0111 00000000"))


def test_decode_rejects_reserved_command():
    with pytest.raises(InvalidCommandError):
        decode_frame(bits_from_str("0001 1000"))


def test_encode_rejects_out_of_range_fields():
    with pytest.raises(FrameEncodingError):
        encode_frame(Frame(16, Command.NOP))
    with pytest.raises(FrameEncodingError):
        encode_frame(Frame(1, Command.DATA8, 0x100))
    with pytest.raises(FrameEncodingError):
        encode_frame(Frame(1, Command.CLK_START, 1))


def test_reference_latencies():
    assert frame_latency(Command.DATA32, LinkClock(107_500_000)) == 186_046_511
    assert frame_latency(Command.DATA8, LinkClock(107_500_000)) == 74_418_604
    assert frame_latency(Command.CLK_RESET, LinkClock(107_500_000)) == 37_209_302
    assert flag_latency(LinkClock(107_500_000)) == 9_302_325
    with pytest.warns(UserWarning):
        fast = LinkClock(322_500_000)
    assert frame_latency(Command.DATA32, fast) == 62_015_503
    assert flag_latency(fast) == 3_100_775


def test_rated_link_clock_does_not_warn(recwarn):
    LinkClock(312_900_000)
    assert not [w for w in recwarn if issubclass(w.category, UserWarning)]


def test_link_clock_must_be_positive():
    with pytest.raises(ValueError):
        LinkClock(0)
