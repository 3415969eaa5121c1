import pytest

from protocol.errors import ScriptParseError
from protocol.wire import Command
from scripting.program import Opcode, Operand, load_program, parse_program

CONDITIONAL = """
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
"""


def parse_error(text: str) -> ScriptParseError:
    with pytest.raises(ScriptParseError) as err:
        parse_program(text)
    return err.value


def test_parse_conditional_program():
    program = parse_program(CONDITIONAL)
    assert sorted(program.boards) == [0, 1]
    send = program.boards[0].instructions[0]
    assert send.op is Opcode.SEND
    assert send.args == (1, Command.DATA32, Operand(0xDEADBEEF))
    assert send.line == 4
    board1 = program.boards[1]
    assert board1.labels == {'fail': 4}
    branch = board1.instructions[1]
    assert (branch.op, branch.args, branch.target) == (Opcode.BNE, (1, 0xDEADBEEF), 4)
    assert board1.instructions[0].args == (1, None, None)


def test_commas_case_and_trailing_comments():
    program = parse_program("board 2:\n  send 1, d8, r3 ; reply\n  recv r4, 0, timeout, 0x10\n  halt\n")
    send, recv, halt = program.boards[2].instructions
    assert send.args == (1, Command.DATA8, Operand(3, is_reg=True))
    assert recv.args == (4, 0, 16)
    assert halt.op is Opcode.HALT


def test_label_on_same_line_as_instruction():
    program = parse_program("board 0:\nloop: WAITT 5\n  JMP loop\n")
    assert program.boards[0].labels == {'loop': 0}
    assert program.boards[0].instructions[1].target == 0


def test_bcast_forms():
    program = parse_program("board 0:\n BCAST STOP\n BCAST D16 0xBEEF\n BCAST NOP\n HALT\n")
    stop, data, nop, _ = program.boards[0].instructions
    assert stop.args == (Command.CLK_STOP, None)
    assert data.args == (Command.DATA16, Operand(0xBEEF))
    assert nop.args == (Command.NOP, None)


def test_wflag_and_set():
    program = parse_program("board 0:\n WFLAG 3 1\n SET r15 0xFFFFFFFF\n HALT\n")
    wflag, set_, _ = program.boards[0].instructions
    assert wflag.args == (3, True)
    assert set_.args == (15, 0xFFFFFFFF)


def test_malformed_scenario_reports_its_line(scenarios_dir):
    with pytest.raises(ScriptParseError) as err:
        load_program(scenarios_dir / 'malformed.xsc')
    assert err.value.line == 4
    assert "FROB" in str(err.value)


@pytest.mark.parametrize("text, line, fragment", [
    ("board 0:\n  SEND 16 D32 1\n", 2, "4-bit address field"),
    ("board 0:\n  RECV r14 ANY\n", 2, "r14"),
    ("board 0:\n  RECV r1 15\n", 2, "port"),
    ("board 0:\n  RECV r1 0 WAIT 5\n", 2, "TIMEOUT"),
    ("board 0:\n  SEND 1 D64 1\n", 2, "size class"),
    ("board 0:\n  SEND 1 D8 0x100\n", 2, "8-bit immediate"),
    ("board 0:\n  SET r1 0x100000000\n", 2, "32-bit immediate"),
    ("board 0:\n  BCAST D32\n", 2, "needs a value"),
    ("board 0:\n  BCAST START 1\n", 2, "takes no value"),
    ("board 0:\n  BCAST FROB\n", 2, "broadcast command"),
    ("board 0:\n  WAITT 0x1000000000000\n", 2, "tick"),
    ("board 0:\n  WAITT\n", 2, "operand"),
    ("board 0:\n  PULSE 9lives\n", 2, "pulse tag"),
    ("board 0:\n  JMP nowhere\n", 2, "unresolved label"),
    ("board 0:\nx:\nx:\n  HALT\n", 3, "duplicate label"),
    ("board 0:\n  HALT\nboard 0:\n  HALT\n", 3, "duplicate section"),
    ("  HALT\n", 1, "outside"),
    ("board 0:\nboard 1:\n  HALT\n", 1, "no instructions"),
    ("board 0:\n  SET r1 banana\n", 2, "expected a number"),
])
def test_parse_errors(text, line, fragment):
    err = parse_error(text)
    assert err.line == line
    assert fragment in str(err)


def test_empty_program_is_an_error():
    err = parse_error("; nothing here\n\n")
    assert err.line is None


def test_labels_are_scoped_to_their_board():
    err = parse_error("board 0:\nend:\n  HALT\nboard 1:\n  JMP end\n")
    assert err.line == 5


def test_sync_only_in_the_master_program():
    program = parse_program("board 0:\n  HALT\nboard 1:\n  SYNC\n  HALT\n")
    program.validate_master(1)
    with pytest.raises(ScriptParseError) as err:
        program.validate_master(0)
    assert err.value.line == 4


@pytest.mark.parametrize("text, line", [
    ("board 1:\n  RECV r1 5 TIMEOUT 10\n", 2),
    ("board 0:\n  HALT\nboard 1:\n  WFLAG 2 1\n", 4),
    ("board 3:\n  HALT\n", 1),
])
def test_ports_and_sections_must_fit_the_network(text, line):
    program = parse_program(text)
    with pytest.raises(ScriptParseError) as err:
        program.validate_boards(2)
    assert err.value.line == line


def test_ports_within_the_network_pass():
    program = parse_program("board 1:\n  RECV r1 1 TIMEOUT 10\n  WFLAG 0 1\n  RECV r3 ANY\n")
    program.validate_boards(2)
