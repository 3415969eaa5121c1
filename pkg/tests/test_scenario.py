import json
from pathlib import Path

import numpy as np
import pytest

from pipeline.scenario import CSV_FILE, TRACE_FILE, resolve_config, run_program, run_scenario
from pipeline.summary import summary_table
from pipeline.trace import read_trace, trace_digest
from protocol.errors import ConfigError, ScriptParseError, ScriptRuntimeError
from scripting.program import parse_program
from simulation.run_config import RunConfig, apply_env_overrides, config_from_dict, load_config


def test_conditional_jump_scenario(configs_dir, scenarios_dir, tmp_path):
    result = run_scenario(configs_dir / 'two_boards.json', scenarios_dir / 'conditional_jump.xsc',
                          out_dir=tmp_path, verbose=False)
    assert result.summary.status == 'ok'
    assert result.summary.message_count == 1
    assert result.summary.distinct_latencies_fs == [186_046_511]
    assert result.summary.counters['latency_mismatches'] == 0
    tags = [r.get('tag') for r in read_trace(tmp_path / TRACE_FILE) if r.event == 'pulse']
    assert tags == ['ok']
    summary = json.loads((tmp_path / 'summary.json').read_text())
    assert summary['seed'] == 1
    assert (tmp_path / 'summary.txt').read_text().startswith('| metric')


def test_sync_pulse_scenario_reports_skews(configs_dir, scenarios_dir, tmp_path):
    result = run_scenario(configs_dir / 'three_boards.json', scenarios_dir / 'sync_pulse.xsc',
                          out_dir=tmp_path, csv=True, verbose=False)
    assert result.summary.sync_skew_fs == 20_000
    assert result.summary.pulse_skew_fs == {'sync': 20_000}
    assert (tmp_path / CSV_FILE).exists()
    assert "pulse skew 'sync'" in summary_table(result.summary)


def test_sync_pulse_trace_matches_golden_file(tmp_path):
    golden = Path(__file__).parent / 'golden'
    run_scenario(golden / 'two_boards_fixed_ids.json', golden / 'sync_pulse_two_boards.xsc',
                 out_dir=tmp_path, verbose=False)
    expected = (golden / 'sync_pulse_two_boards.trace.jsonl').read_bytes()
    assert (tmp_path / TRACE_FILE).read_bytes() == expected


def test_recv_timeout_scenario(configs_dir, scenarios_dir, tmp_path):
    result = run_scenario(configs_dir / 'two_boards.json', scenarios_dir / 'recv_timeout.xsc',
                          out_dir=tmp_path, verbose=False)
    tags = [r.get('tag') for r in result.network.trace if r.event == 'pulse']
    assert tags == ['timeout']


def test_skewed_cables_without_auto_id(configs_dir, scenarios_dir, tmp_path):
    result = run_scenario(configs_dir / 'skewed_cables.json', scenarios_dir / 'sync_pulse.xsc',
                          out_dir=tmp_path, verbose=False)
    assert not [r for r in result.network.trace if r.event == 'id_assigned']
    assert result.summary.counters['latency_mismatches'] == 0
    # unmatched cables: the skew includes the cable spread from the master
    assert result.summary.sync_skew_fs is not None


def test_parse_error_writes_nothing(configs_dir, scenarios_dir, tmp_path):
    with pytest.raises(ScriptParseError):
        run_scenario(configs_dir / 'two_boards.json', scenarios_dir / 'malformed.xsc',
                     out_dir=tmp_path / 'out', verbose=False)
    assert not (tmp_path / 'out').exists()


def test_missing_scenario_is_a_parse_error(tmp_path):
    with pytest.raises(ScriptParseError):
        run_scenario(None, tmp_path / 'absent.xsc', out_dir=tmp_path, verbose=False)


def test_program_larger_than_the_network(tmp_path):
    program = parse_program("board 0:\n  HALT\nboard 4:\n  HALT\n")
    with pytest.raises(ScriptParseError):
        run_program(RunConfig(boards=3), program, tmp_path, verbose=False)


def test_runtime_fault_keeps_partial_trace(tmp_path):
    program = parse_program("board 0:\n  PULSE before\n  HALT\nboard 1:\n  BCAST STOP\n")
    with pytest.raises(ScriptRuntimeError):
        run_program(RunConfig(boards=2), program, tmp_path, verbose=False)
    events = [r.event for r in read_trace(tmp_path / TRACE_FILE)]
    assert 'script_error' in events
    assert 'id_assigned' in events
    summary = json.loads((tmp_path / 'summary.json').read_text())
    assert summary['status'] == 'fault'
    assert summary['error'].startswith('ScriptRuntimeError')


def test_horizon_stops_the_run(scenarios_dir, tmp_path):
    config = resolve_config(None, seed=0, horizon=10 ** 6)
    result = run_scenario(None, scenarios_dir / 'sync_pulse.xsc', seed=0, horizon=10 ** 6,
                          out_dir=tmp_path, verbose=False)
    assert config.horizon_fs == 10 ** 6
    assert result.network.engine.pending > 0
    assert not [r for r in result.network.trace if r.event == 'pulse']


def random_program(rng: np.random.Generator, n_boards: int) -> str:
    lines = []
    for board in range(n_boards):
        lines.append(f"board {board}:")
        if board == 0:
            lines.append("    SYNC")
        tick = 0
        for k in range(int(rng.integers(3, 10))):
            choice = int(rng.integers(0, 6))
            if choice == 0:
                dst = int(rng.choice(list(range(n_boards)) + [15]))
                lines.append(f"    SEND {dst} D32 0x{int(rng.integers(0, 1 << 32)):X}")
            elif choice == 1:
                lines.append(f"    BCAST D8 {int(rng.integers(0, 256))}")
            elif choice == 2:
                tick += int(rng.integers(1, 500))
                lines.append(f"    WAITT {tick}")
            elif choice == 3:
                lines.append(f"    RECV r1 ANY TIMEOUT {int(rng.integers(1, 2000))}")
            elif choice == 4:
                lines.append(f"    PULSE p{k}")
            else:
                lines.append("    SETF" if rng.integers(0, 2) else "    CLRF")
        lines.append("    HALT")
    return '\n'.join(lines) + '\n'


def test_identical_inputs_give_identical_traces(tmp_path):
    rng = np.random.default_rng(20)
    for s in range(20):
        n = int(rng.integers(2, 6))
        text = random_program(rng, n)
        config = RunConfig(boards=n, seed=s, phase_bound_fs=50_000, horizon_fs=10 ** 11).validate()
        first = run_program(config, parse_program(text), tmp_path / f"{s}-a", verbose=False)
        second = run_program(config, parse_program(text), tmp_path / f"{s}-b", verbose=False)
        assert trace_digest(first.network.trace) == trace_digest(second.network.trace)
        assert (tmp_path / f"{s}-a" / TRACE_FILE).read_bytes() == (tmp_path / f"{s}-b" / TRACE_FILE).read_bytes()


def test_different_seeds_change_the_trace(configs_dir, scenarios_dir, tmp_path):
    a = run_scenario(configs_dir / 'five_boards_mts.json', scenarios_dir / 'halt_two_boards.xsc',
                     seed=1, out_dir=tmp_path / 'a', verbose=False)
    b = run_scenario(configs_dir / 'five_boards_mts.json', scenarios_dir / 'halt_two_boards.xsc',
                     seed=2, out_dir=tmp_path / 'b', verbose=False)
    assert trace_digest(a.network.trace) != trace_digest(b.network.trace)


def test_config_loading(configs_dir, tmp_path):
    config = load_config(configs_dir / 'three_boards.json')
    assert config.phase_fs == [0, 12_000, -8_000]
    assert config.topology().phase_fs == (0, 12_000, -8_000)
    mts = load_config(configs_dir / 'five_boards_mts.json')
    assert len(mts.phases()) == 5
    assert all(abs(p) <= 50_000 for p in mts.phases())

    bad = tmp_path / 'bad.json'
    bad.write_text('{"boards": 3,')
    with pytest.raises(ConfigError):
        load_config(bad)
    with pytest.raises(ConfigError):
        load_config(tmp_path / 'missing.json')


@pytest.mark.parametrize("data", [
    {'boards': 16},
    {'boards': 0},
    {'wires': 3},
    {'boards': 2, 'phase_fs': [0]},
    {'boards': 2, 'phase_fs': [0, 2_325_581]},
    {'boards': 2, 'link_delay_fs': [[0, 1], [1]]},
    {'boards': 2, 'link_delay_fs': -1},
    {'boards': 2, 'master': 2},
    {'seed': -1},
    {'auto_id': 'yes'},
    {'boards': True},
])
def test_config_validation(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_single_board_config_topology():
    topo = config_from_dict({'boards': 1}).topology()
    assert topo.n_boards == 1


def test_env_seed_override():
    config = RunConfig(seed=3)
    assert apply_env_overrides(config, {'XCOM_SEED': '0x10'}).seed == 16
    assert apply_env_overrides(config, {}).seed == 3
    with pytest.raises(ConfigError):
        apply_env_overrides(config, {'XCOM_SEED': 'abc'})


def test_explicit_seed_beats_environment(monkeypatch):
    monkeypatch.setenv('XCOM_SEED', '5')
    assert resolve_config(None).seed == 5
    assert resolve_config(None, seed=9).seed == 9
