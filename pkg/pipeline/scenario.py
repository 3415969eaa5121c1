"""
Scenario Runs
=============
One engine run from a config file and a scenario program:

1. Load the run config (file, then XCOM_SEED, then explicit arguments)
2. Parse the scenario program
3. Build the network and assign XCOM IDs (AUTO-ID, or id = port)
4. Load the board programs and run to the horizon
5. Write trace.jsonl, summary.json and summary.txt (and trace.csv on request)

Outputs:
    <out>/trace.jsonl   one JSON record per line
    <out>/summary.json  RunSummary
    <out>/summary.txt   the same, as a table

A runtime fault still writes the partial trace and a summary with
status "fault" before the error propagates.
"""

import time
from dataclasses import dataclass, replace
from pathlib import Path
from typing import Optional, Union

from network.mesh import XcomNetwork
from network.sync import run_auto_id
from pipeline.summary import RunSummary, build_summary, check_latencies, write_summary
from pipeline.trace import trace_frame, write_trace
from protocol.errors import ScriptParseError, XcomError
from scripting.program import Program, load_program
from simulation.run_config import RunConfig, apply_env_overrides, load_config

PathLike = Union[str, Path]

TRACE_FILE = 'trace.jsonl'
CSV_FILE = 'trace.csv'


@dataclass
class ScenarioResult:
    summary: RunSummary
    out_dir: Path
    network: XcomNetwork

    @property
    def trace_path(self) -> Path:
        return self.out_dir / TRACE_FILE


def resolve_config(
    config_path: Optional[PathLike] = None,
    seed: Optional[int] = None,
    horizon: Optional[int] = None,
) -> RunConfig:
    config = load_config(config_path) if config_path else RunConfig().validate()
    config = apply_env_overrides(config)
    if seed is not None:
        config = replace(config, seed=seed)
    if horizon is not None:
        config = replace(config, horizon_fs=horizon)
    return config.validate()


def assign_ids(net: XcomNetwork, config: RunConfig) -> XcomNetwork:
    if config.auto_id:
        run_auto_id(net, max_rounds=config.autoid_max_rounds)
    else:
        net.assign_port_ids()
    net.set_master(config.master)
    return net


def check_program(program: Program, config: RunConfig) -> None:
    program.validate_boards(config.boards)
    program.validate_master(config.master)


def run_program(config: RunConfig, program: Program, out_dir: PathLike, csv: bool = False,
                verbose: bool = True) -> ScenarioResult:
    """Steps 3-5 for an already parsed program."""
    out_dir = Path(out_dir)
    check_program(program, config)

    if verbose:
        print(f"[3/5] Building {config.boards}-board network (seed {config.seed})...")
    started = time.perf_counter()
    net = XcomNetwork.from_config(config)

    if verbose:
        print(f"[4/5] Running {len(program.boards)} board program(s) to t={config.horizon_fs:,} fs...")
    error: Optional[XcomError] = None
    try:
        assign_ids(net, config)
        net.load_program(program)
        net.run_until(config.horizon_fs)
    except XcomError as exc:
        error = exc

    summary = build_summary(
        net.trace,
        n_boards=net.n_boards,
        events_executed=net.engine.events_executed,
        runtime_s=time.perf_counter() - started,
        seed=config.seed,
    )
    summary.counters['latency_mismatches'] = len(check_latencies(net.trace, net.topology, net.link_clock))
    if error is not None:
        summary.status = 'fault'
        summary.error = f"{type(error).__name__}: {error}"

    if verbose:
        print(f"[5/5] Writing trace ({len(net.trace):,} records) to {out_dir}...")
    write_trace(net.trace, out_dir / TRACE_FILE)
    write_summary(summary, out_dir)
    if csv:
        trace_frame(net.trace).to_csv(out_dir / CSV_FILE, index=False)

    if error is not None:
        raise error
    return ScenarioResult(summary=summary, out_dir=out_dir, network=net)


def run_scenario(
    config_path: Optional[PathLike],
    scenario_path: PathLike,
    seed: Optional[int] = None,
    out_dir: PathLike = 'out',
    horizon: Optional[int] = None,
    csv: bool = False,
    verbose: bool = True,
) -> ScenarioResult:
    if verbose:
        print(f"[1/5] Loading config {config_path or '(defaults)'}...")
    config = resolve_config(config_path, seed=seed, horizon=horizon)

    if verbose:
        print(f"[2/5] Parsing scenario {scenario_path}...")
    try:
        program = load_program(scenario_path)
    except OSError as exc:
        raise ScriptParseError(f"cannot read scenario {scenario_path}: {exc}") from exc

    return run_program(config, program, out_dir, csv=csv, verbose=verbose)
