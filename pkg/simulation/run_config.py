"""
Run Configuration
=================
Everything that parameterizes a run, loaded from a flat JSON object:

    {
      "boards": 3,
      "link_clock_hz": 107500000,
      "fabric_clock_hz": 430000000,
      "link_delay_fs": 0,               // scalar, or an n x n matrix
      "phase_fs": [0, 12000, -8000],    // or "phase_bound_fs": 50000
      "seed": 1,
      "horizon_fs": 1000000000000
    }

Defaults reproduce the prototype: 430 MHz fabric, link at fabric/4, zero
cable skew, ideal phase alignment. Environment overrides (XCOM_SEED,
XCOM_OUT) sit between the file and command-line flags.
"""

import json
import os
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path
from typing import Any, Dict, List, Mapping, Optional, Union

from network.fabric import MAX_BOARDS, Topology, build_full_mesh, topology_from_matrix
from network.mesh import DEFAULT_SYNC_GAP_CYCLES
from network.node import DEFAULT_FIFO_DEPTH, DEFAULT_TX_QUEUE_DEPTH
from network.sync import DEFAULT_AUTOID_MAX_ROUNDS
from protocol.errors import ConfigError
from protocol.wire import DEFAULT_LINK_CLOCK_HZ
from simulation.rng import STREAM_PHASE, CounterRng
from timing.clock_math import DEFAULT_FABRIC_CLOCK_HZ, period_fs

DEFAULT_BOARDS = 3
DEFAULT_HORIZON_FS = 10 ** 12    # 1 ms of simulated time

ENV_SEED = 'XCOM_SEED'
ENV_OUT = 'XCOM_OUT'

DelaySpec = Union[int, List[List[int]]]


@dataclass
class RunConfig:
    boards: int = DEFAULT_BOARDS
    link_clock_hz: int = DEFAULT_LINK_CLOCK_HZ
    fabric_clock_hz: int = DEFAULT_FABRIC_CLOCK_HZ
    link_delay_fs: DelaySpec = 0
    phase_fs: Optional[List[int]] = None
    phase_bound_fs: Optional[int] = None    # draw phases in [-bound, +bound]
    seed: int = 0
    horizon_fs: int = DEFAULT_HORIZON_FS
    fifo_depth: int = DEFAULT_FIFO_DEPTH
    tx_queue_depth: int = DEFAULT_TX_QUEUE_DEPTH
    sync_gap_cycles: int = DEFAULT_SYNC_GAP_CYCLES
    autoid_max_rounds: int = DEFAULT_AUTOID_MAX_ROUNDS
    auto_id: bool = True                    # false: id = port, no AUTO-ID round
    master: int = 0
    power_on_edge: Optional[List[Optional[int]]] = None
    trace_filtered: bool = True

    def validate(self) -> "RunConfig":
        _int_in(self, 'boards', 1, MAX_BOARDS)
        _int_in(self, 'link_clock_hz', 1)
        _int_in(self, 'fabric_clock_hz', 1)
        _int_in(self, 'seed', 0)
        _int_in(self, 'horizon_fs', 0)
        _int_in(self, 'fifo_depth', 1)
        _int_in(self, 'tx_queue_depth', 1)
        _int_in(self, 'sync_gap_cycles', 0)
        _int_in(self, 'autoid_max_rounds', 1)
        _int_in(self, 'master', 0, self.boards - 1)
        for key in ('auto_id', 'trace_filtered'):
            if not isinstance(getattr(self, key), bool):
                raise ConfigError(f"{key} must be true or false")

        n = self.boards
        delay = self.link_delay_fs
        if isinstance(delay, list):
            if len(delay) != n or any(not isinstance(row, list) or len(row) != n for row in delay):
                raise ConfigError(f"link_delay_fs matrix must be {n}x{n}")
            if any(not _is_int(d) or d < 0 for row in delay for d in row):
                raise ConfigError("link_delay_fs entries must be non-negative integers")
        elif not _is_int(delay) or delay < 0:
            raise ConfigError("link_delay_fs must be a non-negative integer or an n x n matrix")

        period = period_fs(self.fabric_clock_hz)
        if self.phase_fs is not None:
            if not isinstance(self.phase_fs, list) or len(self.phase_fs) != n:
                raise ConfigError(f"phase_fs must list {n} offsets")
            for p in self.phase_fs:
                if not _is_int(p) or abs(p) >= period:
                    raise ConfigError(f"phase_fs entry {p!r} must be an integer below one period ({period} fs)")
        if self.phase_bound_fs is not None:
            _int_in(self, 'phase_bound_fs', 0, period - 1)
        if self.power_on_edge is not None:
            if not isinstance(self.power_on_edge, list) or len(self.power_on_edge) != n:
                raise ConfigError(f"power_on_edge must list {n} entries")
            if any(e is not None and (not _is_int(e) or e < 0) for e in self.power_on_edge):
                raise ConfigError("power_on_edge entries must be null or non-negative integers")
        return self

    def phases(self) -> List[int]:
        if self.phase_fs is not None:
            return list(self.phase_fs)
        if self.phase_bound_fs:
            rng = CounterRng(self.seed)
            bound = self.phase_bound_fs
            return [rng.draw_range(STREAM_PHASE, -bound, bound) for _ in range(self.boards)]
        return [0] * self.boards

    def topology(self) -> Topology:
        phases = self.phases()
        if isinstance(self.link_delay_fs, list):
            return topology_from_matrix(self.link_delay_fs, phases)
        if self.boards == 1:
            return Topology(n_boards=1, delay_fs=((self.link_delay_fs,),), phase_fs=tuple(phases))
        topo = build_full_mesh(self.boards, self.link_delay_fs)
        return replace(topo, phase_fs=tuple(phases))

    def to_dict(self) -> Dict[str, Any]:
        return asdict(self)


def _is_int(value: Any) -> bool:
    return isinstance(value, int) and not isinstance(value, bool)


def _int_in(config: RunConfig, key: str, low: int, high: Optional[int] = None) -> None:
    value = getattr(config, key)
    if not _is_int(value):
        raise ConfigError(f"{key} must be an integer, got {value!r}")
    if value < low or (high is not None and value > high):
        bound = f"[{low}, {high}]" if high is not None else f">= {low}"
        raise ConfigError(f"{key} = {value} out of range {bound}")


def config_from_dict(data: Mapping[str, Any]) -> RunConfig:
    if not isinstance(data, Mapping):
        raise ConfigError("config must be a JSON object")
    known = {f.name for f in fields(RunConfig)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown config key(s): {', '.join(unknown)}")
    return RunConfig(**data).validate()


def load_config(path: Union[str, Path]) -> RunConfig:
    try:
        with open(path) as f:
            data = json.load(f)
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except json.JSONDecodeError as exc:
        raise ConfigError(f"invalid JSON in {path}: {exc}") from exc
    return config_from_dict(data)


def apply_env_overrides(config: RunConfig, environ: Optional[Mapping[str, str]] = None) -> RunConfig:
    environ = os.environ if environ is None else environ
    raw = environ.get(ENV_SEED)
    if raw is None or raw == '':
        return config
    try:
        seed = int(raw, 0)
    except ValueError:
        raise ConfigError(f"{ENV_SEED}={raw!r} is not an integer") from None
    return replace(config, seed=seed).validate()


def env_out_dir(environ: Optional[Mapping[str, str]] = None) -> Optional[Path]:
    environ = os.environ if environ is None else environ
    raw = environ.get(ENV_OUT)
    return Path(raw) if raw else None
