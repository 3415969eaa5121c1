"""
Flag-Bit Token Ring
===================
Passes a token around the boards on the out-of-band flag line, the
fastest message type (one link cycle per edge). Board i copies the level
it sees on port i - 1 onto its own flag; when board 0 sees its own level
come back from board n - 1 the lap is complete and it flips the level to
start the next lap.

Every hop costs one flag latency plus that hop's cable delay, so a lap is

    n x flag_latency + sum of delay[i][i + 1]

and every lap takes exactly as long as the first.
"""

from dataclasses import dataclass, field
from typing import Dict, List, Optional

from network.fabric import build_full_mesh, topology_from_matrix
from network.mesh import XcomNetwork
from protocol.errors import ConfigError, LatencyDeviationError
from protocol.wire import DEFAULT_LINK_CLOCK_HZ, LinkClock, flag_latency
from timing.clock_math import WallTime


@dataclass
class TokenRingResult:
    n_boards: int
    expected_lap_fs: WallTime
    lap_times_fs: List[WallTime] = field(default_factory=list)

    @property
    def deterministic(self) -> bool:
        return all(lap == self.expected_lap_fs for lap in self.lap_times_fs)

    def to_dict(self) -> Dict:
        return {
            'n_boards': self.n_boards,
            'expected_lap_fs': self.expected_lap_fs,
            'lap_times_fs': self.lap_times_fs,
            'deterministic': self.deterministic,
        }


def experiment_token_ring(
    n_boards: int = 3,
    laps: int = 10,
    link_clock_hz: int = DEFAULT_LINK_CLOCK_HZ,
    delay_fs: int = 0,
    delay_matrix: Optional[List[List[int]]] = None,
    seed: int = 0,
) -> TokenRingResult:
    if laps < 1:
        raise ConfigError(f"laps must be >= 1, got {laps}")
    topo = topology_from_matrix(delay_matrix) if delay_matrix is not None else build_full_mesh(n_boards, delay_fs)
    n = topo.n_boards
    if n < 2:
        raise ConfigError("a token ring needs at least 2 boards")
    link = LinkClock(link_clock_hz)
    net = XcomNetwork(topo, link_clock=link, seed=seed)

    hop_delays = sum(topo.delay(i, (i + 1) % n) for i in range(n))
    result = TokenRingResult(n_boards=n, expected_lap_fs=n * flag_latency(link) + hop_delays)
    lap_started = [0]

    def relay(board: int, port: int, level: bool, t: WallTime) -> None:
        if port != (board - 1) % n:
            return
        if board != 0:
            net.set_flag(board, level)
            return
        if level != net.nodes[0].flag_out:
            return
        result.lap_times_fs.append(t - lap_started[0])
        if len(result.lap_times_fs) < laps:
            lap_started[0] = net.set_flag(0, not level)

    net.flag_listeners.append(relay)
    lap_started[0] = net.set_flag(0, True)
    net.engine.run()

    if len(result.lap_times_fs) != laps:
        raise LatencyDeviationError(f"token completed {len(result.lap_times_fs)} of {laps} laps")
    if not result.deterministic:
        raise LatencyDeviationError(
            f"lap times {sorted(set(result.lap_times_fs))} fs differ from {result.expected_lap_fs} fs"
        )
    return result
