"""
Full-Mesh Fabric and Fanout Hub Model
=====================================
Every board drives one Tx data/clock pair. The hub copies each Tx pair to
one Rx port on every board, the transmitting board included, so Rx port i
on any board always carries board i's channel.

The hub is pure wiring: buffer and cable propagation are folded into a
per-(src, dst) delay matrix. Channels never interact, so simultaneous
transmissions from different boards are delivered exactly as if each were
alone on the network.
"""

from dataclasses import dataclass, replace
from typing import List, Sequence, Tuple, Union

from protocol.errors import ConfigError
from protocol.wire import FlagToggle, Frame, LinkClock, flag_latency, frame_latency
from timing.clock_math import WallTime

MAX_BOARDS = 15          # 4-bit ID space minus the broadcast address
MIN_MESH_BOARDS = 2

Payload = Union[Frame, FlagToggle]


@dataclass(frozen=True)
class Topology:
    n_boards: int
    delay_fs: Tuple[Tuple[int, ...], ...]
    phase_fs: Tuple[int, ...] = ()

    def __post_init__(self):
        if not 1 <= self.n_boards <= MAX_BOARDS:
            raise ConfigError(f"n_boards must be in [1, {MAX_BOARDS}], got {self.n_boards}")
        if len(self.delay_fs) != self.n_boards or any(len(row) != self.n_boards for row in self.delay_fs):
            raise ConfigError(f"delay matrix must be {self.n_boards}x{self.n_boards}")
        if any(d < 0 for row in self.delay_fs for d in row):
            raise ConfigError("link delays must be non-negative")
        if not self.phase_fs:
            object.__setattr__(self, 'phase_fs', (0,) * self.n_boards)
        elif len(self.phase_fs) != self.n_boards:
            raise ConfigError(f"phase_fs needs {self.n_boards} entries, got {len(self.phase_fs)}")

    def delay(self, src: int, dst: int) -> WallTime:
        return self.delay_fs[src][dst]

    @property
    def is_matched(self) -> bool:
        """All cables equal: every delivery of one broadcast is simultaneous."""
        first = self.delay_fs[0][0]
        return all(d == first for row in self.delay_fs for d in row)

    @property
    def max_delay(self) -> WallTime:
        return max(d for row in self.delay_fs for d in row)


@dataclass(frozen=True)
class Delivery:
    dst_board: int
    rx_port: int
    payload: Payload
    t_deliver: WallTime
    t_start: WallTime = 0

    @property
    def src_board(self) -> int:
        # Port index equals the source board index on every board.
        return self.rx_port


def build_full_mesh(n: int, default_delay: WallTime = 0) -> Topology:
    """n x n mesh with a uniform delay and zero phase offsets."""
    if not MIN_MESH_BOARDS <= n <= MAX_BOARDS:
        raise ConfigError(f"a full mesh needs {MIN_MESH_BOARDS}-{MAX_BOARDS} boards, got {n}")
    if default_delay < 0:
        raise ConfigError(f"link delay must be non-negative, got {default_delay}")
    row = (default_delay,) * n
    return Topology(n_boards=n, delay_fs=(row,) * n)


def topology_from_matrix(matrix: Sequence[Sequence[int]], phase_fs: Sequence[int] = ()) -> Topology:
    return Topology(
        n_boards=len(matrix),
        delay_fs=tuple(tuple(int(d) for d in row) for row in matrix),
        phase_fs=tuple(int(p) for p in phase_fs),
    )


def set_link_delay(topo: Topology, src: int, dst: int, delay: WallTime) -> Topology:
    """Copy of topo with one cable changed; all other entries unchanged."""
    for name, idx in (('src', src), ('dst', dst)):
        if not 0 <= idx < topo.n_boards:
            raise ConfigError(f"{name} index {idx} out of range for {topo.n_boards} boards")
    if delay < 0:
        raise ConfigError(f"link delay must be non-negative, got {delay}")
    rows: List[List[int]] = [list(row) for row in topo.delay_fs]
    rows[src][dst] = delay
    return replace(topo, delay_fs=tuple(tuple(row) for row in rows))


def set_phase_offsets(topo: Topology, phase_fs: Sequence[int]) -> Topology:
    return replace(topo, phase_fs=tuple(int(p) for p in phase_fs))


def payload_latency(payload: Payload, clk: LinkClock) -> WallTime:
    if isinstance(payload, FlagToggle):
        return flag_latency(clk)
    return frame_latency(payload.cmd, clk)


def schedule_transmission(
    topo: Topology,
    src: int,
    payload: Payload,
    t_start: WallTime,
    clk: LinkClock,
) -> List[Delivery]:
    """
    One delivery per board (loopback included) for a transmission that
    starts at t_start on src's channel. Address filtering is the receiving
    node's job; the fabric delivers to everyone.
    """
    if not 0 <= src < topo.n_boards:
        raise ConfigError(f"source board {src} out of range for {topo.n_boards} boards")
    t_end = t_start + payload_latency(payload, clk)
    return [
        Delivery(
            dst_board=dst,
            rx_port=src,
            payload=payload,
            t_deliver=t_end + topo.delay_fs[src][dst],
            t_start=t_start,
        )
        for dst in range(topo.n_boards)
    ]
