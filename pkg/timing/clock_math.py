"""
Clock Math: Exact Integer Time for the XCOM Simulator
======================================================
All physical time in the simulator is an integer count of femtoseconds since
the simulation epoch (t = 0). Python ints are unbounded, so an 8-day horizon
(~6.5e20 fs, beyond 64 bits) is exact without special handling.

Three kinds of quantity live here:

    WallTime:    absolute instant or duration, integer fs
    ClockDomain: a clock (frequency + static analog phase offset); its k-th
                   edge occurs at phase_fs + floor(k * 1e15 / freq_hz)
    AbsTick48:   value of a board's 48-bit absolute counter, always mod 2^48

No floating point is used anywhere in this module.
"""

from dataclasses import dataclass, replace
from typing import Tuple

# Type aliases (documentation only; all are plain ints)
WallTime = int
AbsTick48 = int

FS_PER_SECOND = 10 ** 15
FS_PER_NS = 10 ** 6
FS_PER_PS = 10 ** 3
SECONDS_PER_DAY = 86_400

# 48-bit absolute counter (tProc experiment clock)
TICK_BITS = 48
TICK_MODULUS = 1 << TICK_BITS
TICK_MASK = TICK_MODULUS - 1
TICK_HALF_RANGE = 1 << (TICK_BITS - 1)

# Fabric clock the tProc and XCOM peripheral run at
DEFAULT_FABRIC_CLOCK_HZ = 430_000_000


@dataclass(frozen=True)
class ClockDomain:
    """A clock: integer frequency plus static phase offset of its edges.

    The phase carries the residual misalignment left after PLL zero-delay
    lock and multi-tile sync; the simulator has no other analog model.
    """
    freq_hz: int = DEFAULT_FABRIC_CLOCK_HZ
    phase_fs: int = 0

    def __post_init__(self):
        if self.freq_hz <= 0:
            raise ValueError(f"freq_hz must be positive, got {self.freq_hz}")
        if abs(self.phase_fs) >= period_fs(self.freq_hz):
            raise ValueError(
                f"|phase_fs| must be below one period ({period_fs(self.freq_hz)} fs), "
                f"got {self.phase_fs}"
            )

    @property
    def nominal(self) -> "ClockDomain":
        """Same clock with phase 0: the shared reference grid."""
        return replace(self, phase_fs=0)


def period_fs(freq_hz: int) -> WallTime:
    """One clock period, floored to whole femtoseconds."""
    return FS_PER_SECOND // freq_hz


def cycles_to_fs(n_cycles: int, freq_hz: int) -> WallTime:
    """Duration of n whole cycles, floor(n * 1e15 / f)."""
    return n_cycles * FS_PER_SECOND // freq_hz


def edge_time(domain: ClockDomain, k: int) -> WallTime:
    """Wall time of edge k (k >= 0) of a clock domain."""
    if k < 0:
        raise ValueError(f"edge index must be non-negative, got {k}")
    return domain.phase_fs + k * FS_PER_SECOND // domain.freq_hz


def next_edge_at_or_after(domain: ClockDomain, t: WallTime) -> Tuple[int, WallTime]:
    """
    Smallest edge index k with edge_time(domain, k) >= t, and that edge's time.

    floor(k*F/f) >= u holds exactly when k >= u*f/F for integer u, so the
    answer is a ceiling division. Instants before edge 0 map to edge 0.
    """
    u = t - domain.phase_fs
    if u <= 0:
        return 0, domain.phase_fs
    k = -((-u * domain.freq_hz) // FS_PER_SECOND)
    return k, edge_time(domain, k)


def edge_index_at_or_before(domain: ClockDomain, t: WallTime) -> int:
    """Largest k with edge_time(domain, k) <= t; -1 before edge 0."""
    if t < domain.phase_fs:
        return -1
    return next_edge_at_or_after(domain, t + 1)[0] - 1


def tick_add(a: AbsTick48, d: int) -> AbsTick48:
    """(a + d) mod 2^48."""
    return (a + d) & TICK_MASK


def tick_diff(a: AbsTick48, b: AbsTick48) -> int:
    """Forward distance from a to b, (b - a) mod 2^48."""
    return (b - a) & TICK_MASK


def tick_before(a: AbsTick48, b: AbsTick48) -> bool:
    """
    Windowed modular ordering: a precedes b iff (b - a) mod 2^48 lies in
    (0, 2^47). A strict total order on any window narrower than 2^47 ticks.
    """
    return 0 < tick_diff(a, b) < TICK_HALF_RANGE


def wrap_horizon(freq_hz: int) -> WallTime:
    """Wall duration of 2^48 ticks at freq_hz, in fs (integer division)."""
    if freq_hz <= 0:
        raise ValueError(f"freq_hz must be positive, got {freq_hz}")
    return TICK_MODULUS * FS_PER_SECOND // freq_hz


def fs_to_ns(t: WallTime) -> float:
    """Display helper only; never feed the result back into time math."""
    return t / FS_PER_NS


def fs_to_days(t: WallTime) -> float:
    """Display helper only."""
    return t / FS_PER_SECOND / SECONDS_PER_DAY
