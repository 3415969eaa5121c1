import pytest

from network.fabric import (
    MAX_BOARDS,
    Topology,
    build_full_mesh,
    schedule_transmission,
    set_link_delay,
    topology_from_matrix,
)
from protocol.errors import ConfigError
from protocol.wire import BROADCAST_ADDR, Command, FlagToggle, Frame, LinkClock

LINK = LinkClock(107_500_000)


def test_full_mesh_shape():
    topo = build_full_mesh(4, default_delay=5_000)
    assert topo.n_boards == 4
    assert topo.is_matched
    assert all(topo.delay(i, j) == 5_000 for i in range(4) for j in range(4))
    assert topo.phase_fs == (0, 0, 0, 0)


@pytest.mark.parametrize("n", [0, 1, 16])
def test_full_mesh_rejects_board_counts(n):
    with pytest.raises(ConfigError):
        build_full_mesh(n)


def test_single_board_topology_is_allowed():
    topo = Topology(n_boards=1, delay_fs=((0,),))
    assert topo.n_boards == 1


def test_fifteen_boards_is_the_limit():
    assert build_full_mesh(MAX_BOARDS).n_boards == 15


def test_matrix_validation():
    with pytest.raises(ConfigError):
        topology_from_matrix([[0, 1], [1]])
    with pytest.raises(ConfigError):
        topology_from_matrix([[0, -1], [0, 0]])
    with pytest.raises(ConfigError):
        topology_from_matrix([[0, 0], [0, 0]], phase_fs=[0])


def test_set_link_delay_changes_one_entry():
    topo = build_full_mesh(3, 1_000)
    changed = set_link_delay(topo, 0, 2, 9_000)
    assert changed.delay(0, 2) == 9_000
    assert changed.delay(2, 0) == 1_000
    assert topo.delay(0, 2) == 1_000
    assert not changed.is_matched
    assert changed.max_delay == 9_000
    with pytest.raises(ConfigError):
        set_link_delay(topo, 3, 0, 1)
    with pytest.raises(ConfigError):
        set_link_delay(topo, 0, 1, -5)


def test_transmission_reaches_every_board_including_sender():
    topo = topology_from_matrix([[0, 1_000, 2_000], [1_000, 0, 3_000], [2_000, 3_000, 0]])
    frame = Frame(BROADCAST_ADDR, Command.DATA32, 0x1234)
    deliveries = schedule_transmission(topo, 0, frame, 500, LINK)
    assert [d.dst_board for d in deliveries] == [0, 1, 2]
    assert all(d.rx_port == 0 and d.src_board == 0 for d in deliveries)
    assert [d.t_deliver for d in deliveries] == [
        500 + 186_046_511,
        500 + 186_046_511 + 1_000,
        500 + 186_046_511 + 2_000,
    ]


def test_unicast_is_delivered_everywhere_and_filtered_by_nodes():
    topo = build_full_mesh(3)
    deliveries = schedule_transmission(topo, 1, Frame(2, Command.DATA8, 7), 0, LINK)
    assert len(deliveries) == 3


def test_flag_toggle_takes_one_link_cycle():
    topo = build_full_mesh(2, 250)
    deliveries = schedule_transmission(topo, 1, FlagToggle(True), 0, LINK)
    assert {d.t_deliver for d in deliveries} == {9_302_325 + 250}


def test_source_out_of_range():
    with pytest.raises(ConfigError):
        schedule_transmission(build_full_mesh(2), 2, FlagToggle(True), 0, LINK)
