import sys
from pathlib import Path

import pytest

ROOT = Path(__file__).parent.parent
sys.path.insert(0, str(ROOT))

from network.fabric import build_full_mesh, set_phase_offsets  # noqa: E402
from network.mesh import XcomNetwork  # noqa: E402

SCENARIOS = ROOT / 'scenarios'
CONFIGS = ROOT / 'configs'


def pytest_configure(config):
    config.addinivalue_line('markers', 'slow: full-size acceptance runs with wall-clock bounds')


def make_network(n_boards=3, phases=None, delay_fs=0, **kwargs) -> XcomNetwork:
    topo = build_full_mesh(n_boards, delay_fs)
    if phases is not None:
        topo = set_phase_offsets(topo, phases)
    return XcomNetwork(topo, **kwargs)


@pytest.fixture
def net3():
    """Three boards, IDs = ports, master 0."""
    net = make_network(3)
    net.assign_port_ids()
    net.set_master(0)
    return net


@pytest.fixture
def scenarios_dir():
    return SCENARIOS


@pytest.fixture
def configs_dir():
    return CONFIGS
