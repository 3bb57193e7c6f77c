import pytest

from fogroute.network import RoadNetwork, Road, build_fog_partition
from oracles import diamond_network

ACCEPTANCE_LINES = []


def pytest_terminal_summary(terminalreporter):
    if ACCEPTANCE_LINES:
        terminalreporter.section("acceptance criteria")
        for line in sorted(ACCEPTANCE_LINES, key=lambda s: int(s.split()[1].rstrip(":"))):
            terminalreporter.write_line(line)


@pytest.fixture
def diamond():
    return diamond_network()


@pytest.fixture
def two_region_line():
    """a:J1->J2 (region 0), b:J2->J3 (region 1)."""
    net = RoadNetwork(["J1", "J2", "J3"], [Road("a", "J1", "J2", 100.0), Road("b", "J2", "J3", 100.0)])
    return net, build_fog_partition(net, {"a": 0, "b": 1})
