import math

import pytest

from oran_slicing.topology import EndDevice, GNodeB, MecServer, ScenarioConfig, Topology


def make_cell(distances, config=None, rb=None):
    """Single-gNB topology with devices on the x axis at the given distances."""
    cfg = config or ScenarioConfig(gnb_count=1, devices_per_gnb=len(distances))
    rb = rb or cfg.rb_per_gnb
    gx, gy = 1000.0, 1000.0
    devices = tuple(
        EndDevice(k, (gx + d, gy), 0, cfg.arrival_rate_tasks_per_s) for k, d in enumerate(distances)
    )
    gnb = GNodeB(0, (gx, gy), rb, 0, tuple(range(len(distances))))
    mec = MecServer(0, 0, cfg.cores_per_mec, cfg.core_capacity_cycles_per_s)
    return Topology(cfg.replace(rb_per_gnb=rb), (gnb,), (mec,), devices)


@pytest.fixture
def cell():
    return make_cell


def db_to_lin(db):
    return 10 ** (db / 10)


def shannon(bandwidth, snr):
    return bandwidth * math.log2(1 + snr)


def pytest_terminal_summary(terminalreporter):
    import sys
    module = sys.modules.get("test_acceptance")
    lines = getattr(module, "RESULTS", [])
    if lines:
        terminalreporter.section("acceptance criteria")
        for line in lines:
            terminalreporter.write_line(line)
