
import numpy as np
import pytest
from hypothesis import given, strategies as st

from oran_slicing import ConfigError
from oran_slicing.topology import (MB, ScenarioConfig, build_topology, channel_gain,
                                   path_loss_db, sample_task)


def test_defaults_match_reported_setup():
    cfg = ScenarioConfig()
    assert cfg.area_side_m == 2000
    assert cfg.gnb_count == 4
    assert cfg.cell_radius_m == 500
    assert cfg.cores_per_mec == 4
    assert cfg.core_capacity_cycles_per_s == 3e9
    assert cfg.task_size_bytes_min == 0.5 * MB
    assert cfg.task_size_bytes_max == 2 * MB
    assert cfg.cycles_per_bit == 400
    assert cfg.tx_power_dbm == 23
    assert cfg.rb_bandwidth_hz == 180e3
    assert cfg.noise_dbm_per_rb == -114


def test_grid_of_four_gnbs():
    top = build_topology(ScenarioConfig(), seed=1)
    assert [g.position for g in top.gnbs] == [(500, 500), (1500, 500), (500, 1500), (1500, 1500)]
    assert [m.gnb_id for m in top.mecs] == [0, 1, 2, 3]
    assert {m.sharing_group_id for m in top.mecs} == {0}


def test_zero_devices_is_valid():
    top = build_topology(ScenarioConfig(devices_per_gnb=0))
    assert top.devices == ()
    assert all(g.device_ids == () for g in top.gnbs)


def test_same_seed_same_topology():
    cfg = ScenarioConfig(devices_per_gnb=5)
    assert build_topology(cfg, 42).to_json() == build_topology(cfg, 42).to_json()
    assert build_topology(cfg, 42).to_json() != build_topology(cfg, 43).to_json()


def test_devices_inside_their_cell():
    cfg = ScenarioConfig(devices_per_gnb=50)
    top = build_topology(cfg, seed=3)
    for dev in top.devices:
        assert top.distance(dev) <= cfg.cell_radius_m
        assert dev.id in top.gnbs[dev.gnb_id].device_ids
        x, y = dev.position
        assert 0 <= x <= cfg.area_side_m and 0 <= y <= cfg.area_side_m


def test_adding_devices_keeps_existing_positions():
    small = build_topology(ScenarioConfig(device_total=3), seed=5)
    large = build_topology(ScenarioConfig(device_total=6), seed=5)
    assert [d.position for d in small.devices] == [d.position for d in large.devices[:3]]
    assert [d.gnb_id for d in large.devices] == [0, 1, 2, 3, 0, 1]


@pytest.mark.parametrize("field,value", [
    ("gnb_count", 0), ("rb_per_gnb", 0), ("cores_per_mec", 0), ("cell_radius_m", -1.0),
    ("core_capacity_cycles_per_s", 0.0), ("devices_per_gnb", -1),
])
def test_invalid_config_names_field(field, value):
    with pytest.raises(ConfigError, match=field):
        ScenarioConfig(**{field: value})


def test_task_size_order_checked():
    with pytest.raises(ConfigError, match="task_size_bytes_min"):
        ScenarioConfig(task_size_bytes_min=3 * MB)


def test_unknown_keys_rejected():
    with pytest.raises(ConfigError, match="bogus"):
        ScenarioConfig.from_dict({"bogus": 1})


def test_path_loss_values():
    assert path_loss_db(1000) == pytest.approx(128.1, abs=1e-12)
    assert path_loss_db(100) == pytest.approx(90.5, abs=1e-12)
    # 128.1 + 37.6 * log10(0.5) = 128.1 - 37.6 * 0.30103 = 116.7813
    assert path_loss_db(500) == pytest.approx(116.78, abs=0.01)
    assert path_loss_db(1) == path_loss_db(10)


@given(st.floats(0.01, 5000), st.floats(0.01, 5000))
def test_path_loss_monotone(a, b):
    lo, hi = sorted((a, b))
    assert path_loss_db(lo) <= path_loss_db(hi)


def test_channel_gain_definition():
    top = build_topology(ScenarioConfig(devices_per_gnb=1), seed=0)
    dev = top.devices[0]
    pl = path_loss_db(top.distance(dev))
    assert channel_gain(top, dev) == pytest.approx(10 ** (-pl / 10), rel=1e-15)
    assert channel_gain(top, dev) == channel_gain(top, dev)


def test_gain_of_100_db_loss():
    # PL = 100 dB at d = 1000 * 10**(-28.1 / 37.6)
    d = 1000 * 10 ** (-28.1 / 37.6)
    assert path_loss_db(d) == pytest.approx(100.0, abs=1e-10)
    assert 10 ** (-path_loss_db(d) / 10) == pytest.approx(1e-10, rel=1e-9)


def test_fading_unit_mean():
    top = build_topology(ScenarioConfig(devices_per_gnb=1), seed=0)
    dev = top.devices[0]
    rng = np.random.default_rng(0)
    base = channel_gain(top, dev)
    draws = np.array([channel_gain(top, dev, True, rng) for _ in range(100_000)]) / base
    assert abs(draws.mean() - 1.0) < 0.02


def test_task_of_one_megabyte():
    cfg = ScenarioConfig(task_size_bytes_min=MB, task_size_bytes_max=MB)
    top = build_topology(cfg.replace(devices_per_gnb=1))
    task = sample_task(top.devices[0], cfg, np.random.default_rng(0))
    assert task.size_bits == 8_388_608
    assert task.required_cycles == 3_355_443_200


def test_degenerate_size_range():
    cfg = ScenarioConfig(task_size_bytes_min=0.5 * MB, task_size_bytes_max=0.5 * MB, devices_per_gnb=1)
    dev = build_topology(cfg).devices[0]
    rng = np.random.default_rng(1)
    assert all(sample_task(dev, cfg, rng).size_bits == 4_194_304 for _ in range(100))


def test_task_size_mean_and_cycle_ratio():
    cfg = ScenarioConfig(devices_per_gnb=1)
    dev = build_topology(cfg).devices[0]
    rng = np.random.default_rng(2)
    tasks = [sample_task(dev, cfg, rng, i) for i in range(100_000)]
    mean_mb = np.mean([t.size_bits for t in tasks]) / 8 / MB
    assert abs(mean_mb - 1.25) / 1.25 < 0.01
    for t in tasks[:1000]:
        assert t.required_cycles / t.size_bits == cfg.cycles_per_bit
        assert 0.5 * MB * 8 <= t.size_bits <= 2 * MB * 8


def test_serialized_topology_has_type_field_names():
    text = build_topology(ScenarioConfig(devices_per_gnb=1)).to_json()
    for key in ("gnbs", "mecs", "devices", "rb_count", "mec_id", "device_ids", "core_capacity",
                "sharing_group_id", "arrival_rate"):
        assert f'"{key}"' in text
