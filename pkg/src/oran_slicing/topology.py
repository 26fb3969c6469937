"""Physical scenario: gNB/MEC placement, device association, channel gains and tasks.

Channel: log-distance macro-cell path loss ``128.1 + 37.6 log10(d_km)`` with
distances clamped at 10 m, optional unit-mean exponential (Rayleigh power)
block fading. gNBs sit at the centres of a regular grid over the square area;
every gNB owns one MEC server and all servers form a single sharing group.
"""
from __future__ import annotations

import dataclasses
import json
import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from . import ConfigError
from .seeding import stream

MB = 2**20  # bytes; binary megabyte
MIN_DISTANCE_M = 10.0


@dataclass(frozen=True)
class ScenarioConfig:
    area_side_m: float = 2000.0
    gnb_count: int = 4
    cell_radius_m: float = 500.0
    # Not stated for the reported figures; desk-scale choices.
    devices_per_gnb: int = 3
    # When set, this many devices are assigned round-robin over the gNBs
    # instead of devices_per_gnb each.
    device_total: Optional[int] = None
    rb_per_gnb: int = 6
    rb_bandwidth_hz: float = 180e3
    tx_power_dbm: float = 23.0
    noise_dbm_per_rb: float = -114.0
    cores_per_mec: int = 4
    core_capacity_cycles_per_s: float = 3e9
    task_size_bytes_min: float = 0.5 * MB
    task_size_bytes_max: float = 2.0 * MB
    cycles_per_bit: float = 400.0
    # Not reported. At 0.2 tasks/s most cell-edge queues are unstable for
    # 0.5-2 MB tasks, so a lighter load keeps the oracle mostly feasible.
    arrival_rate_tasks_per_s: float = 0.02
    # Delays under these task sizes are seconds, not milliseconds.
    delay_threshold_s: float = 10.0
    backhaul_rate_bits_per_s: float = 1e9
    backhaul_prop_delay_s: float = 0.5e-3
    fading_enabled: bool = False
    seed: int = 0

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("gnb_count", "rb_per_gnb", "cores_per_mec"):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        for name in ("devices_per_gnb",):
            value = getattr(self, name)
            if not isinstance(value, (int, np.integer)) or isinstance(value, bool) or value < 0:
                raise ConfigError(f"{name} must be an integer >= 0, got {value!r}")
        if self.device_total is not None and (
            not isinstance(self.device_total, (int, np.integer)) or self.device_total < 0
        ):
            raise ConfigError(f"device_total must be None or an integer >= 0, got {self.device_total!r}")
        positive = (
            "area_side_m", "cell_radius_m", "rb_bandwidth_hz", "core_capacity_cycles_per_s",
            "task_size_bytes_min", "task_size_bytes_max", "cycles_per_bit",
            "delay_threshold_s", "backhaul_rate_bits_per_s",
        )
        for name in positive:
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or not value > 0:
                raise ConfigError(f"{name} must be a positive number, got {value!r}")
        for name in ("arrival_rate_tasks_per_s", "backhaul_prop_delay_s"):
            value = getattr(self, name)
            if not isinstance(value, (int, float)) or isinstance(value, bool) or value < 0:
                raise ConfigError(f"{name} must be a non-negative number, got {value!r}")
        for name in ("tx_power_dbm", "noise_dbm_per_rb"):
            if not math.isfinite(getattr(self, name)):
                raise ConfigError(f"{name} must be finite")
        if self.task_size_bytes_min > self.task_size_bytes_max:
            raise ConfigError("task_size_bytes_min must not exceed task_size_bytes_max")
        if not isinstance(self.fading_enabled, bool):
            raise ConfigError("fading_enabled must be a boolean")

    @property
    def total_devices(self) -> int:
        if self.device_total is not None:
            return int(self.device_total)
        return self.gnb_count * self.devices_per_gnb

    @property
    def tx_power_w(self) -> float:
        return dbm_to_watt(self.tx_power_dbm)

    @property
    def noise_w_per_rb(self) -> float:
        return dbm_to_watt(self.noise_dbm_per_rb)

    @property
    def max_task_bits(self) -> float:
        return self.task_size_bytes_max * 8.0

    def replace(self, **changes) -> "ScenarioConfig":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        return dataclasses.asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> "ScenarioConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {', '.join(unknown)}")
        return cls(**data)


@dataclass(frozen=True)
class GNodeB:
    id: int
    position: tuple
    rb_count: int
    mec_id: int
    device_ids: tuple = ()


@dataclass(frozen=True)
class MecServer:
    id: int
    gnb_id: int
    core_count: int
    core_capacity: float
    sharing_group_id: int = 0


@dataclass(frozen=True)
class EndDevice:
    id: int
    position: tuple
    gnb_id: int
    arrival_rate: float


@dataclass(frozen=True)
class Task:
    id: int
    device_id: int
    size_bits: float
    required_cycles: float
    delay_threshold_s: float


@dataclass(frozen=True)
class Topology:
    config: ScenarioConfig
    gnbs: tuple
    mecs: tuple
    devices: tuple = field(default=())

    def devices_of(self, gnb_id: int) -> list:
        return [self.devices[i] for i in self.gnbs[gnb_id].device_ids]

    def gnb_of(self, device: EndDevice) -> GNodeB:
        return self.gnbs[device.gnb_id]

    def distance(self, device: EndDevice) -> float:
        gx, gy = self.gnbs[device.gnb_id].position
        dx, dy = device.position
        return math.hypot(dx - gx, dy - gy)

    def to_dict(self) -> dict:
        return {
            "config": self.config.to_dict(),
            "gnbs": [dataclasses.asdict(g) for g in self.gnbs],
            "mecs": [dataclasses.asdict(m) for m in self.mecs],
            "devices": [dataclasses.asdict(d) for d in self.devices],
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), indent=2, sort_keys=True)


def dbm_to_watt(dbm: float) -> float:
    return 10.0 ** ((dbm - 30.0) / 10.0)


def grid_positions(count: int, side: float) -> list:
    cols = math.ceil(math.sqrt(count))
    rows = math.ceil(count / cols)
    return [
        (((k % cols) + 0.5) * side / cols, ((k // cols) + 0.5) * side / rows)
        for k in range(count)
    ]


def build_topology(config: ScenarioConfig, seed: Optional[int] = None) -> Topology:
    """Place gNBs on a grid and scatter devices uniformly over each gNB's disk.

    Devices are dealt round-robin to gNBs. Each device position comes from its
    own sub-stream keyed by (gNB, index within the cell), so growing the device
    count never moves devices that already exist.
    """
    config.validate()
    seed = config.seed if seed is None else seed
    centres = grid_positions(config.gnb_count, config.area_side_m)
    members = [[] for _ in range(config.gnb_count)]
    devices = []
    for k in range(config.total_devices):
        g = k % config.gnb_count
        local = k // config.gnb_count
        rng = stream(seed, "topology.device", g, local)
        r = config.cell_radius_m * math.sqrt(rng.random())
        theta = 2.0 * math.pi * rng.random()
        cx, cy = centres[g]
        pos = (cx + r * math.cos(theta), cy + r * math.sin(theta))
        devices.append(EndDevice(k, pos, g, config.arrival_rate_tasks_per_s))
        members[g].append(k)
    gnbs = tuple(
        GNodeB(g, centres[g], config.rb_per_gnb, g, tuple(members[g]))
        for g in range(config.gnb_count)
    )
    mecs = tuple(
        MecServer(g, g, config.cores_per_mec, config.core_capacity_cycles_per_s, 0)
        for g in range(config.gnb_count)
    )
    return Topology(config, gnbs, mecs, tuple(devices))


def path_loss_db(distance_m: float) -> float:
    d = max(float(distance_m), MIN_DISTANCE_M)
    return 128.1 + 37.6 * math.log10(d / 1000.0)


def channel_gain(topology: Topology, device: EndDevice, fading: bool = False, rng=None) -> float:
    """Linear power gain between ``device`` and its serving gNB."""
    gain = 10.0 ** (-path_loss_db(topology.distance(device)) / 10.0)
    if fading:
        gain *= rng.exponential(1.0)
    return gain


def sample_task(device: EndDevice, config: ScenarioConfig, rng, task_id: int = 0) -> Task:
    """Task with a size drawn uniformly between the configured bounds, in whole bytes."""
    size_bytes = round(rng.uniform(config.task_size_bytes_min, config.task_size_bytes_max))
    size_bits = float(size_bytes * 8)
    return Task(
        id=task_id,
        device_id=device.id,
        size_bits=size_bits,
        required_cycles=size_bits * config.cycles_per_bit,
        delay_threshold_s=config.delay_threshold_s,
    )
