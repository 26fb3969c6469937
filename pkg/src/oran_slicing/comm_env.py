"""Per-gNB communication slicing MDP.

An action is a row vector giving, for every RB, the device it serves
(0 idle, k for the k-th associated device). Actions are indexed in mixed
radix ``device_count + 1`` with RB 0 as the least significant digit.

Each device is an M/M/1 queue: service rate = achievable rate / task size,
sojourn time = 1 / (mu - lambda). The reward is the inverse of the summed
delays when every pending task is served by a stable queue within the delay
threshold, and ``-penalty`` otherwise.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from . import ConfigError
from .seeding import stream
from .topology import ScenarioConfig, Topology, channel_gain, sample_task

DEFAULT_ACTION_CAP = 65536
LOG_GAIN_RANGE = (-13.0, -7.0)


@dataclass
class CommState:
    gains: np.ndarray
    pending_sizes_bits: np.ndarray  # 0 means no pending task
    delay_threshold_s: float
    rb_available: int

    @property
    def device_count(self) -> int:
        return len(self.gains)


@dataclass
class CommStepOutcome:
    reward: float
    per_device_delay_s: np.ndarray  # inf when starved or unstable, nan when idle
    feasible: bool
    next_state: Optional[CommState]
    done: bool
    action_index: int = 0
    round_complete: bool = True

    @property
    def served_delays(self) -> list:
        return [float(d) for d in self.per_device_delay_s if math.isfinite(d)]


def action_space_size(rb_count: int, device_count: int, cap: int = DEFAULT_ACTION_CAP) -> int:
    if rb_count < 0 or device_count < 0:
        raise ConfigError("rb_count and device_count must be >= 0")
    size = (device_count + 1) ** rb_count
    if size > cap:
        raise ConfigError(
            f"action space too large: ({device_count}+1)^{rb_count} = {size} exceeds cap {cap}"
        )
    return size


def decode_action(index: int, rb_count: int, device_count: int) -> np.ndarray:
    base = device_count + 1
    if not 0 <= index < base**rb_count:
        raise IndexError(f"action index {index} outside [0, {base**rb_count})")
    digits = np.zeros(rb_count, dtype=np.int64)
    for b in range(rb_count):
        index, digits[b] = divmod(index, base)
    return digits


def encode_action(assignment: Sequence[int], device_count: int) -> int:
    base = device_count + 1
    index = 0
    for digit in reversed(list(assignment)):
        if not 0 <= digit <= device_count:
            raise IndexError(f"assignment entry {digit} outside [0, {device_count}]")
        index = index * base + int(digit)
    return index


def achievable_rate(gain: float, rb_indices, config: ScenarioConfig) -> float:
    """Shannon rate summed over the device's RBs with the power split equally."""
    n = rb_indices if isinstance(rb_indices, (int, np.integer)) else len(rb_indices)
    if n < 1:
        raise ValueError("achievable_rate needs at least one RB")
    p_rb = config.tx_power_w / n
    snr = p_rb * gain / config.noise_w_per_rb
    return n * config.rb_bandwidth_hz * math.log2(1.0 + snr)


def comm_delay(rate_bits_per_s: float, task_size_bits: float, arrival_rate: float) -> float:
    """M/M/1 sojourn time; ``inf`` marks an unstable queue."""
    if rate_bits_per_s <= 0 or task_size_bits <= 0:
        raise ValueError("rate and task size must be positive")
    if arrival_rate < 0:
        raise ValueError("arrival rate must be non-negative")
    mu = rate_bits_per_s / task_size_bits
    if mu <= arrival_rate:
        return math.inf
    return 1.0 / (mu - arrival_rate)


def rb_counts(assignment: np.ndarray, device_count: int) -> np.ndarray:
    """RBs held by each device (index 0 is device 1)."""
    return np.bincount(assignment, minlength=device_count + 1)[1:]


def evaluate_assignment(state: CommState, assignment: np.ndarray, config: ScenarioConfig,
                        arrival_rate: float, penalty: float):
    """Reward, per-device delays and feasibility of one assignment under frozen randomness."""
    counts = rb_counts(assignment, state.device_count)
    delays = np.full(state.device_count, np.nan)
    feasible = True
    for k in range(state.device_count):
        size = state.pending_sizes_bits[k]
        if size <= 0:
            continue
        if counts[k] == 0:
            delays[k] = math.inf
            feasible = False
            continue
        rate = achievable_rate(state.gains[k], int(counts[k]), config)
        delays[k] = comm_delay(rate, size, arrival_rate)
        if not delays[k] <= state.delay_threshold_s:
            feasible = False
    if not feasible:
        return -penalty, delays, False
    total = float(np.nansum(delays))
    reward = 1.0 / total if total > 0 else 0.0
    return reward, delays, True


class CommEnv:
    """Communication slicing environment for one gNB of a topology."""

    def __init__(self, topology: Topology, gnb_id: int = 0, penalty: float = 1.0,
                 episode_length: int = 200, action_cap: int = DEFAULT_ACTION_CAP, seed: int = 0):
        if not 0 <= gnb_id < len(topology.gnbs):
            raise ConfigError(f"gnb_id {gnb_id} outside topology with {len(topology.gnbs)} gNBs")
        if episode_length < 1:
            raise ConfigError("episode_length must be >= 1")
        self.topology = topology
        self.config = topology.config
        self.gnb = topology.gnbs[gnb_id]
        self.devices = topology.devices_of(gnb_id)
        self.device_count = len(self.devices)
        self.rb_count = self.gnb.rb_count
        self.n_actions = action_space_size(self.rb_count, self.device_count, action_cap)
        self.state_dim = 2 * self.device_count + 2
        self.penalty = float(penalty)
        self.episode_length = int(episode_length)
        self.arrival_rate = self.config.arrival_rate_tasks_per_s
        self.base_gains = np.array([channel_gain(topology, d) for d in self.devices])
        self.state: Optional[CommState] = None
        self.t = 0
        self._task_counter = 0
        self.reseed(seed)

    def reseed(self, seed: int) -> None:
        self.rng = stream(seed, "comm_env", self.gnb.id)
        self._task_counter = 0

    def _draw_state(self) -> CommState:
        gains = self.base_gains.copy()
        if self.config.fading_enabled:
            gains = gains * self.rng.exponential(1.0, size=self.device_count)
        sizes = np.empty(self.device_count)
        for k, dev in enumerate(self.devices):
            sizes[k] = sample_task(dev, self.config, self.rng, self._task_counter).size_bits
            self._task_counter += 1
        return CommState(gains, sizes, self.config.delay_threshold_s, self.rb_count)

    def reset(self) -> CommState:
        self.t = 0
        self.state = self._draw_state()
        return self.state

    def decode(self, action_index: int) -> np.ndarray:
        return decode_action(action_index, self.rb_count, self.device_count)

    def evaluate(self, state: CommState, action_index: int):
        return evaluate_assignment(state, self.decode(action_index), self.config,
                                   self.arrival_rate, self.penalty)

    def step(self, action_index: int) -> CommStepOutcome:
        if self.state is None:
            raise RuntimeError("reset() before step()")
        reward, delays, feasible = self.evaluate(self.state, action_index)
        self.t += 1
        done = self.t >= self.episode_length
        self.state = self._draw_state()
        return CommStepOutcome(reward, delays, feasible, self.state, done, action_index)

    def encode_state(self, state: CommState) -> np.ndarray:
        lo, hi = LOG_GAIN_RANGE
        feats = np.empty(self.state_dim)
        with np.errstate(divide="ignore"):
            log_gain = np.log10(state.gains)
        feats[0:2 * self.device_count:2] = (log_gain - lo) / (hi - lo)
        feats[1:2 * self.device_count:2] = state.pending_sizes_bits / self.config.max_task_bits
        feats[-2] = state.rb_available / self.rb_count
        feats[-1] = state.delay_threshold_s / 1.0
        return np.clip(feats, 0.0, 1.0)
