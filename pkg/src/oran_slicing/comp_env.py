"""Computation slicing MDP for one MEC sharing group.

A round holds one task per end device, ordered round-robin over origin
servers. The agent places tasks one at a time by choosing a (server, cores)
pair, flat-indexed as ``server * cores_per_mec + cores - 1``. Cores stay
allocated until the round ends. Sub-steps pay 0; the last one pays the
inverse of the summed task delays. An infeasible choice pays ``-penalty`` and
ends the round.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ConfigError
from .seeding import stream
from .topology import ScenarioConfig, Task, Topology, sample_task


@dataclass
class CompState:
    free_cores: np.ndarray
    buffer_lengths: np.ndarray
    head_task: Optional[tuple]  # (size_bits, required_cycles, delay_threshold_s, origin_server_id)
    remaining_tasks_in_round: int


@dataclass
class CompAction:
    server_index: int
    core_count: int


@dataclass
class CompStepOutcome:
    reward: float
    task_delay_s: float
    feasible: bool
    next_state: CompState
    done: bool
    action_index: int = 0

    @property
    def round_complete(self) -> bool:
        return self.done

    @property
    def served_delays(self) -> list:
        return [self.task_delay_s] if self.feasible else []


def computation_delay(required_cycles: float, core_count: int, core_capacity: float) -> float:
    if core_count < 1 or core_capacity <= 0:
        raise ValueError("need core_count >= 1 and positive capacity")
    return required_cycles / (core_count * core_capacity)


def forwarding_rtt(size_bits: float, config: ScenarioConfig, local: bool = False) -> float:
    if local:
        return 0.0
    return 2.0 * (size_bits / config.backhaul_rate_bits_per_s + config.backhaul_prop_delay_s)


def task_delay(task: Task, server: int, origin: int, cores: int, config: ScenarioConfig) -> float:
    return (computation_delay(task.required_cycles, cores, config.core_capacity_cycles_per_s)
            + forwarding_rtt(task.size_bits, config, local=server == origin))


def decode_comp_action(index: int, server_count: int, cores_per_mec: int) -> CompAction:
    if not 0 <= index < server_count * cores_per_mec:
        raise IndexError(f"action index {index} outside [0, {server_count * cores_per_mec})")
    server, c = divmod(int(index), cores_per_mec)
    return CompAction(server, c + 1)


def encode_comp_action(action: CompAction, cores_per_mec: int) -> int:
    return action.server_index * cores_per_mec + action.core_count - 1


class CompEnv:
    """MEC-agent environment; one episode is one offloading round."""

    def __init__(self, topology: Topology, penalty: float = 1.0, seed: int = 0):
        self.topology = topology
        self.config = topology.config
        self.server_count = len(topology.mecs)
        self.cores_per_mec = self.config.cores_per_mec
        self.n_actions = self.server_count * self.cores_per_mec
        self.state_dim = 3 * self.server_count + 3
        self.penalty = float(penalty)
        self.round_size = len(topology.devices)
        self.max_cycles = self.config.max_task_bits * self.config.cycles_per_bit
        self.round_index = -1
        self.trace: list = []
        self._tasks: list = []
        self._pos = 0
        self.free_cores = np.full(self.server_count, self.cores_per_mec, dtype=np.int64)
        self.done = True
        self.reseed(seed)

    def reseed(self, seed: int) -> None:
        self.rng = stream(seed, "comp_env")
        self._task_counter = 0
        self.round_index = -1

    def _draw_round(self) -> list:
        per_server = [[] for _ in range(self.server_count)]
        for dev in self.topology.devices:
            task = sample_task(dev, self.config, self.rng, self._task_counter)
            self._task_counter += 1
            per_server[self.topology.gnbs[dev.gnb_id].mec_id].append(task)
        ordered = []
        depth = max((len(q) for q in per_server), default=0)
        for i in range(depth):
            for s in range(self.server_count):
                if i < len(per_server[s]):
                    ordered.append((per_server[s][i], s))
        return ordered

    def reset(self) -> CompState:
        self.round_index += 1
        self._tasks = self._draw_round()
        self._pos = 0
        self._delays = []
        self.trace = []
        self.free_cores = np.full(self.server_count, self.cores_per_mec, dtype=np.int64)
        self.done = not self._tasks
        return self.observe()

    def round_tasks(self) -> list:
        """Unassigned (task, origin) pairs of the current round, in decision order."""
        return list(self._tasks[self._pos:])

    def observe(self) -> CompState:
        buffers = np.zeros(self.server_count, dtype=np.int64)
        for _, origin in self._tasks[self._pos:]:
            buffers[origin] += 1
        head = None
        if not self.done and self._pos < len(self._tasks):
            task, origin = self._tasks[self._pos]
            head = (task.size_bits, task.required_cycles, task.delay_threshold_s, origin)
        return CompState(self.free_cores.copy(), buffers, head, len(self._tasks) - self._pos)

    def step(self, action_index: int) -> CompStepOutcome:
        if self.done:
            raise RuntimeError("round is over; call reset()")
        action = decode_comp_action(action_index, self.server_count, self.cores_per_mec)
        task, origin = self._tasks[self._pos]
        server, cores = action.server_index, action.core_count
        delay = task_delay(task, server, origin, cores, self.config)
        feasible = cores <= self.free_cores[server] and delay <= task.delay_threshold_s
        if not feasible:
            self.done = True
            self._record(task, server, cores, origin, delay, -self.penalty)
            return CompStepOutcome(-self.penalty, delay, False, self.observe(), True, action_index)
        self.free_cores[server] -= cores
        self._delays.append(delay)
        self._pos += 1
        reward = 0.0
        if self._pos == len(self._tasks):
            total = float(sum(self._delays))
            reward = 1.0 / total if total > 0 else 0.0
            self.done = True
            self.free_cores[:] = self.cores_per_mec
        self._record(task, server, cores, origin, delay, reward)
        return CompStepOutcome(reward, delay, True, self.observe(), self.done, action_index)

    def _record(self, task, server, cores, origin, delay, reward):
        self.trace.append({
            "round": self.round_index, "task_id": task.id, "server": server, "cores": cores,
            "placement": "local" if server == origin else "remote", "delay_s": delay,
            "reward": reward,
        })

    def encode_state(self, state: CompState) -> np.ndarray:
        S = self.server_count
        feats = np.zeros(self.state_dim)
        feats[:S] = state.free_cores / self.cores_per_mec
        feats[S:2 * S] = state.buffer_lengths / max(self.round_size, 1)
        if state.head_task is not None:
            size, cycles, threshold, origin = state.head_task
            feats[2 * S] = size / self.config.max_task_bits
            feats[2 * S + 1] = cycles / self.max_cycles
            feats[2 * S + 2] = threshold / 1.0
            feats[2 * S + 3 + origin] = 1.0
        return np.clip(feats, 0.0, 1.0)

    def check_round_cap(self, cap: int) -> None:
        space = self.n_actions ** self.round_size
        if space > cap:
            raise ConfigError(f"round enumeration size {space} exceeds cap {cap}")
