"""Brute-force reference policies for small instances.

The communication oracle scores every RB assignment of one state; the
computation oracle enumerates every sequence of (server, cores) decisions of
a round. Both are myopic (one round) since rewards in both MDPs are paid per
round.
"""
from __future__ import annotations

import math

import numpy as np

from . import ConfigError
from .comm_env import CommEnv, CommState, achievable_rate, comm_delay
from .comp_env import CompEnv, task_delay
from .ddqn import evaluate_random, rollout

COMP_ENUMERATION_CAP = 10**6


def comm_action_rewards(state: CommState, env: CommEnv) -> np.ndarray:
    """One-step reward of every action index, vectorised over the action space."""
    n_dev, n_rb = state.device_count, env.rb_count
    base = n_dev + 1
    idx = np.arange(env.n_actions)
    counts = np.zeros((env.n_actions, n_dev), dtype=np.int64)
    for _ in range(n_rb):
        idx, digit = np.divmod(idx, base)
        for k in range(n_dev):
            counts[:, k] += digit == k + 1
    # delay of device k for each possible RB count 0..n_rb
    table = np.full((n_dev, n_rb + 1), np.inf)
    for k in range(n_dev):
        for n in range(1, n_rb + 1):
            if state.pending_sizes_bits[k] > 0:
                rate = achievable_rate(state.gains[k], n, env.config)
                table[k, n] = comm_delay(rate, state.pending_sizes_bits[k], env.arrival_rate)
    has_task = state.pending_sizes_bits > 0
    delays = np.zeros((env.n_actions, n_dev))
    for k in range(n_dev):
        if has_task[k]:
            delays[:, k] = table[k, counts[:, k]]
    ok = np.all(delays <= state.delay_threshold_s, axis=1)
    total = delays.sum(axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        rewards = np.where(total > 0, 1.0 / total, 0.0)
    return np.where(ok, rewards, -env.penalty)


def best_comm_action(state: CommState, env: CommEnv):
    """(action index, reward) maximising the one-step reward; lowest index on ties."""
    if env.n_actions > 65536:
        raise ConfigError(f"action space {env.n_actions} too large for exhaustive search")
    rewards = comm_action_rewards(state, env)
    best = int(np.argmax(rewards))
    return best, float(rewards[best])


def best_comp_round(tasks, free_cores, env: CompEnv):
    """Minimise the summed delay of a round by exhaustive sequential allocation.

    ``tasks`` are ``(task, origin_server)`` pairs in decision order. Returns
    ``(allocations, total_delay)`` with allocations as (server, cores) pairs, or
    ``(None, inf)`` when no feasible sequence exists.
    """
    n_servers = len(free_cores)
    cores_max = env.cores_per_mec
    space = (n_servers * cores_max) ** len(tasks)
    if space > COMP_ENUMERATION_CAP:
        raise ConfigError(f"round enumeration size {space} exceeds cap {COMP_ENUMERATION_CAP}")
    best = [math.inf, None]
    free = list(free_cores)
    chosen = []

    def search(i, acc):
        if acc >= best[0]:
            return
        if i == len(tasks):
            best[0], best[1] = acc, list(chosen)
            return
        task, origin = tasks[i]
        for server in range(n_servers):
            for cores in range(1, min(cores_max, free[server]) + 1):
                d = task_delay(task, server, origin, cores, env.config)
                if d > task.delay_threshold_s:
                    continue
                free[server] -= cores
                chosen.append((server, cores))
                search(i + 1, acc + d)
                chosen.pop()
                free[server] += cores

    if not tasks:
        return [], 0.0
    search(0, 0.0)
    return best[1], best[0]


def _comp_round_reward(env: CompEnv, allocations, total) -> float:
    if allocations is None:
        return -env.penalty
    return 1.0 / total if total > 0 else 0.0


def oracle_eval(env, episodes: int, seed: int) -> float:
    """Mean reward per offloading round of the exhaustive policy."""
    if isinstance(env, CommEnv):
        return rollout(env, lambda s: best_comm_action(s, env)[0], episodes, seed).mean_reward
    env.reseed(seed)
    rewards = []
    for _ in range(episodes):
        state = env.reset()
        if env.done:
            continue
        allocations, total = best_comp_round(env.round_tasks(), state.free_cores, env)
        rewards.append(_comp_round_reward(env, allocations, total))
    return float(np.mean(rewards)) if rewards else 0.0


def random_eval(env, episodes: int, seed: int) -> float:
    """Mean reward per offloading round of the uniform-random policy."""
    return evaluate_random(env, episodes, seed).mean_reward
