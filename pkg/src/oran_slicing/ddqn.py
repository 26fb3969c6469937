"""Double DQN: epsilon-greedy exploration, uniform replay, target-network bootstrapping.

The same loop trains the gNB-agents (communication level) and the MEC-agent
(computation level). Environments only need ``reset()``, ``step(index)``,
``encode_state(state)``, ``reseed(seed)``, ``n_actions`` and ``state_dim``.
"""
from __future__ import annotations

import dataclasses
import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from . import ConfigError
from .neural import (MlpParams, adam_init, adam_step, backward, forward, init_mlp,
                     mse_loss_and_grad)
from .seeding import stream


@dataclass(frozen=True)
class AgentHyper:
    gamma: float = 0.99
    epsilon_start: float = 1.0
    epsilon_min: float = 0.01
    epsilon_decay: float = 0.995
    target_sync_steps: int = 100
    warmup_experiences: int = 1000
    batch_size: int = 64
    learning_rate: float = 0.01
    episodes: int = 100
    episode_length: int = 200
    buffer_capacity: int = 100_000
    hidden_dims: tuple = (256, 256)

    def __post_init__(self):
        if not 0.0 <= self.gamma <= 1.0:
            raise ConfigError(f"gamma must lie in [0, 1], got {self.gamma}")
        for name in ("epsilon_start", "epsilon_min", "epsilon_decay"):
            value = getattr(self, name)
            if not 0.0 <= value <= 1.0:
                raise ConfigError(f"{name} must lie in [0, 1], got {value}")
        for name in ("target_sync_steps", "batch_size", "episode_length", "buffer_capacity"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 1:
                raise ConfigError(f"{name} must be an integer >= 1, got {value!r}")
        for name in ("warmup_experiences", "episodes"):
            value = getattr(self, name)
            if not isinstance(value, int) or value < 0:
                raise ConfigError(f"{name} must be an integer >= 0, got {value!r}")
        if self.batch_size > self.buffer_capacity:
            raise ConfigError("batch_size must not exceed buffer_capacity")
        if not self.learning_rate > 0:
            raise ConfigError("learning_rate must be positive")
        object.__setattr__(self, "hidden_dims", tuple(int(h) for h in self.hidden_dims))

    def replace(self, **changes) -> "AgentHyper":
        return dataclasses.replace(self, **changes)

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["hidden_dims"] = list(self.hidden_dims)
        return d

    @classmethod
    def from_dict(cls, data: dict, base: Optional["AgentHyper"] = None) -> "AgentHyper":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ConfigError(f"unknown agent keys: {', '.join(unknown)}")
        return dataclasses.replace(base or cls(), **data)


# Mini-batch size and learning rate per level as reported; the rest are shared defaults.
# Comm transitions do not depend on the action, so the optimal policy is myopic
# for any discount and bootstrapping only adds noise. A comp episode is one
# round with a single terminal reward, hence no discounting inside it.
COMM_HYPER = AgentHyper(batch_size=64, learning_rate=0.01, gamma=0.0)
COMP_HYPER = AgentHyper(batch_size=256, learning_rate=0.001, gamma=1.0)


@dataclass
class Experience:
    state: np.ndarray
    action: int
    reward: float
    next_state: np.ndarray
    done: bool


@dataclass
class Minibatch:
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    dones: np.ndarray


class ReplayBuffer:
    """Fixed-capacity ring store; the oldest experience is overwritten first."""

    def __init__(self, capacity: int, state_dim: int):
        self.capacity = int(capacity)
        self.states = np.zeros((capacity, state_dim))
        self.next_states = np.zeros((capacity, state_dim))
        self.actions = np.zeros(capacity, dtype=np.int64)
        self.rewards = np.zeros(capacity)
        self.dones = np.zeros(capacity, dtype=bool)
        self.cursor = 0
        self.size = 0

    def __len__(self) -> int:
        return self.size

    def push(self, exp: Experience) -> None:
        i = self.cursor
        self.states[i] = exp.state
        self.actions[i] = exp.action
        self.rewards[i] = exp.reward
        self.next_states[i] = exp.next_state
        self.dones[i] = exp.done
        self.cursor = (i + 1) % self.capacity
        self.size = min(self.size + 1, self.capacity)

    def get(self, indices) -> Minibatch:
        idx = np.asarray(indices, dtype=np.int64)
        return Minibatch(self.states[idx], self.actions[idx], self.rewards[idx],
                         self.next_states[idx], self.dones[idx])

    def slot_of_age(self, age: int) -> int:
        """Storage slot of the experience pushed ``age`` pushes ago (0 = newest)."""
        return (self.cursor - 1 - age) % self.capacity


def sample(buffer: ReplayBuffer, batch_size: int, rng) -> Optional[Minibatch]:
    """Uniform sample without replacement, or None while the buffer is too small."""
    if len(buffer) < batch_size:
        return None
    return buffer.get(rng.choice(len(buffer), size=batch_size, replace=False))


def select_action(params: MlpParams, state_vec, epsilon: float, rng) -> int:
    n_actions = params.weights[-1].shape[1]
    if epsilon > 0 and rng.random() < epsilon:
        return int(rng.integers(n_actions))
    q, _ = forward(params, state_vec)
    return int(np.argmax(q))


def ddqn_targets(batch: Minibatch, main: MlpParams, target: MlpParams, gamma: float) -> np.ndarray:
    """r + gamma * Q_target(s', argmax_a Q_main(s', a)), or r for terminal experiences."""
    q_main_next, _ = forward(main, batch.next_states)
    q_target_next, _ = forward(target, batch.next_states)
    best = np.argmax(q_main_next, axis=1)
    bootstrap = q_target_next[np.arange(len(best)), best]
    return batch.rewards + np.where(batch.dones, 0.0, gamma * bootstrap)


class DdqnAgent:
    def __init__(self, state_dim: int, n_actions: int, hyper: AgentHyper, rng):
        self.hyper = hyper
        self.rng = rng
        dims = [state_dim, *hyper.hidden_dims, n_actions]
        self.main = init_mlp(dims, rng)
        self.target = self.main.copy()
        self.adam = adam_init(self.main)
        self.buffer = ReplayBuffer(hyper.buffer_capacity, state_dim)
        self.train_steps = 0
        self.sync_count = 0

    def act(self, state_vec, epsilon: float) -> int:
        return select_action(self.main, state_vec, epsilon, self.rng)


def train_step(agent: DdqnAgent, batch: Minibatch) -> float:
    targets = ddqn_targets(batch, agent.main, agent.target, agent.hyper.gamma)
    q, cache = forward(agent.main, batch.states)
    loss, grad = mse_loss_and_grad(q, batch.actions, targets)
    adam_step(agent.main, backward(agent.main, cache, grad), agent.adam, agent.hyper.learning_rate)
    agent.train_steps += 1
    return loss


def sync_target(agent: DdqnAgent) -> None:
    agent.target = agent.main.copy()
    agent.sync_count += 1


@dataclass
class EpisodeMetrics:
    episode: int
    cumulative_average_reward: float
    mean_loss: float  # nan when no training step ran in the episode
    epsilon: float
    episode_reward: float = 0.0


def epsilon_schedule(hyper: AgentHyper, episodes: int) -> list:
    eps, out = hyper.epsilon_start, []
    for _ in range(episodes):
        out.append(eps)
        eps = max(hyper.epsilon_min, eps * hyper.epsilon_decay)
    return out


def train(env, hyper: AgentHyper, seed: int, agent: Optional[DdqnAgent] = None):
    """Offline training loop; returns ``(agent, [EpisodeMetrics, ...])``.

    The environment is reseeded from ``seed``, so the result depends only on
    the environment's topology, ``hyper`` and ``seed``.
    """
    env.reseed(stream(seed, "train_env").integers(2**31 - 1))
    if agent is None:
        agent = DdqnAgent(env.state_dim, env.n_actions, hyper, stream(seed, "agent"))
    warmup = max(hyper.warmup_experiences, hyper.batch_size)
    metrics, running = [], 0.0
    for episode, eps in enumerate(epsilon_schedule(hyper, hyper.episodes)):
        state = env.reset()
        done = getattr(env, "done", False)
        s_vec = env.encode_state(state)
        ep_reward, losses, steps = 0.0, [], 0
        while not done and steps < hyper.episode_length:
            a = agent.act(s_vec, eps)
            out = env.step(a)
            next_vec = env.encode_state(out.next_state)
            agent.buffer.push(Experience(s_vec, a, out.reward, next_vec, out.done))
            ep_reward += out.reward
            steps += 1
            if len(agent.buffer) >= warmup:
                losses.append(train_step(agent, sample(agent.buffer, hyper.batch_size, agent.rng)))
                if agent.train_steps % hyper.target_sync_steps == 0:
                    sync_target(agent)
            s_vec, done = next_vec, out.done
        running += ep_reward
        metrics.append(EpisodeMetrics(
            episode=episode,
            cumulative_average_reward=running / (episode + 1),
            mean_loss=float(np.mean(losses)) if losses else math.nan,
            epsilon=eps,
            episode_reward=ep_reward,
        ))
    return agent, metrics


@dataclass
class EvalResult:
    mean_reward: float
    mean_delay_s: float
    feasibility_rate: float
    p95_delay_s: float = math.nan
    rounds: int = 0


def rollout(env, policy, episodes: int, seed: int, max_steps: int = 10**6,
            on_outcome=None) -> EvalResult:
    """Run ``policy(state) -> action`` for ``episodes`` episodes from ``env.reseed(seed)``.

    Rewards are averaged per offloading round (a comm step, or a whole comp
    round); delays are those of served tasks; feasibility is per round.
    """
    env.reseed(seed)
    total, rounds, feasible_rounds, delays = 0.0, 0, 0, []
    for _ in range(episodes):
        state = env.reset()
        done = getattr(env, "done", False)
        steps, round_ok, round_reward = 0, True, 0.0
        while not done and steps < max_steps:
            out = env.step(policy(state))
            if on_outcome is not None:
                on_outcome(out)
            steps += 1
            delays.extend(out.served_delays)
            round_ok = round_ok and out.feasible
            round_reward += out.reward
            if out.round_complete:
                total += round_reward
                rounds += 1
                feasible_rounds += round_ok
                round_ok, round_reward = True, 0.0
            state, done = out.next_state, out.done
    return EvalResult(
        mean_reward=total / rounds if rounds else 0.0,
        # fsum: equal delays give an identical mean whatever their count
        mean_delay_s=math.fsum(delays) / len(delays) if delays else math.nan,
        feasibility_rate=feasible_rounds / rounds if rounds else 0.0,
        p95_delay_s=float(np.percentile(delays, 95)) if delays else math.nan,
        rounds=rounds,
    )


def evaluate(env, params: MlpParams, episodes: int, seed: int, on_outcome=None) -> EvalResult:
    """Greedy rollouts with no exploration and no learning."""
    return rollout(env, lambda s: int(np.argmax(forward(params, env.encode_state(s))[0])),
                   episodes, seed, on_outcome=on_outcome)


def evaluate_random(env, episodes: int, seed: int) -> EvalResult:
    rng = stream(seed, "random_policy")
    return rollout(env, lambda s: int(rng.integers(env.n_actions)), episodes, seed)
