"""Fully connected Q-network: ReLU hidden layers, linear output, MSE on taken actions, Adam.

Everything is float64 numpy. Weights are stored as (fan_in, fan_out) so a
batch ``x`` of shape (n, fan_in) maps to ``x @ W + b``.
"""
from __future__ import annotations

import json
import struct
from dataclasses import dataclass

import numpy as np

from . import ConfigError

CHECKPOINT_MAGIC = b"ORSQNET"
CHECKPOINT_VERSION = 1


@dataclass
class MlpParams:
    weights: list
    biases: list

    @property
    def layer_dims(self) -> list:
        return [self.weights[0].shape[0]] + [w.shape[1] for w in self.weights]

    def copy(self) -> "MlpParams":
        return MlpParams([w.copy() for w in self.weights], [b.copy() for b in self.biases])


@dataclass
class Gradients:
    weights: list
    biases: list


@dataclass
class AdamState:
    m_w: list
    m_b: list
    v_w: list
    v_b: list
    step_count: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    epsilon_hat: float = 1e-8


def init_mlp(layer_dims, rng) -> MlpParams:
    """He-uniform weights (bound sqrt(6 / fan_in)), zero biases."""
    dims = [int(d) for d in layer_dims]
    if len(dims) < 2 or any(d < 1 for d in dims):
        raise ConfigError(f"layer_dims needs >= 2 positive sizes, got {layer_dims!r}")
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        bound = np.sqrt(6.0 / fan_in)
        weights.append(rng.uniform(-bound, bound, size=(fan_in, fan_out)))
        biases.append(np.zeros(fan_out))
    return MlpParams(weights, biases)


def forward(params: MlpParams, x):
    """Q-values for a state vector or a batch of them, plus the cache for backward."""
    x = np.asarray(x, dtype=np.float64)
    single = x.ndim == 1
    h = x[None, :] if single else x
    if h.shape[1] != params.weights[0].shape[0]:
        raise ValueError(f"input has {h.shape[1]} features, network expects {params.weights[0].shape[0]}")
    activations = [h]
    last = len(params.weights) - 1
    for i, (w, b) in enumerate(zip(params.weights, params.biases)):
        z = h @ w + b
        h = z if i == last else np.maximum(z, 0.0)
        activations.append(h)
    out = h[0] if single else h
    return out, activations


def mse_loss_and_grad(q_values, actions, targets):
    """Mean squared TD error over the batch and its gradient w.r.t. all Q outputs."""
    q = np.asarray(q_values, dtype=np.float64)
    actions = np.asarray(actions, dtype=np.int64)
    targets = np.asarray(targets, dtype=np.float64)
    n = q.shape[0]
    if actions.shape != (n,) or targets.shape != (n,):
        raise ValueError("batch sizes of q_values, actions and targets disagree")
    if np.any(actions < 0) or np.any(actions >= q.shape[1]):
        raise IndexError("taken action index out of range")
    rows = np.arange(n)
    err = q[rows, actions] - targets
    grad = np.zeros_like(q)
    grad[rows, actions] = 2.0 * err / n
    return float(np.mean(err**2)), grad


def backward(params: MlpParams, cache, grad_out) -> Gradients:
    grad = np.asarray(grad_out, dtype=np.float64)
    if grad.ndim == 1:
        grad = grad[None, :]
    if grad.shape != cache[-1].shape:
        raise ValueError(f"output gradient shape {grad.shape} != network output {cache[-1].shape}")
    n_layers = len(params.weights)
    gw, gb = [None] * n_layers, [None] * n_layers
    for i in reversed(range(n_layers)):
        gw[i] = cache[i].T @ grad
        gb[i] = grad.sum(axis=0)
        if i > 0:
            grad = (grad @ params.weights[i].T) * (cache[i] > 0)
    return Gradients(gw, gb)


def adam_init(params: MlpParams, beta1=0.9, beta2=0.999, epsilon_hat=1e-8) -> AdamState:
    zeros = lambda arrays: [np.zeros_like(a) for a in arrays]
    return AdamState(zeros(params.weights), zeros(params.biases), zeros(params.weights),
                     zeros(params.biases), 0, beta1, beta2, epsilon_hat)


def adam_step(params: MlpParams, grads: Gradients, state: AdamState, lr: float) -> None:
    """One bias-corrected Adam update, in place."""
    state.step_count += 1
    t = state.step_count
    b1, b2 = state.beta1, state.beta2
    c1, c2 = 1.0 - b1**t, 1.0 - b2**t
    groups = ((params.weights, grads.weights, state.m_w, state.v_w),
              (params.biases, grads.biases, state.m_b, state.v_b))
    for ps, gs, ms, vs in groups:
        for p, g, m, v in zip(ps, gs, ms, vs):
            if p.shape != g.shape:
                raise ValueError(f"gradient shape {g.shape} != parameter shape {p.shape}")
            m *= b1
            m += (1.0 - b1) * g
            v *= b2
            v += (1.0 - b2) * g * g
            p -= lr * (m / c1) / (np.sqrt(v / c2) + state.epsilon_hat)


def save_params(params: MlpParams, path) -> None:
    """Binary checkpoint: magic, version, JSON header length, JSON header, raw little-endian float64."""
    header = json.dumps({"version": CHECKPOINT_VERSION, "layer_dims": params.layer_dims}).encode()
    with open(path, "wb") as fh:
        fh.write(CHECKPOINT_MAGIC)
        fh.write(struct.pack("<II", CHECKPOINT_VERSION, len(header)))
        fh.write(header)
        for w, b in zip(params.weights, params.biases):
            fh.write(w.astype("<f8").tobytes(order="C"))
            fh.write(b.astype("<f8").tobytes(order="C"))


def load_params(path) -> MlpParams:
    with open(path, "rb") as fh:
        data = fh.read()
    if not data.startswith(CHECKPOINT_MAGIC):
        raise ConfigError(f"{path}: not a Q-network checkpoint")
    off = len(CHECKPOINT_MAGIC)
    version, hlen = struct.unpack_from("<II", data, off)
    if version != CHECKPOINT_VERSION:
        raise ConfigError(f"{path}: unsupported checkpoint version {version}")
    off += 8
    header = json.loads(data[off:off + hlen])
    off += hlen
    dims = header["layer_dims"]
    weights, biases = [], []
    for fan_in, fan_out in zip(dims[:-1], dims[1:]):
        w = np.frombuffer(data, "<f8", fan_in * fan_out, off).reshape(fan_in, fan_out)
        off += w.nbytes
        b = np.frombuffer(data, "<f8", fan_out, off)
        off += b.nbytes
        weights.append(w.astype(np.float64))
        biases.append(b.astype(np.float64))
    if off != len(data):
        raise ConfigError(f"{path}: trailing bytes after parameters")
    return MlpParams(weights, biases)
