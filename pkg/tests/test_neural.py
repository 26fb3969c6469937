import numpy as np
import pytest

from oran_slicing import ConfigError
from oran_slicing.neural import (MlpParams, adam_init, adam_step, backward, forward, init_mlp,
                                 load_params, mse_loss_and_grad, save_params)


def straight_line_forward(params, x):
    h = np.asarray(x, float)
    n = len(params.weights)
    for i in range(n):
        w, b = params.weights[i], params.biases[i]
        z = np.array([sum(h[j] * w[j, k] for j in range(w.shape[0])) + b[k]
                      for k in range(w.shape[1])])
        h = z if i == n - 1 else np.where(z > 0, z, 0.0)
    return h


def loss_of(params, x, actions, targets):
    q, _ = forward(params, x)
    return mse_loss_and_grad(q, actions, targets)[0]


def finite_difference_grads(params, x, actions, targets, h=1e-5):
    out = []
    for group in (params.weights, params.biases):
        grads = []
        for arr in group:
            g = np.zeros_like(arr)
            for idx in np.ndindex(arr.shape):
                orig = arr[idx]
                arr[idx] = orig + h
                up = loss_of(params, x, actions, targets)
                arr[idx] = orig - h
                down = loss_of(params, x, actions, targets)
                arr[idx] = orig
                g[idx] = (up - down) / (2 * h)
            grads.append(g)
        out.append(grads)
    return out


def max_rel_error(analytic, numeric):
    err = 0.0
    for a, n in zip(analytic, numeric):
        denom = np.maximum(np.abs(a) + np.abs(n), 1e-7)
        err = max(err, float(np.max(np.abs(a - n) / denom)))
    return err


def gradient_check(rng, dims, batch):
    params = init_mlp(dims, rng)
    for b in params.biases:
        b[:] = rng.normal(0, 0.1, size=b.shape)
    x = rng.normal(size=(batch, dims[0]))
    actions = rng.integers(dims[-1], size=batch)
    targets = rng.normal(size=batch)
    q, cache = forward(params, x)
    _, grad = mse_loss_and_grad(q, actions, targets)
    g = backward(params, cache, grad)
    fw, fb = finite_difference_grads(params, x, actions, targets)
    return max(max_rel_error(g.weights, fw), max_rel_error(g.biases, fb))


def test_init_bounds_and_determinism():
    p = init_mlp([6, 5, 3], np.random.default_rng(0))
    assert all(np.all(b == 0) for b in p.biases)
    assert np.all(np.abs(p.weights[0]) <= 1.0)
    q = init_mlp([6, 5, 3], np.random.default_rng(0))
    assert all(np.array_equal(a, b) for a, b in zip(p.weights, q.weights))
    default = init_mlp([8, 256, 256, 27], np.random.default_rng(1))
    assert default.layer_dims == [8, 256, 256, 27]


@pytest.mark.parametrize("dims", [[3], [], [3, 0, 2]])
def test_bad_dims(dims):
    with pytest.raises(ConfigError):
        init_mlp(dims, np.random.default_rng(0))


def test_forward_zero_and_identity():
    zero = MlpParams([np.zeros((4, 3)), np.zeros((3, 2))], [np.zeros(3), np.zeros(2)])
    q, _ = forward(zero, np.ones(4))
    np.testing.assert_array_equal(q, np.zeros(2))
    ident = MlpParams([np.eye(3)], [np.zeros(3)])
    x = np.array([-1.0, 2.0, 0.5])
    np.testing.assert_array_equal(forward(ident, x)[0], x)
    with pytest.raises(ValueError):
        forward(ident, np.ones(4))


def test_forward_matches_straight_line():
    rng = np.random.default_rng(3)
    params = init_mlp([5, 7, 6, 4], rng)
    for b in params.biases:
        b[:] = rng.normal(size=b.shape)
    for _ in range(10):
        x = rng.normal(size=5)
        np.testing.assert_allclose(forward(params, x)[0], straight_line_forward(params, x),
                                   rtol=0, atol=1e-12)


def test_forward_is_pure():
    params = init_mlp([3, 4, 2], np.random.default_rng(0))
    before = params.copy()
    forward(params, np.ones((5, 3)))
    assert all(np.array_equal(a, b) for a, b in zip(before.weights, params.weights))


def test_mse_examples():
    q = np.array([[1.0, 2.0], [3.0, 4.0]])
    loss, grad = mse_loss_and_grad(q, [1, 0], [2.0, 3.0])
    assert loss == 0.0 and not grad.any()
    loss, grad = mse_loss_and_grad(np.array([[0.0, 2.0]]), [1], [0.0])
    assert loss == 4.0
    np.testing.assert_array_equal(grad, [[0.0, 4.0]])
    with pytest.raises(IndexError):
        mse_loss_and_grad(q, [2, 0], [0.0, 0.0])
    with pytest.raises(ValueError):
        mse_loss_and_grad(q, [0], [0.0])


def test_mse_gradient_vs_finite_differences():
    rng = np.random.default_rng(5)
    q = rng.normal(size=(6, 4))
    actions = rng.integers(4, size=6)
    targets = rng.normal(size=6)
    _, grad = mse_loss_and_grad(q, actions, targets)
    h = 1e-5
    num = np.zeros_like(q)
    for idx in np.ndindex(q.shape):
        up, down = q.copy(), q.copy()
        up[idx] += h
        down[idx] -= h
        num[idx] = (mse_loss_and_grad(up, actions, targets)[0]
                    - mse_loss_and_grad(down, actions, targets)[0]) / (2 * h)
    assert max_rel_error([grad], [num]) < 1e-4


def test_backprop_on_4_2_3_net():
    assert gradient_check(np.random.default_rng(11), [4, 2, 3], batch=5) < 1e-4


def test_backward_shape_mismatch():
    params = init_mlp([3, 4, 2], np.random.default_rng(0))
    _, cache = forward(params, np.ones((2, 3)))
    with pytest.raises(ValueError):
        backward(params, cache, np.ones((2, 3)))


def test_adam_zero_grad_is_noop():
    params = init_mlp([3, 4, 2], np.random.default_rng(0))
    before = params.copy()
    state = adam_init(params)
    zeros = backward(params, forward(params, np.ones((1, 3)))[1], np.zeros((1, 2)))
    adam_step(params, zeros, state, 0.01)
    assert state.step_count == 1
    assert all(np.array_equal(a, b) for a, b in zip(before.weights, params.weights))
    assert all(not m.any() for m in state.m_w + state.v_w + state.m_b + state.v_b)


def test_adam_first_step_is_minus_lr():
    # t=1: m_hat = g, v_hat = g^2, update = -lr * g / (|g| + eps) ~ -lr for g = 1
    params = MlpParams([np.array([[0.0]])], [np.array([0.0])])
    state = adam_init(params)
    grads = backward(params, forward(params, np.array([[1.0]]))[1], np.array([[1.0]]))
    assert grads.weights[0][0, 0] == 1.0
    adam_step(params, grads, state, 0.05)
    assert params.weights[0][0, 0] == pytest.approx(-0.05, rel=1e-7)
    assert params.biases[0][0] == pytest.approx(-0.05, rel=1e-7)


def test_adam_fits_linear_target():
    rng = np.random.default_rng(2)
    true_w = rng.normal(size=(3, 2))
    x = rng.normal(size=(64, 3))
    y = x @ true_w + 0.5
    params = init_mlp([3, 2], rng)
    state = adam_init(params)
    for _ in range(5000):
        q, cache = forward(params, x)
        grad = 2 * (q - y) / y.size
        adam_step(params, backward(params, cache, grad), state, 0.01)
    q, _ = forward(params, x)
    assert np.mean((q - y) ** 2) < 1e-6


def test_checkpoint_roundtrip_bitwise(tmp_path):
    params = init_mlp([7, 16, 16, 9], np.random.default_rng(4))
    path = tmp_path / "q.ckpt"
    save_params(params, path)
    loaded = load_params(path)
    assert loaded.layer_dims == params.layer_dims
    for a, b in zip(params.weights + params.biases, loaded.weights + loaded.biases):
        assert a.tobytes() == b.tobytes()
    data = path.read_bytes()
    save_params(loaded, tmp_path / "again.ckpt")
    assert (tmp_path / "again.ckpt").read_bytes() == data


def test_checkpoint_rejects_garbage(tmp_path):
    path = tmp_path / "bad.ckpt"
    path.write_bytes(b"not a checkpoint")
    with pytest.raises(ConfigError):
        load_params(path)
