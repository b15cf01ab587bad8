import math

import numpy as np
import pytest
from hypothesis import given, strategies as st
from scipy import integrate, stats

from junctionrl.neural import (HIDDEN, LOG_STD_MAX, LOG_STD_MIN, AdamState, CheckpointError, GaussianPolicy, Mlp,
                               MlpSpec, QNetwork, ShapeError, UsageError, adam_step, clamp_log_std, clip_grad_norm,
                               sample_squashed, squashed_log_prob)

OBS = 273


def fd_check(net, loss_fn, grads, rng, probes=100, h=1e-6):
    """Central differences on randomly chosen parameters; returns the worst relative error."""
    params = net.params
    sizes = np.array([p.size for p in params], dtype=float)
    worst = 0.0
    for _ in range(probes):
        k = int(rng.choice(len(params), p=sizes / sizes.sum()))
        idx = np.unravel_index(int(rng.integers(params[k].size)), params[k].shape)
        old = params[k][idx]
        params[k][idx] = old + h
        up = loss_fn()
        params[k][idx] = old - h
        down = loss_fn()
        params[k][idx] = old
        num = (up - down) / (2 * h)
        ana = float(grads[k][idx])
        denom = max(abs(num), abs(ana), 1e-7)
        worst = max(worst, abs(num - ana) / denom)
    return worst


# -- forward -------------------------------------------------------------------


def test_forward_matches_scalar_loops():
    rng = np.random.default_rng(0)
    net = Mlp(MlpSpec(3, 2, (4, 5)), rng)
    x = rng.normal(size=(6, 3))
    got = net.forward(x)
    for r in range(6):
        h = list(x[r])
        for k, (w, b) in enumerate(zip(net.weights, net.biases)):
            h = [sum(h[i] * w[i, j] for i in range(len(h))) + b[j] for j in range(w.shape[1])]
            if k < 2:
                h = [max(0.0, v) for v in h]
        assert np.allclose(got[r], h, atol=1e-12, rtol=0)


def test_hand_set_network():
    net = Mlp(MlpSpec(2, 1, (2,)))
    net.weights[0][...] = [[1.0, -1.0], [2.0, 1.0]]
    net.biases[0][...] = [0.0, -10.0]
    net.weights[1][...] = [[3.0], [5.0]]
    net.biases[1][...] = [1.0]
    # hidden = relu([1 + 4, -1 + 2 - 10]) = [5, 0]
    assert net.forward(np.array([[1.0, 2.0]]))[0, 0] == 16.0


def test_default_layout_and_init_bounds():
    net = Mlp(MlpSpec(OBS, 4, HIDDEN), np.random.default_rng(0))
    assert net.spec.dims == (OBS, 512, 256, 256, 64, 4)
    for w in net.weights:
        assert np.abs(w).max() <= 1 / math.sqrt(w.shape[0])


def test_shape_and_usage_errors():
    net = Mlp(MlpSpec(3, 1, (4,)))
    with pytest.raises(ShapeError):
        net.forward(np.zeros((2, 4)))
    with pytest.raises(UsageError):
        net.backward(np.zeros((2, 1)))
    net.forward(np.zeros((2, 3)), keep=False)
    with pytest.raises(UsageError):
        net.backward(np.zeros((2, 1)))
    net.forward(np.zeros((2, 3)))
    with pytest.raises(ShapeError):
        net.backward(np.zeros((3, 1)))


# -- gradients -----------------------------------------------------------------


@pytest.mark.parametrize("head", ["mean", "log_std"])
def test_policy_head_gradients(head):
    rng = np.random.default_rng(1)
    pol = GaussianPolicy(OBS, 2, rng, out_scale=1.0)
    x = rng.uniform(-1, 1, size=(4, OBS))
    mask = np.zeros((4, 4))
    mask[:, :2] = 1.0 if head == "mean" else 0.0
    mask[:, 2:] = 0.0 if head == "mean" else 1.0
    up = rng.normal(size=(4, 4)) * mask

    def loss():
        return float(np.sum(up * pol.net.forward(x, keep=False)))

    pol.net.forward(x)
    grads, _ = pol.net.backward(up)
    assert fd_check(pol.net, loss, grads, rng) < 1e-4


@pytest.mark.parametrize("which", [0, 1])
def test_critic_gradients(which):
    rng = np.random.default_rng(2 + which)
    q = QNetwork(OBS, 2, rng)
    s = rng.uniform(-1, 1, size=(4, OBS))
    a = rng.uniform(-1, 1, size=(4, 2))
    up = rng.normal(size=4)

    def loss():
        return float(np.dot(up, q(s, a, keep=False)))

    q(s, a)
    grads, _ = q.net.backward(up[:, None])
    assert fd_check(q.net, loss, grads, rng) < 1e-4


def test_input_gradient():
    rng = np.random.default_rng(4)
    net = Mlp(MlpSpec(5, 2, (16, 8)), rng)
    x = rng.normal(size=(3, 5))
    up = rng.normal(size=(3, 2))
    net.forward(x)
    dx = net.input_grad(up)
    h = 1e-6
    for r in range(3):
        for c in range(5):
            xp, xm = x.copy(), x.copy()
            xp[r, c] += h
            xm[r, c] -= h
            num = (np.sum(up * net.forward(xp, keep=False)) - np.sum(up * net.forward(xm, keep=False))) / (2 * h)
            assert dx[r, c] == pytest.approx(num, rel=1e-5, abs=1e-9)


# -- Adam ----------------------------------------------------------------------


def test_adam_first_step_closed_form():
    p = np.array([1.0, -2.0, 0.5])
    g = np.array([0.3, -4.0, 1e-3])
    st_ = AdamState.zeros_like([p])
    expect = p - 1e-3 * g / (np.abs(g) + 1e-8)
    adam_step([p], [g], st_, lr=1e-3)
    assert np.allclose(p, expect, atol=1e-15, rtol=0) and st_.t == 1


def test_adam_zero_gradient_is_noop():
    p = np.array([1.0, 2.0])
    st_ = AdamState.zeros_like([p])
    for _ in range(5):
        adam_step([p], [np.zeros(2)], st_, lr=0.1)
    assert np.array_equal(p, [1.0, 2.0])


def test_adam_descends_quadratic_bowl():
    target = np.array([3.0, -1.0, 0.25])
    p = np.zeros(3)
    st_ = AdamState.zeros_like([p])
    for _ in range(3000):
        adam_step([p], [2 * (p - target)], st_, lr=1e-2)
    assert np.allclose(p, target, atol=1e-3)


def test_adam_per_layer_equals_flat():
    rng = np.random.default_rng(5)
    shapes = [(3, 4), (4,), (4, 2), (2,)]
    ps = [rng.normal(size=s) for s in shapes]
    flat = np.concatenate([p.ravel() for p in ps])
    sa, sb = AdamState.zeros_like(ps), AdamState.zeros_like([flat])
    for _ in range(10):
        gs = [rng.normal(size=s) for s in shapes]
        adam_step(ps, gs, sa, lr=1e-2)
        adam_step([flat], [np.concatenate([g.ravel() for g in gs])], sb, lr=1e-2)
    assert np.array_equal(np.concatenate([p.ravel() for p in ps]), flat)


def test_adam_shape_mismatch():
    p = np.zeros(3)
    with pytest.raises(ShapeError):
        adam_step([p], [np.zeros(2)], AdamState.zeros_like([p]))


def test_clip_grad_norm():
    gs = [np.array([3.0, 0.0]), np.array([4.0])]
    assert clip_grad_norm(gs, 1.0) == pytest.approx(5.0)
    assert math.sqrt(sum(float(g @ g) for g in gs)) == pytest.approx(1.0)
    small = [np.array([0.1])]
    clip_grad_norm(small, 1.0)
    assert small[0][0] == 0.1


# -- squashed Gaussian ---------------------------------------------------------


@given(st.floats(-5, 5), st.floats(LOG_STD_MIN + 17, LOG_STD_MAX), st.floats(-3, 3))
def test_log_prob_change_of_variables(mean, log_std, u):
    got = squashed_log_prob(np.array([u]), np.array([mean]), np.array([log_std]))
    t = math.tanh(u)
    expect = stats.norm.logpdf(u, mean, math.exp(log_std)) - math.log(1 - t * t + 1e-6)
    assert got == pytest.approx(expect, abs=1e-9)


def test_samples_bounded_and_finite_at_extremes():
    rng = np.random.default_rng(6)
    n = 100_000
    for mean, log_std in ((0.0, 0.0), (20.0, LOG_STD_MAX), (-20.0, LOG_STD_MIN), (3.0, 50.0), (0.0, -100.0)):
        smp = sample_squashed(np.full((n, 2), mean), np.full((n, 2), log_std), rng)
        assert np.all(np.abs(smp.action) <= 1.0)
        assert np.all(np.isfinite(smp.log_prob))


def test_entropy_monte_carlo_vs_quadrature():
    mean, log_std = 0.4, -0.3
    sigma = math.exp(log_std)

    def integrand(u):
        logp = stats.norm.logpdf(u, mean, sigma) - math.log(1 - math.tanh(u) ** 2 + 1e-6)
        return -stats.norm.pdf(u, mean, sigma) * logp

    exact, _ = integrate.quad(integrand, mean - 12 * sigma, mean + 12 * sigma, limit=200)
    smp = sample_squashed(np.full((100_000, 1), mean), np.full((100_000, 1), log_std), np.random.default_rng(7))
    assert -smp.log_prob.mean() == pytest.approx(exact, rel=0.02)


def test_clamp_and_deterministic_sample():
    assert np.array_equal(clamp_log_std(np.array([-30.0, 0.0, 9.0])), [LOG_STD_MIN, 0.0, LOG_STD_MAX])
    smp = sample_squashed(np.array([[0.3, -0.2]]), np.array([[0.0, 0.0]]), deterministic=True)
    assert np.array_equal(smp.action, np.tanh([[0.3, -0.2]]))


def test_policy_act_shapes():
    pol = GaussianPolicy(8, 2, np.random.default_rng(8), hidden=(16, 16))
    obs = np.random.default_rng(9).uniform(-1, 1, size=8)
    det = pol.act(obs, deterministic=True)
    mean, _, _ = pol.heads(obs[None])
    assert det.shape == (1, 2) and np.array_equal(det, np.tanh(mean))
    assert pol.act(np.zeros((5, 8)), np.random.default_rng(0)).shape == (5, 2)


# -- serialization -------------------------------------------------------------


def test_checkpoint_round_trip_is_bit_exact(tmp_path):
    net = Mlp(MlpSpec(OBS, 4, HIDDEN), np.random.default_rng(10))
    path = tmp_path / "policy.bin"
    net.save(path)
    back = Mlp.load(path, spec=net.spec)
    assert all(np.array_equal(a, b) for a, b in zip(net.params, back.params))
    x = np.random.default_rng(11).uniform(-1, 1, size=(3, OBS))
    assert np.array_equal(net.forward(x), back.forward(x))
    assert back.to_bytes() == path.read_bytes()


def test_checkpoint_rejects_bad_files():
    net = Mlp(MlpSpec(3, 1, (4,)))
    data = net.to_bytes()
    with pytest.raises(CheckpointError):
        Mlp.from_bytes(b"XXXXXXXX" + data[8:])
    with pytest.raises(CheckpointError):
        Mlp.from_bytes(data[:-8])
    with pytest.raises(CheckpointError):
        Mlp.from_bytes(data + b"\0")
    with pytest.raises(CheckpointError):
        Mlp.from_bytes(data, spec=MlpSpec(3, 1, (5,)))


def test_flat_round_trip_and_copy_independence():
    net = Mlp(MlpSpec(3, 2, (4,)), np.random.default_rng(12))
    v = net.flat()
    twin = net.copy()
    twin.set_flat(v * 2)
    assert np.array_equal(net.flat(), v) and np.array_equal(twin.flat(), 2 * v)
    with pytest.raises(ShapeError):
        net.set_flat(np.zeros(v.size + 1))
