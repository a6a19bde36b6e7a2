import numpy as np
from hypothesis import given, strategies as st

from adamemento import kernels
from adamemento.env import make_env


def random_mdp_arrays(rng, n_s, n_a):
    P = rng.random((n_s, n_a, n_s)) + 1e-3
    P /= P.sum(axis=2, keepdims=True)
    return P, rng.random((n_s, n_a))


@given(st.integers(0, 10_000), st.integers(2, 8), st.integers(2, 4), st.floats(0.5, 0.95))
def test_value_iteration_backends_agree(seed, n_s, n_a, gamma):
    rng = np.random.default_rng(seed)
    P, R = random_mdp_arrays(rng, n_s, n_a)
    q0 = np.zeros_like(R)
    a = kernels.value_iteration_loop(P, R, gamma, q0, 1e-12, 10_000)
    b = kernels.value_iteration_numpy(P, R, gamma, q0, 1e-12, 10_000)
    assert a[1] == b[1]
    np.testing.assert_allclose(a[0], b[0], rtol=0, atol=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 12), st.integers(1, 5))
def test_gae_backends_agree(seed, T, N):
    rng = np.random.default_rng(seed)
    r, v = rng.normal(size=(T, N)), rng.normal(size=(T, N))
    last = rng.normal(size=N)
    d = (rng.random((T, N)) < 0.3).astype(float)
    a = kernels.gae_loop(r, v, last, d, 0.99, 0.95)
    b = kernels.gae_numpy(r, v, last, d, 0.99, 0.95)
    np.testing.assert_allclose(a, b, rtol=0, atol=1e-12)


@given(st.integers(0, 10_000), st.integers(1, 30))
def test_grid_step_backends_agree(seed, n):
    rng = np.random.default_rng(seed)
    spec = make_env("four_rooms", {"max_steps": 5})
    blocked, cliff, goal = spec.masks()
    free = np.argwhere(~blocked)
    pick = free[rng.integers(len(free), size=n)]
    rows, cols = pick[:, 0].copy(), pick[:, 1].copy()
    actions = rng.integers(4, size=n)
    steps = rng.integers(0, 5, size=n)
    args = (rows, cols, actions, steps, blocked, cliff, goal, 5, -1.0, 1.0, -100.0)
    for x, y in zip(kernels.grid_step_loop(*args), kernels.grid_step_numpy(*args)):
        assert np.array_equal(x, y)


@given(st.lists(st.floats(0, 100), min_size=1, max_size=200), st.integers(0, 50))
def test_welford_backends_agree(values, warmup):
    x = np.array(values)
    a = kernels.welford_loop(x, 3.0, 1.5, 2.0, float(warmup), 1e-8)
    b = kernels.welford_numpy(x, 3.0, 1.5, 2.0, float(warmup), 1e-8)
    assert a[1] == b[1]
    np.testing.assert_allclose(a[2:], b[2:], rtol=1e-9, atol=1e-7)
    np.testing.assert_allclose(a[0], b[0], rtol=1e-6, atol=1e-6)


def test_gae_hand_unrolled():
    # 4 steps, one env, done after step 2 (index 1)
    r = np.array([[1.0], [0.0], [2.0], [-1.0]])
    v = np.array([[0.5], [0.2], [0.1], [0.3]])
    d = np.array([[0.0], [1.0], [0.0], [0.0]])
    last = np.array([0.4])
    g, lam = 0.9, 0.8
    d3 = -1.0 + g * 0.4 - 0.3
    d2 = 2.0 + g * 0.3 - 0.1
    d1 = 0.0 - 0.2                      # episode ends: no bootstrap
    d0 = 1.0 + g * 0.2 - 0.5
    a3 = d3
    a2 = d2 + g * lam * a3
    a1 = d1
    a0 = d0 + g * lam * a1
    expected = np.array([[a0], [a1], [a2], [a3]])
    for fn in (kernels.gae_loop, kernels.gae_numpy):
        np.testing.assert_allclose(fn(r, v, last, d, g, lam), expected, rtol=0, atol=1e-12)
