import numpy as np
import pytest

from adamemento import nn
from adamemento.env import Action, make_env, reset, step
from adamemento.memory import MBuffer, RBuffer, finalize_trajectory
from adamemento.memrefl import (confidence, confidences, make_prediction_net, make_reflection_net,
                                predict_action, reflection_inputs, train_prediction, train_reflection)

DIM, NA = 5, 4


def obs(i):
    return np.eye(DIM)[i]


def mbuf_of(*trajs):
    buf = MBuffer(10)
    for steps in trajs:
        buf.offer(finalize_trajectory(steps, "goal"))
    return buf


def test_overfit_one_sample():
    net = make_prediction_net(DIM, NA, 0, hidden=(16, 16))
    buf = mbuf_of([(obs(2), 3, 1.0)])
    train_prediction(net, buf, 2000, 1e-3, 0)
    a, dist = predict_action(net, obs(2))
    assert a == 3 and abs(dist.sum() - 1) <= 1e-12 and dist.min() >= 0
    assert net.train_steps == 2000


def test_zero_updates_and_empty_buffers():
    net = make_prediction_net(DIM, NA, 0)
    before = net.params.copy()
    train_prediction(net, mbuf_of([(obs(0), 1, 0.0)]), 0, 1e-3, 0)
    assert net.params.equals(before)
    assert train_prediction(net, MBuffer(2), 10, 1e-3, 0) is None
    refl = make_reflection_net(DIM, NA, 0)
    before = refl.params.copy()
    assert train_reflection(refl, MBuffer(2), RBuffer(2), 10, 1e-3, 0) is None
    train_reflection(refl, mbuf_of([(obs(0), 1, 0.0)]), RBuffer(2), 0, 1e-3, 0)
    assert refl.params.equals(before)


def test_conflicting_demonstrations_split_evenly():
    # cross-entropy minimizer is the empirical action frequency (1/2, 1/2)
    net = make_prediction_net(DIM, NA, 1, hidden=(16, 16))
    buf = mbuf_of([(obs(1), 0, 1.0)], [(obs(1), 2, 1.0)])
    train_prediction(net, buf, 5000, 1e-3, 1)
    _, dist = predict_action(net, obs(1))
    assert dist[0] == pytest.approx(0.5, abs=0.1) and dist[2] == pytest.approx(0.5, abs=0.1)


def test_predict_tie_rule():
    net = make_prediction_net(DIM, NA, 0)
    net.params = net.params.zeros_like()
    a, dist = predict_action(net, np.zeros(DIM))
    assert a == 0 and np.allclose(dist, 0.25)


def test_reflection_toy_buffer_separates():
    buf = mbuf_of([(obs(0), 1, 1.0), (obs(1), 2, 1.0), (obs(2), 0, 1.0)])
    rbuf = RBuffer(10)
    rbuf.push([(obs(3), 1), (obs(0), 3)])
    net = make_reflection_net(DIM, NA, 2, hidden=(16, 16))
    train_reflection(net, buf, rbuf, 3000, 1e-3, 2, batch_r=8)
    assert confidences(net, np.stack([obs(0), obs(1), obs(2)]), [1, 2, 0]).min() > 0.85
    assert confidence(net, obs(3), 1) < 0.15 and confidence(net, obs(0), 3) < 0.15


def test_reflection_only_m_pairs():
    net = make_reflection_net(DIM, NA, 3, hidden=(16, 16))
    train_reflection(net, mbuf_of([(obs(4), 2, 0.0)]), RBuffer(4), 1000, 1e-3, 3)
    assert confidence(net, obs(4), 2) > 0.9


def test_reflection_conflict_goes_to_half():
    # one positive and one negative copy per step: the squared-loss minimizer is 0.5
    rbuf = RBuffer(4)
    rbuf.push([(obs(1), 1)])
    net = make_reflection_net(DIM, NA, 4, hidden=(16, 16))
    train_reflection(net, mbuf_of([(obs(1), 1, 0.0)]), rbuf, 3000, 1e-3, 4, batch_r=1)
    assert confidence(net, obs(1), 1) == pytest.approx(0.5, abs=0.1)


def test_confidence_range_and_purity():
    net = make_reflection_net(DIM, NA, 5)
    rng = np.random.default_rng(0)
    x = rng.normal(0, 3, (1000, DIM))
    a = rng.integers(NA, size=1000)
    c = confidences(net, x, a)
    assert np.all((c > 0) & (c < 1))
    assert np.array_equal(c, confidences(net, x, a))


def _full_batch(buf, rbuf):
    m_obs, m_act = buf.pairs()
    x = [reflection_inputs(m_obs, m_act, NA)]
    y = [np.ones(len(m_act))]
    if len(rbuf):
        x.append(reflection_inputs(np.stack([o for o, _ in rbuf.entries]), [a for _, a in rbuf.entries], NA))
        y.append(np.zeros(len(rbuf)))
    return np.concatenate(x), np.concatenate(y)[:, None]


def test_reflection_loss_monotone_full_batch():
    buf = mbuf_of([(obs(0), 1, 1.0), (obs(1), 2, 1.0)])
    rbuf = RBuffer(8)
    rbuf.push([(obs(2), 0), (obs(0), 2), (obs(3), 3)])
    x, y = _full_batch(buf, rbuf)
    p = make_reflection_net(DIM, NA, 6).params
    prev = np.inf
    for _ in range(200):
        loss, g = nn.loss_and_grad(p, (x, y), "binary_target_mse")
        assert loss <= prev + 1e-9
        prev = loss
        p = p.with_arrays(a - 0.01 * d for a, d in zip(p.arrays(), g.arrays()))


def test_empty_r_buffer_raises_m_confidence():
    buf = mbuf_of([(obs(0), 1, 1.0), (obs(2), 3, 1.0)])
    x, y = _full_batch(buf, RBuffer(1))
    p = make_reflection_net(DIM, NA, 7).params
    prev = -np.inf
    for _ in range(100):
        mean_c = nn.forward(p, x)[0].mean()
        assert mean_c > prev
        prev = mean_c
        _, g = nn.loss_and_grad(p, (x, y), "binary_target_mse")
        p = p.with_arrays(a - 0.01 * d for a, d in zip(p.arrays(), g.arrays()))


def test_demonstrated_cliff_path_replays():
    spec = make_env("cliff_walking")
    plan = [Action.UP] + [Action.RIGHT] * 11 + [Action.DOWN]
    state, o = reset(spec)
    steps = []
    for a in plan:
        nxt, o2, r, *_ = step(state, spec, a)
        steps.append((o, int(a), r))
        state, o = nxt, o2
    assert state.position == spec.goal
    net = make_prediction_net(spec.n_cells, NA, 0)
    train_prediction(net, mbuf_of(steps), 500, 1e-3, 0)
    state, o = reset(spec)
    taken = []
    while not state.done:
        a, _ = predict_action(net, o)
        taken.append(a)
        state, o, *_ = step(state, spec, a)
    assert taken == [int(a) for a in plan] and state.position == spec.goal
