import numpy as np
import pytest
from hypothesis import given, strategies as st

from adamemento import oracle
from adamemento.agent.policy import (SOURCE_MEMORY, EnsembleConfig, ensemble_action, make_policy,
                                     policy_forward, select_actions)
from adamemento.agent.ppo import (PPOConfig, RewardConfig, compute_gae, gae, normalize_advantages,
                                  ppo_loss_and_grads, ppo_update)
from adamemento.agent.qlearning import greedy_path, q_learning_step, train_q_learning
from adamemento.agent.rollout import (EpisodeTracker, Rollout, RolloutContext, _store_episode,
                                      collect_rollout)
from adamemento.agent.trainer import build_learner, train
from adamemento.config import parse_config
from adamemento.env import Action, VecGridEnv, encode_indices, make_env, reset, step
from adamemento.memory import MBuffer, RBuffer, finalize_trajectory
from adamemento.memrefl import (make_prediction_net, make_reflection_net, predict_actions, confidences,
                                train_prediction, train_reflection)

CLIFF_PLAN = [Action.UP] + [Action.RIGHT] * 11 + [Action.DOWN]


def synthetic_rollout(rng, T=6, n=3, dones=None):
    shape = (T, n)
    z = np.zeros(shape, dtype=np.int64)
    return Rollout(z, z, z, z, rng.normal(size=shape), rng.normal(size=shape), rng.normal(size=shape),
                   (rng.random(shape) < 0.3).astype(float) if dones is None else dones,
                   np.zeros(shape), rng.normal(size=shape), rng.normal(size=shape),
                   rng.normal(size=n), rng.normal(size=n), 4)


def test_gae_zero_and_td_base_case():
    z = np.zeros((5, 2))
    assert np.all(gae(z, z, np.zeros(2), z, 0.99, 0.95) == 0)
    a = gae(np.array([[1.5]]), np.array([[0.2]]), np.array([0.7]), np.zeros((1, 1)), 0.9, 0.95)
    assert a[0, 0] == pytest.approx(1.5 + 0.9 * 0.7 - 0.2, abs=1e-12)


def test_dual_stream_invariance():
    rng = np.random.default_rng(0)
    r1 = synthetic_rollout(rng)
    r2 = synthetic_rollout(np.random.default_rng(0))
    r2.dones = 1.0 - r1.dones
    cfg = RewardConfig()
    a1, e1, i1 = compute_gae(r1, cfg)
    a2, e2, i2 = compute_gae(r2, cfg)
    np.testing.assert_array_equal(i1, i2)
    assert not np.allclose(e1, e2)
    a_ext = (e1 - r1.v_ext)
    np.testing.assert_allclose(a1, cfg.ext_coef * a_ext + cfg.int_coef * (i1 - r1.v_int), atol=1e-12)
    a_off, _, i_off = compute_gae(r1, cfg, use_intrinsic=False)
    assert np.all(i_off == 0) and np.allclose(a_off, cfg.ext_coef * a_ext)


@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=200))
def test_advantage_normalization(values):
    adv = np.array(values)
    out = normalize_advantages(adv)
    if adv.std() > 1e-8:
        assert abs(out.mean()) < 1e-9 and abs(out.std() - 1) < 1e-6


def _batch(policy, rng, n=32):
    obs = encode_indices(policy.obs_dim, rng.integers(policy.obs_dim, size=n))
    out = policy_forward(policy, obs)
    actions = rng.integers(policy.n_actions, size=n)
    logp = np.log(out.probs[np.arange(n), actions])
    return obs, actions, logp


def test_zero_advantage_surrogate_has_no_policy_gradient():
    pol = make_policy(6, 4, 0, hidden=8)
    rng = np.random.default_rng(1)
    obs, act, logp = _batch(pol, rng)
    hp = PPOConfig(entropy_coef=0.0)
    stats, grads = ppo_loss_and_grads(pol, obs, act, logp, np.zeros(32), np.zeros(32), np.zeros(32), hp)
    pi_grads = grads.layers[len(pol.trunk.layers)]
    assert stats["policy_loss"] == 0
    assert np.all(pi_grads.weight == 0) and np.all(pi_grads.bias == 0)
    _, g_ent = ppo_loss_and_grads(pol, obs, act, logp, np.zeros(32), np.zeros(32), np.zeros(32), PPOConfig())
    assert np.abs(g_ent.layers[len(pol.trunk.layers)].weight).max() > 0


def test_clip_fraction_one_when_ratio_outside():
    pol = make_policy(6, 4, 0, hidden=8)
    obs, act, logp = _batch(pol, np.random.default_rng(2))
    stats, _ = ppo_loss_and_grads(pol, obs, act, logp + 0.5, np.ones(32), np.zeros(32), np.zeros(32), PPOConfig())
    assert stats["clip_frac"] == 1.0
    stats, _ = ppo_loss_and_grads(pol, obs, act, logp, np.ones(32), np.zeros(32), np.zeros(32), PPOConfig())
    assert stats["clip_frac"] == 0.0


def test_ppo_gradients_finite_difference():
    pol = make_policy(5, 3, 3, hidden=6)
    # push the policy head away from uniform so all terms matter
    pol.pi.layers[0].weight *= 100
    rng = np.random.default_rng(3)
    obs, act, logp = _batch(pol, rng, 16)
    args = (obs, act, logp + rng.normal(0, 0.02, 16), rng.normal(size=16), rng.normal(size=16),
            rng.normal(size=16), PPOConfig(entropy_coef=0.01))
    _, grads = ppo_loss_and_grads(pol, *args)
    flat = pol.flat()
    arrays, g = flat.arrays(), grads.arrays()
    for _ in range(60):
        k = int(rng.integers(len(arrays)))
        idx = tuple(int(rng.integers(d)) for d in arrays[k].shape)
        vals = []
        for sign in (1, -1):
            bumped = [a.copy() for a in arrays]
            bumped[k][idx] += sign * 1e-6
            pol.set_flat(flat.with_arrays(bumped))
            vals.append(ppo_loss_and_grads(pol, *args)[0]["loss"])
        pol.set_flat(flat)
        num = (vals[0] - vals[1]) / 2e-6
        assert abs(num - g[k][idx]) <= 1e-4 * max(abs(num), abs(g[k][idx]), 1e-4)


def test_bandit_convergence():
    pol = make_policy(1, 2, 0, hidden=16, use_int_head=False)
    rng = np.random.default_rng(0)
    hp = PPOConfig(lr=1e-3)
    obs = np.ones((64, 1))
    for u in range(200):
        out = policy_forward(pol, obs)
        a = (rng.random(64) >= out.probs[:, 0]).astype(np.int64)
        r = (a == 0).astype(float)
        logp = np.log(out.probs[np.arange(64), a])
        ppo_update(pol, obs, a, logp, r - out.v_ext, r, np.zeros(64), hp, rng, u)
        if policy_forward(pol, obs[:1]).probs[0, 0] > 0.95:
            break
    assert policy_forward(pol, obs[:1]).probs[0, 0] > 0.95


def _trained_memory(spec, seed=0):
    state, o = reset(spec)
    raw = []
    for a in CLIFF_PLAN:
        nxt, o2, r, *_ = step(state, spec, a)
        raw.append((o, int(a), r))
        state, o = nxt, o2
    buf = MBuffer(10)
    buf.offer(finalize_trajectory(raw, "goal"))
    pred = make_prediction_net(spec.n_cells, 4, seed)
    refl = make_reflection_net(spec.n_cells, 4, seed)
    train_prediction(pred, buf, 500, 1e-3, seed)
    rbuf = RBuffer(64)
    # off-path actions at the demonstrated cells are labelled failures
    obs = np.stack([s[0] for s in raw])
    rbuf.push((o_, (a_ + 1) % 4) for o_, (_, a_, _) in zip(obs, raw))
    train_reflection(refl, buf, rbuf, 1500, 1e-3, seed, batch_r=13)
    return pred, refl


@pytest.fixture(scope="module")
def cliff_memory():
    spec = make_env("cliff_walking")
    return spec, *_trained_memory(spec)


def test_gate_extremes(cliff_memory):
    spec, pred, refl = cliff_memory
    pol = make_policy(spec.n_cells, 4, 0)
    obs = encode_indices(spec.n_cells, np.arange(spec.n_cells))
    rng = np.random.default_rng(0)
    mask = np.ones(spec.n_cells, dtype=bool)
    _, src, _, _ = select_actions(pol, obs, rng, pred, refl, EnsembleConfig(kappa=1.01), mask)
    assert not src.any()
    a, src, _, _ = select_actions(pol, obs, rng, pred, refl, EnsembleConfig(kappa=0.0), mask)
    assert np.all(src == SOURCE_MEMORY) and np.array_equal(a, predict_actions(pred, obs)[0])
    _, src, _, _ = select_actions(pol, obs, rng, pred, refl, EnsembleConfig(kappa=0.0), ~mask)
    assert not src.any()
    assert ensemble_action(pol, pred, refl, obs[0], EnsembleConfig(kappa=0.0), False, rng)[1] == "base"


def test_memory_gate_replays_demonstration(cliff_memory):
    spec, pred, refl = cliff_memory
    pol = make_policy(spec.n_cells, 4, 1)
    rng = np.random.default_rng(0)
    state, o = reset(spec)
    taken = []
    while not state.done and len(taken) < 20:
        a, src = ensemble_action(pol, pred, refl, o, EnsembleConfig(kappa=0.85), True, rng)
        assert src == "memory"
        taken.append(a)
        state, o, *_ = step(state, spec, a)
    assert taken == [int(a) for a in CLIFF_PLAN]


def test_gate_matches_tabular_switch(cliff_memory):
    spec, pred, refl = cliff_memory
    pol = make_policy(spec.n_cells, 4, 2)
    obs = encode_indices(spec.n_cells, np.arange(spec.n_cells))
    pi = policy_forward(pol, obs).probs
    a_hat, _ = predict_actions(pred, obs)
    conf = np.stack([confidences(refl, obs, np.full(spec.n_cells, a)) for a in range(4)], axis=1)
    table = oracle.ensemble_policy(pi, conf, a_hat, 0.85)
    act, src, _, _ = select_actions(pol, obs, np.random.default_rng(0), pred, refl, EnsembleConfig(kappa=0.85),
                                    np.ones(spec.n_cells, dtype=bool))
    fired = src == SOURCE_MEMORY
    assert fired.sum() >= 10
    assert np.array_equal(table[fired].argmax(axis=1), act[fired])
    assert np.all(table[fired].max(axis=1) == 1.0)
    np.testing.assert_array_equal(table[~fired], pi[~fired])


def _ctx(window=10):
    return RolloutContext(rng=np.random.default_rng(0), tracker=EpisodeTracker(1),
                          ensemble=EnsembleConfig(failure_window=window), mbuf=MBuffer(4), rbuf=RBuffer(50))


def test_death_pushes_memory_pairs_in_window():
    ctx = _ctx()
    # 15 steps; memory actions at 2 (outside the window) and at 7, 9, 13
    steps = [(i, i % 4, -1.0, int(i in (2, 7, 9, 13))) for i in range(15)]
    _store_episode(ctx, steps, "death", 48, 10)
    assert [a for _, a in ctx.rbuf.entries] == [3, 1, 1]
    assert len(ctx.mbuf) == 0
    ctx2 = _ctx()
    _store_episode(ctx2, [(i, 0, -1.0, 0) for i in range(15)], "death", 48, 10)
    assert len(ctx2.rbuf) == 0


def test_truncation_reflection_is_opt_in():
    steps = [(i, 0, -1.0, 1) for i in range(5)]
    ctx = _ctx()
    _store_episode(ctx, steps, "truncated", 48, 10)
    assert len(ctx.rbuf) == 0 and len(ctx.mbuf) == 1
    ctx = _ctx()
    ctx.reflect_on_truncation = True
    _store_episode(ctx, steps, "truncated", 48, 10)
    assert len(ctx.rbuf) == 5


def test_dark_chamber_rollout_all_base():
    spec = make_env("dark_chamber", {"width": 10, "height": 10})
    pol = make_policy(spec.n_cells, 4, 0)
    ctx = RolloutContext(rng=np.random.default_rng(0), tracker=EpisodeTracker(2))
    ro = collect_rollout(VecGridEnv(spec, 2), pol, None, None, None, 50, ctx)
    assert np.all(ro.ext_rewards == 0) and np.all(ro.sources == 0)


def test_q_learning_step_rules():
    q = np.arange(8.0).reshape(4, 2)
    assert np.array_equal(q_learning_step(q, (0, 1, 5.0, 2, False), 0.0, 0.9), q)
    z = np.zeros((2, 2))
    for _ in range(200):
        z = q_learning_step(z, (0, 0, 2.0, 1, True), 0.5, 0.9)
    assert z[0, 0] == pytest.approx(2.0)


def test_q_learning_solves_cliff():
    spec = make_env("cliff_walking", {"max_steps": 200})
    run = train_q_learning(spec, 500, alpha=0.5, gamma=0.99, epsilon=0.1, seed=0)
    path, reached = greedy_path(spec, run.q)
    assert reached and len(path) - 1 <= 17


def _small(**extra):
    ov = ["NumEnv=4", "OriPolicyEnvNum=2", "NumStep=16", "total_updates=6", "ExploitUpdate=2",
          "exploit_steps=5"] + [f"{k}={v}" for k, v in extra.items()]
    return parse_config(None, ov)


def test_train_is_deterministic_and_well_formed():
    a, b = train(_small()), train(_small())
    assert a.to_csv() == b.to_csv() and a.episodes_csv() == b.episodes_csv()
    for row in a.rows:
        assert 0 <= row["memory_action_frac"] <= 1


def test_memory_fraction_zero_when_gate_closed():
    log = train(_small(Confidence=1.0, total_updates=8))
    learner = log.learner
    learner.ctx.ensemble.kappa = 1.01
    assert all(r["memory_action_frac"] == 0 for r in train(learner.cfg, learner=learner).rows)


def test_ablated_learner_has_no_extras():
    learner = build_learner(_small(disable_memory="true", disable_curiosity="true"))
    assert learner.pred is None and learner.curiosity is None and not learner.policy.use_int_head
    row = train(_small(disable_memory="true", disable_curiosity="true", total_updates=1)).rows[0]
    assert row["mean_int_reward"] == 0 and row["memory_action_frac"] == 0
