import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teamoc import core
from teamoc.core import DecPomdpModel, ModelEnv, ModelError, OptionPool

from models import chain_model, random_factored_model, random_model, tiny_switch_model


def test_random_models_validate():
    rng = np.random.default_rng(0)
    for shared in (1, 2):
        m = random_model(rng, shared=shared, obs="random", agent_observations=(2, 3))
        assert core.validate_model(m) == []
        assert m.num_states == shared * 4


def test_bad_transition_row_is_named():
    rng = np.random.default_rng(1)
    m = random_model(rng)
    P = np.array(m.P)
    P[2, 1, 0] += 0.25
    bad = DecPomdpModel.from_dense(m.agent_states, m.agent_actions, m.agent_observations, P,
                                   m.obs_matrix, m.discount, m.initial, np.array(m.R))
    problems = core.validate_model(bad)
    assert any("transition row (s=2, a=1)" in p for p in problems)


def test_reward_bound_violation_reported():
    rng = np.random.default_rng(2)
    m = random_model(rng)
    big = DecPomdpModel.from_dense(m.agent_states, m.agent_actions, m.agent_observations, m.P,
                                   m.obs_matrix, m.discount, m.initial, 5 * np.array(m.R), reward_bound=1.0)
    assert any("exceeds declared bound" in p for p in core.validate_model(big))


def test_constructor_rejects_bad_inputs():
    rng = np.random.default_rng(3)
    m = random_model(rng)
    with pytest.raises(ModelError):
        DecPomdpModel.from_dense(m.agent_states, m.agent_actions, m.agent_observations, m.P,
                                 m.obs_matrix, 1.0, m.initial, np.array(m.R))
    with pytest.raises(ModelError):
        DecPomdpModel.from_dense(m.agent_states, m.agent_actions, m.agent_observations, m.P,
                                 m.obs_matrix, 0.9, m.initial, np.array(m.R), broadcast_penalty=0.1)


def test_factored_product_matches_explicit_kron():
    rng = np.random.default_rng(4)
    m = random_factored_model(rng)
    T0, T1 = m.agent_transitions
    P = m.P
    for s0 in range(2):
        for s1 in range(3):
            for a0 in range(2):
                for a1 in range(2):
                    s = s0 * 3 + s1
                    a = a0 * 2 + a1
                    expect = np.outer(T0[s0, a0], T1[s1, a1]).ravel()
                    np.testing.assert_allclose(P[s, a], expect, atol=1e-15)
    assert core.validate_model(m) == []


def test_agent_reward_sum_is_joint_reward():
    rng = np.random.default_rng(5)
    m = random_factored_model(rng)
    R0, R1 = m.agent_rewards
    s, a, s2 = 4, 3, 2
    c, c2 = np.unravel_index(s, (2, 3)), np.unravel_index(s2, (2, 3))
    ac = np.unravel_index(a, (2, 2))
    want = R0[c[0], ac[0], c2[0]] + R1[c[1], ac[1], c2[1]]
    assert m.env_reward(s, a, s2) == pytest.approx(want, abs=1e-15)
    assert m.R[s, a, s2] == pytest.approx(want, abs=1e-15)


def test_joint_reward_counts_broadcasters():
    rng = np.random.default_rng(6)
    m = random_model(rng, penalty=-0.25)
    base = m.env_reward(0, 1, 2)
    assert core.joint_reward(m, 0, 1, 2, (1, 1)) == pytest.approx(base - 0.5)
    assert core.joint_reward(m, 0, 1, 2, (0, 1)) == pytest.approx(base - 0.25)
    with pytest.raises(IndexError):
        core.joint_reward(m, 99, 0, 0, (0, 0))


def test_expected_reward_matches_dense_contraction():
    m = tiny_switch_model()
    np.testing.assert_allclose(m.expected_reward, np.einsum("sat,sat->sa", m.P, m.R), atol=1e-14)


def test_model_round_trip(tmp_path):
    rng = np.random.default_rng(7)
    for m in (random_model(rng, shared=2, penalty=-0.1), random_factored_model(rng), tiny_switch_model()):
        p = tmp_path / "m.json"
        core.save_model(m, p)
        m2 = core.load_model(p)
        np.testing.assert_array_equal(m.P, m2.P)
        np.testing.assert_array_equal(m.eta, m2.eta)
        np.testing.assert_array_equal(m.R, m2.R)
        np.testing.assert_array_equal(m.initial, m2.initial)
        assert m2.broadcast_penalty == m.broadcast_penalty
        assert m2.shared_states == m.shared_states
        assert m2.factored == m.factored


def test_categorical_frequencies():
    rng = np.random.default_rng(8)
    p = np.array([0.1, 0.0, 0.6, 0.3])
    draws = np.array([core.categorical(p, rng) for _ in range(20000)])
    freq = np.bincount(draws, minlength=4) / draws.size
    assert freq[1] == 0
    np.testing.assert_allclose(freq, p, atol=0.015)


def test_sampling_follows_sparse_rows():
    m = chain_model()
    rng = np.random.default_rng(9)
    assert core.sample_transition(m, 0, 0, rng) == 1
    assert core.sample_transition(m, 2, 0, rng) == 2
    assert core.sample_observation(m, 1, 0, rng) == 1


def test_primitive_pool_is_deterministic_and_terminates():
    m = tiny_switch_model()
    pool = OptionPool.primitive(m)
    assert pool.sizes == (3, 3)
    for j in range(2):
        probs = pool.action_probs(j)
        for k in range(3):
            np.testing.assert_array_equal(probs[k, :, k], 1.0)
        np.testing.assert_array_equal(pool.termination_probs(j), 1.0)
    np.testing.assert_array_equal(core.joint_beta_none(m, pool), 0.0)


def test_termination_probabilities_are_clamped():
    m = chain_model()
    pool = OptionPool.for_model(m, 1, phi=-100.0)
    assert pool.termination_probs(0).min() == core.BETA_MIN


def test_joint_option_indexing_and_reselections():
    jo = core.JointOption((1, 0, 2), (2, 2, 3))
    assert jo.index == 1 * 6 + 0 * 3 + 2
    assert [c.components for c in jo.reselections([1])] == [(1, 0, 2), (1, 1, 2)]
    assert len(list(jo.reselections([0, 2]))) == 6
    with pytest.raises(ValueError):
        core.JointOption((2, 0, 0), (2, 2, 3))
    assert core.nonempty_subsets(3) == [(0,), (1,), (2,), (0, 1), (0, 2), (1, 2), (0, 1, 2)]


def test_joint_action_policy_is_product():
    rng = np.random.default_rng(10)
    m = random_model(rng, agent_states=(2, 3), agent_actions=(2, 3))
    pool = OptionPool.for_model(m, 2)
    for j in range(2):
        pool.theta[j][...] = rng.normal(size=pool.theta[j].shape)
    pi = core.joint_action_policy(m, pool)
    w, s, a = 3, 4, 5
    comps = pool.joint_from_index(w).components
    sc = m.agent_components(s)
    ac = np.unravel_index(a, (2, 3))
    want = (core.softmax(pool.theta[0][comps[0], sc[0]])[ac[0]]
            * core.softmax(pool.theta[1][comps[1], sc[1]])[ac[1]])
    assert pi[w, s, a] == pytest.approx(want, rel=1e-14)
    np.testing.assert_allclose(pi.sum(axis=2), 1.0, atol=1e-14)


def test_broadcast_modes():
    m = tiny_switch_model()
    pool = OptionPool.for_model(m, 1, eps=0.3)
    assert core.joint_broadcast_probs(m, pool, "always").min() == 1.0
    assert core.joint_broadcast_probs(m, pool, "never").max() == 0.0
    np.testing.assert_allclose(core.joint_broadcast_probs(m, pool, "intermittent"), core.logistic(0.3))
    with pytest.raises(ValueError):
        core.joint_broadcast_probs(m, pool, "sometimes")


def test_transition_record_slot_rule():
    core.TransitionRecord(0, 0, (0,), (0,), (1,), (3,), (3,), 0.0, (False,), False)
    with pytest.raises(ValueError):
        core.TransitionRecord(0, 0, (0,), (0,), (0,), (3,), (3,), 0.0, (False,), False)
    assert core.common_observation((4, 5), (0, 1)) == (None, 5)


def test_model_env_steps_deterministic_chain():
    env = ModelEnv(chain_model(), max_steps=5, terminal_states=[2])
    rng = np.random.default_rng(0)
    s = env.reset(rng)
    assert s == 0
    s, r, done = env.step(s, (0,), rng)
    assert (s, r, done) == (1, 1.0, False)
    s, r, done = env.step(s, (0,), rng)
    assert (s, r, done) == (2, 1.0, True)


def test_action_dependent_observations_refused():
    rng = np.random.default_rng(11)
    m = random_model(rng)
    eta = rng.dirichlet(np.ones(4), size=(4, 4))
    m2 = DecPomdpModel.from_dense(m.agent_states, m.agent_actions, m.agent_observations, m.P, eta,
                                  m.discount, m.initial, np.array(m.R))
    assert not m2.action_independent_observations
    with pytest.raises(ModelError):
        m2.obs_matrix


@settings(max_examples=30, deadline=None)
@given(st.lists(st.floats(-50, 50), min_size=1, max_size=8))
def test_softmax_is_a_distribution(xs):
    p = core.softmax(np.array(xs))
    assert abs(p.sum() - 1.0) < 1e-12
    assert p.min() >= 0


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 2**31 - 1), st.sampled_from([1, 2, 3]))
def test_random_model_rows_are_stochastic(seed, shared):
    m = random_model(np.random.default_rng(seed), shared=shared, sparsity=0.5)
    assert core.validate_model(m) == []
    np.testing.assert_allclose(m.P.sum(axis=2), 1.0, atol=1e-12)
