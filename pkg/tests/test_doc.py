import numpy as np
import pytest

from teamoc import doc, teamgrid as tg
from teamoc.core import ModelEnv, OptionPool, logistic, softmax
from teamoc.doc import CriticTables, DocLearner, LearnerConfig

from models import done_states, tiny_switch_model


def switch_env(max_steps=20):
    m = tiny_switch_model()
    return ModelEnv(m, max_steps=max_steps, terminal_states=done_states(m))


def test_critic_rows_allocated_lazily():
    t = CriticTables(4, 3)
    assert t.peek(7).shape == (4, 3) and t.states() == []
    t.row(7)[1, 2] = 5.0
    assert t.states() == [7] and t.max_abs() == 5.0


def test_coe_update_by_hand():
    t = CriticTables(2, 2, num_br=4)
    delta = doc.coe_update(t, 0, 1, 0, 1.0, 2.0, alpha_q=0.5, discount=0.5, br=3)
    assert delta == pytest.approx(2.0)
    assert t.row(0)[1, 0] == pytest.approx(1.0)
    assert t.row_br(0)[1, 0, 3] == pytest.approx(1.0)
    delta = doc.coe_update(t, 0, 1, 0, 1.0, None, alpha_q=0.5, discount=0.5)
    assert delta == pytest.approx(0.0)


def test_arrival_value():
    q = np.array([1.0, 4.0, 2.0])
    assert doc.arrival_value(q, 0, 0.25) == pytest.approx(0.25 * 1.0 + 0.75 * 4.0)
    assert doc.arrival_value(q, 1, 0.0) == pytest.approx(4.0)


def test_greedy_reselect_keeps_others_frozen():
    q = np.array([0.0, 1.0, 9.0, 2.0, 3.0, 4.0])   # sizes (2, 3)
    assert doc.greedy_reselect(q, (0, 1), [1], (2, 3)) == (0, 2)
    assert doc.greedy_reselect(q, (0, 1), [0], (2, 3)) == (1, 1)
    assert doc.greedy_reselect(q, (1, 1), [0, 1], (2, 3)) == (0, 2)
    with pytest.raises(ValueError):
        doc.greedy_reselect(q, (0, 0), [], (2, 3))


def test_choose_joint_option_greedy_ties_low():
    cfg = LearnerConfig()
    rng = np.random.default_rng(0)
    assert doc.choose_joint_option(np.array([1.0, 3.0, 3.0]), cfg, 0.0, rng) == 1


def test_joint_action_probs_product():
    rng = np.random.default_rng(1)
    pool = OptionPool.uniform((3, 2), (2, 3), 2)
    for j in range(2):
        pool.theta[j][...] = rng.normal(size=pool.theta[j].shape)
    p = doc.joint_action_probs(pool, (2, 1))
    assert p.shape == (4, 6)
    want = np.outer(softmax(pool.theta[0][1, 2]), softmax(pool.theta[1][0, 1])).ravel()
    np.testing.assert_allclose(p[2], want, atol=1e-15)


def test_termination_update_direction():
    pool = OptionPool.uniform((2,), (2,), 2)
    cfg = LearnerConfig(alpha_theta=0.0, alpha_eps=0.0, alpha_phi=0.5, entropy_coef=0.0)
    doc.doi_update(pool, 0, 0, 0, 0, 0.0, cfg, s_next=1, term_advantage=-1.0)
    assert pool.phi[0][0, 1] > 0      # worse than the best: terminate more often
    lit = LearnerConfig(alpha_theta=0.0, alpha_eps=0.0, alpha_phi=0.5, entropy_coef=0.0,
                        termination_sign="literal")
    pool2 = OptionPool.uniform((2,), (2,), 2)
    doc.doi_update(pool2, 0, 0, 0, 0, 0.0, lit, s_next=1, term_advantage=-1.0)
    assert pool2.phi[0][0, 1] == pytest.approx(-pool.phi[0][0, 1])


def test_action_update_raises_chosen_action():
    pool = OptionPool.uniform((2,), (3,), 1)
    cfg = LearnerConfig(alpha_theta=0.5, entropy_coef=0.0)
    doc.doi_update(pool, 0, 0, 1, 2, 1.0, cfg)
    p = softmax(pool.theta[0][0, 1])
    assert p[2] > 1 / 3 and p[0] == pytest.approx(p[1])


def test_broadcast_update_follows_value_sign():
    pool = OptionPool.uniform((2,), (2,), 1)
    cfg = LearnerConfig(alpha_theta=0.0, alpha_eps=0.5, alpha_phi=0.0, entropy_coef=0.0)
    doc.doi_update(pool, 0, 0, 0, 0, 0.0, cfg, br=1, q_intra_br=-2.0, s_next=1)
    assert logistic(pool.eps[0][0, 1]) < 0.5


def test_config_validation():
    with pytest.raises(ValueError):
        LearnerConfig(alpha_q=1.5)
    with pytest.raises(ValueError):
        LearnerConfig(broadcast_penalty=0.1)
    with pytest.raises(ValueError):
        LearnerConfig(termination_sign="other")
    assert LearnerConfig(entropy_coef=0.01, num_options=4).effective_entropy == pytest.approx(0.04)
    assert LearnerConfig(epsilon_start=0.5, epsilon_decay=0.5, epsilon_end=0.1).exploration_rate(3) == 0.1


@pytest.mark.parametrize("mode", ["always", "intermittent", "never"])
def test_learner_runs_in_every_mode(mode):
    env = switch_env()
    cfg = LearnerConfig(max_steps=20, broadcast_penalty=-0.1)
    learner = DocLearner(env, cfg, np.random.default_rng(0), mode)
    for _ in range(20):
        log, m = learner.run_episode(record=True)
        assert m.steps == len(log) <= 20
        assert m.ret == pytest.approx(sum(r.reward for r in log))
        if mode == "always":
            assert m.broadcast_rate == 1.0
        if mode == "never":
            assert m.broadcast_rate == 0.0
    assert learner.tables.max_abs() > 0


def test_learner_on_grid_intermittent():
    env = tg.GridLearningEnv(tg.make_env("switch", 2, max_steps=15))
    learner = DocLearner(env, LearnerConfig(max_steps=15), np.random.default_rng(1), "intermittent")
    for _ in range(5):
        m = learner.run_episode()
        assert 0.0 <= m.broadcast_rate <= 1.0


def test_same_seed_same_trajectory():
    env = switch_env()
    a = DocLearner(env, LearnerConfig(max_steps=20), np.random.default_rng(3), "intermittent")
    b = DocLearner(env, LearnerConfig(max_steps=20), np.random.default_rng(3), "intermittent")
    for _ in range(10):
        assert a.run_episode() == b.run_episode()
    for s in a.tables.states():
        np.testing.assert_array_equal(a.tables.row(s), b.tables.row(s))


def test_baselines_run():
    env = switch_env()
    cfg = LearnerConfig(max_steps=20)
    out = doc.baseline_actor_critic(env, cfg, [0, 1], 5, centralized=True)
    assert all(m.broadcast_rate == 1.0 for rows, _ in out.values() for m in rows)
    out = doc.baseline_actor_critic(env, cfg, [0], 5, centralized=False)
    assert all(m.broadcast_rate == 0.0 for rows, _ in out.values() for m in rows)
    rnd = doc.make_learner(env, cfg, 0, "random")
    rnd.run_episode()
    assert np.all(rnd.theta[0] == 0)
    with pytest.raises(ValueError):
        doc.make_learner(env, cfg, 0, "other")


def test_checkpoint_round_trip(tmp_path):
    env = switch_env()
    a = DocLearner(env, LearnerConfig(max_steps=20), np.random.default_rng(4), "intermittent")
    for _ in range(5):
        a.run_episode()
    p = tmp_path / "ck.json"
    doc.save_checkpoint(a, p)
    b = doc.load_checkpoint(DocLearner(env, LearnerConfig(max_steps=20), np.random.default_rng(4), "intermittent"), p)
    assert b.episodes_done == 5
    for j in range(2):
        np.testing.assert_array_equal(a.pool.theta[j], b.pool.theta[j])
        np.testing.assert_array_equal(a.pool.phi[j], b.pool.phi[j])
    for s in a.tables.states():
        np.testing.assert_array_equal(a.tables.row(s), b.tables.row(s))
