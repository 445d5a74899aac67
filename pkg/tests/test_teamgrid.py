import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from teamoc import core, teamgrid as tg
from teamoc.teamgrid import FORWARD, LEFT, PICKUP, RIGHT, TOGGLE, EnvState


def room(spawns, **kw):
    return tg.empty_room(4, 3, spawns, **kw)


def test_switch_layout_renders():
    spec = tg.make_env("switch", 2)
    assert tg.render(spec, tg.initial_state(spec)) == "#####\n#v#:#\ns..g#\n#^#:#\n#####\n"


def test_turning_and_wall_blocking():
    spec = room([(0, 0, 0)])
    s = tg.initial_state(spec)
    s, r, done, ev = tg.step(spec, s, [FORWARD])      # facing north into the edge
    assert s.positions == ((0, 0),) and r == 0.0 and ev["collisions"] == 0
    s, _, _, _ = tg.step(spec, s, [RIGHT])
    assert s.orientations == (1,)
    s, _, _, _ = tg.step(spec, s, [FORWARD])
    assert s.positions == ((1, 0),)
    s, _, _, _ = tg.step(spec, s, [LEFT])
    assert s.orientations == (0,)
    assert not done


def test_same_target_bumps_both():
    spec = room([(0, 1, 1), (2, 1, 3)])
    s, r, _, ev = tg.step(spec, tg.initial_state(spec), [FORWARD, FORWARD])
    assert s.positions == ((0, 1), (2, 1))
    assert ev["collisions"] == 2 and r == pytest.approx(2 * spec.collision_penalty)


def test_swap_bumps_both():
    spec = room([(0, 1, 1), (1, 1, 3)])
    s, r, _, ev = tg.step(spec, tg.initial_state(spec), [FORWARD, FORWARD])
    assert s.positions == ((0, 1), (1, 1)) and ev["collisions"] == 2


def test_moving_into_stayer_bumps_mover_only():
    spec = room([(0, 1, 1), (1, 1, 0)])
    s, r, _, ev = tg.step(spec, tg.initial_state(spec), [FORWARD, PICKUP])
    assert s.positions == ((0, 1), (1, 1)) and ev["collisions"] == 1
    assert r == pytest.approx(spec.collision_penalty)


def test_following_into_vacated_cell_is_allowed():
    spec = room([(0, 1, 1), (1, 1, 1)])
    s, r, _, ev = tg.step(spec, tg.initial_state(spec), [FORWARD, FORWARD])
    assert s.positions == ((1, 1), (2, 1)) and ev["collisions"] == 0 and r == 0.0


def test_chain_blocked_by_stayer_propagates():
    spec = room([(0, 1, 1), (1, 1, 1), (2, 1, 0)])
    s, _, _, ev = tg.step(spec, tg.initial_state(spec), [FORWARD, FORWARD, PICKUP])
    assert s.positions == ((0, 1), (1, 1), (2, 1)) and ev["collisions"] == 2


def test_switch_reveals_goal_and_collection_ends_episode():
    spec = tg.make_env("switch", 1)
    s = tg.initial_state(spec)                    # (1, 1) facing south
    assert not tg.goal_visible(spec, s, 0)
    plan = [FORWARD, RIGHT, TOGGLE, LEFT, LEFT, FORWARD, FORWARD]
    total = 0.0
    for a in plan:
        s, r, done, ev = tg.step(spec, s, [a])
        total += r
    assert s.switches == (True,)
    assert s.positions == ((3, 2),)
    assert done and ev["finished"] and ev["collected"] == [0]
    assert total == pytest.approx(spec.goal_reward)


def test_hidden_goal_is_not_collected():
    spec = tg.make_env("switch", 1)
    s = EnvState(((2, 2),), (1,), (False,), (False,), (True,), 0)
    s, r, done, ev = tg.step(spec, s, [FORWARD])
    assert s.positions == ((3, 2),) and r == 0.0 and not done and s.goals == (True,)


def test_truncation_at_step_cap():
    spec = room([(0, 0, 0)], max_steps=3)
    s = tg.initial_state(spec)
    for k in range(3):
        s, _, done, ev = tg.step(spec, s, [LEFT])
    assert done and ev["truncated"] and not ev["finished"]


def test_invalid_actions_rejected():
    spec = room([(0, 0, 0)])
    with pytest.raises(tg.GridError):
        tg.step(spec, tg.initial_state(spec), [7])
    with pytest.raises(tg.GridError):
        tg.step(spec, tg.initial_state(spec), [0, 0])


def test_spec_validation():
    with pytest.raises(tg.GridError):
        room([(0, 0, 0), (0, 0, 1)])
    with pytest.raises(tg.GridError):
        tg.GridSpec(30, 30, frozenset(), ((0, 0, 0),))
    with pytest.raises(tg.GridError):
        tg.make_env("maze")


def test_dark_room_is_unseen_until_lit():
    spec = tg.make_env("switch", 1)
    s = EnvState(((1, 2),), (1,), (False,), (False,), (True,), 0)   # at the door row facing east
    dark = tg.observe(spec, s, 0)
    lit = tg.observe(spec, EnvState(((1, 2),), (1,), (False,), (True,), (True,), 0), 0)
    assert tg.GOAL not in dark.cells
    assert tg.GOAL in lit.cells
    assert dark.symbol != lit.symbol


def test_observation_shows_walls_and_agents():
    spec = room([(0, 1, 1), (1, 1, 0)])
    obs = tg.observe(spec, tg.initial_state(spec), 0)
    half = spec.view_width // 2
    assert obs.cells[0 * spec.view_width + half] == tg.EMPTY   # own cell
    assert obs.cells[1 * spec.view_width + half] == tg.AGENT


def test_layouts_are_seeded():
    a = tg.make_env("fourrooms", 2, layout_seed=3)
    b = tg.make_env("fourrooms", 2, layout_seed=3)
    c = tg.make_env("fourrooms", 2, layout_seed=4)
    assert a == b
    assert (a.spawns, a.goals) != (c.spawns, c.goals)


def test_spec_round_trip(tmp_path):
    for name in ("fourrooms", "switch", "dualswitch"):
        spec = tg.make_env(name, 2)
        p = tmp_path / f"{name}.json"
        tg.save_spec(spec, p)
        assert tg.load_spec(p) == spec


def test_grid_index_round_trip():
    spec = tg.make_env("switch", 2)
    idx = tg.GridIndex(spec)
    s = EnvState(((1, 3), (3, 1)), (2, 1), (False, False), (True,), (False,), 0)
    back = idx.decode(idx.index(s))
    assert (back.positions, back.orientations, back.switches, back.goals) == \
        (s.positions, s.orientations, s.switches, s.goals)


def test_export_is_valid_and_refuses_large():
    spec = tg.make_env("switch", 2)
    m = tg.export_tabular(spec, observation="view")
    assert core.validate_model(m) == []
    assert m.num_states == tg.GridIndex(spec).size
    with pytest.raises(tg.GridError):
        tg.export_tabular(spec, max_states=100)


@settings(max_examples=10, deadline=None)
@given(st.lists(st.tuples(st.integers(0, 5), st.integers(0, 5)), min_size=1, max_size=25))
def test_export_matches_simulator(actions):
    spec = tg.make_env("switch", 2, max_steps=1000)
    m = _switch_model()
    idx = tg.GridIndex(spec)
    s = tg.initial_state(spec)
    for acts in actions:
        k = idx.index(s)
        a = m.action_index(acts)
        nxt, r, done, _ = tg.step(spec, s, acts)
        row = m.transition[k * m.num_actions + a]
        assert row[0, idx.index(nxt)] == 1.0
        assert m.env_reward(k, a, idx.index(nxt)) == pytest.approx(r)
        if done:
            break
        s = nxt


_CACHE = {}


def _switch_model():
    if "m" not in _CACHE:
        _CACHE["m"] = tg.export_tabular(tg.make_env("switch", 2, max_steps=1000))
    return _CACHE["m"]


def test_learning_env_adapter():
    spec = tg.make_env("switch", 2)
    env = tg.GridLearningEnv(spec, actions=(LEFT, RIGHT, FORWARD, TOGGLE))
    assert env.agent_actions == (4, 4)
    s = env.reset()
    key = env.key(s)
    assert env.joint_key(env.shared(s), env.private(s)) == key
    s2, r, finished = env.step(s, (2, 0))
    assert env.private(s2)[0] != env.private(s)[0]
    kern = env.agent_kernels()[0]
    np.testing.assert_allclose(kern.sum(axis=2), 1.0)
