"""Small multi-agent grid worlds (FourRooms, Switch, DualSwitch) and tabular export.

Coordinates are (x, y) with y growing downwards.  Orientation 0..3 is
N, E, S, W; ``Right`` adds one, ``Left`` subtracts one.  Cells outside the
grid behave like walls.
"""

from __future__ import annotations

import itertools
import json
from collections import deque
from dataclasses import dataclass
from typing import Sequence

import numpy as np
import scipy.sparse as sp

from .core import DecPomdpModel

LEFT, RIGHT, FORWARD, TOGGLE, PICKUP, DROP = range(6)
ACTION_NAMES = ("left", "right", "forward", "toggle", "pickup", "drop")
NUM_ACTIONS = 6
DIRS = ((0, -1), (1, 0), (0, 1), (-1, 0))
ARROWS = "^>v<"

# view symbols
UNSEEN, EMPTY, WALL, DOOR, SWITCH_OFF, SWITCH_ON, GOAL, AGENT = range(8)
NUM_SYMBOLS = 8

MAX_SIDE = 19
MAX_AGENTS = 4


class GridError(ValueError):
    pass


@dataclass(frozen=True)
class Switch:
    cell: tuple[int, int]
    lights: frozenset = frozenset()   # cells that are dark while the switch is off


@dataclass(frozen=True)
class Goal:
    cell: tuple[int, int]
    requires_switch: int | None = None   # hidden until that switch is on


@dataclass(frozen=True)
class GridSpec:
    width: int
    height: int
    walls: frozenset
    spawns: tuple                    # ((x, y, orientation), ...)
    doors: frozenset = frozenset()
    switches: tuple = ()
    goals: tuple = ()
    max_steps: int = 50
    collision_penalty: float = -0.1
    goal_reward: float = 1.0
    view_depth: int = 5
    view_width: int = 5
    name: str = "grid"

    def __post_init__(self):
        if not (1 <= self.width <= MAX_SIDE and 1 <= self.height <= MAX_SIDE):
            raise GridError(f"grid {self.width}x{self.height} outside 1..{MAX_SIDE}")
        if not 1 <= len(self.spawns) <= MAX_AGENTS:
            raise GridError(f"{len(self.spawns)} agents; supported 1..{MAX_AGENTS}")
        if self.width * self.height < len(self.spawns):
            raise GridError("more agents than cells")
        cells = [(x, y) for x, y, _ in self.spawns]
        if len(set(cells)) != len(cells):
            raise GridError("two agents spawn on the same cell")
        for c in cells + [g.cell for g in self.goals]:
            if not self.is_free(c):
                raise GridError(f"cell {c} is a wall or outside the grid")
        for sw in self.switches:
            if not self.in_bounds(sw.cell):
                raise GridError(f"switch {sw.cell} outside the grid")
        for g in self.goals:
            if g.requires_switch is not None and not 0 <= g.requires_switch < len(self.switches):
                raise GridError(f"goal {g.cell} refers to missing switch {g.requires_switch}")
        if self.collision_penalty > 0 or self.goal_reward <= 0:
            raise GridError("need collision_penalty <= 0 and goal_reward > 0")

    @property
    def num_agents(self) -> int:
        return len(self.spawns)

    def in_bounds(self, c) -> bool:
        return 0 <= c[0] < self.width and 0 <= c[1] < self.height

    def is_free(self, c) -> bool:
        return self.in_bounds(c) and c not in self.walls and c not in self.switch_cells

    @property
    def switch_cells(self) -> frozenset:
        return frozenset(sw.cell for sw in self.switches)

    @property
    def free_cells(self) -> list:
        return [(x, y) for y in range(self.height) for x in range(self.width) if self.is_free((x, y))]

    def is_dark(self, c, switches: Sequence[bool]) -> bool:
        return any(c in sw.lights and not on for sw, on in zip(self.switches, switches))


@dataclass(frozen=True)
class EnvState:
    positions: tuple
    orientations: tuple
    carrying: tuple
    switches: tuple
    goals: tuple          # remaining flag per goal of the layout
    step: int = 0


@dataclass(frozen=True)
class LocalObservation:
    cells: tuple          # view_depth rows (nearest first) of view_width symbols

    @property
    def symbol(self) -> int:
        out = 0
        for v in self.cells:
            out = out * NUM_SYMBOLS + v
        return out


def initial_state(spec: GridSpec) -> EnvState:
    n = spec.num_agents
    return EnvState(tuple((x, y) for x, y, _ in spec.spawns), tuple(o for _, _, o in spec.spawns),
                    (False,) * n, (False,) * len(spec.switches), (True,) * len(spec.goals), 0)


def goal_visible(spec: GridSpec, state: EnvState, g: int) -> bool:
    req = spec.goals[g].requires_switch
    return req is None or state.switches[req]


def _ahead(pos, ori):
    dx, dy = DIRS[ori]
    return (pos[0] + dx, pos[1] + dy)


def step(spec: GridSpec, state: EnvState, actions: Sequence[int], rng=None):
    """Advance all agents simultaneously.

    Returns (next state, reward, done, events) where events holds the
    collision count, collected goal indices, toggled switches and whether the
    episode ended by the step cap.
    """
    n = spec.num_agents
    if len(actions) != n:
        raise GridError(f"need {n} actions, got {len(actions)}")
    for a in actions:
        if not 0 <= int(a) < NUM_ACTIONS:
            raise GridError(f"invalid action {a}")
    pos = list(state.positions)
    ori = list(state.orientations)

    # forward intents
    target = {}
    for j, a in enumerate(actions):
        if a == FORWARD:
            t = _ahead(pos[j], ori[j])
            if spec.is_free(t):
                target[j] = t
    bumped = set()
    counts = {}
    for t in target.values():
        counts[t] = counts.get(t, 0) + 1
    for j in list(target):
        if counts[target[j]] > 1:
            bumped.add(j)
    for i, j in itertools.combinations(list(target), 2):
        if target[i] == pos[j] and target[j] == pos[i]:
            bumped.update((i, j))
    movers = {j: t for j, t in target.items() if j not in bumped}
    changed = True
    while changed:
        changed = False
        stay = {pos[j] for j in range(n) if j not in movers}
        for j in list(movers):
            if movers[j] in stay:
                del movers[j]
                bumped.add(j)
                changed = True
    reward = spec.collision_penalty * len(bumped)
    for j, t in movers.items():
        pos[j] = t

    switches = list(state.switches)
    toggled = []
    for j, a in enumerate(actions):
        if a == LEFT:
            ori[j] = (ori[j] - 1) % 4
        elif a == RIGHT:
            ori[j] = (ori[j] + 1) % 4
        elif a == TOGGLE:
            front = _ahead(state.positions[j], state.orientations[j])
            for k, sw in enumerate(spec.switches):
                if sw.cell == front:
                    switches[k] = not switches[k]
                    toggled.append(k)

    goals = list(state.goals)
    collected = []
    for j in sorted(movers):
        for g, goal in enumerate(spec.goals):
            if goals[g] and goal.cell == pos[j]:
                req = goal.requires_switch
                if req is None or switches[req]:
                    goals[g] = False
                    collected.append(g)
                    reward += spec.goal_reward
    nxt = EnvState(tuple(pos), tuple(ori), state.carrying, tuple(switches), tuple(goals), state.step + 1)
    finished = bool(spec.goals) and not any(goals)
    truncated = not finished and nxt.step >= spec.max_steps
    events = {"collisions": len(bumped), "collected": collected, "toggled": toggled,
              "finished": finished, "truncated": truncated}
    return nxt, float(reward), finished or truncated, events


def observe(spec: GridSpec, state: EnvState, j: int) -> LocalObservation:
    """Forward view of agent j, occluded by walls, switches, doors' frames and darkness."""
    D, W = spec.view_depth, spec.view_width
    half = W // 2
    px, py = state.positions[j]
    o = state.orientations[j]
    fx, fy = DIRS[o]
    rx, ry = DIRS[(o + 1) % 4]
    others = {p: k for k, p in enumerate(state.positions) if k != j}

    def cell_at(f, l):
        return (px + f * fx + l * rx, py + f * fy + l * ry)

    def transparent(c):
        return spec.is_free(c) and not spec.is_dark(c, state.switches)

    vis = np.zeros((D, W), dtype=bool)
    vis[0, half] = True
    for f in range(D):
        for i in range(W - 1):
            if vis[f, i] and transparent(cell_at(f, i - half)):
                vis[f, i + 1] = True
                if f + 1 < D:
                    vis[f + 1, i] = vis[f + 1, i + 1] = True
        for i in range(W - 1, 0, -1):
            if vis[f, i] and transparent(cell_at(f, i - half)):
                vis[f, i - 1] = True
                if f + 1 < D:
                    vis[f + 1, i] = vis[f + 1, i - 1] = True
    rows = []
    for f in range(D):
        for i in range(W):
            c = cell_at(f, i - half)
            if not vis[f, i] or (spec.in_bounds(c) and spec.is_dark(c, state.switches)):
                rows.append(UNSEEN)
            elif not spec.in_bounds(c) or c in spec.walls:
                rows.append(WALL)
            elif c in spec.switch_cells:
                k = [sw.cell for sw in spec.switches].index(c)
                rows.append(SWITCH_ON if state.switches[k] else SWITCH_OFF)
            elif c in others:
                rows.append(AGENT)
            elif any(state.goals[g] and goal_visible(spec, state, g) and spec.goals[g].cell == c
                     for g in range(len(spec.goals))):
                rows.append(GOAL)
            elif c in spec.doors:
                rows.append(DOOR)
            else:
                rows.append(EMPTY)
    return LocalObservation(tuple(rows))


def render(spec: GridSpec, state: EnvState) -> str:
    """One character per cell: # wall, . floor, : dark floor, S/s switch on/off,
    G visible goal, g hidden goal, arrows for agents."""
    lines = []
    agents = {p: ARROWS[o] for p, o in zip(state.positions, state.orientations)}
    goals = {spec.goals[g].cell: g for g in range(len(spec.goals)) if state.goals[g]}
    for y in range(spec.height):
        row = []
        for x in range(spec.width):
            c = (x, y)
            if c in agents:
                row.append(agents[c])
            elif c in spec.switch_cells:
                k = [sw.cell for sw in spec.switches].index(c)
                row.append("S" if state.switches[k] else "s")
            elif c in spec.walls:
                row.append("#")
            elif c in goals:
                row.append("G" if goal_visible(spec, state, goals[c]) else "g")
            elif spec.is_dark(c, state.switches):
                row.append(":")
            else:
                row.append(".")
        lines.append("".join(row))
    return "\n".join(lines) + "\n"


def return_bounds(spec: GridSpec, broadcast_penalty: float = 0.0) -> tuple[float, float]:
    """(lower, upper) bounds on an undiscounted episode return."""
    J = spec.num_agents
    lo = spec.max_steps * (J * spec.collision_penalty + J * broadcast_penalty)
    return lo, len(spec.goals) * spec.goal_reward


# ---------------------------------------------------------------------------
# layouts


def _border(w, h):
    return {(x, y) for x in range(w) for y in range(h) if x in (0, w - 1) or y in (0, h - 1)}


def _place(rng, cells, k, what):
    if len(cells) < k:
        raise GridError(f"not enough free cells for {k} {what}")
    idx = rng.choice(len(cells), size=k, replace=False)
    return [cells[i] for i in sorted(idx)]


def make_env(name: str, num_agents: int = 2, num_goals: int | None = None, size: int | None = None,
             max_steps: int | None = None, layout_seed: int = 0, **kw) -> GridSpec:
    """Build a named layout.  ``size`` is the outer side length including walls."""
    if not 1 <= num_agents <= MAX_AGENTS:
        raise GridError(f"num_agents must be in 1..{MAX_AGENTS}")
    rng = np.random.default_rng(layout_seed)
    if name == "fourrooms":
        size = size or 9
        num_goals = 3 if num_goals is None else num_goals
        if not 7 <= size <= MAX_SIDE:
            raise GridError("fourrooms needs size in 7..19")
        m = size // 2
        walls = _border(size, size) | {(m, y) for y in range(size)} | {(x, m) for x in range(size)}
        q = (m + 1) // 2
        doors = {(m, q), (m, m + q), (q, m), (m + q, m)}
        walls -= doors
        free = sorted(c for c in ((x, y) for y in range(size) for x in range(size))
                      if c not in walls and c not in doors)
        picks = _place(rng, free, num_agents + num_goals, "agents and goals")
        order = rng.permutation(len(picks))
        picks = [picks[i] for i in order]
        spawns = tuple((x, y, int(rng.integers(4))) for x, y in picks[:num_agents])
        goals = tuple(Goal(c) for c in picks[num_agents:])
        spec = GridSpec(size, size, frozenset(walls), spawns, frozenset(doors), (), goals,
                        max_steps or 100, name="fourrooms", **kw)
    elif name in ("switch", "dualswitch"):
        size = size or 5
        num_goals = 1 if num_goals is None else num_goals
        if not 5 <= size <= MAX_SIDE:
            raise GridError(f"{name} needs size in 5..19")
        m = size // 2
        walls = _border(size, size) | {(m, y) for y in range(size)}
        door = (m, m)
        walls -= {door}
        left = [(x, y) for y in range(1, size - 1) for x in range(1, m)]
        right = [(x, y) for y in range(1, size - 1) for x in range(m + 1, size - 1)]
        if name == "switch":
            switches = (Switch((0, m), frozenset(right)),)
            if num_goals > len(right):
                raise GridError("too many goals for the right room")
            corner = (size - 2, m)
            rest = [c for c in right if c != corner]
            gcells = [corner] + _place(rng, rest, num_goals - 1, "goals") if num_goals else []
            goals = tuple(Goal(c, 0) for c in gcells)
            if num_agents > len(left):
                raise GridError("too many agents for the left room")
            cand = [(1, 1, 2), (1, size - 2, 0)] + [(x, y, 1) for x, y in left]
            spawns, seen = [], set()
            for x, y, o in cand:
                if (x, y) not in seen and len(spawns) < num_agents:
                    spawns.append((x, y, o))
                    seen.add((x, y))
        else:
            # each room's switch reveals the goal in the other room
            switches = (Switch((0, m), frozenset(right)), Switch((size - 1, m), frozenset(left)))
            if num_goals not in (1, 2):
                raise GridError("dualswitch supports one or two goals")
            goals = (Goal((size - 2, 1), 0),) + ((Goal((1, 1), 1),) if num_goals == 2 else ())
            cand = [(1, size - 2, 0), (size - 2, size - 2, 0), (1, 1, 2), (size - 2, 2, 2)]
            spawns = cand[:num_agents]
        spec = GridSpec(size, size, frozenset(walls), tuple(spawns), frozenset({door}), switches,
                        goals, max_steps or 30, name=name, **kw)
    else:
        raise GridError(f"unknown environment {name!r}")
    return spec


def empty_room(width: int, height: int, spawns, max_steps: int = 20, **kw) -> GridSpec:
    """Wall-free rectangle; the grid edge acts as the boundary."""
    return GridSpec(width, height, frozenset(), tuple(spawns), max_steps=max_steps, name="empty", **kw)


# ---------------------------------------------------------------------------
# serialization


def spec_to_dict(spec: GridSpec) -> dict:
    return {
        "name": spec.name, "width": spec.width, "height": spec.height,
        "walls": sorted(list(c) for c in spec.walls),
        "doors": sorted(list(c) for c in spec.doors),
        "switches": [{"cell": list(s.cell), "lights": sorted(list(c) for c in s.lights)} for s in spec.switches],
        "goals": [{"cell": list(g.cell), "requires_switch": g.requires_switch} for g in spec.goals],
        "spawns": [list(s) for s in spec.spawns],
        "max_steps": spec.max_steps, "collision_penalty": spec.collision_penalty,
        "goal_reward": spec.goal_reward, "view_depth": spec.view_depth, "view_width": spec.view_width,
    }


def spec_from_dict(d: dict) -> GridSpec:
    return GridSpec(
        width=d["width"], height=d["height"],
        walls=frozenset(tuple(c) for c in d["walls"]),
        spawns=tuple(tuple(s) for s in d["spawns"]),
        doors=frozenset(tuple(c) for c in d.get("doors", [])),
        switches=tuple(Switch(tuple(s["cell"]), frozenset(tuple(c) for c in s["lights"]))
                       for s in d.get("switches", [])),
        goals=tuple(Goal(tuple(g["cell"]), g.get("requires_switch")) for g in d.get("goals", [])),
        max_steps=d.get("max_steps", 50), collision_penalty=d.get("collision_penalty", -0.1),
        goal_reward=d.get("goal_reward", 1.0), view_depth=d.get("view_depth", 5),
        view_width=d.get("view_width", 5), name=d.get("name", "grid"))


def save_spec(spec: GridSpec, path) -> None:
    with open(path, "w") as fh:
        json.dump(spec_to_dict(spec), fh, indent=1)
        fh.write("\n")


def load_spec(path) -> GridSpec:
    with open(path) as fh:
        return spec_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# indexing and tabular export


class GridIndex:
    """Maps grid states to factored indices: shared = (switch bits, goal bits),
    private = (free cell, orientation)."""

    def __init__(self, spec: GridSpec):
        self.spec = spec
        self.cells = spec.free_cells
        self.cell_id = {c: i for i, c in enumerate(self.cells)}
        self.n_private = 4 * len(self.cells)
        self.n_shared = 2 ** (len(spec.switches) + len(spec.goals))
        self.dims = (self.n_shared,) + (self.n_private,) * spec.num_agents

    def private(self, state: EnvState, j: int) -> int:
        return 4 * self.cell_id[state.positions[j]] + state.orientations[j]

    def shared(self, state: EnvState) -> int:
        v = 0
        for bit in tuple(state.switches) + tuple(state.goals):
            v = 2 * v + int(bit)
        return v

    def index(self, state: EnvState) -> int:
        comps = (self.shared(state),) + tuple(self.private(state, j) for j in range(self.spec.num_agents))
        return int(np.ravel_multi_index(comps, self.dims))

    def decode(self, idx: int, step: int = 0) -> EnvState:
        comps = np.unravel_index(idx, self.dims)
        bits = []
        v = int(comps[0])
        nb = len(self.spec.switches) + len(self.spec.goals)
        for _ in range(nb):
            bits.append(bool(v & 1))
            v >>= 1
        bits = bits[::-1]
        ns = len(self.spec.switches)
        pos = tuple(self.cells[int(c) // 4] for c in comps[1:])
        ori = tuple(int(c) % 4 for c in comps[1:])
        return EnvState(pos, ori, (False,) * self.spec.num_agents, tuple(bits[:ns]), tuple(bits[ns:]), step)

    @property
    def size(self) -> int:
        return int(np.prod(self.dims))


def export_tabular(spec: GridSpec, discount: float = 0.95, observation: str = "state",
                   max_states: int = 2_000_000, broadcast_penalty: float = 0.0) -> DecPomdpModel:
    """Exact tabular model of the layout with the step counter dropped.

    States where every goal is collected are absorbing with zero reward.
    Index combinations that are never reached (e.g. two agents on one cell)
    are kept as zero-reward self-loops so the product indexing stays intact.
    ``observation`` is ``state`` (each agent observes its own position and
    heading) or ``view`` (the forward view symbol).
    """
    idx = GridIndex(spec)
    n = idx.size
    if n > max_states:
        raise GridError(f"tabular export refused: {n} joint states exceeds limit {max_states}")
    J = spec.num_agents
    A = NUM_ACTIONS ** J
    joint_actions = list(itertools.product(range(NUM_ACTIONS), repeat=J))
    start = initial_state(spec)
    s0 = idx.index(start)
    nxt_of = np.arange(n).repeat(A).reshape(n, A)      # default self-loop
    rew = np.zeros((n, A))
    seen = {s0}
    queue = deque([s0])
    while queue:
        s = queue.popleft()
        st = idx.decode(s)
        if spec.goals and not any(st.goals):
            continue
        for a, acts in enumerate(joint_actions):
            t, r, _, _ = step(spec, st, acts)
            k = idx.index(t)
            nxt_of[s, a] = k
            rew[s, a] = r
            if k not in seen:
                seen.add(k)
                queue.append(k)
    rows = np.arange(n * A)
    trans = sp.csr_matrix((np.ones(n * A), (rows, nxt_of.ravel())), shape=(n * A, n))
    rewards = sp.csr_matrix((rew.ravel(), (rows, nxt_of.ravel())), shape=(n * A, n))
    rewards.eliminate_zeros()
    if observation == "state":
        obs_sizes = (idx.n_private,) * J
        comps = np.stack(np.unravel_index(np.arange(n), idx.dims), axis=1)[:, 1:]
        obs_idx = np.ravel_multi_index(tuple(comps.T), obs_sizes)
    elif observation == "view":
        alphabets = [dict() for _ in range(J)]
        per = np.zeros((n, J), dtype=np.int64)
        for s in range(n):
            st = idx.decode(s)
            if len(set(st.positions)) < J:
                continue
            for j in range(J):
                sym = observe(spec, st, j).symbol
                per[s, j] = alphabets[j].setdefault(sym, len(alphabets[j]))
        obs_sizes = tuple(max(len(al), 1) for al in alphabets)
        obs_idx = np.ravel_multi_index(tuple(per.T), obs_sizes)
    else:
        raise GridError(f"unknown observation kind {observation!r}")
    obs = sp.csr_matrix((np.ones(n * A), (rows, np.repeat(obs_idx, A))),
                        shape=(n * A, int(np.prod(obs_sizes))))
    init = np.zeros(n)
    init[s0] = 1.0
    kw = {}
    if J == 1 and idx.n_shared == 1:
        kern = trans.toarray().reshape(n, A, n)
        eta = obs.toarray().reshape(n, A, -1)
        kw = dict(factored=True, agent_transitions=(kern,), agent_obs_kernels=(eta,),
                  agent_rewards=(rewards.toarray().reshape(n, A, n),))
    else:
        kw = dict(joint_rewards=rewards)
    bound = len(spec.goals) * spec.goal_reward + J * abs(spec.collision_penalty) + J * abs(broadcast_penalty) + 1.0
    return DecPomdpModel(
        agent_states=(idx.n_private,) * J, agent_actions=(NUM_ACTIONS,) * J,
        agent_observations=obs_sizes, transition=trans, observation=obs, discount=discount,
        initial=init, broadcast_penalty=broadcast_penalty, shared_states=idx.n_shared,
        reward_bound=bound, name=f"{spec.name}-tabular", **kw)


def reachable_states(spec: GridSpec) -> set:
    """Joint indices reachable from the spawn configuration."""
    idx = GridIndex(spec)
    start = idx.index(initial_state(spec))
    seen, queue = {start}, deque([start])
    acts = list(itertools.product(range(NUM_ACTIONS), repeat=spec.num_agents))
    while queue:
        s = queue.popleft()
        st = idx.decode(s)
        if spec.goals and not any(st.goals):
            continue
        for a in acts:
            k = idx.index(step(spec, st, a)[0])
            if k not in seen:
                seen.add(k)
                queue.append(k)
    return seen


# ---------------------------------------------------------------------------
# learner adapter


class GridLearningEnv:
    """Exposes a grid layout through the interface the learners use.

    Private state of an agent is its (cell, heading); the shared component
    (switch and goal bits) is treated as common knowledge.
    """

    def __init__(self, spec: GridSpec, actions: Sequence[int] | None = None):
        self.spec = spec
        self.index = GridIndex(spec)
        self.actions = tuple(range(NUM_ACTIONS)) if actions is None else tuple(actions)
        self.max_steps = spec.max_steps
        self._kernels = None

    @property
    def num_agents(self):
        return self.spec.num_agents

    @property
    def agent_states(self):
        return (self.index.n_private,) * self.spec.num_agents

    @property
    def agent_actions(self):
        return (len(self.actions),) * self.spec.num_agents

    @property
    def shared_states(self):
        return self.index.n_shared

    @property
    def num_joint_states(self):
        return self.index.size

    def reset(self, rng=None) -> EnvState:
        return initial_state(self.spec)

    def step(self, state: EnvState, actions, rng=None):
        nxt, r, done, ev = step(self.spec, state, [self.actions[a] for a in actions])
        return nxt, r, ev["finished"]

    def private(self, state: EnvState):
        return tuple(self.index.private(state, j) for j in range(self.spec.num_agents))

    def shared(self, state: EnvState) -> int:
        return self.index.shared(state)

    def key(self, state: EnvState) -> int:
        return self.index.index(state)

    def joint_key(self, shared: int, privates) -> int:
        return int(np.ravel_multi_index((shared, *privates), self.index.dims))

    def agent_kernels(self):
        """Per-agent motion kernels that ignore the other agents."""
        if self._kernels is None:
            n = self.index.n_private
            k = np.zeros((n, len(self.actions), n))
            cells = self.index.cells
            for p in range(n):
                c, o = cells[p // 4], p % 4
                for ai, a in enumerate(self.actions):
                    if a == LEFT:
                        q = 4 * (p // 4) + (o - 1) % 4
                    elif a == RIGHT:
                        q = 4 * (p // 4) + (o + 1) % 4
                    elif a == FORWARD and self.spec.is_free(_ahead(c, o)):
                        q = 4 * self.index.cell_id[_ahead(c, o)] + o
                    else:
                        q = p
                    k[p, ai, q] = 1.0
            self._kernels = [k] * self.spec.num_agents
        return self._kernels
