"""Finite factored Dec-POMDP models, Markov options and joint reward semantics.

Joint states are raveled in C order over ``(shared, agent_1, ..., agent_J)``
where the shared component is the part of the world not owned by any agent
(a single value for purely agent-factored models).  Joint actions and joint
observations are raveled over the agents in order.
"""

from __future__ import annotations

import itertools
import json
from dataclasses import dataclass
from functools import cached_property
from typing import Iterator, Sequence

import numpy as np
import scipy.sparse as sp

PROB_ATOL = 1e-12
BETA_MIN = 1e-6
BROADCAST_MODES = ("always", "intermittent", "never")


class ModelError(ValueError):
    pass


def _as_csr(m, shape) -> sp.csr_matrix:
    if sp.issparse(m):
        out = sp.csr_matrix(m, dtype=float)
    else:
        out = sp.csr_matrix(np.asarray(m, dtype=float).reshape(shape))
    if out.shape != shape:
        raise ModelError(f"kernel has shape {out.shape}, expected {shape}")
    out.sum_duplicates()
    out.sort_indices()
    return out


@dataclass(frozen=True, eq=False)
class DecPomdpModel:
    """Finite Dec-POMDP with per-agent state/action/observation sets.

    ``transition`` has one row per ``(s, a)`` pair (row ``s * |A| + a``) and
    one column per next joint state.  ``observation`` has one row per
    ``(s', a_prev)`` pair and one column per joint observation.  Rewards are
    either per-agent tables ``R^j[s^j, a^j, s'^j]`` (reward independent) or a
    joint sparse table aligned with ``transition``.
    """

    agent_states: tuple[int, ...]
    agent_actions: tuple[int, ...]
    agent_observations: tuple[int, ...]
    transition: sp.csr_matrix
    observation: sp.csr_matrix
    discount: float
    initial: np.ndarray
    broadcast_penalty: float = 0.0
    agent_rewards: tuple[np.ndarray, ...] | None = None
    joint_rewards: sp.csr_matrix | None = None
    shared_states: int = 1
    reward_bound: float = 1e6
    factored: bool = False
    agent_transitions: tuple[np.ndarray, ...] | None = None
    agent_obs_kernels: tuple[np.ndarray, ...] | None = None
    name: str = "model"

    def __post_init__(self):
        object.__setattr__(self, "agent_states", tuple(int(x) for x in self.agent_states))
        object.__setattr__(self, "agent_actions", tuple(int(x) for x in self.agent_actions))
        object.__setattr__(self, "agent_observations", tuple(int(x) for x in self.agent_observations))
        if not (len(self.agent_states) == len(self.agent_actions) == len(self.agent_observations) >= 1):
            raise ModelError("per-agent cardinalities must have one entry per agent")
        S, A, O = self.num_states, self.num_actions, self.num_observations
        object.__setattr__(self, "transition", _as_csr(self.transition, (S * A, S)))
        object.__setattr__(self, "observation", _as_csr(self.observation, (S * A, O)))
        init = np.asarray(self.initial, dtype=float).reshape(S)
        init.setflags(write=False)
        object.__setattr__(self, "initial", init)
        if (self.agent_rewards is None) == (self.joint_rewards is None):
            raise ModelError("give exactly one of agent_rewards / joint_rewards")
        if self.agent_rewards is not None:
            tabs = []
            for j, r in enumerate(self.agent_rewards):
                r = np.asarray(r, dtype=float)
                want = (self.agent_states[j], self.agent_actions[j], self.agent_states[j])
                if r.shape != want:
                    raise ModelError(f"agent {j} reward table has shape {r.shape}, expected {want}")
                r.setflags(write=False)
                tabs.append(r)
            object.__setattr__(self, "agent_rewards", tuple(tabs))
        else:
            object.__setattr__(self, "joint_rewards", _as_csr(self.joint_rewards, (S * A, S)))
        if not 0.0 < self.discount < 1.0:
            raise ModelError(f"discount must lie in (0, 1), got {self.discount}")
        if self.broadcast_penalty > 0:
            raise ModelError("broadcast penalty must be <= 0")

    # -- cardinalities -------------------------------------------------
    @property
    def num_agents(self) -> int:
        return len(self.agent_states)

    @property
    def state_dims(self) -> tuple[int, ...]:
        return (self.shared_states,) + self.agent_states

    @property
    def num_states(self) -> int:
        return int(np.prod(self.state_dims))

    @property
    def num_actions(self) -> int:
        return int(np.prod(self.agent_actions))

    @property
    def num_observations(self) -> int:
        return int(np.prod(self.agent_observations))

    # -- index tables ---------------------------------------------------
    @cached_property
    def state_table(self) -> np.ndarray:
        """(S, J+1) components of every joint state; column 0 is shared."""
        t = np.stack(np.unravel_index(np.arange(self.num_states), self.state_dims), axis=1)
        t.setflags(write=False)
        return t

    @cached_property
    def action_table(self) -> np.ndarray:
        t = np.stack(np.unravel_index(np.arange(self.num_actions), self.agent_actions), axis=1)
        t.setflags(write=False)
        return t

    @cached_property
    def observation_table(self) -> np.ndarray:
        t = np.stack(np.unravel_index(np.arange(self.num_observations), self.agent_observations), axis=1)
        t.setflags(write=False)
        return t

    def state_index(self, agent_states: Sequence[int], shared: int = 0) -> int:
        return int(np.ravel_multi_index((shared, *agent_states), self.state_dims))

    def agent_components(self, s: int) -> tuple[int, ...]:
        return tuple(int(x) for x in self.state_table[s, 1:])

    def action_index(self, actions: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(actions), self.agent_actions))

    def observation_index(self, obs: Sequence[int]) -> int:
        return int(np.ravel_multi_index(tuple(obs), self.agent_observations))

    # -- dense views for small models ----------------------------------
    def _check_dense(self, size):
        if size > 5e7:
            raise ModelError(f"dense view of {size} entries refused; model too large")

    @cached_property
    def P(self) -> np.ndarray:
        """Dense transition tensor (S, A, S)."""
        S, A = self.num_states, self.num_actions
        self._check_dense(S * A * S)
        out = self.transition.toarray().reshape(S, A, S)
        out.setflags(write=False)
        return out

    @cached_property
    def eta(self) -> np.ndarray:
        """Dense observation tensor (S', A_prev, O)."""
        S, A, O = self.num_states, self.num_actions, self.num_observations
        self._check_dense(S * A * O)
        out = self.observation.toarray().reshape(S, A, O)
        out.setflags(write=False)
        return out

    @cached_property
    def action_independent_observations(self) -> bool:
        e = self.eta
        return bool(np.allclose(e, e[:, :1, :], atol=PROB_ATOL, rtol=0))

    @cached_property
    def obs_matrix(self) -> np.ndarray:
        """eta(o | s') as a dense (S, O) matrix; requires action independence."""
        if not self.action_independent_observations:
            raise ModelError("observation kernel depends on the previous action; "
                             "common-belief filtering needs eta(o | s) only")
        out = np.ascontiguousarray(self.eta[:, 0, :])
        out.setflags(write=False)
        return out

    @cached_property
    def R(self) -> np.ndarray:
        """Dense environment reward R(s, a, s') without broadcast costs."""
        S, A = self.num_states, self.num_actions
        self._check_dense(S * A * S)
        if self.joint_rewards is not None:
            out = self.joint_rewards.toarray().reshape(S, A, S)
        else:
            st, at = self.state_table, self.action_table
            out = np.zeros((S, A, S))
            for j, r in enumerate(self.agent_rewards):
                sj, aj = st[:, j + 1], at[:, j]
                out += r[sj[:, None, None], aj[None, :, None], sj[None, None, :]]
        out.setflags(write=False)
        return out

    @cached_property
    def expected_reward(self) -> np.ndarray:
        """r^a(s) = sum_s' p^a(s, s') R(s, a, s'), shape (S, A)."""
        S, A = self.num_states, self.num_actions
        if self.joint_rewards is not None:
            prod = self.transition.multiply(self.joint_rewards)
            out = np.asarray(prod.sum(axis=1)).reshape(S, A)
        else:
            out = np.einsum("sat,sat->sa", self.P, self.R)
        out.setflags(write=False)
        return out

    def env_reward(self, s: int, a: int, s_next: int) -> float:
        if self.joint_rewards is not None:
            return float(self.joint_rewards[s * self.num_actions + a, s_next])
        sc = self.state_table
        ac = self.action_table[a]
        return float(sum(r[sc[s, j + 1], ac[j], sc[s_next, j + 1]]
                         for j, r in enumerate(self.agent_rewards)))

    # -- constructors ---------------------------------------------------
    @classmethod
    def from_factored(cls, agent_transitions, agent_obs_kernels, agent_rewards, discount,
                      initial=None, broadcast_penalty=0.0, **kw) -> "DecPomdpModel":
        """Product model of independent agents with per-agent kernels.

        ``agent_transitions[j]`` is (S^j, A^j, S^j); ``agent_obs_kernels[j]``
        is (S^j, A^j, O^j) giving eta^j(o^j | s^j, a^j_prev).  ``initial`` is a
        joint vector or a list of per-agent marginals (default uniform).
        """
        trans = [np.asarray(p, dtype=float) for p in agent_transitions]
        obs = [np.asarray(o, dtype=float) for o in agent_obs_kernels]
        P, E = trans[0], obs[0]
        for pj, oj in zip(trans[1:], obs[1:]):
            s1, a1, _ = P.shape
            s2, a2, _ = pj.shape
            P = np.einsum("iat,jbu->ijabtu", P, pj).reshape(s1 * s2, a1 * a2, s1 * s2)
            e1, e2 = E.shape[2], oj.shape[2]
            E = np.einsum("iao,jbp->ijabop", E, oj).reshape(s1 * s2, a1 * a2, e1 * e2)
        if initial is None:
            initial = [np.full(p.shape[0], 1.0 / p.shape[0]) for p in trans]
        if isinstance(initial, (list, tuple)):
            init = np.ones(1)
            for m in initial:
                init = np.multiply.outer(init, np.asarray(m, dtype=float)).ravel()
        else:
            init = np.asarray(initial, dtype=float)
        S, A = P.shape[0], P.shape[1]
        return cls(
            agent_states=tuple(p.shape[0] for p in trans),
            agent_actions=tuple(p.shape[1] for p in trans),
            agent_observations=tuple(o.shape[2] for o in obs),
            transition=P.reshape(S * A, S),
            observation=E.reshape(S * A, -1),
            discount=discount,
            initial=init,
            broadcast_penalty=broadcast_penalty,
            agent_rewards=tuple(np.asarray(r, dtype=float) for r in agent_rewards),
            factored=True,
            agent_transitions=tuple(trans),
            agent_obs_kernels=tuple(obs),
            **kw,
        )

    @classmethod
    def from_dense(cls, agent_states, agent_actions, agent_observations, P, eta, discount,
                   initial, rewards, broadcast_penalty=0.0, **kw) -> "DecPomdpModel":
        """Build from dense joint arrays.

        ``rewards`` is either a joint (S, A, S) array or a list of per-agent
        (S^j, A^j, S^j) tables.  ``eta`` may be (S, O) (action independent)
        or (S, A, O).
        """
        P = np.asarray(P, dtype=float)
        S, A = P.shape[0], P.shape[1]
        eta = np.asarray(eta, dtype=float)
        if eta.ndim == 2:
            eta = np.repeat(eta[:, None, :], A, axis=1)
        if isinstance(rewards, (list, tuple)):
            kw["agent_rewards"] = tuple(rewards)
        else:
            kw["joint_rewards"] = np.asarray(rewards, dtype=float).reshape(S * A, S)
        return cls(agent_states=agent_states, agent_actions=agent_actions,
                   agent_observations=agent_observations, transition=P.reshape(S * A, S),
                   observation=eta.reshape(S * A, -1), discount=discount, initial=initial,
                   broadcast_penalty=broadcast_penalty, **kw)


# ---------------------------------------------------------------------------
# validation, reward, sampling


def validate_model(model: DecPomdpModel) -> list[str]:
    """Return a list of violated invariants; empty when the model is valid."""
    out = []
    A = model.num_actions
    for name, kern in (("transition", model.transition), ("observation", model.observation)):
        if kern.nnz and kern.data.min() < 0:
            rows = np.unique(np.repeat(np.arange(kern.shape[0]), np.diff(kern.indptr))[kern.data < 0])
            for row in rows[:10]:
                out.append(f"{name} row (s={row // A}, a={row % A}) has a negative entry")
        sums = np.asarray(kern.sum(axis=1)).ravel()
        for row in np.flatnonzero(np.abs(sums - 1.0) > PROB_ATOL)[:50]:
            out.append(f"{name} row (s={row // A}, a={row % A}) sums to {sums[row]!r}, not 1")
    init = model.initial
    if init.min() < 0 or abs(init.sum() - 1.0) > PROB_ATOL:
        out.append(f"initial distribution sums to {init.sum()!r} or has negative mass")
    if model.agent_rewards is not None:
        vals = np.concatenate([r.ravel() for r in model.agent_rewards])
        bound = float(np.abs(np.array([np.abs(r).max() for r in model.agent_rewards])).sum())
    else:
        vals = model.joint_rewards.data
        bound = float(np.abs(vals).max()) if vals.size else 0.0
    if not np.all(np.isfinite(vals)):
        out.append("reward table has non-finite entries")
    elif bound + abs(model.broadcast_penalty) * model.num_agents > model.reward_bound:
        out.append(f"per-step reward magnitude {bound} exceeds declared bound {model.reward_bound}")
    if model.factored:
        out.extend(_factored_violations(model))
    return out


def _factored_violations(model: DecPomdpModel) -> list[str]:
    if model.shared_states != 1 or model.agent_transitions is None or model.agent_obs_kernels is None:
        return ["model flagged factored but has a shared component or lacks per-agent kernels"]
    out = []
    rebuilt = DecPomdpModel.from_factored(model.agent_transitions, model.agent_obs_kernels,
                                          [np.zeros((n, a, n)) for n, a in
                                           zip(model.agent_states, model.agent_actions)],
                                          model.discount, initial=model.initial)
    for name, mine, ref in (("transition", model.transition, rebuilt.transition),
                            ("observation", model.observation, rebuilt.observation)):
        diff = abs(mine - ref)
        if diff.nnz and diff.max() > PROB_ATOL:
            row = int(np.argmax(np.asarray(diff.max(axis=1).todense()).ravel()))
            out.append(f"{name} row (s={row // model.num_actions}, a={row % model.num_actions}) "
                       f"is not the product of per-agent kernels")
    return out


def joint_reward(model: DecPomdpModel, s: int, a: int, s_next: int, br: Sequence[int]) -> float:
    """Environment reward plus the broadcast penalty for every broadcasting agent."""
    S, A = model.num_states, model.num_actions
    if not (0 <= s < S and 0 <= s_next < S and 0 <= a < A):
        raise IndexError(f"(s={s}, a={a}, s'={s_next}) out of range")
    if len(br) != model.num_agents:
        raise IndexError("broadcast vector must have one entry per agent")
    return model.env_reward(s, a, s_next) + model.broadcast_penalty * float(sum(br))


def categorical(probs: np.ndarray, rng: np.random.Generator) -> int:
    """Inverse-CDF draw consuming exactly one uniform."""
    c = np.cumsum(probs)
    i = int(np.searchsorted(c, rng.random() * c[-1], side="right"))
    return min(i, len(probs) - 1)


def _sparse_draw(kern: sp.csr_matrix, row: int, rng: np.random.Generator) -> int:
    lo, hi = kern.indptr[row], kern.indptr[row + 1]
    return int(kern.indices[lo + categorical(kern.data[lo:hi], rng)])


def sample_transition(model: DecPomdpModel, s: int, a: int, rng: np.random.Generator) -> int:
    return _sparse_draw(model.transition, s * model.num_actions + a, rng)


def sample_observation(model: DecPomdpModel, s: int, a_prev: int, rng: np.random.Generator) -> int:
    return _sparse_draw(model.observation, s * model.num_actions + a_prev, rng)


# ---------------------------------------------------------------------------
# options


def softmax(theta: np.ndarray, axis: int = -1) -> np.ndarray:
    z = theta - theta.max(axis=axis, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=axis, keepdims=True)


def logistic(x):
    return 1.0 / (1.0 + np.exp(-np.asarray(x, dtype=float)))


def clamp_beta(beta):
    return np.clip(beta, BETA_MIN, 1.0)


@dataclass(frozen=True, eq=False)
class MarkovOption:
    """One agent's option: softmax actions, logistic broadcast and termination."""

    id: int
    theta: np.ndarray
    epsilon_params: np.ndarray
    phi: np.ndarray
    initiation_set: frozenset | None = None

    def action_probs(self, s=None) -> np.ndarray:
        th = self.theta if s is None else self.theta[s]
        return softmax(th)

    def broadcast_prob(self, s=None):
        return logistic(self.epsilon_params if s is None else self.epsilon_params[s])

    def termination(self, s=None):
        return clamp_beta(logistic(self.phi if s is None else self.phi[s]))

    def can_initiate(self, s: int) -> bool:
        return self.initiation_set is None or s in self.initiation_set


@dataclass
class OptionPool:
    """Per-agent option parameters, stacked per agent as (K_j, S^j, ...) arrays.

    The arrays are owned by the pool and updated in place by the learner.
    """

    theta: list[np.ndarray]
    eps: list[np.ndarray]
    phi: list[np.ndarray]
    initiation: list[np.ndarray] | None = None

    @classmethod
    def uniform(cls, agent_states: Sequence[int], agent_actions: Sequence[int],
                num_options: int | Sequence[int], theta=0.0, eps=0.0, phi=0.0) -> "OptionPool":
        if isinstance(num_options, int):
            num_options = [num_options] * len(agent_states)
        return cls(
            theta=[np.full((k, n, a), float(theta)) for k, n, a in zip(num_options, agent_states, agent_actions)],
            eps=[np.full((k, n), float(eps)) for k, n in zip(num_options, agent_states)],
            phi=[np.full((k, n), float(phi)) for k, n in zip(num_options, agent_states)],
        )

    @classmethod
    def for_model(cls, model: DecPomdpModel, num_options=1, **kw) -> "OptionPool":
        return cls.uniform(model.agent_states, model.agent_actions, num_options, **kw)

    @classmethod
    def primitive(cls, model: DecPomdpModel) -> "OptionPool":
        """One deterministic one-step option per primitive action."""
        th, ep, ph = [], [], []
        for n, a in zip(model.agent_states, model.agent_actions):
            t = np.full((a, n, a), -np.inf)
            for k in range(a):
                t[k, :, k] = 0.0
            th.append(t)
            ep.append(np.zeros((a, n)))
            ph.append(np.full((a, n), np.inf))
        return cls(th, ep, ph)

    def copy(self) -> "OptionPool":
        return OptionPool([t.copy() for t in self.theta], [e.copy() for e in self.eps],
                          [p.copy() for p in self.phi],
                          None if self.initiation is None else [m.copy() for m in self.initiation])

    @property
    def num_agents(self) -> int:
        return len(self.theta)

    @property
    def sizes(self) -> tuple[int, ...]:
        return tuple(t.shape[0] for t in self.theta)

    @property
    def num_joint(self) -> int:
        return int(np.prod(self.sizes))

    def option(self, j: int, k: int) -> MarkovOption:
        init = None
        if self.initiation is not None:
            init = frozenset(np.flatnonzero(self.initiation[j][k]).tolist())
        return MarkovOption(k, self.theta[j][k], self.eps[j][k], self.phi[j][k], init)

    def action_probs(self, j: int) -> np.ndarray:
        return softmax(self.theta[j])

    def broadcast_probs(self, j: int) -> np.ndarray:
        return logistic(self.eps[j])

    def termination_probs(self, j: int) -> np.ndarray:
        return clamp_beta(logistic(self.phi[j]))

    def available(self, j: int) -> np.ndarray:
        """(K_j, S^j) boolean initiation mask."""
        if self.initiation is None:
            return np.ones(self.eps[j].shape, dtype=bool)
        return self.initiation[j]

    def joint(self, components: Sequence[int]) -> "JointOption":
        return JointOption(tuple(int(c) for c in components), self.sizes)

    def joint_from_index(self, index: int) -> "JointOption":
        return JointOption(tuple(int(c) for c in np.unravel_index(index, self.sizes)), self.sizes)

    def all_joint(self) -> list["JointOption"]:
        return [self.joint_from_index(i) for i in range(self.num_joint)]


@dataclass(frozen=True)
class JointOption:
    components: tuple[int, ...]
    sizes: tuple[int, ...]

    def __post_init__(self):
        if len(self.components) != len(self.sizes):
            raise ValueError("one option id per agent required")
        for c, k in zip(self.components, self.sizes):
            if not 0 <= c < k:
                raise ValueError(f"option id {c} outside pool of size {k}")

    @property
    def index(self) -> int:
        return int(np.ravel_multi_index(self.components, self.sizes))

    def replace(self, j: int, k: int) -> "JointOption":
        c = list(self.components)
        c[j] = k
        return JointOption(tuple(c), self.sizes)

    def reselections(self, agents: Sequence[int]) -> Iterator["JointOption"]:
        """Omega(T): joint options varying only the components of agents in T.

        Yields in lexicographic order of the varied components.
        """
        agents = sorted(agents)
        for combo in itertools.product(*(range(self.sizes[j]) for j in agents)):
            c = list(self.components)
            for j, k in zip(agents, combo):
                c[j] = k
            yield JointOption(tuple(c), self.sizes)

    def __iter__(self):
        return iter(self.components)


def nonempty_subsets(n: int) -> list[tuple[int, ...]]:
    """Pow(J) without the empty set, ordered by (size, agent indices)."""
    return [c for r in range(1, n + 1) for c in itertools.combinations(range(n), r)]


@dataclass
class TransitionRecord:
    k: int
    state: object
    option: tuple[int, ...]
    action: tuple[int, ...]
    broadcast: tuple[int, ...]
    observation: tuple
    common_observation: tuple
    reward: float
    terminations: tuple[bool, ...]
    done: bool

    def __post_init__(self):
        for br, slot in zip(self.broadcast, self.common_observation):
            if (slot is not None) != bool(br):
                raise ValueError("common observation slot present iff the agent broadcast")


def common_observation(obs: Sequence, br: Sequence[int]) -> tuple:
    return tuple(o if b else None for o, b in zip(obs, br))


# ---------------------------------------------------------------------------
# joint quantities for small dense models


def joint_action_policy(model: DecPomdpModel, pool: OptionPool) -> np.ndarray:
    """pi^omega(a | s) = prod_j pi^{omega^j}(a^j | s^j), shape (Omega, S, A)."""
    st, at = model.state_table, model.action_table
    out = np.ones((pool.num_joint, model.num_states, model.num_actions))
    comps = np.array([jo.components for jo in pool.all_joint()], dtype=int).reshape(pool.num_joint, -1)
    for j in range(model.num_agents):
        pj = pool.action_probs(j)  # (K, S^j, A^j)
        out *= pj[comps[:, j][:, None, None], st[None, :, j + 1, None], at[None, None, :, j]]
    return out


def joint_broadcast_probs(model: DecPomdpModel, pool: OptionPool, mode: str) -> np.ndarray:
    """Per-agent broadcast probability at every joint state, shape (Omega, S, J)."""
    if mode not in BROADCAST_MODES:
        raise ValueError(f"unknown broadcast mode {mode!r}")
    shape = (pool.num_joint, model.num_states, model.num_agents)
    if mode == "always":
        return np.ones(shape)
    if mode == "never":
        return np.zeros(shape)
    st = model.state_table
    comps = np.array([jo.components for jo in pool.all_joint()], dtype=int).reshape(pool.num_joint, -1)
    out = np.empty(shape)
    for j in range(model.num_agents):
        out[:, :, j] = pool.broadcast_probs(j)[comps[:, j][:, None], st[None, :, j + 1]]
    return out


def joint_termination_probs(model: DecPomdpModel, pool: OptionPool) -> np.ndarray:
    """beta^{omega^j}(s^j) at every joint state, shape (Omega, S, J)."""
    st = model.state_table
    comps = np.array([jo.components for jo in pool.all_joint()], dtype=int).reshape(pool.num_joint, -1)
    out = np.empty((pool.num_joint, model.num_states, model.num_agents))
    for j in range(model.num_agents):
        out[:, :, j] = pool.termination_probs(j)[comps[:, j][:, None], st[None, :, j + 1]]
    return out


def joint_beta_none(model: DecPomdpModel, pool: OptionPool) -> np.ndarray:
    """Probability that no component terminates, shape (Omega, S)."""
    return np.prod(1.0 - joint_termination_probs(model, pool), axis=2)


def joint_availability(model: DecPomdpModel, pool: OptionPool) -> np.ndarray:
    """Whether every component may initiate at s, shape (Omega, S)."""
    st = model.state_table
    comps = np.array([jo.components for jo in pool.all_joint()], dtype=int).reshape(pool.num_joint, -1)
    out = np.ones((pool.num_joint, model.num_states), dtype=bool)
    for j in range(model.num_agents):
        out &= pool.available(j)[comps[:, j][:, None], st[None, :, j + 1]]
    return out


# ---------------------------------------------------------------------------
# serialization


def _triples(kern: sp.csr_matrix, A: int) -> list[list]:
    coo = kern.tocoo()
    order = np.lexsort((coo.col, coo.row))
    return [[int(r // A), int(r % A), int(c), float(v)]
            for r, c, v in zip(coo.row[order], coo.col[order], coo.data[order])]


def model_to_dict(model: DecPomdpModel) -> dict:
    A = model.num_actions
    d = {
        "name": model.name,
        "agent_states": list(model.agent_states),
        "agent_actions": list(model.agent_actions),
        "agent_observations": list(model.agent_observations),
        "shared_states": model.shared_states,
        "discount": float(model.discount),
        "broadcast_penalty": float(model.broadcast_penalty),
        "reward_bound": float(model.reward_bound),
        "factored": bool(model.factored),
        "initial": [[int(i), float(model.initial[i])] for i in np.flatnonzero(model.initial)],
        "transitions": _triples(model.transition, A),
        "observations": _triples(model.observation, A),
    }
    if model.agent_rewards is not None:
        d["rewards"] = {"kind": "per_agent", "tables": [
            [[int(s), int(a), int(t), float(r[s, a, t])] for s, a, t in zip(*np.nonzero(r))]
            for r in model.agent_rewards]}
    else:
        d["rewards"] = {"kind": "joint", "entries": _triples(model.joint_rewards, A)}
    if model.factored:
        d["agent_transitions"] = [[[int(s), int(a), int(t), float(p[s, a, t])] for s, a, t in zip(*np.nonzero(p))]
                                  for p in model.agent_transitions]
        d["agent_obs_kernels"] = [[[int(s), int(a), int(o), float(e[s, a, o])] for s, a, o in zip(*np.nonzero(e))]
                                  for e in model.agent_obs_kernels]
    return d


def _from_triples(entries, rows_a, A, shape) -> sp.csr_matrix:
    if not entries:
        return sp.csr_matrix(shape)
    arr = np.array(entries, dtype=float)
    rows = arr[:, 0].astype(np.int64) * A + arr[:, 1].astype(np.int64)
    return sp.csr_matrix((arr[:, 3], (rows, arr[:, 2].astype(np.int64))), shape=shape)


def _dense_from_entries(entries, shape) -> np.ndarray:
    out = np.zeros(shape)
    for s, a, t, v in entries:
        out[int(s), int(a), int(t)] = v
    return out


def model_from_dict(d: dict) -> DecPomdpModel:
    ns, na, no = d["agent_states"], d["agent_actions"], d["agent_observations"]
    S = int(d.get("shared_states", 1) * np.prod(ns))
    A, O = int(np.prod(na)), int(np.prod(no))
    init = np.zeros(S)
    for i, p in d["initial"]:
        init[int(i)] = p
    kw = {}
    rw = d["rewards"]
    if rw["kind"] == "per_agent":
        kw["agent_rewards"] = tuple(_dense_from_entries(t, (n, a, n)) for t, n, a in zip(rw["tables"], ns, na))
    else:
        kw["joint_rewards"] = _from_triples(rw["entries"], None, A, (S * A, S))
    if d.get("factored"):
        kw["agent_transitions"] = tuple(_dense_from_entries(t, (n, a, n))
                                        for t, n, a in zip(d["agent_transitions"], ns, na))
        kw["agent_obs_kernels"] = tuple(_dense_from_entries(t, (n, a, o))
                                        for t, n, a, o in zip(d["agent_obs_kernels"], ns, na, no))
    return DecPomdpModel(
        agent_states=tuple(ns), agent_actions=tuple(na), agent_observations=tuple(no),
        transition=_from_triples(d["transitions"], None, A, (S * A, S)),
        observation=_from_triples(d["observations"], None, A, (S * A, O)),
        discount=d["discount"], initial=init, broadcast_penalty=d.get("broadcast_penalty", 0.0),
        shared_states=d.get("shared_states", 1), reward_bound=d.get("reward_bound", 1e6),
        factored=bool(d.get("factored", False)), name=d.get("name", "model"), **kw)


def save_model(model: DecPomdpModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=1)
        fh.write("\n")


def load_model(path) -> DecPomdpModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))


# ---------------------------------------------------------------------------
# simulation adapter used by the learner


class ModelEnv:
    """Episode simulator over a tabular model.

    Agents are treated as locally fully observable: what an agent knows
    privately, and what it broadcasts, is its own state component.
    """

    def __init__(self, model: DecPomdpModel, max_steps: int = 100, terminal_states=()):
        self.model = model
        self.max_steps = max_steps
        self.terminal = np.zeros(model.num_states, dtype=bool)
        self.terminal[list(terminal_states)] = True

    @property
    def num_agents(self):
        return self.model.num_agents

    @property
    def agent_states(self):
        return self.model.agent_states

    @property
    def agent_actions(self):
        return self.model.agent_actions

    @property
    def shared_states(self):
        return self.model.shared_states

    def reset(self, rng: np.random.Generator) -> int:
        return categorical(self.model.initial, rng)

    def step(self, s: int, actions: Sequence[int], rng: np.random.Generator):
        a = self.model.action_index(actions)
        s2 = sample_transition(self.model, s, a, rng)
        return s2, self.model.env_reward(s, a, s2), bool(self.terminal[s2])

    def private(self, s: int) -> tuple[int, ...]:
        return tuple(int(x) for x in self.model.state_table[s, 1:])

    def observe(self, s: int, rng: np.random.Generator) -> tuple[int, ...]:
        """Per-agent observations drawn from eta at s (previous action ignored)."""
        o = sample_observation(self.model, s, 0, rng)
        return tuple(int(x) for x in self.model.observation_table[o])

    def key(self, s: int) -> int:
        return s

    def shared(self, s: int) -> int:
        return int(self.model.state_table[s, 0])

    def joint_key(self, shared: int, agents: Sequence[int]) -> int:
        return self.model.state_index(agents, shared)

    @property
    def num_joint_states(self) -> int:
        return self.model.num_states

    def reward_range(self) -> float:
        return float(self.model.reward_bound)
