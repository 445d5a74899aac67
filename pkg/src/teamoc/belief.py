"""Common-information belief filtering with broadcasting.

Timing convention used throughout the package: an agent's broadcast decision
is taken on arrival at a state, using the option that was running on the
step that led there.  The common belief that drives option choice is the
posterior after that broadcast, so ``filter_step = posterior_update o predict``.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

from .core import (BROADCAST_MODES, PROB_ATOL, DecPomdpModel, JointOption, OptionPool,
                   categorical, clamp_beta, logistic, softmax)


class BeliefInconsistencyError(RuntimeError):
    """Raised when an observation has zero probability under the prior."""


# Every belief built in the process is checked here; the test suite reads
# the counters to confirm that normalization held everywhere.
AUDIT = {"count": 0, "max_deviation": 0.0}


def audit_probs(p: np.ndarray, what: str):
    dev = abs(float(p.sum()) - 1.0)
    if dev > PROB_ATOL or (p.size and p.min() < 0):
        raise ValueError(f"{what} is not a probability vector (sum deviation {dev:.3e})")
    AUDIT["count"] += 1
    if dev > AUDIT["max_deviation"]:
        AUDIT["max_deviation"] = dev


def _normalize(w: np.ndarray) -> np.ndarray:
    z = w.sum()
    if not z > 0:
        raise BeliefInconsistencyError("posterior mass is zero; observation impossible under the prior")
    out = w / z
    # a second pass pulls the sum error down to a few ulps
    return out / out.sum()


@dataclass(frozen=True, eq=False)
class CommonBelief:
    probs: np.ndarray
    t: int = 0

    def __post_init__(self):
        p = np.asarray(self.probs, dtype=float)
        p.setflags(write=False)
        object.__setattr__(self, "probs", p)
        audit_probs(p, "common belief")

    @classmethod
    def dirac(cls, n: int, s: int, t: int = 0) -> "CommonBelief":
        p = np.zeros(n)
        p[s] = 1.0
        return cls(p, t)

    @classmethod
    def uniform(cls, n: int, t: int = 0) -> "CommonBelief":
        return cls(np.full(n, 1.0 / n), t)

    @property
    def support(self) -> np.ndarray:
        return np.flatnonzero(self.probs)

    def is_dirac(self) -> bool:
        return self.support.size == 1

    def __len__(self):
        return self.probs.size


@dataclass(frozen=True, eq=False)
class FactoredBelief:
    marginals: tuple
    t: int = 0

    def __post_init__(self):
        ms = []
        for m in self.marginals:
            m = np.asarray(m, dtype=float)
            m.setflags(write=False)
            audit_probs(m, "belief marginal")
            ms.append(m)
        object.__setattr__(self, "marginals", tuple(ms))

    def joint(self) -> CommonBelief:
        p = np.ones(1)
        for m in self.marginals:
            p = np.multiply.outer(p, m).ravel()
        return CommonBelief(p / p.sum(), self.t)


@dataclass
class CommonInfoLog:
    """Append-only record of (common observation, joint option) pairs."""

    _entries: list = field(default_factory=list)

    def append(self, common_obs: tuple, omega) -> None:
        if isinstance(omega, JointOption):
            omega = omega.components
        self._entries.append((tuple(common_obs), tuple(omega)))

    @property
    def entries(self) -> tuple:
        return tuple(self._entries)

    def prefix(self, t: int) -> tuple:
        return tuple(self._entries[:t])

    def __len__(self):
        return len(self._entries)


# ---------------------------------------------------------------------------
# per-option joint quantities


def _components(omega) -> tuple[int, ...]:
    return omega.components if isinstance(omega, JointOption) else tuple(int(c) for c in omega)


def option_action_policy(model: DecPomdpModel, pool: OptionPool, omega) -> np.ndarray:
    """Joint intra-option policy pi^omega(a | s) as an (S, A) array."""
    comps = _components(omega)
    st, at = model.state_table, model.action_table
    out = np.ones((model.num_states, model.num_actions))
    for j, k in enumerate(comps):
        pj = softmax(pool.theta[j][k])
        out *= pj[st[:, j + 1][:, None], at[None, :, j]]
    return out


def option_broadcast_probs(model: DecPomdpModel, pool: OptionPool, omega, mode: str) -> np.ndarray:
    """Probability that each agent broadcasts at each joint state, (S, J)."""
    if mode not in BROADCAST_MODES:
        raise ValueError(f"unknown broadcast mode {mode!r}")
    S, J = model.num_states, model.num_agents
    if mode == "always":
        return np.ones((S, J))
    if mode == "never":
        return np.zeros((S, J))
    comps = _components(omega)
    st = model.state_table
    return np.stack([logistic(pool.eps[j][k])[st[:, j + 1]] for j, k in enumerate(comps)], axis=1)


def option_termination_probs(model: DecPomdpModel, pool: OptionPool, omega) -> np.ndarray:
    comps = _components(omega)
    st = model.state_table
    return np.stack([clamp_beta(logistic(pool.phi[j][k]))[st[:, j + 1]] for j, k in enumerate(comps)], axis=1)


def observation_slot_likelihood(model: DecPomdpModel, common_obs: Sequence) -> np.ndarray:
    """P(observed slots of o | s) for every joint state s, marginalizing silent slots."""
    eta = model.obs_matrix
    present = [j for j, o in enumerate(common_obs) if o is not None]
    if not present:
        return np.ones(model.num_states)
    ot = model.observation_table
    mask = np.ones(model.num_observations, dtype=bool)
    for j in present:
        mask &= ot[:, j] == int(common_obs[j])
    return eta[:, mask].sum(axis=1)


def common_obs_likelihood(model: DecPomdpModel, pool: OptionPool, omega, common_obs: Sequence,
                          mode: str, silence_informative: bool = True) -> np.ndarray:
    """Likelihood of a common observation at every joint state, shape (S,)."""
    if len(common_obs) != model.num_agents:
        raise ValueError("common observation needs one slot per agent")
    bp = option_broadcast_probs(model, pool, omega, mode)
    lik = observation_slot_likelihood(model, common_obs)
    for j, o in enumerate(common_obs):
        if o is not None:
            lik = lik * bp[:, j]
        elif silence_informative or mode == "always":
            lik = lik * (1.0 - bp[:, j])
    return lik


def posterior_update(b: CommonBelief, common_obs: Sequence, omega, model: DecPomdpModel,
                     pool: OptionPool, mode: str = "intermittent",
                     silence_informative: bool = True) -> CommonBelief:
    """Bayes update of b on a common observation sent under omega's broadcast policy."""
    lik = common_obs_likelihood(model, pool, omega, common_obs, mode, silence_informative)
    return CommonBelief(_normalize(b.probs * lik), b.t)


def predict(b_post: CommonBelief, policy: np.ndarray, model: DecPomdpModel) -> CommonBelief:
    """One-step prediction b'(s') = sum_s b(s) sum_a pi(a|s) p^a(s, s')."""
    w = (b_post.probs[:, None] * policy).ravel()
    nxt = model.transition.T @ w
    return CommonBelief(_normalize(np.asarray(nxt).ravel()), b_post.t + 1)


def observation_likelihood(b: CommonBelief, omega, common_obs: Sequence, model: DecPomdpModel,
                           pool: OptionPool, mode: str = "intermittent") -> float:
    """P(common_obs | b, omega) with silence weighted by its true probability."""
    lik = common_obs_likelihood(model, pool, omega, common_obs, mode, silence_informative=True)
    return float(b.probs @ lik)


def all_common_observations(model: DecPomdpModel, mode: str = "intermittent"):
    """Every common observation possible under a broadcast mode."""
    if mode == "always":
        slots = [range(n) for n in model.agent_observations]
    elif mode == "never":
        slots = [[None] for _ in model.agent_observations]
    else:
        slots = [[None, *range(n)] for n in model.agent_observations]
    return [tuple(c) for c in itertools.product(*slots)]


def filter_step(b: CommonBelief, omega, common_obs: Sequence, model: DecPomdpModel,
                pool: OptionPool, mode: str = "intermittent",
                silence_informative: bool = True) -> CommonBelief:
    pred = predict(b, option_action_policy(model, pool, omega), model)
    return posterior_update(pred, common_obs, omega, model, pool, mode, silence_informative)


def condition_on_terminations(b: CommonBelief, omega, terminated: Sequence[int],
                              model: DecPomdpModel, pool: OptionPool) -> CommonBelief:
    """Condition on which agents' options terminated (public via reselection)."""
    beta = option_termination_probs(model, pool, omega)
    w = b.probs.copy()
    term = set(terminated)
    for j in range(model.num_agents):
        w *= beta[:, j] if j in term else 1.0 - beta[:, j]
    return CommonBelief(_normalize(w), b.t)


# ---------------------------------------------------------------------------
# factored filter


def factored_update(fb: FactoredBelief, common_obs: Sequence, omega, model: DecPomdpModel,
                    pool: OptionPool, mode: str = "intermittent",
                    silence_informative: bool = True) -> FactoredBelief:
    """Per-agent prediction followed by the per-agent posterior on that agent's slot."""
    if not model.factored or model.agent_transitions is None:
        raise ValueError("factored_update needs a model flagged factored with per-agent kernels")
    comps = _components(omega)
    out = []
    for j, k in enumerate(comps):
        pol = softmax(pool.theta[j][k])                      # (S^j, A^j)
        kern = model.agent_transitions[j]                      # (S^j, A^j, S^j)
        pred = np.einsum("s,sa,sat->t", fb.marginals[j], pol, kern)
        eta_j = model.agent_obs_kernels[j]
        if not np.allclose(eta_j, eta_j[:, :1, :], atol=PROB_ATOL, rtol=0):
            raise ValueError(f"agent {j} observation kernel depends on the previous action")
        if mode == "always":
            bp = np.ones(pred.size)
        elif mode == "never":
            bp = np.zeros(pred.size)
        else:
            bp = logistic(pool.eps[j][k])
        o = common_obs[j]
        if o is not None:
            lik = eta_j[:, 0, int(o)] * bp
        elif silence_informative or mode == "always":
            lik = 1.0 - bp
        else:
            lik = np.ones(pred.size)
        out.append(_normalize(pred * lik))
    return FactoredBelief(tuple(out), fb.t + 1)


def sample_state(b, rng: np.random.Generator, model: DecPomdpModel | None = None) -> int:
    """Draw a joint state index; factored beliefs draw each agent independently."""
    if isinstance(b, FactoredBelief):
        comps = [categorical(m, rng) for m in b.marginals]
        if model is not None:
            return model.state_index(comps)
        return int(np.ravel_multi_index(tuple(comps), tuple(m.size for m in b.marginals)))
    return categorical(b.probs, rng)


# ---------------------------------------------------------------------------
# text dump


def dump_belief(b: CommonBelief) -> str:
    return "".join(f"{i} {b.probs[i]:.17g}\n" for i in b.support)


def load_belief(text: str, num_states: int, t: int = 0) -> CommonBelief:
    p = np.zeros(num_states)
    for line in text.splitlines():
        if line.strip():
            i, v = line.split()
            p[int(i)] = float(v)
    return CommonBelief(p, t)


# ---------------------------------------------------------------------------
# trackers used by the learner


class ExactTracker:
    """Dense common-belief filter over a tabular model."""

    def __init__(self, model: DecPomdpModel, mode: str, silence_informative: bool = True):
        self.model = model
        self.mode = mode
        self.silence_informative = silence_informative
        self.belief = None

    def reset(self, initial_common_obs=None, pool=None, omega=None):
        b = CommonBelief(self.model.initial.copy())
        if initial_common_obs is not None and any(o is not None for o in initial_common_obs):
            lik = observation_slot_likelihood(self.model, initial_common_obs)
            b = CommonBelief(_normalize(b.probs * lik))
        self.belief = b
        return b

    def update(self, pool: OptionPool, omega, common_obs):
        self.belief = filter_step(self.belief, omega, common_obs, self.model, pool, self.mode,
                                  self.silence_informative)
        return self.belief

    def condition(self, pool: OptionPool, omega, terminated):
        if terminated:
            self.belief = condition_on_terminations(self.belief, omega, terminated, self.model, pool)
        return self.belief

    def dirac_state(self):
        sup = self.belief.support
        return int(sup[0]) if sup.size == 1 else None

    def sample(self, rng):
        s = self.dirac_state()
        return s if s is not None else sample_state(self.belief, rng)


class FactoredTracker:
    """Per-agent marginal filter with a commonly known shared component.

    Each agent's marginal is propagated with its own motion kernel, which
    ignores interactions with other agents; exact for factored models and an
    approximation elsewhere.
    """

    def __init__(self, agent_kernels: Sequence[np.ndarray], mode: str, key_fn,
                 silence_informative: bool = True):
        self.kernels = [np.asarray(k, dtype=float) for k in agent_kernels]
        self.mode = mode
        self.key_fn = key_fn
        self.silence_informative = silence_informative
        self.marginals = None
        self.shared = 0

    def reset(self, shared: int, private: Sequence[int] | None, initial_marginals=None):
        self.shared = shared
        if private is not None and self.mode == "always":
            ms = []
            for k, s in zip(self.kernels, private):
                m = np.zeros(k.shape[0])
                m[s] = 1.0
                ms.append(m)
        else:
            ms = [np.asarray(m, dtype=float) for m in initial_marginals]
        self.marginals = list(FactoredBelief(tuple(ms)).marginals)

    def update(self, pool: OptionPool, omega, common_obs, shared: int):
        self.shared = shared
        comps = _components(omega)
        for j, k in enumerate(comps):
            m = self.marginals[j]
            o = common_obs[j]
            if o is not None:
                nxt = np.zeros(m.size)
                nxt[int(o)] = 1.0
            else:
                sup = np.flatnonzero(m)
                pol = softmax(pool.theta[j][k][sup])
                pred = np.einsum("s,sa,sat->t", m[sup], pol, self.kernels[j][sup])
                if self.silence_informative and self.mode == "intermittent":
                    pred = pred * (1.0 - logistic(pool.eps[j][k]))
                nxt = _normalize(pred)
            audit_probs(nxt, "belief marginal")
            self.marginals[j] = nxt

    def condition(self, pool: OptionPool, omega, terminated):
        for j in terminated:
            m = self.marginals[j]
            if np.count_nonzero(m) > 1:
                k = _components(omega)[j]
                self.marginals[j] = _normalize(m * clamp_beta(logistic(pool.phi[j][k])))
                audit_probs(self.marginals[j], "belief marginal")
        comps = _components(omega)
        for j in range(len(comps)):
            if j not in terminated and np.count_nonzero(self.marginals[j]) > 1:
                m = self.marginals[j]
                self.marginals[j] = _normalize(m * (1.0 - clamp_beta(logistic(pool.phi[j][comps[j]]))))
                audit_probs(self.marginals[j], "belief marginal")

    def dirac_state(self):
        comps = []
        for m in self.marginals:
            sup = np.flatnonzero(m)
            if sup.size != 1:
                return None
            comps.append(int(sup[0]))
        return self.key_fn(self.shared, comps)

    def sample(self, rng):
        comps = []
        for m in self.marginals:
            sup = np.flatnonzero(m)
            comps.append(int(sup[0]) if sup.size == 1 else categorical(m, rng))
        return self.key_fn(self.shared, comps)
