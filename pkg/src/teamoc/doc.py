"""Distributed option-critic learning with a centralized critic, plus tabular baselines.

Per step of :meth:`DocLearner.run_episode`:

1. joint option chosen from the critic at the belief-sampled key (first step);
2. each agent samples its action from its own option at its true private state;
3. environment step;
4. broadcast draws on arrival (all ones under cheap talk), penalty added to r;
5. common-belief update and a fresh key sampled from it;
6. critic TD update on the key (``coe_update``);
7. termination draws at the true arrived private states;
8. terminated agents reselect (greedy with the others frozen, or explore);
9. per-agent actor updates with the modified critic (``doi_update``).
"""

from __future__ import annotations

import itertools
import json
import math
import time
from dataclasses import asdict, dataclass
from typing import Sequence

import numpy as np

from .belief import ExactTracker, FactoredTracker
from .core import (BETA_MIN, BROADCAST_MODES, ModelEnv, OptionPool, TransitionRecord,
                   categorical, logistic, softmax)


class TrainingDivergedError(FloatingPointError):
    pass


@dataclass
class LearnerConfig:
    alpha_theta: float = 0.1
    alpha_eps: float = 0.1
    alpha_phi: float = 0.1
    alpha_q: float = 0.5
    discount: float = 0.95
    broadcast_penalty: float = 0.0
    exploration: str = "egreedy"        # or "softmax"
    epsilon_start: float = 0.9
    epsilon_end: float = 0.05
    epsilon_decay: float = 0.999        # multiplicative, per episode
    temperature: float = 1.0
    entropy_coef: float = 0.01
    entropy_scaled: bool = True         # multiply by the option pool size
    max_steps: int = 50
    num_options: int = 2
    termination_reg: float = 0.0
    termination_sign: str = "option-critic"   # or "literal"
    doi_every_step: bool = True
    silence_informative: bool = True
    lr_decay: float = 1.0               # multiplicative per episode on all rates
    critic_baseline: bool = False       # subtract Q(s, omega) in the action-policy update
    init_phi: float = 0.0
    init_eps: float = 0.0

    def __post_init__(self):
        for name in ("alpha_theta", "alpha_eps", "alpha_phi", "alpha_q"):
            v = getattr(self, name)
            if not 0.0 <= v <= 1.0:
                raise ValueError(f"{name}={v} must lie in [0, 1]")
        if not 0.0 < self.discount < 1.0:
            raise ValueError("discount must lie in (0, 1)")
        if self.temperature <= 0:
            raise ValueError("temperature must be > 0")
        if self.exploration not in ("egreedy", "softmax"):
            raise ValueError(f"unknown exploration {self.exploration!r}")
        if self.termination_sign not in ("option-critic", "literal"):
            raise ValueError(f"unknown termination_sign {self.termination_sign!r}")
        if self.broadcast_penalty > 0:
            raise ValueError("broadcast penalty must be <= 0")
        if self.num_options < 1 or self.max_steps < 1:
            raise ValueError("num_options and max_steps must be >= 1")

    @property
    def effective_entropy(self) -> float:
        return self.entropy_coef * (self.num_options if self.entropy_scaled else 1)

    def exploration_rate(self, episode: int) -> float:
        return max(self.epsilon_end, self.epsilon_start * self.epsilon_decay ** episode)

    def rate_scale(self, episode: int) -> float:
        return self.lr_decay ** episode


# ---------------------------------------------------------------------------
# critic


class CriticTables:
    """Lazily allocated tabular critic.

    ``q_intra[s]`` is a (joint options, joint actions) array.  Under
    intermittent broadcasting a second table keyed additionally by the joint
    broadcast vector on arrival feeds the broadcast-policy update.
    """

    def __init__(self, num_joint: int, num_actions: int, num_br: int = 0):
        self.num_joint, self.num_actions, self.num_br = num_joint, num_actions, num_br
        self._q = {}
        self._qb = {}

    def row(self, s: int) -> np.ndarray:
        r = self._q.get(s)
        if r is None:
            r = self._q[s] = np.zeros((self.num_joint, self.num_actions))
        return r

    def row_br(self, s: int) -> np.ndarray:
        r = self._qb.get(s)
        if r is None:
            r = self._qb[s] = np.zeros((self.num_joint, self.num_actions, self.num_br))
        return r

    def peek(self, s: int) -> np.ndarray:
        r = self._q.get(s)
        return np.zeros((self.num_joint, self.num_actions)) if r is None else r

    def states(self):
        return sorted(self._q)

    def snapshot(self) -> dict:
        return {s: self._q[s].copy() for s in self._q}

    def max_abs(self) -> float:
        return max((float(np.abs(r).max()) for r in self._q.values()), default=0.0)


def joint_action_probs(pool: OptionPool, privates: Sequence[int]) -> np.ndarray:
    """pi^omega(a | s) for every joint option (rows) and joint action (columns)."""
    out = None
    for j, s in enumerate(privates):
        p = softmax(pool.theta[j][:, s, :])       # (K_j, A_j)
        if out is None:
            out = p
        else:
            w, a = out.shape
            k, b = p.shape
            out = (out[:, None, :, None] * p[None, :, None, :]).reshape(w * k, a * b)
    return out


def q_values(tables: CriticTables, pool: OptionPool, key: int, privates: Sequence[int]) -> np.ndarray:
    """Q(s, omega) = sum_a pi^omega(a|s) Q_intra(s, omega, a) for all omega."""
    return (tables.peek(key) * joint_action_probs(pool, privates)).sum(axis=1)


def arrival_value(q_next: np.ndarray, omega: int, bn: float) -> float:
    """U = beta_none Q(s', omega) + (1 - beta_none) max_omega' Q(s', omega')."""
    return bn * q_next[omega] + (1.0 - bn) * q_next.max()


def coe_update(tables: CriticTables, s: int, omega: int, a: int, r: float, u_next: float | None,
               alpha_q: float, discount: float, br: int | None = None) -> float:
    """One TD step on Q_intra(s, omega, a); ``u_next`` is None on terminal arrival."""
    row = tables.row(s)
    delta = r
    if u_next is not None:
        delta += discount * u_next
    target = delta
    delta -= row[omega, a]
    row[omega, a] += alpha_q * delta
    if br is not None and tables.num_br:
        rb = tables.row_br(s)
        rb[omega, a, br] += alpha_q * (target - rb[omega, a, br])
    return delta


def modified_key(key: int, j: int, s_private_j: int, dims: Sequence[int]) -> int:
    """Joint key with agent j's component replaced; dims = (shared, agent_1, ...)."""
    comps = list(np.unravel_index(key, dims))
    comps[j + 1] = s_private_j
    return int(np.ravel_multi_index(tuple(comps), dims))


def modified_critic_value(tables: CriticTables, pool: OptionPool, s_sampled: int, j: int,
                          s_private_j: int, omega: int, dims: Sequence[int], action: int | None = None) -> float:
    """Q (or Q_intra when ``action`` is given) at the key with component j substituted."""
    k = modified_key(s_sampled, j, s_private_j, dims)
    if action is not None:
        return float(tables.peek(k)[omega, action])
    privates = np.unravel_index(k, dims)[1:]
    return float(q_values(tables, pool, k, privates)[omega])


# ---------------------------------------------------------------------------
# option choice


def choose_joint_option(q: np.ndarray, config: LearnerConfig, explore: float,
                        rng: np.random.Generator) -> int:
    """Epsilon-greedy (or softmax) choice over joint options; argmax ties to lowest index."""
    if config.exploration == "softmax":
        z = q / config.temperature
        return categorical(softmax(z), rng)
    if rng.random() < explore:
        return int(rng.integers(q.size))
    return int(np.argmax(q))


def greedy_reselect(q: np.ndarray, omega: Sequence[int], terminated: Sequence[int],
                    sizes: Sequence[int]) -> tuple[int, ...]:
    """Best reselection for the agents in ``terminated``; others stay frozen."""
    if not terminated:
        raise ValueError("greedy_reselect needs at least one terminated agent")
    grid = q.reshape(tuple(sizes))
    idx = tuple(slice(None) if j in terminated else omega[j] for j in range(len(sizes)))
    sub = grid[idx]
    flat = int(np.argmax(sub))
    picks = np.unravel_index(flat, sub.shape)
    out = list(omega)
    for j, k in zip([j for j in range(len(sizes)) if j in terminated], picks):
        out[j] = int(k)
    return tuple(out)


# ---------------------------------------------------------------------------
# actor scores


def softmax_score(theta_row: np.ndarray, a: int) -> np.ndarray:
    g = -softmax(theta_row)
    g[a] += 1.0
    return g


def softmax_entropy_grad(theta_row: np.ndarray) -> np.ndarray:
    p = softmax(theta_row)
    logp = np.log(np.maximum(p, 1e-300))
    h = -(p * logp).sum()
    return -p * (logp + h)


def logistic_score(eps: float, br: int) -> float:
    return br - float(logistic(eps))


def logistic_entropy_grad(eps: float) -> float:
    p = float(logistic(eps))
    return -p * (1.0 - p) * eps


def termination_grad(phi: float) -> float:
    b = float(logistic(phi))
    return b * (1.0 - b)


def doi_update(pool: OptionPool, j: int, k: int, s: int, a: int, q_intra: float, config: LearnerConfig,
               br: int | None = None, q_intra_br: float | None = None, s_next: int | None = None,
               term_advantage: float | None = None, scale: float = 1.0, baseline: float = 0.0) -> None:
    """In-place actor update for agent j's option k.

    theta: score of the taken action times the (modified) intra-option value.
    eps:   score of the broadcast decision at the arrived state times the
           broadcast-keyed value.
    phi:   termination gradient at the arrived state times the termination
           advantage (<= 0); sign set by ``config.termination_sign``.
    """
    ent = config.effective_entropy
    if config.alpha_theta:
        row = pool.theta[j][k, s]
        g = softmax_score(row, a) * (q_intra - baseline)
        if ent:
            g = g + ent * softmax_entropy_grad(row)
        row += scale * config.alpha_theta * g
    if br is not None and config.alpha_eps and s_next is not None:
        e = float(pool.eps[j][k, s_next])
        g = logistic_score(e, br) * q_intra_br
        if ent:
            g += ent * logistic_entropy_grad(e)
        pool.eps[j][k, s_next] = e + scale * config.alpha_eps * g
    if term_advantage is not None and config.alpha_phi and s_next is not None:
        f = float(pool.phi[j][k, s_next])
        if math.isfinite(f):
            d = termination_grad(f)
            if config.termination_sign == "literal":
                f += scale * config.alpha_phi * d * term_advantage
            else:
                f -= scale * config.alpha_phi * d * (term_advantage + config.termination_reg)
            pool.phi[j][k, s_next] = f


# ---------------------------------------------------------------------------
# learner


@dataclass
class EpisodeMetrics:
    episode: int
    ret: float
    steps: int
    broadcast_rate: float
    option_switches: int
    truncated: bool
    wall_time_ms: float = 0.0


def _index_br(br: Sequence[int]) -> int:
    v = 0
    for b in br:
        v = 2 * v + int(b)
    return v


class DocLearner:
    """Distributed option critic on an environment adapter.

    The adapter provides ``reset``, ``step``, ``private``, ``shared``,
    ``key``, ``joint_key`` and the cardinalities ``agent_states``,
    ``agent_actions``, ``shared_states`` (see :class:`teamoc.core.ModelEnv`
    and :class:`teamoc.teamgrid.GridLearningEnv`).
    """

    def __init__(self, env, config: LearnerConfig, rng: np.random.Generator, mode: str = "always",
                 pool: OptionPool | None = None, tracker=None):
        if mode not in BROADCAST_MODES:
            raise ValueError(f"unknown broadcast mode {mode!r}")
        self.env, self.config, self.rng, self.mode = env, config, rng, mode
        self.pool = pool or OptionPool.uniform(env.agent_states, env.agent_actions, config.num_options,
                                               phi=config.init_phi, eps=config.init_eps)
        self.J = env.num_agents
        self.sizes = self.pool.sizes
        self.dims = (env.shared_states,) + tuple(env.agent_states)
        self.strides = [int(np.prod(self.dims[i + 1:])) for i in range(len(self.dims))]
        num_actions = int(np.prod(env.agent_actions))
        self.tables = CriticTables(self.pool.num_joint, num_actions,
                                   2 ** self.J if mode == "intermittent" else 0)
        self.action_strides = [int(np.prod(env.agent_actions[j + 1:])) for j in range(self.J)]
        self.tracker = tracker if tracker is not None else self._default_tracker()
        self.episodes_done = 0

    def _default_tracker(self):
        if self.mode == "always":
            return None
        if isinstance(self.env, ModelEnv):
            return ExactTracker(self.env.model, self.mode, self.config.silence_informative)
        return FactoredTracker(self.env.agent_kernels(), self.mode, self.env.joint_key,
                               self.config.silence_informative)

    # -- helpers ---------------------------------------------------------
    def privates_of(self, key: int) -> tuple:
        return tuple((key // self.strides[i + 1]) % self.dims[i + 1] for i in range(self.J))

    def substitute(self, key: int, j: int, s_j: int) -> int:
        st = self.strides[j + 1]
        old = (key // st) % self.dims[j + 1]
        return key + (s_j - old) * st

    def q_at(self, key: int) -> np.ndarray:
        return q_values(self.tables, self.pool, key, self.privates_of(key))

    def beta_none_at(self, omega: Sequence[int], privates: Sequence[int]) -> float:
        bn = 1.0
        for j in range(self.J):
            b = float(logistic(self.pool.phi[j][omega[j], privates[j]]))
            bn *= 1.0 - min(max(b, BETA_MIN), 1.0)
        return bn

    def omega_index(self, omega: Sequence[int]) -> int:
        i = 0
        for c, k in zip(omega, self.sizes):
            i = i * k + c
        return i

    def _reset_tracker(self, state):
        tr = self.tracker
        if isinstance(tr, ExactTracker):
            tr.reset()
        else:
            priv = self.env.private(state)
            ms = []
            for j, n in enumerate(self.env.agent_states):
                m = np.zeros(n)
                m[priv[j]] = 1.0
                ms.append(m)
            tr.reset(self.env.shared(state), None, ms)

    # -- main loop -------------------------------------------------------
    def run_episode(self, record: bool = False, learn: bool = True):
        env, pool, cfg, rng = self.env, self.pool, self.config, self.rng
        J, mode = self.J, self.mode
        episode = self.episodes_done
        explore = cfg.exploration_rate(episode)
        scale = cfg.rate_scale(episode)
        alpha_q = cfg.alpha_q * scale
        gamma = cfg.discount
        B = cfg.broadcast_penalty
        state = env.reset(rng)
        priv = env.private(state)
        if mode == "always":
            key = env.key(state)
        else:
            self._reset_tracker(state)
            key = self.tracker.sample(rng)
        q_now = self.q_at(key)
        omega = tuple(np.unravel_index(choose_joint_option(q_now, cfg, explore, rng), self.sizes))
        omega = tuple(int(c) for c in omega)
        ret, n_br, switches, steps = 0.0, 0, 0, 0
        log = []
        truncated = False
        max_steps = min(cfg.max_steps, getattr(env, "max_steps", cfg.max_steps) or cfg.max_steps)
        for k in range(max_steps):
            w = self.omega_index(omega)
            acts = tuple(categorical(softmax(pool.theta[j][omega[j], priv[j]]), rng) for j in range(J))
            nstate, r_env, terminal = env.step(state, acts, rng)
            npriv = env.private(nstate)
            steps += 1
            last = terminal or steps >= max_steps
            if mode == "always":
                br = (1,) * J
            elif mode == "never":
                br = (0,) * J
            else:
                br = tuple(int(rng.random() < logistic(pool.eps[j][omega[j], npriv[j]])) for j in range(J))
            r = r_env + B * sum(br)
            ret += r
            n_br += sum(br)
            if mode == "always":
                nkey = env.key(nstate)
                common = tuple(npriv)
            else:
                obs = env.observe(nstate, rng) if hasattr(env, "observe") else npriv
                common = tuple(o if b else None for o, b in zip(obs, br))
                if isinstance(self.tracker, ExactTracker):
                    self.tracker.update(pool, omega, common)
                else:
                    self.tracker.update(pool, omega, common, env.shared(nstate))
                nkey = self.tracker.sample(rng)
            a_idx = sum(a * s for a, s in zip(acts, self.action_strides))
            br_idx = _index_br(br) if self.tables.num_br else None

            q_next = self.q_at(nkey)
            npriv_key = self.privates_of(nkey)
            if learn and cfg.alpha_q:
                u = None if terminal else arrival_value(q_next, w, self.beta_none_at(omega, npriv_key))
                delta = coe_update(self.tables, key, w, a_idx, r, u, alpha_q, gamma, br_idx)
                if not math.isfinite(delta):
                    raise TrainingDivergedError(
                        f"TD error became {delta} at episode {episode}, step {k}; "
                        "lower alpha_q or the actor learning rates")

            term = []
            for j in range(J):
                b = float(logistic(pool.phi[j][omega[j], npriv[j]]))
                if rng.random() < min(max(b, BETA_MIN), 1.0):
                    term.append(j)
            if term:
                switches += 1

            old_omega, old_key, ukey = omega, key, nkey
            if term and not last:
                if self.tracker is not None:
                    self.tracker.condition(pool, omega, term)
                    nkey = self.tracker.sample(rng)
                    q_next_sel = self.q_at(nkey)
                else:
                    q_next_sel = q_next
                if cfg.exploration == "egreedy" and rng.random() < explore:
                    om = list(omega)
                    for j in term:
                        om[j] = int(rng.integers(self.sizes[j]))
                    omega = tuple(om)
                elif cfg.exploration == "softmax":
                    cand = np.array([self.omega_index(c) for c in self._reselections(omega, term)])
                    pick = categorical(softmax(q_next_sel[cand] / cfg.temperature), rng)
                    omega = tuple(int(c) for c in np.unravel_index(int(cand[pick]), self.sizes))
                else:
                    omega = greedy_reselect(q_next_sel, omega, term, self.sizes)

            if learn and (cfg.doi_every_step or term):
                self._doi(old_key, old_omega, w, acts, priv, br, br_idx, a_idx, npriv, ukey, scale)

            if record:
                log.append(TransitionRecord(k, state, old_omega, acts, br, tuple(npriv), common, r,
                                            tuple(j in term for j in range(J)), last))
            state, priv, key = nstate, npriv, nkey
            if last:
                truncated = not terminal
                break
        self.episodes_done += 1
        m = EpisodeMetrics(episode, ret, steps, n_br / (steps * J), switches, truncated)
        return (log, m) if record else m

    def _reselections(self, omega, term):
        for combo in itertools.product(*(range(self.sizes[j]) for j in term)):
            om = list(omega)
            for j, c in zip(term, combo):
                om[j] = c
            yield tuple(om)

    def _doi(self, key, omega, w, acts, priv, br, br_idx, a_idx, npriv, nkey, scale):
        cfg, pool = self.config, self.pool
        for j in range(self.J):
            kj = omega[j]
            mk = self.substitute(key, j, priv[j])
            qi = float(self.tables.peek(mk)[w, a_idx])
            base = 0.0
            if cfg.critic_baseline:
                base = float(self.q_at(mk)[w])
            qb = None
            if self.tables.num_br and cfg.alpha_eps:
                rb = self.tables._qb.get(mk)
                qb = 0.0 if rb is None else float(rb[w, a_idx, br_idx])
            adv = None
            if cfg.alpha_phi:
                nk = self.substitute(nkey, j, npriv[j])
                qn = self.q_at(nk).reshape(self.sizes)
                idx = tuple(slice(None) if i == j else omega[i] for i in range(self.J))
                alt = qn[idx]
                adv = float(alt[kj] - alt.max())
            doi_update(pool, j, kj, priv[j], acts[j], qi, cfg,
                       br=br[j] if qb is not None else None, q_intra_br=qb, s_next=npriv[j],
                       term_advantage=adv, scale=scale, baseline=base)
            if np.isnan(pool.theta[j][kj, priv[j]]).any():
                raise TrainingDivergedError(f"agent {j} action parameters diverged; lower alpha_theta")

    def greedy_policy(self, key: int) -> int:
        return int(np.argmax(self.q_at(key)))


# ---------------------------------------------------------------------------
# baselines


class ActorCriticLearner:
    """Tabular one-step actor-critic per agent.

    ``centralized`` shares one state-value critic over the joint state (agents
    broadcast every step, so the key is the true joint state); otherwise each
    agent keeps a critic over its private state and never broadcasts.
    ``random`` disables learning and samples uniform actions.
    """

    def __init__(self, env, config: LearnerConfig, rng: np.random.Generator,
                 centralized: bool = True, random_policy: bool = False):
        self.env, self.config, self.rng = env, config, rng
        self.centralized, self.random_policy = centralized, random_policy
        self.J = env.num_agents
        self.theta = [np.zeros((n, a)) for n, a in zip(env.agent_states, env.agent_actions)]
        self.v_joint = {}
        self.v_local = [np.zeros(n) for n in env.agent_states]
        self.episodes_done = 0

    def action_probs(self, j: int, s: int) -> np.ndarray:
        return softmax(self.theta[j][s])

    def run_episode(self, learn: bool = True) -> EpisodeMetrics:
        env, cfg, rng = self.env, self.config, self.rng
        episode = self.episodes_done
        scale = cfg.rate_scale(episode)
        state = env.reset(rng)
        priv = env.private(state)
        ret, steps = 0.0, 0
        n_br = self.J if self.centralized and not self.random_policy else 0
        max_steps = min(cfg.max_steps, getattr(env, "max_steps", cfg.max_steps) or cfg.max_steps)
        ent = cfg.effective_entropy
        truncated = False
        for _ in range(max_steps):
            if self.random_policy:
                acts = tuple(int(rng.integers(a)) for a in env.agent_actions)
            else:
                acts = tuple(categorical(self.action_probs(j, priv[j]), rng) for j in range(self.J))
            nstate, r_env, terminal = env.step(state, acts, rng)
            npriv = env.private(nstate)
            r = r_env + cfg.broadcast_penalty * n_br
            ret += r
            steps += 1
            if learn and not self.random_policy:
                g = cfg.discount
                if self.centralized:
                    k, nk = env.key(state), env.key(nstate)
                    v = self.v_joint.get(k, 0.0)
                    vn = 0.0 if terminal else self.v_joint.get(nk, 0.0)
                    delta = r + g * vn - v
                    self.v_joint[k] = v + scale * cfg.alpha_q * delta
                    deltas = [delta] * self.J
                else:
                    deltas = []
                    for j in range(self.J):
                        v = self.v_local[j][priv[j]]
                        vn = 0.0 if terminal else self.v_local[j][npriv[j]]
                        d = r + g * vn - v
                        self.v_local[j][priv[j]] = v + scale * cfg.alpha_q * d
                        deltas.append(d)
                for j in range(self.J):
                    row = self.theta[j][priv[j]]
                    grad = softmax_score(row, acts[j]) * deltas[j]
                    if ent:
                        grad = grad + cfg.entropy_coef * softmax_entropy_grad(row)
                    row += scale * cfg.alpha_theta * grad
                    if not np.all(np.isfinite(row)):
                        raise TrainingDivergedError(f"agent {j} actor diverged; lower alpha_theta")
            state, priv = nstate, npriv
            if terminal:
                break
        else:
            truncated = True
        self.episodes_done += 1
        rate = (n_br * steps) / (steps * self.J)
        return EpisodeMetrics(episode, ret, steps, rate, 0, truncated)


# ---------------------------------------------------------------------------
# training entry points


def make_learner(env, config: LearnerConfig, seed: int, algorithm: str = "doc", mode: str = "always"):
    rng = np.random.default_rng(seed)
    if algorithm == "doc":
        return DocLearner(env, config, rng, mode)
    if algorithm == "actor-critic-centralized":
        return ActorCriticLearner(env, config, rng, centralized=True)
    if algorithm == "actor-critic-decentralized":
        return ActorCriticLearner(env, config, rng, centralized=False)
    if algorithm == "random":
        return ActorCriticLearner(env, config, rng, centralized=False, random_policy=True)
    raise ValueError(f"unknown algorithm {algorithm!r}")


def train(env, config: LearnerConfig, seeds: Sequence[int], episodes: int, mode: str = "always",
          algorithm: str = "doc", record_wall_time: bool = False):
    """Run one learner per seed; returns {seed: (metrics list, learner)}."""
    out = {}
    for seed in seeds:
        learner = make_learner(env, config, seed, algorithm, mode)
        rows = []
        for _ in range(episodes):
            t0 = time.perf_counter()
            m = learner.run_episode()
            if record_wall_time:
                m.wall_time_ms = (time.perf_counter() - t0) * 1e3
            rows.append(m)
        out[seed] = (rows, learner)
    return out


def baseline_actor_critic(env, config: LearnerConfig, seeds: Sequence[int], episodes: int,
                          centralized: bool = True):
    algo = "actor-critic-centralized" if centralized else "actor-critic-decentralized"
    return train(env, config, seeds, episodes, "always" if centralized else "never", algo)


# ---------------------------------------------------------------------------
# checkpoints


def save_checkpoint(learner: DocLearner, path) -> None:
    pool = learner.pool
    d = {
        "config": asdict(learner.config),
        "mode": learner.mode,
        "episodes_done": learner.episodes_done,
        "theta": [t.tolist() for t in pool.theta],
        "eps": [e.tolist() for e in pool.eps],
        "phi": [p.tolist() for p in pool.phi],
        "q_intra": {str(s): learner.tables._q[s].tolist() for s in learner.tables.states()},
        "q_intra_br": {str(s): learner.tables._qb[s].tolist() for s in sorted(learner.tables._qb)},
    }
    with open(path, "w") as fh:
        json.dump(d, fh)
        fh.write("\n")


def load_checkpoint(learner: DocLearner, path) -> DocLearner:
    with open(path) as fh:
        d = json.load(fh)
    for name in ("theta", "eps", "phi"):
        arrs = getattr(learner.pool, name)
        for j, v in enumerate(d[name]):
            arrs[j][...] = np.array(v, dtype=float)
    learner.tables._q = {int(s): np.array(v, dtype=float) for s, v in d["q_intra"].items()}
    learner.tables._qb = {int(s): np.array(v, dtype=float) for s, v in d["q_intra_br"].items()}
    learner.episodes_done = d["episodes_done"]
    return learner
