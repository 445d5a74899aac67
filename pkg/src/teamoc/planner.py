"""Option models and the option-level dynamic program over states and beliefs.

Step semantics match :mod:`teamoc.belief`: from the posterior common belief
the running joint option acts for one step; on arrival each agent broadcasts
(paying the broadcast penalty) under that option's broadcast policy, the
belief is updated, and then component options terminate at the arrived
private states.  If nobody terminates the option continues, otherwise a new
joint option is chosen from the belief conditioned on who terminated.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from .belief import (CommonBelief, audit_probs, all_common_observations, common_obs_likelihood,
                     option_action_policy, option_broadcast_probs, option_termination_probs)
from .core import (BETA_MIN, DecPomdpModel, OptionPool, joint_availability, logistic,
                   nonempty_subsets)

TIE_TOL = 1e-9
BRANCH_EPS = 1e-13


class PlannerError(RuntimeError):
    pass


def beta_none(omega, private_states, pool: OptionPool) -> float:
    """Probability that no component of omega terminates at the given private states."""
    comps = omega.components if hasattr(omega, "components") else tuple(omega)
    out = 1.0
    for j, (k, s) in enumerate(zip(comps, private_states)):
        out *= 1.0 - float(pool.termination_probs(j)[k, s])
    return out


def lex_argmax(values: np.ndarray, tol: float = TIE_TOL) -> int:
    """First index whose value is within tol of the maximum."""
    m = np.max(values)
    return int(np.flatnonzero(values >= m - tol)[0])


@dataclass
class OptionModel:
    reward: np.ndarray    # r^omega(s), shape (S,)
    kernel: np.ndarray    # discounted termination-state kernel, shape (S, S)
    iterations: int = 0

    @property
    def discount_mass(self) -> np.ndarray:
        return self.kernel.sum(axis=1)


class OptionDynamics:
    """Per-joint-option one-step quantities on a dense tabular model."""

    def __init__(self, model: DecPomdpModel, pool: OptionPool, mode: str = "always"):
        self.model, self.pool, self.mode = model, pool, mode
        n_opt, S = pool.num_joint, model.num_states
        P = model.P
        self.kernel = np.empty((n_opt, S, S))
        self.reward = np.empty((n_opt, S))
        self.beta_none = np.empty((n_opt, S))
        self.beta = np.empty((n_opt, S, model.num_agents))
        for w, jo in enumerate(pool.all_joint()):
            pol = option_action_policy(model, pool, jo)
            self.kernel[w] = np.einsum("sa,sat->st", pol, P)
            n_br = option_broadcast_probs(model, pool, jo, mode).sum(axis=1)
            self.reward[w] = (np.einsum("sa,sa->s", pol, model.expected_reward)
                              + model.broadcast_penalty * (self.kernel[w] @ n_br))
            self.beta[w] = option_termination_probs(model, pool, jo)
            self.beta_none[w] = np.prod(1.0 - self.beta[w], axis=1)
        self.available = joint_availability(model, pool)
        if not self.available.any(axis=0).all():
            raise PlannerError("some state has no available joint option")

    def values(self, Q: np.ndarray) -> np.ndarray:
        """V(s) = max over available joint options of Q[omega, s]."""
        return np.where(self.available, Q, -np.inf).max(axis=0)


def compute_option_model(model: DecPomdpModel, pool: OptionPool, omega, mode: str | None = None,
                         beta_min: float = BETA_MIN, tol: float = 1e-10,
                         max_iter: int = 1_000_000) -> OptionModel:
    """Discounted option reward and termination kernel by fixed-point iteration.

    r(s) = sum_a pi(a|s) sum_s' p [R + gamma * beta_none(s') * r(s')]
    k(s, .) = gamma * sum_s' P(s, s') [(1 - beta_none(s')) e_s' + beta_none(s') k(s', .)]

    ``mode`` adds the expected broadcast penalty of that broadcast mode to the
    per-step reward; ``None`` uses the environment reward alone.
    """
    comps = omega.components if hasattr(omega, "components") else tuple(omega)
    for j, k in enumerate(comps):
        raw = logistic(pool.phi[j][k])
        if np.any(raw < beta_min):
            s = int(np.argmin(raw))
            raise PlannerError(f"agent {j} option {k} has termination probability {raw[s]:.3g} "
                               f"< {beta_min} at state {s}; the option may never terminate")
    gamma = model.discount
    pol = option_action_policy(model, pool, comps)
    Pw = np.einsum("sa,sat->st", pol, model.P)
    r1 = np.einsum("sa,sa->s", pol, model.expected_reward)
    if mode is not None:
        r1 = r1 + model.broadcast_penalty * (Pw @ option_broadcast_probs(model, pool, comps, mode).sum(axis=1))
    bn = np.prod(1.0 - option_termination_probs(model, pool, comps), axis=1)
    cont = gamma * Pw * bn[None, :]
    stop = gamma * Pw * (1.0 - bn)[None, :]
    r = r1.copy()
    k = stop.copy()
    for it in range(1, max_iter + 1):
        r_new = r1 + cont @ r
        k_new = stop + cont @ k
        res = max(np.abs(r_new - r).max(), np.abs(k_new - k).max())
        r, k = r_new, k_new
        if res <= tol:
            return OptionModel(r, k, it)
    raise PlannerError("option model iteration did not converge")


# ---------------------------------------------------------------------------
# state-space operators


def u_value(s: int, omega, Q: np.ndarray, pool: OptionPool, model: DecPomdpModel,
            available: np.ndarray | None = None):
    """Option value upon arrival at state s, with the best reselection.

    ``Q`` is indexed [joint option, state].  The max ranges over every
    nonempty agent subset T and every reselection of T's components; ties go
    to the first candidate in (|T|, agents, option ids) order.  Returns the
    value and the chosen (T, joint option).
    """
    jo = pool.joint(omega.components if hasattr(omega, "components") else omega)
    bn = beta_none(jo, model.agent_components(s), pool)
    best, arg = -np.inf, None
    for T in nonempty_subsets(pool.num_agents):
        for cand in jo.reselections(T):
            if available is not None and not available[cand.index, s]:
                continue
            q = Q[cand.index, s]
            if q > best + TIE_TOL:
                best, arg = q, (T, cand)
    return bn * Q[jo.index, s] + (1.0 - bn) * best, arg


def bellman_backup_state(dyn: OptionDynamics, Q: np.ndarray, policy: np.ndarray | None = None):
    """One synchronous sweep over all (omega, s); returns (new Q, sup-norm residual).

    With ``policy`` (a joint option index per state) the reselection value is
    Q[policy(s'), s'] instead of the max.
    """
    gamma = dyn.model.discount
    if policy is None:
        V = dyn.values(Q)
    else:
        V = Q[policy, np.arange(Q.shape[1])]
    U = dyn.beta_none * Q + (1.0 - dyn.beta_none) * V[None, :]
    Q_new = dyn.reward + gamma * np.einsum("wst,wt->ws", dyn.kernel, U)
    return Q_new, float(np.abs(Q_new - Q).max())


def state_value_iteration(model: DecPomdpModel, pool: OptionPool, mode: str = "always",
                          tol: float = 1e-10, max_iter: int = 100_000, Q0=None):
    dyn = OptionDynamics(model, pool, mode)
    Q = np.zeros_like(dyn.reward) if Q0 is None else np.array(Q0, dtype=float)
    residuals = []
    for _ in range(max_iter):
        Q, res = bellman_backup_state(dyn, Q)
        residuals.append(res)
        if res <= tol:
            break
    return Q, residuals, dyn


def greedy_state_policy(dyn: OptionDynamics, Q: np.ndarray) -> np.ndarray:
    masked = np.where(dyn.available, Q, -np.inf)
    return np.array([lex_argmax(masked[:, s]) for s in range(Q.shape[1])])


# ---------------------------------------------------------------------------
# belief space


def _key(p: np.ndarray) -> bytes:
    return np.round(p, 8).tobytes()


@dataclass
class BeliefSet:
    beliefs: list
    closed: bool
    depth: int
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        if not self._index:
            for i, b in enumerate(self.beliefs):
                self._index.setdefault(_key(b), []).append(i)

    def __len__(self):
        return len(self.beliefs)

    def find(self, p: np.ndarray, tol: float = 1e-9):
        for i in self._index.get(_key(p), ()):
            if np.abs(self.beliefs[i] - p).max() <= tol:
                return i
        return None

    def add(self, p: np.ndarray) -> int:
        self.beliefs.append(p)
        i = len(self.beliefs) - 1
        self._index.setdefault(_key(p), []).append(i)
        return i

    def nearest(self, p: np.ndarray) -> int:
        B = np.asarray(self.beliefs)
        return int(np.argmin(np.abs(B - p[None, :]).sum(axis=1)))


def belief_branches(p: np.ndarray, w: int, dyn: OptionDynamics, obs_lik: dict):
    """Successor beliefs of belief p under joint option index w.

    Returns a list of (probability, continues, successor) where ``continues``
    is True for the branch on which no component terminated.
    """
    pred = dyn.kernel[w].T @ p
    out = []
    beta = dyn.beta[w]
    J = beta.shape[1]
    subsets = [()] + nonempty_subsets(J)
    for co, lik in obs_lik[w]:
        joint = pred * lik
        p_obs = joint.sum()
        if p_obs <= BRANCH_EPS:
            continue
        post = joint / p_obs
        for T in subsets:
            wt = np.ones_like(post)
            for j in range(J):
                wt = wt * (beta[:, j] if j in T else 1.0 - beta[:, j])
            m = post * wt
            pt = m.sum()
            if pt <= BRANCH_EPS:
                continue
            nxt = m / pt
            nxt = nxt / nxt.sum()
            audit_probs(nxt, "successor belief")
            out.append((p_obs * pt, len(T) == 0, nxt))
    return out


def _obs_likelihoods(dyn: OptionDynamics):
    model, pool, mode = dyn.model, dyn.pool, dyn.mode
    table = {}
    obs = all_common_observations(model, mode)
    for w, jo in enumerate(pool.all_joint()):
        table[w] = [(co, common_obs_likelihood(model, pool, jo, co, mode, True)) for co in obs]
    return table


def enumerate_reachable_beliefs(model: DecPomdpModel, pool: OptionPool, b0, depth_cap: int,
                                mode: str = "always", max_size: int = 20000) -> BeliefSet:
    """Breadth-first closure of filter successors from b0, deduplicated within 1e-9."""
    if depth_cap < 0:
        raise ValueError("depth_cap must be >= 0")
    p0 = b0.probs if isinstance(b0, CommonBelief) else np.asarray(b0, dtype=float)
    dyn = OptionDynamics(model, pool, mode)
    lik = _obs_likelihoods(dyn)
    bs = BeliefSet([np.array(p0)], closed=False, depth=0)
    frontier = [0]
    depth = 0
    while frontier and depth < depth_cap:
        nxt = []
        for i in frontier:
            for w in range(pool.num_joint):
                for _, _, q in belief_branches(bs.beliefs[i], w, dyn, lik):
                    if bs.find(q) is None:
                        if len(bs) >= max_size:
                            raise PlannerError(f"reachable belief set exceeds {max_size} beliefs "
                                               f"(at depth {depth + 1}, count {len(bs) + 1})")
                        nxt.append(bs.add(q))
        frontier = nxt
        depth += 1
    bs.closed = not frontier
    bs.depth = depth
    return bs


class BeliefDP:
    """Branch structure of the belief-space operator on an enumerated belief set."""

    def __init__(self, model: DecPomdpModel, pool: OptionPool, belief_set: BeliefSet,
                 mode: str = "always", project_escapes: bool = False):
        self.model, self.pool, self.mode = model, pool, mode
        self.belief_set = belief_set
        dyn = OptionDynamics(model, pool, mode)
        self.dyn = dyn
        lik = _obs_likelihoods(dyn)
        nB, nW = len(belief_set), pool.num_joint
        B = np.asarray(belief_set.beliefs)
        self.reward = B @ dyn.reward.T                       # (nB, nW)
        self.available = (B @ (~dyn.available).T.astype(float)) <= 0  # option allowed on all support
        gamma = model.discount
        self.cont, self.term = [], []
        self.projected = 0
        for w in range(nW):
            rows_c, cols_c, vals_c, rows_t, cols_t, vals_t = [], [], [], [], [], []
            for i in range(nB):
                for prob, cont, q in belief_branches(belief_set.beliefs[i], w, dyn, lik):
                    k = belief_set.find(q)
                    if k is None:
                        if not project_escapes:
                            raise PlannerError(
                                "belief set is not closed: successor of belief "
                                f"{i} under option {w} escapes: "
                                + np.array2string(q, precision=6, separator=","))
                        k = belief_set.nearest(q)
                        self.projected += 1
                    if cont:
                        rows_c.append(i); cols_c.append(k); vals_c.append(gamma * prob)
                    else:
                        rows_t.append(i); cols_t.append(k); vals_t.append(gamma * prob)
            self.cont.append(sp.csr_matrix((vals_c, (rows_c, cols_c)), shape=(nB, nB)))
            self.term.append(sp.csr_matrix((vals_t, (rows_t, cols_t)), shape=(nB, nB)))

    def index_of(self, b) -> int:
        p = b.probs if isinstance(b, CommonBelief) else np.asarray(b, dtype=float)
        i = self.belief_set.find(p)
        if i is None:
            raise PlannerError("belief not in the enumerated set: "
                               + np.array2string(p, precision=6, separator=","))
        return i

    def values(self, Q: np.ndarray) -> np.ndarray:
        return np.where(self.available, Q, -np.inf).max(axis=1)

    def backup(self, Q: np.ndarray, policy: np.ndarray | None = None):
        """Jacobi sweep of the belief operator on Q[b, omega]; returns (Q', residual)."""
        V = self.values(Q) if policy is None else Q[np.arange(Q.shape[0]), policy]
        Q_new = np.empty_like(Q)
        for w in range(Q.shape[1]):
            Q_new[:, w] = self.reward[:, w] + self.cont[w] @ Q[:, w] + self.term[w] @ V
        return Q_new, float(np.abs(Q_new - Q).max())


def belief_backup(b, omega, Q: np.ndarray, dp: BeliefDP) -> float:
    """Single-entry belief backup r(b) + gamma * sum_o P(o|b) U(b', omega)."""
    i = dp.index_of(b)
    w = omega.index if hasattr(omega, "index") else dp.pool.joint(omega).index
    V = dp.values(Q)
    return float(dp.reward[i, w] + (dp.cont[w][i] @ Q[:, w]).item() + (dp.term[w][i] @ V).item())


@dataclass
class ValueTables:
    Q: np.ndarray            # (n_beliefs, n_joint_options)
    V: np.ndarray
    policy: np.ndarray       # greedy joint option index per belief
    residuals: list
    iterations: int
    belief_set: BeliefSet
    closed: bool
    projected: int = 0

    def value_at(self, i: int = 0) -> float:
        return float(self.V[i])


def value_iteration(model: DecPomdpModel, pool: OptionPool, belief_set: BeliefSet,
                    tol: float = 1e-10, mode: str = "always", max_iter: int = 100_000,
                    project_escapes: bool = False) -> ValueTables:
    if tol <= 0:
        raise ValueError("tol must be positive")
    if not belief_set.closed and not project_escapes:
        raise PlannerError("belief set did not close before the depth cap; "
                           "enumerate deeper or allow projection of escaping successors")
    dp = BeliefDP(model, pool, belief_set, mode, project_escapes)
    Q = np.zeros((len(belief_set), pool.num_joint))
    residuals = []
    for _ in range(max_iter):
        Q, res = dp.backup(Q)
        residuals.append(res)
        if res <= tol:
            break
    V = dp.values(Q)
    masked = np.where(dp.available, Q, -np.inf)
    policy = np.array([lex_argmax(row) for row in masked])
    vt = ValueTables(Q, V, policy, residuals, len(residuals), belief_set, belief_set.closed, dp.projected)
    vt.dp = dp
    return vt


def plan(model: DecPomdpModel, pool: OptionPool, belief_mode: str = "exact-broadcast",
         depth_cap: int = 50, tol: float = 1e-10, max_size: int = 20000,
         mode: str | None = None) -> ValueTables:
    """Enumerate beliefs from the initial distribution and run value iteration.

    ``exact-broadcast`` plans under cheap talk and requires closure;
    ``reachable-capped`` plans under the given broadcast mode on a depth-capped
    set, projecting escaping successors to the nearest enumerated belief.
    """
    if belief_mode == "exact-broadcast":
        mode = "always"
        bs = enumerate_reachable_beliefs(model, pool, model.initial, depth_cap, mode, max_size)
        return value_iteration(model, pool, bs, tol, mode)
    if belief_mode == "reachable-capped":
        mode = mode or "intermittent"
        bs = enumerate_reachable_beliefs(model, pool, model.initial, depth_cap, mode, max_size)
        return value_iteration(model, pool, bs, tol, mode, project_escapes=True)
    raise ValueError(f"unknown belief mode {belief_mode!r}")


def planner_report(vt: ValueTables, pool: OptionPool) -> dict:
    return {
        "iterations": vt.iterations,
        "residuals": [float(r) for r in vt.residuals],
        "closed": vt.closed,
        "projected_successors": vt.projected,
        "num_beliefs": len(vt.belief_set),
        "value_at_initial": float(vt.V[0]),
        "V": [float(v) for v in vt.V],
        "policy": [list(pool.joint_from_index(int(w)).components) for w in vt.policy],
        "beliefs": [{str(int(i)): float(b[i]) for i in np.flatnonzero(b)} for b in vt.belief_set.beliefs],
    }


def write_report(vt: ValueTables, pool: OptionPool, path) -> None:
    with open(path, "w") as fh:
        json.dump(planner_report(vt, pool), fh, indent=1)
        fh.write("\n")


# ---------------------------------------------------------------------------
# contraction


def contraction_certificate(model: DecPomdpModel, pool: OptionPool, trials: int,
                            rng: np.random.Generator, mode: str = "always",
                            scale: float = 10.0) -> float:
    """Largest observed ||B Q1 - B Q2|| / ||Q1 - Q2|| over random pairs.

    Both the optimality operator and the operator of a random fixed
    reselection policy are probed on each pair.
    """
    if trials < 1:
        raise ValueError("trials must be >= 1")
    dyn = OptionDynamics(model, pool, mode)
    shape = dyn.reward.shape
    worst = 0.0
    for _ in range(trials):
        Q1 = rng.normal(scale=scale, size=shape)
        Q2 = Q1 + rng.normal(scale=rng.uniform(0.01, 1.0) * scale, size=shape)
        pol = np.array([rng.choice(np.flatnonzero(dyn.available[:, s])) for s in range(shape[1])])
        for policy in (None, pol):
            worst = max(worst, lipschitz_ratio(dyn, Q1, Q2, policy))
    return worst


def lipschitz_ratio(dyn: OptionDynamics, Q1, Q2, policy=None) -> float:
    den = float(np.abs(Q1 - Q2).max())
    if den == 0.0:
        return 0.0
    B1, _ = bellman_backup_state(dyn, Q1, policy)
    B2, _ = bellman_backup_state(dyn, Q2, policy)
    return float(np.abs(B1 - B2).max()) / den
