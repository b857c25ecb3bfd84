"""Tabular Q-learning over the product MDP with biased exploration."""

from __future__ import annotations

import math
import time
from dataclasses import dataclass, field

import numpy as np

from . import kernels
from .model import LearnedModel
from .product import ProductSpace, RewardParams

BIASED1 = "Biased1"
BIASED2 = "Biased2"
BIASED3 = "Biased3"
RANDOM = "Random"
CUSTOM = "Custom"

# episode at which the two-phase schedules switch prefactor
PHASE_SWITCH = 100


class ScheduleError(ValueError):
    pass


@dataclass(frozen=True)
class Schedule:
    """Per-episode exploration rates: epsilon = delta_b + delta_e.

    ``Custom`` reads ``table``: a list of ``(first_episode, eps, delta_b)``
    rows, each row holding until the next one starts.
    """

    kind: str = BIASED2
    alpha: float = 0.1
    beta: float = 0.4
    A: float = 0.00015
    table: tuple = ()

    def values(self, episode: int) -> tuple[float, float, float]:
        return schedule_values(self, episode)


def schedule_values(schedule: Schedule, episode: int) -> tuple[float, float, float]:
    if episode < 1:
        raise ScheduleError("episodes are counted from 1")
    kind = schedule.kind
    if kind == CUSTOM:
        rows = sorted(schedule.table)
        if not rows or rows[0][0] > episode:
            raise ScheduleError("custom schedule does not cover this episode")
        eps, db = next((e, d) for start, e, d in reversed(rows) if start <= episode)
        de = eps - db
    else:
        eps = episode ** (-schedule.alpha)
        if kind == BIASED1:
            shrink = episode ** (-schedule.beta)
            db = (1.0 - shrink) * eps
            de = eps * shrink
        elif kind in (BIASED2, BIASED3):
            pre = 0.9 if episode < PHASE_SWITCH else 0.1
            g = 1.0 - pre * math.exp(-schedule.A * episode)
            db = (1.0 - g) * eps
            de = g * eps
        elif kind == RANDOM:
            db, de = 0.0, eps
        else:
            raise ScheduleError(f"unknown schedule kind {kind!r}")
    for name, value in (("epsilon", eps), ("delta_b", db), ("delta_e", de)):
        if not -1e-15 <= value <= 1 + 1e-15:
            raise ScheduleError(f"{name}={value} outside [0, 1] at episode {episode}")
    return eps, db, de


def preset(name: str, environment: str = "small") -> Schedule:
    """Named schedules; ``environment='large'`` selects the slower decay."""
    large = environment == "large"
    alpha = 0.05 if large else 0.1
    beta = 0.15 if large else 0.4
    if name == BIASED1:
        return Schedule(BIASED1, alpha=alpha, beta=beta)
    if name == BIASED2:
        return Schedule(BIASED2, alpha=alpha, A=0.000015 if large else 0.00015)
    if name == BIASED3:
        return Schedule(BIASED3, alpha=alpha, A=0.00015 if large else 0.0015)
    if name == RANDOM:
        return Schedule(RANDOM, alpha=alpha, A=math.inf)
    raise ScheduleError(f"unknown preset {name!r}")


@dataclass(frozen=True)
class PolicyKind:
    """``eps-delta``, ``eps-greedy``, ``boltzmann`` (temperature) or ``ucb1`` (c)."""

    kind: str
    schedule: Schedule | None = None
    temperature: float = 1.0
    ucb_c: float = 1.0
    name: str = ""

    def __post_init__(self):
        if self.kind not in _KIND_CODES:
            raise ValueError(f"unknown policy kind {self.kind!r}")
        if self.temperature < 0 or self.ucb_c < 0:
            raise ValueError("temperature and UCB constant must be non-negative")
        if self.kind in ("eps-delta", "eps-greedy") and self.schedule is None:
            raise ValueError(f"{self.kind} needs a schedule")

    @property
    def code(self) -> int:
        return _KIND_CODES[self.kind]

    @property
    def label(self) -> str:
        return self.name or (self.schedule.kind if self.schedule else self.kind)

    @property
    def uses_model(self) -> bool:
        return self.kind == "eps-delta"

    def rates(self, episode: int) -> tuple[float, float, float]:
        if self.schedule is None:
            return 0.0, 0.0, 0.0
        eps, db, de = self.schedule.values(episode)
        if self.kind == "eps-greedy":
            return eps, 0.0, eps
        return eps, db, de


_KIND_CODES = {
    "eps-delta": kernels.EPS_DELTA,
    "eps-greedy": kernels.EPS_GREEDY,
    "boltzmann": kernels.BOLTZMANN,
    "ucb1": kernels.UCB1,
}


def greedy_index(values, available) -> int:
    """argmax over available entries, lowest index on ties."""
    best, best_v = -1, -math.inf
    for a in available:
        if values[a] > best_v:
            best, best_v = a, values[a]
    return best


def action_probabilities(q_values, available, a_b, eps, delta_b, delta_e) -> np.ndarray:
    """The (eps, delta)-greedy distribution over ``available`` (dense vector)."""
    available = list(available)
    if not available:
        raise ValueError("no available actions")
    if abs(eps - (delta_b + delta_e)) > 1e-12:
        raise ValueError("epsilon must equal delta_b + delta_e")
    out = np.zeros(len(q_values))
    share = delta_e / len(available)
    for a in available:
        out[a] = share
    out[greedy_index(q_values, available)] += 1.0 - eps
    out[a_b] += delta_b
    return out


def epsilon_greedy_probabilities(q_values, available, eps) -> np.ndarray:
    """Plain epsilon-greedy: greedy w.p. 1 - eps, uniform over ``available`` w.p. eps."""
    available = list(available)
    out = np.zeros(len(q_values))
    out[available] = eps / len(available)
    out[greedy_index(q_values, available)] += 1.0 - eps
    return out


def policy_matrix(Q, avail, a_b, eps, delta_b, delta_e) -> np.ndarray:
    """Row-wise ``action_probabilities`` for every state at once.

    ``a_b`` holds one biased action per state; -1 spreads delta_b uniformly.
    """
    n = avail.sum(axis=1, keepdims=True)
    greedy = np.argmax(np.where(avail, Q, -np.inf), axis=1)
    rows = np.arange(Q.shape[0])
    pi = np.where(avail, delta_e / n, 0.0)
    pi[rows, greedy] += 1.0 - eps
    a_b = np.asarray(a_b)
    has = a_b >= 0
    pi[rows[has], a_b[has]] += delta_b
    pi[~has] += np.where(avail[~has], delta_b / n[~has], 0.0)
    return pi


def boltzmann_probabilities(q_values, available, temperature) -> np.ndarray:
    available = list(available)
    out = np.zeros(len(q_values))
    if temperature <= 1e-12:
        out[greedy_index(q_values, available)] = 1.0
        return out
    vals = np.array([q_values[a] for a in available], dtype=float)
    w = np.exp((vals - vals.max()) / temperature)
    out[available] = w / w.sum()
    return out


def ucb1_choice(q_values, counts, available, c) -> int:
    available = list(available)
    for a in available:
        if counts[a] == 0:
            return a
    total = sum(counts[a] for a in available)
    scores = {a: q_values[a] + c * math.sqrt(2.0 * math.log(total) / counts[a]) for a in available}
    return greedy_index(scores, available)


def reward(space: ProductSpace, s_next, rp: RewardParams, v_before=None) -> float:
    """Reward for entering product state ``s_next``."""
    _, q, _ = space.decode(s_next)
    if v_before is None:
        v_before = space.full_v
    return space.reward(q, v_before, rp)


def q_update(Q, nP, s, a, r, s_next, gamma, next_available) -> None:
    nP[s, a] += 1
    target = max((Q[s_next, b] for b in next_available), default=0.0)
    Q[s, a] += (r - Q[s, a] + gamma * target) / nP[s, a]


def episode_uniforms(seed: int, episode: int, tau: int, num_x: int):
    """x0 and the per-step uniforms of one episode, from its own stream."""
    rng = np.random.default_rng([seed, episode])
    x0 = int(rng.integers(num_x))
    return x0, rng.random((tau, kernels.U_COLUMNS))


@dataclass
class LearnerState:
    space: ProductSpace
    Q: np.ndarray
    nP: np.ndarray
    model: LearnedModel
    episodes_done: int = 0
    scratch: dict = field(default_factory=dict)

    @classmethod
    def fresh(cls, space: ProductSpace, model_slots: int | None = None) -> "LearnerState":
        S, A = space.num_states, space.num_actions
        slots = model_slots if model_slots is not None else min(space.num_x, 32)
        return cls(space, np.zeros((S, A)), np.zeros((S, A)), LearnedModel(space.num_x, space.num_a, slots))

    def greedy_policy(self) -> np.ndarray:
        """Deterministic greedy policy as an (S, num_actions) 0/1 matrix."""
        mask = self.space.available_mask()
        vals = np.where(mask, self.Q, -np.inf)
        best = np.argmax(vals, axis=1)
        pi = np.zeros_like(self.Q)
        pi[np.arange(len(best)), best] = 1.0
        return pi

    def greedy_actions(self) -> np.ndarray:
        return np.argmax(self.greedy_policy(), axis=1)


class TrainingError(RuntimeError):
    pass


def run_episode(state: LearnerState, policy: PolicyKind, rp: RewardParams, tau: int, episode: int, seed: int,
                x0: int | None = None, update_model: bool = True, rates=None) -> dict:
    """Play one episode; returns steps, discounted return and deadlock flag."""
    sp = state.space
    mdp = sp.mdp
    start, u = episode_uniforms(seed, episode, tau, sp.num_x)
    if x0 is None:
        x0 = start
    eps, db, de = rates if rates is not None else policy.rates(episode)
    sc = state.scratch
    if not sc:
        sc["dist"] = np.empty(sp.num_x, dtype=np.int64)
        sc["order"] = np.empty(sp.num_x, dtype=np.int64)
        sc["val"] = np.empty(sp.num_x)
        sc["probs"] = np.empty(sp.num_actions)
        sc["out"] = np.zeros(3)
        sc["reward_q"] = sp.reward_table(rp)
    out = sc["out"]
    status = kernels.run_episode(
        mdp.available, mdp.succ, mdp.cdf,
        sp.next_q, sp.eps_succ, sp.num_eps, sc["reward_q"], sp.in_set, sp.num_sets, sp.deadlock, sp.label_source,
        sp.goal_mask, sp.avoid_mask, sp.eps_goal,
        state.Q, state.nP,
        state.model.n, state.model.succ, state.model.cnt, bool(update_model),
        policy.code, float(eps), float(db), float(de), float(policy.temperature), float(policy.ucb_c),
        float(rp.gamma), float(rp.r_goal),
        int(x0), int(sp.aut.initial), int(sp.full_v), int(tau), u,
        sc["dist"], sc["order"], sc["val"], sc["probs"], out,
    )
    if status == kernels.STATUS_MODEL_FULL:
        raise TrainingError(f"learned model ran out of successor slots ({state.model.slots})")
    if status == kernels.STATUS_NO_EDGE:
        raise TrainingError("automaton has no edge for an observed label")
    state.episodes_done += 1
    return {"steps": int(out[0]), "return": float(out[1]), "deadlock": bool(out[2]), "x0": x0}


@dataclass
class TrainResult:
    state: LearnerState
    rows: list
    policy: np.ndarray


def train(space: ProductSpace, policy: PolicyKind, rp: RewardParams, *, tau: int, num_episodes: int,
          seed: int, eval_every: int = 0, evaluate=None, random_start: bool = True, x0: int = 0,
          shared_model_updates: bool = False, model_freeze_episode: int | None = None,
          timing: bool = True, model_slots: int | None = None) -> TrainResult:
    """Run Q-learning for ``num_episodes`` episodes.

    ``evaluate(pi) -> float`` is called on the current greedy policy every
    ``eval_every`` episodes; each call yields one row
    ``(episode, elapsed_s, avg_sat_prob, eps, delta_b, delta_e)``.
    """
    state = LearnerState.fresh(space, model_slots)
    rows = []
    t0 = time.perf_counter()
    record = policy.uses_model or shared_model_updates
    for e in range(1, num_episodes + 1):
        upd = record and (model_freeze_episode is None or e <= model_freeze_episode)
        run_episode(state, policy, rp, tau, e, seed, x0=None if random_start else x0, update_model=upd)
        if eval_every and evaluate is not None and e % eval_every == 0:
            elapsed = time.perf_counter() - t0 if timing else 0.0
            eps, db, de = policy.rates(e)
            rows.append((e, elapsed, float(evaluate(state.greedy_policy())), eps, db, de))
    return TrainResult(state, rows, state.greedy_policy())
