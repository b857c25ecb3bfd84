"""Flat indexing of the product of an MDP with an automaton.

A product state is ``(x, q, v)``: MDP state, automaton state and, for an
LDBA, the bitmask of accepting sets still to be visited (bit ``j - 1`` stands
for set ``j``).  For a DRA ``v`` is always 0.  The flat index is
``(x * num_q + q) * num_v + v``.

Product actions are the MDP actions followed by one action per epsilon edge
slot of the automaton.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .automaton import DRA, MalformedAutomatonError, OmegaAutomaton, deadlock_states, goal_states, prune_and_index

# probability with which a state joins the random goal set used when the
# automaton offers no progress from q
RANDOM_GOAL_DENSITY = 0.1


@dataclass(frozen=True)
class RewardParams:
    r_goal: float = 10.0
    r_bad: float = -0.1
    r_dead: float = -100.0
    r_zero: float = 0.0
    gamma: float = 0.99

    def __post_init__(self):
        if not self.r_goal > 0:
            raise ValueError("r_goal must be positive")
        if not self.r_dead < self.r_bad < self.r_zero <= 0:
            raise ValueError("rewards must satisfy r_dead < r_bad < r_zero <= 0")
        if not 0 <= self.gamma < 1:
            raise ValueError("gamma must lie in [0, 1)")

    @property
    def bound(self) -> float:
        return max(abs(self.r_goal), abs(self.r_dead)) / (1 - self.gamma)


class ProductSpace:
    """Static tables shared by the learner, the evaluator and the probes."""

    def __init__(self, mdp, aut: OmegaAutomaton, label_source: bool = False, mask_seed: int = 0):
        if not aut.is_pruned:
            aut = prune_and_index(aut)
        self.mdp = mdp
        self.aut = aut
        self.label_source = bool(label_source)
        self.is_ldba = aut.kind != DRA
        self.num_x = mdp.num_states
        self.num_a = mdp.num_actions
        self.num_q = aut.num_states
        self.num_sets = len(aut.buchi_sets) if self.is_ldba else 0
        self.num_v = (1 << self.num_sets) if self.is_ldba else 1
        self.full_v = self.num_v - 1
        self.num_eps = max((len(e) for e in aut.epsilon_transitions), default=0)
        self.num_actions = self.num_a + self.num_eps
        self.num_states = self.num_x * self.num_q * self.num_v

        self.symbols = [aut.symbol(mdp.labels[x]) for x in range(self.num_x)]
        next_q = np.empty((self.num_q, self.num_x), dtype=np.int64)
        for q in range(self.num_q):
            for x, sym in enumerate(self.symbols):
                t = aut.label_successor(q, sym)
                if t is None:
                    raise MalformedAutomatonError(
                        f"automaton state {q} has no edge for the label {sorted(mdp.labels[x])} of MDP state {x}"
                    )
                next_q[q, x] = t
        self.next_q = next_q

        eps = np.full((self.num_q, max(self.num_eps, 1)), -1, dtype=np.int64)
        for q, outs in enumerate(aut.epsilon_transitions):
            eps[q, : len(outs)] = outs
        self.eps_succ = eps

        self.deadlock = deadlock_states(aut)
        in_set = np.zeros((self.num_q, max(self.num_sets, 1)), dtype=np.bool_)
        for j, fs in enumerate(aut.buchi_sets):
            in_set[list(fs), j] = True
        self.in_set = in_set
        self._build_masks(mask_seed)

    # -- indexing ---------------------------------------------------------
    def index(self, x, q, v=None):
        if v is None:
            v = self.full_v
        return (x * self.num_q + q) * self.num_v + v

    def decode(self, s):
        xq, v = divmod(int(s), self.num_v)
        x, q = divmod(xq, self.num_q)
        return x, q, v

    def initial_states(self) -> np.ndarray:
        """(x, q0, all sets pending) for every x."""
        xs = np.arange(self.num_x)
        return (xs * self.num_q + self.aut.initial) * self.num_v + self.full_v

    def visit(self, v: int, q: int) -> tuple[int, bool]:
        """Updated visit mask after entering q, and whether a pending set was hit."""
        if not self.is_ldba:
            return 0, False
        hit = 0
        for j in range(self.num_sets):
            if self.in_set[q, j]:
                hit |= 1 << j
        nv = v & ~hit
        return (self.full_v if nv == 0 else nv), bool(v & hit)

    def visit_table(self) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized ``visit`` over all (v, q): arrays of shape (num_v, num_q)."""
        nv = np.zeros((self.num_v, self.num_q), dtype=np.int64)
        hit = np.zeros((self.num_v, self.num_q), dtype=np.bool_)
        for v in range(self.num_v):
            for q in range(self.num_q):
                nv[v, q], hit[v, q] = self.visit(v, q)
        return nv, hit

    def available(self, s) -> list[int]:
        x, q, _ = self.decode(s)
        acts = [a for a in range(self.num_a) if self.mdp.available[x, a]]
        acts += [self.num_a + e for e in range(self.num_eps) if self.eps_succ[q, e] >= 0]
        return acts

    def available_mask(self) -> np.ndarray:
        """(S, num_actions) mask of product actions."""
        mask = np.zeros((self.num_x, self.num_q, self.num_v, self.num_actions), dtype=bool)
        mask[..., : self.num_a] = self.mdp.available[:, None, None, :]
        if self.num_eps:
            mask[..., self.num_a :] = (self.eps_succ[:, : self.num_eps] >= 0)[None, :, None, :]
        return mask.reshape(self.num_states, self.num_actions)

    # -- rewards ----------------------------------------------------------
    def reward_table(self, rp: RewardParams) -> np.ndarray:
        """Reward for entering q (DRA), or for entering q without hitting a pending set (LDBA).

        Precedence for a DRA is accepting > rejecting > deadlock > zero.
        """
        out = np.full(self.num_q, rp.r_zero)
        if self.is_ldba:
            out[self.deadlock] = rp.r_dead
            return out
        good = np.zeros(self.num_q, dtype=bool)
        bad = np.zeros(self.num_q, dtype=bool)
        for p in self.aut.rabin_pairs:
            good[list(p.good)] = True
            bad[list(p.bad)] = True
        out[self.deadlock] = rp.r_dead
        out[bad] = rp.r_bad
        out[good] = rp.r_goal
        return out

    def reward(self, q_next: int, v_before: int, rp: RewardParams) -> float:
        if self.is_ldba:
            _, hit = self.visit(v_before, q_next)
            if hit:
                return rp.r_goal
        return float(self.reward_table(rp)[q_next])

    # -- exploration targets ----------------------------------------------
    def _build_masks(self, seed):
        nt = max(self.num_sets, 1)
        goal = np.zeros((self.num_q, nt, self.num_x), dtype=np.bool_)
        avoid = np.zeros((self.num_q, nt, self.num_x), dtype=np.bool_)
        eps_goal = np.full((self.num_q, nt), -1, dtype=np.int64)
        self.goal_q = [[set() for _ in range(nt)] for _ in range(self.num_q)]
        rng = np.random.default_rng(seed)
        for q in range(self.num_q):
            for j in range(nt):
                qg = goal_states(self.aut, q, target_set=j + 1) if self.is_ldba else goal_states(self.aut, q)
                self.goal_q[q][j] = qg
                row = self.next_q[q]
                if qg:
                    goal[q, j] = np.isin(row, sorted(qg))
                    for e in range(self.num_eps):
                        if self.eps_succ[q, e] in qg:
                            eps_goal[q, j] = e
                            break
                avoid[q, j] = ~np.isin(row, sorted(qg | {q}))
                if not goal[q, j].any() and eps_goal[q, j] < 0:
                    pick = rng.random(self.num_x) < RANDOM_GOAL_DENSITY
                    if not pick.any():
                        pick[rng.integers(self.num_x)] = True
                    goal[q, j] = pick
                    avoid[q, j] &= ~pick
        self.goal_mask = goal
        self.avoid_mask = avoid
        self.eps_goal = eps_goal

    def x_goal_set(self, q: int, target_set: int | None = None) -> set[int]:
        return set(np.flatnonzero(self.goal_mask[q, self._j(target_set)]).tolist())

    def x_avoid_set(self, q: int, target_set: int | None = None) -> set[int]:
        return set(np.flatnonzero(self.avoid_mask[q, self._j(target_set)]).tolist())

    def _j(self, target_set):
        if not self.is_ldba:
            return 0
        return (target_set or 1) - 1
