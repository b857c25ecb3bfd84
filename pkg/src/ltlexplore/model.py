"""Learned transition model and the biased action built on it."""

from __future__ import annotations

import json
from collections import deque

import numpy as np

from . import kernels

MAX_PATHS = 512


class ModelCapacityError(RuntimeError):
    pass


class LearnedModel:
    """Visit counts n(x, a), c(x, a, x') in fixed-width successor slots.

    ``slots`` bounds the number of distinct successors recorded per pair;
    the grid worlds never exceed 8.
    """

    def __init__(self, num_states: int, num_actions: int, slots: int | None = None):
        self.num_states = num_states
        self.num_actions = num_actions
        self.slots = slots if slots is not None else min(num_states, 32)
        self.n = np.zeros((num_states, num_actions))
        self.succ = np.full((num_states, num_actions, self.slots), -1, dtype=np.int64)
        self.cnt = np.zeros((num_states, num_actions, self.slots))

    @classmethod
    def from_truth(cls, mdp, scale: float = 1.0) -> "LearnedModel":
        """Model whose estimates equal the true probabilities (counts = scale * P)."""
        model = cls(mdp.num_states, mdp.num_actions, mdp.max_support)
        live = mdp.succ >= 0
        model.succ[...] = np.where(live, mdp.succ, -1)
        model.cnt[...] = np.where(live, mdp.prob * scale, 0.0)
        model.n[...] = np.where(mdp.available, scale, 0.0)
        return model

    def copy(self) -> "LearnedModel":
        other = LearnedModel(self.num_states, self.num_actions, self.slots)
        other.n[...] = self.n
        other.succ[...] = self.succ
        other.cnt[...] = self.cnt
        return other

    def record(self, x: int, a: int, y: int) -> None:
        if not kernels.model_record(self.n, self.succ, self.cnt, x, a, y):
            raise ModelCapacityError(f"more than {self.slots} distinct successors seen for ({x}, {a})")

    def p_hat(self, x: int, a: int, y: int) -> float:
        if self.n[x, a] <= 0:
            return 0.0
        for k in range(self.slots):
            if self.succ[x, a, k] == y:
                return float(self.cnt[x, a, k] / self.n[x, a])
            if self.succ[x, a, k] < 0:
                break
        return 0.0

    def p_hat_row(self, x: int, a: int) -> dict[int, float]:
        if self.n[x, a] <= 0:
            return {}
        return {
            int(y): float(c / self.n[x, a])
            for y, c in zip(self.succ[x, a], self.cnt[x, a])
            if y >= 0 and c > 0
        }

    def edge_weight(self, x: int, y: int) -> float:
        """max over actions of p_hat(x, a, y)."""
        return max((self.p_hat(x, a, y) for a in range(self.num_actions)), default=0.0)

    def adjacency(self, x: int) -> set[int]:
        out = set()
        for a in range(self.num_actions):
            out.update(self.p_hat_row(x, a))
        return out

    def to_json(self) -> dict:
        rows = []
        for x, a in zip(*np.nonzero(self.n > 0)):
            counts = {str(int(y)): float(c) for y, c in zip(self.succ[x, a], self.cnt[x, a]) if y >= 0}
            rows.append({"x": int(x), "a": int(a), "n": float(self.n[x, a]), "counts": counts})
        return {"num_states": self.num_states, "num_actions": self.num_actions, "slots": self.slots, "rows": rows}

    @classmethod
    def from_json(cls, doc) -> "LearnedModel":
        if isinstance(doc, str):
            doc = json.loads(doc)
        model = cls(doc["num_states"], doc["num_actions"], doc.get("slots"))
        for row in doc["rows"]:
            x, a = row["x"], row["a"]
            model.n[x, a] = row["n"]
            for k, (y, c) in enumerate(row["counts"].items()):
                model.succ[x, a, k] = int(y)
                model.cnt[x, a, k] = c
        return model


def hop_distances(model: LearnedModel, x_goal, x_avoid) -> np.ndarray:
    """J_{x, X_goal} for every x (inf when unreachable), by reverse BFS."""
    n = model.num_states
    preds = [[] for _ in range(n)]
    for x in range(n):
        for y in model.adjacency(x):
            preds[y].append(x)
    dist = np.full(n, np.inf)
    queue = deque()
    for g in sorted(x_goal):
        dist[g] = 0
        queue.append(g)
    while queue:
        y = queue.popleft()
        for x in preds[y]:
            if dist[x] == np.inf and x not in x_avoid:
                dist[x] = dist[y] + 1
                queue.append(x)
    return dist


def min_hop_paths(model: LearnedModel, x_t: int, x_goal, x_avoid, cap: int = MAX_PATHS):
    """All shortest avoid-respecting paths from x_t into x_goal.

    Returns ``(J, paths)`` with paths in lexicographic order, at most ``cap``
    of them.  ``x_t`` in ``x_goal`` gives ``(0, [])``; no path gives
    ``(inf, [])``.
    """
    x_goal = set(x_goal)
    x_avoid = set(x_avoid) - x_goal
    if x_t in x_goal:
        return 0, []
    # forward layers from x_t; goal states end a path and are not expanded
    dist = {x_t: 0}
    layer = [x_t]
    J = None
    while layer and J is None:
        nxt = []
        for u in layer:
            if u in x_goal:
                continue
            for v in sorted(model.adjacency(u)):
                if v in dist or v in x_avoid:
                    continue
                dist[v] = dist[u] + 1
                nxt.append(v)
        if any(v in x_goal for v in nxt):
            J = dist[nxt[0]]
        layer = nxt
    if J is None:
        return float("inf"), []

    paths = []

    def extend(path):
        if len(paths) >= cap:
            return
        u = path[-1]
        d = len(path) - 1
        if d == J:
            if u in x_goal:
                paths.append(tuple(path))
            return
        if u in x_goal:
            return
        for v in sorted(model.adjacency(u)):
            if dist.get(v) == d + 1 and v not in x_avoid:
                path.append(v)
                extend(path)
                path.pop()

    extend([x_t])
    return J, paths


def path_cost(model: LearnedModel, path) -> float:
    """Product of max_a p_hat along the path (multiplied from the far end)."""
    c = 1.0
    for u, v in reversed(list(zip(path[:-1], path[1:]))):
        c = model.edge_weight(u, v) * c
    return c


def best_path(model: LearnedModel, x_t, x_goal, x_avoid, cap: int = MAX_PATHS):
    """(J, p*, C(p*)) with ties going to the lexicographically smallest path."""
    J, paths = min_hop_paths(model, x_t, x_goal, x_avoid, cap)
    if not paths:
        return J, None, 0.0
    best = max(paths, key=lambda p: (path_cost(model, p), tuple(-s for s in p)))
    return J, best, path_cost(model, best)


def greedy_toward(model: LearnedModel, x: int, y: int, available=None) -> int:
    """argmax_a p_hat(x, a, y), lowest index on ties; -1 when all are 0."""
    best_a, best_p = -1, 0.0
    for a in range(model.num_actions):
        if available is not None and not available[a]:
            continue
        p = model.p_hat(x, a, y)
        if p > best_p:
            best_a, best_p = a, p
    return best_a


def biased_target(model: LearnedModel, x_t: int, goal_mask, avoid_mask):
    """Kernel-backed (a_b, x_b, J); a_b = -1 requests the random fallback."""
    n = model.num_states
    dist = np.empty(n, dtype=np.int64)
    order = np.empty(n, dtype=np.int64)
    val = np.empty(n)
    return kernels.biased_target(
        model.n, model.succ, model.cnt, int(x_t),
        np.ascontiguousarray(goal_mask, dtype=np.bool_), np.ascontiguousarray(avoid_mask, dtype=np.bool_),
        dist, order, val,
    )


def biased_action(model: LearnedModel, space, x_t: int, q_t: int, rng: np.random.Generator, target_set: int | None = None) -> int:
    """a_b at the product state (x_t, q_t); random available action on fallback.

    ``space`` is a ``ProductSpace``; for an LDBA ``target_set`` picks F_j
    (1-based) and an epsilon move into Q_goal is returned as its product
    action index.
    """
    j = space._j(target_set)
    if space.is_ldba and space.eps_goal[q_t, j] >= 0:
        return space.num_a + int(space.eps_goal[q_t, j])
    a_b, _, _ = biased_target(model, x_t, space.goal_mask[q_t, j], space.avoid_mask[q_t, j])
    if a_b >= 0:
        return int(a_b)
    acts = space.available(space.index(x_t, q_t))
    return int(acts[int(rng.integers(len(acts)))])


def x_closer_set(model: LearnedModel, x_t: int, x_goal, x_avoid) -> set[int]:
    """One-hop neighbours of x_t whose distance to the goal is one less."""
    x_goal = set(x_goal)
    dist = hop_distances(model, x_goal, set(x_avoid) - x_goal)
    # the start itself is never excluded, even when it lies in x_avoid
    J, _ = min_hop_paths(model, x_t, x_goal, x_avoid, cap=1)
    if not np.isfinite(J) or J == 0:
        return set()
    return {y for y in model.adjacency(x_t) if dist[y] == J - 1}
