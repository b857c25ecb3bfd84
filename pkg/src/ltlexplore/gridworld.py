"""Randomized grid-world MDPs and explicit (hand-written) MDPs.

Transitions are stored padded: ``succ[x, a, k]`` is the k-th successor of
``(x, a)`` (``-1`` past the end), ``prob`` the matching probability and
``cdf`` its running sum, which is what the sampling kernels use.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

ACTION_NAMES = ("L", "R", "U", "D", "idle", "UL", "UR", "DL", "DR")
# (row, col) offsets; U decreases the row index
ACTION_DELTAS = ((0, -1), (0, 1), (-1, 0), (1, 0), (0, 0), (-1, -1), (-1, 1), (1, -1), (1, 1))
IDLE = ACTION_NAMES.index("idle")
OBSTACLE_ATOM = "obs"
ROW_TOLERANCE = 1e-9


class MdpError(ValueError):
    pass


@dataclass
class GroundTruthMdp:
    actions: tuple
    available: np.ndarray  # (N, A) bool
    succ: np.ndarray  # (N, A, K) int64, -1 padded
    prob: np.ndarray  # (N, A, K) float64
    labels: list  # per state: frozenset of AP names
    width: int | None = None
    height: int | None = None
    seed: int | None = None
    state_names: list | None = None
    cdf: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        self.succ = np.ascontiguousarray(self.succ, dtype=np.int64)
        self.prob = np.ascontiguousarray(self.prob, dtype=np.float64)
        self.available = np.ascontiguousarray(self.available, dtype=np.bool_)
        cdf = np.cumsum(self.prob, axis=2)
        # guard the last live slot against round-off so u < 1 always lands
        for x, a in zip(*np.nonzero(self.available)):
            live = np.count_nonzero(self.succ[x, a] >= 0)
            cdf[x, a, live - 1 :] = 1.0
        self.cdf = cdf

    @property
    def num_states(self) -> int:
        return self.succ.shape[0]

    @property
    def num_actions(self) -> int:
        return self.succ.shape[1]

    @property
    def max_support(self) -> int:
        return self.succ.shape[2]

    def available_actions(self, x: int) -> list[int]:
        return [int(a) for a in np.flatnonzero(self.available[x])]

    def transition_row(self, x: int, a: int) -> dict[int, float]:
        if not self.available[x, a]:
            raise MdpError(f"action {self.actions[a]} is not available at state {x}")
        return {int(s): float(p) for s, p in zip(self.succ[x, a], self.prob[x, a]) if s >= 0}

    def dense(self) -> np.ndarray:
        """P as an (N, A, N) array; fine for small models only."""
        n, na, _ = self.succ.shape
        out = np.zeros((n, na, n))
        xs, as_, ks = np.nonzero(self.succ >= 0)
        np.add.at(out, (xs, as_, self.succ[xs, as_, ks]), self.prob[xs, as_, ks])
        return out

    def label_of(self, x: int) -> frozenset:
        """AP names holding at ``x``; ``OmegaAutomaton.symbol`` maps them to indices."""
        return self.labels[x]

    def sample_next(self, x: int, a: int, rng: np.random.Generator) -> int:
        if not self.available[x, a]:
            raise MdpError(f"action {self.actions[a]} is not available at state {x}")
        u = rng.random()
        k = int(np.searchsorted(self.cdf[x, a], u, side="right"))
        return int(self.succ[x, a, k])

    def cell(self, x: int) -> tuple[int, int]:
        return divmod(x, self.width)

    def name(self, x: int) -> str:
        return self.state_names[x] if self.state_names else str(x)

    def state_index(self, name: str) -> int:
        return self.state_names.index(name)

    def validate(self) -> "GroundTruthMdp":
        n, na, _ = self.succ.shape
        if self.available.shape != (n, na):
            raise MdpError("available mask has the wrong shape")
        if len(self.labels) != n:
            raise MdpError("labels must cover every state")
        if np.any(self.succ >= n):
            raise MdpError("successor id out of range")
        if np.any(self.prob < 0):
            raise MdpError("negative transition probability")
        if not self.available.any(axis=1).all():
            raise MdpError("every state needs at least one available action")
        sums = np.where(self.succ >= 0, self.prob, 0.0).sum(axis=2)
        bad = np.abs(sums - 1.0) > ROW_TOLERANCE
        bad &= self.available
        if bad.any():
            x, a = map(int, np.argwhere(bad)[0])
            raise MdpError(f"row ({x}, {self.actions[a]}) sums to {sums[x, a]:.12g}, not 1")
        return self


@dataclass(frozen=True)
class LabelingSpec:
    cells: dict  # cell id -> location AP name
    obstacles: tuple = ()

    @classmethod
    def from_json(cls, doc) -> "LabelingSpec":
        if isinstance(doc, str):
            doc = json.loads(doc)
        cells = {int(k): v for k, v in doc.get("cells", {}).items()}
        return cls(cells, tuple(int(o) for o in doc.get("obstacles", [])))

    def to_json(self) -> dict:
        return {"cells": {str(k): v for k, v in sorted(self.cells.items())}, "obstacles": list(self.obstacles)}

    def labels(self, num_states: int) -> list[frozenset]:
        out = [set() for _ in range(num_states)]
        for cell, ap in self.cells.items():
            if not 0 <= cell < num_states:
                raise MdpError(f"labeling references cell {cell}, outside 0..{num_states - 1}")
            out[cell].add(ap)
        for cell in self.obstacles:
            if not 0 <= cell < num_states:
                raise MdpError(f"obstacle cell {cell} outside 0..{num_states - 1}")
            out[cell].add(OBSTACLE_ATOM)
        return [frozenset(s) for s in out]


def _in_grid(r, c, height, width):
    return 0 <= r < height and 0 <= c < width


def generate(width: int, height: int, labeling: LabelingSpec | None = None, seed: int = 0) -> GroundTruthMdp:
    """Random grid world: each move hits its target cell with p* ~ U[0.7, 0.8].

    The remaining mass is spread over the other in-grid Moore neighbours in
    proportion to uniform draws.  Interior cells lose one random non-idle
    move; border cells lose exactly the moves that would leave the grid.
    """
    if width < 2 or height < 2:
        raise MdpError("grid needs width and height of at least 2")
    labeling = labeling or LabelingSpec({})
    n = width * height
    na = len(ACTION_NAMES)
    kmax = 8
    rng = np.random.default_rng(seed)
    available = np.zeros((n, na), dtype=bool)
    succ = np.full((n, na, kmax), -1, dtype=np.int64)
    prob = np.zeros((n, na, kmax))

    for x in range(n):
        r, c = divmod(x, width)
        moves = [a for a in range(na) if a != IDLE and _in_grid(r + ACTION_DELTAS[a][0], c + ACTION_DELTAS[a][1], height, width)]
        if len(moves) == na - 1:
            moves.pop(int(rng.integers(len(moves))))
        neighbours = [
            (r + dr) * width + (c + dc)
            for dr, dc in ACTION_DELTAS
            if (dr, dc) != (0, 0) and _in_grid(r + dr, c + dc, height, width)
        ]
        available[x, IDLE] = True
        succ[x, IDLE, 0] = x
        prob[x, IDLE, 0] = 1.0
        for a in moves:
            dr, dc = ACTION_DELTAS[a]
            target = (r + dr) * width + (c + dc)
            others = [y for y in neighbours if y != target]
            p_star = rng.uniform(0.7, 0.8)
            w = rng.uniform(size=len(others))
            shares = (1.0 - p_star) * w / w.sum() if others else np.zeros(0)
            row_succ = [target] + others
            row_prob = np.concatenate(([p_star], shares))
            if not others:
                row_prob[0] = 1.0
            row_prob[-1] = 1.0 - row_prob[:-1].sum()
            available[x, a] = True
            succ[x, a, : len(row_succ)] = row_succ
            prob[x, a, : len(row_succ)] = row_prob

    mdp = GroundTruthMdp(
        actions=ACTION_NAMES,
        available=available,
        succ=succ,
        prob=prob,
        labels=labeling.labels(n),
        width=width,
        height=height,
        seed=seed,
    )
    return mdp.validate()


def load_explicit(doc) -> GroundTruthMdp:
    """MDP from the explicit JSON form (dict or string)."""
    if isinstance(doc, (str, bytes)):
        doc = json.loads(doc)
    try:
        n = int(doc["num_states"])
        actions = tuple(doc["actions"])
        avail_lists = doc["available"]
        trans = doc["trans"]
    except KeyError as exc:
        raise MdpError(f"explicit MDP is missing field {exc}") from None
    na = len(actions)
    if len(avail_lists) != n:
        raise MdpError("available must list actions for every state")
    available = np.zeros((n, na), dtype=bool)
    for x, acts in enumerate(avail_lists):
        for a in acts:
            a = actions.index(a) if isinstance(a, str) else int(a)
            if not 0 <= a < na:
                raise MdpError(f"state {x}: action index {a} out of range")
            available[x, a] = True
    rows = {}
    for entry in trans:
        x = int(entry["x"])
        a = entry["a"]
        a = actions.index(a) if isinstance(a, str) else int(a)
        if not (0 <= x < n and 0 <= a < na):
            raise MdpError(f"transition ({x}, {a}) out of range")
        if (x, a) in rows:
            raise MdpError(f"transition ({x}, {a}) listed twice")
        row = sorted((int(k), float(p)) for k, p in entry["probs"].items() if float(p) > 0)
        rows[(x, a)] = row
    for x, a in zip(*np.nonzero(available)):
        if (int(x), int(a)) not in rows:
            raise MdpError(f"available pair ({x}, {actions[a]}) has no transition row")
    for x, a in rows:
        if not available[x, a]:
            raise MdpError(f"transition row for unavailable pair ({x}, {actions[a]})")
    kmax = max((len(r) for r in rows.values()), default=1)
    succ = np.full((n, na, kmax), -1, dtype=np.int64)
    prob = np.zeros((n, na, kmax))
    for (x, a), row in rows.items():
        for k, (y, p) in enumerate(row):
            succ[x, a, k] = y
            prob[x, a, k] = p
    raw = doc.get("labels", {})
    if isinstance(raw, dict):
        labels = [frozenset(raw.get(str(x), ())) for x in range(n)]
    else:
        labels = [frozenset(v) for v in raw]
    names = doc.get("state_names")
    mdp = GroundTruthMdp(actions, available, succ, prob, labels, state_names=list(names) if names else None)
    return mdp.validate()


def to_explicit(mdp: GroundTruthMdp) -> dict:
    doc = {"num_states": mdp.num_states}
    if mdp.state_names:
        doc["state_names"] = list(mdp.state_names)
    doc["actions"] = list(mdp.actions)
    doc["available"] = [mdp.available_actions(x) for x in range(mdp.num_states)]
    doc["trans"] = [
        {"x": x, "a": a, "probs": {str(y): p for y, p in mdp.transition_row(x, a).items()}}
        for x in range(mdp.num_states)
        for a in mdp.available_actions(x)
    ]
    doc["labels"] = {str(x): sorted(lab) for x, lab in enumerate(mdp.labels) if lab}
    if mdp.width is not None:
        doc["grid"] = {"width": mdp.width, "height": mdp.height, "seed": mdp.seed}
    return doc


def save_explicit(mdp: GroundTruthMdp, path) -> None:
    with open(path, "w") as fh:
        json.dump(to_explicit(mdp), fh, indent=1)
        fh.write("\n")


def load_explicit_file(path) -> GroundTruthMdp:
    with open(path) as fh:
        doc = json.load(fh)
    mdp = load_explicit(doc)
    grid = doc.get("grid")
    if grid:
        mdp.width, mdp.height, mdp.seed = grid["width"], grid["height"], grid.get("seed")
    return mdp


def bundled_env(name: str) -> GroundTruthMdp:
    from importlib import resources

    if not name.endswith(".json"):
        name += ".json"
    text = resources.files("ltlexplore").joinpath("data").joinpath("envs").joinpath(name).read_text()
    return load_explicit(text)


def bundled_labeling(name: str) -> LabelingSpec:
    from importlib import resources

    if not name.endswith(".json"):
        name += ".json"
    text = resources.files("ltlexplore").joinpath("data").joinpath("envs").joinpath(name).read_text()
    return LabelingSpec.from_json(text)
