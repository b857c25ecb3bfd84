"""omega-automata (DRA / LDBA) with feasibility pruning and hop distances."""

from __future__ import annotations

import itertools
import math
import warnings
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Sequence

import numpy as np

from .labels import LabelExpr

DRA = "DRA"
LDBA = "LDBA"

# cap on plain atoms enumerated when testing edge feasibility
MAX_PLAIN_ATOMS = 10


class AutomatonError(ValueError):
    """Base class for invalid or unsupported automata."""


class NondeterminismError(AutomatonError):
    pass


class MalformedAutomatonError(AutomatonError):
    pass


class UnsatisfiableTaskWarning(UserWarning):
    pass


@dataclass(frozen=True)
class AtomicProposition:
    name: str
    is_location: bool = True


@dataclass(frozen=True)
class RabinPair:
    good: frozenset
    bad: frozenset


@dataclass(frozen=True)
class Transition:
    label: LabelExpr
    target: int


@dataclass
class OmegaAutomaton:
    kind: str
    num_states: int
    initial: int
    aps: tuple
    transitions: list  # per state: list[Transition]
    epsilon_transitions: list = field(default_factory=list)  # per state: list[int]
    rabin_pairs: tuple = ()
    buchi_sets: tuple = ()
    feasible_edge: list | None = None
    dist_to_acc: np.ndarray | None = None
    dist_to_set: np.ndarray | None = None  # LDBA only, shape (f, Q)
    name: str = ""

    def __post_init__(self):
        if not self.epsilon_transitions:
            self.epsilon_transitions = [[] for _ in range(self.num_states)]

    @property
    def ap_names(self) -> list[str]:
        return [ap.name for ap in self.aps]

    @property
    def is_pruned(self) -> bool:
        return self.dist_to_acc is not None

    @property
    def num_acceptance_sets(self) -> int:
        return len(self.rabin_pairs) if self.kind == DRA else len(self.buchi_sets)

    def accepting_states(self) -> frozenset:
        """Union of the G_i (DRA) or of the F_j (LDBA)."""
        if self.kind == DRA:
            return frozenset().union(*(p.good for p in self.rabin_pairs))
        return frozenset().union(*self.buchi_sets)

    def symbol(self, names) -> frozenset:
        lookup = {ap.name: i for i, ap in enumerate(self.aps)}
        return frozenset(lookup[n] for n in names if n in lookup)

    def label_successor(self, q: int, symbol) -> int | None:
        """Target of the unique edge whose guard holds, or None."""
        for tr in self.transitions[q]:
            if tr.label.evaluate(symbol):
                return tr.target
        return None

    def deterministic_states(self) -> frozenset:
        """Q_D: everything reachable from epsilon targets (all states if none)."""
        if not any(self.epsilon_transitions):
            return frozenset(range(self.num_states))
        seen = set()
        stack = [t for outs in self.epsilon_transitions for t in outs]
        while stack:
            q = stack.pop()
            if q in seen:
                continue
            seen.add(q)
            stack.extend(tr.target for tr in self.transitions[q])
        return frozenset(seen)


def location_indices(aps) -> list[int]:
    return [i for i, ap in enumerate(aps) if ap.is_location]


def is_feasible_symbol(symbol, aps) -> bool:
    """At most one location atom may hold at once; plain atoms are free."""
    return sum(1 for i in symbol if aps[i].is_location) <= 1


def feasible_symbols(aps, relevant=None):
    """Every feasible symbol over the atoms in ``relevant`` (default: all).

    Atoms outside ``relevant`` cannot change a guard's value, so restricting
    to the atoms a state's guards mention keeps the enumeration small.
    """
    indices = range(len(aps)) if relevant is None else sorted(relevant)
    locs = [i for i in indices if aps[i].is_location]
    plains = [i for i in indices if not aps[i].is_location]
    if len(plains) > MAX_PLAIN_ATOMS:
        raise AutomatonError(
            f"{len(plains)} plain atoms exceed the enumeration cap of {MAX_PLAIN_ATOMS}"
        )
    location_choices = [()] + [(i,) for i in locs]
    for loc in location_choices:
        for bits in itertools.product((False, True), repeat=len(plains)):
            yield frozenset(loc + tuple(p for p, b in zip(plains, bits) if b))


def _state_symbols(aut, q):
    relevant = set()
    for tr in aut.transitions[q]:
        relevant |= tr.label.atoms()
    return feasible_symbols(aut.aps, relevant)


def check_label_determinism(aut: OmegaAutomaton):
    """Raise unless, per state, no feasible symbol enables two edges.

    Returns the list of (state, symbol) pairs with no enabled edge; those are
    legal at load time (an incomplete automaton) but make ``step`` fail.
    """
    missing = []
    for q in range(aut.num_states):
        for sym in _state_symbols(aut, q):
            hits = [tr.target for tr in aut.transitions[q] if tr.label.evaluate(sym)]
            if len(hits) > 1:
                names = sorted(aut.aps[i].name for i in sym)
                raise NondeterminismError(
                    f"state {q}: symbol {{{', '.join(names)}}} enables edges to {hits}"
                )
            if not hits:
                missing.append((q, sym))
    return missing


def validate(aut: OmegaAutomaton) -> OmegaAutomaton:
    n = aut.num_states
    if n < 1:
        raise MalformedAutomatonError("automaton has no states")
    if not 0 <= aut.initial < n:
        raise MalformedAutomatonError(f"initial state {aut.initial} out of range")
    if len(aut.transitions) != n:
        raise MalformedAutomatonError("transition table does not cover every state")
    names = [ap.name for ap in aut.aps]
    if len(set(names)) != len(names):
        raise MalformedAutomatonError("duplicate atomic proposition names")
    for q, outs in enumerate(aut.transitions):
        for tr in outs:
            if not 0 <= tr.target < n:
                raise MalformedAutomatonError(f"edge {q} -> {tr.target}: dangling state id")
            bad = [i for i in tr.label.atoms() if i >= len(aut.aps)]
            if bad:
                raise MalformedAutomatonError(f"edge {q} -> {tr.target}: AP index {bad[0]} out of range")
    for q, outs in enumerate(aut.epsilon_transitions):
        for t in outs:
            if not 0 <= t < n:
                raise MalformedAutomatonError(f"epsilon edge {q} -> {t}: dangling state id")
    if aut.kind == DRA:
        if any(aut.epsilon_transitions):
            raise MalformedAutomatonError("a DRA cannot have epsilon transitions")
        if not aut.rabin_pairs:
            raise MalformedAutomatonError("a DRA needs at least one Rabin pair")
        for p in aut.rabin_pairs:
            if any(not 0 <= q < n for q in p.good | p.bad):
                raise MalformedAutomatonError("Rabin pair references a dangling state id")
    elif aut.kind == LDBA:
        if not aut.buchi_sets:
            raise MalformedAutomatonError("an LDBA needs at least one accepting set")
        for fs in aut.buchi_sets:
            if any(not 0 <= q < n for q in fs):
                raise MalformedAutomatonError("accepting set references a dangling state id")
        q_det = aut.deterministic_states()
        for fs in aut.buchi_sets:
            if not fs <= q_det:
                raise MalformedAutomatonError("accepting sets must lie in the deterministic part")
        for q, outs in enumerate(aut.epsilon_transitions):
            if outs and q in q_det:
                raise MalformedAutomatonError(f"epsilon edge leaves deterministic state {q}")
            if any(t not in q_det for t in outs):
                raise MalformedAutomatonError("epsilon edges must enter the deterministic part")
    else:
        raise MalformedAutomatonError(f"unknown automaton kind {aut.kind!r}")
    check_label_determinism(aut)
    return aut


def _reverse_bfs(num_states, edges, sources):
    """Hop distance to ``sources`` over directed ``edges`` (q -> q')."""
    preds = [[] for _ in range(num_states)]
    for q, t in edges:
        preds[t].append(q)
    dist = np.full(num_states, np.inf)
    queue = deque()
    for s in sorted(sources):
        dist[s] = 0.0
        queue.append(s)
    while queue:
        v = queue.popleft()
        for u in preds[v]:
            if dist[u] == np.inf:
                dist[u] = dist[v] + 1
                queue.append(u)
    return dist


def prune_and_index(aut: OmegaAutomaton) -> OmegaAutomaton:
    """Flag feasible edges and fill the distance-to-acceptance tables."""
    feasible = []
    for q in range(aut.num_states):
        syms = list(_state_symbols(aut, q))
        feasible.append([any(tr.label.evaluate(s) for s in syms) for tr in aut.transitions[q]])

    edges = [
        (q, tr.target)
        for q in range(aut.num_states)
        for tr, ok in zip(aut.transitions[q], feasible[q])
        if ok
    ]
    edges += [(q, t) for q, outs in enumerate(aut.epsilon_transitions) for t in outs]

    dist_to_set = None
    if aut.kind == DRA:
        dist = _reverse_bfs(aut.num_states, edges, aut.accepting_states())
    else:
        dist_to_set = np.vstack([_reverse_bfs(aut.num_states, edges, fs) for fs in aut.buchi_sets])
        dist = dist_to_set.min(axis=0)

    pruned = replace(aut, feasible_edge=feasible, dist_to_acc=dist, dist_to_set=dist_to_set)
    if not np.isfinite(deadlock_distance(pruned)[aut.initial]):
        warnings.warn(
            "no feasible run from the initial state reaches acceptance; the task cannot be satisfied",
            UnsatisfiableTaskWarning,
            stacklevel=2,
        )
    return pruned


def deadlock_distance(aut: OmegaAutomaton) -> np.ndarray:
    """Distance whose infinity marks rejecting traps.

    For an LDBA every accepting set has to stay reachable, so the worst set
    counts.
    """
    _require_pruned(aut)
    if aut.kind == LDBA:
        return aut.dist_to_set.max(axis=0)
    return aut.dist_to_acc


def deadlock_states(aut: OmegaAutomaton) -> np.ndarray:
    return ~np.isfinite(deadlock_distance(aut))


def _require_pruned(aut):
    if not aut.is_pruned:
        raise AutomatonError("automaton must go through prune_and_index first")


def step(aut: OmegaAutomaton, q: int, label) -> int | set:
    """Successor on a symbol; for an LDBA also the epsilon successors."""
    target = aut.label_successor(q, label)
    if aut.kind == DRA:
        if target is None:
            raise MalformedAutomatonError(f"state {q} has no edge for symbol {sorted(label)}")
        return target
    out = set(aut.epsilon_transitions[q])
    if target is not None:
        out.add(target)
    return out


def feasible_successors(aut: OmegaAutomaton, q: int) -> set[int]:
    _require_pruned(aut)
    out = {tr.target for tr, ok in zip(aut.transitions[q], aut.feasible_edge[q]) if ok}
    out.update(aut.epsilon_transitions[q])
    return out


def goal_states(aut: OmegaAutomaton, q: int, visit_set=None, rng=None, target_set=None) -> set[int]:
    """Automaton states one feasible hop closer to acceptance than ``q``.

    LDBA: one unvisited accepting set is drawn from ``visit_set`` with ``rng``
    (or given directly as ``target_set``) and distances are taken to it.
    ``visit_set`` holds 1-based set indices.
    """
    _require_pruned(aut)
    if aut.kind == DRA:
        dist = aut.dist_to_acc
        accepting = aut.accepting_states()
    else:
        if target_set is None:
            pool = sorted(visit_set) if visit_set else list(range(1, len(aut.buchi_sets) + 1))
            if rng is None:
                rng = np.random.default_rng(0)
            target_set = int(pool[int(rng.integers(len(pool)))])
        dist = aut.dist_to_set[target_set - 1]
        accepting = aut.buchi_sets[target_set - 1]

    d = dist[q]
    succ = feasible_successors(aut, q)
    if not np.isfinite(d):
        return set()
    if d == 0:
        return {t for t in succ if t in accepting}
    return {t for t in succ if dist[t] == d - 1}


def update_visit_set(aut: OmegaAutomaton, visit_set, q_reached: int) -> frozenset:
    """Drop the sets containing ``q_reached``; refill once all were seen."""
    remaining = frozenset(j for j in visit_set if q_reached not in aut.buchi_sets[j - 1])
    if not remaining:
        return frozenset(range(1, len(aut.buchi_sets) + 1))
    return remaining


def full_visit_set(aut: OmegaAutomaton) -> frozenset:
    return frozenset(range(1, len(aut.buchi_sets) + 1))


def unreachable_states(aut: OmegaAutomaton) -> set[int]:
    seen = {aut.initial}
    stack = [aut.initial]
    while stack:
        q = stack.pop()
        for t in [tr.target for tr in aut.transitions[q]] + list(aut.epsilon_transitions[q]):
            if t not in seen:
                seen.add(t)
                stack.append(t)
    return set(range(aut.num_states)) - seen


def describe(aut: OmegaAutomaton) -> str:
    lines = [f"{aut.kind} '{aut.name}': {aut.num_states} states, initial {aut.initial}"]
    if aut.is_pruned:
        d = ["inf" if not math.isfinite(v) else str(int(v)) for v in aut.dist_to_acc]
        lines.append("dist_to_acc: " + " ".join(d))
    return "\n".join(lines)


def make_automaton(
    kind: str,
    num_states: int,
    initial: int,
    aps: Sequence[AtomicProposition],
    transitions,
    *,
    epsilon_transitions=None,
    rabin_pairs=(),
    buchi_sets=(),
    name: str = "",
) -> OmegaAutomaton:
    """Build and validate an (unpruned) automaton."""
    aut = OmegaAutomaton(
        kind=kind,
        num_states=num_states,
        initial=initial,
        aps=tuple(aps),
        transitions=[list(outs) for outs in transitions],
        epsilon_transitions=[list(o) for o in (epsilon_transitions or [[] for _ in range(num_states)])],
        rabin_pairs=tuple(RabinPair(frozenset(p.good), frozenset(p.bad)) for p in rabin_pairs),
        buchi_sets=tuple(frozenset(s) for s in buchi_sets),
        name=name,
    )
    return validate(aut)
