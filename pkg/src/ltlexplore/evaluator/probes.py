"""Exact checks of the sample-efficiency and policy-improvement statements.

Everything here uses ground-truth transition probabilities and exhaustive
enumeration, so it is only meant for small instances.  The exploration
policies are evaluated at product states ``(x, q)`` of a DRA product; the
biased action comes from the instance's learned model.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from ..automaton import bundled_automaton
from ..gridworld import LabelingSpec, generate
from ..learner import action_probabilities, epsilon_greedy_probabilities, policy_matrix
from ..model import LearnedModel, best_path, biased_target, hop_distances, min_hop_paths, x_closer_set
from ..product import ProductSpace, RewardParams
from .pmdp import build_explicit_pmdp
from .satisfaction import action_values, policy_value

TOL = 1e-9
LINE_SEARCH_STEPS = 16
MAX_HOPS = 4

LITERAL = "literal"
EXACT = "exact"


@dataclass
class PathProbe:
    path: tuple
    beta: float
    eta: float


@dataclass
class ProbeInstance:
    """A product state (x_t, q_t) together with Q-values and a learned model."""

    space: ProductSpace
    model: LearnedModel
    Q: np.ndarray
    x_t: int
    q_t: int
    name: str = ""
    _ab: dict = field(default_factory=dict, repr=False)

    @property
    def mdp(self):
        return self.space.mdp

    def goal(self, q=None) -> np.ndarray:
        return self.space.goal_mask[self.q_t if q is None else q, 0]

    def avoid(self, q=None) -> np.ndarray:
        return self.space.avoid_mask[self.q_t if q is None else q, 0]

    def biased(self, x: int, q: int | None = None) -> tuple[int, int, int]:
        """(a_b, x_b, J) at (x, q); a_b = -1 when the model offers no bias."""
        q = self.q_t if q is None else q
        key = (x, q)
        if key not in self._ab:
            self._ab[key] = tuple(int(v) for v in biased_target(self.model, x, self.goal(q), self.avoid(q)))
        return self._ab[key]

    def available(self, x: int) -> list[int]:
        return self.mdp.available_actions(x)

    def q_row(self, x: int, q: int) -> np.ndarray:
        return self.Q[self.space.index(x, q)]

    def p(self, x: int, a: int, y: int) -> float:
        return self.mdp.transition_row(x, a).get(y, 0.0)

    def distribution(self, x: int, q: int, eps: float, delta_b: float, delta_e: float) -> np.ndarray:
        """(eps, delta)-greedy action distribution; no bias available spreads delta_b uniformly."""
        acts = self.available(x)
        a_b = self.biased(x, q)[0]
        if a_b < 0:
            return epsilon_greedy_probabilities(self.q_row(x, q), acts, eps)
        return action_probabilities(self.q_row(x, q), acts, a_b, eps, delta_b, delta_e)

    def next_state_probs(self, x: int, dist: np.ndarray) -> dict[int, float]:
        out: dict[int, float] = {}
        for a in self.available(x):
            if dist[a] == 0.0:
                continue
            for y, p in self.mdp.transition_row(x, a).items():
                out[y] = out.get(y, 0.0) + dist[a] * p
        return out

    def step_q(self, q: int, x: int, y: int) -> int:
        return int(self.space.next_q[q, x] if self.space.label_source else self.space.next_q[q, y])


# -- path probabilities --------------------------------------------------------
def _greedy(values, acts) -> int:
    best = acts[0]
    for a in acts:
        if values[a] > values[best]:
            best = a
    return best


def beta_of_path(inst: ProbeInstance, path, eps: float, delta_b: float, delta_e: float, form: str = LITERAL) -> float:
    """Probability-style score of generating ``path`` under the (eps, delta)-greedy policy.

    ``literal`` charges delta_e / |A(x)| per step for the random arm;
    ``exact`` uses the true one-step probability sum_a mu(x, a) P(x, a, x').
    """
    q = inst.q_t
    out = 1.0
    for x, y in zip(path[:-1], path[1:]):
        if form == EXACT:
            dist = inst.distribution(x, q, eps, delta_b, delta_e)
            term = sum(dist[a] * inst.p(x, a, y) for a in inst.available(x))
        else:
            acts = inst.available(x)
            a_star = _greedy(inst.q_row(x, q), acts)
            a_b = inst.biased(x, q)[0]
            bias = inst.p(x, a_b, y) if a_b >= 0 else sum(inst.p(x, a, y) for a in acts) / len(acts)
            term = bias * delta_b + inst.p(x, a_star, y) * (1.0 - eps) + delta_e / len(acts)
        out *= term
        q = inst.step_q(q, x, y)
    return out


def eta_of_path(inst: ProbeInstance, path, eps: float, form: str = LITERAL) -> float:
    """The same score under plain eps-greedy exploration."""
    return beta_of_path(inst, path, eps, 0.0, eps, form)


def path_probes(inst: ProbeInstance, eps, delta_b, delta_e, form=EXACT) -> tuple[list[PathProbe], tuple | None]:
    """One probe per min-hop path from x_t, plus the path the bias follows."""
    _, paths = min_hop_paths(inst.model, inst.x_t, _ids(inst.goal()), _ids(inst.avoid()))
    _, star, _ = best_path(inst.model, inst.x_t, _ids(inst.goal()), _ids(inst.avoid()))
    probes = [
        PathProbe(p, beta_of_path(inst, p, eps, delta_b, delta_e, form), eta_of_path(inst, p, eps, form))
        for p in paths
    ]
    return probes, star


def _ids(mask) -> set[int]:
    return set(np.flatnonzero(mask).tolist())


def trajectory_tree(inst: ProbeInstance, steps: int, eps, delta_b, delta_e) -> dict[tuple, tuple[float, int]]:
    """Every state sequence of length ``steps`` from x_t with its probability and final q."""
    cache: dict = {}
    out: dict[tuple, tuple[float, int]] = {}

    def rec(seq, q, prob):
        x = seq[-1]
        if len(seq) == steps + 1:
            out[tuple(seq)] = (prob, q)
            return
        key = (x, q)
        if key not in cache:
            cache[key] = inst.next_state_probs(x, inst.distribution(x, q, eps, delta_b, delta_e))
        for y, p in sorted(cache[key].items()):
            if p > 0.0:
                seq.append(y)
                rec(seq, inst.step_q(q, x, y), prob * p)
                seq.pop()

    rec([inst.x_t], inst.q_t, 1.0)
    return out


# -- one-step probe ------------------------------------------------------------
def one_step_probe(inst: ProbeInstance, eps: float, delta_b: float) -> dict:
    """Exact P(x_{t+1} in X_closer) and P(x_{t+1} = x_b) with and without bias."""
    delta_e = eps - delta_b
    x, q = inst.x_t, inst.q_t
    closer = x_closer_set(inst.model, x, _ids(inst.goal()), _ids(inst.avoid()))
    a_b, x_b, _ = inst.biased(x)
    mu_b = inst.distribution(x, q, eps, delta_b, delta_e)
    mu_g = inst.distribution(x, q, eps, 0.0, eps)
    out = {"closer": sorted(closer), "x_b": x_b, "a_b": a_b}
    for tag, mu in (("b", mu_b), ("g", mu_g)):
        p_closer = p_xb = 0.0
        for a in inst.available(x):
            for y, p in inst.mdp.transition_row(x, a).items():
                w = mu[a] * p
                if y in closer:
                    p_closer += w
                if y == x_b:
                    p_xb += w
        out[f"P_{tag}_closer"] = p_closer
        out[f"P_{tag}_xb"] = p_xb
    return out


# -- proposition checks --------------------------------------------------------
@dataclass
class PropositionReport:
    which: int
    hypothesis_holds: bool
    conclusion_holds: bool
    details: dict = field(default_factory=dict)

    @property
    def failed(self) -> bool:
        return self.hypothesis_holds and not self.conclusion_holds


@dataclass
class ImprovementInstance:
    """Inputs for the policy-improvement check: a product with Q-values and a bias map."""

    pmdp: object
    Q: np.ndarray
    a_b: np.ndarray
    name: str = ""


def _improvement(inst: ImprovementInstance, params: dict) -> PropositionReport:
    eps = params["eps"]
    db = params["delta_b"]
    de = eps - db
    rp = params.get("reward", RewardParams())
    pm = inst.pmdp
    mu = policy_matrix(inst.Q, pm.avail, inst.a_b, eps, db, de)
    V = policy_value(pm, mu, rp)
    Qmu = action_values(pm, V, rp)
    mu2 = policy_matrix(np.where(pm.avail, Qmu, 0.0), pm.avail, inst.a_b, eps, db, de)
    V2 = policy_value(pm, mu2, rp)
    gap = float(np.min(V2 - V))
    return PropositionReport(1, True, gap >= -TOL, {"min_gain": gap})


def _search_delta(inst, eps, test) -> tuple[float, bool]:
    """Largest delta_b on the grid {0, eps/16, ..., eps} passing ``test``."""
    for k in range(LINE_SEARCH_STEPS, -1, -1):
        db = eps * k / LINE_SEARCH_STEPS
        if test(db):
            return db, True
    return 0.0, False


def proposition_check(which: int, instance, params: dict) -> PropositionReport:
    """Evaluate one proposition's hypothesis and conclusion exactly.

    ``params``: ``eps`` and ``delta_b`` (or ``line_search=True`` for 4 to 6);
    proposition 1 expects an ``ImprovementInstance``.
    """
    if which == 1:
        return _improvement(instance, params)
    inst: ProbeInstance = instance
    eps = float(params["eps"])
    if which in (2, 3):
        db = float(params["delta_b"])
        probe = one_step_probe(inst, eps, db)
        a_b, x_b = probe["a_b"], probe["x_b"]
        closer = probe["closer"]
        acts = inst.available(inst.x_t)
        base = db > 0 and a_b >= 0 and x_b in closer
        if which == 2:
            avg = max((sum(inst.p(inst.x_t, a, xb) for a in acts) / len(acts) for xb in closer), default=0.0)
            hyp = base and all(inst.p(inst.x_t, a_b, x) >= avg for x in closer)
            concl = probe["P_b_closer"] >= probe["P_g_closer"] - TOL
        else:
            hyp = base and all(inst.p(inst.x_t, a_b, x_b) >= inst.p(inst.x_t, a, x_b) for a in acts)
            concl = probe["P_b_xb"] >= probe["P_g_xb"] - TOL
        return PropositionReport(which, bool(hyp), bool(concl), probe)

    if which not in (4, 5, 6):
        raise ValueError(f"no proposition {which}")
    J, paths = min_hop_paths(inst.model, inst.x_t, _ids(inst.goal()), _ids(inst.avoid()))
    if not paths or J > MAX_HOPS:
        return PropositionReport(which, False, True, {"reason": "no bounded min-hop path"})
    _, star, _ = best_path(inst.model, inst.x_t, _ids(inst.goal()), _ids(inst.avoid()))

    def scores(db):
        b = {p: beta_of_path(inst, p, eps, db, eps - db, EXACT) for p in paths}
        e = {p: eta_of_path(inst, p, eps, EXACT) for p in paths}
        return b, e

    def hypothesis(db):
        b, e = scores(db)
        if which == 4:
            return b[star] >= max(b.values())
        if which == 5:
            return b[star] >= max(e.values())
        return sum(b.values()) >= sum(e.values())

    if params.get("line_search"):
        db, hyp = _search_delta(inst, eps, hypothesis)
    else:
        db = float(params["delta_b"])
        hyp = hypothesis(db)
    tree_b = trajectory_tree(inst, J, eps, db, eps - db)
    tree_g = trajectory_tree(inst, J, eps, 0.0, eps)
    details = {"delta_b": db, "t_star": J, "paths": len(paths), "star": star}
    if which in (4, 5):
        pb_star = tree_b.get(star, (0.0, 0))[0]
        ref = tree_b if which == 4 else tree_g
        best_other = max(ref.get(p, (0.0, 0))[0] for p in paths)
        details.update(P_star=pb_star, P_best=best_other)
        concl = pb_star >= best_other - TOL
    else:
        goal_q = inst.space.goal_q[inst.q_t][0]
        pb = sum(p for p, q in tree_b.values() if q in goal_q)
        pg = sum(p for p, q in tree_g.values() if q in goal_q)
        details.update(P_b=pb, P_g=pg)
        concl = pb >= pg - TOL
    return PropositionReport(which, bool(hyp), bool(concl), details)


# -- randomized instances -------------------------------------------------------
def _random_labeled_grid(rng):
    w, h = (int(v) for v in rng.integers(3, 6, size=2))
    n = w * h
    cells = rng.permutation(n)
    if rng.random() < 0.5:
        k = int(rng.integers(1, 3))
        labels = {int(c): "exit1" for c in cells[:k]}
        if rng.random() < 0.5:
            labels[int(cells[k])] = "exit2"
        aut = bundled_automaton("reach_exit")
        obstacles = ()
    else:
        ka, kb, ko = (int(v) for v in rng.integers(1, 3, size=3))
        labels = {int(c): "a" for c in cells[:ka]}
        labels.update({int(c): "b" for c in cells[ka : ka + kb]})
        obstacles = tuple(int(c) for c in cells[ka + kb : ka + kb + ko - 1])
        aut = bundled_automaton("sequence")
    mdp = generate(w, h, LabelingSpec(labels, obstacles), seed=int(rng.integers(2**31)))
    return mdp, aut


def _sampled_model(mdp, rng, max_samples=5) -> LearnedModel:
    model = LearnedModel(mdp.num_states, mdp.num_actions, mdp.max_support)
    for x in range(mdp.num_states):
        for a in mdp.available_actions(x):
            for _ in range(int(rng.integers(1, max_samples + 1))):
                model.record(x, a, mdp.sample_next(x, a, rng))
    return model


def _random_q(rng, shape):
    if rng.random() < 0.3:
        return rng.integers(-2, 3, size=shape).astype(float)  # plenty of ties
    return rng.normal(size=shape)


def random_probe_instance(rng: np.random.Generator, truth_model: bool = True, max_hops: int = MAX_HOPS) -> ProbeInstance:
    """Small random grid, reach or sequencing task, and a start with 1 <= J <= max_hops."""
    while True:
        mdp, aut = _random_labeled_grid(rng)
        space = ProductSpace(mdp, aut)
        q_t = space.aut.initial
        if not space.goal_q[q_t][0]:
            continue
        model = LearnedModel.from_truth(mdp) if truth_model else _sampled_model(mdp, rng)
        goal, avoid = space.goal_mask[q_t, 0], space.avoid_mask[q_t, 0]
        dist = hop_distances(model, _ids(goal), _ids(avoid) - _ids(goal))
        starts = np.flatnonzero((dist >= 1) & (dist <= max_hops) & ~avoid)
        if starts.size == 0:
            continue
        x_t = int(rng.choice(starts))
        Q = _random_q(rng, (space.num_states, space.num_actions))
        return ProbeInstance(space, model, Q, x_t, q_t, name=f"{mdp.width}x{mdp.height}:{aut.name}")


def random_improvement_instance(rng: np.random.Generator) -> ImprovementInstance:
    w, h = (int(v) for v in rng.integers(2, 5, size=2))
    n = w * h
    which = rng.integers(3)
    if which == 2:
        cells = rng.permutation(n)
        labels = {int(cells[0]): "a", int(cells[1]): "b"}
        aut = bundled_automaton("patrol")
    else:
        mdp, aut = _random_labeled_grid(rng)
        labels = None
    if labels is not None:
        mdp = generate(w, h, LabelingSpec(labels), seed=int(rng.integers(2**31)))
    pm = build_explicit_pmdp(ProductSpace(mdp, aut), state_cap=1000)
    Q = _random_q(rng, (pm.num_states, pm.num_actions)) * 10.0
    a_b = np.array([rng.choice(np.flatnonzero(row)) for row in pm.avail])
    a_b[rng.random(pm.num_states) < 0.1] = -1
    return ImprovementInstance(pm, Q, a_b, name=f"{mdp.width}x{mdp.height}:{aut.name}")


def _random_params(rng, which: int, i: int) -> dict:
    eps = float(rng.uniform(0.05, 1.0))
    params = {"eps": eps, "delta_b": float(rng.uniform(0.0, eps))}
    if which >= 4 and i % 2 == 1:
        params["line_search"] = True
    return params


def verify_propositions(instances: int = 50, seed: int = 0, which=(1, 2, 3, 4, 5, 6)) -> list[dict]:
    """Run every proposition on ``instances`` random instances; one summary row each."""
    rows = []
    for k in which:
        met = held = failures = 0
        for i in range(instances):
            rng = np.random.default_rng([seed, k, i])
            if k == 1:
                inst = random_improvement_instance(rng)
            else:
                inst = random_probe_instance(rng, truth_model=(k >= 4 or i % 2 == 0))
            rep = proposition_check(k, inst, _random_params(rng, k, i))
            met += rep.hypothesis_holds
            held += rep.hypothesis_holds and rep.conclusion_holds
            failures += rep.failed
        rows.append({"prop": k, "instances": instances, "hypothesis_met": met, "conclusion_held": held, "failures": failures})
    return rows
