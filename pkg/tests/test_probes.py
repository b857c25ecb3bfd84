import itertools

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ltlexplore.evaluator import (
    ProbeInstance,
    beta_of_path,
    eta_of_path,
    one_step_probe,
    proposition_check,
    trajectory_tree,
    verify_propositions,
)
from ltlexplore.evaluator.probes import EXACT, LITERAL, random_improvement_instance, random_probe_instance
from ltlexplore.model import LearnedModel, min_hop_paths, path_cost

EXIT2, A, B, C, D, E, EXIT1 = range(7)
P1 = (C, D, E, EXIT1)
P2 = (C, B, A, EXIT2)


@pytest.fixture
def corridor_probe(corridor_space):
    # greedy action a1 everywhere, so bias and greedy disagree along P1
    Q = np.zeros((corridor_space.num_states, corridor_space.num_actions))
    Q[:, 0] = 1.0
    return ProbeInstance(corridor_space, LearnedModel.from_truth(corridor_space.mdp), Q, C, 0)


def hand_mu(inst, x, q, eps, db, de):
    """The greedy / biased / uniform mixture, written out from scratch."""
    acts = inst.available(x)
    row = inst.q_row(x, q)
    a_star = min(acts, key=lambda a: (-row[a], a))
    a_b = inst.biased(x, q)[0]
    mu = {a: de / len(acts) for a in acts}
    mu[a_star] += 1 - eps
    if a_b >= 0:
        mu[a_b] += db
    else:
        for a in acts:
            mu[a] += db / len(acts)
    return mu


def enumerate_path(inst, path, eps, db, de):
    """Sum over every action sequence of the probability of producing ``path``."""
    q = inst.q_t
    steps = list(zip(path[:-1], path[1:]))
    mus, qs = [], []
    for x, y in steps:
        mus.append(hand_mu(inst, x, q, eps, db, de))
        qs.append(q)
        q = inst.step_q(q, x, y)
    total = 0.0
    for acts in itertools.product(*[sorted(m) for m in mus]):
        p = 1.0
        for (x, y), a, mu in zip(steps, acts, mus):
            p *= mu[a] * inst.p(x, a, y)
        total += p
    return total


class TestPathScores:
    def test_all_bias_is_product_of_biased_steps(self, corridor_probe):
        # delta_b = 1 forces eps = 1, delta_e = 0
        assert beta_of_path(corridor_probe, P1, 1.0, 1.0, 0.0) == pytest.approx(0.51 * 0.9 * 1.0, abs=1e-15)
        assert beta_of_path(corridor_probe, P1, 1.0, 1.0, 0.0) == pytest.approx(path_cost(corridor_probe.model, P1))

    def test_pure_greedy(self, corridor_probe):
        # greedy a1 from C: 0.1 to D, then 0.1 to E, then 0 to Exit1
        assert beta_of_path(corridor_probe, P2, 0.0, 0.0, 0.0) == pytest.approx(0.9 * 0.6 * 0.6)
        assert beta_of_path(corridor_probe, P1, 0.0, 0.0, 0.0) == 0.0

    def test_eta_fully_random(self, corridor_probe):
        assert eta_of_path(corridor_probe, P1, 1.0) == pytest.approx(0.5 ** 3)

    def test_eta_greedy(self, corridor_probe):
        assert eta_of_path(corridor_probe, P2, 0.0) == beta_of_path(corridor_probe, P2, 0.0, 0.0, 0.0)

    @pytest.mark.parametrize("eps,db", [(0.3, 0.1), (0.8, 0.5), (1.0, 1.0), (0.5, 0.0)])
    def test_exact_form_matches_enumeration(self, corridor_probe, eps, db):
        for path in (P1, P2):
            exact = beta_of_path(corridor_probe, path, eps, db, eps - db, EXACT)
            assert exact == pytest.approx(enumerate_path(corridor_probe, path, eps, db, eps - db), abs=1e-12)
            tree = trajectory_tree(corridor_probe, 3, eps, db, eps - db)
            assert tree[path][0] == pytest.approx(exact, abs=1e-12)

    def test_literal_form_is_not_a_probability(self, corridor_probe):
        # C -> E is impossible in one step, yet the random arm still charges 1/|A|
        impossible = (C, E)
        assert beta_of_path(corridor_probe, impossible, 1.0, 0.0, 1.0, LITERAL) == 0.5
        assert beta_of_path(corridor_probe, impossible, 1.0, 0.0, 1.0, EXACT) == 0.0

    def test_tree_is_a_distribution(self, corridor_probe):
        tree = trajectory_tree(corridor_probe, 4, 0.6, 0.2, 0.4)
        assert sum(p for p, _ in tree.values()) == pytest.approx(1.0, abs=1e-12)


@settings(max_examples=30)
@given(st.integers(0, 2**31), st.floats(0, 1), st.floats(0, 1), st.sampled_from([LITERAL, EXACT]))
def test_scores_shrink_along_paths(seed, eps, frac, form):
    rng = np.random.default_rng(seed)
    inst = random_probe_instance(rng, truth_model=bool(seed % 2))
    db = eps * frac
    from ltlexplore.evaluator.probes import _ids

    _, paths = min_hop_paths(inst.model, inst.x_t, _ids(inst.goal()), _ids(inst.avoid()))
    for path in paths[:5]:
        prev = 1.0
        for k in range(2, len(path) + 1):
            b = beta_of_path(inst, path[:k], eps, db, eps - db, form)
            e = eta_of_path(inst, path[:k], eps, form)
            assert 0.0 <= b <= prev + 1e-15 and b <= 1.0 + 1e-15
            assert 0.0 <= e <= 1.0 + 1e-15
            prev = b


class TestOneStep:
    def test_matches_brute_force(self, corridor_probe):
        eps, db = 0.7, 0.4
        probe = one_step_probe(corridor_probe, eps, db)
        assert probe["closer"] == [B, D] and probe["x_b"] == D
        for tag, d in (("b", db), ("g", 0.0)):
            mu = hand_mu(corridor_probe, C, 0, eps, d, eps - d)
            p_closer = sum(mu[a] * corridor_probe.p(C, a, y) for a in mu for y in (B, D))
            p_xb = sum(mu[a] * corridor_probe.p(C, a, D) for a in mu)
            assert probe[f"P_{tag}_closer"] == pytest.approx(p_closer, abs=1e-15)
            assert probe[f"P_{tag}_xb"] == pytest.approx(p_xb, abs=1e-15)

    def test_bias_helps_reach_waypoint(self, corridor_probe):
        probe = one_step_probe(corridor_probe, 0.7, 0.4)
        assert probe["P_b_xb"] >= probe["P_g_xb"]

    def test_no_bias_no_difference(self, corridor_probe):
        probe = one_step_probe(corridor_probe, 0.7, 0.0)
        assert probe["P_b_closer"] == probe["P_g_closer"]
        assert probe["P_b_xb"] == probe["P_g_xb"]


class TestPropositions:
    def test_violated_hypothesis_makes_no_claim(self, corridor_probe):
        # a_b = a2 reaches B with 0.49 < (0.9 + 0.49) / 2
        rep = proposition_check(2, corridor_probe, {"eps": 0.5, "delta_b": 0.3})
        assert not rep.hypothesis_holds and not rep.failed

    def test_waypoint_statement_on_corridor(self, corridor_probe):
        rep = proposition_check(3, corridor_probe, {"eps": 0.5, "delta_b": 0.3})
        assert rep.hypothesis_holds and rep.conclusion_holds

    def test_degenerate_bias_holds_with_equality(self, corridor_probe):
        for which in (2, 3):
            rep = proposition_check(which, corridor_probe, {"eps": 0.5, "delta_b": 0.0})
            assert not rep.failed
            key = "closer" if which == 2 else "xb"
            assert rep.details[f"P_b_{key}"] == rep.details[f"P_g_{key}"]

    def test_full_bias_follows_best_path(self, corridor_probe):
        rep = proposition_check(4, corridor_probe, {"eps": 1.0, "delta_b": 1.0})
        assert rep.hypothesis_holds and rep.conclusion_holds
        assert rep.details["star"] == P1
        tree = trajectory_tree(corridor_probe, 3, 1.0, 1.0, 0.0)
        assert tree[P1][0] == pytest.approx(0.459) and tree[P1][0] > tree.get(P2, (0.0,))[0]

    def test_line_search_on_corridor(self, corridor_probe):
        rep = proposition_check(6, corridor_probe, {"eps": 0.6, "line_search": True})
        assert rep.hypothesis_holds and rep.conclusion_holds
        assert 0 < rep.details["delta_b"] <= 0.6

    def test_policy_improvement(self):
        for i in range(5):
            inst = random_improvement_instance(np.random.default_rng(i))
            rep = proposition_check(1, inst, {"eps": 0.4, "delta_b": 0.2})
            assert rep.conclusion_holds, rep.details

    def test_unknown(self, corridor_probe):
        with pytest.raises(ValueError):
            proposition_check(7, corridor_probe, {"eps": 0.5})


def test_verify_small_batch():
    rows = verify_propositions(instances=6, seed=3)
    assert [r["prop"] for r in rows] == [1, 2, 3, 4, 5, 6]
    assert all(r["failures"] == 0 for r in rows)
