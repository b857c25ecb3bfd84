import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ltlexplore.automaton import bundled_automaton, prune_and_index
from ltlexplore.evaluator import build_explicit_pmdp, satisfaction_probability
from ltlexplore.gridworld import LabelingSpec, generate, load_explicit
from ltlexplore.learner import (
    BIASED1,
    BIASED2,
    RANDOM,
    LearnerState,
    PolicyKind,
    Schedule,
    ScheduleError,
    action_probabilities,
    boltzmann_probabilities,
    epsilon_greedy_probabilities,
    policy_matrix,
    preset,
    q_update,
    run_episode,
    schedule_values,
    train,
    ucb1_choice,
)
from ltlexplore.model import LearnedModel, biased_target
from ltlexplore.product import ProductSpace, RewardParams

RP = RewardParams()


# -- schedules ---------------------------------------------------------------

def test_random_first_episode():
    assert schedule_values(preset(RANDOM), 1) == (1.0, 0.0, 1.0)


def test_biased1_first_episode():
    assert schedule_values(Schedule(BIASED1, alpha=0.1, beta=0.4), 1) == (1.0, 0.0, 1.0)


def test_biased2_closed_form():
    eps, db, de = schedule_values(Schedule(BIASED2, alpha=0.1, A=0.00015), 10)
    eps_ref = 1 / 10 ** 0.1
    g = 1 - 0.9 * math.exp(-0.00015 * 10)
    assert eps == pytest.approx(eps_ref, abs=1e-15)
    assert db == pytest.approx((1 - g) * eps_ref, abs=1e-15)
    assert de == pytest.approx(g * eps_ref, abs=1e-15)


def test_two_phase_switch():
    s = Schedule(BIASED2, alpha=0.1, A=0.00015)
    _, db99, _ = s.values(99)
    _, db100, _ = s.values(100)
    assert db100 < db99
    assert db100 == pytest.approx(0.1 * math.exp(-0.015) * 100 ** -0.1)


def test_custom_table():
    s = Schedule("Custom", table=((1, 0.5, 0.2), (10, 0.1, 0.0)))
    assert s.values(3) == pytest.approx((0.5, 0.2, 0.3))
    assert s.values(10) == pytest.approx((0.1, 0.0, 0.1))


def test_schedule_errors():
    with pytest.raises(ScheduleError):
        schedule_values(preset(RANDOM), 0)
    with pytest.raises(ScheduleError):
        Schedule("Custom", table=((1, 1.5, 0.0),)).values(1)
    with pytest.raises(ScheduleError):
        Schedule("Custom", table=((5, 0.5, 0.0),)).values(1)
    with pytest.raises(ScheduleError):
        preset("nope")


@given(
    st.sampled_from(["Biased1", "Biased2", "Biased3", "Random"]),
    st.sampled_from(["small", "large"]),
    st.integers(1, 10**6),
)
def test_schedule_invariants(name, env, e):
    s = preset(name, env)
    eps, db, de = s.values(e)
    assert abs(eps - db - de) <= 1e-15
    assert 0 <= db <= 1 and 0 <= de <= 1 and 0 <= eps <= 1
    assert s.values(e + 1)[0] <= eps
    if name == RANDOM:
        assert db == 0


@pytest.mark.parametrize("name", ["Biased1", "Biased2", "Biased3", "Random"])
def test_rates_vanish(name):
    eps, db, de = preset(name).values(10**12)
    assert eps < 0.1 and db < 0.1 and de < 0.1


# -- action distributions -----------------------------------------------------

def test_greedy_when_eps_zero():
    p = action_probabilities([0.0, 2.0, 1.0], [0, 1, 2], 2, 0.0, 0.0, 0.0)
    assert p.tolist() == [0.0, 1.0, 0.0]


def test_all_bias():
    p = action_probabilities([0.0, 2.0, 1.0], [0, 1, 2], 0, 0.3, 0.3, 0.0)
    assert p.tolist() == pytest.approx([0.3, 0.7, 0.0], abs=1e-15)


def test_four_action_example():
    p = action_probabilities([5.0, 0.0, 0.0, 0.0], [0, 1, 2, 3], 1, 0.4, 0.3, 0.1)
    assert p == pytest.approx([0.625, 0.325, 0.025, 0.025], abs=1e-15)
    assert abs(p.sum() - 1) <= 1e-12


def test_eps_must_split():
    with pytest.raises(ValueError):
        action_probabilities([0.0, 1.0], [0, 1], 0, 0.5, 0.1, 0.1)
    with pytest.raises(ValueError):
        action_probabilities([0.0, 1.0], [], 0, 0.0, 0.0, 0.0)


@st.composite
def distribution_cases(draw):
    n = draw(st.integers(1, 9))
    q = draw(st.lists(st.floats(-50, 50), min_size=n, max_size=n))
    avail = sorted(draw(st.sets(st.integers(0, n - 1), min_size=1)))
    a_b = draw(st.sampled_from(avail))
    eps = draw(st.floats(0, 1))
    db = draw(st.floats(0, 1)) * eps
    return q, avail, a_b, eps, db, eps - db


@given(distribution_cases())
def test_distribution_is_valid(case):
    q, avail, a_b, eps, db, de = case
    p = action_probabilities(q, avail, a_b, eps, db, de)
    assert (p >= 0).all()
    assert abs(p.sum() - 1) <= 1e-12
    assert all(p[a] == 0 for a in range(len(q)) if a not in avail)


@given(distribution_cases())
def test_no_bias_is_epsilon_greedy(case):
    q, avail, a_b, eps, _, _ = case
    p = action_probabilities(q, avail, a_b, eps, 0.0, eps)
    np.testing.assert_allclose(p, epsilon_greedy_probabilities(q, avail, eps), rtol=0, atol=1e-12)


def test_policy_matrix_matches_rows(rng):
    Q = rng.normal(size=(20, 5))
    avail = rng.random((20, 5)) < 0.7
    avail[:, 0] = True
    a_b = np.array([int(rng.choice(np.flatnonzero(r))) for r in avail])
    pi = policy_matrix(Q, avail, a_b, 0.6, 0.25, 0.35)
    for s in range(20):
        row = action_probabilities(Q[s], np.flatnonzero(avail[s]), a_b[s], 0.6, 0.25, 0.35)
        np.testing.assert_allclose(pi[s], row, atol=1e-15)


def test_boltzmann_cold_limit():
    assert boltzmann_probabilities([1.0, 3.0, 2.0], [0, 1, 2], 0.0).tolist() == [0, 1, 0]
    p = boltzmann_probabilities([1e4, 0.0], [0, 1], 1e-3)
    assert np.isfinite(p).all() and p[0] == 1.0


def test_ucb_prefers_unvisited():
    assert ucb1_choice([100.0, 0.0, 0.0], [5, 0, 3], [0, 1, 2], 1.0) == 1
    assert ucb1_choice([0.0, 0.0], [1, 100], [0, 1], 1.0) == 0


# -- Q updates ----------------------------------------------------------------

def test_first_update_takes_full_step():
    Q = np.zeros((2, 1))
    nP = np.zeros((2, 1))
    q_update(Q, nP, 0, 0, 10.0, 1, 0.99, [0])
    assert Q[0, 0] == 10.0
    q_update(Q, nP, 0, 0, 10.0, 1, 0.99, [0])
    assert Q[0, 0] == 10.0 and nP[0, 0] == 2


def test_updates_match_straight_line_reference():
    Q = np.zeros((3, 2))
    nP = np.zeros((3, 2))
    g = 0.9
    q_update(Q, nP, 0, 1, 1.0, 1, g, [0, 1])    # Q01 = 1
    q_update(Q, nP, 1, 0, -0.5, 2, g, [0])      # Q10 = -0.5
    q_update(Q, nP, 0, 1, 2.0, 1, g, [0, 1])    # Q01 = 1 + (2 - 1 + 0.9*0)/2 = 1.5
    q_update(Q, nP, 2, 0, 3.0, 0, g, [0, 1])    # Q20 = 3 + 0.9*1.5 = 4.35
    q_update(Q, nP, 1, 0, 0.0, 2, g, [0])       # Q10 = -0.5 + (0 + 0.5 + 0.9*4.35)/2 = 1.7075
    assert Q[0, 1] == pytest.approx(1.5, abs=1e-15)
    assert Q[2, 0] == pytest.approx(4.35, abs=1e-15)
    assert Q[1, 0] == pytest.approx(1.7075, abs=1e-15)


@given(st.floats(-5, 5), st.integers(0, 2**31))
def test_shifted_rewards_shift_values(c, seed):
    # with values initialised to c, shifting every reward by c(1 - gamma)
    # shifts every value by c, so the greedy actions agree
    rng = np.random.default_rng(seed)
    g = 0.9
    Q, nP = np.zeros((4, 3)), np.zeros((4, 3))
    Qs, nPs = np.full((4, 3), c), np.zeros((4, 3))
    for _ in range(30):
        s, a, s2 = int(rng.integers(4)), int(rng.integers(3)), int(rng.integers(4))
        r = float(rng.normal())
        q_update(Q, nP, s, a, r, s2, g, [0, 1, 2])
        q_update(Qs, nPs, s, a, r + c * (1 - g), s2, g, [0, 1, 2])
    np.testing.assert_allclose(Qs - Q, c, atol=1e-9)
    top2 = np.sort(Q, axis=1)[:, -2:]
    clear = top2[:, 1] - top2[:, 0] > 1e-8
    assert (np.argmax(Qs, axis=1)[clear] == np.argmax(Q, axis=1)[clear]).all()


# -- episodes -----------------------------------------------------------------

def chain_with_obstacle():
    # 0 -> 1 -> 2 -> 3 deterministically, 3 is an obstacle
    doc = {
        "num_states": 4,
        "actions": ["go"],
        "available": [[0]] * 4,
        "trans": [{"x": x, "a": 0, "probs": {str(min(x + 1, 3)): 1.0}} for x in range(4)],
        "labels": {"3": ["obs"]},
    }
    return load_explicit(doc)


def test_single_step_episode(corridor_space):
    st_ = LearnerState.fresh(corridor_space)
    run_episode(st_, PolicyKind("eps-greedy", preset(RANDOM)), RP, 1, 1, 0)
    assert st_.nP.sum() == 1


def test_deadlock_ends_episode():
    sp = ProductSpace(chain_with_obstacle(), prune_and_index(bundled_automaton("sequence")))
    st_ = LearnerState.fresh(sp)
    out = run_episode(st_, PolicyKind("eps-greedy", preset(RANDOM)), RP, 50, 1, 0, x0=0)
    assert out["deadlock"] and out["steps"] == 3
    assert out["return"] == pytest.approx(-0.1 - 0.1 * 0.99 - 100 * 0.99 ** 2)
    # the final update used the deadlock reward and no bootstrap
    assert st_.Q[sp.index(2, 0), 0] == -100


def test_zero_episodes(corridor_space):
    res = train(corridor_space, PolicyKind("eps-delta", preset(BIASED2)), RP, tau=10, num_episodes=0, seed=0,
                eval_every=1, evaluate=lambda pi: 0.0)
    assert res.rows == [] and not res.state.Q.any()


def test_training_is_reproducible(coverage_aut, coverage_grid):
    sp = ProductSpace(coverage_grid, coverage_aut)
    runs = [
        train(sp, PolicyKind("eps-delta", preset(BIASED2)), RP, tau=100, num_episodes=40, seed=9)
        for _ in range(2)
    ]
    assert runs[0].state.Q.tobytes() == runs[1].state.Q.tobytes()
    assert runs[0].state.model.cnt.tobytes() == runs[1].state.model.cnt.tobytes()


@pytest.mark.parametrize("kind", ["eps-delta", "eps-greedy", "boltzmann", "ucb1"])
def test_values_stay_bounded(kind, coverage_aut, coverage_grid):
    sp = ProductSpace(coverage_grid, coverage_aut)
    policy = PolicyKind(kind, preset(BIASED1) if kind.startswith("eps") else None, temperature=0.5)
    res = train(sp, policy, RP, tau=100, num_episodes=60, seed=1)
    assert np.isfinite(res.state.Q).all()
    assert np.abs(res.state.Q).max() <= RP.bound
    visited = res.state.nP > 0
    assert (res.state.nP[visited] >= 1).all()


def test_baselines_do_not_touch_the_model(corridor_space):
    res = train(corridor_space, PolicyKind("eps-greedy", preset(RANDOM)), RP, tau=20, num_episodes=5, seed=0)
    assert not res.state.model.n.any()
    shared = train(corridor_space, PolicyKind("eps-greedy", preset(RANDOM)), RP, tau=20, num_episodes=5, seed=0,
                   shared_model_updates=True)
    assert shared.state.model.n.any()
    assert shared.state.Q.tobytes() == res.state.Q.tobytes()


def test_model_freeze(corridor_space):
    full = train(corridor_space, PolicyKind("eps-delta", preset(BIASED1)), RP, tau=20, num_episodes=30, seed=0)
    frozen = train(corridor_space, PolicyKind("eps-delta", preset(BIASED1)), RP, tau=20, num_episodes=30, seed=0,
                   model_freeze_episode=3)
    assert frozen.state.model.n.sum() < full.state.model.n.sum()


def test_greedy_ties_go_to_lowest_index(corridor_space):
    st_ = LearnerState.fresh(corridor_space)
    assert (st_.greedy_actions() == 0).all()


def test_ldba_training_uses_epsilon_moves():
    aut = prune_and_index(bundled_automaton("eventually_always"))
    labels = LabelingSpec({14: "a", 15: "a", 20: "a", 21: "a"})
    mdp = generate(6, 6, labels, seed=1)
    sp = ProductSpace(mdp, aut)
    assert sp.num_eps > 0
    res = train(sp, PolicyKind("eps-delta", preset(BIASED2)), RP, tau=60, num_episodes=50, seed=0)
    assert res.state.nP[:, sp.num_a:].sum() > 0


# -- sampled actions against the stated distributions --------------------------

def sampled_actions(space, policy, Q, x0, n, rates=None, model=None):
    st_ = LearnerState.fresh(space)
    if model is not None:
        st_.model = model
    counts = np.zeros(space.num_actions)
    s = space.index(x0, space.aut.initial)
    for e in range(1, n + 1):
        st_.Q[...] = Q
        st_.nP[...] = 0
        run_episode(st_, policy, RP, 1, e, 7, x0=x0, update_model=False, rates=rates)
        counts[int(np.argmax(st_.nP[s]))] += 1
    return counts / n


def three_sigma(freq, p, n):
    return np.all(np.abs(freq - p) <= 3 * np.sqrt(p * (1 - p) / n) + 1e-12)


def test_kernel_sampling_eps_delta(coverage_aut, coverage_grid):
    sp = ProductSpace(coverage_grid, coverage_aut)
    rng = np.random.default_rng(3)
    Q = rng.normal(size=(sp.num_states, sp.num_actions))
    model = LearnedModel.from_truth(coverage_grid)
    x0, q0 = 55, coverage_aut.initial
    a_b, _, _ = biased_target(model, x0, sp.goal_mask[q0, 0], sp.avoid_mask[q0, 0])
    assert a_b >= 0
    rates = (0.6, 0.35, 0.25)
    n = 20_000
    freq = sampled_actions(sp, PolicyKind("eps-delta", preset(BIASED2)), Q, x0, n, rates, model)
    p = action_probabilities(Q[sp.index(x0, q0)], coverage_grid.available_actions(x0), a_b, *rates)
    assert three_sigma(freq, p, n)


def test_kernel_sampling_boltzmann(coverage_aut, coverage_grid):
    sp = ProductSpace(coverage_grid, coverage_aut)
    rng = np.random.default_rng(4)
    Q = rng.normal(size=(sp.num_states, sp.num_actions))
    x0 = 44
    n = 20_000
    freq = sampled_actions(sp, PolicyKind("boltzmann", temperature=0.7), Q, x0, n)
    p = boltzmann_probabilities(Q[sp.index(x0, 0)], coverage_grid.available_actions(x0), 0.7)
    assert three_sigma(freq, p, n)


def test_greedy_rollouts_match_exact_value():
    # one state branches into a goal (0.7) and a dead end (0.3)
    doc = {
        "num_states": 3,
        "state_names": ["S", "G", "T"],
        "actions": ["go"],
        "available": [[0]] * 3,
        "trans": [
            {"x": 0, "a": 0, "probs": {"1": 0.7, "2": 0.3}},
            {"x": 1, "a": 0, "probs": {"1": 1.0}},
            {"x": 2, "a": 0, "probs": {"2": 1.0}},
        ],
        "labels": {"1": ["exit1"]},
    }
    sp = ProductSpace(load_explicit(doc), prune_and_index(bundled_automaton("reach_exit")))
    exact = satisfaction_probability(build_explicit_pmdp(sp), LearnerState.fresh(sp).greedy_policy())
    st_ = LearnerState.fresh(sp)
    wins = 0
    n = 10_000
    policy = PolicyKind("eps-greedy", preset(RANDOM))
    for e in range(1, n + 1):
        out = run_episode(st_, policy, RP, 20, e, 0, rates=(0.0, 0.0, 0.0))
        wins += out["return"] > 0
    assert abs(wins / n - exact.avg) <= 0.05
