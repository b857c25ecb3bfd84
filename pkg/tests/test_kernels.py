import json
import os
import subprocess
import sys

import numpy as np
import pytest

from ltlexplore import kernels
from ltlexplore._jit import backend_name

SCRIPT = r"""
import hashlib, json
import numpy as np
from ltlexplore._jit import backend_name
from ltlexplore.automaton import bundled_automaton, prune_and_index
from ltlexplore.evaluator import build_explicit_pmdp, monte_carlo_satisfaction, satisfaction_probability
from ltlexplore.gridworld import LabelingSpec, generate
from ltlexplore.learner import PolicyKind, preset, train
from ltlexplore.product import ProductSpace, RewardParams

mdp = generate(6, 6, LabelingSpec({7: "a", 28: "b"}, (15, 20)), seed=5)
sp = ProductSpace(mdp, prune_and_index(bundled_automaton("sequence")))
out = {"backend": backend_name()}
for kind, sched in (("eps-delta", "Biased2"), ("eps-greedy", "Random"), ("boltzmann", None), ("ucb1", None)):
    pol = PolicyKind(kind, preset(sched) if sched else None, temperature=0.5)
    res = train(sp, pol, RewardParams(), tau=40, num_episodes=25, seed=3)
    out[kind] = hashlib.sha256(res.state.Q.tobytes() + res.state.model.cnt.tobytes()).hexdigest()
pm = build_explicit_pmdp(sp)
pi = res.policy
out["mc"] = monte_carlo_satisfaction(pm, pi, runs=200, seed=4).tolist()
out["dp"] = satisfaction_probability(pm, pi).avg
print(json.dumps(out))
"""


def run_backend(disable):
    env = dict(os.environ)
    env["LTLEXPLORE_DISABLE_NUMBA"] = "1" if disable else "0"
    proc = subprocess.run([sys.executable, "-c", SCRIPT], env=env, capture_output=True, text=True, timeout=600)
    assert proc.returncode == 0, proc.stderr
    return json.loads(proc.stdout.strip().splitlines()[-1])


def test_backends_agree_bit_for_bit():
    fast = run_backend(False)
    slow = run_backend(True)
    assert fast.pop("backend") == "numba"
    assert slow.pop("backend") == "python"
    assert fast == slow


def test_backend_name_matches_flag():
    flag = os.environ.get("LTLEXPLORE_DISABLE_NUMBA", "").lower() in ("1", "true", "yes", "on")
    assert backend_name() == ("python" if flag else "numba")


def test_sample_slot():
    cdf = np.array([0.2, 0.5, 1.0])
    assert [kernels.sample_slot(cdf, u) for u in (0.0, 0.19, 0.2, 0.7, 0.999)] == [0, 0, 1, 2, 2]


def test_model_record_reports_overflow():
    n = np.zeros((1, 1))
    succ = np.full((1, 1, 2), -1, dtype=np.int64)
    cnt = np.zeros((1, 1, 2))
    assert kernels.model_record(n, succ, cnt, 0, 0, 5)
    assert kernels.model_record(n, succ, cnt, 0, 0, 6)
    assert kernels.model_record(n, succ, cnt, 0, 0, 5)
    assert not kernels.model_record(n, succ, cnt, 0, 0, 7)
    assert n[0, 0] == 3 and cnt[0, 0].tolist() == [2, 1]


def test_rollout_chain_absorbing_start():
    indptr = np.array([0, 1, 2])
    indices = np.array([1, 1])
    cdf = np.array([1.0, 1.0])
    absorbing = np.array([-1, 0])
    out = kernels.rollout_chain(indptr, indices, cdf, np.array([0, 1]), absorbing, np.array([True]), 5, 10, 0)
    assert out.tolist() == [1.0, 1.0]
