"""Compare the numba kernels with the plain-Python fallback.

Each backend runs in its own interpreter (the switch is read at import).
Workloads: Q-learning episodes on the 10x10 sequencing grid and Monte Carlo
rollouts of a fixed policy.  Results must match bit for bit.

    python benchmarks/bench_kernels.py [--episodes 200] [--runs 2000]
"""

import argparse
import hashlib
import json
import os
import subprocess
import sys
import time


def workload(episodes: int, runs: int) -> dict:
    import numpy as np

    from ltlexplore._jit import backend_name
    from ltlexplore.automaton import bundled_automaton, prune_and_index
    from ltlexplore.evaluator import build_explicit_pmdp, monte_carlo_satisfaction
    from ltlexplore.gridworld import bundled_labeling, generate
    from ltlexplore.learner import PolicyKind, preset, train
    from ltlexplore.product import ProductSpace, RewardParams

    aut = prune_and_index(bundled_automaton("sequence"))
    space = ProductSpace(generate(10, 10, bundled_labeling("sequence_10x10_labels"), seed=2), aut)
    policy = PolicyKind("eps-delta", preset("Biased2"))

    # first call pays for compilation (or cache loading) on the numba path
    t = time.perf_counter()
    train(space, policy, RewardParams(), tau=200, num_episodes=1, seed=99)
    warmup = time.perf_counter() - t

    t = time.perf_counter()
    res = train(space, policy, RewardParams(), tau=200, num_episodes=episodes, seed=0)
    t_train = time.perf_counter() - t

    pm = build_explicit_pmdp(space)
    pi = res.policy
    monte_carlo_satisfaction(pm, pi, runs=1, seed=0)
    t = time.perf_counter()
    mc = monte_carlo_satisfaction(pm, pi, runs=runs, seed=1)
    t_mc = time.perf_counter() - t

    digest = hashlib.sha256(res.state.Q.tobytes() + res.state.model.cnt.tobytes() + mc.tobytes()).hexdigest()
    return {"backend": backend_name(), "warmup_s": warmup, "train_s": t_train, "mc_s": t_mc, "digest": digest}


def run_backend(disable: bool, episodes: int, runs: int) -> dict:
    env = dict(os.environ, LTLEXPLORE_DISABLE_NUMBA="1" if disable else "0")
    cmd = [sys.executable, __file__, "--worker", "--episodes", str(episodes), "--runs", str(runs)]
    out = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True).stdout
    return json.loads(out.strip().splitlines()[-1])


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--episodes", type=int, default=200)
    ap.add_argument("--runs", type=int, default=2000)
    ap.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = ap.parse_args()
    if args.worker:
        print(json.dumps(workload(args.episodes, args.runs)))
        return 0

    fast = run_backend(False, args.episodes, args.runs)
    slow = run_backend(True, args.episodes, args.runs)
    print(f"{'backend':<8} {'warmup_s':>9} {'train_s':>9} {'mc_s':>9}")
    for r in (fast, slow):
        print(f"{r['backend']:<8} {r['warmup_s']:>9.3f} {r['train_s']:>9.3f} {r['mc_s']:>9.3f}")
    print(f"speedup: train x{slow['train_s'] / fast['train_s']:.1f}, rollouts x{slow['mc_s'] / fast['mc_s']:.1f}")
    same = fast["digest"] == slow["digest"]
    print("results identical" if same else "RESULTS DIFFER")
    return 0 if same else 1


if __name__ == "__main__":
    sys.exit(main())
