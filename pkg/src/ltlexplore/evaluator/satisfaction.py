"""Exact evaluation of fixed policies and the model-based optimum."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .chains import bottom_components, can_reach, mec_decomposition
from .pmdp import ExplicitPmdp

DIRECT_SOLVE_LIMIT = 50_000
ITERATIVE_TOL = 1e-10


@dataclass
class SatisfactionReport:
    per_state: np.ndarray  # every product state
    initial: np.ndarray  # at (x, q0, all sets pending), per x
    avg: float
    bsccs_total: int
    bsccs_accepting: int
    method: str
    state_names: list | None = None

    def to_json(self) -> dict:
        names = self.state_names or [str(x) for x in range(len(self.initial))]
        return {
            "per_state": {names[x]: float(p) for x, p in enumerate(self.initial)},
            "avg": float(self.avg),
            "bsccs": {"total": int(self.bsccs_total), "accepting": int(self.bsccs_accepting)},
            "method": self.method,
        }


def _solve(A: sp.csr_matrix, b: np.ndarray) -> np.ndarray:
    """Solve A x = b (A = I - P restricted, nonsingular)."""
    if A.shape[0] == 0:
        return np.zeros(0)
    if A.shape[0] <= DIRECT_SOLVE_LIMIT:
        return np.atleast_1d(spla.spsolve(A.tocsc(), b))
    x, info = spla.bicgstab(A, b, rtol=ITERATIVE_TOL, atol=0.0, maxiter=100_000)
    if info != 0:
        raise RuntimeError(f"iterative solve did not converge (info={info})")
    return x


def reach_probability(M: sp.csr_matrix, target: np.ndarray) -> np.ndarray:
    """P(eventually reach ``target``) in the chain ``M``."""
    S = M.shape[0]
    out = np.zeros(S)
    out[target] = 1.0
    live = can_reach(M, target) & ~target
    idx = np.flatnonzero(live)
    if idx.size:
        M_ll = M[idx][:, idx]
        b = np.asarray(M[idx][:, np.flatnonzero(target)].sum(axis=1)).ravel()
        A = sp.identity(idx.size, format="csr") - M_ll
        out[idx] = np.clip(_solve(A, b), 0.0, 1.0)
    return out


def _accepting_bottom(pmdp: ExplicitPmdp, states: np.ndarray, masks) -> bool:
    if pmdp.space.is_ldba:
        return all(f[states].any() for f in masks)
    return any(g[states].any() and not b[states].any() for g, b in masks)


def satisfaction_probability(pmdp: ExplicitPmdp, pi: np.ndarray) -> SatisfactionReport:
    """Probability that the policy's runs satisfy the acceptance condition."""
    M = pmdp.induced_chain(pi)
    _, bottoms = bottom_components(M)
    masks = pmdp.good_bad_masks()
    target = np.zeros(pmdp.num_states, dtype=bool)
    n_acc = 0
    for states in bottoms:
        if _accepting_bottom(pmdp, states, masks):
            target[states] = True
            n_acc += 1
    per_state = reach_probability(M, target)
    initial = per_state[pmdp.space.initial_states()]
    return SatisfactionReport(
        per_state, initial, float(initial.mean()), len(bottoms), n_acc, "bscc-reachability",
        pmdp.space.mdp.state_names,
    )


def accepting_bottom_mask(pmdp: ExplicitPmdp, pi: np.ndarray) -> tuple[np.ndarray, np.ndarray, list]:
    """(bottom-class id per state or -1, accepting flag per class, chain) for Monte Carlo checks."""
    M = pmdp.induced_chain(pi)
    _, bottoms = bottom_components(M)
    masks = pmdp.good_bad_masks()
    cls = np.full(pmdp.num_states, -1, dtype=np.int64)
    acc = np.zeros(len(bottoms), dtype=np.bool_)
    for i, states in enumerate(bottoms):
        cls[states] = i
        acc[i] = _accepting_bottom(pmdp, states, masks)
    return cls, acc, M


def policy_value(pmdp: ExplicitPmdp, pi: np.ndarray, rp, terminal: np.ndarray | None = None,
                 rewards: np.ndarray | None = None) -> np.ndarray:
    """Discounted value V = R_pi + gamma P_pi V of a stochastic policy.

    ``terminal`` states are absorbing with value 0 (episode end).  ``rewards``
    overrides R(s, a) (shape (S, num_actions)).
    """
    S = pmdp.num_states
    R = pmdp.expected_reward(rp) if rewards is None else rewards
    pi = np.where(pmdp.avail, pi, 0.0)
    r_pi = (pi * R).sum(axis=1)
    M = pmdp.induced_chain(pi)
    if terminal is not None:
        keep = sp.diags((~terminal).astype(float))
        M = (keep @ M).tocsr()
        r_pi = np.where(terminal, 0.0, r_pi)
    A = sp.identity(S, format="csr") - rp.gamma * M
    return _solve(A, r_pi)


def action_values(pmdp: ExplicitPmdp, V: np.ndarray, rp, terminal: np.ndarray | None = None,
                  rewards: np.ndarray | None = None) -> np.ndarray:
    """Q(s, a) = R(s, a) + gamma sum_s' T(s, a, s') V(s')."""
    R = pmdp.expected_reward(rp) if rewards is None else rewards
    Q = R + rp.gamma * (pmdp.T @ V).reshape(pmdp.num_states, pmdp.num_actions)
    if terminal is not None:
        Q[terminal] = 0.0
    return np.where(pmdp.avail, Q, -np.inf)


def accepting_end_components(pmdp: ExplicitPmdp) -> list[tuple[np.ndarray, np.ndarray]]:
    """End components in which some policy meets the acceptance condition surely."""
    out = []
    masks = pmdp.good_bad_masks()
    for states, allowed in mec_decomposition(pmdp.T, pmdp.avail):
        if pmdp.space.is_ldba:
            if all(f[states].any() for f in masks):
                out.append((states, allowed))
            continue
        for good, bad in masks:
            sub = allowed & ~bad[:, None]
            for s2, a2 in mec_decomposition(pmdp.T, sub):
                if good[s2].any():
                    out.append((s2, a2))
    return out


def _max_reach_values(pmdp: ExplicitPmdp, target: np.ndarray, tol: float) -> np.ndarray:
    S, A = pmdp.num_states, pmdp.num_actions
    x = target.astype(float)
    for _ in range(1_000_000):
        q = (pmdp.T @ x).reshape(S, A)
        q = np.where(pmdp.avail, q, -1.0)
        nx = np.where(target, 1.0, q.max(axis=1))
        if np.max(np.abs(nx - x)) < tol:
            return nx
        x = nx
    return x


def _policy_chain(pmdp: ExplicitPmdp, pi: np.ndarray, target: np.ndarray) -> sp.csr_matrix:
    M = pmdp.induced_chain(pi)
    keep = sp.diags((~target).astype(float))
    return (keep @ M + sp.diags(target.astype(float))).tocsr()


def model_based_optimal(pmdp: ExplicitPmdp, tol: float = 1e-12):
    """Policy maximizing the satisfaction probability, with its exact report.

    Returns ``(pi, report)``; ``pi`` is (S, num_actions) and randomizes
    uniformly inside accepting end components.
    """
    S, A = pmdp.num_states, pmdp.num_actions
    ecs = accepting_end_components(pmdp)
    target = np.zeros(S, dtype=bool)
    pi = np.zeros((S, A))
    for states, allowed in ecs:
        fresh = states[~target[states]]
        rows = allowed[fresh].astype(float)
        pi[fresh] = rows / rows.sum(axis=1, keepdims=True)
        target[fresh] = True

    x = _max_reach_values(pmdp, target, tol)
    # attractor ranking over near-optimal actions
    q = np.where(pmdp.avail, (pmdp.T @ x).reshape(S, A), -1.0)
    optimal = pmdp.avail & (q >= x[:, None] - 1e-9)
    choice = np.full(S, -1)
    ranked = target.copy()
    Tcoo = pmdp.T.tocoo()
    while True:
        hit = np.zeros(S * A, dtype=bool)
        hit[Tcoo.row[ranked[Tcoo.col]]] = True
        cand = optimal & hit.reshape(S, A) & ~ranked[:, None] & (x[:, None] > 0)
        new = cand.any(axis=1)
        if not new.any():
            break
        choice[new] = np.argmax(cand[new], axis=1)
        ranked |= new
    rest = (choice < 0) & ~target
    choice[rest] = np.argmax(pmdp.avail[rest], axis=1)
    det = ~target
    pi[det] = 0.0
    pi[np.flatnonzero(det), choice[det]] = 1.0

    # policy iteration on exact values removes value-iteration round-off
    for _ in range(100):
        vals = reach_probability(_policy_chain(pmdp, pi, target), target)
        q = np.where(pmdp.avail, (pmdp.T @ vals).reshape(S, A), -1.0)
        best = np.argmax(q, axis=1)
        improve = det & (q[np.arange(S), best] > vals + 1e-12)
        if not improve.any():
            break
        idx = np.flatnonzero(improve)
        pi[idx] = 0.0
        pi[idx, best[idx]] = 1.0

    report = satisfaction_probability(pmdp, pi)
    report.method = "model-based-optimal"
    return pi, report


def monte_carlo_satisfaction(pmdp: ExplicitPmdp, pi: np.ndarray, runs: int = 10_000, horizon: int | None = None,
                             seed: int = 0) -> np.ndarray:
    """Fraction of simulated runs entering an accepting bottom component, per initial state.

    Runs stop at the first bottom-component state or after ``horizon`` steps
    (default 10 |S|).
    """
    from .. import kernels

    cls, acc, M = accepting_bottom_mask(pmdp, pi)
    M = M.tocsr()
    M.sort_indices()
    cdf = np.empty_like(M.data)
    for s in range(M.shape[0]):
        lo, hi = M.indptr[s], M.indptr[s + 1]
        if hi > lo:
            cdf[lo:hi] = np.cumsum(M.data[lo:hi])
            cdf[hi - 1] = 1.0
    horizon = 10 * pmdp.num_states if horizon is None else horizon
    starts = pmdp.space.initial_states().astype(np.int64)
    return kernels.rollout_chain(
        M.indptr.astype(np.int64), M.indices.astype(np.int64), cdf, starts, cls, acc, int(horizon), int(runs), int(seed)
    )
