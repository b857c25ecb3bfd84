"""Inner loops of training and simulation.

Every function here is written in the numba-compatible subset and decorated
with ``njit`` from ``_jit``; with ``LTLEXPLORE_DISABLE_NUMBA=1`` they run as
plain Python on the same arrays and produce identical results (all
randomness comes in as pre-drawn uniforms, except in ``rollout_chain``).
"""

import math

import numpy as np

from ._jit import njit

EPS_DELTA = 0
EPS_GREEDY = 1
BOLTZMANN = 2
UCB1 = 3

STATUS_OK = 0
STATUS_MODEL_FULL = 1
STATUS_NO_EDGE = 2

# uniform columns per time step
U_BRANCH, U_RANDOM, U_MDP, U_SOFTMAX, U_FALLBACK, U_TARGET = range(6)
U_COLUMNS = 6


@njit
def sample_slot(cdf_row, u):
    k = 0
    last = cdf_row.shape[0] - 1
    while k < last and cdf_row[k] <= u:
        k += 1
    return k


@njit
def model_record(mn, msucc, mcnt, x, a, y):
    """Count one observed transition; False when the successor table is full."""
    slots = msucc.shape[2]
    for k in range(slots):
        z = msucc[x, a, k]
        if z == y:
            mcnt[x, a, k] += 1.0
            mn[x, a] += 1.0
            return True
        if z < 0:
            msucc[x, a, k] = y
            mcnt[x, a, k] = 1.0
            mn[x, a] += 1.0
            return True
    return False


@njit
def biased_target(mn, msucc, mcnt, x_t, goal_row, avoid_row, dist, order, val):
    """Biased action toward the best min-hop path on the learned graph.

    Returns ``(a_b, x_b, J)``; ``a_b = -1`` asks the caller for a random
    action (no path, ``x_t`` already a goal, or no estimate toward x_b).
    ``J = -1`` encodes an unreachable goal set.  ``dist``, ``order`` and
    ``val`` are scratch arrays of length N.
    """
    n_x = mn.shape[0]
    n_a = mn.shape[1]
    slots = msucc.shape[2]
    if goal_row[x_t]:
        return -1, x_t, 0
    for i in range(n_x):
        dist[i] = -1
        val[i] = 0.0
    dist[x_t] = 0
    order[0] = x_t
    head = 0
    tail = 1
    J = -1
    while head < tail:
        u = order[head]
        head += 1
        du = dist[u]
        if J >= 0 and du >= J:
            break
        if goal_row[u]:
            continue
        for a in range(n_a):
            if mn[u, a] <= 0.0:
                continue
            for k in range(slots):
                v = msucc[u, a, k]
                if v < 0:
                    break
                if mcnt[u, a, k] <= 0.0 or dist[v] >= 0:
                    continue
                if avoid_row[v] and not goal_row[v]:
                    continue
                dist[v] = du + 1
                order[tail] = v
                tail += 1
                if goal_row[v] and J < 0:
                    J = du + 1
    if J < 0:
        return -1, -1, -1

    # backward pass: val[u] = best product of max-probability edges to a goal
    for i in range(tail - 1, -1, -1):
        u = order[i]
        du = dist[u]
        if du == J:
            val[u] = 1.0 if goal_row[u] else 0.0
            continue
        best = 0.0
        for a in range(n_a):
            n_ua = mn[u, a]
            if n_ua <= 0.0:
                continue
            for k in range(slots):
                v = msucc[u, a, k]
                if v < 0:
                    break
                if dist[v] == du + 1 and (du + 1 < J or goal_row[v]):
                    cand = (mcnt[u, a, k] / n_ua) * val[v]
                    if cand > best:
                        best = cand
        val[u] = best

    # first hop: best value, ties to the lowest state id
    x_b = -1
    best = -1.0
    for a in range(n_a):
        n_ua = mn[x_t, a]
        if n_ua <= 0.0:
            continue
        for k in range(slots):
            v = msucc[x_t, a, k]
            if v < 0:
                break
            if dist[v] != 1 or (J == 1 and not goal_row[v]):
                continue
            cand = (mcnt[x_t, a, k] / n_ua) * val[v]
            if cand > best or (cand == best and v < x_b):
                best = cand
                x_b = v
    if x_b < 0 or best <= 0.0:
        return -1, x_b, J

    a_b = -1
    best_p = 0.0
    for a in range(n_a):
        n_ua = mn[x_t, a]
        if n_ua <= 0.0:
            continue
        for k in range(slots):
            if msucc[x_t, a, k] == x_b:
                p = mcnt[x_t, a, k] / n_ua
                if p > best_p:
                    best_p = p
                    a_b = a
                break
    return a_b, x_b, J


@njit
def _pick_nth_available(avail_row, q, eps_succ, n_a, n_eps, idx):
    c = 0
    for a in range(n_a):
        if avail_row[a]:
            if c == idx:
                return a
            c += 1
    for e in range(n_eps):
        if eps_succ[q, e] >= 0:
            if c == idx:
                return n_a + e
            c += 1
    return -1


@njit
def _pick_target_set(v, n_sets, u):
    count = 0
    for j in range(n_sets):
        if (v >> j) & 1:
            count += 1
    if count == 0:
        return 0
    want = int(u * count)
    if want >= count:
        want = count - 1
    for j in range(n_sets):
        if (v >> j) & 1:
            if want == 0:
                return j
            want -= 1
    return 0


@njit
def run_episode(
    avail, succ, cdf,
    next_q, eps_succ, n_eps, reward_q, in_set, n_sets, deadlock, label_source,
    goal_mask, avoid_mask, eps_goal,
    Q, nP,
    mn, msucc, mcnt, record_model,
    policy_kind, eps, delta_b, delta_e, temperature, ucb_c,
    gamma, r_goal,
    x0, q0, v0, tau, u,
    dist, order, val, probs, out,
):
    """One episode of tabular Q-learning on the product; mutates Q, nP and the model.

    ``out`` receives (steps, return, ended_in_deadlock).  Returns a status code.
    """
    n_a = avail.shape[1]
    n_q = next_q.shape[0]
    n_v = 1 << n_sets
    is_ldba = n_sets > 0
    full_v = n_v - 1
    x = x0
    q = q0
    v = v0
    out[0] = 0.0
    out[1] = 0.0
    out[2] = 0.0
    if deadlock[q]:
        out[2] = 1.0
        return STATUS_OK
    target = _pick_target_set(v, n_sets, u[0, U_TARGET]) if is_ldba else 0
    disc = 1.0
    for t in range(tau):
        s = (x * n_q + q) * n_v + v
        # available product actions and the greedy one
        n_av = 0
        a_star = -1
        best_q = 0.0
        n_tot = 0.0
        for a in range(n_a + n_eps):
            ok = avail[x, a] if a < n_a else eps_succ[q, a - n_a] >= 0
            if ok:
                n_av += 1
                n_tot += nP[s, a]
                if a_star < 0 or Q[s, a] > best_q:
                    a_star = a
                    best_q = Q[s, a]

        act = a_star
        if policy_kind == EPS_DELTA or policy_kind == EPS_GREEDY:
            r0 = u[t, U_BRANCH]
            if r0 < 1.0 - eps:
                act = a_star
            elif r0 < 1.0 - eps + delta_e or policy_kind == EPS_GREEDY:
                idx = int(u[t, U_RANDOM] * n_av)
                if idx >= n_av:
                    idx = n_av - 1
                act = _pick_nth_available(avail[x], q, eps_succ, n_a, n_eps, idx)
            else:
                act = -1
                if is_ldba and eps_goal[q, target] >= 0:
                    act = n_a + eps_goal[q, target]
                else:
                    ab, xb, J = biased_target(
                        mn, msucc, mcnt, x, goal_mask[q, target], avoid_mask[q, target], dist, order, val
                    )
                    act = ab
                if act < 0:
                    idx = int(u[t, U_FALLBACK] * n_av)
                    if idx >= n_av:
                        idx = n_av - 1
                    act = _pick_nth_available(avail[x], q, eps_succ, n_a, n_eps, idx)
        elif policy_kind == BOLTZMANN:
            if temperature <= 1e-12:
                act = a_star
            else:
                total = 0.0
                for a in range(n_a + n_eps):
                    ok = avail[x, a] if a < n_a else eps_succ[q, a - n_a] >= 0
                    if ok:
                        probs[a] = math.exp((Q[s, a] - best_q) / temperature)
                        total += probs[a]
                    else:
                        probs[a] = 0.0
                r3 = u[t, U_SOFTMAX] * total
                acc = 0.0
                act = -1
                for a in range(n_a + n_eps):
                    if probs[a] > 0.0:
                        acc += probs[a]
                        act = a
                        if r3 < acc:
                            break
        else:
            act = -1
            for a in range(n_a + n_eps):
                ok = avail[x, a] if a < n_a else eps_succ[q, a - n_a] >= 0
                if ok and nP[s, a] == 0.0:
                    act = a
                    break
            if act < 0:
                best_ucb = -1e300
                log_n = math.log(n_tot)
                for a in range(n_a + n_eps):
                    ok = avail[x, a] if a < n_a else eps_succ[q, a - n_a] >= 0
                    if ok:
                        score = Q[s, a] + ucb_c * math.sqrt(2.0 * log_n / nP[s, a])
                        if score > best_ucb:
                            best_ucb = score
                            act = a

        # environment and automaton step
        if act < n_a:
            k = sample_slot(cdf[x, act], u[t, U_MDP])
            y = succ[x, act, k]
            q_next = next_q[q, x] if label_source else next_q[q, y]
        else:
            y = x
            q_next = eps_succ[q, act - n_a]
        if q_next < 0:
            return STATUS_NO_EDGE

        r = reward_q[q_next]
        v_next = v
        if is_ldba:
            hit = 0
            for j in range(n_sets):
                if in_set[q_next, j]:
                    hit |= 1 << j
            if v & hit:
                r = r_goal
            v_next = v & ~hit
            if v_next == 0:
                v_next = full_v

        if record_model and act < n_a:
            if not model_record(mn, msucc, mcnt, x, act, y):
                return STATUS_MODEL_FULL

        s_next = (y * n_q + q_next) * n_v + v_next
        best_next = 0.0
        if not deadlock[q_next]:
            first = True
            for a in range(n_a + n_eps):
                ok = avail[y, a] if a < n_a else eps_succ[q_next, a - n_a] >= 0
                if ok and (first or Q[s_next, a] > best_next):
                    best_next = Q[s_next, a]
                    first = False
        nP[s, act] += 1.0
        Q[s, act] += (r - Q[s, act] + gamma * best_next) / nP[s, act]

        out[0] = t + 1.0
        out[1] += disc * r
        disc *= gamma
        if is_ldba and v_next != v:
            target = _pick_target_set(v_next, n_sets, u[t, U_TARGET])
        x = y
        q = q_next
        v = v_next
        if deadlock[q]:
            out[2] = 1.0
            break
    return STATUS_OK


@njit
def rollout_chain(indptr, indices, cdf, starts, absorbing_class, class_accepting, horizon, n_runs, seed):
    """Monte Carlo over a finite Markov chain given in CSR form with per-row CDFs.

    Each run stops on entering a state whose ``absorbing_class`` is >= 0 and
    counts as a success when that class is accepting.  Returns the success
    fraction per start state.
    """
    np.random.seed(seed)
    out = np.zeros(starts.shape[0])
    for i in range(starts.shape[0]):
        hits = 0
        for _ in range(n_runs):
            s = starts[i]
            for _t in range(horizon):
                c = absorbing_class[s]
                if c >= 0:
                    if class_accepting[c]:
                        hits += 1
                    break
                u = np.random.random()
                lo = indptr[s]
                hi = indptr[s + 1]
                k = lo
                while k < hi - 1 and cdf[k] <= u:
                    k += 1
                s = indices[k]
            else:
                c = absorbing_class[s]
                if c >= 0 and class_accepting[c]:
                    hits += 1
        out[i] = hits / n_runs
    return out
