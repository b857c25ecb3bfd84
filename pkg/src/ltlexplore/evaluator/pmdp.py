"""Explicit product MDP as one sparse matrix."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from ..product import ProductSpace

DEFAULT_STATE_CAP = 200_000


class ProductTooLargeError(MemoryError):
    """The explicit product would exceed the configured state cap."""


@dataclass
class ExplicitPmdp:
    space: ProductSpace
    T: sp.csr_matrix  # rows s * num_actions + a, columns s'
    avail: np.ndarray  # (S, num_actions) bool

    @property
    def num_states(self) -> int:
        return self.space.num_states

    @property
    def num_actions(self) -> int:
        return self.space.num_actions

    def q_of(self) -> np.ndarray:
        """Automaton component of every product state."""
        s = np.arange(self.num_states)
        return (s // self.space.num_v) % self.space.num_q

    def x_of(self) -> np.ndarray:
        s = np.arange(self.num_states)
        return s // (self.space.num_v * self.space.num_q)

    def v_of(self) -> np.ndarray:
        return np.arange(self.num_states) % self.space.num_v

    def good_bad_masks(self):
        """Per Rabin pair (DRA) or per accepting set (LDBA): product-state masks.

        DRA: list of (G_i mask, B_i mask).  LDBA: list of F_j masks.
        """
        q = self.q_of()
        aut = self.space.aut
        if self.space.is_ldba:
            return [np.isin(q, sorted(fs)) for fs in aut.buchi_sets]
        return [(np.isin(q, sorted(p.good)), np.isin(q, sorted(p.bad))) for p in aut.rabin_pairs]

    def induced_chain(self, pi: np.ndarray) -> sp.csr_matrix:
        """Markov chain of a stochastic policy ``pi`` (S, num_actions)."""
        S, A = self.num_states, self.num_actions
        pi = np.where(self.avail, pi, 0.0)
        rows = np.repeat(np.arange(S), A)
        W = sp.csr_matrix((pi.ravel(), (rows, np.arange(S * A))), shape=(S, S * A))
        M = (W @ self.T).tocsr()
        M.eliminate_zeros()
        return M

    def expected_reward(self, rp) -> np.ndarray:
        """R(s, a) = sum_s' T(s, a, s') r(s, s') as an (S, num_actions) array."""
        sp_ = self.space
        S, A = self.num_states, self.num_actions
        table = sp_.reward_table(rp)
        T = self.T.tocoo()
        s_next = T.col
        q_next = (s_next // sp_.num_v) % sp_.num_q
        r = table[q_next]
        if sp_.is_ldba:
            _, hit = sp_.visit_table()
            s_src = T.row // A
            v_src = s_src % sp_.num_v
            r = np.where(hit[v_src, q_next], rp.r_goal, r)
        out = np.bincount(T.row, weights=T.data * r, minlength=S * A)
        return out.reshape(S, A)


def build_explicit_pmdp(space: ProductSpace, state_cap: int = DEFAULT_STATE_CAP) -> ExplicitPmdp:
    """Enumerate every product transition; refuses products above ``state_cap``."""
    S = space.num_states
    if S > state_cap:
        raise ProductTooLargeError(
            f"explicit product has {S} states ({space.num_x} x {space.num_q} x {space.num_v}), "
            f"above the cap of {state_cap}"
        )
    mdp = space.mdp
    nq, nv, A, na = space.num_q, space.num_v, space.num_actions, space.num_a
    new_v, _ = space.visit_table()

    xs, acts, ks = np.nonzero((mdp.succ >= 0) & mdp.available[:, :, None])
    ys = mdp.succ[xs, acts, ks]
    ps = mdp.prob[xs, acts, ks]
    rows, cols, vals = [], [], []
    for q in range(nq):
        q_next = space.next_q[q, xs] if space.label_source else space.next_q[q, ys]
        for v in range(nv):
            v_next = new_v[v, q_next]
            s = (xs * nq + q) * nv + v
            s2 = (ys * nq + q_next) * nv + v_next
            rows.append(s * A + acts)
            cols.append(s2)
            vals.append(ps)
    for q in range(nq):
        for e in range(space.num_eps):
            t = space.eps_succ[q, e]
            if t < 0:
                continue
            x_all = np.arange(space.num_x)
            for v in range(nv):
                s = (x_all * nq + q) * nv + v
                s2 = (x_all * nq + t) * nv + new_v[v, t]
                rows.append(s * A + na + e)
                cols.append(s2)
                vals.append(np.ones(space.num_x))
    T = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(S * A, S)
    )
    T.sum_duplicates()
    return ExplicitPmdp(space, T, space.available_mask())
