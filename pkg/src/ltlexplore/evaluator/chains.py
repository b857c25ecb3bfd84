"""Graph analysis: bottom SCCs of chains and maximal end components of MDPs."""

from __future__ import annotations

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components


def strong_components(adj: sp.spmatrix) -> tuple[int, np.ndarray]:
    return connected_components(adj, directed=True, connection="strong")


def bottom_components(M: sp.csr_matrix) -> tuple[np.ndarray, list[np.ndarray]]:
    """SCC labels of a chain plus the list of bottom SCCs (state-index arrays)."""
    n, labels = strong_components(M)
    C = M.tocoo()
    leaving = labels[C.row] != labels[C.col]
    has_exit = np.zeros(n, dtype=bool)
    has_exit[labels[C.row[leaving]]] = True
    order = np.argsort(labels, kind="stable")
    bounds = np.searchsorted(labels[order], np.arange(n + 1))
    bottoms = [order[bounds[c] : bounds[c + 1]] for c in range(n) if not has_exit[c]]
    return labels, bottoms


def can_reach(adj: sp.csr_matrix, targets: np.ndarray) -> np.ndarray:
    """States with a path (length >= 0) into ``targets`` (boolean mask)."""
    rev = adj.T.tocsr()
    seen = targets.copy()
    frontier = np.flatnonzero(targets)
    while frontier.size:
        nxt = rev[frontier].indices
        nxt = np.unique(nxt[~seen[nxt]])
        seen[nxt] = True
        frontier = nxt
    return seen


def _state_graph(T: sp.csr_matrix, allowed: np.ndarray) -> sp.csr_matrix:
    S, A = allowed.shape
    keep = allowed.ravel()
    R = T.tocoo()
    m = keep[R.row]
    g = sp.csr_matrix((np.ones(m.sum()), (R.row[m] // A, R.col[m])), shape=(S, S))
    return g


def mec_decomposition(T: sp.csr_matrix, allowed: np.ndarray) -> list[tuple[np.ndarray, np.ndarray]]:
    """Maximal end components within the sub-MDP given by ``allowed`` (S, A).

    Returns a list of (states, allowed-actions mask restricted to the MEC).
    """
    S, A = allowed.shape
    allowed = allowed.copy()
    alive = allowed.any(axis=1)
    R = T.tocoo()
    row_state = R.row // A
    while True:
        allowed &= alive[:, None]
        g = _state_graph(T, allowed)
        _, labels = strong_components(g)
        labels = np.where(alive, labels, -1 - np.arange(S))
        # an action stays if every successor is alive and in the source's SCC
        stray = (labels[R.col] != labels[row_state]) | ~alive[R.col]
        bad_rows = np.zeros(S * A, dtype=bool)
        bad_rows[R.row[stray]] = True
        new_allowed = allowed & ~bad_rows.reshape(S, A)
        new_alive = new_allowed.any(axis=1)
        if np.array_equal(new_allowed, allowed) and np.array_equal(new_alive, alive):
            break
        allowed, alive = new_allowed, new_alive
    out = []
    for lab in np.unique(labels[alive]):
        states = np.flatnonzero((labels == lab) & alive)
        mask = np.zeros_like(allowed)
        mask[states] = allowed[states]
        out.append((states, mask))
    return out
