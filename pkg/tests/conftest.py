"""Shared fixtures and independent oracles for the test suite.

The oracles here deliberately avoid the library's own closed forms: finite
differences for subgradients, breadth-first search for distances, explicit
joint laws for moments, and characteristic-polynomial roots for eigenvalues.
"""

from __future__ import annotations

import itertools

import numpy as np
import pytest

from consmix.graphs import Supergraph, link_index
from consmix.linkmodel import make_link_model
from consmix.moments import WeightMatrix, symmetric_weights
from consmix.objectives import phi, psi_gossip


@pytest.fixture
def rng():
    return np.random.default_rng(0xC0FFEE)


def bfs_node_distances(g: Supergraph, src: int) -> dict:
    """Plain breadth-first search, independent of the library implementation."""
    adj = {v: set() for v in range(g.n)}
    for i, j in g.edges:
        adj[i].add(j)
        adj[j].add(i)
    dist = {src: 0}
    frontier = [src]
    while frontier:
        nxt = []
        for v in frontier:
            for w in adj[v]:
                if w not in dist:
                    dist[w] = dist[v] + 1
                    nxt.append(w)
        frontier = nxt
    return dist


def brute_link_distance(g: Supergraph, pair_a, pair_b) -> float:
    best = np.inf
    for a in pair_a:
        dist = bfs_node_distances(g, a)
        for b in pair_b:
            if b in dist:
                best = min(best, dist[b])
    return best


def random_joint_law(m: int, rng) -> tuple[np.ndarray, np.ndarray]:
    """Explicit probability for each of the 2^m link patterns."""
    patterns = np.array(list(itertools.product((0.0, 1.0), repeat=m)), dtype=float)
    probs = rng.dirichlet(np.ones(len(patterns)))
    return patterns, probs


def random_symmetric_weights(g: Supergraph, rng, lo=-0.3, hi=0.8) -> WeightMatrix:
    idx = link_index(g)
    return symmetric_weights(g, rng.uniform(lo, hi, idx.m))


def random_asymmetric_weights(g: Supergraph, rng, lo=0.05, hi=0.95) -> WeightMatrix:
    w = rng.uniform(lo, hi, (g.n, g.n)) * g.adjacency()
    return WeightMatrix(w, "asymmetric")


def independent_model(g: Supergraph, rng, lo=0.15, hi=0.95):
    idx = link_index(g)
    return make_link_model(g, rng.uniform(lo, hi, idx.m))


def fd_phi(w: WeightMatrix, model, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of phi over tied symmetric link weights."""
    out = np.zeros_like(w.w)
    for i, j in model.idx.pairs:
        wp, wm = w.w.copy(), w.w.copy()
        wp[i, j] += h
        wp[j, i] += h
        wm[i, j] -= h
        wm[j, i] -= h
        out[i, j] = out[j, i] = (
            phi(WeightMatrix(wp, "symmetric"), model)
            - phi(WeightMatrix(wm, "symmetric"), model)
        ) / (2 * h)
    return out


def fd_psi(w: WeightMatrix, g: Supergraph, h: float = 1e-6) -> np.ndarray:
    """Central finite differences of the gossip rate over directed weights."""
    out = np.zeros_like(w.w)
    for i, j in zip(*np.nonzero(g.adjacency())):
        wp, wm = w.w.copy(), w.w.copy()
        wp[i, j] += h
        wm[i, j] -= h
        out[i, j] = (
            psi_gossip(WeightMatrix(wp, "asymmetric"), g)
            - psi_gossip(WeightMatrix(wm, "asymmetric"), g)
        ) / (2 * h)
    return out


def charpoly_eigenvalues(a: np.ndarray) -> np.ndarray:
    """Eigenvalues via Faddeev-LeVerrier characteristic coefficients + roots.

    Independent of any eigendecomposition routine; fine for tiny matrices.
    """
    n = a.shape[0]
    coeffs = np.zeros(n + 1)
    coeffs[0] = 1.0
    m = np.zeros_like(a)
    for k in range(1, n + 1):
        m = a @ m + coeffs[k - 1] * np.eye(n)
        coeffs[k] = -np.trace(a @ m) / k
    return np.sort(np.roots(coeffs).real)
