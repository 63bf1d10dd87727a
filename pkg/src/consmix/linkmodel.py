"""Probabilistic description of the random topology.

A LinkModel pins down the first two moments of the Bernoulli link vector:
per-link formation probabilities pi, the m x m link covariance r_q, and the
node-pair probability matrix derived from them.  Construction helpers build
the distance-based probabilities and the two spatial correlation structures
used in the experiments; validate_moments checks the feasibility constraints
that any Bernoulli random vector must satisfy.
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graphs import LinkIndex, Supergraph, complete_graph, link_distance_matrix, link_index

PSD_TOLERANCE = 1e-10
BOUND_TOLERANCE = 1e-10


@dataclass(frozen=True, eq=False)
class LinkModel:
    """First and second moments of the random link indicator vector."""

    idx: LinkIndex
    pi: np.ndarray
    r_q: np.ndarray
    p_matrix: np.ndarray

    @property
    def m(self) -> int:
        return self.idx.m

    @property
    def n(self) -> int:
        return self.p_matrix.shape[0]

    def is_uncorrelated(self, tol: float = 0.0) -> bool:
        off = self.r_q - np.diag(np.diag(self.r_q))
        return bool(np.all(np.abs(off) <= tol))

    def with_covariance(self, r_q: np.ndarray) -> "LinkModel":
        return LinkModel(idx=self.idx, pi=self.pi, r_q=np.asarray(r_q, dtype=float), p_matrix=self.p_matrix)


@dataclass(frozen=True)
class MomentValidationReport:
    ok: bool
    violations: tuple[str, ...]


@dataclass(frozen=True, eq=False)
class MomentScaffold:
    """Lifted n^2-dimensional pieces used by the closed-form second moment.

    f maps the link vector to the vectorized adjacency, w_c is the direct sum
    of the weight-matrix columns, b the block mask with zero diagonal blocks,
    and r_a = f r_q f^T the lifted link covariance.
    """

    f: sp.spmatrix
    b: sp.spmatrix
    w_c: sp.spmatrix
    r_a: sp.spmatrix


def _p_matrix_from_pi(idx: LinkIndex, pi: np.ndarray, n: int) -> np.ndarray:
    p = np.zeros((n, n))
    for l, (i, j) in enumerate(idx.pairs):
        p[i, j] = p[j, i] = pi[l]
    return p


def make_link_model(g: Supergraph, pi: np.ndarray, r_q: np.ndarray | None = None) -> LinkModel:
    """Assemble a LinkModel over g's canonical link order.

    When r_q is omitted the links are independent: the covariance is the
    diagonal of Bernoulli variances pi * (1 - pi).
    """
    idx = link_index(g)
    pi = np.asarray(pi, dtype=float)
    if pi.shape != (idx.m,):
        raise ValueError(f"pi must have one entry per link ({idx.m})")
    if r_q is None:
        r_q = np.diag(pi * (1.0 - pi))
    r_q = np.asarray(r_q, dtype=float)
    if r_q.shape != (idx.m, idx.m):
        raise ValueError("r_q must be m x m")
    return LinkModel(idx=idx, pi=pi, r_q=r_q, p_matrix=_p_matrix_from_pi(idx, pi, g.n))


def probabilities_from_distances(g: Supergraph, k_coef: float) -> LinkModel:
    """Formation probabilities decaying quadratically with link length.

    P_ij = 1 - k_coef * (delta_ij / radius)^2 on supergraph edges; the
    covariance starts out diagonal (independent links).
    """
    if not (0.0 < k_coef <= 1.0):
        raise ValueError("k_coef must lie in (0, 1]")
    if g.positions is None or g.radius is None:
        raise ValueError("graph carries no positions/radius; generate it geometrically")
    idx = link_index(g)
    pi = np.empty(idx.m)
    for l, (i, j) in enumerate(idx.pairs):
        delta = float(np.linalg.norm(g.positions[i] - g.positions[j]))
        pi[l] = 1.0 - k_coef * (delta / g.radius) ** 2
    return make_link_model(g, pi)


def max_pair_covariance(pi: np.ndarray) -> np.ndarray:
    """Upper covariance bound pi_min * (1 - pi_max) for every link pair."""
    lo = np.minimum.outer(pi, pi)
    hi = np.maximum.outer(pi, pi)
    return lo * (1.0 - hi)


def correlation_uniform_fraction(model: LinkModel, c1: float) -> LinkModel:
    """Set every off-diagonal covariance to the fraction c1 of its upper bound."""
    if not (0.0 < c1 <= 1.0):
        raise ValueError("c1 must lie in (0, 1]")
    r_q = c1 * max_pair_covariance(model.pi)
    np.fill_diagonal(r_q, model.pi * (1.0 - model.pi))
    return model.with_covariance(r_q)


def correlation_geometric_decay(
    model: LinkModel,
    g: Supergraph,
    c2: float,
    theta: float,
    kappa: np.ndarray | None = None,
) -> LinkModel:
    """Covariance c2 * theta^kappa * bound, decaying with link hop distance kappa.

    ``kappa`` takes a precomputed link-distance matrix to avoid repeating the
    all-pairs search when scanning over c2.
    """
    if not (0.0 <= c2 <= 1.0):
        raise ValueError("c2 must lie in [0, 1]")
    if not (0.0 < theta < 1.0):
        raise ValueError("theta must lie in (0, 1)")
    if kappa is None:
        kappa = link_distance_matrix(g, link_index(g))
    decay = np.zeros_like(kappa)
    finite = np.isfinite(kappa)
    decay[finite] = theta ** kappa[finite]
    r_q = c2 * decay * max_pair_covariance(model.pi)
    np.fill_diagonal(r_q, model.pi * (1.0 - model.pi))
    return model.with_covariance(r_q)


def validate_moments(model: LinkModel) -> MomentValidationReport:
    """Check the Bernoulli feasibility constraints on (pi, r_q).

    Verifies probability ranges, symmetry, the forced diagonal variance,
    positive semidefiniteness, and the pairwise covariance bounds; every
    violation is reported with its indices.
    """
    violations: list[str] = []
    pi, r_q = model.pi, model.r_q
    m = model.m

    bad = np.flatnonzero((pi < -BOUND_TOLERANCE) | (pi > 1.0 + BOUND_TOLERANCE))
    for l in bad:
        violations.append(f"pi[{l}]={pi[l]:.6g} outside [0, 1]")

    if not np.allclose(r_q, r_q.T, atol=1e-10, rtol=0.0):
        violations.append("r_q is not symmetric")

    diag_target = pi * (1.0 - pi)
    bad = np.flatnonzero(np.abs(np.diag(r_q) - diag_target) > 1e-9)
    for l in bad:
        violations.append(
            f"r_q[{l},{l}]={r_q[l, l]:.6g} differs from Bernoulli variance {diag_target[l]:.6g}"
        )

    if m > 0 and not violations:
        min_eig = float(np.linalg.eigvalsh(0.5 * (r_q + r_q.T)).min())
        if min_eig < -PSD_TOLERANCE:
            violations.append(f"r_q not positive semidefinite (min eigenvalue {min_eig:.3e})")

    upper = max_pair_covariance(pi)
    lower = np.maximum(-np.outer(pi, pi), np.add.outer(pi, pi) - 1.0 - np.outer(pi, pi))
    iu, ju = np.triu_indices(m, k=1)
    vals = r_q[iu, ju]
    too_big = vals > upper[iu, ju] + BOUND_TOLERANCE
    too_small = vals < lower[iu, ju] - BOUND_TOLERANCE
    for k in np.flatnonzero(too_big):
        violations.append(
            f"r_q[{iu[k]},{ju[k]}]={vals[k]:.6g} exceeds upper bound {upper[iu[k], ju[k]]:.6g}"
        )
    for k in np.flatnonzero(too_small):
        violations.append(
            f"r_q[{iu[k]},{ju[k]}]={vals[k]:.6g} below lower bound {lower[iu[k], ju[k]]:.6g}"
        )

    return MomentValidationReport(ok=not violations, violations=tuple(violations))


def complete_uniform_model(n: int, p: float, beta: float) -> LinkModel:
    """Complete supergraph with uniform probability p and correlation coefficient beta."""
    if not (0.0 < p <= 1.0):
        raise ValueError("p must lie in (0, 1]")
    m = n * (n - 1) // 2
    lower = -np.inf
    if m > 1:
        lower = max(lower, -1.0 / (m - 1))
    if p < 1.0:
        lower = max(lower, -p / (1.0 - p))
    if not (lower - 1e-12 <= beta <= 1.0 + 1e-12):
        raise ValueError(
            f"beta={beta:.6g} infeasible: must satisfy {lower:.6g} <= beta <= 1 "
            f"(n={n}, p={p:.6g})"
        )
    g = complete_graph(n)
    var = p * (1.0 - p)
    r_q = np.full((m, m), beta * var)
    np.fill_diagonal(r_q, var)
    return make_link_model(g, np.full(m, p), r_q)


def vec_positions(idx: LinkIndex, n: int) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized-adjacency positions of each link's two directed entries.

    Entry (r, c) of an n x n matrix sits at column-major position c*n + r.
    Link l = (i, j) touches entries (i, j) and (j, i).
    """
    ei, ej = idx.endpoint_arrays()
    return ej * n + ei, ei * n + ej


def selection_matrix(idx: LinkIndex, n: int) -> sp.csc_matrix:
    """Zero-one matrix F with Vec(A) = F q for every symmetric realization."""
    p0, p1 = vec_positions(idx, n)
    rows = np.concatenate([p0, p1])
    cols = np.concatenate([np.arange(idx.m), np.arange(idx.m)])
    data = np.ones(2 * idx.m)
    return sp.csc_matrix((data, (rows, cols)), shape=(n * n, idx.m))


def block_mask_matrix(n: int) -> sp.csr_matrix:
    """Mask B with zero diagonal blocks and off-diagonal blocks 1 e_i^T + e_j 1^T."""
    blocks_i, blocks_j = np.meshgrid(np.arange(n), np.arange(n), indexing="ij")
    off = blocks_i != blocks_j
    bi = blocks_i[off]
    bj = blocks_j[off]
    r = np.arange(n)
    # column e_i of each (i, j) block: entries (r, i) for all r
    rows1 = (bi[:, None] * n + r[None, :]).ravel()
    cols1 = (bj[:, None] * n + bi[:, None]).repeat(n, axis=1).ravel()
    # row e_j^T of each (i, j) block: entries (j, r') for all r'
    rows2 = (bi[:, None] * n + bj[:, None]).repeat(n, axis=1).ravel()
    cols2 = (bj[:, None] * n + r[None, :]).ravel()
    rows = np.concatenate([rows1, rows2])
    cols = np.concatenate([cols1, cols2])
    data = np.ones(rows.size)
    return sp.csr_matrix((data, (rows, cols)), shape=(n * n, n * n))


def column_direct_sum(w: np.ndarray) -> sp.csc_matrix:
    """Direct sum of the columns of w: an n^2 x n block-diagonal column stack."""
    n = w.shape[0]
    rows_w, cols_w = np.nonzero(w)
    rows = cols_w * n + rows_w
    data = w[rows_w, cols_w]
    return sp.csc_matrix((data, (rows, cols_w)), shape=(n * n, n))


def lifted_link_covariance(model: LinkModel, n: int) -> sp.csr_matrix:
    """Sparse R_A = F r_q F^T over the directed-entry positions."""
    p0, p1 = vec_positions(model.idx, n)
    ls, ss = np.nonzero(model.r_q)
    vals = model.r_q[ls, ss]
    rows = np.concatenate([p0[ls], p0[ls], p1[ls], p1[ls]])
    cols = np.concatenate([p0[ss], p1[ss], p0[ss], p1[ss]])
    data = np.concatenate([vals, vals, vals, vals])
    return sp.csr_matrix((data, (rows, cols)), shape=(n * n, n * n))


def build_scaffold(model: LinkModel, w) -> MomentScaffold:
    """Materialize F, B, W_C and R_A for the closed-form covariance algebra."""
    w_arr = w.w if hasattr(w, "w") else np.asarray(w, dtype=float)
    n = w_arr.shape[0]
    if n != model.n:
        raise ValueError("weight matrix and model dimensions differ")
    return MomentScaffold(
        f=selection_matrix(model.idx, n),
        b=block_mask_matrix(n),
        w_c=column_direct_sum(w_arr),
        r_a=lifted_link_covariance(model, n),
    )


def _bisect_max_fraction(feasible, tol: float = 1e-3, minimum: float = 1e-3) -> float:
    if feasible(1.0):
        return 1.0
    if not feasible(minimum):
        raise ValueError(
            f"correlation structure cannot be sampled even at fraction {minimum:g}"
        )
    lo, hi = minimum, 1.0
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if feasible(mid):
            lo = mid
        else:
            hi = mid
    return lo


def max_feasible_c2(model: LinkModel, g: Supergraph, theta: float, tol: float = 1e-3) -> float:
    """Largest c2 for which the geometric-decay structure admits a sampler."""
    from .sampling import clf_feasible

    if model.m <= 1:
        return 1.0
    kappa = link_distance_matrix(g, link_index(g))
    return _bisect_max_fraction(
        lambda c2: clf_feasible(correlation_geometric_decay(model, g, c2, theta, kappa=kappa)),
        tol=tol,
    )


def max_feasible_c1(model: LinkModel, tol: float = 1e-3) -> float:
    """Largest c1 for which the uniform-fraction structure admits a sampler."""
    from .sampling import clf_feasible

    if model.m <= 1:
        return 1.0
    return _bisect_max_fraction(
        lambda c1: clf_feasible(correlation_uniform_fraction(model, c1)), tol=tol
    )


def model_to_json(model: LinkModel) -> str:
    payload = {
        "n": model.n,
        "edges": [[i, j] for i, j in model.idx.pairs],
        "pi": model.pi.tolist(),
        "r_q": model.r_q.tolist(),
    }
    return json.dumps(payload, sort_keys=True, indent=2)


def model_from_json(text: str) -> LinkModel:
    payload = json.loads(text)
    n = payload["n"]
    g = Supergraph(n=n, edges=tuple(tuple(e) for e in payload["edges"]))
    return make_link_model(g, np.asarray(payload["pi"]), np.asarray(payload["r_q"]))
