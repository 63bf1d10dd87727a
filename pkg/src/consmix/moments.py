"""First and second moments of the random consensus weight matrix.

Every topology realization A turns the candidate weights W into the
row-stochastic update I + W (*) A - diag(row sums of W (*) A), where (*) is
the entrywise product.  This module evaluates that map exactly, gives
closed forms for E[script-W] and E[script-W^2] from the link statistics,
enumerates broadcast-gossip moments over the n equiprobable realizations,
and provides brute-force enumeration / Monte Carlo oracles used to verify
the closed forms.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp

from .graphs import LinkIndex, Supergraph, link_index
from .linkmodel import LinkModel, vec_positions


@dataclass(eq=False)
class WeightMatrix:
    """Candidate link weights on the supergraph edges.

    Symmetric mode ties W_ij = W_ji (symmetric random networks); asymmetric
    mode leaves the two directions free (directed protocols).
    """

    w: np.ndarray
    mode: str = "symmetric"

    def __post_init__(self):
        self.w = np.asarray(self.w, dtype=float)
        if self.w.ndim != 2 or self.w.shape[0] != self.w.shape[1]:
            raise ValueError("weights must form a square matrix")
        if np.any(np.diag(self.w) != 0.0):
            raise ValueError("self-weights are derived, the diagonal must be zero")
        if self.mode not in ("symmetric", "asymmetric"):
            raise ValueError(f"unknown mode {self.mode!r}")
        if self.mode == "symmetric" and not np.array_equal(self.w, self.w.T):
            raise ValueError("symmetric mode requires W_ij == W_ji exactly")

    @property
    def n(self) -> int:
        return self.w.shape[0]

    def copy(self) -> "WeightMatrix":
        return WeightMatrix(self.w.copy(), self.mode)


@dataclass(frozen=True, eq=False)
class MomentSet:
    """Mean, second moment and covariance of the random weight matrix."""

    mean: np.ndarray
    second_moment: np.ndarray
    covariance: np.ndarray | None = None


def symmetric_weights(g: Supergraph, values, n: int | None = None) -> WeightMatrix:
    """Weight matrix from one value per undirected supergraph link."""
    n = g.n if n is None else n
    idx = link_index(g)
    values = np.broadcast_to(np.asarray(values, dtype=float), (idx.m,))
    w = np.zeros((n, n))
    for l, (i, j) in enumerate(idx.pairs):
        w[i, j] = w[j, i] = values[l]
    return WeightMatrix(w, "symmetric")


def asymmetric_weights(g: Supergraph, value: float) -> WeightMatrix:
    """Uniform weight on every directed supergraph edge."""
    w = value * g.adjacency()
    return WeightMatrix(w, "asymmetric")


def weights_supported(w: WeightMatrix, g: Supergraph) -> bool:
    mask = g.adjacency() > 0
    return bool(np.all(w.w[~mask] == 0.0))


def projector_ones(n: int) -> np.ndarray:
    """The averaging projector J = (1/n) 1 1^T."""
    return np.full((n, n), 1.0 / n)


def stochastic_update(w_arr: np.ndarray, adjacency: np.ndarray) -> np.ndarray:
    """Row-stochastic update matrix induced by a realized adjacency."""
    wa = w_arr * adjacency
    out = wa.copy()
    out[np.diag_indices_from(out)] += 1.0 - wa.sum(axis=1)
    return out


def realized_weight_matrix(w: WeightMatrix, sample) -> np.ndarray:
    """Exact realized update for one topology sample; rows sum to 1."""
    return stochastic_update(w.w, sample.adjacency())


def mean_weight_matrix(w: WeightMatrix, model: LinkModel) -> np.ndarray:
    """Closed-form E[script-W] = W (*) P + I - diag(W P)."""
    if w.n != model.n:
        raise ValueError("weight matrix and model dimensions differ")
    return stochastic_update(w.w, model.p_matrix)


class LinkCovarianceOperator:
    """Precomputed sparse kernel for the weight-covariance closed form.

    The covariance of the realized update is a quadratic form of the weights
    against the lifted link covariance R_A restricted by a fixed block mask;
    both depend only on the model, so the masked kernel is assembled once and
    reused across weight iterates.  Storage is sparse: the kernel has at most
    (2 * number of correlated link pairs) nonzero rows, never n^2 x n^2 dense.
    """

    def __init__(self, model: LinkModel):
        self.n = model.n
        self.kernel = _masked_lifted_covariance(model)

    def covariance(self, w_arr: np.ndarray) -> np.ndarray:
        """R_C = W_C^T {R_A (*) mask} W_C, returned dense and symmetrized."""
        w_c = _column_direct_sum_sparse(w_arr)
        cov = (w_c.T @ (self.kernel @ w_c)).toarray()
        return 0.5 * (cov + cov.T)

    def quadratic_subgradient(
        self, w_arr: np.ndarray, u: np.ndarray, ei: np.ndarray, ej: np.ndarray
    ) -> np.ndarray:
        """Per-link derivative of u^T R_C u with tied symmetric weights."""
        n = self.n
        rows, cols = np.nonzero(w_arr)
        v = np.zeros(n * n)
        v[cols * n + rows] = w_arr[rows, cols] * u[cols]
        sv = self.kernel @ v
        return 2.0 * (u[ej] * sv[ej * n + ei] + u[ei] * sv[ei * n + ej])


def _masked_lifted_covariance(model: LinkModel) -> sp.csr_matrix:
    n = model.n
    p0, p1 = vec_positions(model.idx, n)
    ls, ss = np.nonzero(model.r_q)
    vals = model.r_q[ls, ss]
    rows = np.concatenate([p0[ls], p0[ls], p1[ls], p1[ls]])
    cols = np.concatenate([p0[ss], p1[ss], p0[ss], p1[ss]])
    data = np.concatenate([vals] * 4)

    r, c = rows % n, rows // n
    r2, c2 = cols % n, cols // n
    same_block = c == c2
    # diagonal blocks carry 1 1^T + I, off-diagonal blocks I - 1 e_c^T - e_{c2} 1^T
    mask = np.where(
        same_block,
        1.0 + (r == r2),
        (r == r2).astype(float) - (r2 == c) - (r == c2),
    )
    data = data * mask
    keep = data != 0.0
    return sp.csr_matrix(
        (data[keep], (rows[keep], cols[keep])), shape=(n * n, n * n)
    )


def _column_direct_sum_sparse(w_arr: np.ndarray) -> sp.csc_matrix:
    n = w_arr.shape[0]
    rows, cols = np.nonzero(w_arr)
    return sp.csc_matrix(
        (w_arr[rows, cols], (cols * n + rows, cols)), shape=(n * n, n)
    )


def second_moment_correlated(
    w: WeightMatrix, model: LinkModel, operator: LinkCovarianceOperator | None = None
) -> MomentSet:
    """Closed-form moments for symmetric links with arbitrary spatial correlation."""
    if w.mode != "symmetric":
        raise ValueError("closed-form second moment requires symmetric weights")
    if operator is None:
        operator = LinkCovarianceOperator(model)
    mean = mean_weight_matrix(w, model)
    cov = operator.covariance(w.w)
    return MomentSet(mean=mean, second_moment=mean @ mean + cov, covariance=cov)


def covariance_uncorrelated(w: WeightMatrix, model: LinkModel) -> np.ndarray:
    """Covariance special case for spatially independent links.

    R_C = 2 [ diag{ ((1 1^T - P) (*) P) (W (*) W) } - (1 1^T - P) (*) P (*) W (*) W ].
    """
    if w.mode != "symmetric":
        raise ValueError("requires symmetric weights")
    if not model.is_uncorrelated():
        raise ValueError("model has correlated links; use the general closed form")
    p = model.p_matrix
    g = (1.0 - p) * p
    w2 = w.w * w.w
    return 2.0 * (np.diag((g @ w2).diagonal()) - g * w2)


def gossip_realizations(w: WeightMatrix, g: Supergraph) -> list[np.ndarray]:
    """The n equiprobable broadcast updates, one per broadcasting node."""
    mats = []
    for b in range(g.n):
        a = np.zeros((g.n, g.n))
        for i, j in g.edges:
            if j == b:
                a[i, b] = 1.0
            elif i == b:
                a[j, b] = 1.0
        mats.append(stochastic_update(w.w, a))
    return mats


def gossip_moments(w: WeightMatrix, g: Supergraph) -> tuple[np.ndarray, np.ndarray]:
    """Exact (E[script-W^T script-W], E[script-W^T J script-W]) for broadcast gossip.

    Averages over the n equiprobable realizations in closed form; this is the
    ground truth the tabulated entrywise formulas are checked against.
    """
    n = g.n
    w_arr = w.w
    recv, bcast = np.nonzero(g.adjacency())
    wlb = w_arr[recv, bcast]

    t1 = np.zeros((n, n))
    np.add.at(t1, (recv, bcast), wlb)
    np.add.at(t1, (recv, recv), -wlb)
    t2 = np.zeros((n, n))
    np.add.at(t2, (bcast, bcast), wlb**2)
    np.add.at(t2, (recv, recv), wlb**2)
    np.add.at(t2, (bcast, recv), -(wlb**2))
    np.add.at(t2, (recv, bcast), -(wlb**2))
    e_tt = np.eye(n) + (t1 + t1.T + t2) / n

    col_sums = w_arr.sum(axis=0)
    s_mat = 1.0 - w_arr.T + np.diag(col_sums)
    e_tjt = (s_mat.T @ s_mat) / n**2
    return e_tt, e_tjt


def gossip_moments_literal(w: WeightMatrix, g: Supergraph) -> tuple[np.ndarray, np.ndarray]:
    """Tabulated entrywise gossip moment formulas, kept for cross-validation.

    Transcribed as published; the diagonal of the first output is known to
    disagree with the exact enumeration (it drops the realizations in which a
    node keeps its state with weight one).  Use compare_gossip_moments to
    surface the gap; do not use this variant for optimization.
    """
    n = g.n
    w_arr = w.w
    col_sq = (w_arr**2).sum(axis=0)
    keep = ((1.0 - w_arr) ** 2).sum(axis=1) - 1.0  # excludes l == i
    e_tt = (w_arr * (1.0 - w_arr) + (w_arr * (1.0 - w_arr)).T) / n
    np.fill_diagonal(e_tt, (col_sq + keep) / n)

    col_sums = w_arr.sum(axis=0)
    u = 1.0 - w_arr
    cross = u @ u.T
    term3 = cross - (1.0 - w_arr.T) - (1.0 - w_arr)
    e_tjt = (
        (1.0 - w_arr.T) * (1.0 + col_sums)[:, None]
        + (1.0 - w_arr) * (1.0 + col_sums)[None, :]
        + term3
    ) / n**2
    np.fill_diagonal(e_tjt, ((1.0 + col_sums) ** 2 + keep) / n**2)
    return e_tt, e_tjt


@dataclass(frozen=True)
class GossipMomentComparison:
    max_diff_tt_offdiag: float
    max_diff_tt_diag: float
    max_diff_tjt: float


def compare_gossip_moments(w: WeightMatrix, g: Supergraph) -> GossipMomentComparison:
    """Entrywise gap between exact enumeration and the tabulated formulas."""
    tt, tjt = gossip_moments(w, g)
    tt_lit, tjt_lit = gossip_moments_literal(w, g)
    diff_tt = np.abs(tt - tt_lit)
    off = diff_tt - np.diag(np.diag(diff_tt))
    return GossipMomentComparison(
        max_diff_tt_offdiag=float(off.max()) if g.n > 1 else 0.0,
        max_diff_tt_diag=float(np.diag(diff_tt).max()),
        max_diff_tjt=float(np.abs(tjt - tjt_lit).max()),
    )


def monte_carlo_second_moment(
    w: WeightMatrix, samples, project_deviation: bool = False
) -> np.ndarray:
    """Sample average of script-W^T script-W (optionally script-W^T (I-J) script-W)."""
    mats = _realized_batch(w, samples)
    if len(mats) == 0:
        raise ValueError("need at least one sample")
    if project_deviation:
        proj = np.eye(w.n) - projector_ones(w.n)
        mats = proj[None, :, :] @ mats
    products = np.einsum("kji,kjl->kil", mats, mats)
    return products.mean(axis=0)


def _realized_batch(w: WeightMatrix, samples) -> np.ndarray:
    bits = getattr(samples, "bits_matrix", None)
    if bits is not None and getattr(samples, "mode", "") == "symmetric":
        ei, ej = samples.idx.endpoint_arrays()
        k = bits.shape[0]
        n = w.n
        a = np.zeros((k, n, n))
        a[:, ei, ej] = bits
        a[:, ej, ei] = bits
        wa = w.w[None, :, :] * a
        mats = wa
        diag = 1.0 - wa.sum(axis=2)
        mats[:, np.arange(n), np.arange(n)] += diag
        return mats
    return np.stack([realized_weight_matrix(w, s) for s in samples])


def enumerate_second_moment(w: WeightMatrix, model: LinkModel) -> MomentSet:
    """Exhaustive 2^m oracle for spatially independent links (m kept small)."""
    if not model.is_uncorrelated():
        raise ValueError("enumeration over independent links needs diagonal r_q")
    m = model.m
    if m > 20:
        raise ValueError("enumeration limited to m <= 20 links")
    patterns = np.array(list(itertools.product((0, 1), repeat=m)), dtype=float)
    probs = np.prod(
        np.where(patterns > 0, model.pi[None, :], 1.0 - model.pi[None, :]), axis=1
    )
    return enumerate_second_moment_joint(w, model.idx, patterns, probs)


def enumerate_second_moment_joint(
    w: WeightMatrix, idx: LinkIndex, patterns: np.ndarray, probs: np.ndarray
) -> MomentSet:
    """Moments under an explicitly specified joint law over link patterns."""
    probs = np.asarray(probs, dtype=float)
    if patterns.shape[0] != probs.shape[0]:
        raise ValueError("one probability per pattern required")
    if abs(probs.sum() - 1.0) > 1e-12:
        raise ValueError("pattern probabilities must sum to 1")
    n = w.n
    ei, ej = idx.endpoint_arrays()
    mean = np.zeros((n, n))
    second = np.zeros((n, n))
    for pattern, prob in zip(patterns, probs):
        a = np.zeros((n, n))
        a[ei, ej] = pattern
        a[ej, ei] = pattern
        mat = stochastic_update(w.w, a)
        mean += prob * mat
        second += prob * (mat @ mat)
    return MomentSet(mean=mean, second_moment=second, covariance=second - mean @ mean)


def joint_law_moments(patterns: np.ndarray, probs: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """(pi, r_q) implied by an explicit joint law, for building matched models."""
    probs = np.asarray(probs, dtype=float)
    pi = probs @ patterns
    second = patterns.T @ (probs[:, None] * patterns)
    return pi, second - np.outer(pi, pi)
