"""Subgradient weight optimization and the baseline weight rules.

The MSE rate phi and the MSdev rate psi are convex but nonsmooth, so both
are minimized by a subgradient method with diminishing steps
alpha_k = step_scale / sqrt(k) and best-iterate tracking (subgradient steps
are not monotone).  Subgradients come from the variational form of the top
eigenvalue: with u the maximal eigenvector, the derivative of the quadratic
moment matrix in each weight gives an exact subgradient.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .graphs import Supergraph
from .linkmodel import LinkModel, lifted_link_covariance, make_link_model
from .moments import (
    LinkCovarianceOperator,
    WeightMatrix,
    gossip_moments,
    mean_weight_matrix,
    projector_ones,
    stochastic_update,
)
from .objectives import Eigenpair, max_eigenpair, psi_gossip


@dataclass
class OptimizerConfig:
    max_iters: int = 500
    step_scale: float = 1.0
    seed: int | None = None
    eigen_gap_floor: float = 1e-6
    mode: str = "phi_correlated"

    def __post_init__(self):
        if self.max_iters < 1:
            raise ValueError("max_iters must be at least 1")
        if self.step_scale <= 0:
            raise ValueError("step_scale must be positive")


@dataclass(eq=False)
class OptimizationResult:
    best_weights: WeightMatrix
    best_objective: float
    objective_trace: np.ndarray
    iterations_run: int


@dataclass(frozen=True, eq=False)
class SubgradientMatrix:
    """Subgradient supported on the supergraph edges (symmetric in symmetric mode)."""

    h: np.ndarray


def _mean_term(p_matrix, mean, u, ei, ej):
    """Derivative of u^T (mean^2 - J) u in each tied symmetric weight."""
    t = mean @ u
    return 2.0 * p_matrix[ei, ej] * (u[ei] - u[ej]) * (t[ej] - t[ei])


def subgradient_phi_uncorrelated(
    w: WeightMatrix, model: LinkModel, eig: Eigenpair
) -> SubgradientMatrix:
    """Exact subgradient of phi for spatially independent links.

    H_ij = 2 P_ij (u_i - u_j) u^T (mean_j - mean_i)
         + 4 P_ij (1 - P_ij) W_ij (u_i - u_j)^2 on supergraph edges.
    """
    ei, ej = model.idx.endpoint_arrays()
    p = model.p_matrix
    mean = mean_weight_matrix(w, model)
    u = eig.vector
    vals = _mean_term(p, mean, u, ei, ej)
    pij = p[ei, ej]
    vals = vals + 4.0 * pij * (1.0 - pij) * w.w[ei, ej] * (u[ei] - u[ej]) ** 2
    h = np.zeros_like(w.w)
    h[ei, ej] = vals
    h[ej, ei] = vals
    return SubgradientMatrix(h=h)


def subgradient_phi_correlated(
    w: WeightMatrix,
    model: LinkModel,
    eig: Eigenpair,
    operator: LinkCovarianceOperator | None = None,
) -> SubgradientMatrix:
    """Exact subgradient of phi for arbitrarily correlated links.

    The covariance part differentiates the quadratic form of the weights
    against the masked lifted link covariance; the mean part is shared with
    the uncorrelated case.
    """
    if operator is None:
        operator = LinkCovarianceOperator(model)
    ei, ej = model.idx.endpoint_arrays()
    mean = mean_weight_matrix(w, model)
    u = eig.vector
    vals = _mean_term(model.p_matrix, mean, u, ei, ej)
    quad = operator.quadratic_subgradient(w.w, u, ei, ej)
    h = np.zeros_like(w.w)
    h[ei, ej] = vals + quad
    h[ej, ei] = vals + quad
    return SubgradientMatrix(h=h)


def subgradient_phi_correlated_tabular(
    w: WeightMatrix, model: LinkModel, eig: Eigenpair
) -> SubgradientMatrix:
    """Blockwise tabulated form of the correlated subgradient.

    Reads the covariance derivative off the n x n blocks of the lifted link
    covariance (diagonals, rows, columns); dense in n^2, so meant for
    cross-validation on small instances rather than production use.
    """
    n = model.n
    r_a = lifted_link_covariance(model, n).toarray()
    mean = mean_weight_matrix(w, model)
    u = eig.vector
    w_arr = w.w
    h = np.zeros_like(w_arr)

    def block(a, b):
        return r_a[a * n : (a + 1) * n, b * n : (b + 1) * n]

    for i, j in model.idx.pairs:
        wi, wj = w_arr[:, i], w_arr[:, j]
        k1 = r_a[j * n : (j + 1) * n, i * n + j]
        k2 = r_a[i * n : (i + 1) * n, j * n + i]
        k3 = r_a[i * n : (i + 1) * n, i * n + j]
        k4 = r_a[j * n : (j + 1) * n, j * n + i]
        val = (
            2.0 * u[i] ** 2 * wi @ block(i, i)[:, j]
            + 2.0 * u[j] ** 2 * wj @ block(j, j)[:, i]
            + 2.0 * u[i] * wj @ (u * k1)
            + 2.0 * u[j] * wi @ (u * k2)
            - 2.0 * u[i] * u[j] * wj @ block(j, i)[:, j]
            - 2.0 * u[i] * u[j] * wi @ block(i, j)[:, i]
            - 2.0 * u[i] * wi @ (u * k3)
            - 2.0 * u[j] * wj @ (u * k4)
        )
        t = mean @ u
        val += 2.0 * model.p_matrix[i, j] * (u[i] - u[j]) * (t[j] - t[i])
        h[i, j] = h[j, i] = val
    return SubgradientMatrix(h=h)


def subgradient_psi_gossip(w: WeightMatrix, g: Supergraph, eig: Eigenpair) -> SubgradientMatrix:
    """Exact subgradient of psi for broadcast gossip.

    Differentiates the average of the n realized quadratic forms: for a
    directed edge (i, j), only broadcaster j's realization depends on W_ij.
    """
    n = g.n
    u = eig.vector
    h = np.zeros((n, n))
    neighbors = g.neighbors()
    for b in range(n):
        recv = np.asarray(neighbors[b], dtype=int)
        if recv.size == 0:
            continue
        y = u.copy()
        y[recv] += w.w[recv, b] * (u[b] - u[recv])
        z = y - y.mean()
        h[recv, b] = (2.0 / n) * (u[b] - u[recv]) * z[recv]
    return SubgradientMatrix(h=h)


def gossip_rate_derivative_tabular(w: WeightMatrix, g: Supergraph, i: int, j: int) -> np.ndarray:
    """Tabulated entrywise derivative of the gossip rate matrix in W_ij.

    Kept only for cross-checking: the published table disagrees with the
    exact enumeration derivative (see the validation suite), and one of its
    rows assigns two conflicting values to the same entry; the transcription
    keeps the first.
    """
    n = g.n
    w_arr = w.w
    d = np.zeros((n, n))
    col_j = w_arr[:, j].sum() - w_arr[j, j]
    d[i, i] = -2.0 * (n - 1) / n * (1.0 - w_arr[i, j])
    d[j, j] = (2.0 / n) * w_arr[i, j] - (2.0 / n) * (1.0 - col_j)
    d[i, j] = (1.0 / n) * (1.0 - 2.0 * w_arr[i, j]) - (1.0 / n**2) * (
        -1.0 - col_j - w_arr[i, j]
    )
    d[j, i] = d[i, j]
    for l in range(n):
        if l == i or l == j:
            continue
        d[i, l] = d[l, i] = (1.0 / n**2) * (1.0 - w_arr[l, j])
    return d


def metropolis_weights(g: Supergraph) -> WeightMatrix:
    """Degree-based baseline W_ij = 1 / (1 + max(d_i, d_j))."""
    deg = g.degrees()
    w = np.zeros((g.n, g.n))
    for i, j in g.edges:
        w[i, j] = w[j, i] = 1.0 / (1.0 + max(deg[i], deg[j]))
    return WeightMatrix(w, "symmetric")


def static_model(g: Supergraph) -> LinkModel:
    """Deterministic-topology model: every supergraph link always on."""
    return make_link_model(g, np.ones(len(g.edges)))


def optimize_phi(w0: WeightMatrix, model: LinkModel, cfg: OptimizerConfig) -> OptimizationResult:
    """Minimize the MSE rate phi over symmetric supergraph-supported weights."""
    if w0.mode != "symmetric":
        raise ValueError("phi optimization works on symmetric weights")
    operator = LinkCovarianceOperator(model)
    uncorrelated = model.is_uncorrelated()
    ei, ej = model.idx.endpoint_arrays()
    p = model.p_matrix
    j_mat = projector_ones(model.n)

    def evaluate(w_arr, iteration):
        if not np.all(np.isfinite(w_arr)):
            raise RuntimeError(
                f"weights became non-finite at iteration {iteration}: diverging "
                f"subgradient steps (step_scale={cfg.step_scale})"
            )
        mean = stochastic_update(w_arr, p)
        with np.errstate(over="raise", invalid="raise"):
            try:
                second = mean @ mean + operator.covariance(w_arr)
            except FloatingPointError as exc:
                raise RuntimeError(
                    f"phi became non-finite at iteration {iteration}: diverging "
                    f"subgradient steps (step_scale={cfg.step_scale})"
                ) from exc
        if np.abs(second).max() > 1e100:
            raise RuntimeError(
                f"phi blew up at iteration {iteration}: diverging subgradient "
                f"steps (step_scale={cfg.step_scale})"
            )
        eig = max_eigenpair(second - j_mat)
        return eig, mean

    w = w0.w.copy()
    eig, mean = evaluate(w, 0)
    trace = [eig.value]
    best_w, best_phi = w.copy(), eig.value
    for k in range(1, cfg.max_iters + 1):
        u = eig.vector
        vals = _mean_term(p, mean, u, ei, ej)
        if uncorrelated:
            pij = p[ei, ej]
            vals = vals + 4.0 * pij * (1.0 - pij) * w[ei, ej] * (u[ei] - u[ej]) ** 2
        else:
            vals = vals + operator.quadratic_subgradient(w, u, ei, ej)
        w[ei, ej] = w[ei, ej] - (cfg.step_scale / math.sqrt(k)) * vals
        w[ej, ei] = w[ei, ej]
        eig, mean = evaluate(w, k)
        trace.append(eig.value)
        if eig.value < best_phi:
            best_phi = eig.value
            best_w = w.copy()
    return OptimizationResult(
        best_weights=WeightMatrix(best_w, "symmetric"),
        best_objective=float(best_phi),
        objective_trace=np.asarray(trace),
        iterations_run=cfg.max_iters,
    )


def supergraph_weights(g: Supergraph, cfg: OptimizerConfig | None = None) -> WeightMatrix:
    """Weights optimal for the deterministic supergraph (spectral-radius design)."""
    if cfg is None:
        cfg = OptimizerConfig()
    result = optimize_phi(metropolis_weights(g), static_model(g), cfg)
    return result.best_weights


class BalanceProjection:
    """Euclidean projection onto the in/out probability-balance constraints.

    The feasible set is the affine (here linear) subspace of edge weights for
    which, at every node, the expected incoming weighted sum matches the
    expected outgoing one; this makes the mean update column-stochastic.
    """

    def __init__(self, g: Supergraph, p_matrix: np.ndarray):
        recv, bcast = np.nonzero(g.adjacency())
        if recv.size == 0:
            raise ValueError("graph has no edges to project over")
        pvals = p_matrix[recv, bcast]
        if np.any(pvals <= 0):
            raise ValueError("every supergraph edge needs positive formation probability")
        n = g.n
        mat = np.zeros((n, recv.size))
        cols = np.arange(recv.size)
        mat[bcast, cols] += pvals
        mat[recv, cols] -= pvals
        self.recv, self.bcast = recv, bcast
        self.mat = mat
        self.kernel = np.linalg.pinv(mat @ mat.T)

    def apply(self, w_arr: np.ndarray) -> np.ndarray:
        x = w_arr[self.recv, self.bcast]
        corrected = x - self.mat.T @ (self.kernel @ (self.mat @ x))
        out = np.zeros_like(w_arr)
        out[self.recv, self.bcast] = corrected
        return out

    def residual(self, w_arr: np.ndarray) -> np.ndarray:
        return self.mat @ w_arr[self.recv, self.bcast]


def optimize_psi(
    w0: WeightMatrix,
    g: Supergraph,
    cfg: OptimizerConfig,
    constrained: bool = False,
) -> OptimizationResult:
    """Minimize the MSdev rate psi for broadcast gossip over directed weights.

    In constrained mode every iterate is projected onto the balance
    subspace, keeping the mean update average-preserving in expectation; the
    unconstrained mode matches the plain randomized-broadcast setting.
    """
    if w0.mode != "asymmetric":
        raise ValueError("psi optimization works on asymmetric weights")
    projection = BalanceProjection(g, g.adjacency() / g.n) if constrained else None

    w = w0.w.copy()
    if projection is not None:
        w = projection.apply(w)

    def evaluate(w_arr, iteration):
        if not np.all(np.isfinite(w_arr)):
            raise RuntimeError(
                f"weights became non-finite at iteration {iteration}: diverging "
                f"subgradient steps (step_scale={cfg.step_scale})"
            )
        e_tt, e_tjt = gossip_moments(WeightMatrix(w_arr, "asymmetric"), g)
        return max_eigenpair(e_tt - e_tjt)

    eig = evaluate(w, 0)
    trace = [eig.value]
    best_w, best_psi = w.copy(), eig.value
    for k in range(1, cfg.max_iters + 1):
        h = subgradient_psi_gossip(WeightMatrix(w, "asymmetric"), g, eig).h
        w = w - (cfg.step_scale / math.sqrt(k)) * h
        if projection is not None:
            w = projection.apply(w)
        eig = evaluate(w, k)
        trace.append(eig.value)
        if eig.value < best_psi:
            best_psi = eig.value
            best_w = w.copy()
    return OptimizationResult(
        best_weights=WeightMatrix(best_w, "asymmetric"),
        best_objective=float(best_psi),
        objective_trace=np.asarray(trace),
        iterations_run=cfg.max_iters,
    )


def optimal_equal_gossip_weight(g: Supergraph, tol: float = 1e-6) -> tuple[float, float]:
    """Best single shared weight for broadcast gossip, by golden-section search.

    psi restricted to the equal-weight line is convex, hence unimodal, so the
    golden-section bracket converges to the global optimum of the line.
    """
    adjacency = g.adjacency()

    def f(gval: float) -> float:
        return psi_gossip(WeightMatrix(gval * adjacency, "asymmetric"), g)

    invphi = (math.sqrt(5.0) - 1.0) / 2.0
    a, b = 1e-9, 1.0
    c = b - invphi * (b - a)
    d = a + invphi * (b - a)
    fc, fd = f(c), f(d)
    while b - a > tol:
        if fc < fd:
            b, d, fd = d, c, fc
            c = b - invphi * (b - a)
            fc = f(c)
        else:
            a, c, fc = c, d, fd
            d = a + invphi * (b - a)
            fd = f(d)
    g_star = 0.5 * (a + b)
    return g_star, f(g_star)
