"""Spectral convergence-rate objectives and their closed-form anchors.

phi(W) is the per-iteration contraction factor of the mean squared consensus
error for symmetric random links; psi(W) plays the same role for the mean
squared deviation under asymmetric links.  Both are maximal eigenvalues of
symmetric moment matrices, hence convex in the weights.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .graphs import Supergraph
from .linkmodel import LinkModel
from .moments import (
    LinkCovarianceOperator,
    MomentSet,
    WeightMatrix,
    gossip_moments,
    projector_ones,
    second_moment_correlated,
)


@dataclass(frozen=True, eq=False)
class Eigenpair:
    """Maximal eigenvalue/eigenvector of a symmetric matrix, with spectral gap."""

    value: float
    vector: np.ndarray
    gap: float


def max_eigenpair(a: np.ndarray) -> Eigenpair:
    """Maximal eigenpair of a (near-)symmetric matrix.

    The input is symmetrized before the dense decomposition; the eigenvector
    sign is fixed so its first non-negligible component is positive.
    """
    a = np.asarray(a, dtype=float)
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    scale = max(1.0, float(np.abs(a).max()))
    if np.abs(a - a.T).max() > 1e-10 * scale:
        raise ValueError("matrix is not symmetric within tolerance")
    sym = 0.5 * (a + a.T)
    vals, vecs = np.linalg.eigh(sym)
    vec = vecs[:, -1].copy()
    nz = np.flatnonzero(np.abs(vec) > 1e-12)
    if nz.size and vec[nz[0]] < 0:
        vec = -vec
    gap = float(vals[-1] - vals[-2]) if vals.size > 1 else math.inf
    return Eigenpair(value=float(vals[-1]), vector=vec, gap=gap)


def rate_matrix(second_moment: np.ndarray) -> np.ndarray:
    """E[script-W^2] - J, whose top eigenvalue is the MSE contraction rate."""
    return second_moment - projector_ones(second_moment.shape[0])


def phi_from_moments(moments: MomentSet) -> float:
    value = max_eigenpair(rate_matrix(moments.second_moment)).value
    if value < -1e-10:
        warnings.warn(
            f"MSE rate came out negative ({value:.3e}); the moment matrix "
            "should be positive semidefinite on the error subspace",
            RuntimeWarning,
        )
    return value


def phi(w: WeightMatrix, model: LinkModel, operator: LinkCovarianceOperator | None = None) -> float:
    """MSE convergence rate lambda_max(E[script-W^2] - J)."""
    return phi_from_moments(second_moment_correlated(w, model, operator))


def psi(w: WeightMatrix, second_dev_moment: np.ndarray) -> float:
    """MSdev convergence rate lambda_max(E[script-W^T (I - J) script-W])."""
    return max_eigenpair(second_dev_moment).value


def psi_gossip(w: WeightMatrix, g: Supergraph) -> float:
    """psi evaluated from exact broadcast-gossip moments."""
    e_tt, e_tjt = gossip_moments(w, g)
    return psi(w, e_tt - e_tjt)


def complete_graph_optimum(n: int, p: float, beta: float) -> tuple[float, float]:
    """Analytic optimal uniform weight and rate for the complete random graph.

    W* = 1 / (n p + (1 - p) (2 + beta (n - 2)))
    phi* = 1 - 1 / (1 + ((1 - p)/p) ((2/n)(1 - beta) + beta))
    """
    from .linkmodel import complete_uniform_model

    complete_uniform_model(n, p, beta)  # validates the feasibility of beta
    w_star = 1.0 / (n * p + (1.0 - p) * (2.0 + beta * (n - 2)))
    phi_star = 1.0 - 1.0 / (1.0 + ((1.0 - p) / p) * ((2.0 / n) * (1.0 - beta) + beta))
    return w_star, phi_star


def tau(phi_value: float) -> float:
    """Analytic time constant 2 / |ln phi| of the error-norm decay."""
    if not (0.0 < phi_value < 1.0):
        raise ValueError(f"time constant needs a contraction rate in (0, 1), got {phi_value:.6g}")
    return 2.0 / abs(math.log(phi_value))


def convexity_midpoint_check(
    x: WeightMatrix,
    y: WeightMatrix,
    model,
    objective: str = "phi",
    slack: float = 1e-12,
) -> bool:
    """objective((x+y)/2) <= (objective(x) + objective(y)) / 2 + slack."""
    if x.mode != y.mode or x.n != y.n:
        raise ValueError("mismatched weight matrices")
    mid = WeightMatrix(0.5 * (x.w + y.w), x.mode)
    if objective == "phi":
        fx, fy, fm = phi(x, model), phi(y, model), phi(mid, model)
    elif objective == "psi":
        fx, fy, fm = psi_gossip(x, model), psi_gossip(y, model), psi_gossip(mid, model)
    else:
        raise ValueError(f"unknown objective {objective!r}")
    return fm <= 0.5 * (fx + fy) + slack
