"""Monte Carlo consensus simulation and empirical rate measurement.

Runs x(k+1) = script-W(k) x(k) over sampled topology sequences, averages the
squared consensus error ||x(k) - avg 1||^2 and squared deviation
||(I - J) x(k)||^2 across paths, and extracts the empirical decay factor and
time constants that the design gains are measured in.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np

from .graphs import Supergraph
from .linkmodel import LinkModel
from .moments import WeightMatrix, realized_weight_matrix
from .objectives import tau as analytic_tau
from .sampling import ClfCoefficients, fit_clf, master_rng


@dataclass(frozen=True, eq=False)
class Trajectory:
    """One consensus run: states plus error and deviation vectors per step."""

    x0: np.ndarray
    states: np.ndarray      # (horizon + 1, n)
    errors: np.ndarray      # x(k) - x_avg 1
    deviations: np.ndarray  # (I - J) x(k)


@dataclass(eq=False)
class SimulationReport:
    """Path-averaged error trajectories and the rates inferred from them."""

    mse: np.ndarray
    msdev: np.ndarray
    stderr_mse: np.ndarray
    stderr_msdev: np.ndarray
    paths: int
    seed: int
    burn_in: int
    gamma_hat: float
    eta: float
    tau: float

    @property
    def horizon(self) -> int:
        return len(self.mse) - 1


@dataclass(frozen=True)
class CovarianceCheckResult:
    """Outcome of checking the closed-form error-covariance trace recursion."""

    max_relative_deviation: float
    max_deviation_stderrs: float
    contraction_ok: bool
    worst_contraction_margin: float


def run_consensus(w: WeightMatrix, samples, x0: np.ndarray) -> Trajectory:
    """Exact consensus recursion along one sampled topology sequence."""
    x = np.asarray(x0, dtype=float)
    states = [x]
    for sample in samples:
        x = realized_weight_matrix(w, sample) @ x
        states.append(x)
    states = np.asarray(states)
    avg = float(np.mean(np.asarray(x0, dtype=float)))
    errors = states - avg
    deviations = states - states.mean(axis=1, keepdims=True)
    return Trajectory(x0=np.asarray(x0, float), states=states, errors=errors, deviations=deviations)


def draw_topology_bits(
    model: LinkModel,
    paths: int,
    horizon: int,
    seed: int,
    coeffs: ClfCoefficients | None = None,
) -> np.ndarray:
    """(horizon, paths, m) correlated link bits, step-major stream order."""
    if coeffs is None:
        coeffs = fit_clf(model)
    rng = master_rng((seed, 0))
    out = np.empty((horizon, paths, model.m), dtype=np.uint8)
    for k in range(horizon):
        out[k] = coeffs.draw(rng, paths)
    return out


def draw_broadcasters(g: Supergraph, paths: int, horizon: int, seed: int) -> np.ndarray:
    """(horizon, paths) uniformly selected broadcasting nodes."""
    rng = master_rng((seed, 0))
    return rng.integers(0, g.n, size=(horizon, paths), dtype=np.int64)


def default_initial_state(n: int, seed: int) -> np.ndarray:
    """Standard normal initial data, drawn from its own seed substream."""
    return master_rng((seed, 1)).standard_normal(n)


def _squared_norms(x: np.ndarray) -> np.ndarray:
    return (x**2).sum(axis=0)


def monte_carlo_mse(
    w: WeightMatrix,
    model_or_graph,
    paths: int,
    horizon: int,
    x0: np.ndarray | None = None,
    seed: int = 0,
    burn_in: int | None = None,
    rate: float | None = None,
    topologies: np.ndarray | None = None,
) -> SimulationReport:
    """Average ||e(k)||^2 and ||zeta(k)||^2 over independent seeded paths.

    A LinkModel runs the symmetric-link dynamics; a Supergraph runs broadcast
    gossip.  ``topologies`` can inject pregenerated draws (from
    draw_topology_bits / draw_broadcasters) so several weight rules see the
    identical topology sequence; otherwise they are drawn from ``seed``.
    ``rate`` is the analytic contraction factor used for the tau field.
    """
    if paths < 1:
        raise ValueError("need at least one path")
    symmetric = isinstance(model_or_graph, LinkModel)
    n = w.n
    if x0 is None:
        x0 = default_initial_state(n, seed)
    x0 = np.asarray(x0, dtype=float)

    if topologies is None:
        if symmetric:
            topologies = draw_topology_bits(model_or_graph, paths, horizon, seed)
        else:
            topologies = draw_broadcasters(model_or_graph, paths, horizon, seed)

    x = np.repeat(x0[:, None], paths, axis=1)
    avg = x0.mean()
    sq_err = np.empty((horizon + 1, paths))
    sq_dev = np.empty((horizon + 1, paths))
    sq_err[0] = _squared_norms(x - avg)
    sq_dev[0] = _squared_norms(x - x.mean(axis=0, keepdims=True))

    if symmetric:
        ei, ej = model_or_graph.idx.endpoint_arrays()
        wvals = w.w[ei, ej][:, None]
        for k in range(horizon):
            bq = topologies[k].T  # (m, paths)
            contrib = wvals * bq * (x[ej] - x[ei])
            delta = np.zeros_like(x)
            np.add.at(delta, ei, contrib)
            np.add.at(delta, ej, -contrib)
            x = x + delta
            sq_err[k + 1] = _squared_norms(x - avg)
            sq_dev[k + 1] = _squared_norms(x - x.mean(axis=0, keepdims=True))
    else:
        neighbors = model_or_graph.neighbors()
        recv = [np.asarray(nb, dtype=int) for nb in neighbors]
        wcol = [w.w[recv[b], b] for b in range(n)]
        for k in range(horizon):
            bcast = topologies[k]
            for b in range(n):
                cols = np.flatnonzero(bcast == b)
                if cols.size == 0 or recv[b].size == 0:
                    continue
                block = x[np.ix_(recv[b], cols)]
                x[np.ix_(recv[b], cols)] = block + wcol[b][:, None] * (x[b, cols][None, :] - block)
            sq_err[k + 1] = _squared_norms(x - avg)
            sq_dev[k + 1] = _squared_norms(x - x.mean(axis=0, keepdims=True))

    mse = sq_err.mean(axis=1)
    msdev = sq_dev.mean(axis=1)
    if paths > 1:
        stderr_mse = sq_err.std(axis=1, ddof=1) / math.sqrt(paths)
        stderr_msdev = sq_dev.std(axis=1, ddof=1) / math.sqrt(paths)
    else:
        stderr_mse = np.zeros(horizon + 1)
        stderr_msdev = np.zeros(horizon + 1)

    if burn_in is None:
        burn_in = horizon // 2
    curve = mse if symmetric else msdev
    gamma_hat, eta = empirical_gamma_eta(curve, burn_in)
    tau_val = math.inf
    if rate is not None and 0.0 < rate < 1.0:
        tau_val = analytic_tau(rate)
    return SimulationReport(
        mse=mse,
        msdev=msdev,
        stderr_mse=stderr_mse,
        stderr_msdev=stderr_msdev,
        paths=paths,
        seed=int(seed),
        burn_in=int(burn_in),
        gamma_hat=gamma_hat,
        eta=eta,
        tau=tau_val,
    )


def empirical_gamma_eta(curve, burn_in: int, literal_eta: bool = False) -> tuple[float, float]:
    """Empirical decay factor and time constant from a squared-error curve.

    gamma_hat is the geometric mean of the per-step root-mean-square ratios
    over [burn_in, horizon]; the window is truncated at the last nonzero
    value.  eta = 1 / |ln gamma_hat| unless the literal 1 / |gamma_hat|
    definition is requested.
    """
    if isinstance(curve, SimulationReport):
        curve = curve.mse
    curve = np.asarray(curve, dtype=float)
    horizon = len(curve) - 1
    if burn_in < 0 or burn_in >= len(curve):
        raise ValueError("burn_in must fall inside the trajectory")
    positive = np.flatnonzero(curve > 0.0)
    end = int(positive[-1]) if positive.size else 0
    end = min(end, horizon)
    if end < horizon:
        warnings.warn(
            f"error curve hit zero at step {end + 1}; window truncated",
            RuntimeWarning,
        )
    if end <= burn_in or curve[burn_in] <= 0.0:
        warnings.warn(
            "error curve hit zero before the measurement window; "
            "returning zero time constant",
            RuntimeWarning,
        )
        return 0.0, 0.0
    gamma = float((math.sqrt(curve[end] / curve[burn_in])) ** (1.0 / (end - burn_in)))
    if literal_eta:
        return gamma, 1.0 / abs(gamma)
    if gamma >= 1.0:
        return gamma, math.inf
    return gamma, 1.0 / abs(math.log(gamma))


def covariance_recursion_check(
    w: WeightMatrix,
    model: LinkModel,
    sigma0: np.ndarray,
    horizon: int,
    paths: int = 100_000,
    seed: int = 0,
) -> CovarianceCheckResult:
    """Monte Carlo check of tr Sigma(k+1) = tr((E[script-W^2] - J) Sigma(k)).

    The initial error is Gaussian with covariance sigma0 projected onto the
    zero-sum subspace.  Also verifies the contraction
    tr Sigma(k+1) <= phi tr Sigma(k) up to three standard errors.
    """
    from .moments import projector_ones, second_moment_correlated
    from .objectives import max_eigenpair

    if w.mode != "symmetric":
        raise ValueError("the trace recursion holds for symmetric realizations")
    n = w.n
    proj = np.eye(n) - projector_ones(n)
    sigma = proj @ (0.5 * (sigma0 + sigma0.T)) @ proj
    vals, vecs = np.linalg.eigh(sigma)
    keep = vals > 1e-14 * max(1.0, float(vals.max(initial=0.0)))
    factor = vecs[:, keep] * np.sqrt(vals[keep])
    if factor.shape[1] == 0:
        return CovarianceCheckResult(0.0, 0.0, True, math.inf)

    moments = second_moment_correlated(w, model)
    rate_mat = moments.second_moment - projector_ones(n)
    phi_val = max_eigenpair(rate_mat).value

    rng = master_rng((seed, 2))
    e = factor @ rng.standard_normal((factor.shape[1], paths))
    bits = draw_topology_bits(model, paths, horizon, seed)
    ei, ej = model.idx.endpoint_arrays()
    wvals = w.w[ei, ej][:, None]

    max_rel = 0.0
    max_z = 0.0
    worst_margin = math.inf
    contraction_ok = True
    for k in range(horizon):
        # tr(rate_mat Sigma_hat) as the per-path quadratic form e^T rate_mat e
        quad = (e * (rate_mat @ e)).sum(axis=0)
        tr_now = float(_squared_norms(e).mean())

        bq = bits[k].T
        contrib = wvals * bq * (e[ej] - e[ei])
        delta = np.zeros_like(e)
        np.add.at(delta, ei, contrib)
        np.add.at(delta, ej, -contrib)
        e = e + delta

        sq = _squared_norms(e)
        diff = sq - quad  # zero mean under the trace recursion, path by path
        tr_next = float(sq.mean())
        pred_next = float(quad.mean())
        stderr_diff = float(diff.std(ddof=1)) / math.sqrt(paths)
        stderr_next = float(sq.std(ddof=1)) / math.sqrt(paths)
        max_rel = max(max_rel, abs(tr_next - pred_next) / max(abs(pred_next), 1e-300))
        if stderr_diff > 0:
            max_z = max(max_z, abs(float(diff.mean())) / stderr_diff)
        margin = phi_val * tr_now + 3.0 * stderr_next - tr_next
        worst_margin = min(worst_margin, margin)
        if margin < 0:
            contraction_ok = False
    return CovarianceCheckResult(
        max_relative_deviation=max_rel,
        max_deviation_stderrs=max_z,
        contraction_ok=contraction_ok,
        worst_contraction_margin=worst_margin,
    )


def gains(report_a: SimulationReport, report_b: SimulationReport) -> tuple[float, float]:
    """(tau_a / tau_b, eta_a / eta_b): baseline report over candidate report."""
    if not (math.isfinite(report_b.tau) and report_b.tau > 0):
        raise ValueError("candidate tau is zero or undefined")
    if not (math.isfinite(report_b.eta) and report_b.eta > 0):
        raise ValueError("candidate eta is zero or undefined")
    return report_a.tau / report_b.tau, report_a.eta / report_b.eta
