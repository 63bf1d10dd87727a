import math
import warnings

import numpy as np
import pytest

from consmix.graphs import Supergraph, complete_graph, generate_geometric, link_index, path_graph
from consmix.linkmodel import make_link_model
from consmix.moments import (
    asymmetric_weights,
    mean_weight_matrix,
    projector_ones,
    second_moment_correlated,
    symmetric_weights,
)
from consmix.objectives import max_eigenpair, phi
from consmix.sampling import fit_clf, sample_gossip, sample_topologies
from consmix.simulator import (
    SimulationReport,
    covariance_recursion_check,
    empirical_gamma_eta,
    gains,
    monte_carlo_mse,
    run_consensus,
)

from conftest import independent_model, random_symmetric_weights


def two_node():
    g = Supergraph(n=2, edges=((0, 1),))
    return g, make_link_model(g, np.array([0.5]))


def test_run_consensus_deterministic_average():
    g, _ = two_node()
    certain = make_link_model(g, np.array([1.0]))
    samples = sample_topologies(certain, fit_clf(certain), 1, seed=0)
    traj = run_consensus(symmetric_weights(g, 0.5), samples, np.array([3.0, 1.0]))
    assert np.allclose(traj.states[1], [2.0, 2.0])
    assert np.allclose(traj.errors[1], 0.0)


def test_run_consensus_all_links_down():
    g, model = two_node()
    samples = sample_topologies(model, fit_clf(model), 5, seed=0)
    samples.bits_matrix[:] = 0
    x0 = np.array([1.0, -2.0])
    traj = run_consensus(symmetric_weights(g, 0.5), samples, x0)
    assert np.allclose(traj.states, x0)


def test_run_consensus_gossip_full_copy():
    g = complete_graph(2)
    samples = sample_gossip(g, 1, seed=3)
    b = int(samples.broadcasters[0])
    traj = run_consensus(asymmetric_weights(g, 1.0), samples, np.array([5.0, -1.0]))
    assert traj.states[1][0] == traj.states[1][1] == traj.states[0][b]


def test_sum_preservation_on_symmetric_paths(rng):
    g = generate_geometric(9, 0.4, seed=301)
    model = independent_model(g, rng)
    w = random_symmetric_weights(g, rng, lo=0.05, hi=0.45)
    samples = sample_topologies(model, fit_clf(model), 40, seed=5)
    x0 = rng.normal(size=g.n)
    traj = run_consensus(w, samples, x0)
    sums = traj.states.sum(axis=1)
    assert np.abs(sums - sums[0]).max() < 1e-10 * max(1.0, abs(sums[0]))
    assert np.abs(traj.errors.sum(axis=1)).max() < 1e-10


def test_monte_carlo_mse_two_node_analytic():
    g, model = two_node()
    w = symmetric_weights(g, 0.5)
    x0 = np.array([1.0, -1.0])
    rep = monte_carlo_mse(w, model, paths=20000, horizon=10, x0=x0, seed=5)
    analytic = 2.0 * 0.5 ** np.arange(11)
    assert rep.mse[0] == pytest.approx(2.0)
    z = np.abs(rep.mse[1:] - analytic[1:]) / rep.stderr_mse[1:]
    assert z.max() < 3.5


def test_monte_carlo_mse_static_is_deterministic(rng):
    g = path_graph(4)
    idx = link_index(g)
    model = make_link_model(g, np.ones(idx.m))
    w = random_symmetric_weights(g, rng, lo=0.1, hi=0.4)
    x0 = rng.normal(size=4)
    rep = monte_carlo_mse(w, model, paths=8, horizon=6, x0=x0, seed=6)
    assert np.all(rep.stderr_mse == 0.0)
    mean = mean_weight_matrix(w, model)
    e = x0 - x0.mean()
    expected = []
    for k in range(7):
        expected.append(float(e @ e))
        e = (mean - projector_ones(4)) @ e
    assert np.allclose(rep.mse, expected, rtol=1e-12)


def test_monte_carlo_mse_zero_horizon():
    g, model = two_node()
    rep = monte_carlo_mse(symmetric_weights(g, 0.5), model, paths=3, horizon=0, seed=1)
    assert len(rep.mse) == 1
    assert rep.gamma_hat == 0.0 and rep.eta == 0.0  # degenerate window


def test_monte_carlo_reports_are_reproducible():
    g, model = two_node()
    w = symmetric_weights(g, 0.5)
    a = monte_carlo_mse(w, model, paths=50, horizon=20, seed=9)
    b = monte_carlo_mse(w, model, paths=50, horizon=20, seed=9)
    assert np.array_equal(a.mse, b.mse)
    assert np.array_equal(a.msdev, b.msdev)
    c = monte_carlo_mse(w, model, paths=50, horizon=20, seed=10)
    assert not np.array_equal(a.mse, c.mse)


def test_mse_ratio_never_beats_contraction_rate(rng):
    for seed in range(3):
        g = generate_geometric(5, 0.6, seed=310 + seed)
        model = independent_model(g, rng, lo=0.3, hi=0.9)
        w = random_symmetric_weights(g, rng, lo=0.1, hi=0.4)
        rate = phi(w, model)
        rep = monte_carlo_mse(w, model, paths=20000, horizon=10, seed=seed, rate=rate)
        for k in range(10):
            ratio = rep.mse[k + 1] / rep.mse[k]
            slack = 3.0 * rep.stderr_mse[k + 1] / rep.mse[k]
            assert ratio <= rate + slack


def test_covariance_recursion_check_two_node():
    g, model = two_node()
    w = symmetric_weights(g, 0.5)
    sigma0 = np.eye(2) - projector_ones(2)
    res = covariance_recursion_check(w, model, sigma0, horizon=8, paths=20000, seed=2)
    assert res.max_deviation_stderrs < 3.5
    assert res.contraction_ok

    zero = covariance_recursion_check(w, model, np.zeros((2, 2)), horizon=4, paths=10, seed=2)
    assert zero.max_relative_deviation == 0.0


def test_empirical_gamma_eta_static_decay():
    g, _ = two_node()
    certain = make_link_model(g, np.array([1.0]))
    w = symmetric_weights(g, 0.1)  # static contraction factor 0.8 on the error mode
    x0 = np.array([1.0, -1.0]) / math.sqrt(2.0)
    rep = monte_carlo_mse(w, certain, paths=1, horizon=40, x0=x0, seed=3)
    gamma, eta = empirical_gamma_eta(rep.mse, burn_in=20)
    assert gamma == pytest.approx(0.8, abs=1e-3)
    assert eta == pytest.approx(1.0 / abs(math.log(0.8)), abs=1e-2)
    gamma_lit, eta_lit = empirical_gamma_eta(rep.mse, burn_in=20, literal_eta=True)
    assert eta_lit == pytest.approx(1.0 / 0.8, abs=1e-3)
    # a report can stand in for the raw curve
    gamma_rep, eta_rep = empirical_gamma_eta(rep, burn_in=20)
    assert (gamma_rep, eta_rep) == (gamma, eta)


def test_empirical_gamma_eta_zero_window_warns():
    g, _ = two_node()
    certain = make_link_model(g, np.array([1.0]))
    w = symmetric_weights(g, 0.5)  # exact consensus after one step
    rep = monte_carlo_mse(w, certain, paths=1, horizon=10, x0=np.array([1.0, -1.0]), seed=4)
    with warnings.catch_warnings(record=True) as caught:
        warnings.simplefilter("always")
        gamma, eta = empirical_gamma_eta(rep.mse, burn_in=5)
    assert gamma == 0.0 and eta == 0.0
    assert any("zero" in str(w_.message) for w_ in caught)


def make_report(tau_val, eta_val):
    z = np.zeros(3)
    return SimulationReport(
        mse=z, msdev=z, stderr_mse=z, stderr_msdev=z, paths=1, seed=0,
        burn_in=1, gamma_hat=0.9, eta=eta_val, tau=tau_val,
    )


def test_gains_examples():
    same = make_report(10.0, 12.0)
    assert gains(same, same) == (1.0, 1.0)
    a = make_report(22.7, 29.0)
    b = make_report(15.4, 13.0)
    tau_ratio, eta_ratio = gains(a, b)
    assert tau_ratio == pytest.approx(22.7 / 15.4)
    assert eta_ratio == pytest.approx(29.0 / 13.0)
    with pytest.raises(ValueError):
        gains(a, make_report(math.inf, 13.0))
    with pytest.raises(ValueError):
        gains(a, make_report(15.4, 0.0))


def test_msdev_contraction_for_gossip(rng):
    g = generate_geometric(8, 0.45, seed=320)
    w = asymmetric_weights(g, 0.5)
    from consmix.moments import gossip_moments

    tt, tjt = gossip_moments(w, g)
    rate = max_eigenpair(tt - tjt).value
    rep = monte_carlo_mse(w, g, paths=20000, horizon=8, seed=7, rate=rate)
    for k in range(8):
        ratio = rep.msdev[k + 1] / rep.msdev[k]
        slack = 3.0 * rep.stderr_msdev[k + 1] / rep.msdev[k]
        assert ratio <= rate + slack
