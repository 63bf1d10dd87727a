import numpy as np
import pytest

from consmix.graphs import Supergraph, complete_graph, generate_geometric, link_index, path_graph
from consmix.linkmodel import correlation_uniform_fraction, make_link_model
from consmix.moments import (
    LinkCovarianceOperator,
    WeightMatrix,
    asymmetric_weights,
    compare_gossip_moments,
    covariance_uncorrelated,
    enumerate_second_moment,
    enumerate_second_moment_joint,
    gossip_moments,
    gossip_moments_literal,
    gossip_realizations,
    joint_law_moments,
    mean_weight_matrix,
    monte_carlo_second_moment,
    projector_ones,
    realized_weight_matrix,
    second_moment_correlated,
    symmetric_weights,
)
from consmix.sampling import fit_clf, sample_gossip, sample_topologies

from conftest import independent_model, random_joint_law, random_symmetric_weights


def single_link_model(p=0.5):
    g = Supergraph(n=2, edges=((0, 1),))
    return g, make_link_model(g, np.array([p]))


def test_realized_weight_matrix_examples():
    g, model = single_link_model()
    w = symmetric_weights(g, 0.5)
    samples = sample_topologies(model, fit_clf(model), 4, seed=0)
    samples.bits_matrix[:] = 0
    assert np.allclose(realized_weight_matrix(w, samples[0]), np.eye(2))
    samples.bits_matrix[:] = 1
    assert np.allclose(realized_weight_matrix(w, samples[1]), [[0.5, 0.5], [0.5, 0.5]])

    g3 = path_graph(3)
    w3 = WeightMatrix(np.array([[0, 0.2, 0], [0.2, 0, 0.4], [0, 0.4, 0]]), "symmetric")
    model3 = make_link_model(g3, np.array([1.0, 1.0]))
    s3 = sample_topologies(model3, fit_clf(model3), 1, seed=0)
    mat = realized_weight_matrix(w3, s3[0])
    assert np.allclose(mat.sum(axis=1), 1.0)
    assert mat[1, 1] == pytest.approx(0.4)


def test_realized_rows_sum_to_one(rng):
    g = generate_geometric(10, 0.35, seed=31)
    model = independent_model(g, rng)
    w = random_symmetric_weights(g, rng)
    samples = sample_topologies(model, fit_clf(model), 50, seed=1)
    for s in samples:
        assert np.abs(realized_weight_matrix(w, s).sum(axis=1) - 1.0).max() < 1e-14
    gsamp = sample_gossip(g, 50, seed=2)
    wg = asymmetric_weights(g, 0.6)
    for s in gsamp:
        assert np.abs(realized_weight_matrix(wg, s).sum(axis=1) - 1.0).max() < 1e-14


def test_mean_weight_matrix_examples():
    g, model = single_link_model(0.5)
    w = symmetric_weights(g, 0.5)
    assert np.allclose(mean_weight_matrix(w, model), [[0.75, 0.25], [0.25, 0.75]])

    zero_p = make_link_model(g, np.array([0.0]))
    assert np.allclose(mean_weight_matrix(w, zero_p), np.eye(2))

    certain = make_link_model(g, np.array([1.0]))
    samples = sample_topologies(certain, fit_clf(certain), 1, seed=0)
    assert np.allclose(
        mean_weight_matrix(w, certain), realized_weight_matrix(w, samples[0])
    )


def test_mean_row_sums_are_one(rng):
    g = generate_geometric(12, 0.3, seed=5)
    model = independent_model(g, rng)
    w = random_symmetric_weights(g, rng)
    assert np.abs(mean_weight_matrix(w, model).sum(axis=1) - 1.0).max() < 1e-12


def test_single_link_covariance_closed_form():
    g, model = single_link_model(0.5)
    w = symmetric_weights(g, 1.0)
    mset = second_moment_correlated(w, model)
    assert np.allclose(mset.covariance, [[0.5, -0.5], [-0.5, 0.5]])
    assert np.allclose(
        mset.second_moment, mset.mean @ mset.mean + mset.covariance, atol=1e-12
    )


def test_zero_covariance_for_deterministic_links(rng):
    g = generate_geometric(8, 0.4, seed=6)
    idx = link_index(g)
    model = make_link_model(g, np.ones(idx.m))
    w = random_symmetric_weights(g, rng)
    mset = second_moment_correlated(w, model)
    assert np.abs(mset.covariance).max() < 1e-14
    assert np.allclose(mset.second_moment, mset.mean @ mset.mean)


def test_closed_form_matches_independent_enumeration(rng):
    for seed in range(6):
        g = generate_geometric(6, 0.5, seed=40 + seed)
        model = independent_model(g, rng)
        w = random_symmetric_weights(g, rng)
        closed = second_moment_correlated(w, model)
        brute = enumerate_second_moment(w, model)
        assert np.abs(closed.second_moment - brute.second_moment).max() < 1e-12
        assert np.abs(closed.mean - brute.mean).max() < 1e-12


def test_closed_form_matches_explicit_joint_law(rng):
    for _ in range(6):
        g = path_graph(4)
        idx = link_index(g)
        patterns, probs = random_joint_law(idx.m, rng)
        pi, r_q = joint_law_moments(patterns, probs)
        model = make_link_model(g, pi, r_q)
        w = random_symmetric_weights(g, rng)
        closed = second_moment_correlated(w, model)
        brute = enumerate_second_moment_joint(w, idx, patterns, probs)
        assert np.abs(closed.second_moment - brute.second_moment).max() < 1e-12


def test_moment_set_invariants(rng):
    g = generate_geometric(9, 0.4, seed=77)
    idx = link_index(g)
    model = correlation_uniform_fraction(independent_model(g, rng), 0.5)
    w = random_symmetric_weights(g, rng)
    mset = second_moment_correlated(w, model)
    assert np.abs(mset.second_moment - mset.second_moment.T).max() < 1e-12
    assert np.linalg.eigvalsh(mset.covariance).min() > -1e-10
    assert np.abs(mset.mean.sum(axis=1) - 1.0).max() < 1e-12


def test_covariance_uncorrelated_examples(rng):
    g, model = single_link_model(0.5)
    w = symmetric_weights(g, 1.0)
    assert np.allclose(covariance_uncorrelated(w, model), [[0.5, -0.5], [-0.5, 0.5]])

    certain = make_link_model(g, np.array([1.0]))
    assert np.all(covariance_uncorrelated(w, certain) == 0.0)
    assert np.all(covariance_uncorrelated(symmetric_weights(g, 0.0), model) == 0.0)

    for seed in range(5):
        gg = generate_geometric(7, 0.5, seed=50 + seed)
        mm = independent_model(gg, rng)
        ww = random_symmetric_weights(gg, rng)
        gap = np.abs(
            covariance_uncorrelated(ww, mm) - second_moment_correlated(ww, mm).covariance
        ).max()
        assert gap < 1e-12

    g3 = path_graph(3)
    corr3 = correlation_uniform_fraction(make_link_model(g3, np.array([0.5, 0.5])), 0.5)
    with pytest.raises(ValueError):
        covariance_uncorrelated(symmetric_weights(g3, 0.2), corr3)


def test_operator_kernel_matches_dense_mask(rng):
    g = path_graph(4)
    idx = link_index(g)
    patterns, probs = random_joint_law(idx.m, rng)
    pi, r_q = joint_law_moments(patterns, probs)
    model = make_link_model(g, pi, r_q)
    from consmix.linkmodel import block_mask_matrix, lifted_link_covariance

    n = g.n
    r_a = lifted_link_covariance(model, n).toarray()
    eye_kron = np.kron(np.eye(n), np.ones((n, n)))
    kron_eye = np.kron(np.ones((n, n)), np.eye(n))
    mask = eye_kron + kron_eye - block_mask_matrix(n).toarray()
    dense = r_a * mask
    kernel = LinkCovarianceOperator(model).kernel.toarray()
    assert np.abs(kernel - dense).max() < 1e-14


def test_gossip_moments_two_node_examples():
    g = complete_graph(2)
    w = asymmetric_weights(g, 0.5)
    e_tt, e_tjt = gossip_moments(w, g)
    assert np.allclose(e_tt, [[0.75, 0.25], [0.25, 0.75]])
    assert np.allclose(e_tjt, [[0.625, 0.375], [0.375, 0.625]])

    w0 = asymmetric_weights(g, 0.0)
    e_tt, e_tjt = gossip_moments(w0, g)
    assert np.allclose(e_tt, np.eye(2))
    assert np.allclose(e_tjt, projector_ones(2))


def test_gossip_moments_match_brute_realizations(rng):
    for seed in range(4):
        g = generate_geometric(7, 0.45, seed=60 + seed)
        warr = rng.uniform(0.0, 1.0, (7, 7)) * g.adjacency()
        w = WeightMatrix(warr, "asymmetric")
        mats = gossip_realizations(w, g)
        assert all(np.abs(m.sum(axis=1) - 1.0).max() < 1e-14 for m in mats)
        tt = sum(m.T @ m for m in mats) / g.n
        j = projector_ones(g.n)
        tjt = sum(m.T @ j @ m for m in mats) / g.n
        tt_fast, tjt_fast = gossip_moments(w, g)
        assert np.abs(tt - tt_fast).max() < 1e-13
        assert np.abs(tjt - tjt_fast).max() < 1e-13
        dev = tt_fast - tjt_fast
        assert np.linalg.eigvalsh(dev).min() > -1e-12


def test_gossip_literal_formula_known_discrepancy():
    g = complete_graph(2)
    w = asymmetric_weights(g, 0.5)
    tt_lit, tjt_lit = gossip_moments_literal(w, g)
    assert tt_lit[0, 0] == pytest.approx(0.25)  # enumeration gives 0.75
    assert tt_lit[0, 1] == pytest.approx(0.25)
    assert tjt_lit[0, 0] == pytest.approx(0.625)

    cmp = compare_gossip_moments(w, g)
    assert cmp.max_diff_tt_diag == pytest.approx(0.5)
    assert cmp.max_diff_tt_offdiag < 1e-12
    assert cmp.max_diff_tjt < 1e-12


def test_monte_carlo_second_moment(rng):
    g = generate_geometric(5, 0.6, seed=70)
    model = independent_model(g, rng)
    w = random_symmetric_weights(g, rng, lo=0.05, hi=0.4)
    one = sample_topologies(model, fit_clf(model), 1, seed=3)
    m0 = realized_weight_matrix(w, one[0])
    assert np.allclose(monte_carlo_second_moment(w, one), m0.T @ m0)

    many = sample_topologies(model, fit_clf(model), 30_000, seed=4)
    approx = monte_carlo_second_moment(w, many)
    exact = second_moment_correlated(w, model).second_moment
    assert np.abs(approx - exact).max() < 0.02

    gsamp = sample_gossip(g, 30_000, seed=5)
    wg = asymmetric_weights(g, 0.5)
    tt, tjt = gossip_moments(wg, g)
    approx_dev = monte_carlo_second_moment(wg, gsamp, project_deviation=True)
    assert np.abs(approx_dev - (tt - tjt)).max() < 0.02

    with pytest.raises(ValueError):
        monte_carlo_second_moment(w, sample_topologies(model, fit_clf(model), 0, seed=6))


def test_weight_matrix_validation():
    with pytest.raises(ValueError):
        WeightMatrix(np.array([[1.0, 0.0], [0.0, 0.0]]), "symmetric")
    with pytest.raises(ValueError):
        WeightMatrix(np.array([[0.0, 0.5], [0.2, 0.0]]), "symmetric")
    WeightMatrix(np.array([[0.0, 0.5], [0.2, 0.0]]), "asymmetric")
