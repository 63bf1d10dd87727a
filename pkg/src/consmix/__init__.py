"""Mixing-weight design for average consensus on random network topologies.

Builds deterministic supergraphs with probabilistic link models (correlated
Bernoulli link failures or randomized broadcast protocols), optimizes the
consensus mixing weights against spectral convergence-rate objectives by a
subgradient method, and verifies the designs with exact enumeration oracles
and Monte Carlo simulation against standard baseline weight rules.
"""

from .graphs import (
    LinkIndex,
    Supergraph,
    complete_graph,
    generate_geometric,
    is_connected,
    link_distance,
    link_distance_matrix,
    link_index,
    path_graph,
    star_graph,
)
from .linkmodel import (
    LinkModel,
    MomentScaffold,
    build_scaffold,
    complete_uniform_model,
    correlation_geometric_decay,
    correlation_uniform_fraction,
    make_link_model,
    max_feasible_c1,
    max_feasible_c2,
    probabilities_from_distances,
    validate_moments,
)
from .moments import (
    MomentSet,
    WeightMatrix,
    asymmetric_weights,
    covariance_uncorrelated,
    enumerate_second_moment,
    enumerate_second_moment_joint,
    gossip_moments,
    gossip_moments_literal,
    mean_weight_matrix,
    monte_carlo_second_moment,
    realized_weight_matrix,
    second_moment_correlated,
    symmetric_weights,
)
from .objectives import (
    Eigenpair,
    complete_graph_optimum,
    convexity_midpoint_check,
    max_eigenpair,
    phi,
    psi,
    psi_gossip,
    tau,
)
from .optimizer import (
    OptimizationResult,
    OptimizerConfig,
    SubgradientMatrix,
    metropolis_weights,
    optimal_equal_gossip_weight,
    optimize_phi,
    optimize_psi,
    subgradient_phi_correlated,
    subgradient_phi_uncorrelated,
    subgradient_psi_gossip,
    supergraph_weights,
)
from .sampling import (
    ClfCoefficients,
    ClfInfeasibleError,
    TopologySample,
    TopologySamples,
    clf_feasible,
    empirical_moments,
    fit_clf,
    sample_gossip,
    sample_topologies,
)
from .simulator import (
    SimulationReport,
    Trajectory,
    covariance_recursion_check,
    empirical_gamma_eta,
    gains,
    monte_carlo_mse,
    run_consensus,
)

__version__ = "0.1.0"
