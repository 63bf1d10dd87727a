"""Experiment orchestration: design weights, simulate, and compare rules.

This is the programmatic core behind the command-line interface: build the
random-topology instances, produce probability-based weights (PBW) next to
the supergraph-based (SGBW) and Metropolis (MW) baselines, measure analytic
and empirical time constants, and aggregate the gains across instances.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .graphs import Supergraph, complete_graph, generate_geometric
from .linkmodel import (
    LinkModel,
    complete_uniform_model,
    correlation_geometric_decay,
    correlation_uniform_fraction,
    max_feasible_c1,
    max_feasible_c2,
    probabilities_from_distances,
)
from .moments import WeightMatrix, asymmetric_weights
from .objectives import phi, psi_gossip, tau
from .optimizer import (
    OptimizerConfig,
    OptimizationResult,
    metropolis_weights,
    optimal_equal_gossip_weight,
    optimize_phi,
    optimize_psi,
    static_model,
)
from .sampling import fit_clf
from .simulator import (
    draw_broadcasters,
    draw_topology_bits,
    monte_carlo_mse,
)


def derive_seed(*parts: int) -> int:
    """Deterministic child seed from structured parts."""
    return int(np.random.SeedSequence(tuple(int(p) for p in parts)).generate_state(1)[0])


@dataclass
class GraphSpec:
    kind: str = "geometric"  # geometric | complete
    n: int = 100
    degree_fraction: float = 0.15
    seed: int = 0
    instances: int = 1
    p: float = 0.5      # complete-graph link probability
    beta: float = 0.0   # complete-graph link correlation

    def validate(self):
        if self.kind not in ("geometric", "complete"):
            raise ValueError(f"unknown graph kind {self.kind!r}")
        if self.n < 2:
            raise ValueError("need at least two nodes")
        if self.instances < 1:
            raise ValueError("need at least one instance")
        if self.kind == "geometric" and not (0.0 < self.degree_fraction < 1.0):
            raise ValueError("degree_fraction must lie in (0, 1)")


@dataclass
class LinkSpec:
    k_coef: float = 0.7
    correlation: Any = "none"  # "none" | "uniform" | "geometric" | {"kind": ..., ...}
    c1: Any = "auto"
    theta: float = 0.95
    c2: Any = "auto"

    def __post_init__(self):
        # accept the nested form {"kind": "uniform", "c1": 0.5} and flatten it
        if isinstance(self.correlation, dict):
            spec = dict(self.correlation)
            self.correlation = spec.pop("kind", "none")
            self.c1 = spec.pop("c1", self.c1)
            self.theta = spec.pop("theta", self.theta)
            self.c2 = spec.pop("c2", self.c2)
            if spec:
                raise ValueError(f"unknown correlation fields {sorted(spec)}")

    def validate(self):
        if self.correlation not in ("none", "uniform", "geometric"):
            raise ValueError(f"unknown correlation kind {self.correlation!r}")
        if not (0.0 < self.k_coef <= 1.0):
            raise ValueError("k_coef must lie in (0, 1]")
        for name, val in (("c1", self.c1), ("c2", self.c2)):
            if not (val == "auto" or isinstance(val, (int, float))):
                raise ValueError(f"{name} must be a number or 'auto'")


@dataclass
class OptimizerSpec:
    iters: int = 1000
    step_scale: float = 1.0
    step_scales: list | None = None  # ladder tried by the pipeline; None -> default
    constrained: bool = False  # gossip only

    def validate(self):
        if self.iters < 1:
            raise ValueError("iters must be positive")
        if self.step_scale <= 0:
            raise ValueError("step_scale must be positive")
        if self.step_scales is not None and (
            len(self.step_scales) == 0 or any(s <= 0 for s in self.step_scales)
        ):
            raise ValueError("step_scales must be positive and nonempty")

    def ladder(self) -> tuple:
        if self.step_scales is not None:
            return tuple(self.step_scales)
        return DEFAULT_STEP_LADDER


# subgradient steps alpha_k = s / sqrt(k) have no natural scale; the pipeline
# tries a short geometric ladder of s and keeps the best iterate found
DEFAULT_STEP_LADDER = (0.5, 1.5, 4.5)


@dataclass
class SimulationSpec:
    paths: int = 100
    horizon: int = 200
    seed: int = 0
    burn_in: int | None = None

    def validate(self):
        if self.paths < 1 or self.horizon < 0:
            raise ValueError("paths must be >= 1 and horizon >= 0")
        if self.burn_in is not None and not (0 <= self.burn_in <= self.horizon):
            raise ValueError("burn_in must fall inside the horizon")


@dataclass
class ExperimentConfig:
    kind: str = "symmetric"  # symmetric | gossip
    graph: GraphSpec = field(default_factory=GraphSpec)
    links: LinkSpec = field(default_factory=LinkSpec)
    optimizer: OptimizerSpec = field(default_factory=OptimizerSpec)
    simulation: SimulationSpec = field(default_factory=SimulationSpec)
    baselines: list = field(default_factory=lambda: ["sgbw", "mw"])
    fixed_g: float = 0.5  # gossip fixed-weight baseline
    threads: int = 1

    def validate(self):
        if self.kind not in ("symmetric", "gossip"):
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        self.graph.validate()
        self.links.validate()
        self.optimizer.validate()
        self.simulation.validate()
        return self

    def to_dict(self) -> dict:
        # threads is deliberately not echoed: results never depend on it, and
        # artifacts must be byte-identical at any thread count
        return {
            "kind": self.kind,
            "graph": vars(self.graph).copy(),
            "links": vars(self.links).copy(),
            "optimizer": vars(self.optimizer).copy(),
            "simulation": vars(self.simulation).copy(),
            "baselines": list(self.baselines),
            "fixed_g": self.fixed_g,
        }

    @staticmethod
    def from_dict(payload: dict) -> "ExperimentConfig":
        cfg = ExperimentConfig(
            kind=payload.get("kind", "symmetric"),
            graph=GraphSpec(**payload.get("graph", {})),
            links=LinkSpec(**payload.get("links", {})),
            optimizer=OptimizerSpec(**payload.get("optimizer", {})),
            simulation=SimulationSpec(**payload.get("simulation", {})),
            baselines=list(payload.get("baselines", ["sgbw", "mw"])),
            fixed_g=payload.get("fixed_g", 0.5),
            threads=payload.get("threads", 1),
        )
        return cfg.validate()


@dataclass(eq=False)
class DesignedInstance:
    """Weights and analytic rates for one graph instance."""

    instance: int
    graph: Supergraph
    model: LinkModel
    weights: dict  # name -> WeightMatrix
    phis: dict     # name -> float
    correlation_used: dict
    pbw_result: OptimizationResult | None = None

    def taus(self) -> dict:
        return {k: tau(v) if 0 < v < 1 else float("inf") for k, v in self.phis.items()}


def build_instance_graph(cfg: ExperimentConfig, instance: int) -> Supergraph:
    if cfg.graph.kind == "complete":
        return complete_graph(cfg.graph.n)
    seed = derive_seed(cfg.graph.seed, instance, 1)
    return generate_geometric(cfg.graph.n, cfg.graph.degree_fraction, seed)


def build_instance_model(cfg: ExperimentConfig, g: Supergraph) -> tuple[LinkModel, dict]:
    """Link model per the config's correlation structure; returns (model, choices)."""
    if cfg.graph.kind == "complete":
        model = complete_uniform_model(cfg.graph.n, cfg.graph.p, cfg.graph.beta)
        return model, {"kind": "complete", "p": cfg.graph.p, "beta": cfg.graph.beta}
    base = probabilities_from_distances(g, cfg.links.k_coef)
    if cfg.links.correlation == "none":
        return base, {"kind": "none"}
    if cfg.links.correlation == "uniform":
        c1 = max_feasible_c1(base) if cfg.links.c1 == "auto" else float(cfg.links.c1)
        return correlation_uniform_fraction(base, c1), {"kind": "uniform", "c1": c1}
    c2 = (
        max_feasible_c2(base, g, cfg.links.theta)
        if cfg.links.c2 == "auto"
        else float(cfg.links.c2)
    )
    model = correlation_geometric_decay(base, g, c2, cfg.links.theta)
    return model, {"kind": "geometric", "c2": c2, "theta": cfg.links.theta}


def ladder_optimize_phi(
    w0: WeightMatrix, model: LinkModel, spec: OptimizerSpec, iters: int | None = None
) -> OptimizationResult:
    """Run the subgradient method once per ladder scale; keep the best iterate.

    Divergent rungs (step too large for the instance) are skipped; at least
    one rung must survive.
    """
    best: OptimizationResult | None = None
    for scale in spec.ladder():
        try:
            result = optimize_phi(
                w0, model, OptimizerConfig(max_iters=iters or spec.iters, step_scale=scale)
            )
        except RuntimeError:
            continue
        if best is None or result.best_objective < best.best_objective:
            best = result
    if best is None:
        raise RuntimeError("every step scale in the ladder diverged")
    return best


def design_symmetric_instance(cfg: ExperimentConfig, instance: int) -> DesignedInstance:
    """Optimize PBW and evaluate the baselines on one instance.

    PBW is the best iterate over the subgradient runs seeded at the
    Metropolis weights, with the baselines included as candidates, so
    phi(PBW) never exceeds the baselines' rates.
    """
    g = build_instance_graph(cfg, instance)
    model, used = build_instance_model(cfg, g)

    weights = {"mw": metropolis_weights(g)}
    if "sgbw" in cfg.baselines:
        static_iters = min(cfg.optimizer.iters, 400)
        weights["sgbw"] = ladder_optimize_phi(
            weights["mw"], static_model(g), cfg.optimizer, iters=static_iters
        ).best_weights
    result = ladder_optimize_phi(weights["mw"], model, cfg.optimizer)
    phis = {name: phi(wm, model) for name, wm in weights.items()}
    pbw, pbw_phi = result.best_weights, result.best_objective
    for name, value in phis.items():
        if value < pbw_phi:
            pbw, pbw_phi = weights[name].copy(), value
    weights["pbw"] = pbw
    phis["pbw"] = pbw_phi
    return DesignedInstance(
        instance=instance,
        graph=g,
        model=model,
        weights=weights,
        phis=phis,
        correlation_used=used,
        pbw_result=result,
    )


def simulate_symmetric_instance(
    cfg: ExperimentConfig, design: DesignedInstance
) -> tuple[dict, dict]:
    """Shared-topology Monte Carlo comparison; returns (reports, gains)."""
    sim = cfg.simulation
    seed = derive_seed(sim.seed, design.instance, 2)
    coeffs = fit_clf(design.model)
    bits = draw_topology_bits(design.model, sim.paths, sim.horizon, seed, coeffs=coeffs)
    x0 = None  # shared across methods through the common seed
    reports = {}
    for name, wm in design.weights.items():
        reports[name] = monte_carlo_mse(
            wm,
            design.model,
            paths=sim.paths,
            horizon=sim.horizon,
            x0=x0,
            seed=seed,
            burn_in=sim.burn_in,
            rate=design.phis[name],
            topologies=bits,
        )
    gains = instance_gains(reports)
    return reports, gains


def instance_gains(reports: dict) -> dict:
    """Baseline-over-PBW time-constant ratios; undefined ratios are omitted."""
    out = {}
    pbw = reports["pbw"]

    def ratio(numer, denom):
        if np.isfinite(denom) and denom > 0 and np.isfinite(numer):
            return numer / denom
        return None

    if "sgbw" in reports:
        for key, value in (
            ("gamma_s_tau", ratio(reports["sgbw"].tau, pbw.tau)),
            ("gamma_s_eta", ratio(reports["sgbw"].eta, pbw.eta)),
        ):
            if value is not None:
                out[key] = value
    if "mw" in reports:
        value = ratio(reports["mw"].eta, pbw.eta)
        if value is not None:
            out["gamma_m_eta"] = value
    return out


def aggregate(values) -> dict:
    arr = np.asarray(list(values), dtype=float)
    return {"mean": float(arr.mean()), "max": float(arr.max()), "min": float(arr.min())}


@dataclass(eq=False)
class GossipDesign:
    instance: int
    graph: Supergraph
    weights: dict  # name -> WeightMatrix
    psis: dict
    g_star: float
    pbw_result: OptimizationResult | None = None


def design_gossip_instance(cfg: ExperimentConfig, instance: int) -> GossipDesign:
    """Broadcast-gossip design: PBW against the optimal-equal and fixed weights."""
    g = build_instance_graph(cfg, instance)
    g_star, psi_star = optimal_equal_gossip_weight(g)
    weights = {
        "equal_opt": asymmetric_weights(g, g_star),
        "fixed": asymmetric_weights(g, cfg.fixed_g),
    }
    result = None
    for scale in cfg.optimizer.ladder():
        try:
            attempt = optimize_psi(
                weights["equal_opt"],
                g,
                OptimizerConfig(max_iters=cfg.optimizer.iters, step_scale=scale),
                constrained=cfg.optimizer.constrained,
            )
        except RuntimeError:
            continue
        if result is None or attempt.best_objective < result.best_objective:
            result = attempt
    if result is None:
        raise RuntimeError("every step scale in the ladder diverged")
    psis = {
        "equal_opt": psi_star,
        "fixed": psi_gossip(weights["fixed"], g),
        "pbw": result.best_objective,
    }
    weights["pbw"] = result.best_weights
    if psis["equal_opt"] < psis["pbw"] and not cfg.optimizer.constrained:
        # best-iterate guarantee: the starting point is always a candidate
        weights["pbw"] = weights["equal_opt"].copy()
        psis["pbw"] = psis["equal_opt"]
    return GossipDesign(
        instance=instance,
        graph=g,
        weights=weights,
        psis=psis,
        g_star=g_star,
        pbw_result=result,
    )


def simulate_gossip_instance(cfg: ExperimentConfig, design: GossipDesign) -> tuple[dict, dict]:
    sim = cfg.simulation
    seed = derive_seed(sim.seed, design.instance, 3)
    bcast = draw_broadcasters(design.graph, sim.paths, sim.horizon, seed)
    reports = {}
    for name, wm in design.weights.items():
        reports[name] = monte_carlo_mse(
            wm,
            design.graph,
            paths=sim.paths,
            horizon=sim.horizon,
            seed=seed,
            burn_in=sim.burn_in,
            rate=design.psis[name],
            topologies=bcast,
        )
    gains = {}
    pbw = reports["pbw"]
    for name in ("equal_opt", "fixed"):
        if name in reports and np.isfinite(pbw.eta) and pbw.eta > 0:
            gains[f"gamma_{name}_eta"] = reports[name].eta / pbw.eta
    return reports, gains
