"""Command-line interface: config-driven design, simulation, and validation.

Subcommands
-----------
design    build graphs/models and write PBW plus baseline weights
simulate  Monte Carlo comparison of the designed weights (CSV + JSON)
gossip    broadcast-gossip design and simulation in one pass
validate  run the built-in oracle cross-checks and report pass/fail

All randomness is seeded from the config, outputs are written atomically,
and reruns with identical configs are byte-identical.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

import numpy as np

from .experiments import (
    ExperimentConfig,
    aggregate,
    derive_seed,
    design_gossip_instance,
    design_symmetric_instance,
    instance_gains,
    simulate_gossip_instance,
)
from .linkmodel import model_from_json, model_to_json
from .moments import WeightMatrix
from .sampling import fit_clf
from .simulator import SimulationReport, draw_topology_bits, monte_carlo_mse


def write_text_atomic(path: Path, text: str) -> None:
    path.parent.mkdir(parents=True, exist_ok=True)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def _jsonable(value):
    if isinstance(value, dict):
        return {k: _jsonable(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonable(v) for v in value]
    if isinstance(value, np.generic):
        value = value.item()
    if isinstance(value, float) and not np.isfinite(value):
        return None  # strict JSON has no Infinity/NaN
    return value


def dump_json(payload) -> str:
    return json.dumps(_jsonable(payload), sort_keys=True, indent=2) + "\n"


def weights_to_json(w: WeightMatrix) -> str:
    return dump_json({"mode": w.mode, "n": w.n, "w": w.w.tolist()})


def weights_from_json(text: str) -> WeightMatrix:
    payload = json.loads(text)
    return WeightMatrix(np.asarray(payload["w"], dtype=float), payload["mode"])


def report_to_csv(report: SimulationReport) -> str:
    lines = ["k,mse,msdev,stderr_mse,stderr_msdev"]
    for k in range(len(report.mse)):
        lines.append(
            f"{k},{float(report.mse[k])!r},{float(report.msdev[k])!r},"
            f"{float(report.stderr_mse[k])!r},{float(report.stderr_msdev[k])!r}"
        )
    return "\n".join(lines) + "\n"


def report_summary(report: SimulationReport) -> dict:
    return {
        "gamma_hat": report.gamma_hat,
        "eta": report.eta,
        "tau": report.tau,
        "paths": report.paths,
        "burn_in": report.burn_in,
        "seed": report.seed,
    }


def load_config(path) -> ExperimentConfig:
    with open(path) as fh:
        payload = json.load(fh)
    return ExperimentConfig.from_dict(payload)


def _instance_dir(out: Path, instance: int) -> Path:
    return out / f"instance_{instance:03d}"


def cmd_design(cfg: ExperimentConfig, out: Path) -> int:
    if cfg.kind != "symmetric":
        raise ValueError("design works on symmetric configs; use the gossip command")
    summary_instances = []
    for k in range(cfg.graph.instances):
        design = design_symmetric_instance(cfg, k)
        inst_dir = _instance_dir(out, k)
        write_text_atomic(inst_dir / "graph.json", design.graph.to_json())
        write_text_atomic(inst_dir / "model.json", model_to_json(design.model))
        for name, wm in design.weights.items():
            write_text_atomic(inst_dir / f"weights_{name}.json", weights_to_json(wm))
        if design.pbw_result is not None:
            write_text_atomic(
                inst_dir / "optimization_pbw.json",
                dump_json(
                    {
                        "best_objective": design.pbw_result.best_objective,
                        "best_weights": design.pbw_result.best_weights.w.tolist(),
                        "iterations_run": design.pbw_result.iterations_run,
                        "objective_trace": design.pbw_result.objective_trace.tolist(),
                        "config": cfg.to_dict(),
                    }
                ),
            )
        summary_instances.append(
            {
                "instance": k,
                "correlation_used": design.correlation_used,
                "phi": design.phis,
                "tau": design.taus(),
            }
        )
    write_text_atomic(
        out / "design_summary.json",
        dump_json(
            {"schema_version": 1, "config": cfg.to_dict(), "instances": summary_instances}
        ),
    )
    print(f"designed {cfg.graph.instances} instance(s) -> {out}")
    return 0


def cmd_simulate(cfg: ExperimentConfig, out: Path) -> int:
    if cfg.kind != "symmetric":
        raise ValueError("simulate works on symmetric configs; use the gossip command")
    summary_path = out / "design_summary.json"
    if not summary_path.exists():
        raise FileNotFoundError(f"missing design artifacts under {out}; run design first")
    design_summary = json.loads(summary_path.read_text())

    summary_instances = []
    per_gain: dict[str, list] = {}
    per_metric: dict[str, dict[str, list]] = {}
    for entry in design_summary["instances"]:
        k = entry["instance"]
        inst_dir = _instance_dir(out, k)
        model = model_from_json((inst_dir / "model.json").read_text())
        weights = {}
        for name in entry["phi"]:
            weights[name] = weights_from_json((inst_dir / f"weights_{name}.json").read_text())
        sim = cfg.simulation
        seed = derive_seed(sim.seed, k, 2)
        coeffs = fit_clf(model)
        bits = draw_topology_bits(model, sim.paths, sim.horizon, seed, coeffs=coeffs)
        reports = {}
        for name, wm in weights.items():
            reports[name] = monte_carlo_mse(
                wm,
                model,
                paths=sim.paths,
                horizon=sim.horizon,
                seed=seed,
                burn_in=sim.burn_in,
                rate=entry["phi"][name],
                topologies=bits,
            )
            write_text_atomic(inst_dir / f"report_{name}.csv", report_to_csv(reports[name]))
        gains = instance_gains(reports)
        for gname, gval in gains.items():
            per_gain.setdefault(gname, []).append(gval)
        for mname, rep in reports.items():
            slot = per_metric.setdefault(mname, {"eta": [], "tau": [], "gamma_hat": []})
            slot["eta"].append(rep.eta)
            slot["tau"].append(rep.tau)
            slot["gamma_hat"].append(rep.gamma_hat)
        summary_instances.append(
            {
                "instance": k,
                "methods": {name: report_summary(rep) for name, rep in reports.items()},
                "gains": gains,
            }
        )
    summary = {
        "schema_version": 1,
        "config": cfg.to_dict(),
        "instances": summary_instances,
        "aggregate": {
            "gains": {name: aggregate(vals) for name, vals in per_gain.items()},
            "methods": {
                name: {metric: aggregate(vals) for metric, vals in slots.items()}
                for name, slots in per_metric.items()
            },
        },
    }
    write_text_atomic(out / "simulate_summary.json", dump_json(summary))
    print(f"simulated {len(summary_instances)} instance(s) -> {out}")
    return 0


def cmd_gossip(cfg: ExperimentConfig, out: Path) -> int:
    if cfg.kind != "gossip":
        raise ValueError("gossip command needs a config with kind='gossip'")
    summary_instances = []
    for k in range(cfg.graph.instances):
        design = design_gossip_instance(cfg, k)
        inst_dir = _instance_dir(out, k)
        write_text_atomic(inst_dir / "graph.json", design.graph.to_json())
        for name, wm in design.weights.items():
            write_text_atomic(inst_dir / f"weights_{name}.json", weights_to_json(wm))
        reports, gains = simulate_gossip_instance(cfg, design)
        for name, rep in reports.items():
            write_text_atomic(inst_dir / f"report_{name}.csv", report_to_csv(rep))
        summary_instances.append(
            {
                "instance": k,
                "g_star": design.g_star,
                "psi": design.psis,
                "methods": {name: report_summary(rep) for name, rep in reports.items()},
                "gains": gains,
            }
        )
    write_text_atomic(
        out / "gossip_summary.json",
        dump_json(
            {"schema_version": 1, "config": cfg.to_dict(), "instances": summary_instances}
        ),
    )
    print(f"ran gossip design+simulation for {cfg.graph.instances} instance(s) -> {out}")
    return 0


def validation_suite(perturb_moment_formula: float = 0.0) -> list[tuple[str, str, str]]:
    """Built-in oracle cross-checks; returns (name, status, detail) triples.

    Statuses are "pass", "fail", or "known-discrepancy" (an expected,
    documented gap that is surfaced rather than hidden).  The perturbation
    argument exists for sensitivity tests: it shifts the closed-form
    covariance and must make the moment property fail.
    """
    import itertools

    from .graphs import complete_graph, generate_geometric, link_index, path_graph
    from .linkmodel import correlation_uniform_fraction, make_link_model
    from .moments import (
        compare_gossip_moments,
        covariance_uncorrelated,
        enumerate_second_moment,
        mean_weight_matrix,
        projector_ones,
        second_moment_correlated,
        symmetric_weights,
        asymmetric_weights,
    )
    from .objectives import (
        complete_graph_optimum,
        max_eigenpair,
        phi,
        psi_gossip,
    )
    from .optimizer import (
        OptimizerConfig,
        metropolis_weights,
        optimize_phi,
        subgradient_phi_correlated,
        subgradient_phi_uncorrelated,
        subgradient_psi_gossip,
    )
    from .sampling import empirical_moments, fit_clf, sample_topologies

    results: list[tuple[str, str, str]] = []
    rng = np.random.default_rng(20240817)

    # closed-form second moment against exhaustive enumeration
    from .moments import enumerate_second_moment_joint, joint_law_moments

    worst = 0.0
    for trial in range(5):
        g = generate_geometric(5, 0.55, seed=1000 + trial)
        idx = link_index(g)
        model = make_link_model(g, rng.uniform(0.15, 0.95, idx.m))
        w = symmetric_weights(g, rng.uniform(-0.2, 0.7, idx.m))
        second = second_moment_correlated(w, model).second_moment + perturb_moment_formula
        brute = enumerate_second_moment(w, model)
        worst = max(worst, float(np.abs(second - brute.second_moment).max()))
    for trial in range(3):
        g = path_graph(4)
        idx = link_index(g)
        patterns = np.array(
            list(itertools.product((0.0, 1.0), repeat=idx.m)), dtype=float
        )
        probs = rng.dirichlet(np.ones(len(patterns)))
        pi, r_q = joint_law_moments(patterns, probs)
        model = make_link_model(g, pi, r_q)
        w = symmetric_weights(g, rng.uniform(-0.2, 0.7, idx.m))
        second = second_moment_correlated(w, model).second_moment + perturb_moment_formula
        brute = enumerate_second_moment_joint(w, idx, patterns, probs)
        worst = max(worst, float(np.abs(second - brute.second_moment).max()))
    results.append(
        (
            "moment-closed-form-vs-enumeration",
            "pass" if worst <= 1e-12 else "fail",
            f"max entrywise gap {worst:.2e} (tolerance 1e-12)",
        )
    )

    # uncorrelated special case equals the general covariance
    worst = 0.0
    for trial in range(5):
        g = generate_geometric(6, 0.5, seed=2000 + trial)
        idx = link_index(g)
        model = make_link_model(g, rng.uniform(0.1, 0.9, idx.m))
        w = symmetric_weights(g, rng.uniform(-0.4, 0.9, idx.m))
        gap = np.abs(
            covariance_uncorrelated(w, model) - second_moment_correlated(w, model).covariance
        ).max()
        worst = max(worst, float(gap))
    results.append(
        (
            "uncorrelated-covariance-special-case",
            "pass" if worst <= 1e-12 else "fail",
            f"max gap {worst:.2e}",
        )
    )

    # static topology: phi reduces to the squared spectral radius
    worst = 0.0
    for trial in range(5):
        g = generate_geometric(6, 0.5, seed=3000 + trial)
        idx = link_index(g)
        model = make_link_model(g, np.ones(idx.m))
        w = symmetric_weights(g, rng.uniform(0.0, 0.6, idx.m))
        mean = mean_weight_matrix(w, model)
        radius = float(
            np.max(np.abs(np.linalg.eigvalsh(mean - projector_ones(g.n))))
        )
        worst = max(worst, abs(phi(w, model) - radius**2))
    results.append(
        ("static-topology-reduction", "pass" if worst <= 1e-12 else "fail", f"max gap {worst:.2e}")
    )

    # subgradients against central finite differences
    def fd_gap(build_model, correlated):
        g = generate_geometric(5, 0.55, seed=4001)
        idx = link_index(g)
        model = build_model(g, idx)
        w = symmetric_weights(g, rng.uniform(0.1, 0.4, idx.m))
        mset = second_moment_correlated(w, model)
        eig = max_eigenpair(mset.second_moment - projector_ones(g.n))
        sub = (subgradient_phi_correlated if correlated else subgradient_phi_uncorrelated)(
            w, model, eig
        ).h
        h = 1e-6
        worst = 0.0
        for i, j in idx.pairs:
            wp, wm = w.w.copy(), w.w.copy()
            wp[i, j] += h
            wp[j, i] += h
            wm[i, j] -= h
            wm[j, i] -= h
            diff = (
                phi(WeightMatrix(wp, "symmetric"), model)
                - phi(WeightMatrix(wm, "symmetric"), model)
            ) / (2 * h)
            worst = max(worst, abs(diff - sub[i, j]) / max(1.0, abs(diff)))
        return worst

    gap_u = fd_gap(lambda g, idx: make_link_model(g, rng.uniform(0.2, 0.9, idx.m)), False)
    gap_c = fd_gap(
        lambda g, idx: correlation_uniform_fraction(
            make_link_model(g, rng.uniform(0.2, 0.9, idx.m)), 0.5
        ),
        True,
    )
    g5 = generate_geometric(5, 0.55, seed=4002)
    warr = rng.uniform(0.2, 0.8, (5, 5)) * g5.adjacency()
    wg = WeightMatrix(warr, "asymmetric")
    from .moments import gossip_moments

    tt, tjt = gossip_moments(wg, g5)
    eig = max_eigenpair(tt - tjt)
    sub = subgradient_psi_gossip(wg, g5, eig).h
    worst = 0.0
    h = 1e-6
    for i, j in zip(*np.nonzero(g5.adjacency())):
        wp, wm = wg.w.copy(), wg.w.copy()
        wp[i, j] += h
        wm[i, j] -= h
        diff = (
            psi_gossip(WeightMatrix(wp, "asymmetric"), g5)
            - psi_gossip(WeightMatrix(wm, "asymmetric"), g5)
        ) / (2 * h)
        worst = max(worst, abs(diff - sub[i, j]) / max(1.0, abs(diff)))
    gap_g = worst
    ok = max(gap_u, gap_c, gap_g) <= 1e-5
    results.append(
        (
            "subgradient-finite-difference",
            "pass" if ok else "fail",
            f"rel gaps: independent {gap_u:.2e}, correlated {gap_c:.2e}, gossip {gap_g:.2e}",
        )
    )

    # complete-graph closed form reached by the optimizer
    from .linkmodel import complete_uniform_model

    n, p, beta = 8, 0.6, 0.2
    model = complete_uniform_model(n, p, beta)
    gc = complete_graph(n)
    res = optimize_phi(metropolis_weights(gc), model, OptimizerConfig(max_iters=300))
    w_star, phi_star = complete_graph_optimum(n, p, beta)
    w_err = float(np.abs(res.best_weights.w[np.triu_indices(n, 1)] - w_star).max())
    ok = abs(res.best_objective - phi_star) <= 1e-3 and w_err <= 1e-2
    results.append(
        (
            "complete-graph-closed-form",
            "pass" if ok else "fail",
            f"phi gap {abs(res.best_objective - phi_star):.2e}, weight gap {w_err:.2e}",
        )
    )

    # gossip moments: tabulated formulas against exact enumeration
    worst_tj = 0.0
    diag_gap = 0.0
    for n in (2, 3, 4, 5):
        gn = complete_graph(n)
        warr = rng.uniform(0.1, 0.9, (n, n))
        np.fill_diagonal(warr, 0.0)
        cmp = compare_gossip_moments(WeightMatrix(warr, "asymmetric"), gn)
        worst_tj = max(worst_tj, cmp.max_diff_tjt, cmp.max_diff_tt_offdiag)
        diag_gap = max(diag_gap, cmp.max_diff_tt_diag)
    results.append(
        (
            "gossip-projected-moment-formula",
            "pass" if worst_tj <= 1e-12 else "fail",
            f"max gap {worst_tj:.2e} on complete graphs",
        )
    )
    results.append(
        (
            "gossip-diagonal-formula",
            "known-discrepancy" if diag_gap > 1e-6 else "fail",
            f"tabulated diagonal of E[W^T W] differs from enumeration by up to {diag_gap:.3f} "
            "(expected; enumeration is ground truth)",
        )
    )
    g2 = complete_graph(2)
    law_gap = max(
        abs(psi_gossip(asymmetric_weights(g2, gv), g2) - (1 - gv) ** 2)
        for gv in (0.0, 0.25, 0.5, 0.75, 1.0)
    )
    results.append(
        (
            "gossip-two-node-rate-law",
            "pass" if law_gap <= 1e-12 else "fail",
            f"max |psi(g) - (1-g)^2| = {law_gap:.2e}",
        )
    )

    # sampler fidelity
    g3 = path_graph(3)
    model = make_link_model(
        g3, np.array([0.5, 0.5]), np.array([[0.25, 0.25], [0.25, 0.25]])
    )
    samples = sample_topologies(model, fit_clf(model), 20000, seed=99)
    exact = bool((samples.bits_matrix[:, 0] == samples.bits_matrix[:, 1]).all())
    gg = generate_geometric(12, 0.3, seed=5001)
    idxg = link_index(gg)
    modelg = correlation_uniform_fraction(
        make_link_model(gg, rng.uniform(0.3, 0.9, idxg.m)), 0.5
    )
    samp = sample_topologies(modelg, fit_clf(modelg), 30000, seed=100)
    pi_hat, rq_hat = empirical_moments(samp)
    gap = max(
        float(np.abs(pi_hat - modelg.pi).max()), float(np.abs(rq_hat - modelg.r_q).max())
    )
    ok = exact and gap <= 0.02
    results.append(
        (
            "sampler-moment-fidelity",
            "pass" if ok else "fail",
            f"perfect-pair exact: {exact}; moment gap {gap:.4f} (tolerance 0.02)",
        )
    )
    return results


def cmd_validate(perturb_moment_formula: float = 0.0) -> int:
    results = validation_suite(perturb_moment_formula)
    failures = 0
    for name, status, detail in results:
        if status == "pass":
            print(f"PASS  {name}: {detail}")
        elif status == "known-discrepancy":
            print(f"KNOWN DISCREPANCY  {name}: {detail}")
        else:
            failures += 1
            print(f"FAIL  {name}: {detail}")
    print(f"{len(results) - failures}/{len(results)} properties clean")
    return 1 if failures else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="consmix",
        description="Design and test mixing weights for consensus on random topologies",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    for name, needs_config in (
        ("design", True),
        ("simulate", True),
        ("gossip", True),
        ("validate", False),
    ):
        p = sub.add_parser(name)
        if needs_config:
            p.add_argument("--config", required=True, help="experiment config JSON")
            p.add_argument("--out", required=True, help="output directory")
        p.add_argument("--seed-override", type=int, default=None)
        p.add_argument("--threads", type=int, default=1)
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "validate":
            return cmd_validate()
        cfg = load_config(args.config)
        if args.seed_override is not None:
            cfg.graph.seed = args.seed_override
            cfg.simulation.seed = args.seed_override
        cfg.threads = args.threads  # reductions are fixed-order; results do not depend on it
        out = Path(args.out)
        if args.command == "design":
            return cmd_design(cfg, out)
        if args.command == "simulate":
            return cmd_simulate(cfg, out)
        if args.command == "gossip":
            return cmd_gossip(cfg, out)
        raise ValueError(f"unknown command {args.command!r}")
    except (ValueError, FileNotFoundError, json.JSONDecodeError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2


if __name__ == "__main__":
    sys.exit(main())
