"""
One function per CLI command
Each takes the validated RunConfig and returns an exit code; outputs
are written under the configured output directory with the config hash
in every file name.
"""
import json
from pathlib import Path
from typing import Dict, List

import numpy as np
from loguru import logger

from config import RunConfig
from profiles import discretize, validate
from rmt.probes import (
    ProbeReport,
    bump,
    girko_probe,
    hermitization_check,
    logdet_identity_probe,
    small_sv_count,
    smin_assumption_probe,
)
from rmt.sampling import eigenvalues, pseudospectrum_grid, sample
from solvers.brown import density_from_L, potential_field, total_mass
from solvers.dyson import solve_vde
from solvers.support import region_S_eps
from utils.fields import GridSpec
from utils.io import output_path, write_esd, write_field, write_json


def cmd_validate(cfg: RunConfig, threads: int = 1) -> int:
    report = validate(cfg.model)
    print(json.dumps(report.to_dict(), indent=2))
    if report.valid:
        logger.info("✅ Profile satisfies all model assumptions")
    else:
        logger.warning(f"❌ Profile violates: {', '.join(report.codes)}")
    return 0


def cmd_solve(cfg: RunConfig, threads: int = 1) -> int:
    model = discretize(cfg.model, cfg.n)
    sol = solve_vde(model, cfg.zeta, cfg.eta, cfg=cfg.solver)
    S = model.S
    identity = sol.v2 * (sol.eta + S.T @ sol.v1) - sol.v1 * (sol.eta + S @ sol.v2)
    summary = {
        "zeta": [cfg.zeta.real, cfg.zeta.imag],
        "eta": sol.eta,
        "n": model.n,
        "mean_v1": float(np.mean(sol.v1)),
        "mean_v2": float(np.mean(sol.v2)),
        "v1_range": [float(sol.v1.min()), float(sol.v1.max())],
        "v2_range": [float(sol.v2.min()), float(sol.v2.max())],
        "residual": sol.residual,
        "iterations": sol.iterations,
        "identity_error": float(np.abs(identity).max()),
        "config_hash": cfg.config_hash(),
    }
    print(json.dumps(summary, indent=2))
    return 0


def cmd_potential(cfg: RunConfig, threads: int = 1) -> int:
    model = discretize(cfg.model, cfg.n)
    field = potential_field(model, cfg.grid, cfg.quad, cfg.solver, threads=threads)
    write_field(field, Path(cfg.output_dir), "potential", cfg.config_hash())
    return 0


def cmd_density(cfg: RunConfig, threads: int = 1) -> int:
    model = discretize(cfg.model, cfg.n)
    L = potential_field(model, cfg.grid, cfg.quad, cfg.solver, threads=threads)
    sigma = density_from_L(L)
    mass = total_mass(sigma)
    logger.info(f"Total mass of the density field: {mass:.6f}")
    write_field(sigma, Path(cfg.output_dir), "density", cfg.config_hash(), extra={"total_mass": mass})
    return 0


def cmd_support(cfg: RunConfig, threads: int = 1) -> int:
    model = discretize(cfg.model, cfg.n)
    eps_list = list(cfg.eps) or [0.0]
    region = region_S_eps(model, cfg.grid, eps_list[0], cfg.support, cfg.solver, threads=threads)
    config_hash = cfg.config_hash()
    out = Path(cfg.output_dir)
    write_field(region.field, out, "support_dist0", config_hash)
    for eps in eps_list:
        mask = region.mask_field(eps)
        write_field(mask, out, f"support_mask_eps{eps:g}", config_hash, extra={"nodes_inside": int(region.mask_for(eps).sum())})
    return 0


def cmd_sample(cfg: RunConfig, threads: int = 1) -> int:
    model = discretize(cfg.model, cfg.n)
    config_hash = cfg.config_hash()
    for seed in cfg.seeds:
        sample_cfg = cfg.sample.model_copy(update={"seed": seed, "n": cfg.n})
        esd = eigenvalues(sample(model, sample_cfg, threads=threads))
        write_esd(esd.eigenvalues, Path(cfg.output_dir), f"esd_seed{seed}", config_hash)
    return 0


def cmd_pseudospec(cfg: RunConfig, threads: int = 1) -> int:
    model = discretize(cfg.model, cfg.n)
    sample_cfg = cfg.sample.model_copy(update={"n": cfg.n})
    ps = pseudospectrum_grid(sample(model, sample_cfg, threads=threads), cfg.grid, cfg.eps, threads=threads)
    counts = {f"{eps:g}": int(mask.sum()) for eps, mask in ps.masks.items()}
    write_field(ps.field, Path(cfg.output_dir), "pseudospec_smin", cfg.config_hash(), extra={"nodes_inside": counts})
    return 0


def run_probes(cfg: RunConfig) -> List[ProbeReport]:
    """Identity probes on samples of the configured model"""
    params: Dict = cfg.acceptance
    reports: List[ProbeReport] = []
    zeta = cfg.zeta

    n_logdet = int(params.get("logdet_n", 50))
    T = float(params.get("logdet_T", 100.0))
    nodes = int(params.get("logdet_nodes", 2000))
    s = sample(discretize(cfg.model, n_logdet), cfg.sample.model_copy(update={"n": n_logdet}))
    err = logdet_identity_probe(s, zeta, T=T, nodes=nodes)
    reports.append(ProbeReport("logdet_identity", {"n": n_logdet, "zeta": [zeta.real, zeta.imag], "T": T, "nodes": nodes},
                               err, 1e-6, err <= 1e-6))

    n_girko = int(params.get("girko_n", 100))
    radius = float(params.get("girko_radius", 1.5))
    h = float(params.get("girko_h", 0.05))
    half = round((radius + 0.3) / h) * h
    grid = GridSpec(re_min=-half, re_max=half, im_min=-half, im_max=half, h=h)
    s = sample(discretize(cfg.model, n_girko), cfg.sample.model_copy(update={"n": n_girko}))
    girko = girko_probe(s, bump(0.0, radius), grid)
    reports.append(ProbeReport("girko", {"n": n_girko, "radius": radius, "h": h}, girko.rel_error, 5e-2,
                               girko.rel_error <= 5e-2, {"lhs": girko.lhs, "rhs": girko.rhs, "abs_error": girko.abs_error}))

    rng = np.random.default_rng(cfg.sample.seed)
    worst = 0.0
    pairs = int(params.get("hermitization_pairs", 20))
    for k in range(pairs):
        s = sample(discretize(cfg.model, n_logdet), cfg.sample.model_copy(update={"n": n_logdet, "seed": cfg.sample.seed + k}))
        z = complex(*rng.uniform(-1.5, 1.5, size=2))
        worst = max(worst, *hermitization_check(s, z))
    reports.append(ProbeReport("hermitization", {"pairs": pairs, "n": n_logdet}, worst, 1e-8, worst <= 1e-8))

    eta = float(params.get("small_sv_eta", 0.1))
    n_count = int(params.get("small_sv_n", 200))
    s = sample(discretize(cfg.model, n_count), cfg.sample.model_copy(update={"n": n_count}))
    count = small_sv_count(s, zeta, eta)
    ratio = count / (n_count * eta)
    reports.append(ProbeReport("small_sv_count", {"n": n_count, "eta": eta, "zeta": [zeta.real, zeta.imag]}, ratio,
                               None, None, {"count": count}))

    z_value = float(params.get("smin_z", 2.0))
    trials = int(params.get("smin_trials", 20))
    beta = float(params.get("smin_beta", 0.5))
    model = discretize(cfg.model, n_count)
    probe = smin_assumption_probe(model, np.full(n_count, z_value), trials, beta, K0=max(1.0, z_value), seed=cfg.sample.seed)
    reports.append(ProbeReport("smin_assumption", {"n": n_count, "z": z_value, "trials": trials, "beta": beta},
                               probe.frequency, None, None, {"radius": probe.radius, "threshold": probe.threshold}))
    return reports


def cmd_probes(cfg: RunConfig, threads: int = 1) -> int:
    config_hash = cfg.config_hash()
    for report in run_probes(cfg):
        flag = "✅" if report.passed else ("❌" if report.passed is False else "ℹ️")
        logger.info(f"{flag} {report.probe}: value={report.value:.3e}")
        write_json({"config_hash": config_hash, **report.to_dict()},
                   output_path(Path(cfg.output_dir), f"probe_{report.probe}", config_hash, ".json"))
    return 0


def cmd_verify(cfg: RunConfig, threads: int = 1) -> int:
    from scripts.acceptance import run_acceptance

    run_acceptance(cfg, threads=threads)
    return 0


COMMANDS = {
    "validate": cmd_validate,
    "solve": cmd_solve,
    "potential": cmd_potential,
    "density": cmd_density,
    "support": cmd_support,
    "sample": cmd_sample,
    "pseudospec": cmd_pseudospec,
    "probes": cmd_probes,
    "verify": cmd_verify,
}
