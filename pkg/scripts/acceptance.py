"""
Acceptance suite run by `verify`
The [acceptance] section of a config lists the checks to run
(`checks = [...]`) and their parameters. Every check produces a
ProbeReport; any failed report raises AcceptanceFailure after all
checks have run.
"""
import time
from functools import cached_property
from pathlib import Path
from typing import Callable, Dict, List

import numpy as np
from loguru import logger

from config import RunConfig
from exceptions import AcceptanceFailure, DomainError
from profiles import discretize, validate
from rmt.probes import ProbeReport, fraction_outside
from rmt.sampling import eigenvalues, pseudospectrum_grid, sample
from scripts.commands import run_probes
from solvers.brown import compute_L, density_from_L, potential_field, total_mass
from solvers.dyson import solve_mde, solve_vde, solve_vde_reduced
from solvers.support import (
    SupportRegion,
    hausdorff_to_disk,
    oracle_iid_mask,
    region_S_eps,
    rho_curve,
    support_oracle_azero,
)
from utils.fields import GridSpec, boundary_band, erode, l1_distance
from utils.io import output_path, write_json

DEFAULT_CHECKS = ["model_valid", "vde_exact"]


class AcceptanceRun:
    """Shared state (models, support field) for the checks of one config"""

    def __init__(self, cfg: RunConfig, threads: int = 1):
        self.cfg = cfg
        self.params: Dict = dict(cfg.acceptance)
        self.threads = threads

    def param(self, key: str, default):
        return self.params.get(key, default)

    def grid_param(self, key: str) -> GridSpec:
        value = self.params.get(key)
        if value is None:
            return self.cfg.grid
        return GridSpec(re_min=value[0], re_max=value[1], im_min=value[2], im_max=value[3], h=value[4])

    @cached_property
    def model(self):
        return discretize(self.cfg.model, self.cfg.n)

    @cached_property
    def support_region(self) -> SupportRegion:
        return region_S_eps(self.model, self.cfg.grid, 0.0, self.cfg.support, self.cfg.solver, threads=self.threads)

    @cached_property
    def disk_radius(self):
        try:
            return support_oracle_azero(self.cfg.model)
        except DomainError:
            return None

    # =====================================================================
    # Checks
    # =====================================================================

    def check_model_valid(self) -> ProbeReport:
        report = validate(self.cfg.model)
        return ProbeReport("model_valid", {}, float(len(report.violations)), 0.0, report.valid,
                           {"violations": report.codes})

    def check_vde_exact(self) -> ProbeReport:
        """n-dimensional solve against the reduced system and the MDE at w = i eta"""
        zeta = complex(*self.param("vde_zeta", [0.0, 0.0]))
        eta = float(self.param("vde_eta", 1.0))
        tol = float(self.param("vde_tol", 1e-10))
        model = self.model
        solver = self.cfg.solver.model_copy(update={"lump": False}) if model.n <= 200 else self.cfg.solver
        sol = solve_vde(model, zeta, eta, cfg=solver)
        reduced = solve_vde_reduced(self.cfg.model, zeta, eta, cfg=self.cfg.solver)
        collapse = float(np.abs(sol.v1 - reduced.v1[model.labels]).max())
        mde = solve_mde(model, zeta, 1j * eta, cfg=self.cfg.solver)
        consistency = float(np.abs(mde.m1 - 1j * sol.v1).max())
        value = max(collapse, consistency)
        extra = {"collapse_error": collapse, "mde_consistency": consistency}
        expected = self.params.get("vde_expected")
        if expected is not None:
            extra["expected_error"] = float(np.abs(sol.v1 - expected).max())
            value = max(value, extra["expected_error"])
        return ProbeReport("vde_exact", {"zeta": [zeta.real, zeta.imag], "eta": eta}, value, tol, value <= tol, extra)

    def check_log_potential(self) -> ProbeReport:
        points = self.param("L_points", [])
        expected = self.param("L_expected", [])
        tol = float(self.param("L_tol", 2e-3))
        errors = []
        for (re, im), target in zip(points, expected):
            result = compute_L(self.model, complex(re, im), self.cfg.quad, self.cfg.solver)
            errors.append(abs(result.value - target))
        value = max(errors) if errors else 0.0
        return ProbeReport("log_potential", {"points": points, "expected": expected}, value, tol, value <= tol,
                           {"errors": errors})

    def check_density(self) -> ProbeReport:
        grid = self.grid_param("density_grid")
        L = potential_field(self.model, grid, self.cfg.quad, self.cfg.solver, threads=self.threads)
        sigma = density_from_L(L)
        mass = total_mass(sigma)
        r = np.abs(sigma.points())
        ok = sigma.ok

        extra: Dict = {"total_mass": mass}
        failures = []
        mass_tol = float(self.param("mass_tol", 0.02))
        if abs(mass - 1) > mass_tol:
            failures.append("mass")

        inner_value = self.params.get("density_inner_value")
        if inner_value is not None:
            inner = ok & (r <= float(self.param("density_inner_radius", 0.8)))
            err = float(np.abs(sigma.values[inner] - inner_value).max()) if inner.any() else float("inf")
            extra["inner_error"] = err
            if err > float(self.param("density_inner_tol", 0.01)):
                failures.append("inner")

        outer_radius = self.params.get("density_outer_radius")
        if outer_radius is None and self.disk_radius is not None:
            outer_radius = self.disk_radius + 0.2
        if outer_radius is not None:
            outer = ok & (r >= float(outer_radius))
            err = float(np.abs(sigma.values[outer]).max()) if outer.any() else 0.0
            extra["outer_error"] = err
            if err > float(self.param("density_outer_tol", 0.005)):
                failures.append("outer")

        extra["failed_parts"] = failures
        return ProbeReport("density", {"grid": grid.model_dump(), "n": self.cfg.n}, abs(mass - 1), mass_tol,
                           not failures, extra)

    def check_support_disk(self) -> ProbeReport:
        radius = self.disk_radius
        if radius is None:
            raise DomainError("support_disk needs a vanishing deformation", "acceptance.support_disk")
        field = self.support_region.field
        h = field.spacing()
        distance = hausdorff_to_disk(self.support_region.mask_for(0.0), field.points(), radius)
        return ProbeReport("support_disk", {"radius": radius, "h": h}, distance, 2 * h, distance <= 2 * h)

    def check_support_iid(self) -> ProbeReport:
        s = self.cfg.model.variance_matrix
        t = float(self.param("iid_t", s[0, 0]))
        field = self.support_region.field
        oracle = oracle_iid_mask(self.cfg.model, t, field.points())
        band = boundary_band(oracle, 2)
        considered = field.ok & ~band
        agree = (self.support_region.mask_for(0.0) == oracle)[considered]
        share = float(agree.mean()) if agree.size else 0.0
        target = float(self.param("iid_agreement", 0.98))
        return ProbeReport("support_iid", {"t": t}, share, target, share >= target,
                           {"nodes_compared": int(considered.sum())})

    def _sample_eigenvalues(self, n: int, seed: int) -> np.ndarray:
        model = discretize(self.cfg.model, n)
        cfg = self.cfg.sample.model_copy(update={"n": n, "seed": seed})
        return eigenvalues(sample(model, cfg, threads=self.threads)).eigenvalues

    def check_spectrum_in_support(self) -> ProbeReport:
        n = int(self.param("sample_n", 500))
        seeds = list(self.param("sample_seeds", [0, 1, 2, 3, 4]))
        eps = float(self.param("spectrum_eps", 0.1))
        outside = []
        for seed in seeds:
            lam = self._sample_eigenvalues(n, seed)
            outside.append(fraction_outside(self.support_region.contains(lam, eps)))
        value = float(np.mean(outside))
        tol = float(self.param("outside_fraction", 0.01))
        return ProbeReport("spectrum_in_support", {"n": n, "seeds": seeds, "eps": eps}, value, tol, value <= tol,
                           {"per_seed": outside})

    def check_pseudospec_sandwich(self) -> ProbeReport:
        n = int(self.param("sample_n", 500))
        seed = int(self.param("sample_seeds", [0])[0])
        model = discretize(self.cfg.model, n)
        ps = pseudospectrum_grid(sample(model, self.cfg.sample.model_copy(update={"n": n, "seed": seed})),
                                 self.cfg.grid, threads=self.threads)
        dist = self.support_region.field
        both = dist.ok & ps.field.ok
        interior = erode(both & (dist.values <= 0.0), 1)
        smin_cap = float(self.param("sandwich_smin", 0.15))
        worst_a = float(ps.field.values[interior].max()) if interior.any() else 0.0
        small = both & (ps.field.values <= float(self.param("sandwich_small_smin", 0.02)))
        worst_b = float(dist.values[small].max()) if small.any() else 0.0
        dist_cap = float(self.param("sandwich_dist", 0.1))
        passed = worst_a <= smin_cap and worst_b <= dist_cap
        return ProbeReport("pseudospec_sandwich", {"n": n, "seed": seed}, worst_a, smin_cap, passed,
                           {"max_dist_where_smin_small": worst_b, "dist_cap": dist_cap})

    def check_identity_probes(self) -> ProbeReport:
        reports = [r for r in run_probes(self.cfg) if r.passed is not None]
        failed = [r.probe for r in reports if not r.passed]
        return ProbeReport("identity_probes", {}, float(len(failed)), 0.0, not failed,
                           {r.probe: r.value for r in reports})

    def check_refinement(self) -> ProbeReport:
        sizes = list(self.param("refinement_n", [50, 100, 200]))
        grid = self.grid_param("refinement_grid")
        fields = []
        for n in sizes:
            model = discretize(self.cfg.model, n)
            L = potential_field(model, grid, self.cfg.quad, self.cfg.solver, threads=self.threads)
            fields.append(density_from_L(L))
        diffs = [l1_distance(a, b) for a, b in zip(fields, fields[1:])]
        monotone = all(later <= earlier + 1e-9 for earlier, later in zip(diffs, diffs[1:]))

        zeta = complex(*self.param("rho_zeta", [0.0, 0.0]))
        taus = np.linspace(0.0, float(self.param("rho_tau_max", 3.0)), int(self.param("rho_nodes", 61)))
        n_lo, n_hi = sizes[-2], sizes[-1]
        curves = [rho_curve(discretize(self.cfg.model, n), zeta, taus, self.cfg.support, self.cfg.solver)
                  for n in (n_lo, n_hi)]
        rho_gap = float(np.abs(curves[0] - curves[1]).max())
        rho_tol = float(self.param("rho_tol", 0.01))
        return ProbeReport("refinement", {"sizes": sizes}, rho_gap, rho_tol, monotone and rho_gap <= rho_tol,
                           {"l1_differences": diffs, "monotone": monotone})

    CHECKS: Dict[str, Callable[["AcceptanceRun"], ProbeReport]] = {
        "model_valid": check_model_valid,
        "vde_exact": check_vde_exact,
        "log_potential": check_log_potential,
        "density": check_density,
        "support_disk": check_support_disk,
        "support_iid": check_support_iid,
        "spectrum_in_support": check_spectrum_in_support,
        "pseudospec_sandwich": check_pseudospec_sandwich,
        "identity_probes": check_identity_probes,
        "refinement": check_refinement,
    }


def run_acceptance(cfg: RunConfig, threads: int = 1) -> List[ProbeReport]:
    """
    Run the configured checks and write one JSON summary

    Raises:
        AcceptanceFailure: at least one check failed
    """
    run = AcceptanceRun(cfg, threads)
    names = list(run.params.get("checks", DEFAULT_CHECKS))
    unknown = [name for name in names if name not in AcceptanceRun.CHECKS]
    if unknown:
        raise DomainError(f"unknown acceptance checks: {unknown}", "acceptance.run")

    logger.info("=" * 80)
    logger.info(f"Acceptance suite: {', '.join(names)}")
    logger.info("=" * 80)

    reports: List[ProbeReport] = []
    for name in names:
        start = time.time()
        report = AcceptanceRun.CHECKS[name](run)
        elapsed = time.time() - start
        report.extra["seconds"] = round(elapsed, 3)
        reports.append(report)
        flag = "✅" if report.passed else "❌"
        logger.info(f"{flag} {name}: value={report.value:.4g} tolerance={report.tolerance} ({elapsed:.1f}s)")

    config_hash = cfg.config_hash()
    write_json(
        {"config_hash": config_hash, "reports": [r.to_dict() for r in reports]},
        output_path(Path(cfg.output_dir), "verify", config_hash, ".json"),
    )

    failed = [r.probe for r in reports if not r.passed]
    logger.info("=" * 80)
    if failed:
        logger.error(f"❌ Acceptance failed: {', '.join(failed)}")
        raise AcceptanceFailure(f"failed checks: {', '.join(failed)}", "cli.verify")
    logger.info("✅ All acceptance checks passed")
    return reports
