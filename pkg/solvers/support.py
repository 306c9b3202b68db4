"""
Singular-value density rho_zeta, dist(0, supp rho_zeta) and the sets
S_eps = {zeta : dist(0, supp rho_zeta) <= eps}, plus closed-form support
oracles for the iid-with-deformation and zero-deformation cases
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field
from scipy.integrate import trapezoid
from scipy.spatial import cKDTree

from exceptions import DomainError, NonConvergence
from profiles import DiscretizedModel, ProfileSpec, reduced_variance_matrix, spectral_radius
from solvers.dyson import DysonOperator, SolverConfig, solve_mde_batch
from utils.fields import GridSpec, ScalarField
from utils.parallel import ordered_map

SCAN_CHUNK = 64


class SupportConfig(BaseModel):
    """Threshold detection of supp rho_zeta"""

    model_config = ConfigDict(frozen=True)

    eta_probe: float = Field(default=1e-4, gt=0)
    density_threshold: float = Field(default=1e-2, gt=0)
    tau_max: Optional[float] = Field(default=None, gt=0)
    tau_nodes: int = Field(default=512, ge=2)
    bisect_tol: float = Field(default=1e-4, gt=0)
    # density solves only feed a threshold test; they run with their own caps
    scan_tol: float = Field(default=1e-8, gt=0)
    scan_max_iter: int = Field(default=20000, ge=1)
    scan_restarts: int = Field(default=0, ge=0)
    scan_continuation_steps: int = Field(default=32, ge=2)

    def resolve_tau_max(self, model: DiscretizedModel, zeta: complex) -> float:
        """Configured tau_max, or |a|_inf + 2 sqrt(|S|) + |zeta| + 1"""
        if self.tau_max is not None:
            return self.tau_max
        norm_S = float(model.S.sum(axis=1).max())
        return float(np.abs(model.a).max() + 2 * np.sqrt(norm_S) + abs(zeta) + 1)

    def scan_solver(self, cfg: SolverConfig) -> SolverConfig:
        """`cfg` with the looser tolerance and tighter caps used for density solves"""
        return cfg.model_copy(
            update={
                "tol": max(cfg.tol, self.scan_tol),
                "max_iter": min(cfg.max_iter, self.scan_max_iter),
                "restarts": min(cfg.restarts, self.scan_restarts),
                "continuation_steps": min(cfg.continuation_steps, self.scan_continuation_steps),
            }
        )


def rho_curve(
    model: DiscretizedModel,
    zeta: complex,
    taus: Sequence[float],
    sup: SupportConfig,
    cfg: SolverConfig,
    operator: Optional[DysonOperator] = None,
) -> np.ndarray:
    """
    rho_zeta on a set of signed tau values

    Solves run with `sup.scan_solver(cfg)`.

    Raises:
        NonConvergence: some tau failed after all restarts
    """
    taus = np.asarray(taus, dtype=float)
    zetas = np.full(taus.shape, complex(zeta))
    batch = solve_mde_batch(model, zetas, taus + 1j * sup.eta_probe, sup.scan_solver(cfg), operator=operator)
    if not batch.ok.all():
        bad = int(np.argmax(~batch.ok))
        raise NonConvergence(
            f"density solve failed at tau={taus[bad]}",
            "support.rho_density",
            residual=float(batch.residual[bad]),
            eta=sup.eta_probe,
        )
    return np.maximum(batch.mean_trace().imag / np.pi, 0.0)


def rho_density(
    model: DiscretizedModel,
    zeta: complex,
    tau: float,
    sup: Optional[SupportConfig] = None,
    cfg: Optional[SolverConfig] = None,
) -> float:
    """
    Symmetrized singular-value density of X + A - zeta at tau

    (1/pi) Im of (2n)^{-1} tr M(zeta, tau + i eta_probe)
    """
    sup = sup or SupportConfig()
    cfg = cfg or SolverConfig()
    return float(rho_curve(model, zeta, [tau], sup, cfg)[0])


def rho_mass(model: DiscretizedModel, zeta: complex, sup: SupportConfig, cfg: SolverConfig) -> float:
    """Integral of rho_zeta over [-tau_max, tau_max]"""
    tau_max = sup.resolve_tau_max(model, zeta)
    taus = np.linspace(-tau_max, tau_max, 2 * sup.tau_nodes - 1)
    return float(trapezoid(rho_curve(model, zeta, taus, sup, cfg), taus))


def _dist_batch(
    model: DiscretizedModel,
    zetas: np.ndarray,
    sup: SupportConfig,
    cfg: SolverConfig,
    op: DysonOperator,
):
    """Scan-then-bisect for many zetas; returns distances and ok mask"""
    B = zetas.shape[0]
    scan = sup.scan_solver(cfg)
    tau_max = np.array([sup.resolve_tau_max(model, z) for z in zetas])
    grid = np.linspace(0.0, 1.0, sup.tau_nodes)
    dist = tau_max.copy()
    lo = np.zeros(B)
    hi = np.zeros(B)

    def density(zs: np.ndarray, taus: np.ndarray):
        batch = solve_mde_batch(model, zs, taus + 1j * sup.eta_probe, scan, operator=op)
        return np.maximum(batch.mean_trace().imag / np.pi, 0.0), batch.ok

    # tau = 0 first: nodes inside the support never enter the scan
    rho0, ok = density(zetas, np.zeros(B))
    ok = ok.copy()
    found = ok & (rho0 > sup.density_threshold)
    dist[found] = 0.0

    for start in range(1, sup.tau_nodes, SCAN_CHUNK):
        pending = np.flatnonzero(~found & ok)
        if pending.size == 0:
            break
        cols = np.arange(start, min(start + SCAN_CHUNK, sup.tau_nodes))
        taus = grid[cols][None, :] * tau_max[pending][:, None]
        zs = np.repeat(zetas[pending], cols.size)
        rho, conv = density(zs, taus.ravel())
        rho = rho.reshape(pending.size, cols.size)
        conv = conv.reshape(pending.size, cols.size)

        above = rho > sup.density_threshold
        hit = above.any(axis=1)
        first = np.argmax(above, axis=1)
        for j, b in enumerate(pending):
            # only the solves up to the first crossing matter
            upto = first[j] + 1 if hit[j] else cols.size
            if not conv[j, :upto].all():
                ok[b] = False
                continue
            if not hit[j]:
                continue
            found[b] = True
            k = cols[first[j]]
            lo[b] = grid[k - 1] * tau_max[b]
            hi[b] = grid[k] * tau_max[b]

    bisect = np.flatnonzero(found & ok & (lo < hi))
    while bisect.size:
        mid = 0.5 * (lo[bisect] + hi[bisect])
        rho, conv = density(zetas[bisect], mid)
        ok[bisect] &= conv
        above = rho > sup.density_threshold
        hi[bisect] = np.where(above, mid, hi[bisect])
        lo[bisect] = np.where(above, lo[bisect], mid)
        bisect = bisect[(hi[bisect] - lo[bisect] > sup.bisect_tol) & ok[bisect]]

    refined = found & (hi > 0)
    dist[refined] = 0.5 * (lo[refined] + hi[refined])
    return dist, ok


def dist_zero_support(
    model: DiscretizedModel,
    zeta: complex,
    sup: Optional[SupportConfig] = None,
    cfg: Optional[SolverConfig] = None,
) -> float:
    """
    dist(0, supp rho_zeta) by threshold scan on [0, tau_max] and bisection

    Returns:
        0 if rho_zeta(0) exceeds the threshold, tau_max if no scan node does

    Raises:
        NonConvergence: a density solve failed
    """
    sup = sup or SupportConfig()
    cfg = cfg or SolverConfig()
    op = DysonOperator.from_model(model, cfg.lump)
    dist, ok = _dist_batch(model, np.array([complex(zeta)]), sup, cfg, op)
    if not ok[0]:
        raise NonConvergence("density solve failed during support scan", "support.dist_zero_support", eta=sup.eta_probe)
    return float(dist[0])


@dataclass
class SupportRegion:
    """dist(0, supp rho_zeta) on a grid; masks for any eps derive from it"""

    field: ScalarField
    eps: float

    @property
    def mask(self) -> np.ndarray:
        return self.mask_for(self.eps)

    def mask_for(self, eps: float) -> np.ndarray:
        if eps < 0:
            raise DomainError(f"eps must be nonnegative, got {eps}", "support.region_S_eps")
        return self.field.ok & (self.field.values <= eps)

    def mask_field(self, eps: Optional[float] = None) -> ScalarField:
        eps = self.eps if eps is None else eps
        return self.field.with_values(self.mask_for(eps).astype(float), self.field.ok, "s_eps_mask", eps=eps)

    def contains(self, points: Sequence[complex], eps: float) -> np.ndarray:
        """
        Membership of arbitrary points in S_eps by their nearest grid node

        dist is 1-Lipschitz in zeta and the nearest node lies within h/sqrt(2),
        so a point belongs when that node has dist <= eps + h/sqrt(2). Points
        outside the grid are not members.
        """
        points = np.atleast_1d(np.asarray(points, dtype=complex))
        h = self.field.spacing()
        re, im = self.field.re, self.field.im
        j = np.clip(np.rint((points.real - re[0]) / h).astype(int), 0, re.shape[0] - 1)
        i = np.clip(np.rint((points.imag - im[0]) / h).astype(int), 0, im.shape[0] - 1)
        inside = (
            (points.real >= re[0] - h / 2) & (points.real <= re[-1] + h / 2)
            & (points.imag >= im[0] - h / 2) & (points.imag <= im[-1] + h / 2)
        )
        if not inside.all():
            logger.warning(f"support.contains: {int((~inside).sum())} points fall outside the grid")
        node_ok = self.field.ok[i, j]
        return inside & node_ok & (self.field.values[i, j] <= eps + h / np.sqrt(2))


def region_S_eps(
    model: DiscretizedModel,
    grid: GridSpec,
    eps: float = 0.0,
    sup: Optional[SupportConfig] = None,
    cfg: Optional[SolverConfig] = None,
    threads: int = 1,
) -> SupportRegion:
    """
    dist(0, supp rho_zeta) on every grid node plus the mask dist <= eps

    Failed nodes are masked. One grid row is one work chunk.
    """
    if eps < 0:
        raise DomainError(f"eps must be nonnegative, got {eps}", "support.region_S_eps")
    sup = sup or SupportConfig()
    cfg = cfg or SolverConfig()
    op = DysonOperator.from_model(model, cfg.lump)
    points = grid.points()
    logger.info(f"Computing dist(0, supp rho) on {points.shape[1]}x{points.shape[0]} grid (threads={threads})")

    rows = ordered_map(
        lambda row: _dist_batch(model, row, sup, cfg, op),
        list(points),
        threads=threads,
        label="support.region_S_eps rows",
    )
    dist = np.vstack([r[0] for r in rows])
    ok = np.vstack([r[1] for r in rows])
    if not ok.all():
        logger.warning(f"support.region_S_eps: {int((~ok).sum())} of {ok.size} nodes failed and are masked")

    meta = {"model_hash": model.model_hash, "support": sup.model_dump()}
    field = ScalarField.from_grid(grid, np.where(ok, dist, np.nan), ok, quantity="dist0", meta=meta)
    return SupportRegion(field=field, eps=eps)


def oracle_iid_mask(spec: ProfileSpec, t: float, zetas: np.ndarray) -> np.ndarray:
    """Vectorized support_oracle_iid"""
    zetas = np.asarray(zetas, dtype=complex)
    gaps = np.abs(spec.deformation[:, None] - zetas.ravel()[None, :]) ** 2
    hit = (gaps == 0).any(axis=0)
    with np.errstate(divide="ignore"):
        integral = (spec.block_lengths[:, None] / gaps).sum(axis=0)
    return (hit | (integral >= 1.0 / t)).reshape(zetas.shape)


def support_oracle_iid(spec: ProfileSpec, t: float, zeta: complex) -> bool:
    """
    zeta in supp sigma for s = t constant iff sum_k |I_k| / |a_k - zeta|^2 >= 1/t

    A zeta in the image of a is a member.
    """
    if t <= 0:
        raise DomainError(f"t must be positive, got {t}", "support.support_oracle_iid")
    return bool(oracle_iid_mask(spec, t, np.array([zeta]))[0])


def support_oracle_azero(spec: ProfileSpec) -> float:
    """Radius sqrt(rho(S)) of supp sigma when the deformation vanishes"""
    if np.any(spec.deformation != 0):
        raise DomainError("deformation must vanish identically", "support.support_oracle_azero")
    return float(np.sqrt(spectral_radius(reduced_variance_matrix(spec))))


def oracle_disk_mask(radius: float, zetas: np.ndarray) -> np.ndarray:
    return np.abs(np.asarray(zetas)) <= radius


def hausdorff_to_disk(mask: np.ndarray, points: np.ndarray, radius: float) -> float:
    """
    Hausdorff distance between the masked grid nodes and the closed disk of `radius`

    The disk side is represented by the grid nodes inside it.
    """
    points = np.asarray(points)
    chosen = points[mask]
    disk = points[np.abs(points) <= radius]
    if chosen.size == 0 or disk.size == 0:
        return float("inf")
    outward = float(np.maximum(np.abs(chosen) - radius, 0.0).max())
    tree = cKDTree(np.column_stack([chosen.real, chosen.imag]))
    inward, _ = tree.query(np.column_stack([disk.real, disk.imag]))
    return max(outward, float(inward.max()))
