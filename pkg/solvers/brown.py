"""
Log-potential L(zeta) and Brown-measure density

    L(zeta) = int_0^inf ( <v1(zeta, eta)> - 1/(1 + eta) ) d eta
    sigma   = -(1/2 pi) Laplacian L
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Literal, Optional, Sequence, Tuple

import numpy as np
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field, model_validator
from scipy.integrate import simpson, trapezoid

from exceptions import NonConvergence
from profiles import DiscretizedModel
from solvers.dyson import SolverConfig, eta_sweep_batch
from utils.fields import GridSpec, ScalarField, laplacian
from utils.parallel import ordered_map

# C in |tail beyond T| <= C (1 + |zeta|) / T
TAIL_CONSTANT = 2.0
# Negative densities above -DENSITY_TOL_REL * max are discretization noise
DENSITY_TOL_REL = 1e-3


class QuadratureConfig(BaseModel):
    """Log-spaced eta quadrature for the improper integral defining L"""

    model_config = ConfigDict(frozen=True)

    T_split: float = Field(default=1e3, gt=0)
    nodes: int = Field(default=256, ge=16)
    eta_min: float = Field(default=1e-6, gt=0)
    tail_mode: Literal["bound-check", "extrapolate"] = "bound-check"
    accuracy: float = Field(default=1e-2, gt=0)

    @model_validator(mode="after")
    def _check_range(self) -> "QuadratureConfig":
        if self.eta_min >= self.T_split:
            raise ValueError(f"eta_min={self.eta_min} must be below T_split={self.T_split}")
        return self

    def etas(self) -> np.ndarray:
        """Quadrature nodes, descending from T_split to eta_min"""
        return np.geomspace(self.T_split, self.eta_min, self.nodes)


@dataclass
class LogPotential:
    zeta: complex
    value: float
    error: float
    tail: float
    residual: float

    def __float__(self) -> float:
        return self.value


def _tail(f_top: np.ndarray, etas: np.ndarray, quad: QuadratureConfig, zetas: np.ndarray):
    """Contribution and error of the integral beyond T_split"""
    T = quad.T_split
    bound = TAIL_CONSTANT * (1 + np.abs(zetas)) / T
    if quad.tail_mode == "bound-check":
        if np.any(bound > quad.accuracy):
            logger.warning(
                f"brown.compute_L: tail bound {bound.max():.2e} exceeds requested accuracy {quad.accuracy:.1e}; "
                f"raise T_split or use tail_mode=extrapolate"
            )
        return np.zeros_like(bound), bound

    # f ~ A/eta^2 + B/eta^3 fitted at the two largest nodes
    e0, e1 = etas[0], etas[1]
    f0, f1 = f_top
    det = 1 / (e0 ** 2 * e1 ** 3) - 1 / (e1 ** 2 * e0 ** 3)
    A = (f0 / e1 ** 3 - f1 / e0 ** 3) / det
    B = (f1 / e0 ** 2 - f0 / e1 ** 2) / det
    tail = A / T + B / (2 * T ** 2)
    if np.any(np.abs(tail) > bound):
        logger.warning(f"brown.compute_L: extrapolated tail {np.abs(tail).max():.2e} exceeds the bound {bound.max():.2e}")
    return tail, np.abs(B) / (2 * T ** 2)


def log_potential_batch(
    model: DiscretizedModel,
    zetas: Sequence[complex],
    quad: QuadratureConfig,
    cfg: SolverConfig,
) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
    """
    L at many zetas from one warm-started eta sweep

    Returns:
        values, error estimates, tail contributions, worst solver residuals, ok mask
    """
    zetas = np.atleast_1d(np.asarray(zetas, dtype=complex))
    etas = quad.etas()
    means, residual, ok = eta_sweep_batch(model, zetas, etas, cfg)

    f = means - 1.0 / (1.0 + etas)[:, None]
    # Ascending t = log(eta); d eta = eta dt
    t = np.log(etas[::-1])
    g = (f * etas[:, None])[::-1]
    body = trapezoid(g, x=t, axis=0)
    body_err = np.abs(body - simpson(g, x=t, axis=0))

    head = means[-1] * quad.eta_min - np.log1p(quad.eta_min)
    head_err = np.abs(means[-1]) * quad.eta_min

    tail, tail_err = _tail(f[:2], etas, quad, zetas)

    values = body + head + tail
    errors = body_err + head_err + tail_err
    ok = ok & np.isfinite(values)
    return values, errors, tail, residual, ok


def compute_L(
    model: DiscretizedModel,
    zeta: complex,
    quad: Optional[QuadratureConfig] = None,
    cfg: Optional[SolverConfig] = None,
) -> LogPotential:
    """
    Log-potential at one spectral point

    Args:
        model: discretized model
        zeta: spectral point
        quad: quadrature settings
        cfg: solver settings

    Returns:
        LogPotential with value and total quadrature error estimate

    Raises:
        NonConvergence: annotated with the eta node where the sweep failed
    """
    quad = quad or QuadratureConfig()
    cfg = cfg or SolverConfig()
    values, errors, tail, residual, ok = log_potential_batch(model, [zeta], quad, cfg)
    if not ok[0]:
        raise NonConvergence("eta sweep failed", "brown.compute_L", residual=float(residual[0]))
    return LogPotential(complex(zeta), float(values[0]), float(errors[0]), float(tail[0]), float(residual[0]))


def potential_field(
    model: DiscretizedModel,
    grid: GridSpec,
    quad: Optional[QuadratureConfig] = None,
    cfg: Optional[SolverConfig] = None,
    threads: int = 1,
) -> ScalarField:
    """
    L on every grid node; failed nodes are masked, not raised

    One grid row is one work chunk.
    """
    quad = quad or QuadratureConfig()
    cfg = cfg or SolverConfig()
    points = grid.points()
    logger.info(f"Computing L on {points.shape[1]}x{points.shape[0]} grid (n={model.n}, threads={threads})")

    rows = ordered_map(
        lambda row: log_potential_batch(model, row, quad, cfg),
        list(points),
        threads=threads,
        label="brown.potential_field rows",
    )
    values = np.vstack([r[0] for r in rows])
    errors = np.vstack([r[1] for r in rows])
    residual = np.vstack([r[3] for r in rows])
    ok = np.vstack([r[4] for r in rows])

    failed = int((~ok).sum())
    if failed:
        logger.warning(f"brown.potential_field: {failed} of {ok.size} nodes failed and are masked")

    meta = {
        "model_hash": model.model_hash,
        "quadrature": quad.model_dump(),
        "max_residual": float(residual[ok].max()) if ok.any() else None,
        "max_error": float(errors[ok].max()) if ok.any() else None,
    }
    return ScalarField.from_grid(grid, np.where(ok, values, np.nan), ok, quantity="L", meta=meta)


def density_from_L(field: ScalarField) -> ScalarField:
    """
    sigma = -(1/2 pi) 5-point Laplacian of L on interior nodes

    Negative values down to -1e-3 * max are clamped to 0; larger negatives
    are kept and counted in the `negative_nodes` meta entry.

    Raises:
        DomainError: grid spacing not uniform
    """
    h = field.spacing()
    lap, valid = laplacian(field.values, field.ok, h)
    sigma = -lap / (2 * np.pi)

    peak = float(sigma[valid].max()) if valid.any() else 0.0
    tol_density = DENSITY_TOL_REL * max(peak, 0.0)
    small = valid & (sigma < 0) & (sigma >= -tol_density)
    large = valid & (sigma < -tol_density)
    sigma = np.where(small, 0.0, sigma)
    if large.any():
        logger.warning(
            f"brown.density_from_L: {int(large.sum())} nodes below -{tol_density:.2e} (min {sigma[large].min():.3e})"
        )
    sigma = np.where(valid, sigma, np.nan)
    return field.with_values(sigma, valid, "sigma", tol_density=tol_density, negative_nodes=int(large.sum()))


def total_mass(density: ScalarField) -> float:
    """h^2 times the sum over valid nodes"""
    h = density.spacing()
    return float(h ** 2 * np.where(density.ok, density.values, 0.0).sum())


def exact_disk_potential(zetas: np.ndarray) -> np.ndarray:
    """Log-potential of the uniform distribution on the unit disk"""
    r = np.abs(np.asarray(zetas))
    return np.where(r < 1, (1 - r ** 2) / 2, -np.log(np.maximum(r, 1)))
