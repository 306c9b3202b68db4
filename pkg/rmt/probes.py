"""
Identity and assumption probes on sampled matrices
"""
from __future__ import annotations

from dataclasses import asdict, dataclass, field
from typing import Callable, Dict, Optional, Tuple

import numpy as np
import scipy.linalg
from loguru import logger
from scipy.integrate import simpson

from exceptions import DomainError
from profiles import DiscretizedModel
from rmt.sampling import MatrixSample, SampleConfig, draw_noise, eigenvalues, hermitize, singular_values
from utils.fields import GridSpec, laplacian

# Frame (in cells) where a Girko test function must vanish
GIRKO_MARGIN = 2
# z-score of the reported binomial confidence radius
CONFIDENCE_Z = 1.96
# logdet quadrature: closed-form head below this fraction of min|lambda|,
# log-spaced nodes up to this multiple of max|lambda|, uniform nodes above
LOGDET_HEAD_FRACTION = 1e-2
LOGDET_SPLIT_FACTOR = 4.0


@dataclass
class ProbeReport:
    """
    JSON record of one probe run: name, inputs, value, tolerance and the pass
    flag `passed` (None when the probe has no tolerance)
    """

    probe: str
    inputs: Dict[str, object]
    value: float
    tolerance: Optional[float]
    passed: Optional[bool]
    extra: Dict[str, object] = field(default_factory=dict)

    def to_dict(self) -> Dict[str, object]:
        return asdict(self)


def hermitization_spectrum(sample: MatrixSample, zeta: complex) -> np.ndarray:
    """Eigenvalues of H_zeta as +-singular values of R - zeta"""
    sv = singular_values(sample, zeta)
    return np.concatenate([sv, -sv])


def hermitization_check(sample: MatrixSample, zeta: complex) -> Tuple[float, float]:
    """
    Exact-identity errors of H_zeta

    Returns:
        (spectral symmetry error, SVD agreement error), both relative to max(1, |H|)
    """
    lam = scipy.linalg.eigvalsh(hermitize(sample, zeta))
    sv = np.sort(singular_values(sample, zeta))
    scale = max(1.0, float(np.abs(lam).max()))
    symmetry = float(np.abs(lam + lam[::-1]).max()) / scale
    agreement = float(np.abs(lam[sample.n:] - sv).max()) / scale
    return symmetry, agreement


def logdet_identity_probe(sample: MatrixSample, zeta: complex, T: float = 100.0, nodes: int = 2000) -> float:
    """
    Compare log|det H| with its resolvent-integral representation

        log|det H| = -sum_lambda int_0^T eta / (lambda^2 + eta^2) d eta + sum_lambda log|lambda - iT|

    Both sides use the same eigenvalue list. Below 1e-2 min|lambda| the
    integral is taken in closed form. Half of `nodes` are log-spaced up to
    4 max|lambda|, a range that does not depend on T; the other half are
    uniform in eta from there to T, so at a fixed node count a larger T
    only coarsens the quadrature.

    Returns:
        |lhs - rhs| / max(|lhs|, 1)

    Raises:
        DomainError: H_zeta singular or fewer than 4 nodes
    """
    if nodes < 4:
        raise DomainError(f"need at least 4 quadrature nodes, got {nodes}", "rmt.logdet_identity_probe")
    lam = np.abs(hermitization_spectrum(sample, zeta))
    scale = max(float(lam.max()), 1.0)
    if lam.min() <= 1e-14 * scale:
        raise DomainError(f"H is singular at zeta={zeta}", "rmt.logdet_identity_probe")

    lhs = float(np.log(lam).sum())

    eta_lo = min(LOGDET_HEAD_FRACTION * float(lam.min()), T)
    eta_mid = min(LOGDET_SPLIT_FACTOR * float(lam.max()), T)
    integral = 0.5 * np.log1p((eta_lo / lam) ** 2).sum()

    if eta_mid > eta_lo:
        n_low = nodes // 2 if eta_mid < T else nodes
        t = np.linspace(np.log(eta_lo), np.log(eta_mid), n_low)
        eta = np.exp(t)
        # eta d eta / (lambda^2 + eta^2) = eta^2 / (lambda^2 + eta^2) dt
        integrand = (eta[:, None] ** 2 / (lam[None, :] ** 2 + eta[:, None] ** 2)).sum(axis=1)
        integral += simpson(integrand, x=t)
    if T > eta_mid:
        eta = np.linspace(eta_mid, T, nodes - nodes // 2 + 1)
        integrand = (eta[:, None] / (lam[None, :] ** 2 + eta[:, None] ** 2)).sum(axis=1)
        integral += simpson(integrand, x=eta)
    rhs = float(-integral + 0.5 * np.log(lam ** 2 + T ** 2).sum())

    error = abs(lhs - rhs) / max(abs(lhs), 1.0)
    logger.debug(f"logdet identity at zeta={zeta}, T={T}: lhs={lhs:.12g}, rhs={rhs:.12g}, error={error:.3e}")
    return error


@dataclass
class GirkoResult:
    lhs: float
    rhs: float
    abs_error: float
    rel_error: float


def girko_probe(
    sample: MatrixSample,
    f: Callable[[np.ndarray], np.ndarray],
    grid: GridSpec,
    spectrum: Optional[np.ndarray] = None,
) -> GirkoResult:
    """
    Check (1/n) sum f(lambda) = (1/4 pi n) int Laplacian f(zeta) log|det H_zeta| d^2 zeta

    The right side uses the 5-point Laplacian of f on the grid and grid
    quadrature; log|det H| is only evaluated where the Laplacian is nonzero.

    Args:
        sample: matrix sample
        f: vectorized test function on complex arrays
        grid: quadrature grid
        spectrum: precomputed eigenvalues of the sample (computed if omitted)

    Raises:
        DomainError: f does not vanish on the outer frame of the grid
    """
    points = grid.points()
    values = np.asarray(f(points), dtype=float)
    peak = float(np.abs(values).max())
    frame = np.ones(values.shape, dtype=bool)
    frame[GIRKO_MARGIN:-GIRKO_MARGIN, GIRKO_MARGIN:-GIRKO_MARGIN] = False
    if peak > 0 and np.abs(values[frame]).max() > 1e-12 * peak:
        raise DomainError(f"test function must vanish within {GIRKO_MARGIN} cells of the grid boundary", "rmt.girko_probe")

    lam = eigenvalues(sample).eigenvalues if spectrum is None else np.asarray(spectrum)
    n = sample.n
    lhs = float(np.mean(f(lam)))

    lap, valid = laplacian(values, np.ones(values.shape, dtype=bool), grid.h)
    active = valid & (lap != 0)
    total = 0.0
    for zeta, weight in zip(points[active], lap[active]):
        sv = singular_values(sample, zeta)
        if sv[-1] <= 0:
            continue
        total += weight * 2.0 * np.log(sv).sum()
    rhs = float(total * grid.h ** 2 / (4 * np.pi * n))

    diff = abs(lhs - rhs)
    return GirkoResult(lhs=lhs, rhs=rhs, abs_error=diff, rel_error=diff / max(abs(lhs), 1e-300))


def bump(center: complex = 0.0, radius: float = 1.0) -> Callable[[np.ndarray], np.ndarray]:
    """Smooth compactly supported radial bump exp(1 - 1/(1 - r^2)) on |zeta - center| < radius"""

    def f(z: np.ndarray) -> np.ndarray:
        r2 = np.abs(np.asarray(z) - center) ** 2 / radius ** 2
        out = np.zeros(r2.shape)
        inside = r2 < 1
        out[inside] = np.exp(1 - 1 / (1 - r2[inside]))
        return out

    return f


def small_sv_count(sample: MatrixSample, zeta: complex, eta: float) -> int:
    """Number of eigenvalues of H_zeta in [-eta, eta]"""
    if not eta > 0:
        raise DomainError(f"eta must be positive, got {eta}", "rmt.small_sv_count")
    return int((np.abs(hermitization_spectrum(sample, zeta)) <= eta).sum())


@dataclass
class SminProbe:
    frequency: float
    radius: float
    threshold: float
    trials: int
    hits: int


def smin_assumption_probe(
    model: DiscretizedModel,
    z_diag: np.ndarray,
    trials: int,
    beta: float,
    r0: float = 0.5,
    K0: float = 1.0,
    distribution: str = "complex-gaussian",
    seed: int = 0,
) -> SminProbe:
    """
    Empirical frequency of sigma_min(X + Z) <= n^{-1/2 - beta}

    Trial k samples X with seed `seed + k`. The reported radius is the
    Wilson score half-width at 95%.

    Raises:
        DomainError: trials <= 0, r0 not in (0, 1/2], K0 < 1 or |z_i| outside [r0, K0]
    """
    if trials <= 0:
        raise DomainError("at least one trial is required", "rmt.smin_assumption_probe")
    if not 0 < r0 <= 0.5 or K0 < 1:
        raise DomainError(f"need 0 < r0 <= 1/2 and K0 >= 1, got r0={r0}, K0={K0}", "rmt.smin_assumption_probe")
    z_diag = np.asarray(z_diag, dtype=complex)
    if z_diag.shape != (model.n,):
        raise DomainError(f"z_diag must have length n={model.n}", "rmt.smin_assumption_probe")
    moduli = np.abs(z_diag)
    if np.any(moduli < r0) or np.any(moduli > K0):
        raise DomainError(f"|z_i| must lie in [{r0}, {K0}]", "rmt.smin_assumption_probe")

    n = model.n
    threshold = n ** (-0.5 - beta)
    Z = np.diag(z_diag)
    hits = 0
    for k in range(trials):
        cfg = SampleConfig(n=n, distribution=distribution, seed=seed + k)
        X = draw_noise(model, cfg)
        if singular_values(MatrixSample(X + Z, model.model_hash, cfg), 0.0)[-1] <= threshold:
            hits += 1

    p = hits / trials
    z2 = CONFIDENCE_Z ** 2
    radius = CONFIDENCE_Z * np.sqrt(p * (1 - p) / trials + z2 / (4 * trials ** 2)) / (1 + z2 / trials)
    logger.info(f"smin probe: {hits}/{trials} trials below {threshold:.3e} (frequency {p:.3f} +- {radius:.3f})")
    return SminProbe(frequency=p, radius=float(radius), threshold=threshold, trials=trials, hits=hits)


def fraction_outside(inside: np.ndarray) -> float:
    """Share of points (eigenvalues) whose membership flag is False"""
    inside = np.asarray(inside, dtype=bool)
    return float((~inside).sum() / max(inside.size, 1))
