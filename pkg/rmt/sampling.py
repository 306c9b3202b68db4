"""
Random matrices X + A with a variance profile, their spectra,
Hermitizations and pseudospectra
"""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Dict, List, Literal, Optional, Sequence

import numpy as np
import scipy.linalg
from loguru import logger
from pydantic import BaseModel, ConfigDict, Field

from exceptions import DomainError, NumericalFailure
from profiles import DiscretizedModel
from utils.fields import GridSpec, ScalarField
from utils.parallel import ordered_map

Distribution = Literal["complex-gaussian", "real-gaussian", "rademacher"]


class SampleConfig(BaseModel):
    """Entry law and seed of a sampled matrix; every law has mean 0 and E|xi|^2 = 1"""

    model_config = ConfigDict(frozen=True)

    n: int = Field(default=100, ge=2)
    distribution: Distribution = "complex-gaussian"
    seed: int = Field(default=0, ge=0, lt=2 ** 64)


@dataclass
class MatrixSample:
    matrix: np.ndarray
    model_hash: str
    config: Optional[SampleConfig] = None

    @property
    def n(self) -> int:
        return self.matrix.shape[0]

    @classmethod
    def from_matrix(cls, matrix: np.ndarray, label: str = "direct") -> "MatrixSample":
        """Wrap a given matrix (diagonal inputs, hand-built test cases)"""
        matrix = np.asarray(matrix, dtype=complex)
        if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
            raise DomainError(f"matrix must be square, got shape {matrix.shape}", "rmt.sample")
        return cls(matrix=matrix, model_hash=label, config=None)


@dataclass
class ESD:
    eigenvalues: np.ndarray
    model_hash: str
    seed: Optional[int] = None

    @property
    def n(self) -> int:
        return self.eigenvalues.shape[0]


def row_generator(seed: int, row: int) -> np.random.Generator:
    """Counter-based stream of one matrix row, keyed by (seed, row)"""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(seed, spawn_key=(row,))))


def _draw_row(rng: np.random.Generator, n: int, distribution: str) -> np.ndarray:
    if distribution == "complex-gaussian":
        pairs = rng.standard_normal((n, 2))
        return (pairs[:, 0] + 1j * pairs[:, 1]) / np.sqrt(2.0)
    if distribution == "real-gaussian":
        return rng.standard_normal(n).astype(complex)
    return (2.0 * rng.integers(0, 2, size=n) - 1.0).astype(complex)


def draw_noise(model: DiscretizedModel, cfg: SampleConfig, threads: int = 1) -> np.ndarray:
    """
    X with entries sqrt(S_ij) xi_ij

    Row i uses its own stream; entry (i, j) is the j-th draw of that
    stream, so the matrix does not depend on evaluation order.
    """
    if model.n != cfg.n:
        raise DomainError(f"model has n={model.n}, sample config has n={cfg.n}", "rmt.sample")
    n = cfg.n
    rows: List[np.ndarray] = ordered_map(
        lambda i: _draw_row(row_generator(cfg.seed, i), n, cfg.distribution),
        list(range(n)),
        threads=threads,
        label="rmt.sample rows",
    )
    return np.sqrt(model.S) * np.vstack(rows)


def sample(model: DiscretizedModel, cfg: SampleConfig, threads: int = 1) -> MatrixSample:
    """
    Draw X + A for a discretized model

    Raises:
        DomainError: model.n differs from cfg.n
    """
    matrix = draw_noise(model, cfg, threads) + np.diag(model.a)
    logger.debug(f"Sampled {cfg.n}x{cfg.n} {cfg.distribution} matrix with seed {cfg.seed}")
    return MatrixSample(matrix=matrix, model_hash=model.model_hash, config=cfg)


def eigenvalues(sample: MatrixSample) -> ESD:
    """
    Eigenvalues by a dense nonsymmetric eigensolver, checked against the trace

    Raises:
        DomainError: non-finite entries
        NumericalFailure: eigensolver failure or trace mismatch
    """
    R = sample.matrix
    if not np.all(np.isfinite(R)):
        raise DomainError("matrix has non-finite entries", "rmt.eigenvalues")
    try:
        lam = scipy.linalg.eigvals(R)
    except scipy.linalg.LinAlgError as e:
        raise NumericalFailure(f"eigensolver failed: {e}", "rmt.eigenvalues") from e

    n = R.shape[0]
    scale = max(1.0, float(np.linalg.norm(R, ord="fro")) / np.sqrt(n), abs(np.trace(R)))
    gap = abs(lam.sum() - np.trace(R))
    if gap > 1e-8 * n * scale:
        raise NumericalFailure(f"eigenvalue sum misses the trace by {gap:.3e}", "rmt.eigenvalues")

    seed = sample.config.seed if sample.config else None
    return ESD(eigenvalues=lam, model_hash=sample.model_hash, seed=seed)


def hermitize(sample: MatrixSample, zeta: complex) -> np.ndarray:
    """H = [[0, R - zeta], [(R - zeta)^*, 0]]"""
    R = sample.matrix - zeta * np.eye(sample.n)
    zero = np.zeros_like(R)
    return np.block([[zero, R], [R.conj().T, zero]])


def singular_values(sample: MatrixSample, zeta: complex) -> np.ndarray:
    """Singular values of R - zeta, descending; the nonnegative eigenvalues of H"""
    try:
        return scipy.linalg.svdvals(sample.matrix - zeta * np.eye(sample.n))
    except scipy.linalg.LinAlgError as e:
        raise NumericalFailure(f"SVD failed at zeta={zeta}: {e}", "rmt.smin") from e


def smin(sample: MatrixSample, zeta: complex) -> float:
    return float(singular_values(sample, zeta)[-1])


@dataclass
class Pseudospectrum:
    """sigma_min(R - zeta) on a grid; eps-pseudospectrum masks are sigma_min <= eps"""

    field: ScalarField
    eps: List[float] = field(default_factory=list)

    def mask_for(self, eps: float) -> np.ndarray:
        return self.field.ok & (self.field.values <= eps)

    @property
    def masks(self) -> Dict[float, np.ndarray]:
        return {e: self.mask_for(e) for e in self.eps}


def pseudospectrum_grid(
    sample: MatrixSample, grid: GridSpec, eps: Sequence[float] = (), threads: int = 1
) -> Pseudospectrum:
    """sigma_min on every grid node (one grid row per work chunk); failed nodes are masked"""
    points = grid.points()

    def row_smin(row: np.ndarray):
        values = np.full(row.shape, np.nan)
        ok = np.zeros(row.shape, dtype=bool)
        for j, zeta in enumerate(row):
            try:
                values[j] = smin(sample, zeta)
                ok[j] = True
            except NumericalFailure as e:
                logger.debug(f"rmt.pseudospectrum_grid: node {zeta} failed: {e}")
        return values, ok

    rows = ordered_map(row_smin, list(points), threads=threads, label="rmt.pseudospectrum_grid rows")
    values = np.vstack([r[0] for r in rows])
    ok = np.vstack([r[1] for r in rows])
    meta = {"model_hash": sample.model_hash, "seed": sample.config.seed if sample.config else None}
    field_ = ScalarField.from_grid(grid, values, ok, quantity="smin", meta=meta)
    return Pseudospectrum(field=field_, eps=sorted(float(e) for e in eps))
