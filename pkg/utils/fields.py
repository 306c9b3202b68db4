"""
Rectangular zeta-grids and scalar fields on them
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace
from typing import Dict, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from exceptions import DomainError

# Grid spans must be integer multiples of h up to this relative slack
SPACING_SLACK = 1e-9


class GridSpec(BaseModel):
    """Rectangle [re_min, re_max] x [im_min, im_max] with uniform spacing h"""

    model_config = ConfigDict(frozen=True)

    re_min: float
    re_max: float
    im_min: float
    im_max: float
    h: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_extent(self) -> "GridSpec":
        if self.re_max < self.re_min or self.im_max < self.im_min:
            raise ValueError("grid bounds must satisfy min <= max")
        for span in (self.re_max - self.re_min, self.im_max - self.im_min):
            steps = span / self.h
            if abs(steps - round(steps)) > SPACING_SLACK * max(1.0, steps):
                raise ValueError(f"grid span {span} is not a multiple of h={self.h}")
        return self

    @classmethod
    def parse(cls, text: str) -> "GridSpec":
        """Parse `re_min,re_max,im_min,im_max,h`"""
        parts = [float(p) for p in text.split(",")]
        if len(parts) != 5:
            raise ValueError(f"expected 5 comma-separated numbers, got {len(parts)}")
        return cls(re_min=parts[0], re_max=parts[1], im_min=parts[2], im_max=parts[3], h=parts[4])

    @property
    def re_axis(self) -> np.ndarray:
        count = int(round((self.re_max - self.re_min) / self.h)) + 1
        return self.re_min + self.h * np.arange(count)

    @property
    def im_axis(self) -> np.ndarray:
        count = int(round((self.im_max - self.im_min) / self.h)) + 1
        return self.im_min + self.h * np.arange(count)

    @property
    def shape(self):
        return self.im_axis.shape[0], self.re_axis.shape[0]

    def points(self) -> np.ndarray:
        """Complex node coordinates, shape (N_im, N_re)"""
        re, im = np.meshgrid(self.re_axis, self.im_axis)
        return re + 1j * im


@dataclass
class ScalarField:
    """
    One real value per grid node

    `values` and `ok` have shape (N_im, N_re); row index follows the
    imaginary axis. Nodes with ok == False are missing.
    """

    re: np.ndarray
    im: np.ndarray
    values: np.ndarray
    ok: np.ndarray
    quantity: str
    meta: Dict[str, object] = field(default_factory=dict)

    @classmethod
    def from_grid(cls, grid: GridSpec, values: np.ndarray, ok: Optional[np.ndarray] = None, quantity: str = "",
                  meta: Optional[Dict[str, object]] = None) -> "ScalarField":
        values = np.asarray(values, dtype=float).reshape(grid.shape)
        ok = np.ones(grid.shape, dtype=bool) if ok is None else np.asarray(ok, dtype=bool).reshape(grid.shape)
        return cls(grid.re_axis, grid.im_axis, values, ok, quantity, dict(meta or {}))

    @property
    def shape(self):
        return self.values.shape

    def points(self) -> np.ndarray:
        re, im = np.meshgrid(self.re, self.im)
        return re + 1j * im

    def spacing(self) -> float:
        """Common spacing of both axes; DomainError if the grid is not uniform"""
        steps = []
        for axis in (self.re, self.im):
            if axis.shape[0] > 1:
                diffs = np.diff(axis)
                if np.ptp(diffs) > SPACING_SLACK * abs(diffs[0]) or diffs[0] <= 0:
                    raise DomainError("grid spacing is not uniform", "fields.spacing")
                steps.append(float(diffs[0]))
        if not steps:
            raise DomainError("grid has a single node", "fields.spacing")
        if len(steps) == 2 and abs(steps[0] - steps[1]) > SPACING_SLACK * steps[0]:
            raise DomainError(f"real and imaginary spacings differ ({steps[0]} vs {steps[1]})", "fields.spacing")
        return steps[0]

    def with_values(self, values: np.ndarray, ok: np.ndarray, quantity: str, **meta) -> "ScalarField":
        merged = dict(self.meta)
        merged.update(meta)
        return replace(self, values=np.asarray(values, dtype=float), ok=np.asarray(ok, dtype=bool),
                       quantity=quantity, meta=merged)


def laplacian(values: np.ndarray, ok: np.ndarray, h: float):
    """
    5-point discrete Laplacian; boundary nodes and nodes next to a missing value are missing

    Returns:
        (laplacian, ok) arrays of the input shape
    """
    out = np.zeros_like(values, dtype=float)
    valid = np.zeros(values.shape, dtype=bool)
    if values.shape[0] < 3 or values.shape[1] < 3:
        return out, valid
    v = np.where(ok, values, 0.0)
    out[1:-1, 1:-1] = (v[2:, 1:-1] + v[:-2, 1:-1] + v[1:-1, 2:] + v[1:-1, :-2] - 4 * v[1:-1, 1:-1]) / h ** 2
    valid[1:-1, 1:-1] = ok[2:, 1:-1] & ok[:-2, 1:-1] & ok[1:-1, 2:] & ok[1:-1, :-2] & ok[1:-1, 1:-1]
    out[~valid] = 0.0
    return out, valid


def erode(mask: np.ndarray, cells: int = 1) -> np.ndarray:
    """Nodes of `mask` whose 4-neighbours (repeated `cells` times) are all in `mask`; grid edge counts as outside"""
    out = np.asarray(mask, dtype=bool).copy()
    for _ in range(cells):
        padded = np.pad(out, 1, constant_values=False)
        out = (padded[1:-1, 1:-1] & padded[2:, 1:-1] & padded[:-2, 1:-1]
               & padded[1:-1, 2:] & padded[1:-1, :-2])
    return out


def boundary_band(mask: np.ndarray, cells: int) -> np.ndarray:
    """Nodes within `cells` steps (Chebyshev) of a change in `mask`"""
    mask = np.asarray(mask, dtype=bool)
    band = np.zeros_like(mask)
    padded = np.pad(mask, cells, mode="edge")
    rows, cols = mask.shape
    for di in range(-cells, cells + 1):
        for dj in range(-cells, cells + 1):
            shifted = padded[cells + di:cells + di + rows, cells + dj:cells + dj + cols]
            band |= shifted != mask
    return band


def l1_distance(a: ScalarField, b: ScalarField) -> float:
    """Grid L1 distance h^2 * sum |a - b| over nodes valid in both"""
    h = a.spacing()
    both = a.ok & b.ok
    return float(h ** 2 * np.abs(a.values - b.values)[both].sum())
