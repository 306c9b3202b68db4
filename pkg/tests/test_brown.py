import numpy as np
import pytest
from pydantic import ValidationError

from exceptions import DomainError
from profiles import discretize
from solvers.brown import (
    TAIL_CONSTANT,
    QuadratureConfig,
    compute_L,
    density_from_L,
    exact_disk_potential,
    log_potential_batch,
    potential_field,
    total_mass,
)
from solvers.dyson import SolverConfig
from tests.conftest import bundled
from utils.fields import GridSpec, ScalarField

QUAD = QuadratureConfig(tail_mode="extrapolate")


@pytest.mark.parametrize(
    "zeta, expected, tol",
    [
        (0.0, 0.5, 1e-3),
        (2.0, -np.log(2.0), 1e-3),
        (1.0, 0.0, 2e-3),
        (1j, 0.0, 2e-3),
    ],
)
def test_circular_log_potential(circular_model, zeta, expected, tol):
    result = compute_L(circular_model, zeta, QUAD)
    assert result.value == pytest.approx(expected, abs=tol)
    assert float(result) == result.value
    assert result.error < 1e-2


def test_bound_check_tail_reports_its_bound(circular_model):
    quad = QuadratureConfig(tail_mode="bound-check", T_split=1e4, nodes=512)
    result = compute_L(circular_model, 0.0, quad)
    assert result.tail == 0.0
    assert result.error >= 2.0 / 1e4
    assert result.value == pytest.approx(0.5, abs=1e-3)


@pytest.mark.parametrize("zeta", [0.0, 0.8j, 1.5, 3.0 - 1.0j])
def test_extrapolated_tail_respects_its_bound(circular_model, zeta):
    result = compute_L(circular_model, zeta, QUAD)
    assert abs(result.tail) <= TAIL_CONSTANT * (1 + abs(zeta)) / QUAD.T_split
    assert result.tail != 0.0


def test_batch_agrees_with_closed_form_potential(circular_model):
    zetas = np.array([0.3, 0.5j, -0.7 + 0.2j, 1.4, 3.0 - 1.0j])
    values, errors, _, residual, ok = log_potential_batch(circular_model, zetas, QUAD, SolverConfig())
    assert ok.all()
    np.testing.assert_allclose(values, exact_disk_potential(zetas), atol=2e-3)
    assert np.all(residual <= SolverConfig().tol)


def test_quadrature_config_rejects_inverted_range():
    with pytest.raises(ValidationError):
        QuadratureConfig(eta_min=10.0, T_split=1.0)
    with pytest.raises(ValidationError):
        QuadratureConfig(nodes=4)


def test_potential_field_center_and_symmetry(twopoint_spec):
    model = discretize(twopoint_spec, 20)
    grid = GridSpec(re_min=-0.5, re_max=0.5, im_min=-0.5, im_max=0.5, h=0.25)
    field = potential_field(model, grid, QUAD)
    assert field.ok.all()
    assert field.quantity == "L"
    # real deformation: symmetric about the real axis
    np.testing.assert_allclose(field.values, field.values[::-1, :], atol=1e-9)
    assert field.meta["model_hash"] == model.model_hash


def test_potential_field_center_value(circular_model):
    grid = GridSpec(re_min=-0.05, re_max=0.05, im_min=-0.05, im_max=0.05, h=0.05)
    field = potential_field(circular_model, grid, QUAD)
    assert field.values[1, 1] == pytest.approx(0.5, abs=1e-3)


def test_potential_is_decreasing_outside_the_support(circular_model):
    grid = GridSpec(re_min=3.0, re_max=4.0, im_min=0.0, im_max=0.0, h=0.25)
    values = potential_field(circular_model, grid, QUAD).values[0]
    assert np.all(np.diff(values) < 0)
    np.testing.assert_allclose(values, -np.log(grid.re_axis), atol=2e-3)


def test_potential_field_is_independent_of_threads(circular_model):
    grid = GridSpec(re_min=-1.0, re_max=1.0, im_min=-0.5, im_max=0.5, h=0.5)
    one = potential_field(circular_model, grid, QUAD, threads=1)
    four = potential_field(circular_model, grid, QUAD, threads=4)
    np.testing.assert_array_equal(one.values, four.values)


# =====================================================================
# density
# =====================================================================

def _field(values, h=0.1) -> ScalarField:
    values = np.asarray(values, dtype=float)
    rows, cols = values.shape
    re = h * np.arange(cols)
    im = h * np.arange(rows)
    return ScalarField(re, im, values, np.ones(values.shape, dtype=bool), "L")


def test_density_of_constant_field_is_zero():
    sigma = density_from_L(_field(np.full((5, 6), 3.0)))
    assert sigma.quantity == "sigma"
    np.testing.assert_array_equal(sigma.values[sigma.ok], 0.0)
    assert not sigma.ok[0].any()
    assert total_mass(sigma) == 0.0


def test_density_of_quadratic_potential():
    # L = (1 - r^2)/2 has Laplacian -2, so sigma = 1/pi
    grid = GridSpec(re_min=-0.5, re_max=0.5, im_min=-0.5, im_max=0.5, h=0.1)
    r2 = np.abs(grid.points()) ** 2
    sigma = density_from_L(ScalarField.from_grid(grid, (1 - r2) / 2, quantity="L"))
    np.testing.assert_allclose(sigma.values[sigma.ok], 1 / np.pi, rtol=1e-9)


def test_density_of_exact_disk_potential_has_unit_mass():
    grid = GridSpec(re_min=-1.5, re_max=1.5, im_min=-1.5, im_max=1.5, h=0.02)
    L = ScalarField.from_grid(grid, exact_disk_potential(grid.points()), quantity="L")
    sigma = density_from_L(L)
    r = np.abs(sigma.points())
    assert total_mass(sigma) == pytest.approx(1.0, abs=0.02)
    np.testing.assert_allclose(sigma.values[sigma.ok & (r <= 0.8)], 1 / np.pi, atol=1e-6)
    np.testing.assert_allclose(sigma.values[sigma.ok & (r >= 1.2)], 0.0, atol=1e-3)


def test_total_mass_is_linear():
    grid = GridSpec(re_min=-0.5, re_max=0.5, im_min=-0.5, im_max=0.5, h=0.1)
    r2 = np.abs(grid.points()) ** 2
    sigma = density_from_L(ScalarField.from_grid(grid, (1 - r2) / 2, quantity="L"))
    doubled = sigma.with_values(2 * sigma.values, sigma.ok, "sigma")
    assert total_mass(doubled) == pytest.approx(2 * total_mass(sigma))


def test_small_negative_densities_are_clamped_and_large_ones_counted():
    h = 0.1
    grid = GridSpec(re_min=-0.5, re_max=0.5, im_min=-0.5, im_max=0.5, h=h)
    values = (1 - np.abs(grid.points()) ** 2) / 2
    # lowers the center so its density lands at -1e-4, inside the clamping band
    values[5, 5] -= (1 / np.pi + 1e-4) * np.pi * h ** 2 / 2
    values[2, 2] -= 1e-2
    sigma = density_from_L(ScalarField.from_grid(grid, values, quantity="L"))
    assert sigma.values[5, 5] == 0.0
    assert sigma.values[2, 2] < 0
    assert sigma.meta["negative_nodes"] == 1


def test_non_uniform_grid_is_a_domain_error():
    field = ScalarField(np.array([0.0, 0.1, 0.3]), np.array([0.0, 0.1, 0.2]), np.zeros((3, 3)),
                        np.ones((3, 3), dtype=bool), "L")
    with pytest.raises(DomainError):
        density_from_L(field)


@pytest.mark.slow
def test_circular_density_on_fine_grid():
    cfg = bundled("circular")
    grid = GridSpec(re_min=-1.5, re_max=1.5, im_min=-1.5, im_max=1.5, h=0.02)
    sigma = density_from_L(potential_field(discretize(cfg.model, 100), grid, cfg.quad, cfg.solver, threads=4))
    r = np.abs(sigma.points())
    assert total_mass(sigma) == pytest.approx(1.0, abs=0.02)
    np.testing.assert_allclose(sigma.values[sigma.ok & (r <= 0.8)], 1 / np.pi, atol=0.01)
    np.testing.assert_allclose(sigma.values[sigma.ok & (r >= 1.2)], 0.0, atol=0.005)
