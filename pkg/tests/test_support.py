import numpy as np
import pytest

from exceptions import DomainError
from profiles import ProfileSpec, discretize
from solvers.dyson import SolverConfig
from solvers.support import (
    SupportConfig,
    SupportRegion,
    dist_zero_support,
    hausdorff_to_disk,
    oracle_disk_mask,
    oracle_iid_mask,
    region_S_eps,
    rho_curve,
    rho_density,
    rho_mass,
    support_oracle_azero,
    support_oracle_iid,
)
from tests.conftest import bundled
from utils.fields import GridSpec, ScalarField, boundary_band

SUP = SupportConfig()
SOLVER = SolverConfig()
# coarse tau scan for the grid-wide regions
REGION_SUP = SupportConfig(tau_nodes=128, bisect_tol=1e-3)


# =====================================================================
# rho and dist
# =====================================================================

def test_semicircle_density_at_origin(circular_model):
    assert rho_density(circular_model, 0.0, 0.0) == pytest.approx(1 / np.pi, abs=5e-3)


def test_density_outside_the_semicircle(circular_model):
    assert rho_density(circular_model, 0.0, 3.0) <= 1e-2


def test_rho_curve_is_even_and_has_unit_mass(circular_model):
    taus = np.array([-1.0, -0.5, 0.5, 1.0])
    curve = rho_curve(circular_model, 0.0, taus, SUP, SOLVER)
    np.testing.assert_allclose(curve[:2], curve[:1:-1])
    np.testing.assert_allclose(curve, np.sqrt(4 - taus ** 2) / (2 * np.pi), atol=5e-3)
    assert rho_mass(circular_model, 0.0, SUP, SOLVER) == pytest.approx(1.0, abs=1e-2)


def test_dist_inside_the_disk_is_zero(circular_model):
    assert dist_zero_support(circular_model, 0.0) == 0.0
    assert dist_zero_support(circular_model, 0.5 + 0.5j) == 0.0


def test_dist_outside_the_disk_is_positive_and_grows(circular_model):
    near = dist_zero_support(circular_model, 1.5)
    far = dist_zero_support(circular_model, 3.0)
    assert near > 0
    assert far > near


def test_density_is_even_under_a_real_deformation(twopoint_spec):
    model = discretize(twopoint_spec, 20)
    taus = np.array([-1.3, -0.4, 0.4, 1.3])
    curve = rho_curve(model, 0.3 + 0.2j, taus, SUP, SOLVER)
    np.testing.assert_allclose(curve[:2], curve[:1:-1], atol=1e-6)
    assert rho_mass(model, 0.3 + 0.2j, SUP, SOLVER) == pytest.approx(1.0, abs=2e-2)


def test_scan_solver_loosens_and_caps():
    scan = SUP.scan_solver(SOLVER)
    assert scan.tol == SUP.scan_tol
    assert scan.max_iter == SUP.scan_max_iter
    assert scan.restarts == 0
    assert scan.continuation_steps == SUP.scan_continuation_steps
    # a looser solver keeps its own settings
    loose = SolverConfig(tol=1e-6, max_iter=500, continuation_steps=8)
    assert SUP.scan_solver(loose).tol == 1e-6
    assert SUP.scan_solver(loose).max_iter == 500
    assert SUP.scan_solver(loose).continuation_steps == 8


def test_dist_just_outside_the_edge_converges(circular_model):
    d = dist_zero_support(circular_model, 1.05)
    assert 0.0 < d < 0.2


def test_tau_max_default_covers_the_spectrum(block2_model):
    # |a| = 0, max row sum 1.5
    assert SUP.resolve_tau_max(block2_model, 1.0) == pytest.approx(2 * np.sqrt(1.5) + 2.0)
    assert SupportConfig(tau_max=5.0).resolve_tau_max(block2_model, 1.0) == 5.0


# =====================================================================
# S_eps
# =====================================================================

@pytest.fixture(scope="module")
def circular_region():
    spec = ProfileSpec(breakpoints=(0.0, 1.0), variance=((1.0,),), deformation_re=(0.0,))
    grid = GridSpec(re_min=-1.5, re_max=1.5, im_min=-1.5, im_max=1.5, h=0.25)
    return region_S_eps(discretize(spec, 40), grid, 0.0, REGION_SUP, SOLVER, threads=2)


def test_circular_region_matches_the_unit_disk(circular_region):
    field = circular_region.field
    # density solves at |zeta| = 1 may hit the scan cap and come back masked
    radius = np.abs(field.points())
    assert field.ok[(radius <= 0.9) | (radius >= 1.2)].all()
    assert field.ok.mean() >= 0.95
    assert field.quantity == "dist0"
    distance = hausdorff_to_disk(circular_region.mask, field.points(), 1.0)
    assert distance <= 2 * field.spacing()


def test_region_masks_are_monotone_in_eps(circular_region):
    small = circular_region.mask_for(0.0)
    large = circular_region.mask_for(0.2)
    assert np.all(large[small])
    assert large.sum() > small.sum()
    mask = circular_region.mask_field(0.2)
    assert mask.quantity == "s_eps_mask"
    np.testing.assert_array_equal(mask.values.astype(bool), large)


def test_region_contains_points(circular_region):
    inside = circular_region.contains(np.array([0.0, 0.3 - 0.2j, 1.4 + 1.4j, 5.0]), 0.0)
    np.testing.assert_array_equal(inside, [True, True, False, False])


def test_contains_uses_the_nearest_node_radius():
    grid = GridSpec(re_min=0.0, re_max=1.0, im_min=0.0, im_max=1.0, h=0.5)
    # h/sqrt(2) < 0.45 < h
    region = SupportRegion(ScalarField.from_grid(grid, np.full(grid.shape, 0.45), quantity="dist0"), 0.0)
    assert not region.contains([0.5 + 0.5j], 0.0)[0]
    assert region.contains([0.5 + 0.5j], 0.1)[0]
    near = SupportRegion(ScalarField.from_grid(grid, np.full(grid.shape, 0.3), quantity="dist0"), 0.0)
    assert near.contains([0.7 + 0.3j], 0.0)[0]


def test_negative_eps_is_a_domain_error(circular_model, circular_region):
    grid = GridSpec(re_min=0.0, re_max=0.0, im_min=0.0, im_max=0.0, h=0.1)
    with pytest.raises(DomainError):
        region_S_eps(circular_model, grid, -0.1)
    with pytest.raises(DomainError):
        circular_region.mask_for(-1.0)


# =====================================================================
# oracles
# =====================================================================

def test_iid_oracle_examples(circular_spec, twopoint_spec):
    assert support_oracle_iid(circular_spec, 1.0, 0.5)
    assert support_oracle_iid(twopoint_spec, 2.0, 0.0)
    assert not support_oracle_iid(twopoint_spec, 2.0, 2j)
    # zeta in the image of a is always a member
    assert support_oracle_iid(twopoint_spec, 2.0, 1.0)
    with pytest.raises(DomainError):
        support_oracle_iid(twopoint_spec, 0.0, 0.0)


def test_iid_oracle_mask_is_vectorized(twopoint_spec):
    zetas = np.array([[0.0, 2j], [1.0, 2.1]])
    np.testing.assert_array_equal(oracle_iid_mask(twopoint_spec, 2.0, zetas), [[True, False], [True, False]])


def test_zero_deformation_radius(circular_spec, block2_spec, twopoint_spec):
    assert support_oracle_azero(circular_spec) == pytest.approx(1.0)
    assert support_oracle_azero(block2_spec) == pytest.approx(np.sqrt(1.5))
    scaled = ProfileSpec(breakpoints=(0.0, 1.0), variance=((3.0,),), deformation_re=(0.0,))
    assert support_oracle_azero(scaled) == pytest.approx(np.sqrt(3.0))
    with pytest.raises(DomainError):
        support_oracle_azero(twopoint_spec)


def test_hausdorff_to_disk_of_the_disk_nodes_is_zero():
    points = GridSpec(re_min=-2.0, re_max=2.0, im_min=-2.0, im_max=2.0, h=0.1).points()
    assert hausdorff_to_disk(oracle_disk_mask(1.0, points), points, 1.0) == 0.0
    assert hausdorff_to_disk(oracle_disk_mask(1.3, points), points, 1.0) == pytest.approx(0.3, abs=0.1)
    assert hausdorff_to_disk(np.zeros(points.shape, dtype=bool), points, 1.0) == np.inf


@pytest.mark.slow
def test_twopoint_region_agrees_with_the_iid_oracle():
    cfg = bundled("twopoint")
    region = region_S_eps(discretize(cfg.model, cfg.n), cfg.grid, 0.0, cfg.support, cfg.solver, threads=4)
    points = region.field.points()
    oracle = oracle_iid_mask(cfg.model, 2.0, points)
    considered = region.field.ok & ~boundary_band(oracle, 2)
    agreement = (region.mask == oracle)[considered].mean()
    assert agreement >= 0.98


@pytest.mark.slow
def test_block2_region_matches_its_disk():
    cfg = bundled("block2")
    region = region_S_eps(discretize(cfg.model, cfg.n), cfg.grid, 0.0, cfg.support, cfg.solver, threads=4)
    h = region.field.spacing()
    assert hausdorff_to_disk(region.mask, region.field.points(), np.sqrt(1.5)) <= 2 * h
