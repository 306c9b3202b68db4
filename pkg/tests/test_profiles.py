import numpy as np
import pytest
from pydantic import ValidationError

from exceptions import BlockUnresolved, DomainError
from profiles import (
    DiscretizedModel,
    ProfileSpec,
    block_labels,
    discretize,
    is_primitive,
    model_hash,
    reduced_variance_matrix,
    spectral_radius,
    sup_norm_variance,
    validate,
)


def spec(breakpoints, variance, a, **kwargs) -> ProfileSpec:
    return ProfileSpec(breakpoints=breakpoints, variance=variance, deformation_re=a, **kwargs)


# =====================================================================
# validate
# =====================================================================

def test_single_positive_block_is_valid():
    report = validate(spec((0.0, 1.0), ((1.0,),), (0.0,)))
    assert report.valid
    assert report.codes == []


def test_block_diagonal_profile_is_not_primitive():
    report = validate(spec((0.0, 0.5, 1.0), ((1.0, 0.0), (0.0, 1.0)), (0.0, 0.0)))
    assert not report.valid
    assert "NotPrimitive" in report.codes


def test_two_block_profile_with_large_lower_bound_is_valid():
    report = validate(spec((0.0, 0.5, 1.0), ((1.0, 2.0), (2.0, 1.0)), (0.0, 0.0), c_bound=0.5))
    assert report.valid


def test_band_profile_with_zero_corners_is_valid():
    band = spec((0.0, 0.25, 0.75, 1.0), ((1, 1, 0), (1, 1, 1), (0, 1, 1)), (0.0, 0.0, 0.0))
    assert validate(band).valid


@pytest.mark.parametrize(
    "variance, a, kwargs, code",
    [
        (((-1.0,),), (0.0,), {}, "NegativeVariance"),
        (((200.0,),), (0.0,), {}, "VarianceUpperBound"),
        (((1.0, 0.001), (1.0, 1.0)), (0.0, 0.0), {}, "VarianceLowerBound"),
        (((0.0, 1.0), (1.0, 1.0)), (0.0, 0.0), {}, "ZeroDiagonalBlock"),
        (((1.0,),), (500.0,), {}, "DeformationUpperBound"),
        (((1.0,),), (0.0,), {"holder_theta": 0.5}, "HolderExponent"),
    ],
)
def test_each_violation_is_reported(variance, a, kwargs, code):
    breakpoints = (0.0, 1.0) if len(variance) == 1 else (0.0, 0.5, 1.0)
    report = validate(spec(breakpoints, variance, a, **kwargs))
    assert code in report.codes
    assert report.to_dict()["valid"] is False


def test_structural_errors_are_rejected_at_construction():
    with pytest.raises(ValidationError):
        spec((0.0, 0.5), ((1.0,),), (0.0,))
    with pytest.raises(ValidationError):
        spec((0.0, 0.6, 0.4, 1.0), ((1,) * 3,) * 3, (0.0,) * 3)
    with pytest.raises(ValidationError):
        spec((0.0, 0.5, 1.0), ((1.0, 1.0),), (0.0, 0.0))
    with pytest.raises(ValidationError):
        spec((0.0, 1.0), ((1.0,),), (0.0, 1.0))


def test_is_primitive_needs_a_positive_power():
    assert is_primitive(np.array([[1, 1], [1, 0]]))
    assert not is_primitive(np.array([[0, 1], [1, 0]]))
    assert not is_primitive(np.eye(3))


# =====================================================================
# discretize
# =====================================================================

def test_constant_profile_discretizes_to_uniform_matrix():
    model = discretize(spec((0.0, 1.0), ((1.0,),), (0.0,)), 4)
    np.testing.assert_array_equal(model.S, np.full((4, 4), 0.25))
    np.testing.assert_array_equal(model.a, np.zeros(4))


def test_breakpoint_belongs_to_the_left_block():
    model = discretize(spec((0.0, 0.5, 1.0), ((1.0, 1.0), (1.0, 1.0)), (1.0, -1.0)), 4)
    np.testing.assert_array_equal(model.a, [1, 1, -1, -1])
    np.testing.assert_array_equal(model.block_sizes, [2, 2])


def test_two_block_matrix_at_n_two():
    model = discretize(spec((0.0, 0.5, 1.0), ((1.0, 2.0), (2.0, 1.0)), (0.0, 0.0)), 2)
    np.testing.assert_allclose(model.S, [[0.5, 1.0], [1.0, 0.5]])


def test_complex_deformation_is_carried():
    s = ProfileSpec(breakpoints=(0.0, 1.0), variance=((1.0,),), deformation_re=(0.5,), deformation_im=(-0.25,))
    model = discretize(s, 3)
    np.testing.assert_array_equal(model.a, np.full(3, 0.5 - 0.25j))


def test_too_coarse_discretization_raises():
    three = spec((0.0, 0.55, 0.6, 1.0), ((1,) * 3,) * 3, (0.0,) * 3)
    with pytest.raises(BlockUnresolved):
        discretize(three, 2)
    # n >= K but the middle block (0.55, 0.6] holds no point i/4
    with pytest.raises(BlockUnresolved):
        discretize(three, 4)


def test_block_labels_and_hash_are_stable():
    s = spec((0.0, 0.25, 0.75, 1.0), ((1, 1, 0), (1, 1, 1), (0, 1, 1)), (0.0, 0.0, 0.0))
    np.testing.assert_array_equal(np.bincount(block_labels(s, 100)), [25, 50, 25])
    assert model_hash(s, 100) == model_hash(s, 100)
    assert model_hash(s, 100) != model_hash(s, 200)
    assert discretize(s, 100).model_hash == model_hash(s, 100)


def test_from_arrays_checks_shape():
    with pytest.raises(DomainError):
        DiscretizedModel.from_arrays(np.zeros((2, 3)), np.zeros(2))
    model = DiscretizedModel.from_arrays(np.zeros((3, 3)), np.array([1.0, 2.0, 3.0]))
    np.testing.assert_array_equal(model.labels, [0, 1, 2])


# =====================================================================
# reduced matrix and spectral radius
# =====================================================================

def test_reduced_variance_matrix():
    np.testing.assert_allclose(reduced_variance_matrix(spec((0.0, 1.0), ((3.0,),), (0.0,))), [[3.0]])
    np.testing.assert_allclose(
        reduced_variance_matrix(spec((0.0, 0.5, 1.0), ((1.0, 2.0), (2.0, 1.0)), (0.0, 0.0))),
        [[0.5, 1.0], [1.0, 0.5]],
    )
    np.testing.assert_allclose(
        reduced_variance_matrix(spec((0.0, 0.25, 1.0), ((1.0, 1.0), (1.0, 1.0)), (0.0, 0.0))),
        [[0.25, 0.75], [0.25, 0.75]],
    )


def test_sup_norm_variance_is_max_row_sum():
    assert sup_norm_variance(spec((0.0, 0.5, 1.0), ((1.0, 2.0), (2.0, 1.0)), (0.0, 0.0))) == pytest.approx(1.5)


@pytest.mark.parametrize(
    "matrix, expected",
    [
        ([[1.0]], 1.0),
        ([[0.5, 1.0], [1.0, 0.5]], 1.5),
        (np.eye(3), 1.0),
        ([[0.0, 1.0], [1.0, 0.0]], 1.0),
        ([[2.0, 0.0], [0.0, 1.0]], 2.0),
    ],
)
def test_spectral_radius(matrix, expected):
    assert spectral_radius(np.asarray(matrix)) == pytest.approx(expected, rel=1e-8)


def test_spectral_radius_matches_dense_eigenvalues():
    rng = np.random.default_rng(3)
    m = rng.uniform(0, 1, size=(6, 6))
    assert spectral_radius(m) == pytest.approx(np.abs(np.linalg.eigvals(m)).max(), rel=1e-8)


def test_spectral_radius_rejects_bad_input():
    with pytest.raises(DomainError):
        spectral_radius(np.ones((2, 3)))
    with pytest.raises(DomainError):
        spectral_radius(np.array([[1.0, -1.0], [0.0, 1.0]]))


def test_spectral_radius_is_invariant_under_permutation_and_scales_linearly():
    rng = np.random.default_rng(11)
    m = rng.uniform(0, 1, size=(5, 5))
    perm = rng.permutation(5)
    radius = spectral_radius(m)
    assert spectral_radius(m[np.ix_(perm, perm)]) == pytest.approx(radius, rel=1e-8)
    assert spectral_radius(3.5 * m) == pytest.approx(3.5 * radius, rel=1e-8)
