"""Variance/deformation profiles and their discretization"""
from .profile_spec import (
    BlockPartition,
    DiscretizedModel,
    ProfileSpec,
    ValidationReport,
    Violation,
    block_labels,
    discretize,
    is_primitive,
    model_hash,
    reduced_variance_matrix,
    spectral_radius,
    sup_norm_variance,
    validate,
)

__all__ = [
    "BlockPartition",
    "DiscretizedModel",
    "ProfileSpec",
    "ValidationReport",
    "Violation",
    "block_labels",
    "discretize",
    "is_primitive",
    "model_hash",
    "reduced_variance_matrix",
    "spectral_radius",
    "sup_norm_variance",
    "validate",
]
