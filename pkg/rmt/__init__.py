"""Sampled random matrices and identity probes"""
from .sampling import ESD, MatrixSample, SampleConfig, eigenvalues, hermitize, pseudospectrum_grid, sample, smin

__all__ = ["ESD", "MatrixSample", "SampleConfig", "eigenvalues", "hermitize", "pseudospectrum_grid", "sample", "smin"]
