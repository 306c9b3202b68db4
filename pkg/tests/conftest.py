"""Shared fixtures: bundled specs and small discretized models"""
from pathlib import Path

import numpy as np
import pytest

from config import load_run_config
from profiles import ProfileSpec, discretize

CONFIG_DIR = Path(__file__).resolve().parent.parent / "configs"

GOLDEN = (np.sqrt(5.0) - 1.0) / 2.0


def bundled(name: str, **overrides):
    return load_run_config(CONFIG_DIR / f"{name}.cfg", overrides or None)


@pytest.fixture
def circular_spec() -> ProfileSpec:
    return ProfileSpec(breakpoints=(0.0, 1.0), variance=((1.0,),), deformation_re=(0.0,))


@pytest.fixture
def block2_spec() -> ProfileSpec:
    return ProfileSpec(breakpoints=(0.0, 0.5, 1.0), variance=((1.0, 2.0), (2.0, 1.0)), deformation_re=(0.0, 0.0))


@pytest.fixture
def twopoint_spec() -> ProfileSpec:
    return ProfileSpec(breakpoints=(0.0, 0.5, 1.0), variance=((2.0, 2.0), (2.0, 2.0)), deformation_re=(-1.0, 1.0))


@pytest.fixture
def circular_model(circular_spec):
    return discretize(circular_spec, 40)


@pytest.fixture
def block2_model(block2_spec):
    return discretize(block2_spec, 40)


@pytest.fixture
def out_dir(tmp_path) -> Path:
    return tmp_path / "out"
