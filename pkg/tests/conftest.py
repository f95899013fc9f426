import numpy as np
import pytest

import platelab as pl
from platelab.spectral import _scale


@pytest.fixture
def dom1():
    return pl.DomainSpec(1, 8, 16)


@pytest.fixture
def dom2():
    return pl.DomainSpec(2, 4, 8)


@pytest.fixture
def kernel():
    return pl.MemoryKernel.for_tail_fraction(1.0, 1.0, 1e-8)


def make_model(dom, kernel=None, damping=None, nonlinearity=None, forcing=None):
    return pl.Model(
        dom,
        kernel,
        damping or pl.DampingSpec.constant(1.0),
        nonlinearity or pl.NonlinearitySpec.zero(),
        forcing or pl.ForcingSpec.zero(),
    )


def unit_profile(dom, mode=1):
    """Single-mode field with plain L2 norm one."""
    return pl.SpectralField.single_mode(dom, mode, 1.0 / np.sqrt(_scale(dom)))


def random_field(dom, rng, scale=1.0):
    return pl.SpectralField(dom, scale * rng.standard_normal(dom.mode_shape))
