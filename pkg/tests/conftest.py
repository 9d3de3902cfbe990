"""Shared fixtures: cached kernels for d = 2 and d = 3."""

import math

import numpy as np
import pytest

from hardedge.services.kernels import SpectralKernel, load_kernel


@pytest.fixture(scope="session")
def kernel2() -> SpectralKernel:
    return load_kernel(2.0)


@pytest.fixture(scope="session")
def kernel3() -> SpectralKernel:
    return load_kernel(3.0)


def _sine_kernel(x, y, t, terms=200):
    """Dirichlet heat kernel of Brownian motion on (0, 1)."""

    k = np.arange(1, terms + 1, dtype=float).reshape((-1,) + (1,) * np.ndim(x))
    return 2.0 * np.sum(np.sin(k * math.pi * x) * np.sin(k * math.pi * y) * np.exp(-0.5 * (k * math.pi) ** 2 * t), axis=0)


@pytest.fixture(scope="session")
def sine_kernel():
    return _sine_kernel
