import numpy as np
import pytest

from anderson_lab.anderson_operator import build_operator
from anderson_lab.spectral_core import Mollifier, SpectralField, TorusGrid, enhanced_noise


def random_field(grid: TorusGrid, rng: np.random.Generator, decay: float = 0.0) -> SpectralField:
    """Real field with i.i.d. grid values, optionally smoothed by ``(1+|k|²)^{-decay/2}``."""
    f = SpectralField.from_values(grid, rng.standard_normal((grid.n, grid.n)))
    if decay:
        f = f.with_coeffs(f.coeffs * (1.0 + grid.ksq) ** (-decay / 2))
    return f


@pytest.fixture(scope="session")
def grid16():
    return TorusGrid(16)


@pytest.fixture(scope="session")
def grid32():
    return TorusGrid(32)


@pytest.fixture(scope="session")
def moll():
    return Mollifier(0.2)


@pytest.fixture(scope="session")
def noise32(grid32, moll):
    return enhanced_noise(grid32, 11, moll)


@pytest.fixture(scope="session")
def small_op():
    """Operator with ``k_max = 6`` on a 28-grid (85 modes)."""
    return build_operator(enhanced_noise(TorusGrid(28), 3, Mollifier(0.2)), 6)


@pytest.fixture(scope="session")
def op12():
    """Operator with ``k_max = 12`` on a 52-grid."""
    return build_operator(enhanced_noise(TorusGrid(52), 2024, Mollifier(0.2)), 12)
