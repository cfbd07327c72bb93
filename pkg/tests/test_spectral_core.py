import math
import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from anderson_lab.errors import GridMismatch, RenormTailWarning
from anderson_lab.spectral_core import (
    AREA,
    LENGTH,
    Mollifier,
    SpectralField,
    TorusGrid,
    besov_norm,
    block_multipliers,
    build_enhanced,
    chi,
    dyadic_multiplier,
    enhanced_noise,
    greens,
    helmholtz,
    lp_block,
    max_block,
    mollify,
    product,
    renorm_constant,
    sample_white_noise,
    sobolev_norm,
    zero_noise,
)

from conftest import random_field

# Frozen output of a pure-Python double loop over -127..127 (see test below):
# Σ exp(-ε²|k|²)/(|k|²+1) at ε = 0.05 on the 256² grid.
RENORM_256_EPS005 = 17.084394099705236
# Σ 1/(|k|²+1) over |k| ≤ 20 (sharp cutoff at ε = 0.05).
RENORM_256_SHARP005 = 18.85577223818513


def test_grid_validation():
    with pytest.raises(ValueError):
        TorusGrid(7)
    with pytest.raises(ValueError):
        TorusGrid(2)
    g = TorusGrid(8)
    assert g.k1d.tolist() == [0, 1, 2, 3, -4, -3, -2, -1]
    assert g.resolved.sum() == 49


def test_constant_and_single_mode_conventions(grid16):
    c = SpectralField.constant(grid16, 3.0)
    assert c.coeffs[0, 0] == pytest.approx(2 * np.pi * 3.0)
    assert np.allclose(c.values(), 3.0)
    f = SpectralField.single_mode(grid16, 2, -1, 0.5)
    x = grid16.points
    expect = 2 * 0.5 * np.cos(2 * x[:, None] - x[None, :]) / LENGTH
    assert np.allclose(f.values(), expect, atol=1e-14)


@given(st.integers(0, 2**32))
@settings(max_examples=20, deadline=None)
def test_roundtrip_and_parseval(seed):
    grid = TorusGrid(12)
    rng = np.random.default_rng(seed)
    f = random_field(grid, rng)
    g = SpectralField.from_values(grid, f.values())
    assert np.allclose(g.coeffs, f.coeffs, atol=1e-12)
    l2_values = math.sqrt(np.sum(f.values() ** 2) * AREA / grid.n ** 2)
    assert f.l2_norm() == pytest.approx(l2_values, rel=1e-12)
    assert f.hermitian_defect() < 1e-12


def test_nyquist_is_zeroed_and_fields_are_read_only(grid16):
    c = np.ones((16, 16), complex)
    f = SpectralField(grid16, c)
    assert np.all(f.coeffs[8, :] == 0) and np.all(f.coeffs[:, 8] == 0)
    with pytest.raises(ValueError):
        f.coeffs[0, 0] = 1.0


def test_product_matches_pointwise_for_band_limited_fields(grid32):
    rng = np.random.default_rng(1)
    f = random_field(grid32, rng)
    g = random_field(grid32, rng)
    keep = grid32.kabs <= 7
    f = f.with_coeffs(np.where(keep, f.coeffs, 0))
    g = g.with_coeffs(np.where(keep, g.coeffs, 0))
    fg = product(f, g)
    assert np.allclose(fg.values(), f.values() * g.values(), atol=1e-12)
    assert (f * g).coeffs.tobytes() == fg.coeffs.tobytes()


def test_product_truncates_exact_convolution(grid16):
    rng = np.random.default_rng(2)
    f, g = random_field(grid16, rng), random_field(grid16, rng)
    fg = product(f, g)
    # direct convolution over the resolved modes -7..7, then truncation
    k = np.arange(-7, 8)
    a = f.coeffs[np.ix_(k % 16, k % 16)]
    b = g.coeffs[np.ix_(k % 16, k % 16)]
    from scipy.signal import convolve2d

    full = convolve2d(a, b) / LENGTH
    expect = full[7:22, 7:22]
    assert np.allclose(fg.coeffs[np.ix_(k % 16, k % 16)], expect, atol=1e-12)


def test_grid_mismatch(grid16, grid32):
    with pytest.raises(GridMismatch):
        SpectralField.zeros(grid16) + SpectralField.zeros(grid32)


def test_greens_inverts_helmholtz(grid16):
    f = random_field(grid16, np.random.default_rng(3))
    assert np.allclose(helmholtz(greens(f, 2.0), 2.0).coeffs, f.coeffs, atol=1e-12)


def test_mollifier_limits(grid16):
    ksq = grid16.ksq
    assert np.all(Mollifier(0.0).multiplier(ksq) == 1.0)
    assert np.all(Mollifier(math.inf).multiplier(ksq) == (ksq == 0))
    sharp = Mollifier(0.25, "sharp").multiplier(ksq)
    assert np.all(sharp == (ksq <= 16))
    f = random_field(grid16, np.random.default_rng(4))
    assert mollify(f, Mollifier(0.0)).coeffs.tobytes() == f.coeffs.tobytes()
    with pytest.raises(ValueError):
        Mollifier(-1.0)


def _renorm_oracle(eps: float, n: int, sharp: bool = False) -> float:
    terms = []
    for k1 in range(-(n // 2 - 1), n // 2):
        for k2 in range(-(n // 2 - 1), n // 2):
            q = k1 * k1 + k2 * k2
            if sharp:
                if q <= round(1.0 / eps) ** 2:
                    terms.append(1.0 / (q + 1.0))
            else:
                terms.append(math.exp(-eps * eps * q) / (q + 1.0))
    return math.fsum(terms)


def test_renorm_constant_frozen_oracle():
    grid = TorusGrid(256)
    with warnings.catch_warnings():
        warnings.simplefilter("error", RenormTailWarning)
        value = renorm_constant(Mollifier(0.05), grid)
    assert value == pytest.approx(RENORM_256_EPS005, rel=1e-13)
    assert renorm_constant(Mollifier(0.05, "sharp"), grid) == pytest.approx(RENORM_256_SHARP005, rel=1e-13)


def test_renorm_oracle_reproduces_frozen_values():
    assert _renorm_oracle(0.05, 256) == pytest.approx(RENORM_256_EPS005, rel=1e-14)
    assert _renorm_oracle(0.05, 256, sharp=True) == pytest.approx(RENORM_256_SHARP005, rel=1e-14)


def test_renorm_warns_when_grid_too_coarse():
    with pytest.warns(RenormTailWarning):
        renorm_constant(Mollifier(0.05), TorusGrid(32))


def test_renorm_grows_logarithmically():
    grid = TorusGrid(512)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RenormTailWarning)
        c = [renorm_constant(Mollifier(e), grid) / AREA for e in (0.1, 0.05, 0.025)]
    # c_ε ≈ (1/2π) log(1/ε) + const: halving adds log(2)/2π, approached from below
    steps = np.diff(c)
    assert np.all(steps == pytest.approx(math.log(2) / (2 * math.pi), rel=0.03))
    assert steps[1] > steps[0]


def test_white_noise_statistics():
    grid = TorusGrid(16)
    samples = np.stack([sample_white_noise(grid, 8, i).coeffs for i in range(2000)])
    mask = grid.resolved
    var = np.mean(np.abs(samples[:, mask]) ** 2, axis=0)
    assert abs(var.mean() - 1.0) < 0.01
    assert np.all(np.abs(var - 1.0) < 0.2)
    assert sample_white_noise(grid, 8, 3).hermitian_defect() < 1e-12


def test_enhanced_noise_counterterm_and_zero_noise(grid32, moll):
    nz = enhanced_noise(grid32, 1, moll)
    assert nz.c_eps == pytest.approx(nz.trace / AREA)
    z = zero_noise(grid32, moll)
    assert z.trace == 0.0 and z.xi2_eps.l2_norm() == 0.0
    zc = zero_noise(grid32, moll, counterterm=True)
    assert zc.xi2_eps.values() == pytest.approx(-zc.c_eps * np.ones((32, 32)))
    again = build_enhanced(nz.xi, moll)
    assert again.xi2_eps.coeffs.tobytes() == nz.xi2_eps.coeffs.tobytes()


def test_chi_and_partition_of_unity():
    r = np.linspace(0, 3, 301)
    c = chi(r)
    assert np.all(c[r <= 0.75] == 1.0) and np.all(c[r >= 1.0] == 0.0)
    assert np.all(np.diff(c) <= 0)
    assert dyadic_multiplier(0, np.array([1.0]))[0] == pytest.approx(1.0)
    for n in (8, 16, 64):
        mults = block_multipliers(n)
        grid = TorusGrid(n)
        total = mults.sum(0)
        assert np.allclose(total[grid.resolved], 1.0, atol=1e-15)
        assert len(mults) == max_block(grid) + 2


def test_lp_blocks_sum_to_field(grid32):
    f = random_field(grid32, np.random.default_rng(5))
    total = SpectralField.zeros(grid32)
    for j in range(-1, max_block(grid32) + 1):
        total = total + lp_block(f, j)
    assert np.allclose(total.coeffs, f.coeffs, atol=1e-13)
    assert lp_block(f, 40).l2_norm() == 0.0


@given(st.integers(0, 2**32), st.floats(-1.5, 1.5))
@settings(max_examples=25, deadline=None)
def test_besov_l2_equivalent_to_sobolev(seed, s):
    grid = TorusGrid(32)
    f = random_field(grid, np.random.default_rng(seed))
    b, h = besov_norm(f, s, 2, 2), sobolev_norm(f, s)
    bound = 2.0 ** abs(s) * math.sqrt(2.0) * 1.01
    assert h / bound <= b <= h * bound


def test_besov_inf_of_constant(grid16):
    f = SpectralField.constant(grid16, 2.0)
    assert besov_norm(f, -0.3, np.inf, np.inf) == pytest.approx(2.0 * 2 ** 0.3)
