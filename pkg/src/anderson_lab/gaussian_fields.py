"""Gaussian free fields, the Anderson GFF, their coupling, and Wick powers.

Samples are real fields. On a grid they are :class:`SpectralField` objects;
on an operator basis they are Fourier coefficient vectors over ``S.basis``
(see :mod:`anderson_lab.anderson_operator`). The GFF with mass ``K`` has
covariance ``(K − Δ)^{-1}``; the Anderson GFF has covariance
``(H^{ω,K})^{-1}`` with eigenvalues ``λ_n + K + 1``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .anderson_operator import SpectralData, basis_to_field, real_basis_transform
from .rng import stream
from .spectral_core import (
    AREA,
    LENGTH,
    Mollifier,
    SpectralField,
    TorusGrid,
    block_coeffs,
    block_multipliers,
    forward_transform,
    inverse_transform,
    sample_white_noise,
)


def sample_gff(grid: TorusGrid, K: float, seed: int, index: int = 0) -> SpectralField:
    """GFF with mass ``K``: white-noise coefficients divided by ``√(|k|²+K)``."""
    if not K > 0:
        raise ValueError("the mass K must be positive")
    xi = sample_white_noise(grid, seed, index)
    return xi.with_coeffs(xi.coeffs / np.sqrt(grid.ksq + K), role="gff")


def _real_transform(s: SpectralData) -> np.ndarray:
    u = s._cache.get("real_transform")
    if u is None:
        u = s._cache["real_transform"] = real_basis_transform(s.basis)
    return u


def basis_white_noise(s: SpectralData, seed: int, index: int = 0) -> np.ndarray:
    """White noise restricted to the basis modes, as a Fourier vector."""
    g = stream(seed, index).standard_normal(s.size)
    return _real_transform(s) @ g


def sample_agff_coords(s: SpectralData, seed: int, index: int = 0) -> np.ndarray:
    """Eigen-coordinates ``g_n/√(λ_n+K+1)`` of an Anderson GFF draw."""
    return stream(seed, index).standard_normal(s.size) / np.sqrt(s.shifted)


def sample_agff(s: SpectralData, seed: int, index: int = 0) -> SpectralField:
    """``Σ_n g_n (λ_n+K+1)^{-1/2} f_n`` on the operator's grid."""
    v = s.synthesize(sample_agff_coords(s, seed, index))
    return basis_to_field(s.basis, v, s.grid, "agff")


@dataclass(frozen=True, eq=False)
class CoupledPair:
    """GFF and Anderson GFF built from one white-noise draw ``ψ``.

    ``phi_G = (−Δ+K+1)^{-1/2}ψ`` and ``phi_A = (H^{ω,K})^{-1/2}ψ`` with the same
    ``K``; ``phi_A`` is stored as ``phi_G + h`` so the decomposition is exact.
    """

    psi: np.ndarray
    phi_G: SpectralField
    phi_A: SpectralField
    h: SpectralField
    seed: int
    index: int
    mass: float
    basis: np.ndarray

    @property
    def grid(self) -> TorusGrid:
        return self.phi_G.grid


def coupled_vectors(s: SpectralData, psi: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Basis vectors of ``(φ^G, φ^A)`` for white-noise vectors ``psi`` (last axis)."""
    mass = s.shift_K + s.mass
    phi_g = psi / np.sqrt(s.basis_ksq + mass)
    coef = psi @ s.eigenvectors.conj()
    phi_a = (coef / np.sqrt(s.shifted)) @ s.eigenvectors.T
    return phi_g, phi_a


def coupled_sample(s: SpectralData, seed: int, index: int = 0) -> CoupledPair:
    """Push one white-noise draw through both inverse square roots."""
    psi = basis_white_noise(s, seed, index)
    phi_g, phi_a = coupled_vectors(s, psi)
    g = basis_to_field(s.basis, phi_g, s.grid, "phi_G")
    h = basis_to_field(s.basis, phi_a - phi_g, s.grid, "h")
    a = (g + h).with_coeffs((g + h).coeffs, role="phi_A")
    return CoupledPair(psi, g, a, h, seed, index, s.shift_K + s.mass, s.basis)


# --------------------------------------------------------------------------
# Hermite polynomials and Wick powers


def hermite(n: int, x):
    """Probabilists' Hermite polynomial ``H_n(x)`` by the three-term recurrence."""
    if n < 0:
        raise ValueError("degree must be non-negative")
    x = np.asarray(x, float)
    h_prev, h = np.ones_like(x), x.copy()
    if n == 0:
        return h_prev if h_prev.ndim else float(h_prev)
    for k in range(1, n):
        h_prev, h = h, x * h - k * h_prev
    return h if h.ndim else float(h)


def wick_polynomial(n: int, x, c):
    """``c^{n/2} H_n(x/√c)``, written without dividing by ``c``.

    Uses ``P_{k+1} = x P_k − k c P_{k−1}``, so ``c = 0`` gives plain powers.
    """
    x = np.asarray(x, float)
    p_prev, p = np.ones_like(x), x.copy()
    if n == 0:
        return p_prev
    for k in range(1, n):
        p_prev, p = p, x * p - k * c * p_prev
    return p


def gff_wick_constant(m: Mollifier, grid: TorusGrid, K: float) -> float:
    """Pointwise variance ``(4π²)^{-1} Σ_k ρ̂_ε(k)²/(|k|²+K)`` over resolved modes."""
    ksq = grid.ksq[grid.resolved]
    rho = m.multiplier(ksq)
    return math.fsum(np.sort(rho * rho / (ksq + K))) / AREA


def basis_wick_constant(m: Mollifier, s: SpectralData) -> float:
    """GFF variance with mass ``K+1`` restricted to the operator basis."""
    ksq = s.basis_ksq
    rho = m.multiplier(ksq)
    return math.fsum(np.sort(rho * rho / (ksq + s.shift_K + s.mass))) / AREA


@dataclass(frozen=True, eq=False)
class WickField:
    """A Wick power ``:φ_ε^M:`` evaluated pointwise on the grid.

    ``constant`` is the scalar Wick constant (GFF case) or the variance
    profile on the grid (Anderson case). ``value`` holds the grid values
    transformed back to coefficients.
    """

    base: SpectralField
    order: int
    epsilon: float
    constant: float | np.ndarray
    value: SpectralField

    def values(self) -> np.ndarray:
        return self.value.values()

    def integral(self) -> float:
        return float(self.value.coeffs[0, 0].real * LENGTH)


def _mollified_values(f: SpectralField, m: Mollifier) -> np.ndarray:
    return inverse_transform(f.coeffs * m.multiplier(f.grid.ksq)).real


def wick_power_gff(field: SpectralField, order: int, m: Mollifier, K: float) -> WickField:
    """``c^{M/2} H_M(φ_ε/√c)`` with ``c`` the resolved GFF variance of mass ``K``."""
    c = gff_wick_constant(m, field.grid, K)
    vals = wick_polynomial(order, _mollified_values(field, m), c)
    value = SpectralField(field.grid, forward_transform(vals), True, f"wick{order}")
    return WickField(field, order, m.epsilon, c, value)


@dataclass(frozen=True, eq=False)
class PseudoWick:
    """Both evaluations of a pseudo-Wick power of the Anderson GFF."""

    direct: WickField
    binomial: WickField

    def max_discrepancy(self) -> float:
        return float(np.max(np.abs(self.direct.values() - self.binomial.values())))


def pseudo_wick_agff(pair: CoupledPair, order: int, m: Mollifier, K: float | None = None) -> PseudoWick:
    """Pseudo-Wick power of ``φ^A`` with the GFF constant.

    Route (i) evaluates ``c^{M/2} H_M(φ^A_ε/√c)`` directly; route (ii) sums
    ``Σ_k C(M,k) :(φ^G_ε)^k: h_ε^{M−k}``. ``c`` is the variance of the
    mollified ``φ^G`` on the basis modes; ``K`` defaults to the mass used by
    the pair.
    """
    mass = pair.mass if K is None else K
    grid = pair.grid
    ksq = (pair.basis ** 2).sum(1).astype(float)
    rho = m.multiplier(ksq)
    c = math.fsum(np.sort(rho * rho / (ksq + mass))) / AREA
    a = _mollified_values(pair.phi_A, m)
    g = _mollified_values(pair.phi_G, m)
    h = _mollified_values(pair.h, m)
    direct_vals = wick_polynomial(order, a, c)
    binom_vals = np.zeros_like(direct_vals)
    for k in range(order + 1):
        binom_vals += math.comb(order, k) * wick_polynomial(k, g, c) * h ** (order - k)
    direct = WickField(pair.phi_A, order, m.epsilon, c,
                       SpectralField(grid, forward_transform(direct_vals), True, "pseudo_wick"))
    binom = WickField(pair.phi_A, order, m.epsilon, c,
                      SpectralField(grid, forward_transform(binom_vals), True, "pseudo_wick"))
    return PseudoWick(direct, binom)


# --------------------------------------------------------------------------
# diagnostics


def mollified_eigenfunction_values(s: SpectralData, m: Mollifier, n_modes: int | None = None) -> np.ndarray:
    """Values of ``ρ_ε ∗ f_n`` on ``s.grid``, shape ``(n_modes, n, n)``."""
    n_modes = s.size if n_modes is None else n_modes
    grid = s.grid
    rho = m.multiplier(s.basis_ksq)
    c = np.zeros((n_modes, grid.n, grid.n), complex)
    c[:, s.basis[:, 0] % grid.n, s.basis[:, 1] % grid.n] = (s.eigenvectors[:, :n_modes] * rho[:, None]).T
    return inverse_transform(c).real


@dataclass(frozen=True)
class WickProfile:
    """Pointwise ``E[(φ^A_ε)²] − c`` by Monte Carlo and by the eigen-sum."""

    monte_carlo: np.ndarray
    exact: np.ndarray
    std_error: np.ndarray
    constant: float
    n_samples: int


def wick_comparison_profile(s: SpectralData, m: Mollifier, samples: int, seed: int = 0,
                            batch: int = 500) -> WickProfile:
    """Profile of the difference between Anderson and GFF Wick constants."""
    if samples < 2:
        raise ValueError("need at least two samples")
    fvals = mollified_eigenfunction_values(s, m)
    flat = fvals.reshape(s.size, -1)
    exact = np.sum(flat ** 2 / s.shifted[:, None], axis=0)
    c = basis_wick_constant(m, s)
    total = np.zeros(flat.shape[1])
    total_sq = np.zeros(flat.shape[1])
    for start in range(0, samples, batch):
        idx = range(start, min(start + batch, samples))
        coords = np.stack([sample_agff_coords(s, seed, i) for i in idx])
        sq = (coords @ flat) ** 2
        total += sq.sum(0)
        total_sq += (sq ** 2).sum(0)
    mean = total / samples
    var = (total_sq / samples - mean ** 2) * samples / (samples - 1)
    shape = fvals.shape[1:]
    return WickProfile((mean - c).reshape(shape), (exact - c).reshape(shape),
                       np.sqrt(np.maximum(var, 0.0) / samples).reshape(shape), c, samples)


@dataclass(frozen=True)
class ShiftProfile:
    """Dyadic energies of ``h`` with partial sums and a fitted tail slope.

    ``slope`` is the least-squares slope of ``log2`` energy against ``j`` over
    ``tail_blocks``, the complete blocks (support inside the basis disk) with
    ``j ≥ 1``.
    """

    blocks: np.ndarray
    energies: np.ndarray
    partial_sums: np.ndarray
    slope: float
    tail_blocks: np.ndarray


def shift_regularity_profile(pair: CoupledPair, alpha: float) -> ShiftProfile:
    """Rows ``(j, 2^{2αj}‖Δ_j h‖²)`` for the coupling shift."""
    grid = pair.grid
    mults = block_multipliers(grid.n)
    blocks = np.arange(-1, len(mults) - 1)
    energy = np.sum(np.abs(pair.h.coeffs[None] * mults) ** 2, axis=(1, 2))
    weighted = 2.0 ** (2 * alpha * blocks) * energy
    k_max = float(np.sqrt((pair.basis ** 2).sum(1).max()))
    complete = blocks[(2.0 ** (blocks + 1) <= k_max) & (blocks >= 1)]
    slope = float("nan")
    if len(complete) >= 2 and np.all(weighted[complete + 1] > 0):
        slope = float(np.polyfit(complete, np.log2(weighted[complete + 1]), 1)[0])
    return ShiftProfile(blocks, weighted, np.cumsum(weighted), slope, complete)


ENERGY_FLOOR = 1e-20


@dataclass(frozen=True)
class ScaleCorrelation:
    """Normalized cross-correlations ``r[j, i]`` between ``Δ_j φ^G`` and ``Δ_i h``.

    ``r[j, i] = E⟨Δ_j φ^G, Δ_i h⟩ / sqrt(E‖Δ_j φ^G‖² E‖Δ_i h‖²)`` over the
    ensemble, with ``0`` where a block carries no energy above
    ``ENERGY_FLOOR`` times the largest block energy. ``se`` holds the
    Monte Carlo standard errors of the numerators, normalized the same way
    (``nan`` for a single sample wherever ``r`` is defined).
    Nothing is asserted about the sign or size of the entries.
    """

    blocks: np.ndarray
    r: np.ndarray
    se: np.ndarray
    samples: int

    def upper(self) -> np.ndarray:
        """Entries with ``j > i``, the pairs of interest for scale separation."""
        j, i = np.tril_indices(len(self.blocks), -1)
        return self.r[j, i]


def scale_cross_correlation(pairs) -> ScaleCorrelation:
    """Scale-to-scale cross-correlation diagnostic of the coupling shift.

    ``pairs`` is any iterable of :class:`CoupledPair`; it is consumed once and
    only running sums are kept.
    """
    count, mults = 0, None
    for p in pairs:
        if mults is None:
            mults = block_multipliers(p.grid.n)
            inner_sum = np.zeros((len(mults), len(mults)))
            inner_sq = np.zeros_like(inner_sum)
            eg = np.zeros(len(mults))
            eh = np.zeros(len(mults))
        g = block_coeffs(p.phi_G.coeffs)
        h = block_coeffs(p.h.coeffs)
        inner = np.einsum("jab,iab->ji", g, h.conj()).real
        inner_sum += inner
        inner_sq += inner ** 2
        eg += np.sum(np.abs(g) ** 2, axis=(-2, -1))
        eh += np.sum(np.abs(h) ** 2, axis=(-2, -1))
        count += 1
    if count == 0:
        raise ValueError("need at least one coupled pair")
    num = inner_sum / count
    var = np.maximum(inner_sq / count - num ** 2, 0.0) * count / max(count - 1, 1)
    if count == 1:
        var = np.full_like(var, np.nan)
    # blocks at rounding level (for instance h of a zero-noise operator) count as empty
    floor = ENERGY_FLOOR * max(eg.max(), eh.max())
    eg = np.where(eg > floor, eg, 0.0)
    eh = np.where(eh > floor, eh, 0.0)
    den = np.sqrt(np.outer(eg, eh)) / count
    safe = np.where(den > 0, den, 1.0)
    r = np.where(den > 0, num / safe, 0.0)
    se = np.where(den > 0, np.sqrt(var / count) / safe, 0.0)
    return ScaleCorrelation(np.arange(-1, len(mults) - 1), r, se, count)
