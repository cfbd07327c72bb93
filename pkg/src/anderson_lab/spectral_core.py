"""Fourier infrastructure on the discrete two-torus.

Conventions
-----------
The torus is ``[0, 2π)²`` with area ``4π²``. Fields are stored through their
coefficients against the orthonormal basis ``e_k(x) = exp(i k·x) / (2π)``::

    f(x) = (1/2π) Σ_k f̂(k) exp(i k·x),        ∫ |f|² dx = Σ_k |f̂(k)|²,

so ``−Δ`` is multiplication by ``|k|²`` and spatial white noise has i.i.d.
unit-variance coefficients. Coefficient arrays are ``(n, n)`` complex arrays in
numpy FFT ordering. The Nyquist row and column (``|k1| = n/2`` or
``|k2| = n/2``) are always zero, which keeps every real field exactly
Hermitian at the cost of one resolved shell.

Products are evaluated on a zero-padded grid (3/2 rule), so the quadratic
products below are free of aliasing on the kept modes.
"""

from __future__ import annotations

import functools
import math
import warnings
from dataclasses import dataclass, field as dc_field
from functools import cached_property

import numpy as np
from scipy import integrate

from .errors import GridMismatch, RenormTailWarning
from .rng import stream

LENGTH = 2.0 * np.pi
AREA = LENGTH * LENGTH

# the smooth bump equals one on [0, CHI_INNER] and vanishes beyond CHI_OUTER
CHI_INNER = 0.75
CHI_OUTER = 1.0


# --------------------------------------------------------------------------
# grids and fields


@dataclass(frozen=True)
class TorusGrid:
    """Square grid with ``n_per_dim`` points per side.

    Parameters
    ----------
    n_per_dim : int
        Even number of grid points per dimension, at least 4.
    """

    n_per_dim: int

    def __post_init__(self):
        n = self.n_per_dim
        if int(n) != n or n < 4 or n % 2:
            raise ValueError(f"n_per_dim must be an even integer >= 4, got {n!r}")
        object.__setattr__(self, "n_per_dim", int(n))

    @property
    def n(self) -> int:
        return self.n_per_dim

    @cached_property
    def k1d(self) -> np.ndarray:
        """Signed wavenumbers along one axis in FFT order."""
        return np.fft.fftfreq(self.n, 1.0 / self.n).astype(np.int64)

    @cached_property
    def wavenumbers(self) -> tuple[np.ndarray, np.ndarray]:
        """Integer arrays ``(k1, k2)`` of shape ``(n, n)``."""
        k1, k2 = np.meshgrid(self.k1d, self.k1d, indexing="ij")
        return k1, k2

    @cached_property
    def ksq(self) -> np.ndarray:
        k1, k2 = self.wavenumbers
        return (k1 * k1 + k2 * k2).astype(float)

    @cached_property
    def kabs(self) -> np.ndarray:
        return np.sqrt(self.ksq)

    @cached_property
    def resolved(self) -> np.ndarray:
        """Boolean mask of the modes that may carry energy (Nyquist excluded)."""
        ok = np.abs(self.k1d) < self.n // 2
        return ok[:, None] & ok[None, :]

    @cached_property
    def resolved_1d(self) -> np.ndarray:
        return np.flatnonzero(np.abs(self.k1d) < self.n // 2)

    @property
    def max_resolved_abs(self) -> float:
        return math.sqrt(2.0) * (self.n // 2 - 1)

    @cached_property
    def points(self) -> np.ndarray:
        """Physical coordinates along one axis."""
        return np.arange(self.n) * (LENGTH / self.n)

    def index_of(self, k1: int, k2: int) -> tuple[int, int]:
        """Array position of wavenumber ``(k1, k2)``."""
        return int(k1) % self.n, int(k2) % self.n


@dataclass(frozen=True, eq=False)
class SpectralField:
    """A field on the torus held by its Fourier coefficients.

    The coefficient array is copied on construction, Nyquist entries are
    zeroed, and the copy is made read-only.
    """

    grid: TorusGrid
    coeffs: np.ndarray
    real: bool = True
    role: str = "field"

    def __post_init__(self):
        n = self.grid.n
        c = np.array(self.coeffs, dtype=np.complex128, copy=True)
        if c.shape != (n, n):
            raise ValueError(f"coefficient array must have shape {(n, n)}, got {c.shape}")
        c[~self.grid.resolved] = 0.0
        c.flags.writeable = False
        object.__setattr__(self, "coeffs", c)

    # constructors -------------------------------------------------------
    @classmethod
    def zeros(cls, grid: TorusGrid, role: str = "field") -> "SpectralField":
        return cls(grid, np.zeros((grid.n, grid.n), complex), True, role)

    @classmethod
    def constant(cls, grid: TorusGrid, value: float, role: str = "field") -> "SpectralField":
        c = np.zeros((grid.n, grid.n), complex)
        c[0, 0] = value * LENGTH
        return cls(grid, c, True, role)

    @classmethod
    def from_values(cls, grid: TorusGrid, values, role: str = "field") -> "SpectralField":
        values = np.asarray(values)
        is_real = not np.iscomplexobj(values)
        return cls(grid, forward_transform(values), is_real, role)

    @classmethod
    def single_mode(cls, grid: TorusGrid, k1: int, k2: int, amplitude: complex = 1.0,
                    real: bool = True) -> "SpectralField":
        """Field ``amplitude·e_k`` (plus its conjugate partner when real)."""
        c = np.zeros((grid.n, grid.n), complex)
        c[grid.index_of(k1, k2)] += amplitude
        if real:
            c[grid.index_of(-k1, -k2)] += np.conj(amplitude)
        return cls(grid, c, real)

    # views --------------------------------------------------------------
    def values(self) -> np.ndarray:
        """Physical values on the grid (real array for real fields)."""
        v = inverse_transform(self.coeffs)
        return v.real if self.real else v

    def with_coeffs(self, coeffs, real: bool | None = None, role: str | None = None) -> "SpectralField":
        return SpectralField(self.grid, coeffs, self.real if real is None else real,
                             self.role if role is None else role)

    def l2_norm(self) -> float:
        return float(np.sqrt(np.sum(np.abs(self.coeffs) ** 2)))

    def hermitian_defect(self) -> float:
        c = self.coeffs
        flipped = np.roll(np.flip(c, axis=(0, 1)), 1, axis=(0, 1))
        return float(np.max(np.abs(c - np.conj(flipped))))

    # arithmetic ---------------------------------------------------------
    def _other(self, other) -> np.ndarray:
        if isinstance(other, SpectralField):
            check_same_grid(self, other)
            return other.coeffs
        raise TypeError("fields combine only with fields")

    def __add__(self, other):
        return SpectralField(self.grid, self.coeffs + self._other(other),
                             self.real and other.real, self.role)

    def __sub__(self, other):
        return SpectralField(self.grid, self.coeffs - self._other(other),
                             self.real and other.real, self.role)

    def __neg__(self):
        return SpectralField(self.grid, -self.coeffs, self.real, self.role)

    def __mul__(self, scalar):
        if isinstance(scalar, SpectralField):
            return product(self, scalar)
        real = self.real and np.isrealobj(scalar)
        return SpectralField(self.grid, self.coeffs * scalar, real, self.role)

    __rmul__ = __mul__

    def __repr__(self):
        return f"SpectralField(n={self.grid.n}, real={self.real}, role={self.role!r})"


def check_same_grid(*fields: SpectralField) -> TorusGrid:
    grid = fields[0].grid
    for f in fields[1:]:
        if f.grid != grid:
            raise GridMismatch(f"grid mismatch: {grid.n} vs {f.grid.n}")
    return grid


# --------------------------------------------------------------------------
# transforms


def forward_transform(values: np.ndarray) -> np.ndarray:
    """Grid values to orthonormal Fourier coefficients (last two axes)."""
    n = values.shape[-1]
    return np.fft.fft2(values, axes=(-2, -1)) * (LENGTH / (n * n))


def inverse_transform(coeffs: np.ndarray) -> np.ndarray:
    """Orthonormal Fourier coefficients to complex grid values (last two axes)."""
    n = coeffs.shape[-1]
    return np.fft.ifft2(coeffs, axes=(-2, -1)) * (n * n / LENGTH)


def padded_size(n: int) -> int:
    """Size of the 3/2-rule grid used for quadratic products."""
    return (3 * n) // 2


def pad_coeffs(coeffs: np.ndarray, n: int, size: int) -> np.ndarray:
    """Embed resolved coefficients of an ``n``-grid into a ``size``-grid."""
    src = np.flatnonzero(np.abs(np.fft.fftfreq(n, 1.0 / n)) < n // 2)
    dst = np.round(np.fft.fftfreq(n, 1.0 / n)[src]).astype(int) % size
    out = np.zeros(coeffs.shape[:-2] + (size, size), complex)
    out[..., dst[:, None], dst[None, :]] = coeffs[..., src[:, None], src[None, :]]
    return out


def truncate_coeffs(coeffs: np.ndarray, size: int, n: int) -> np.ndarray:
    """Inverse of :func:`pad_coeffs`: keep the resolved modes of an ``n``-grid."""
    src = np.flatnonzero(np.abs(np.fft.fftfreq(n, 1.0 / n)) < n // 2)
    dst = np.round(np.fft.fftfreq(n, 1.0 / n)[src]).astype(int) % size
    out = np.zeros(coeffs.shape[:-2] + (n, n), complex)
    out[..., src[:, None], src[None, :]] = coeffs[..., dst[:, None], dst[None, :]]
    return out


def padded_values(coeffs: np.ndarray, n: int, size: int) -> np.ndarray:
    return inverse_transform(pad_coeffs(coeffs, n, size))


def from_padded_values(values: np.ndarray, n: int) -> np.ndarray:
    size = values.shape[-1]
    return truncate_coeffs(forward_transform(values), size, n)


def product(f: SpectralField, g: SpectralField) -> SpectralField:
    """Dealiased pointwise product."""
    grid = check_same_grid(f, g)
    n, size = grid.n, padded_size(grid.n)
    vals = padded_values(f.coeffs, n, size) * padded_values(g.coeffs, n, size)
    return SpectralField(grid, from_padded_values(vals, n), f.real and g.real)


def apply_multiplier(f: SpectralField, multiplier: np.ndarray, role: str | None = None) -> SpectralField:
    return f.with_coeffs(f.coeffs * multiplier, role=role)


def greens(f: SpectralField, mass: float = 1.0) -> SpectralField:
    """Apply ``(mass − Δ)^{-1}``."""
    return apply_multiplier(f, 1.0 / (f.grid.ksq + mass))


def helmholtz(f: SpectralField, mass: float = 1.0) -> SpectralField:
    """Apply ``mass − Δ``."""
    return apply_multiplier(f, f.grid.ksq + mass)


# --------------------------------------------------------------------------
# mollifiers and renormalization


@dataclass(frozen=True)
class Mollifier:
    """Radial Fourier multiplier ``ρ̂_ε``.

    Parameters
    ----------
    epsilon : float
        Mollification scale. ``0`` gives the identity, ``inf`` keeps only
        the zero mode.
    kind : {"gaussian", "sharp"}
        ``exp(−ε²|k|²/2)`` or the indicator of ``|k| ≤ 1/ε``.
    """

    epsilon: float
    kind: str = "gaussian"

    def __post_init__(self):
        if not self.epsilon >= 0:
            raise ValueError("epsilon must be non-negative")
        if self.kind not in ("gaussian", "sharp"):
            raise ValueError(f"unknown mollifier kind {self.kind!r}")

    def multiplier(self, ksq: np.ndarray) -> np.ndarray:
        ksq = np.asarray(ksq, float)
        eps = self.epsilon
        if eps == 0:
            return np.ones_like(ksq)
        if math.isinf(eps):
            return (ksq == 0).astype(float)
        if self.kind == "gaussian":
            return np.exp(-0.5 * eps * eps * ksq)
        # tolerance keeps modes exactly on |k| = 1/ε despite rounding of ε²
        return (eps * eps * ksq <= 1.0 + 1e-12).astype(float)

    def radial(self, r: float) -> float:
        return float(self.multiplier(np.array(r * r)))


def mollify(f: SpectralField, m: Mollifier) -> SpectralField:
    """Fourier multiplication by ``ρ̂_ε``."""
    return apply_multiplier(f, m.multiplier(f.grid.ksq))


def _tail_bound(m: Mollifier, radius: float, mass: float) -> float:
    """Upper bound on Σ_{|k| ≥ radius} ρ̂(k)²/(|k|²+mass).

    Each lattice point owns the unit square around it; shifting the radial
    profile inward by half a diagonal turns the sum into a dominating integral.
    """
    if math.isinf(m.epsilon):
        return 0.0
    if m.epsilon == 0:
        return math.inf
    shift = math.sqrt(0.5)
    if m.kind == "sharp" and radius - shift > 1.0 / m.epsilon:
        return 0.0

    def integrand(r):
        s = max(r - shift, 0.0)
        return 2.0 * np.pi * r * m.radial(s) ** 2 / (s * s + mass)

    lo = max(radius - shift, 0.0)
    if m.kind == "sharp":
        hi = 1.0 / m.epsilon + 2 * shift
        if hi <= lo:
            return 0.0
        val, _ = integrate.quad(integrand, lo, hi, limit=200)
    else:
        val, _ = integrate.quad(integrand, lo, np.inf, limit=200)
    return float(val)


def renorm_constant(m: Mollifier, grid: TorusGrid, mass: float = 1.0) -> float:
    """Lattice sum Σ_k ρ̂_ε(k)²/(|k|²+mass) over the resolved modes.

    This is the trace of ``ρ_ε (mass−Δ)^{-1} ρ_ε``; the pointwise counterterm
    is this value divided by the torus area. A :class:`RenormTailWarning` is
    issued when the unresolved tail may exceed 1e-12 of the value.
    """
    ksq = grid.ksq[grid.resolved]
    rho = m.multiplier(ksq)
    terms = np.sort(rho * rho / (ksq + mass))
    value = math.fsum(terms)
    tail = _tail_bound(m, grid.n // 2, mass)
    if tail > 1e-12 * value:
        warnings.warn(
            f"unresolved tail of the renormalization sum may reach {tail:.3g} "
            f"(value {value:.6g}); refine the grid or increase epsilon",
            RenormTailWarning, stacklevel=2)
    return value


# --------------------------------------------------------------------------
# noise


def sample_white_noise(grid: TorusGrid, seed: int, index: int = 0) -> SpectralField:
    """Spatial white noise: unit-variance coefficients, Hermitian, Nyquist zeroed.

    Drawn as i.i.d. standard normals on the grid points and transformed, so
    Hermitian pairing is exact and the result depends only on ``(seed, index)``.
    """
    n = grid.n
    w = stream(seed, index).standard_normal((n, n))
    return SpectralField(grid, np.fft.fft2(w) / n, True, "white_noise")


@dataclass(frozen=True, eq=False)
class EnhancedNoise:
    """A noise draw with its mollification and renormalized resonant square.

    Attributes
    ----------
    xi, xi_eps, xi2_eps : SpectralField
        Raw noise, ``ρ_ε ∗ ξ`` and ``ξ_ε ∘ (1−Δ)^{-1}ξ_ε − c_ε``.
    c_eps : float
        Pointwise counterterm, ``trace / area``.
    trace : float
        The lattice sum returned by :func:`renorm_constant`.
    """

    xi: SpectralField
    xi_eps: SpectralField
    xi2_eps: SpectralField
    c_eps: float
    trace: float
    mollifier: Mollifier
    seed: int | None = None
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    @property
    def grid(self) -> TorusGrid:
        return self.xi.grid

    @property
    def epsilon(self) -> float:
        return self.mollifier.epsilon


def build_enhanced(xi: SpectralField, m: Mollifier, seed: int | None = None) -> EnhancedNoise:
    """Mollify a noise field and form its renormalized resonant square."""
    from .paracontrolled import resonant

    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RenormTailWarning)
        trace = renorm_constant(m, xi.grid)
    c_eps = trace / AREA
    xi_eps = apply_multiplier(xi, m.multiplier(xi.grid.ksq), role="xi_eps")
    res = resonant(xi_eps, greens(xi_eps))
    xi2 = res - SpectralField.constant(xi.grid, c_eps)
    return EnhancedNoise(xi, xi_eps, xi2.with_coeffs(xi2.coeffs, role="xi2_eps"),
                         c_eps, trace, m, seed)


def enhanced_noise(grid: TorusGrid, seed: int, m: Mollifier) -> EnhancedNoise:
    """Sample white noise and enhance it in one call."""
    return build_enhanced(sample_white_noise(grid, seed), m, seed)


def zero_noise(grid: TorusGrid, m: Mollifier, counterterm: bool = False) -> EnhancedNoise:
    """The enhanced noise of ``ξ = 0``; ``counterterm`` keeps ``c_ε``."""
    if counterterm:
        return build_enhanced(SpectralField.zeros(grid, "white_noise"), m)
    z = SpectralField.zeros(grid)
    return EnhancedNoise(z, z, z, 0.0, 0.0, m, None)


# --------------------------------------------------------------------------
# Littlewood-Paley blocks


def _smooth_step(t: np.ndarray) -> np.ndarray:
    """C^∞ step: 0 for t ≤ 0, 1 for t ≥ 1."""
    t = np.clip(t, 0.0, 1.0)
    with np.errstate(divide="ignore", over="ignore"):
        a = np.where(t > 0, np.exp(-1.0 / np.where(t > 0, t, 1.0)), 0.0)
        b = np.where(t < 1, np.exp(-1.0 / np.where(t < 1, 1.0 - t, 1.0)), 0.0)
    return a / (a + b)


def chi(r: np.ndarray) -> np.ndarray:
    """Radial bump: 1 on [0, 3/4], 0 on [1, ∞), smooth in between."""
    r = np.asarray(r, float)
    return 1.0 - _smooth_step((r - CHI_INNER) / (CHI_OUTER - CHI_INNER))


def dyadic_multiplier(j: int, kabs: np.ndarray) -> np.ndarray:
    """Partition function φ_j evaluated at ``|k|``."""
    if j < -1:
        raise ValueError("block index must be >= -1")
    if j == -1:
        return chi(kabs)
    return chi(kabs / 2.0 ** (j + 1)) - chi(kabs / 2.0 ** j)


def max_block(grid: TorusGrid) -> int:
    """Largest block index carrying resolved modes."""
    j = -1
    while chi(grid.max_resolved_abs / 2.0 ** (j + 1)) < 1.0:
        j += 1
    return j


@functools.lru_cache(maxsize=32)
def block_multipliers(n: int) -> np.ndarray:
    """Stacked multipliers φ_{-1}, …, φ_J on an ``n``-grid, shape (J+2, n, n)."""
    grid = TorusGrid(n)
    mults = np.stack([dyadic_multiplier(j, grid.kabs) for j in range(-1, max_block(grid) + 1)])
    mults[:, ~grid.resolved] = 0.0
    mults.flags.writeable = False
    return mults


def lp_block(f: SpectralField, j: int) -> SpectralField:
    """Littlewood-Paley block Δ_j f, ``j ≥ −1``; zero beyond the resolved range."""
    if j < -1:
        raise ValueError("block index must be >= -1")
    mults = block_multipliers(f.grid.n)
    if j + 1 >= len(mults):
        return SpectralField.zeros(f.grid)
    return apply_multiplier(f, mults[j + 1])


def block_coeffs(coeffs: np.ndarray) -> np.ndarray:
    """All blocks of coefficient arrays ``(..., n, n)`` → ``(..., J+2, n, n)``."""
    mults = block_multipliers(coeffs.shape[-1])
    return coeffs[..., None, :, :] * mults


def besov_norm_coeffs(coeffs: np.ndarray, s: float, p, q) -> np.ndarray:
    """Vectorized Besov norm over leading axes of ``(..., n, n)`` coefficients."""
    coeffs = np.asarray(coeffs)
    mults = block_multipliers(coeffs.shape[-1])
    terms = []
    for idx, mult in enumerate(mults):
        blk = coeffs * mult
        if p == 2:
            lp = np.sqrt(np.sum(np.abs(blk) ** 2, axis=(-2, -1)))
        elif p in (np.inf, "inf"):
            lp = np.max(np.abs(inverse_transform(blk)), axis=(-2, -1))
        else:
            raise ValueError("p must be 2 or inf")
        terms.append(2.0 ** (s * (idx - 1)) * lp)
    terms = np.stack(terms, axis=-1)
    if q == 2:
        return np.sqrt(np.sum(terms * terms, axis=-1))
    if q in (np.inf, "inf"):
        return np.max(terms, axis=-1)
    raise ValueError("q must be 2 or inf")


def besov_norm(f: SpectralField, s: float, p=2, q=2) -> float:
    """Besov norm (Σ_j (2^{js} ‖Δ_j f‖_{L^p})^q)^{1/q}, p, q ∈ {2, ∞}.

    The L^∞ norm of a block is its maximum over the grid points. For
    ``p = q = 2`` the result lies within a factor ``2^{|s|}·√2`` of
    :func:`sobolev_norm`, because each mode meets at most two blocks whose
    weights bracket ``(1+|k|²)^{s/2}``.
    """
    return float(besov_norm_coeffs(f.coeffs, s, p, q))


def sobolev_norm(f: SpectralField, s: float) -> float:
    """(Σ_k (1+|k|²)^s |f̂(k)|²)^{1/2}."""
    return float(np.sqrt(np.sum((1.0 + f.grid.ksq) ** s * np.abs(f.coeffs) ** 2)))


def sobolev_norm_coeffs(coeffs: np.ndarray, ksq: np.ndarray, s: float) -> np.ndarray:
    return np.sqrt(np.sum((1.0 + ksq) ** s * np.abs(coeffs) ** 2, axis=(-2, -1)))
