"""The renormalized Anderson Hamiltonian on a truncated Fourier basis.

The matrix acts on coefficient vectors over the disk ``|k| ≤ k_max``:

    A[k, l] = |k|² δ_kl + ξ̂_ε(k − l) / (2π) + c δ_kl,

where ``ξ̂_ε(k−l)/(2π) = ⟨e_k, ξ_ε e_l⟩`` is the multiplication operator in the
orthonormal basis and ``c = (4π²)^{-1} Σ_{|k|≤k_max} ρ̂_ε(k)²/(|k|²+1)`` is the
counterterm restricted to the same disk. ``c`` enters with a plus sign: the
lowest eigenvalue of ``−Δ + ξ_ε`` drifts to −∞ like ``−c`` as ε → 0, and adding
``c`` is what makes the family converge.

Eigen-decomposition is done in the real cosine/sine basis, so the stored
eigenvectors are coefficient vectors of real functions.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field
from typing import Callable

import numpy as np
import scipy.linalg

from .errors import CutoffTooLarge, DomainError, EigensolveFailure, ShiftTooSmall
from .spectral_core import (
    AREA,
    LENGTH,
    EnhancedNoise,
    Mollifier,
    SpectralField,
    TorusGrid,
)


def disk_basis(k_max: int) -> np.ndarray:
    """Wavenumbers with ``|k| ≤ k_max`` ordered by ``(|k|², k1, k2)``, shape (M, 2)."""
    r = np.arange(-k_max, k_max + 1)
    k1, k2 = np.meshgrid(r, r, indexing="ij")
    keep = k1 * k1 + k2 * k2 <= k_max * k_max
    pts = np.stack([k1[keep], k2[keep]], axis=1)
    order = np.lexsort((pts[:, 1], pts[:, 0], pts[:, 0] ** 2 + pts[:, 1] ** 2))
    return pts[order]


def real_basis_transform(basis: np.ndarray) -> np.ndarray:
    """Unitary ``U`` whose columns are the real cosine/sine functions in ``basis``.

    The zero mode maps to itself; each pair ``{k, −k}`` maps to
    ``(e_k + e_{−k})/√2`` and ``(e_k − e_{−k})/(i√2)``.
    """
    m = len(basis)
    pos = {(int(a), int(b)): i for i, (a, b) in enumerate(basis)}
    u = np.zeros((m, m), complex)
    col = 0
    s = 1.0 / math.sqrt(2.0)
    for i, (a, b) in enumerate(basis):
        a, b = int(a), int(b)
        if a == 0 and b == 0:
            u[i, col] = 1.0
            col += 1
        elif a > 0 or (a == 0 and b > 0):
            j = pos[(-a, -b)]
            u[i, col], u[j, col] = s, s
            u[i, col + 1], u[j, col + 1] = -1j * s, 1j * s
            col += 2
    return u


@dataclass(frozen=True, eq=False)
class OperatorMatrix:
    """Dense matrix of the renormalized operator on a Fourier disk."""

    basis: np.ndarray
    entries: np.ndarray
    counterterm: float
    k_max: int
    grid: TorusGrid
    mollifier: Mollifier

    @property
    def size(self) -> int:
        return len(self.basis)

    def hermitian_defect(self) -> float:
        return float(np.max(np.abs(self.entries - self.entries.conj().T)))


def basis_counterterm(m: Mollifier, k_max: int) -> float:
    """``(4π²)^{-1} Σ_{|k|≤k_max} ρ̂_ε(k)²/(|k|²+1)``."""
    basis = disk_basis(k_max)
    ksq = (basis ** 2).sum(1).astype(float)
    rho = m.multiplier(ksq)
    return math.fsum(np.sort(rho * rho / (ksq + 1.0))) / AREA


def assemble(noise: EnhancedNoise, k_max: int, counterterm: bool = True) -> OperatorMatrix:
    """Assemble the Hermitian matrix on ``|k| ≤ k_max``.

    Raises
    ------
    CutoffTooLarge
        If some difference ``k − l`` of basis modes is not resolved on the
        noise grid, i.e. unless ``2·k_max ≤ n/2 − 1``.
    """
    grid = noise.grid
    if k_max < 0 or 2 * k_max > grid.n // 2 - 1:
        raise CutoffTooLarge(
            f"k_max={k_max} needs a noise grid with n >= {4 * k_max + 2}, got n={grid.n}")
    basis = disk_basis(k_max)
    d = basis[:, None, :] - basis[None, :, :]
    xi = noise.xi_eps.coeffs
    entries = xi[d[..., 0] % grid.n, d[..., 1] % grid.n] / LENGTH
    # a noise object without a counterterm (trace 0) switches it off as well
    use_ct = counterterm and noise.trace > 0
    ct = basis_counterterm(noise.mollifier, k_max) if use_ct else 0.0
    diag = (basis ** 2).sum(1) + ct
    entries[np.diag_indices_from(entries)] += diag
    return OperatorMatrix(basis, entries, ct, k_max, grid, noise.mollifier)


@dataclass(frozen=True, eq=False)
class SpectralData:
    """Eigen-decomposition of an :class:`OperatorMatrix`.

    Attributes
    ----------
    eigenvalues : ndarray
        Ascending eigenvalues λ_n of the matrix.
    eigenvectors : ndarray
        Columns are the eigenvectors as complex Fourier coefficient vectors
        over ``basis``; each represents a real function.
    shift_K : float
        ``max(0, −λ₁)``, so that ``λ_n + K + 1 ≥ 1``.
    """

    basis: np.ndarray
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    shift_K: float
    grid: TorusGrid
    k_max: int
    mollifier: Mollifier
    counterterm: float
    mass: float = 1.0
    k_rule: str = "max(0,-lambda_1) from the truncated matrix"
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.eigenvalues)

    @property
    def shifted(self) -> np.ndarray:
        """Eigenvalues ``λ_n + K + 1`` of the shifted operator."""
        return self.eigenvalues + self.shift_K + self.mass

    @property
    def frequencies(self) -> np.ndarray:
        return np.sqrt(self.shifted)

    @property
    def basis_ksq(self) -> np.ndarray:
        return (self.basis ** 2).sum(1).astype(float)

    def coefficients(self, v: np.ndarray) -> np.ndarray:
        """Eigen-coordinates ``⟨f_n, v⟩`` of Fourier vectors (last axis)."""
        return np.asarray(v) @ self.eigenvectors.conj()

    def synthesize(self, c: np.ndarray) -> np.ndarray:
        """Fourier vectors ``Σ_n c_n f_n`` from eigen-coordinates (last axis)."""
        return np.asarray(c) @ self.eigenvectors.T

    def to_field(self, v: np.ndarray, role: str = "field") -> SpectralField:
        return basis_to_field(self.basis, v, self.grid, role)

    def from_field(self, f: SpectralField) -> np.ndarray:
        return field_to_basis(self.basis, f)

    def real_coefficients(self, v: np.ndarray) -> np.ndarray:
        """Real eigen-coordinates of Fourier vectors of real functions."""
        return (np.asarray(v) @ self.eigenvectors.conj()).real


def basis_to_field(basis: np.ndarray, v: np.ndarray, grid: TorusGrid, role: str = "field") -> SpectralField:
    """Embed a basis coefficient vector into a grid field."""
    if 2 * int(np.abs(basis).max(initial=0)) >= grid.n:
        raise CutoffTooLarge("basis not representable on the grid")
    c = np.zeros((grid.n, grid.n), complex)
    c[basis[:, 0] % grid.n, basis[:, 1] % grid.n] = v
    return SpectralField(grid, c, True, role)


def field_to_basis(basis: np.ndarray, f: SpectralField) -> np.ndarray:
    """Restrict a grid field to the basis modes."""
    n = f.grid.n
    return f.coeffs[basis[:, 0] % n, basis[:, 1] % n].copy()


def diagonalize(a: OperatorMatrix) -> SpectralData:
    """Full eigen-decomposition in the real cosine/sine basis.

    Raises
    ------
    EigensolveFailure
        If LAPACK does not converge or returns non-finite values.
    """
    u = real_basis_transform(a.basis)
    real_mat = (u.conj().T @ a.entries @ u)
    real_mat = 0.5 * (real_mat + real_mat.conj().T).real
    try:
        lam, w = scipy.linalg.eigh(real_mat, driver="evd")
    except (np.linalg.LinAlgError, ValueError) as exc:
        raise EigensolveFailure(str(exc)) from exc
    if not (np.all(np.isfinite(lam)) and np.all(np.isfinite(w))):
        raise EigensolveFailure("non-finite eigen-decomposition")
    vecs = u @ w
    shift = max(0.0, -float(lam[0]))
    return SpectralData(a.basis, lam, vecs, shift, a.grid, a.k_max, a.mollifier, a.counterterm)


def build_operator(noise: EnhancedNoise, k_max: int, counterterm: bool = True) -> SpectralData:
    return diagonalize(assemble(noise, k_max, counterterm))


def eigen_residual(a: OperatorMatrix, s: SpectralData) -> float:
    """max_n ‖A f_n − λ_n f_n‖."""
    r = a.entries @ s.eigenvectors - s.eigenvectors * s.eigenvalues
    return float(np.max(np.linalg.norm(r, axis=0)))


def gram_defect(s: SpectralData) -> float:
    g = s.eigenvectors.conj().T @ s.eigenvectors
    return float(np.max(np.abs(g - np.eye(s.size))))


# --------------------------------------------------------------------------
# functional calculus


def apply_function(g: Callable[[np.ndarray], np.ndarray], s: SpectralData, v: np.ndarray) -> np.ndarray:
    """``Σ_n g(λ_n+K+1)⟨f_n, v⟩ f_n`` for Fourier vectors ``v`` (last axis).

    Raises
    ------
    DomainError
        If ``g`` is not finite at some shifted eigenvalue.
    """
    with np.errstate(all="ignore"):
        gv = np.asarray(g(s.shifted))
    if gv.shape != s.shifted.shape or not np.all(np.isfinite(gv)):
        raise DomainError("function undefined at some eigenvalue")
    v = np.asarray(v)
    coef = v @ s.eigenvectors.conj()
    return (coef * gv) @ s.eigenvectors.T


def fractional_power(s: SpectralData, power: float, v: np.ndarray) -> np.ndarray:
    """``(H^{ω,K})^{power/2} v`` for ``power ∈ (−1, 1)``."""
    if not -1.0 < power < 1.0:
        raise ValueError("fractional power must lie in (-1, 1)")
    return apply_function(lambda x: x ** (0.5 * power), s, v)


def sobolev_norm_basis(v: np.ndarray, basis: np.ndarray, power: float) -> np.ndarray:
    """``(Σ (1+|k|²)^power |v_k|²)^{1/2}`` along the last axis."""
    w = (1.0 + (basis ** 2).sum(1)) ** power
    return np.sqrt(np.sum(w * np.abs(v) ** 2, axis=-1))


def project_low(s: SpectralData, n_modes: int, v: np.ndarray) -> np.ndarray:
    """Orthogonal projection onto the span of the first ``n_modes`` eigenvectors."""
    if not 0 <= n_modes <= s.size:
        raise ValueError("n_modes must lie in [0, M]")
    f = s.eigenvectors[:, :n_modes]
    return (np.asarray(v) @ f.conj()) @ f.T


# --------------------------------------------------------------------------
# diagnostics


def weyl_profile(s: SpectralData) -> np.ndarray:
    """Rows ``(n, μ_n/n)`` for ``n ∈ [M/4, M/2]``, with ``μ_n = λ_n + K + 1``.

    For the free Laplacian ``μ_n/n → 1/π``, the lattice-counting constant of
    ``|k|²`` in two dimensions.
    """
    m = s.size
    lo, hi = max(1, m // 4), m // 2
    n = np.arange(lo, hi + 1)
    return np.column_stack([n, s.shifted[n - 1] / n])


def resolvent_matrix(s: SpectralData, shift: float) -> np.ndarray:
    den = s.eigenvalues + shift
    return (s.eigenvectors / den) @ s.eigenvectors.conj().T


def resolvent_distance(s1: SpectralData, s2: SpectralData, shift: float) -> float:
    """``‖(A₁+shift)^{-1} − (A₂+shift)^{-1}‖`` on the modes shared by both bases.

    Raises
    ------
    ShiftTooSmall
        Unless ``shift > max(−λ₁)`` over both operators.
    """
    need = max(-s1.eigenvalues[0], -s2.eigenvalues[0])
    if not shift > need:
        raise ShiftTooSmall(f"shift {shift} must exceed {need}")
    idx1 = {tuple(k): i for i, k in enumerate(s1.basis.tolist())}
    common = [(idx1[tuple(k)], j) for j, k in enumerate(s2.basis.tolist()) if tuple(k) in idx1]
    i1 = np.array([c[0] for c in common])
    i2 = np.array([c[1] for c in common])
    r1 = resolvent_matrix(s1, shift)[np.ix_(i1, i1)]
    r2 = resolvent_matrix(s2, shift)[np.ix_(i2, i2)]
    diff = r1 - r2
    return float(np.max(np.abs(np.linalg.eigvalsh(0.5 * (diff + diff.conj().T)))))


def free_counting_eigenvalues(k_max: int) -> np.ndarray:
    """Sorted ``|k|²`` over the disk, by direct lattice enumeration."""
    vals = []
    for a in range(-k_max, k_max + 1):
        for b in range(-k_max, k_max + 1):
            if a * a + b * b <= k_max * k_max:
                vals.append(a * a + b * b)
    return np.sort(np.array(vals, float))


def lowest_eigenvalue(noise: EnhancedNoise, k_max: int, counterterm: bool = True) -> float:
    """Smallest eigenvalue only (cheaper than a full decomposition)."""
    a = assemble(noise, k_max, counterterm)
    return float(scipy.linalg.eigh(a.entries, eigvals_only=True, subset_by_index=[0, 0])[0])


def paracontrolled_domain_profile(s: SpectralData, noise: EnhancedNoise, n_modes: int,
                                  cutoff_N: int | None = None) -> np.ndarray:
    """Rows ``(n, λ_n, ‖Φ_N f_n‖_{H²})`` for the first eigenvectors.

    A diagnostic only: the remainder of an eigenvector should have an
    H²-type norm that grows with its eigenvalue.
    """
    from .paracontrolled import phi_map
    from .spectral_core import sobolev_norm

    rows = []
    for n in range(min(n_modes, s.size)):
        f = s.to_field(s.eigenvectors[:, n])
        sharp = phi_map(f, noise, cutoff_N)
        rows.append((n + 1, s.eigenvalues[n], sobolev_norm(sharp, 2.0)))
    return np.array(rows)
