"""Paraproducts, the resonant product, the commutator, and the Γ/Φ maps.

Notation: ``Δ_j`` are the Littlewood-Paley blocks of
:mod:`anderson_lab.spectral_core`, ``S_j = Σ_{i<j} Δ_i`` and

    f ≺ g = Σ_j S_{j−1} f · Δ_j g,    f ∘ g = Σ_{|i−j|≤1} Δ_i f · Δ_j g,
    f ≻ g = g ≺ f,

so that ``f·g = f≺g + f∘g + f≻g``. All products are evaluated on the
3/2-padded grid, which makes this decomposition exact on the kept modes.

Renormalized operator
---------------------
With ``G = (1−Δ)^{-1}``, ``X = Ξ²_ε = Gξ_ε ∘ ξ_ε − c_ε`` and ``Π = Π_{>N}`` the
projection onto ``|k| > 2^N``, the remainder of a paracontrolled ``u`` is

    u♯ = Φ_N(u) = u + Π G((ξ_ε − X) ≻ u + ξ_ε ≺ u).

For the operator ``L u = (1−Δ)u + ξ_ε u + c_ε u`` this gives the exact identity

    L u = (1−Δ)u♯ + u♯ ∘ ξ_ε − B(u) + Q Y + ξ_ε ∘ Q G Y,
    B(u) = X ≺ u + X ∘ u + C(u, Gξ_ε, ξ_ε) + R(u) + (G(ξ_ε ≺ u − X ≻ u)) ∘ ξ_ε,

where ``Y = (ξ_ε − X) ≻ u + ξ_ε ≺ u``, ``Q = 1 − Π`` and
``R(u) = ξ_ε ∘ (G(u ≺ ξ_ε) − u ≺ Gξ_ε)`` commutes ``G`` past the paraproduct.
The two low-mode terms vanish when the truncation is inactive
(``cutoff_N=None``).
"""

from __future__ import annotations

import weakref
from dataclasses import dataclass

import numpy as np

from .errors import NoContraction
from .spectral_core import (
    EnhancedNoise,
    SpectralField,
    block_coeffs,
    check_same_grid,
    from_padded_values,
    greens,
    helmholtz,
    padded_size,
    padded_values,
    product,
)

_BLOCK_CACHE: "weakref.WeakKeyDictionary[SpectralField, np.ndarray]" = weakref.WeakKeyDictionary()


def _padded_blocks(f: SpectralField) -> np.ndarray:
    """Padded-grid values of all blocks of ``f``, cached per field."""
    vals = _BLOCK_CACHE.get(f)
    if vals is None:
        n = f.grid.n
        vals = padded_values(block_coeffs(f.coeffs), n, padded_size(n))
        vals.flags.writeable = False
        _BLOCK_CACHE[f] = vals
    return vals


def _field(grid, vals, real) -> SpectralField:
    return SpectralField(grid, from_padded_values(vals, grid.n), real)


def para_less(f: SpectralField, g: SpectralField) -> SpectralField:
    """Paraproduct ``f ≺ g = Σ_j S_{j−1} f Δ_j g``."""
    grid = check_same_grid(f, g)
    bf, bg = _padded_blocks(f), _padded_blocks(g)
    low = np.cumsum(bf, axis=0)
    # block j sits at index j+1, and S_{j-1} = Σ_{i<=j-2} Δ_i is cumsum[j-1]
    vals = np.sum(low[:-2] * bg[2:], axis=0)
    return _field(grid, vals, f.real and g.real)


def para_greater(f: SpectralField, g: SpectralField) -> SpectralField:
    """Paraproduct ``f ≻ g = g ≺ f``."""
    return para_less(g, f)


def resonant(f: SpectralField, g: SpectralField) -> SpectralField:
    """Resonant product ``Σ_{|i−j|≤1} Δ_i f Δ_j g``."""
    grid = check_same_grid(f, g)
    bf, bg = _padded_blocks(f), _padded_blocks(g)
    vals = np.sum(bf * bg, axis=0)
    vals += np.sum(bf[1:] * bg[:-1], axis=0)
    vals += np.sum(bf[:-1] * bg[1:], axis=0)
    return _field(grid, vals, f.real and g.real)


def commutator(f: SpectralField, g: SpectralField, h: SpectralField) -> SpectralField:
    """``C(f, g, h) = (f ≺ g) ∘ h − f·(g ∘ h)``, evaluated exactly."""
    check_same_grid(f, g, h)
    return resonant(para_less(f, g), h) - product(f, resonant(g, h))


# --------------------------------------------------------------------------
# paracontrolled maps


def high_projection(f: SpectralField, cutoff_N: int | None) -> SpectralField:
    """``Π_{>N}``: keep modes with ``|k| > 2^N``; ``None`` is the identity."""
    if cutoff_N is None:
        return f
    return f.with_coeffs(np.where(f.grid.kabs > 2.0 ** cutoff_N, f.coeffs, 0.0))


def _green_noise(noise: EnhancedNoise) -> SpectralField:
    g = noise._cache.get("G_xi")
    if g is None:
        g = noise._cache["G_xi"] = greens(noise.xi_eps)
    return g


def _xi_minus_x(noise: EnhancedNoise) -> SpectralField:
    g = noise._cache.get("xi_minus_x")
    if g is None:
        g = noise._cache["xi_minus_x"] = noise.xi_eps - noise.xi2_eps
    return g


def paracontrolled_source(u: SpectralField, noise: EnhancedNoise) -> SpectralField:
    """``Y(u) = (ξ_ε − Ξ²_ε) ≻ u + ξ_ε ≺ u``."""
    return para_greater(_xi_minus_x(noise), u) + para_less(noise.xi_eps, u)


def _correction(u: SpectralField, noise: EnhancedNoise, cutoff_N: int | None) -> SpectralField:
    return high_projection(greens(paracontrolled_source(u, noise)), cutoff_N)


@dataclass(frozen=True, eq=False)
class ParacontrolledFunction:
    """A function ``u`` together with its remainder ``u♯ = Φ_N(u)``.

    Attributes
    ----------
    iterations : int
        Fixed-point iterations used by :func:`gamma_map` (0 if built directly).
    contraction : float
        Largest measured ratio of successive increments.
    """

    u: SpectralField
    u_sharp: SpectralField
    cutoff_N: int | None
    noise: EnhancedNoise
    iterations: int = 0
    contraction: float = 0.0
    residual: float = 0.0


def phi_map(u, noise: EnhancedNoise | None = None, cutoff_N: int | None = None) -> SpectralField:
    """``Φ_N(u) = u + Π_{>N} G((ξ_ε − Ξ²_ε) ≻ u + ξ_ε ≺ u)``.

    Accepts either a :class:`ParacontrolledFunction` (its own noise and
    cutoff are used) or a plain field together with ``noise`` and ``cutoff_N``.
    """
    if isinstance(u, ParacontrolledFunction):
        noise, cutoff_N, u = u.noise, u.cutoff_N, u.u
    return u + _correction(u, noise, cutoff_N)


def contraction_factor(v: SpectralField, noise: EnhancedNoise, cutoff_N: int | None) -> float:
    """First-iteration ratio ‖u²−u¹‖/‖u¹−u⁰‖ of the Γ iteration started at ``v``."""
    d1 = _correction(v, noise, cutoff_N)
    n1 = d1.l2_norm()
    if n1 == 0.0:
        return 0.0
    return _correction(d1, noise, cutoff_N).l2_norm() / n1


def choose_cutoff(v: SpectralField, noise: EnhancedNoise, target: float = 0.5) -> int | None:
    """Smallest truncation whose first-iteration contraction factor is below ``target``.

    Candidates are tried from the inactive truncation (``None``) upward.
    """
    from .spectral_core import max_block

    for cand in [None, *range(0, max_block(v.grid) + 1)]:
        if contraction_factor(v, noise, cand) < target:
            return cand
    return max_block(v.grid)


def gamma_map(v: SpectralField, noise: EnhancedNoise, cutoff_N: int | None = "auto",
              tol: float = 1e-12, max_iter: int = 200) -> ParacontrolledFunction:
    """Solve ``u = v − Π_{>N} G Y(u)`` so that ``Φ_N(u) = v``.

    Plain fixed-point iteration from ``u⁰ = v``, stopped when the relative L²
    increment drops below ``tol``.

    Raises
    ------
    NoContraction
        If increments grow or the iteration cap is reached.
    """
    if cutoff_N == "auto":
        cutoff_N = choose_cutoff(v, noise)
    vnorm = v.l2_norm()
    u = v
    prev = None
    worst = 0.0
    for it in range(1, max_iter + 1):
        new = v - _correction(u, noise, cutoff_N)
        inc = (new - u).l2_norm()
        u = new
        if prev is not None and prev > 0:
            ratio = inc / prev
            worst = max(worst, ratio)
            if ratio >= 1.0 and inc > tol * max(vnorm, 1e-300):
                raise NoContraction(
                    f"increment ratio {ratio:.3g} >= 1 at iteration {it} (cutoff_N={cutoff_N})")
        prev = inc
        if inc <= tol * vnorm or vnorm == 0.0:
            residual = (u - v + _correction(u, noise, cutoff_N)).l2_norm()
            return ParacontrolledFunction(u, v, cutoff_N, noise, it, worst, residual)
    raise NoContraction(f"no convergence within {max_iter} iterations (cutoff_N={cutoff_N})")


def paracontrolled_from_u(u: SpectralField, noise: EnhancedNoise,
                          cutoff_N: int | None = None) -> ParacontrolledFunction:
    """Attach the remainder to a given ``u`` by direct evaluation of Φ_N."""
    return ParacontrolledFunction(u, phi_map(u, noise, cutoff_N), cutoff_N, noise)


# --------------------------------------------------------------------------
# the renormalized operator


def b_operator(u: SpectralField, noise: EnhancedNoise) -> SpectralField:
    """``B(u)`` of the module docstring."""
    xi, x2 = noise.xi_eps, noise.xi2_eps
    gxi = _green_noise(noise)
    term = para_less(x2, u) + resonant(x2, u)
    term = term + commutator(u, gxi, xi)
    term = term + resonant(xi, greens(para_less(u, xi)) - para_less(u, gxi))
    term = term + resonant(greens(para_less(xi, u) - para_greater(x2, u)), xi)
    return term


def _low_modes(f: SpectralField, cutoff_N: int | None) -> SpectralField:
    if cutoff_N is None:
        return SpectralField.zeros(f.grid)
    return f - high_projection(f, cutoff_N)


def apply_paracontrolled_hamiltonian(u: ParacontrolledFunction,
                                     noise: EnhancedNoise | None = None) -> SpectralField:
    """Evaluate ``L u`` through the remainder ``u♯`` and ``B(u)``.

    Returns ``(1−Δ)u♯ + u♯ ∘ ξ_ε − B(u)`` plus the low-mode terms produced by
    a finite truncation.
    """
    noise = u.noise if noise is None else noise
    xi = noise.xi_eps
    out = helmholtz(u.u_sharp) + resonant(u.u_sharp, xi) - b_operator(u.u, noise)
    if u.cutoff_N is not None:
        low = _low_modes(paracontrolled_source(u.u, noise), u.cutoff_N)
        out = out + low + resonant(xi, greens(low))
    return out


def direct_hamiltonian(u: SpectralField, noise: EnhancedNoise) -> SpectralField:
    """``(1−Δ)u + ξ_ε u + c_ε u`` with a dealiased product."""
    return helmholtz(u) + product(noise.xi_eps, u) + u * noise.c_eps
