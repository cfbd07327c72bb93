"""The Anderson Φ⁴₂ interaction and Gibbs sampling over Anderson GFF draws.

Fields are handled through their eigen-coordinates ``c_n = ⟨f_n, φ⟩``. The
interaction only sees ``w = ρ_ε ∗ P_{≤N} φ = Σ_{n≤N} c_n (ρ_ε ∗ f_n)``, which is
band-limited to ``|k| ≤ k_max``; its quartic integral is evaluated exactly by
the mean over a grid with more than ``4·k_max`` points per side.

Wick ordering uses the Anderson GFF variance profile

    σ²(x) = Σ_{n≤N} (ρ_ε ∗ f_n)(x)² / (λ_n + K + 1),

and the two normalizations are

    quartic_only:   V = ¼ ∫ (w⁴ − 6σ²w² + 3σ⁴) dx,
    quartic_plus_K: V − (K/2) ∫ (w² − σ²) dx.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .anderson_operator import SpectralData
from .errors import DegenerateWeights
from .parallel import chunked_map
from .rng import stream
from .spectral_core import AREA, Mollifier, SpectralField, inverse_transform

VARIANTS = ("quartic_only", "quartic_plus_K")


def quadrature_size(k_max: int) -> int:
    """Even grid size exceeding ``4·k_max``, exact for quartic integrands."""
    return 4 * k_max + 2


@dataclass(frozen=True, eq=False)
class ModeQuadrature:
    """Values of ``ρ_ε ∗ f_n``, ``n ≤ N``, on a quadrature grid.

    Attributes
    ----------
    values : ndarray, shape (N, size²)
    sigma2 : ndarray, shape (size²,)
        Anderson GFF variance profile of ``w``.
    weight : float
        Area per quadrature point.
    """

    values: np.ndarray
    sigma2: np.ndarray
    weight: float
    size: int
    n_modes: int
    mollifier: Mollifier

    def field_values(self, coords: np.ndarray) -> np.ndarray:
        """``w`` at the quadrature points for coordinates (..., ≥N)."""
        return np.asarray(coords)[..., : self.n_modes] @ self.values

    def integrate(self, density: np.ndarray) -> np.ndarray:
        return self.weight * np.sum(density, axis=-1)

    def project(self, density: np.ndarray) -> np.ndarray:
        """``∫ density · (ρ_ε ∗ f_n) dx`` for ``n ≤ N``."""
        return self.weight * (np.asarray(density) @ self.values.T)


def mode_quadrature(s: SpectralData, m: Mollifier, n_modes: int) -> ModeQuadrature:
    """Build (or fetch from the operator's cache) the quadrature of the first modes."""
    if not 0 <= n_modes <= s.size:
        raise ValueError(f"N={n_modes} must lie in [0, {s.size}]")
    key = ("quadrature", m, n_modes)
    q = s._cache.get(key)
    if q is not None:
        return q
    size = quadrature_size(s.k_max)
    rho = m.multiplier(s.basis_ksq)
    c = np.zeros((n_modes, size, size), complex)
    c[:, s.basis[:, 0] % size, s.basis[:, 1] % size] = (s.eigenvectors[:, :n_modes] * rho[:, None]).T
    vals = inverse_transform(c).real.reshape(n_modes, size * size)
    sigma2 = np.sum(vals ** 2 / s.shifted[:n_modes, None], axis=0)
    for a in (vals, sigma2):
        a.flags.writeable = False
    q = ModeQuadrature(vals, sigma2, AREA / (size * size), size, n_modes, m)
    s._cache[key] = q
    return q


def potential(coords: np.ndarray, quad: ModeQuadrature, variant: str = "quartic_only",
              K: float = 0.0, batch: int = 1000) -> np.ndarray:
    """Interaction ``V`` for eigen-coordinates of shape (..., ≥N)."""
    if variant not in VARIANTS:
        raise ValueError(f"unknown variant {variant!r}")
    coords = np.asarray(coords)
    flat = coords.reshape(-1, coords.shape[-1])
    s2 = quad.sigma2
    out = np.empty(len(flat))
    for start in range(0, len(flat), batch):
        w = quad.field_values(flat[start:start + batch])
        w2 = w * w
        v = 0.25 * quad.integrate(w2 * w2 - 6.0 * s2 * w2 + 3.0 * s2 * s2)
        if variant == "quartic_plus_K":
            v -= 0.5 * K * quad.integrate(w2 - s2)
        out[start:start + batch] = v
    return out.reshape(coords.shape[:-1])


@dataclass(frozen=True)
class GibbsWeight:
    """``log_weight = −V`` for one field."""

    log_weight: float
    interaction_V: float
    variant: str


def _coords_of(field, s: SpectralData) -> np.ndarray:
    if isinstance(field, SpectralField):
        field = s.from_field(field)
    return s.real_coefficients(field)


def interaction(field, s: SpectralData, m: Mollifier, n_modes: int,
                variant: str = "quartic_only") -> GibbsWeight:
    """Interaction of a field given on the grid or as a Fourier basis vector."""
    quad = mode_quadrature(s, m, n_modes)
    v = float(potential(_coords_of(field, s), quad, variant, s.shift_K))
    return GibbsWeight(-v, v, variant)


def hermite_lower_bound(s: SpectralData, m: Mollifier, n_modes: int) -> float:
    """``−(3/2)∫σ⁴``, the minimum of the quartic density pointwise."""
    quad = mode_quadrature(s, m, n_modes)
    return float(-1.5 * quad.integrate(quad.sigma2 ** 2))


# --------------------------------------------------------------------------
# sampling


def proposal(s: SpectralData, seed_base: int, index: int) -> tuple[np.ndarray, float]:
    """Eigen-coordinates of Anderson GFF proposal ``index`` and its uniform."""
    g = stream(seed_base, index)
    coords = g.standard_normal(s.size) / np.sqrt(s.shifted)
    return coords, float(g.random())


def proposals(s: SpectralData, seed_base: int, start: int, stop: int) -> tuple[np.ndarray, np.ndarray]:
    pairs = [proposal(s, seed_base, i) for i in range(start, stop)]
    if not pairs:
        return np.zeros((0, s.size)), np.zeros(0)
    return np.stack([p[0] for p in pairs]), np.array([p[1] for p in pairs])


def effective_sample_size(log_w: np.ndarray) -> float:
    """Kish effective sample size of importance weights."""
    lw = np.asarray(log_w, float)
    w = np.exp(lw - lw.max())
    return float(w.sum() ** 2 / np.sum(w * w))


@dataclass(frozen=True, eq=False)
class GibbsEnsemble:
    """Draws targeting the Gibbs measure.

    In ``"mh"`` mode the rows of ``coords`` are states of an independence
    Metropolis-Hastings chain and the weights are uniform; in
    ``"importance"`` mode they are independent Anderson GFF draws carrying
    importance weights ``exp(−V)``.
    """

    coords: np.ndarray
    V: np.ndarray
    log_weights: np.ndarray
    accepted: np.ndarray
    acceptance_rate: float
    effective_sample_size: float
    seed_base: int
    mode: str
    variant: str
    n_modes: int
    spectral: SpectralData

    @property
    def weights(self) -> np.ndarray:
        """Weights normalized to mean one."""
        w = np.exp(self.log_weights - self.log_weights.max())
        return w / w.mean()

    def samples(self):
        """Yield ``(SpectralField, GibbsWeight)`` pairs."""
        for c, v in zip(self.coords, self.V):
            field = self.spectral.to_field(self.spectral.synthesize(c), "gibbs")
            yield field, GibbsWeight(-float(v), float(v), self.variant)

    def mean(self, values: np.ndarray) -> tuple[float, float]:
        """Weighted mean of per-sample values with its standard error."""
        return weighted_mean(values, self.weights if self.mode == "importance" else None)


def weighted_mean(values: np.ndarray, weights: np.ndarray | None = None) -> tuple[float, float]:
    """Mean and standard error; ratio-estimator error for importance weights."""
    x = np.asarray(values, float)
    n = len(x)
    if weights is None:
        mean = math.fsum(x) / n
        var = math.fsum((x - mean) ** 2) / (n - 1)
        return mean, math.sqrt(var / n)
    w = np.asarray(weights, float)
    sw = math.fsum(w)
    mean = math.fsum(w * x) / sw
    se = math.sqrt(math.fsum((w * (x - mean)) ** 2)) / sw
    return mean, se


def sample_gibbs(s: SpectralData, m: Mollifier, n_modes: int, n_samples: int, seed_base: int,
                 variant: str = "quartic_only", mode: str = "mh", thin: int = 2,
                 burn_in: int | None = None, interacting: bool = True,
                 batch: int = 1000) -> GibbsEnsemble:
    """Sample the Gibbs measure with Anderson GFF proposals.

    Parameters
    ----------
    mode : {"mh", "importance"}
        Independence Metropolis-Hastings with acceptance
        ``min(1, exp(V(current) − V(proposal)))``, or independent draws with
        importance weights attached.
    thin, burn_in : int
        Chain thinning and burn-in (default ``max(50, n_samples // 10)``).
    interacting : bool
        ``False`` sets ``V ≡ 0``.

    Raises
    ------
    DegenerateWeights
        If the effective sample size of the proposal pool falls below 5%.
    """
    if n_samples < 100:
        raise ValueError("n_samples must be at least 100")
    if mode not in ("mh", "importance"):
        raise ValueError(f"unknown mode {mode!r}")
    quad = mode_quadrature(s, m, n_modes)
    if mode == "importance":
        thin, burn_in = 1, 0
    elif burn_in is None:
        burn_in = max(50, n_samples // 10)
    total = burn_in + n_samples * thin

    def work(start, stop):
        c, u = proposals(s, seed_base, start, stop)
        v = potential(c, quad, variant, s.shift_K) if interacting else np.zeros(stop - start)
        return c, u, v

    parts = chunked_map(work, total, batch)
    coords = np.concatenate([p[0] for p in parts])
    unif = np.concatenate([p[1] for p in parts])
    V = np.concatenate([p[2] for p in parts])
    ess_pool = effective_sample_size(-V)
    ess = n_samples * ess_pool / total
    if ess < 0.05 * n_samples:
        raise DegenerateWeights(f"effective sample size {ess:.1f} below 5% of {n_samples}")
    if mode == "importance":
        return GibbsEnsemble(coords, V, -V, np.ones(total, bool), 1.0, ess, seed_base,
                             mode, variant, n_modes, s)
    state = 0
    accepted = np.zeros(total, bool)
    accepted[0] = True
    chain = np.empty(total, int)
    chain[0] = 0
    for i in range(1, total):
        if math.log(max(unif[i], 1e-300)) < V[state] - V[i]:
            state = i
            accepted[i] = True
        chain[i] = state
    keep = chain[burn_in::thin][:n_samples]
    rate = float(accepted[1:].mean())
    return GibbsEnsemble(coords[keep], V[keep], np.zeros(n_samples), accepted[burn_in::thin][:n_samples],
                         rate, ess, seed_base, mode, variant, n_modes, s)


def partition_estimate(s: SpectralData, m: Mollifier, n_modes: int, n_samples: int, seed_base: int,
                       variant: str = "quartic_only", batch: int = 1000) -> tuple[float, float]:
    """Plain Monte Carlo estimate of ``Z = E_μ[exp(−V)]`` and its standard error."""
    if n_samples < 2:
        raise ValueError("need at least two samples")
    if n_modes == 0:
        return 1.0, 0.0
    quad = mode_quadrature(s, m, n_modes)

    def work(start, stop):
        coords, _ = proposals(s, seed_base, start, stop)
        return np.exp(-potential(coords, quad, variant, s.shift_K))

    return weighted_mean(np.concatenate(chunked_map(work, n_samples, batch)))
