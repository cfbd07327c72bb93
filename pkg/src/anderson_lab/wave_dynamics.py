"""Wave dynamics in the eigenbasis of the shifted Anderson operator.

States are eigen-coordinates ``(u_n, ∂ₜu_n)``. The Galerkin system is

    ∂ₜ²u_n + ω_n² u_n = −∫ (w³ − a w)(ρ_ε ∗ f_n) dx,    n ≤ N,
    w = ρ_ε ∗ P_{≤N} u,  a = 3σ²,  ω_n² = λ_n + K + 1,

with the modes above ``N`` evolving linearly. It is Hamiltonian with energy
``½|∂ₜu|² + ½Σω_n²u_n² + ¼∫(w⁴ − 2a w² + a²/3)``. All array arguments may
carry leading batch axes.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field as dc_field

import numpy as np

from .anderson_operator import SpectralData
from .errors import BlowupDetected, ConfigError, NoContraction
from .gaussian_fields import basis_wick_constant
from .gibbs_measure import VARIANTS, ModeQuadrature, mode_quadrature
from .rng import stream
from .spectral_core import (
    Mollifier,
    SpectralField,
    TorusGrid,
    besov_norm_coeffs,
    forward_transform,
    sobolev_norm_coeffs,
)

BLOWUP_LEVEL = 1e8


@dataclass(frozen=True)
class PhasePoint:
    """Wave state in eigen-coordinates; ``u`` and ``ut`` share their shape."""

    u: np.ndarray
    ut: np.ndarray
    time: float = 0.0

    def __post_init__(self):
        u = np.asarray(self.u, float)
        ut = np.asarray(self.ut, float)
        if u.shape != ut.shape:
            raise ValueError("u and ut must have the same shape")
        object.__setattr__(self, "u", u)
        object.__setattr__(self, "ut", ut)

    @classmethod
    def zeros(cls, size: int) -> "PhasePoint":
        return cls(np.zeros(size), np.zeros(size))


def sample_initial_data(s: SpectralData, seed: int, index: int = 0) -> PhasePoint:
    """Gaussian initial data: Anderson GFF position, white-noise velocity."""
    g = stream(seed, index).standard_normal(2 * s.size)
    return PhasePoint(g[: s.size] / np.sqrt(s.shifted), g[s.size:])


def sample_initial_batch(s: SpectralData, seed: int, start: int, stop: int) -> PhasePoint:
    pts = [sample_initial_data(s, seed, i) for i in range(start, stop)]
    return PhasePoint(np.stack([p.u for p in pts]), np.stack([p.ut for p in pts]))


def linear_propagate(p: PhasePoint, t: float, s: SpectralData) -> PhasePoint:
    """Exact rotation of every mode by ``t``."""
    w = s.frequencies
    c, sn = np.cos(w * t), np.sin(w * t)
    return PhasePoint(c * p.u + sn / w * p.ut, -w * sn * p.u + c * p.ut, p.time + t)


@dataclass(frozen=True, eq=False)
class FlowConfig:
    """Parameters of a Galerkin flow.

    Attributes
    ----------
    profile : ndarray
        Counterterm ``a(x) = 3σ²(x)`` at the quadrature points.
    nonlinear : bool
        ``False`` turns the flow into the linear rotation.
    sign : float
        ``+1`` defocusing, ``−1`` focusing.
    variant : str
        Gibbs normalization whose interaction is the potential energy;
        ``"quartic_plus_K"`` adds ``−(K/2)∫(w² − σ²)``.
    """

    S: SpectralData
    N: int
    m: Mollifier
    dt: float
    T: float
    quad: ModeQuadrature
    profile: np.ndarray
    wick_reference: str = "agff"
    nonlinear: bool = True
    sign: float = 1.0
    splitting_order: int = 2
    variant: str = "quartic_only"
    _cache: dict = dc_field(default_factory=dict, repr=False, compare=False)

    @property
    def n_steps(self) -> int:
        return int(round(self.T / self.dt))


def max_stable_dt(s: SpectralData, n_modes: int) -> float:
    """``0.5/ω_N``, the step that resolves the fastest interacting mode."""
    return 0.5 / math.sqrt(s.shifted[max(n_modes, 1) - 1])


def flow_config(s: SpectralData, n_modes: int, m: Mollifier, dt: float, T: float,
                wick_reference: str = "agff", nonlinear: bool = True,
                focusing: bool = False, check_dt: bool = True,
                variant: str = "quartic_only") -> FlowConfig:
    """Validate parameters and precompute the quadrature and counterterm profile."""
    if not 0 <= n_modes <= s.size:
        raise ConfigError(f"N={n_modes} must lie in [0, {s.size}]", "galerkin_N")
    if not dt > 0:
        raise ConfigError("dt must be positive", "dt")
    if check_dt and n_modes > 0 and dt > max_stable_dt(s, n_modes) * (1 + 1e-12):
        raise ConfigError(f"dt={dt} exceeds 0.5/sqrt(lambda_N+K+1)={max_stable_dt(s, n_modes):.4g}", "dt")
    quad = mode_quadrature(s, m, n_modes)
    if wick_reference == "agff":
        profile = 3.0 * quad.sigma2
    elif wick_reference == "gff":
        profile = np.full_like(quad.sigma2, 3.0 * basis_wick_constant(m, s))
    else:
        raise ConfigError(f"unknown wick reference {wick_reference!r}", "wick_reference")
    if variant not in VARIANTS:
        raise ConfigError(f"unknown variant {variant!r}", "variant")
    return FlowConfig(s, n_modes, m, dt, T, quad, profile, wick_reference, nonlinear,
                      -1.0 if focusing else 1.0, variant=variant)


def _linear_shift(cfg: FlowConfig) -> float:
    return cfg.S.shift_K if cfg.variant == "quartic_plus_K" else 0.0


def _force_coords(u: np.ndarray, cfg: FlowConfig) -> np.ndarray:
    """Force on the first ``N`` coordinates, shape (..., N)."""
    w = cfg.quad.field_values(u)
    return -cfg.quad.project(cfg.sign * (w * w * w - cfg.profile * w) - _linear_shift(cfg) * w)


def wick_cubic_force(p: PhasePoint, cfg: FlowConfig) -> np.ndarray:
    """``−P_{≤N}(ρ_ε ∗ [w³ − a w])`` as eigen-coordinates (zero above ``N``)."""
    out = np.zeros_like(p.u)
    if cfg.N and cfg.nonlinear:
        out[..., : cfg.N] = _force_coords(p.u, cfg)
    return out


def potential_energy(u: np.ndarray, cfg: FlowConfig) -> np.ndarray:
    w = cfg.quad.field_values(u)
    w2 = w * w
    a = cfg.profile
    quartic = cfg.sign * 0.25 * cfg.quad.integrate(w2 * w2 - 2.0 * a * w2 + a * a / 3.0)
    return quartic - 0.5 * _linear_shift(cfg) * cfg.quad.integrate(w2 - cfg.quad.sigma2)


def hamiltonian_energy(p: PhasePoint, cfg: FlowConfig) -> np.ndarray:
    """Energy whose gradient reproduces :func:`wick_cubic_force`."""
    kin = 0.5 * np.sum(p.ut ** 2, axis=-1)
    lin = 0.5 * np.sum(cfg.S.shifted * p.u ** 2, axis=-1)
    pot = potential_energy(p.u, cfg) if (cfg.N and cfg.nonlinear) else 0.0
    return kin + lin + pot


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Recorded states of a flow.

    ``u`` and ``ut`` have shape ``(n_records, ..., M)``; ``blown_up`` flags
    ensemble members that crossed the amplitude bound (frozen afterwards) and
    ``blowup_times`` records when.
    """

    times: np.ndarray
    u: np.ndarray
    ut: np.ndarray
    blown_up: np.ndarray
    blowup_times: np.ndarray

    def points(self) -> list[PhasePoint]:
        return [PhasePoint(a, b, float(t)) for t, a, b in zip(self.times, self.u, self.ut)]

    @property
    def final(self) -> PhasePoint:
        return PhasePoint(self.u[-1], self.ut[-1], float(self.times[-1]))


def galerkin_flow(p: PhasePoint, cfg: FlowConfig, record_every: int | None = 1,
                  n_steps: int | None = None, on_blowup: str = "raise") -> Trajectory:
    """Strang splitting: half rotation, nonlinear kick, half rotation.

    Parameters
    ----------
    record_every : int or None
        Stride of recorded steps; ``None`` keeps only the initial and final
        states.
    on_blowup : {"raise", "flag"}
        Raise :class:`BlowupDetected`, or flag the offending ensemble members
        and stop evolving them.
    """
    steps = cfg.n_steps if n_steps is None else n_steps
    w = cfg.S.frequencies
    h = 0.5 * cfg.dt
    c, sn = np.cos(w * h), np.sin(w * h)
    u, ut = p.u.copy(), p.ut.copy()
    batch_shape = u.shape[:-1]
    blown = np.zeros(batch_shape, bool)
    tblow = np.full(batch_shape, np.nan)
    times, us, uts = [p.time], [u.copy()], [ut.copy()]
    kick = cfg.N > 0 and cfg.nonlinear
    for i in range(1, steps + 1):
        u, ut = c * u + sn / w * ut, -w * sn * u + c * ut
        if kick:
            ut[..., : cfg.N] += cfg.dt * _force_coords(u, cfg)
        u, ut = c * u + sn / w * ut, -w * sn * u + c * ut
        t = p.time + i * cfg.dt
        size = np.max(np.abs(u), axis=-1)
        bad = ~(size <= BLOWUP_LEVEL) & ~blown
        if np.any(bad):
            if on_blowup == "raise":
                raise BlowupDetected(f"amplitude exceeded {BLOWUP_LEVEL:g} at t={t:.6g}", t)
            blown |= bad
            tblow[bad] = t
            u[blown] = 0.0
            ut[blown] = 0.0
        if (record_every and i % record_every == 0) or i == steps:
            times.append(t)
            us.append(u.copy())
            uts.append(ut.copy())
    return Trajectory(np.array(times), np.stack(us), np.stack(uts), blown, tblow)


def theta_coords(initial: PhasePoint, s: SpectralData, times) -> np.ndarray:
    """Eigen-coordinates of the linear evolution at each time, shape (T, ..., M)."""
    return np.stack([linear_propagate(initial, float(t), s).u for t in times])


def theta_path(initial: PhasePoint, s: SpectralData, times) -> list[SpectralField]:
    """Linear evolution ``θ(t)`` as grid fields."""
    return [s.to_field(s.synthesize(c), "theta") for c in theta_coords(initial, s, times)]


# --------------------------------------------------------------------------
# local theory


def local_time_estimate(theta_norms, p: int) -> float:
    """``T = (1/(10R²))^{p/(p−1)}`` with ``R = 1 + Σ norms``, clamped to (0, 1)."""
    norms = [float(x) for x in theta_norms]
    if any(x < 0 for x in norms) or p < 2:
        raise ValueError("norms must be non-negative and p >= 2")
    r = 1.0 + sum(norms)
    t = (1.0 / (10.0 * r * r)) ** (p / (p - 1.0))
    return min(max(t, np.nextafter(0.0, 1.0)), np.nextafter(1.0, 0.0))


def _quad_grid(cfg: FlowConfig) -> TorusGrid:
    return TorusGrid(cfg.quad.size)


def _quad_coeffs(values: np.ndarray, size: int) -> np.ndarray:
    return forward_transform(values.reshape(values.shape[:-1] + (size, size)))


def theta_norms(theta: np.ndarray, cfg: FlowConfig, times: np.ndarray, p: int = 10,
                delta: float = 0.1) -> tuple[float, float, float]:
    """Norm record ``(‖θ^{∘3}‖^{1/3}, ‖θ^{∘2}‖^{1/2}, ‖θ‖)`` on a time grid.

    ``‖θ^{∘3}‖`` is in ``L^p_t H^{−δ}``, ``‖θ^{∘2}‖`` in ``L^p_t C^{−δ}`` and
    ``‖θ‖`` in ``L^∞_t C^{−δ}``, where ``θ`` means ``ρ_ε ∗ P_{≤N}θ`` and Wick
    powers use the flow's counterterm profile. ``L^p_t`` norms are Riemann
    sums over ``times``.
    """
    grid = _quad_grid(cfg)
    w = cfg.quad.field_values(theta)
    s2 = cfg.profile / 3.0
    c1 = _quad_coeffs(w, grid.n)
    c2 = _quad_coeffs(w * w - s2, grid.n)
    c3 = _quad_coeffs(w ** 3 - 3.0 * s2 * w, grid.n)
    n3 = sobolev_norm_coeffs(c3, grid.ksq, -delta)
    n2 = besov_norm_coeffs(c2, -delta, np.inf, np.inf)
    n1 = besov_norm_coeffs(c1, -delta, np.inf, np.inf)
    times = np.asarray(times, float)
    if len(times) < 2:
        raise ValueError("need at least two time points")
    steps = np.diff(times)

    def lp(x):
        # left Riemann sum over the time grid
        return float(np.sum(steps * x[:-1] ** p) ** (1.0 / p))

    return lp(n3) ** (1.0 / 3.0), lp(n2) ** 0.5, float(np.max(n1))


@dataclass(frozen=True)
class DPDResult:
    """Remainder ``v`` of ``u = θ + v`` on the time grid.

    ``v`` holds eigen-coordinates of the first ``N`` modes, shape (n_t, N).
    ``ratios`` are successive increment ratios of the Picard iteration.
    """

    times: np.ndarray
    v: np.ndarray
    iterations: int
    increments: tuple
    ratios: tuple
    residual: float

    @property
    def contraction(self) -> float:
        return max(self.ratios) if self.ratios else 0.0


def hs_matrix(s: SpectralData, n_modes: int, power: float) -> np.ndarray:
    """Rows map eigen-coordinates to ``H^power``-weighted Fourier coefficients."""
    w = np.sqrt((1.0 + s.basis_ksq) ** power)
    return (w[:, None] * s.eigenvectors[:, :n_modes]).T


def dpd_local_solve(theta, cfg: FlowConfig, T: float, tol: float = 1e-9, max_iter: int = 200,
                    delta: float = 0.1) -> DPDResult:
    """Picard iteration for the remainder of the Da Prato-Debussche split.

    Solves ``v(t) = ∫₀ᵗ sin(ω(t−s))/ω · F(θ+v)(s) ds`` on the grid ``t_i = i·dt``,
    ``F`` being the Galerkin force, with the trapezoidal rule in ``s``.
    ``F(θ+v)`` expands to the Wick terms ``θ^{∘3} + 3vθ^{∘2} + 3v²θ + v³``.

    Parameters
    ----------
    theta : array (n_t, M) or list of PhasePoint
        Linear evolution at ``t_i = i·dt``, ``i = 0 … round(T/dt)``.

    Raises
    ------
    NoContraction
        If the increment ratio reaches one before convergence.
    """
    if isinstance(theta, (list, tuple)) and theta and isinstance(theta[0], PhasePoint):
        theta = np.stack([p.u for p in theta])
    theta = np.asarray(theta, float)
    steps = int(round(T / cfg.dt))
    if theta.shape[0] < steps + 1:
        raise ValueError("theta must cover the time grid up to T")
    theta = theta[: steps + 1]
    times = np.arange(steps + 1) * cfg.dt
    n = cfg.N
    omega = cfg.S.frequencies[:n]
    cos_t = np.cos(np.outer(times, omega))
    sin_t = np.sin(np.outer(times, omega))
    norm_mat = hs_matrix(cfg.S, n, 1.0 - delta)
    w_theta = cfg.quad.field_values(theta)
    v = np.zeros((steps + 1, n))
    increments, ratios = [], []

    def picard(v):
        if not cfg.nonlinear or n == 0:
            return np.zeros_like(v)
        w = w_theta + v @ cfg.quad.values
        force = -cfg.quad.project(cfg.sign * (w * w * w - cfg.profile * w) - _linear_shift(cfg) * w)
        gc, gs = cos_t * force, sin_t * force
        half = 0.5 * cfg.dt
        cum_c = np.concatenate([np.zeros((1, n)), np.cumsum(half * (gc[1:] + gc[:-1]), axis=0)])
        cum_s = np.concatenate([np.zeros((1, n)), np.cumsum(half * (gs[1:] + gs[:-1]), axis=0)])
        return (sin_t * cum_c - cos_t * cum_s) / omega

    for it in range(1, max_iter + 1):
        new = picard(v)
        inc = float(np.max(np.linalg.norm((new - v) @ norm_mat, axis=1)))
        size = float(np.max(np.linalg.norm(new @ norm_mat, axis=1)))
        v = new
        rel = inc / size if size > 0 else 0.0
        if increments and increments[-1] > 0:
            ratios.append(inc / increments[-1])
        increments.append(inc)
        if rel < tol:
            resid = float(np.max(np.linalg.norm((picard(v) - v) @ norm_mat, axis=1)))
            return DPDResult(times, v, it, tuple(increments), tuple(ratios), resid)
        if ratios and ratios[-1] >= 1.0:
            raise NoContraction(f"Picard increment ratio {ratios[-1]:.3g} >= 1 at iteration {it}")
    raise NoContraction(f"no convergence within {max_iter} iterations")
