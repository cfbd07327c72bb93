"""Flat JSON run configuration with range checks and cross-field diagnostics."""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import asdict, dataclass, fields, replace
from pathlib import Path

import numpy as np

from .errors import ConfigError

EXPERIMENTS = (
    "sample-noise", "build-operator", "spectrum", "sample-fields", "couple", "wick", "gibbs",
    "evolve", "local-solve", "invariance", "tails", "converge",
)


@dataclass(frozen=True)
class RunConfig:
    """Effective parameters of one run.

    Attributes
    ----------
    grid : int
        Points per dimension of the noise grid.
    k_max : int
        Fourier disk radius of the operator basis; needs ``2·k_max ≤ grid/2 − 1``.
    epsilon : float
        Mollifier scale; ``0`` disables mollification.
    galerkin_N : int
        Number of interacting eigenmodes.
    mass_K : float
        Mass of the flat Gaussian free field.
    dt, T : float
        Step and horizon of the wave flow.
    t_evolve : float
        Evolution time in the invariance experiment.
    gibbs_variant : {"quartic_only", "quartic_plus_K"}
    mollifier : {"gaussian", "sharp"}
    wick_reference : {"agff", "gff"}
    sampler : {"importance", "mh"}
    """

    grid: int = 64
    k_max: int = 12
    epsilon: float = 0.2
    galerkin_N: int = 30
    mass_K: float = 1.0
    dt: float = 0.01
    T: float = 0.5
    t_evolve: float = 0.5
    n_samples: int = 2000
    seed: int = 2024
    experiment: str = "invariance"
    outdir: str = "runs"
    gibbs_variant: str = "quartic_only"
    mollifier: str = "gaussian"
    wick_reference: str = "agff"
    sampler: str = "importance"
    wick_order: int = 2
    counterterm: bool = True
    zero_noise: bool = False
    interacting: bool = True
    focusing: bool = False
    p: int = 10
    delta: float = 0.1

    def to_dict(self) -> dict:
        return asdict(self)

    def hash(self) -> str:
        """Short content hash of the canonical JSON form (``outdir`` excluded)."""
        d = self.to_dict()
        d.pop("outdir")
        blob = json.dumps(d, sort_keys=True, separators=(",", ":")).encode()
        return hashlib.sha256(blob).hexdigest()[:12]


_CHOICES = {
    "experiment": EXPERIMENTS,
    "gibbs_variant": ("quartic_only", "quartic_plus_K"),
    "mollifier": ("gaussian", "sharp"),
    "wick_reference": ("agff", "gff"),
    "sampler": ("importance", "mh"),
}

_RANGES = {
    "grid": (8, 1024),
    "k_max": (1, 64),
    "epsilon": (0.0, 10.0),
    "galerkin_N": (0, 100_000),
    "mass_K": (1e-12, 1e6),
    "dt": (1e-12, 1.0),
    "T": (0.0, 1e4),
    "t_evolve": (0.0, 1e4),
    "n_samples": (1, 10**8),
    "seed": (0, 2**64 - 1),
    "wick_order": (1, 8),
    "p": (2, 1000),
    "delta": (0.0, 1.0),
}

_FIELDS = {f.name: f for f in fields(RunConfig)}


def _coerce(key: str, value):
    if key not in _FIELDS:
        raise ConfigError(f"unknown configuration key {key!r}", key)
    kind = type(getattr(RunConfig(), key))
    if kind is bool:
        if isinstance(value, bool):
            return value
        if isinstance(value, str) and value.lower() in ("true", "1", "yes", "false", "0", "no"):
            return value.lower() in ("true", "1", "yes")
        raise ConfigError(f"{key} must be a boolean, got {value!r}", key)
    try:
        if kind is int:
            if isinstance(value, float) and not value.is_integer():
                raise ValueError
            return int(value)
        if kind is float:
            return float(value)
    except (TypeError, ValueError):
        raise ConfigError(f"{key} must be {kind.__name__}, got {value!r}", key) from None
    return str(value)


def check(cfg: RunConfig) -> RunConfig:
    """Raise :class:`ConfigError` naming the first field outside its range."""
    for key, (lo, hi) in _RANGES.items():
        v = getattr(cfg, key)
        if not (lo <= v <= hi) or (isinstance(v, float) and not math.isfinite(v)):
            raise ConfigError(f"{key}={v!r} outside [{lo}, {hi}]", key)
    for key, allowed in _CHOICES.items():
        if getattr(cfg, key) not in allowed:
            raise ConfigError(f"{key}={getattr(cfg, key)!r} not in {allowed}", key)
    return cfg


def from_dict(d: dict, base: RunConfig | None = None) -> RunConfig:
    updates = {k: _coerce(k, v) for k, v in d.items()}
    return check(replace(base or RunConfig(), **updates))


def parse_override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise ConfigError(f"override {text!r} must look like key=value", text)
    key, value = text.split("=", 1)
    return key.strip(), value.strip()


def load(path=None, overrides=(), defaults: dict | None = None, **explicit) -> RunConfig:
    """Merge ``defaults``, file values, ``key=value`` overrides and explicit values, in that order."""
    d = dict(defaults or {})
    if path is not None:
        try:
            filed = json.loads(Path(path).read_text(encoding="utf-8"))
        except OSError as exc:
            raise ConfigError(f"{path}: cannot read ({exc})", "config") from exc
        except json.JSONDecodeError as exc:
            raise ConfigError(f"{path}: invalid JSON ({exc})", "config") from exc
        if not isinstance(filed, dict):
            raise ConfigError(f"{path}: top level must be an object", "config")
        d.update(filed)
    for item in overrides:
        k, v = parse_override(item)
        d[k] = v
    d.update({k: v for k, v in explicit.items() if v is not None})
    return from_dict(d)


def free_max_dt(k_max: int, n_modes: int, mass: float = 1.0) -> float:
    """Step rule ``0.5/√(μ_N)`` with the free Laplacian as proxy for the spectrum."""
    if n_modes <= 0:
        return math.inf
    ksq = np.sort(_disk(k_max))
    n = min(n_modes, len(ksq))
    return 0.5 / math.sqrt(float(ksq[n - 1]) + mass)


def validate(cfg: RunConfig | dict | str | Path) -> list[str]:
    """Diagnostics for a configuration, one string per violated rule.

    Checks key names and ranges, the dealiasing rule ``2·k_max ≤ grid/2 − 1``
    and the step rule ``dt ≤ 0.5/√(λ_N + K + 1)`` using free eigenvalues.
    """
    out = []
    if isinstance(cfg, (str, Path)):
        try:
            cfg = json.loads(Path(cfg).read_text(encoding="utf-8"))
        except (OSError, json.JSONDecodeError) as exc:
            return [f"config: cannot read ({exc})"]
    if isinstance(cfg, dict):
        good = {}
        for k, v in cfg.items():
            try:
                good[k] = _coerce(k, v)
            except ConfigError as exc:
                out.append(f"{exc.key}: {exc}")
        try:
            cfg = replace(RunConfig(), **good)
        except TypeError as exc:
            return out + [f"config: {exc}"]
    try:
        check(cfg)
    except ConfigError as exc:
        out.append(f"{exc.key}: {exc}")
    if 2 * cfg.k_max > cfg.grid // 2 - 1:
        out.append(f"k_max: dealiasing rule 2*k_max <= grid/2 - 1 violated "
                   f"(k_max={cfg.k_max}, grid={cfg.grid})")
    n_basis = len(_disk(cfg.k_max))
    if cfg.galerkin_N > n_basis:
        out.append(f"galerkin_N: {cfg.galerkin_N} exceeds the {n_basis} basis modes of k_max={cfg.k_max}")
    limit = free_max_dt(cfg.k_max, cfg.galerkin_N)
    if cfg.dt > limit:
        out.append(f"dt: stability rule dt <= 0.5/sqrt(lambda_N+K+1) violated "
                   f"(dt={cfg.dt}, limit {limit:.4g} from free eigenvalues)")
    return out


def _disk(k_max: int) -> np.ndarray:
    k = np.arange(-k_max, k_max + 1)
    ksq = k[:, None] ** 2 + k[None, :] ** 2
    return ksq[ksq <= k_max ** 2]
