"""Counter-based random streams.

Every random draw in the package goes through :func:`stream`, which keys a
Philox generator by ``(seed, index)``. Sample ``i`` of a run with seed ``s``
therefore depends on nothing but ``(s, i)``, so ensembles can be generated in
any order or split over any number of workers without changing results.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1


def stream(seed: int, index: int = 0) -> np.random.Generator:
    """Return the generator for sample ``index`` of the run keyed by ``seed``.

    Parameters
    ----------
    seed : int
        64-bit run seed. Larger values are reduced modulo 2**64.
    index : int
        Non-negative sample counter.
    """
    if index < 0:
        raise ValueError("stream index must be non-negative")
    key = (int(seed) & _MASK64) | ((int(index) & _MASK64) << 64)
    return np.random.Generator(np.random.Philox(key=key))


def derive_seed(seed: int, *labels: int) -> int:
    """Mix integer labels into a seed, for independent sub-experiments."""
    ss = np.random.SeedSequence([int(seed) & _MASK64, *[int(v) & _MASK64 for v in labels]])
    return int(ss.generate_state(1, dtype=np.uint64)[0])
