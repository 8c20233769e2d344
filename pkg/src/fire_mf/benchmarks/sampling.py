"""Latin hypercube sampling."""

from __future__ import annotations

import numpy as np


def sample_lhs(
    d: int,
    n: int,
    bounds: np.ndarray | None = None,
    seed: int | np.random.Generator = 0,
) -> np.ndarray:
    """Latin hypercube design: one point per of the n equal strata in every
    dimension, uniform within each stratum. Deterministic per seed."""
    if n < 1:
        raise ValueError("need at least one sample")
    rng = seed if isinstance(seed, np.random.Generator) else np.random.default_rng(seed)
    u = (rng.random((n, d)) + np.array([rng.permutation(n) for _ in range(d)]).T) / n
    if bounds is None:
        return u
    b = np.asarray(bounds, dtype=float).reshape(d, 2)
    if np.any(b[:, 1] <= b[:, 0]):
        raise ValueError("upper bounds must exceed lower bounds")
    return b[:, 0] + u * (b[:, 1] - b[:, 0])
