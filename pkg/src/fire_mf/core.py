"""Shared domain types: fidelity blocks, datasets, predictive summaries,
standardization, and the bi-level fidelity aggregation every algorithm
consumes."""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol, Sequence

import numpy as np

DEFAULT_QUANTILE_LEVELS = tuple(np.round(np.arange(1, 10) * 0.1, 10))


def _lock(a: np.ndarray) -> np.ndarray:
    """Own a read-only float copy so constructed types stay immutable."""
    out = np.array(a, dtype=float, copy=True)
    out.flags.writeable = False
    return out


@dataclass(frozen=True)
class FidelityBlock:
    """Observations of one information source: designs X and responses y."""

    t: int
    X: np.ndarray  # (n, d)
    y: np.ndarray  # (n,)

    def __post_init__(self):
        X = np.atleast_2d(np.asarray(self.X, dtype=float))
        y = np.asarray(self.y, dtype=float).ravel()
        if self.t < 1 or int(self.t) != self.t:
            raise ValueError(f"fidelity index must be a positive integer, got {self.t}")
        if X.shape[0] != y.shape[0]:
            raise ValueError(f"X has {X.shape[0]} rows but y has {y.shape[0]} entries")
        if X.shape[0] < 1:
            raise ValueError("fidelity block needs at least one observation")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("non-finite entries in fidelity block")
        object.__setattr__(self, "t", int(self.t))
        object.__setattr__(self, "X", _lock(X))
        object.__setattr__(self, "y", _lock(y))

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def d(self) -> int:
        return self.X.shape[1]


@dataclass(frozen=True)
class MultiFidelityDataset:
    """Ordered fidelity blocks with strictly increasing index; the highest
    index T is the prediction target level."""

    blocks: tuple[FidelityBlock, ...]
    enforce_imbalance: bool = False

    def __post_init__(self):
        blocks = tuple(self.blocks)
        if len(blocks) < 2:
            raise ValueError("need at least two fidelities")
        ts = [b.t for b in blocks]
        if any(b <= a for a, b in zip(ts, ts[1:])):
            raise ValueError(f"fidelity indices must be strictly increasing, got {ts}")
        dims = {b.d for b in blocks}
        if len(dims) != 1:
            raise ValueError(f"all blocks must share the input dimension, got {sorted(dims)}")
        if self.enforce_imbalance:
            ns = [b.n for b in blocks]
            if any(hi > lo for lo, hi in zip(ns, ns[1:])):
                raise ValueError(f"sample counts violate the imbalance regime: {ns}")
        object.__setattr__(self, "blocks", blocks)

    @property
    def T(self) -> int:
        return self.blocks[-1].t

    @property
    def d(self) -> int:
        return self.blocks[0].d

    def block(self, t: int) -> FidelityBlock:
        for b in self.blocks:
            if b.t == t:
                return b
        raise KeyError(f"no block with fidelity {t}")


@dataclass(frozen=True)
class QuantileLevels:
    """Probability levels at which surrogates report predictive quantiles."""

    levels: tuple[float, ...] = DEFAULT_QUANTILE_LEVELS

    def __post_init__(self):
        levels = tuple(float(v) for v in self.levels)
        if not levels:
            raise ValueError("need at least one quantile level")
        if any(not (0.0 < v < 1.0) for v in levels):
            raise ValueError(f"levels must lie in (0, 1), got {levels}")
        if any(b <= a for a, b in zip(levels, levels[1:])):
            raise ValueError(f"levels must be strictly increasing, got {levels}")
        object.__setattr__(self, "levels", levels)

    def __len__(self) -> int:
        return len(self.levels)

    def as_array(self) -> np.ndarray:
        return np.array(self.levels)


def enforce_quantile_monotonicity(quantiles: np.ndarray) -> np.ndarray:
    """Isotonic repair: sort each query's quantile vector ascending.

    Approximate backends may emit tiny crossings; downstream consumers
    require nondecreasing quantiles in the level.
    """
    q = np.atleast_2d(np.asarray(quantiles, dtype=float))
    return np.sort(q, axis=1)


@dataclass(frozen=True)
class PredictiveSummary:
    """Per-query predictive mean, variance, and quantile vector."""

    mean: np.ndarray  # (n,)
    variance: np.ndarray  # (n,)
    quantiles: np.ndarray  # (n, n_levels)
    levels: QuantileLevels = field(default_factory=QuantileLevels)

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=float).ravel()
        variance = np.asarray(self.variance, dtype=float).ravel()
        quantiles = enforce_quantile_monotonicity(self.quantiles)
        n = mean.shape[0]
        if variance.shape[0] != n or quantiles.shape[0] != n:
            raise ValueError("mean/variance/quantiles row counts disagree")
        if quantiles.shape[1] != len(self.levels):
            raise ValueError(
                f"{quantiles.shape[1]} quantile columns for {len(self.levels)} levels"
            )
        if np.any(variance < 0):
            raise ValueError("negative predictive variance")
        object.__setattr__(self, "mean", _lock(mean))
        object.__setattr__(self, "variance", _lock(variance))
        object.__setattr__(self, "quantiles", _lock(quantiles))

    def __len__(self) -> int:
        return self.mean.shape[0]


class Surrogate(Protocol):
    """Contract every probabilistic regressor in the system implements."""

    def fit(self, X: np.ndarray, y: np.ndarray) -> "Surrogate": ...

    def predict(self, X: np.ndarray, levels: QuantileLevels) -> PredictiveSummary: ...


@dataclass(frozen=True)
class Standardizer:
    """Affine map per column to zero mean / unit variance, with exact inverse.

    Zero-variance columns keep scale 1 so the transform stays invertible.
    """

    shift: np.ndarray
    scale: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "shift", _lock(np.atleast_1d(self.shift)))
        object.__setattr__(self, "scale", _lock(np.atleast_1d(self.scale)))
        if np.any(self.scale <= 0):
            raise ValueError("scale entries must be positive")

    @classmethod
    def fit(cls, values: np.ndarray) -> "Standardizer":
        v = np.asarray(values, dtype=float)
        axis = 0
        shift = v.mean(axis=axis)
        scale = v.std(axis=axis)  # population std
        scale = np.where(scale > 0, scale, 1.0)
        return cls(shift=np.atleast_1d(shift), scale=np.atleast_1d(scale))

    def apply(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if v.ndim == 1 and self.shift.shape[0] == 1:
            return (v - self.shift[0]) / self.scale[0]
        return (v - self.shift) / self.scale

    def invert(self, values: np.ndarray) -> np.ndarray:
        v = np.asarray(values, dtype=float)
        if v.ndim == 1 and self.shift.shape[0] == 1:
            return v * self.scale[0] + self.shift[0]
        return v * self.scale + self.shift

    def invert_variance(self, variance: np.ndarray) -> np.ndarray:
        """Variances transform by the squared output scale."""
        if self.shift.shape[0] != 1:
            raise ValueError("variance inversion is defined for scalar outputs")
        return np.asarray(variance, dtype=float) * self.scale[0] ** 2


@dataclass(frozen=True)
class TokenizedBlock:
    """A fidelity block whose design matrix carries the fidelity index as a
    trailing numeric feature column."""

    X: np.ndarray  # (n, d + 1); last column is the token
    y: np.ndarray  # (n,)

    def __post_init__(self):
        object.__setattr__(self, "X", _lock(np.atleast_2d(self.X)))
        object.__setattr__(self, "y", _lock(np.asarray(self.y, dtype=float).ravel()))
        if self.X.shape[0] != self.y.shape[0]:
            raise ValueError("X/y row counts disagree")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def tokens(self) -> np.ndarray:
        return self.X[:, -1]


def append_token(X: np.ndarray, token: float | np.ndarray) -> np.ndarray:
    """Append the fidelity token as a trailing feature column."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    col = np.broadcast_to(np.asarray(token, dtype=float), (X.shape[0],))
    return np.column_stack([X, col])


def aggregate_bilevel(data: MultiFidelityDataset) -> tuple[TokenizedBlock, TokenizedBlock]:
    """Collapse all fidelities below T into one token-tagged LF block and tag
    block T as the HF block.

    Row order within the LF block follows ascending fidelity, preserving each
    block's own row order, so every (x, y, t) triple of the input survives
    exactly once.
    """
    if len(data.blocks) < 2:
        raise ValueError("need at least two fidelities")
    lf_blocks = data.blocks[:-1]
    hf = data.blocks[-1]
    X_lf = np.vstack([append_token(b.X, b.t) for b in lf_blocks])
    y_lf = np.concatenate([b.y for b in lf_blocks])
    lf = TokenizedBlock(X=X_lf, y=y_lf)
    hf_tok = TokenizedBlock(X=append_token(hf.X, hf.t), y=hf.y)
    return lf, hf_tok


def load_dataset_csv(path: str | Path, enforce_imbalance: bool = False) -> MultiFidelityDataset:
    """Load the multi-fidelity CSV format: header `fidelity,x_1..x_d,y`.

    Rows with non-finite entries are rejected; `fidelity` must be a positive
    integer.
    """
    path = Path(path)
    with path.open(newline="", encoding="utf-8") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise ValueError(f"{path}: empty file") from None
        header = [h.strip() for h in header]
        if not header or header[0] != "fidelity" or header[-1] != "y":
            raise ValueError(
                f"{path}: header must be 'fidelity,x_1..x_d,y', got {header}"
            )
        d = len(header) - 2
        if d < 1:
            raise ValueError(f"{path}: no feature columns in header")
        rows_by_t: dict[int, list[list[float]]] = {}
        for lineno, row in enumerate(reader, start=2):
            if not row:
                continue
            if len(row) != d + 2:
                raise ValueError(f"{path}:{lineno}: expected {d + 2} fields, got {len(row)}")
            try:
                t_raw = float(row[0])
                values = [float(v) for v in row[1:]]
            except ValueError as exc:
                raise ValueError(f"{path}:{lineno}: {exc}") from None
            if t_raw < 1 or t_raw != int(t_raw):
                raise ValueError(f"{path}:{lineno}: fidelity must be a positive integer")
            if not all(np.isfinite(values)):
                raise ValueError(f"{path}:{lineno}: non-finite entry")
            rows_by_t.setdefault(int(t_raw), []).append(values)
    if not rows_by_t:
        raise ValueError(f"{path}: no data rows")
    blocks = []
    for t in sorted(rows_by_t):
        arr = np.array(rows_by_t[t])
        blocks.append(FidelityBlock(t=t, X=arr[:, :-1], y=arr[:, -1]))
    return MultiFidelityDataset(blocks=tuple(blocks), enforce_imbalance=enforce_imbalance)


def save_dataset_csv(data: MultiFidelityDataset, path: str | Path) -> None:
    """Write a dataset in the CSV wire format read by `load_dataset_csv`."""
    path = Path(path)
    header = ["fidelity"] + [f"x_{j}" for j in range(1, data.d + 1)] + ["y"]
    with path.open("w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(header)
        for b in data.blocks:
            for xi, yi in zip(b.X, b.y):
                writer.writerow([b.t, *(repr(float(v)) for v in xi), repr(float(yi))])
