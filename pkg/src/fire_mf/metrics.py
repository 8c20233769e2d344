"""Per-trial metrics and cross-problem aggregation.

NRMSE / NLL / R^2 follow the range-normalized and Gaussian-density
conventions used throughout the multi-fidelity benchmarking literature.
Aggregation offers Bradley-Terry Elo with problem-level bootstrap CIs,
average rank, a best/median normalized score, and a pairwise win-rate
matrix.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy.stats import rankdata

NLL_VARIANCE_FLOOR = 1e-12
LOWER_IS_BETTER = {"nrmse": True, "nll": True, "r2": False}


def nrmse(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Root mean squared error divided by the true-value range."""
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    if y.shape != y_hat.shape or y.size < 1:
        raise ValueError("y and y_hat must be equal-length, nonempty")
    rng = y.max() - y.min()
    if rng <= 0:
        raise ValueError("degenerate range")
    return float(np.sqrt(np.mean((y - y_hat) ** 2)) / rng)


def nll(y: np.ndarray, y_hat: np.ndarray, sigma2: np.ndarray) -> float:
    """Mean Gaussian negative log density, 1/(2N) sum(ln(2 pi s2) + err^2/s2)."""
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    s2 = np.clip(np.asarray(sigma2, dtype=float).ravel(), NLL_VARIANCE_FLOOR, None)
    if not (y.shape == y_hat.shape and s2.shape in (y.shape, (1,))):
        raise ValueError("shape mismatch")
    s2 = np.broadcast_to(s2, y.shape)
    return float(np.mean(np.log(2.0 * math.pi * s2) + (y - y_hat) ** 2 / s2) / 2.0)


def r2(y: np.ndarray, y_hat: np.ndarray) -> float:
    """Coefficient of determination."""
    y = np.asarray(y, dtype=float).ravel()
    y_hat = np.asarray(y_hat, dtype=float).ravel()
    ss_tot = np.sum((y - y.mean()) ** 2)
    if ss_tot <= 0:
        raise ValueError("constant targets")
    return float(1.0 - np.sum((y - y_hat) ** 2) / ss_tot)


@dataclass(frozen=True)
class MetricRecord:
    problem: str
    ratio: float
    fold: int
    trial: int
    algorithm: str
    nrmse: float
    nll: float
    r2: float
    runtime_seconds: float

    def __post_init__(self):
        if self.nrmse < 0:
            raise ValueError("nrmse must be nonnegative")
        if self.r2 > 1 + 1e-12:
            raise ValueError("r2 cannot exceed 1")
        if self.runtime_seconds <= 0:
            raise ValueError("runtime must be positive")

    def value(self, metric: str) -> float:
        if metric not in LOWER_IS_BETTER:
            raise ValueError(f"unknown metric {metric!r}; choose from {sorted(LOWER_IS_BETTER)}")
        return float(getattr(self, metric))


def _units(records: Sequence[MetricRecord]) -> dict[tuple, dict[str, float]]:
    """Group records into comparable units keyed by (problem, ratio, fold, trial)."""
    units: dict[tuple, dict[str, float]] = {}
    for rec in records:
        key = (rec.problem, rec.ratio, rec.fold, rec.trial)
        units.setdefault(key, {})[rec.algorithm] = rec
    return units


def _cells(records: Sequence[MetricRecord]) -> dict[tuple, dict[str, list[MetricRecord]]]:
    """Group records into (problem, ratio) cells."""
    cells: dict[tuple, dict[str, list[MetricRecord]]] = {}
    for rec in records:
        cell = cells.setdefault((rec.problem, rec.ratio), {})
        cell.setdefault(rec.algorithm, []).append(rec)
    return cells


def _oriented(value: float, metric: str) -> float:
    """Flip sign for higher-is-better metrics so that lower always wins."""
    return value if LOWER_IS_BETTER.get(metric, True) else -value


def _win_matrix(
    records: Sequence[MetricRecord], metric: str, algorithms: Sequence[str]
) -> np.ndarray:
    """Fractional pairwise win counts; better metric wins, ties split 0.5."""
    index = {a: i for i, a in enumerate(algorithms)}
    W = np.zeros((len(algorithms), len(algorithms)))
    for unit in _units(records).values():
        present = [a for a in unit if a in index]
        for i, a in enumerate(present):
            va = _oriented(unit[a].value(metric), metric)
            for b in present[i + 1 :]:
                vb = _oriented(unit[b].value(metric), metric)
                ia, ib = index[a], index[b]
                if va < vb:
                    W[ia, ib] += 1.0
                elif vb < va:
                    W[ib, ia] += 1.0
                else:
                    W[ia, ib] += 0.5
                    W[ib, ia] += 0.5
    return W


def _bradley_terry(W: np.ndarray, regularization: float = 0.01, max_iter: int = 5000) -> np.ndarray:
    """Minorization-maximization fit of log-strengths from a win matrix.

    A small pseudo-win in both directions of every contested pair keeps the
    MLE finite for perfect records.
    """
    W = W.copy()
    contested = (W + W.T) > 0
    W[contested] += regularization
    wins = W.sum(axis=1)
    p = np.ones(W.shape[0])
    N = W + W.T
    for _ in range(max_iter):
        denom = np.where(N > 0, N / (p[:, None] + p[None, :]), 0.0).sum(axis=1)
        p_new = np.where(denom > 0, wins / np.where(denom > 0, denom, 1.0), p)
        p_new /= p_new.sum()
        if np.max(np.abs(p_new - p)) < 1e-14:
            p = p_new
            break
        p = p_new
    return np.log(p)


@dataclass(frozen=True)
class EloResult:
    ratings: dict[str, float]
    ci_low: dict[str, float]
    ci_high: dict[str, float]
    anchor_algorithm: str
    anchor_value: float
    bootstrap_rounds: int


def _theta_to_elo(theta: np.ndarray, algorithms: Sequence[str], anchor: tuple[str, float]) -> dict[str, float]:
    anchor_alg, anchor_val = anchor
    i0 = list(algorithms).index(anchor_alg)
    return {
        a: anchor_val + 400.0 * (theta[i] - theta[i0]) / math.log(10.0)
        for i, a in enumerate(algorithms)
    }


def elo_ratings(
    records: Sequence[MetricRecord],
    metric: str,
    anchor: tuple[str, float] = ("resgp", 1000.0),
    bootstrap_rounds: int = 100,
    seed: int = 0,
    regularization: float = 0.01,
) -> EloResult:
    """Bradley-Terry strengths on the Elo scale, anchored to one algorithm.

    Pairwise outcomes are formed per (problem, ratio, fold, trial); the
    bootstrap resamples problems. A 400-point gap corresponds to 10:1 odds.
    """
    records = list(records)
    if not records:
        raise ValueError("no records")
    algorithms = sorted({r.algorithm for r in records})
    if len(algorithms) < 2:
        raise ValueError("need at least two algorithms")

    W = _win_matrix(records, metric, algorithms)
    active = (W + W.T).sum(axis=1) > 0
    dropped = [a for a, keep in zip(algorithms, active) if not keep]
    if dropped:
        warnings.warn(f"excluding algorithms with no comparisons: {dropped}")
        algorithms = [a for a, keep in zip(algorithms, active) if keep]
        W = _win_matrix(records, metric, algorithms)
    anchor_alg, anchor_val = anchor
    if anchor_alg not in algorithms:
        raise ValueError(f"anchor algorithm {anchor_alg!r} has no comparisons")

    theta = _bradley_terry(W, regularization)
    ratings = _theta_to_elo(theta, algorithms, (anchor_alg, anchor_val))

    problems = sorted({r.problem for r in records})
    by_problem = {p: [r for r in records if r.problem == p] for p in problems}
    rng = np.random.default_rng(seed)
    samples: dict[str, list[float]] = {a: [] for a in algorithms}
    rounds_done = 0
    for _ in range(bootstrap_rounds):
        chosen = rng.choice(problems, size=len(problems), replace=True)
        boot = [r for p in chosen for r in by_problem[p]]
        boot_algs = sorted({r.algorithm for r in boot})
        if anchor_alg not in boot_algs or len(boot_algs) < 2:
            continue
        Wb = _win_matrix(boot, metric, boot_algs)
        keep = (Wb + Wb.T).sum(axis=1) > 0
        boot_algs = [a for a, k in zip(boot_algs, keep) if k]
        if anchor_alg not in boot_algs:
            continue
        Wb = _win_matrix(boot, metric, boot_algs)
        eb = _theta_to_elo(_bradley_terry(Wb, regularization), boot_algs, (anchor_alg, anchor_val))
        for a, v in eb.items():
            if a in samples:
                samples[a].append(v)
        rounds_done += 1

    ci_low, ci_high = {}, {}
    for a in algorithms:
        vals = samples[a]
        if vals:
            ci_low[a] = float(np.percentile(vals, 2.5))
            ci_high[a] = float(np.percentile(vals, 97.5))
        else:
            ci_low[a] = ci_high[a] = ratings[a]
    return EloResult(
        ratings=ratings,
        ci_low=ci_low,
        ci_high=ci_high,
        anchor_algorithm=anchor_alg,
        anchor_value=anchor_val,
        bootstrap_rounds=rounds_done,
    )


def average_rank(records: Sequence[MetricRecord], metric: str) -> dict[str, float]:
    """Mean rank over (problem, ratio) cells of each cell's mean metric.

    Cells missing any algorithm are skipped with a warning; ties share the
    average rank.
    """
    records = list(records)
    algorithms = sorted({r.algorithm for r in records})
    lower = LOWER_IS_BETTER[metric] if metric in LOWER_IS_BETTER else True
    ranks: dict[str, list[float]] = {a: [] for a in algorithms}
    skipped = 0
    for key, cell in sorted(_cells(records).items()):
        if set(cell) != set(algorithms):
            skipped += 1
            continue
        means = np.array([np.mean([r.value(metric) for r in cell[a]]) for a in algorithms])
        cell_ranks = rankdata(means if lower else -means, method="average")
        for a, rk in zip(algorithms, cell_ranks):
            ranks[a].append(float(rk))
    if skipped:
        warnings.warn(f"average_rank skipped {skipped} incomplete cells")
    return {a: float(np.mean(v)) for a, v in ranks.items() if v}


def normalized_score(records: Sequence[MetricRecord], metric: str) -> dict[str, float]:
    """Per cell the best algorithm scores 1 and the median scores 0, linear
    in between, floored at -1; cell scores are then averaged."""
    records = list(records)
    algorithms = sorted({r.algorithm for r in records})
    lower = LOWER_IS_BETTER[metric] if metric in LOWER_IS_BETTER else True
    scores: dict[str, list[float]] = {a: [] for a in algorithms}
    for key, cell in sorted(_cells(records).items()):
        present = sorted(cell)
        if len(present) < 2:
            continue
        means = np.array([np.mean([r.value(metric) for r in cell[a]]) for a in present])
        v = means if lower else -means
        best = v.min()
        med = float(np.median(v))
        if med == best:
            cell_scores = np.where(v == best, 0.0, -1.0)
        else:
            cell_scores = np.maximum(-1.0, (med - v) / (med - best))
        for a, s in zip(present, cell_scores):
            scores[a].append(float(s))
    return {a: float(np.mean(v)) for a, v in scores.items() if v}


def win_rate_matrix(
    records: Sequence[MetricRecord], metric: str
) -> tuple[list[str], np.ndarray]:
    """Entry (i, j): fraction of comparable units where i beats j; ties 0.5;
    diagonal 0.5 by convention."""
    records = list(records)
    algorithms = sorted({r.algorithm for r in records})
    if len(algorithms) < 2:
        raise ValueError("need at least two algorithms")
    lower = LOWER_IS_BETTER[metric] if metric in LOWER_IS_BETTER else True
    k = len(algorithms)
    wins = np.zeros((k, k))
    counts = np.zeros((k, k))
    index = {a: i for i, a in enumerate(algorithms)}
    for unit in _units(records).values():
        present = sorted(unit)
        for i, a in enumerate(present):
            va = unit[a].value(metric)
            for b in present[i + 1 :]:
                vb = unit[b].value(metric)
                ia, ib = index[a], index[b]
                sa = va if lower else -va
                sb = vb if lower else -vb
                outcome = 1.0 if sa < sb else (0.0 if sb < sa else 0.5)
                wins[ia, ib] += outcome
                wins[ib, ia] += 1.0 - outcome
                counts[ia, ib] += 1
                counts[ib, ia] += 1
    with np.errstate(invalid="ignore"):
        rates = np.where(counts > 0, wins / np.where(counts > 0, counts, 1.0), np.nan)
    np.fill_diagonal(rates, 0.5)
    return algorithms, rates
