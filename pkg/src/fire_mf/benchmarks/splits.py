"""Imbalance split protocol: LF/HF budgets, nested vs disjoint designs,
and held-out test sets, all deterministic per (seed, fold)."""

from __future__ import annotations

from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from fire_mf.benchmarks.problems import ProblemSpec
from fire_mf.benchmarks.sampling import sample_lhs
from fire_mf.core import FidelityBlock, MultiFidelityDataset

STANDARD_RATIOS = (2.0, 4.0, 5.0, 10.0, 20.0, 25.0)


class TestSet(NamedTuple):
    X: np.ndarray
    y: np.ndarray


@dataclass(frozen=True)
class SplitPlan:
    """HF budget as a percentage of the first-fidelity budget, plus the split
    topology and seeding."""

    ratio: float  # percent of N_LF
    nested: bool = False
    fold: int = 0
    seed: int = 0
    n_lf: tuple[int, ...] | None = None  # per-fidelity override for N_1..N_{T-1}
    n_test: int | None = None

    def lf_sizes(self, problem: ProblemSpec) -> tuple[int, ...]:
        sizes = self.n_lf if self.n_lf is not None else problem.default_lf_sizes()
        if len(sizes) != problem.T - 1:
            raise ValueError(
                f"{problem.name}: expected {problem.T - 1} LF sizes, got {len(sizes)}"
            )
        return tuple(int(s) for s in sizes)

    def hf_size(self, problem: ProblemSpec) -> int:
        n1 = self.lf_sizes(problem)[0]
        n_hf = round(self.ratio / 100.0 * n1)
        if n_hf < 1:
            raise ValueError(f"ratio {self.ratio}% of N_LF={n1} yields no HF points")
        return n_hf

    def test_size(self, problem: ProblemSpec) -> int:
        if self.n_test is not None:
            return int(self.n_test)
        return self.lf_sizes(problem)[0] // 2


def _dedupe_against(
    X: np.ndarray, pool: np.ndarray, rng: np.random.Generator, bounds: np.ndarray
) -> np.ndarray:
    """Resample any row exactly colliding with the pool (or a duplicate within
    X); continuous LHS makes this a measure-zero event, handled for the
    determinism guarantees."""
    X = X.copy()
    seen = {tuple(row) for row in pool}
    for i in range(X.shape[0]):
        while tuple(X[i]) in seen:
            X[i] = bounds[:, 0] + rng.random(X.shape[1]) * (bounds[:, 1] - bounds[:, 0])
        seen.add(tuple(X[i]))
    return X


def make_splits(
    problem: ProblemSpec, plan: SplitPlan
) -> tuple[MultiFidelityDataset, TestSet]:
    """Build the training dataset and a fresh test set for one grid cell.

    Each lower fidelity gets its own Latin hypercube; the HF block is either
    a subsample of the first-fidelity design (nested) or a fresh design with
    exact collisions resampled (disjoint). Test points are always fresh.
    Heteroscedastic problems add their input-dependent noise to HF and test
    responses only.
    """
    ss = np.random.SeedSequence([int(plan.seed) & 0x7FFFFFFF, int(plan.fold)])
    keys = ["lf", "hf", "test", "noise", "dedupe"]
    rngs = dict(zip(keys, (np.random.default_rng(c) for c in ss.spawn(len(keys)))))

    lf_sizes = plan.lf_sizes(problem)
    n_hf = plan.hf_size(problem)
    n_test = plan.test_size(problem)
    d, bounds = problem.d, problem.bounds

    lf_designs = [sample_lhs(d, n, bounds, rngs["lf"]) for n in lf_sizes]
    if plan.nested:
        if n_hf > lf_designs[0].shape[0]:
            raise ValueError("nested HF budget exceeds the first-fidelity budget")
        idx = rngs["hf"].choice(lf_designs[0].shape[0], size=n_hf, replace=False)
        X_hf = lf_designs[0][np.sort(idx)]
    else:
        X_hf = sample_lhs(d, n_hf, bounds, rngs["hf"])
        X_hf = _dedupe_against(X_hf, np.vstack(lf_designs), rngs["dedupe"], bounds)
    X_test = sample_lhs(d, n_test, bounds, rngs["test"])

    blocks = []
    for t, X in enumerate(lf_designs, start=1):
        blocks.append(FidelityBlock(t=t, X=X, y=problem.evaluate_batch(X, t)))
    y_hf = problem.evaluate_batch(X_hf, problem.T)
    y_test = problem.evaluate_batch(X_test, problem.T)
    if problem.noise_sigma is not None:
        sig_hf = np.array([problem.noise_sigma(x) for x in X_hf])
        sig_test = np.array([problem.noise_sigma(x) for x in X_test])
        y_hf = y_hf + rngs["noise"].normal(size=n_hf) * sig_hf
        y_test = y_test + rngs["noise"].normal(size=n_test) * sig_test
    blocks.append(FidelityBlock(t=problem.T, X=X_hf, y=y_hf))

    data = MultiFidelityDataset(blocks=tuple(blocks))
    return data, TestSet(X=X_test, y=y_test)
