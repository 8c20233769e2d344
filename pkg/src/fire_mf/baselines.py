"""Classical autoregressive GP baselines: scaled-discrepancy stacking, plain
residual stacking, and nonlinear input-propagation, each chained across
fidelity steps and tolerant of non-nested designs.

Cross-fidelity couplings are estimated against the lower stage's posterior
mean at the upper stage's inputs, never against co-located observations, so
disjoint designs need no data alignment.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from fire_mf.core import MultiFidelityDataset, QuantileLevels
from fire_mf.gp import GPSurrogate, KernelSpec


def _gp(spec: KernelSpec, budget: int, n_starts: int, seed: int) -> GPSurrogate:
    return GPSurrogate(spec=spec, budget=budget, n_starts=n_starts, seed=seed)


_LEVELS = QuantileLevels()


@dataclass(frozen=True)
class Ar1Stage:
    rho: float
    delta: GPSurrogate  # GP on the scaled discrepancy at this step


@dataclass(frozen=True)
class Ar1Model:
    first: GPSurrogate
    stages: tuple[Ar1Stage, ...]


def _chain_ar1(model_first: GPSurrogate, stages, X: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    s = model_first.predict(X, _LEVELS)
    mean, var = s.mean, s.variance
    for st in stages:
        ds = st.delta.predict(X, _LEVELS)
        mean = st.rho * mean + ds.mean
        var = st.rho**2 * var + ds.variance
    return mean, var


def ar1_fit(
    data: MultiFidelityDataset,
    spec: KernelSpec = KernelSpec(),
    budget: int = 200,
    n_starts: int = 5,
    seed: int = 0,
    fixed_rho: float | None = None,
) -> Ar1Model:
    """Per fidelity step: closed-form least-squares scale against the lower
    chain's posterior mean, then a GP on the remaining discrepancy."""
    first = _gp(spec, budget, n_starts, seed).fit(data.blocks[0].X, data.blocks[0].y)
    stages: list[Ar1Stage] = []
    for k, block in enumerate(data.blocks[1:], start=1):
        mu_prev, _ = _chain_ar1(first, stages, block.X)
        if fixed_rho is not None:
            rho = float(fixed_rho)
        else:
            denom = float(mu_prev @ mu_prev)
            if denom == 0.0:
                warnings.warn("lower-stage means are all zero; setting rho to 0")
                rho = 0.0
            else:
                rho = float(mu_prev @ block.y / denom)
        resid = block.y - rho * mu_prev
        delta = _gp(spec, budget, n_starts, seed + k).fit(block.X, resid)
        stages.append(Ar1Stage(rho=rho, delta=delta))
    return Ar1Model(first=first, stages=tuple(stages))


def ar1_predict(model: Ar1Model, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return _chain_ar1(model.first, model.stages, np.atleast_2d(Xq))


def resgp_fit(
    data: MultiFidelityDataset,
    spec: KernelSpec = KernelSpec(),
    budget: int = 200,
    n_starts: int = 5,
    seed: int = 0,
) -> Ar1Model:
    """Residual stacking: the scaled-discrepancy model with the scale pinned
    to one, so corrections condition solely on the lower-stage mean."""
    return ar1_fit(data, spec, budget, n_starts, seed, fixed_rho=1.0)


def resgp_predict(model: Ar1Model, Xq: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    return ar1_predict(model, Xq)


@dataclass(frozen=True)
class NargpModel:
    first: GPSurrogate
    stages: tuple[GPSurrogate, ...]  # stage t maps [x, m_{t-1}(x)] -> y_t
    mc_samples: int  # 0 -> deterministic mean propagation


def _chain_mean_det(first: GPSurrogate, stages, Xq: np.ndarray) -> np.ndarray:
    mean = first.predict(Xq, _LEVELS).mean
    for stage in stages:
        mean = stage.predict(np.column_stack([Xq, mean]), _LEVELS).mean
    return mean


def nargp_fit(
    data: MultiFidelityDataset,
    spec: KernelSpec = KernelSpec(),
    budget: int = 200,
    n_starts: int = 5,
    seed: int = 0,
    mc_samples: int = 0,
) -> NargpModel:
    """Each stage learns y_t from the inputs joined with the lower chain's
    posterior mean, giving a nonlinear cross-fidelity map of width d+1.
    Fitting always propagates the mean deterministically."""
    first = _gp(spec, budget, n_starts, seed).fit(data.blocks[0].X, data.blocks[0].y)
    stages: tuple[GPSurrogate, ...] = ()
    for k, block in enumerate(data.blocks[1:], start=1):
        m_prev = _chain_mean_det(first, stages, block.X)
        Z = np.column_stack([block.X, m_prev])
        stages = stages + (_gp(spec, budget, n_starts, seed + k).fit(Z, block.y),)
    return NargpModel(first=first, stages=stages, mc_samples=mc_samples)


def nargp_predict(
    model: NargpModel, Xq: np.ndarray, rng: np.random.Generator | None = None
) -> tuple[np.ndarray, np.ndarray]:
    """Default propagation feeds the lower mean deterministically into each
    stage; Monte-Carlo propagation samples the lower posterior and pools the
    stage moments by the law of total variance."""
    Xq = np.atleast_2d(Xq)
    s = model.first.predict(Xq, _LEVELS)
    mean, var = s.mean, s.variance
    use_mc = model.mc_samples > 0
    if use_mc and rng is None:
        rng = np.random.default_rng(0)
    for stage in model.stages:
        if not use_mc:
            su = stage.predict(np.column_stack([Xq, mean]), _LEVELS)
            mean, var = su.mean, su.variance
            continue
        S = model.mc_samples
        draws = mean[None, :] + np.sqrt(var)[None, :] * rng.standard_normal((S, Xq.shape[0]))
        means = np.empty((S, Xq.shape[0]))
        varis = np.empty((S, Xq.shape[0]))
        for i in range(S):
            su = stage.predict(np.column_stack([Xq, draws[i]]), _LEVELS)
            means[i], varis[i] = su.mean, su.variance
        mean = means.mean(axis=0)
        var = varis.mean(axis=0) + means.var(axis=0)
    return mean, var
