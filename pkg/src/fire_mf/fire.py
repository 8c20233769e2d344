"""Two-stage residual learning with distributional feature augmentation.

A base surrogate is fit on the token-tagged union of all lower fidelities,
its predictive distribution at the high-fidelity inputs is appended to the
features, and a second surrogate learns the residual on that augmented
space. Prediction adds the stage means and, assuming uncorrelated stage
errors, the stage variances.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Literal, NamedTuple

import numpy as np
from scipy.stats import norm

from fire_mf.core import (
    MultiFidelityDataset,
    PredictiveSummary,
    QuantileLevels,
    Surrogate,
    TokenizedBlock,
    aggregate_bilevel,
    append_token,
)

AugmentationMode = Literal["full", "mean_variance", "mean_only", "none"]
AUGMENTATION_MODES = ("full", "mean_variance", "mean_only", "none")

SurrogateFactory = Callable[[], Surrogate]


class FireStageError(RuntimeError):
    """Surrogate failure wrapped with the stage ('base' or 'residual') it hit."""

    def __init__(self, stage: str, cause: Exception):
        super().__init__(
            f"surrogate fit failed in {stage} stage: {type(cause).__name__}: {cause}"
        )
        self.stage = stage


def appended_width(mode: AugmentationMode, levels: QuantileLevels) -> int:
    """Number of feature columns the augmentation block adds."""
    return {"full": 2 + len(levels), "mean_variance": 2, "mean_only": 1, "none": 0}[mode]


def build_augmented_features(
    X_tok: np.ndarray, summary: PredictiveSummary, mode: AugmentationMode
) -> np.ndarray:
    """Column order is fixed: [x.., token, mean, variance, quantiles asc]."""
    if mode not in AUGMENTATION_MODES:
        raise ValueError(f"unknown augmentation mode {mode!r}")
    X_tok = np.atleast_2d(np.asarray(X_tok, dtype=float))
    if mode != "none" and X_tok.shape[0] != len(summary):
        raise ValueError("summary rows do not align with feature rows")
    cols = [X_tok]
    if mode in ("full", "mean_variance", "mean_only"):
        cols.append(summary.mean[:, None])
    if mode in ("full", "mean_variance"):
        cols.append(summary.variance[:, None])
    if mode == "full":
        cols.append(summary.quantiles)
    return np.hstack(cols)


@dataclass
class _ConstantSurrogate:
    """Fallback residual model when only a single correction point exists."""

    mean_value: float
    variance_value: float

    def fit(self, X: np.ndarray, y: np.ndarray) -> "_ConstantSurrogate":
        return self

    def predict(self, X: np.ndarray, levels: QuantileLevels = QuantileLevels()) -> PredictiveSummary:
        n = np.atleast_2d(X).shape[0]
        mean = np.full(n, self.mean_value)
        var = np.full(n, max(self.variance_value, 0.0))
        q = mean[:, None] + np.sqrt(var)[:, None] * norm.ppf(levels.as_array())[None, :]
        return PredictiveSummary(mean=mean, variance=var, quantiles=q, levels=levels)


@dataclass(frozen=True)
class FireModel:
    """Fitted base + residual pair with the augmentation configuration."""

    base: Surrogate
    residual: Surrogate
    mode: AugmentationMode
    levels: QuantileLevels
    token: float  # fidelity token the residual stage was trained with

    @property
    def residual_input_dim_offset(self) -> int:
        return appended_width(self.mode, self.levels)


class FireDiagnostics(NamedTuple):
    base: PredictiveSummary
    residual: PredictiveSummary


class FirePrediction(NamedTuple):
    y_hat: np.ndarray
    sigma2_hat: np.ndarray
    diagnostics: FireDiagnostics


def _fit_stage(stage: str, surrogate: Surrogate, X: np.ndarray, y: np.ndarray) -> Surrogate:
    try:
        surrogate.fit(X, y)
    except Exception as exc:
        raise FireStageError(stage, exc) from exc
    return surrogate


def _fit_residual_stage(
    factory: SurrogateFactory,
    Z: np.ndarray,
    r: np.ndarray,
    base_summary: PredictiveSummary,
    levels: QuantileLevels,
) -> Surrogate:
    if r.shape[0] == 1:
        # A 1-point fit is ill-posed; pin the correction to the observed
        # residual and reuse the base variance at that point.
        return _ConstantSurrogate(float(r[0]), float(base_summary.variance[0]))
    return _fit_stage("residual", factory(), Z, r)


def fire_fit(
    data: MultiFidelityDataset,
    surrogate_factory: SurrogateFactory,
    mode: AugmentationMode = "full",
    levels: QuantileLevels = QuantileLevels(),
    residual_factory: SurrogateFactory | None = None,
) -> FireModel:
    """Fit the bi-level model: base on aggregated LF, residual on the
    distribution-augmented HF features."""
    lf, hf = aggregate_bilevel(data)
    base = _fit_stage("base", surrogate_factory(), lf.X, lf.y)
    base_at_hf = base.predict(hf.X, levels)
    Z = build_augmented_features(hf.X, base_at_hf, mode)
    r = hf.y - base_at_hf.mean
    res_factory = residual_factory if residual_factory is not None else surrogate_factory
    residual = _fit_residual_stage(res_factory, Z, r, base_at_hf, levels)
    return FireModel(base=base, residual=residual, mode=mode, levels=levels, token=float(data.T))


def fire_predict(model: FireModel, Xq: np.ndarray) -> FirePrediction:
    """Additive prediction: means sum, variances sum (uncorrelated stages)."""
    Xq_tok = append_token(Xq, model.token)
    base_summary = model.base.predict(Xq_tok, model.levels)
    Zq = build_augmented_features(Xq_tok, base_summary, model.mode)
    res_summary = model.residual.predict(Zq, model.levels)
    y_hat = base_summary.mean + res_summary.mean
    sigma2_hat = base_summary.variance + res_summary.variance
    return FirePrediction(y_hat, sigma2_hat, FireDiagnostics(base_summary, res_summary))


@dataclass(frozen=True)
class RecursiveFireModel:
    """Base plus one residual stage per fidelity step."""

    base: Surrogate
    stages: tuple[Surrogate, ...]
    stage_tokens: tuple[float, ...]  # token used when fitting each residual stage
    mode: AugmentationMode
    levels: QuantileLevels


def _gaussian_summary(mean: np.ndarray, var: np.ndarray, levels: QuantileLevels) -> PredictiveSummary:
    sd = np.sqrt(np.clip(var, 0.0, None))
    q = mean[:, None] + sd[:, None] * norm.ppf(levels.as_array())[None, :]
    return PredictiveSummary(mean=mean, variance=np.clip(var, 0.0, None), quantiles=q, levels=levels)


def _chain_summary(
    base: Surrogate,
    stages: tuple[Surrogate, ...],
    mode: AugmentationMode,
    levels: QuantileLevels,
    X_tok: np.ndarray,
) -> PredictiveSummary:
    """Telescoped mean and pooled variance of base plus the given stages.

    Intermediate quantiles are reconstructed from the running Gaussian
    moments; stage predictive marginals are Gaussian for the GP backend.
    """
    s = base.predict(X_tok, levels)
    mean, var = s.mean.copy(), s.variance.copy()
    for stage in stages:
        running = _gaussian_summary(mean, var, levels)
        Z = build_augmented_features(X_tok, running, mode)
        corr = stage.predict(Z, levels)
        mean = mean + corr.mean
        var = var + corr.variance
    return _gaussian_summary(mean, var, levels)


def fire_fit_recursive(
    data: MultiFidelityDataset,
    surrogate_factory: SurrogateFactory,
    mode: AugmentationMode = "full",
    levels: QuantileLevels = QuantileLevels(),
) -> RecursiveFireModel:
    """Chain variant: one residual stage per fidelity step t -> t+1.

    For two fidelities this reduces to the bi-level fit.
    """
    if len(data.blocks) < 2:
        raise ValueError("need at least two fidelities")
    first = data.blocks[0]
    base = _fit_stage("base", surrogate_factory(), append_token(first.X, first.t), first.y)
    stages: list[Surrogate] = []
    tokens: list[float] = []
    for target in data.blocks[1:]:
        X_tok = append_token(target.X, target.t)
        chain = _chain_summary(base, tuple(stages), mode, levels, X_tok)
        Z = build_augmented_features(X_tok, chain, mode)
        r = target.y - chain.mean
        stages.append(_fit_residual_stage(surrogate_factory, Z, r, chain, levels))
        tokens.append(float(target.t))
    return RecursiveFireModel(
        base=base, stages=tuple(stages), stage_tokens=tuple(tokens), mode=mode, levels=levels
    )


def fire_predict_recursive(model: RecursiveFireModel, Xq: np.ndarray) -> FirePrediction:
    """Telescoped prediction at the highest fidelity."""
    X_tok = append_token(Xq, model.stage_tokens[-1])
    base_summary = model.base.predict(X_tok, model.levels)
    mean, var = base_summary.mean.copy(), base_summary.variance.copy()
    last = base_summary
    for stage in model.stages:
        running = _gaussian_summary(mean, var, model.levels)
        Z = build_augmented_features(X_tok, running, model.mode)
        last = stage.predict(Z, model.levels)
        mean = mean + last.mean
        var = var + last.variance
    return FirePrediction(mean, var, FireDiagnostics(base_summary, last))
