"""Model adapters: a uniform fit/summarize surface over the predictive
distribution of the wrapped regressor.

The TabPFN adapter extracts mean and variance from the model's full
predictive distribution when the installed version exposes it, and falls
back to a documented moment approximation over the predicted quantiles
otherwise. A deterministic Gaussian least-squares stub exists purely so the
protocol layer can be tested without model weights.
"""

from __future__ import annotations

from typing import Protocol, Sequence

import numpy as np

# Dense grid used when the variance must be approximated from quantiles.
_VARIANCE_GRID = np.linspace(0.05, 0.95, 19)


class ModelUnavailable(RuntimeError):
    """The backing model cannot be constructed or loaded; fatal by contract."""


class ModelAdapter(Protocol):
    def fit(self, X: np.ndarray, y: np.ndarray) -> None: ...

    def summarize(
        self, X: np.ndarray, levels: Sequence[float]
    ) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (mean, variance, quantiles[n, len(levels)])."""
        ...


def variance_from_quantiles(levels: np.ndarray, quantiles: np.ndarray, mean: np.ndarray) -> np.ndarray:
    """Moment approximation Var[Y] ~ integral of (Q(u) - mean)^2 du.

    The quantile function is treated as piecewise constant on the equal-mass
    bands around the requested levels; tails outside the outermost levels
    are clamped to the edge quantiles, so heavy tails are underestimated.
    """
    levels = np.asarray(levels, dtype=float)
    edges = np.concatenate([[0.0], (levels[:-1] + levels[1:]) / 2.0, [1.0]])
    weights = np.diff(edges)
    dev = (quantiles - mean[:, None]) ** 2
    return dev @ weights


class TabPFNAdapter:
    """Wraps a TabPFN-family regressor checkpoint.

    The model performs in-context learning only: `fit` registers the context
    set (no weight updates) and `summarize` queries the predictive
    distribution.
    """

    def __init__(self, model_id: str | None = None, device: str = "cpu", seed: int = 0):
        try:
            from tabpfn import TabPFNRegressor
        except ImportError as exc:
            raise ModelUnavailable(
                "the tabpfn package is not installed; install the sidecar "
                "with the [tabpfn] extra to use the real model backend"
            ) from exc
        kwargs = {"device": device, "random_state": seed}
        if model_id:
            kwargs["model_path"] = model_id
        try:
            self._regressor = TabPFNRegressor(**kwargs)
        except Exception as exc:
            raise ModelUnavailable(f"cannot construct the regressor: {exc}") from exc
        self._fitted = False

    def fit(self, X: np.ndarray, y: np.ndarray) -> None:
        self._regressor.fit(X, y)
        self._fitted = True

    def summarize(self, X, levels):
        if not self._fitted:
            raise RuntimeError("predict before fit")
        levels = np.asarray(levels, dtype=float)
        mean = np.asarray(self._regressor.predict(X), dtype=float).ravel()
        qs = self._predict_quantiles(X, levels)
        variance = self._predict_variance(X, mean)
        return mean, variance, qs

    def _predict_quantiles(self, X, levels: np.ndarray) -> np.ndarray:
        out = self._regressor.predict(X, output_type="quantiles", quantiles=list(levels))
        qs = np.stack([np.asarray(col, dtype=float).ravel() for col in out], axis=1)
        return np.sort(qs, axis=1)

    def _predict_variance(self, X, mean: np.ndarray) -> np.ndarray:
        try:
            full = self._regressor.predict(X, output_type="full")
            criterion = full["criterion"]
            logits = full["logits"]
            variance = criterion.variance(logits)
            return np.clip(np.asarray(variance, dtype=float).ravel(), 0.0, None)
        except Exception:
            qs = self._predict_quantiles(X, _VARIANCE_GRID)
            return np.clip(variance_from_quantiles(_VARIANCE_GRID, qs, mean), 1e-12, None)


class GaussianStubAdapter:
    """Deterministic linear least-squares model with a Gaussian predictive
    band. Protocol-testing double only; it is not a foundation model."""

    def __init__(self, seed: int = 0):
        self._beta: np.ndarray | None = None
        self._sigma2: float = 1.0

    def fit(self, X: np.ndarray, y: np.ndarray) -> None:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        y = np.asarray(y, dtype=float).ravel()
        A = np.column_stack([X, np.ones(X.shape[0])])
        beta, *_ = np.linalg.lstsq(A, y, rcond=None)
        resid = y - A @ beta
        self._beta = beta
        self._sigma2 = float(max(np.mean(resid**2), 1e-8))

    def summarize(self, X, levels):
        if self._beta is None:
            raise RuntimeError("predict before fit")
        X = np.atleast_2d(np.asarray(X, dtype=float))
        A = np.column_stack([X, np.ones(X.shape[0])])
        mean = A @ self._beta
        variance = np.full(X.shape[0], self._sigma2)
        z = _gaussian_icdf(np.asarray(levels, dtype=float))
        quantiles = mean[:, None] + np.sqrt(self._sigma2) * z[None, :]
        return mean, variance, quantiles


def _gaussian_icdf(p: np.ndarray) -> np.ndarray:
    """Acklam's rational approximation of the standard normal inverse CDF
    (error below 1.2e-9), avoiding heavier dependencies."""
    a = [-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
         1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00]
    b = [-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
         6.680131188771972e01, -1.328068155288572e01]
    c = [-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
         -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00]
    d = [7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
         3.754408661907416e00]
    p = np.asarray(p, dtype=float)
    out = np.empty_like(p)
    p_low, p_high = 0.02425, 1 - 0.02425

    low = p < p_low
    central = (p >= p_low) & (p <= p_high)
    high = p > p_high

    if np.any(low):
        q = np.sqrt(-2 * np.log(p[low]))
        out[low] = (((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1
        )
    if np.any(central):
        q = p[central] - 0.5
        r = q * q
        out[central] = (
            (((((a[0] * r + a[1]) * r + a[2]) * r + a[3]) * r + a[4]) * r + a[5]) * q
        ) / (((((b[0] * r + b[1]) * r + b[2]) * r + b[3]) * r + b[4]) * r + 1)
    if np.any(high):
        q = np.sqrt(-2 * np.log(1 - p[high]))
        out[high] = -(((((c[0] * q + c[1]) * q + c[2]) * q + c[3]) * q + c[4]) * q + c[5]) / (
            (((d[0] * q + d[1]) * q + d[2]) * q + d[3]) * q + 1
        )
    return out


def load_adapter(backend: str, model_id: str | None, device: str, seed: int) -> ModelAdapter:
    if backend == "tabpfn":
        return TabPFNAdapter(model_id=model_id, device=device, seed=seed)
    if backend == "stub":
        return GaussianStubAdapter(seed=seed)
    raise ValueError(f"unknown backend {backend!r}; choose tabpfn or stub")
