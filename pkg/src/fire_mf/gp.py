"""Exact Gaussian-process regressor implementing the surrogate contract.

Fitting maximizes the log marginal likelihood over log-hyperparameters with
a multi-start L-BFGS search under a fixed total iteration budget. Prediction
returns exact posterior marginals plus Gaussian-ICDF quantiles.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Literal

import numpy as np
from scipy.linalg import cho_solve, cholesky, solve_triangular
from scipy.linalg.lapack import dpotri
from scipy.optimize import minimize
from scipy.stats import norm
from threadpoolctl import threadpool_limits

from fire_mf.core import PredictiveSummary, QuantileLevels, Standardizer

# Hyperparameter bounds (standardized data space).
LENGTHSCALE_BOUNDS = (1e-3, 1e3)
SIGNAL_VARIANCE_BOUNDS = (1e-4, 1e4)
NOISE_VARIANCE_BOUNDS = (1e-8, 1e1)

JITTER_START = 1e-6
JITTER_MAX = 1e-2

# Random restarts are drawn from this window rather than the full bounds:
# a start with any near-zero ARD lengthscale has a numerically flat
# likelihood and never escapes, which starves high-dimensional fits.
START_WINDOW = {
    "lengthscale": (5e-2, 2e1),
    "signal_variance": (1e-1, 1e1),
    "noise_variance": (1e-6, 1e-1),
}

# Weakly-informative log-normal hyperpriors (standardized data space), used
# by the default penalized fit. Without the noise prior, small noisy
# datasets routinely collapse the fitted noise to the floor and the
# posterior interpolates noise; the mainstream GP stacks regularize the
# same way.
PRIOR_LOG_LENGTHSCALE_SD = 1.5  # location grows with sqrt(input dimension)
PRIOR_LOG_SIGNAL = (0.0, 1.0)
PRIOR_LOG_NOISE = (-4.0, 1.0)

_clamp_counter = {"count": 0}


def negative_variance_clamp_count() -> int:
    """How many predictive variances were clamped up to zero so far."""
    return _clamp_counter["count"]


@dataclass(frozen=True)
class KernelSpec:
    family: Literal["matern52", "squared-exponential"] = "matern52"
    ard: bool = True

    def __post_init__(self):
        if self.family not in ("matern52", "squared-exponential"):
            raise ValueError(f"unknown kernel family {self.family!r}")

    def n_lengthscales(self, d: int) -> int:
        return d if self.ard else 1


@dataclass(frozen=True)
class GPHyperparams:
    signal_variance: float
    lengthscales: np.ndarray
    noise_variance: float

    def __post_init__(self):
        ls = np.atleast_1d(np.asarray(self.lengthscales, dtype=float))
        if self.signal_variance <= 0 or self.noise_variance <= 0 or np.any(ls <= 0):
            raise ValueError("hyperparameters must be strictly positive")
        ls = ls.copy()
        ls.flags.writeable = False
        object.__setattr__(self, "lengthscales", ls)
        object.__setattr__(self, "signal_variance", float(self.signal_variance))
        object.__setattr__(self, "noise_variance", float(self.noise_variance))


def _scaled_sqdist(X1: np.ndarray, X2: np.ndarray, lengthscales: np.ndarray) -> np.ndarray:
    A = X1 / lengthscales
    B = X2 / lengthscales
    sq = (A * A).sum(axis=1)[:, None] + (B * B).sum(axis=1)[None, :] - 2.0 * A @ B.T
    return np.clip(sq, 0.0, None)


def kernel_matrix(
    spec: KernelSpec, hyper: GPHyperparams, X1: np.ndarray, X2: np.ndarray
) -> np.ndarray:
    """Cross-covariance matrix k(X1, X2) without observation noise."""
    ls = np.broadcast_to(hyper.lengthscales, (X1.shape[1],))
    sq = _scaled_sqdist(X1, X2, ls)
    if spec.family == "squared-exponential":
        return hyper.signal_variance * np.exp(-0.5 * sq)
    r = np.sqrt(sq)
    s5r = math.sqrt(5.0) * r
    return hyper.signal_variance * (1.0 + s5r + (5.0 / 3.0) * sq) * np.exp(-s5r)


def kernel_eval(spec: KernelSpec, hyper: GPHyperparams, x: np.ndarray, x2: np.ndarray) -> float:
    """Pointwise kernel value k(x, x')."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    x2 = np.atleast_2d(np.asarray(x2, dtype=float))
    if x.shape[1] != x2.shape[1]:
        raise ValueError("kernel inputs have mismatched dimension")
    return float(kernel_matrix(spec, hyper, x, x2)[0, 0])


def _chol_with_jitter(K: np.ndarray, noise_variance: float) -> tuple[np.ndarray, float]:
    """Lower Cholesky of K + (noise + jitter) I, escalating jitter on failure."""
    n = K.shape[0]
    jitter = 0.0
    while True:
        try:
            L = cholesky(K + (noise_variance + jitter) * np.eye(n), lower=True)
            return L, jitter
        except np.linalg.LinAlgError:
            jitter = JITTER_START if jitter == 0.0 else jitter * 10.0
            if jitter > JITTER_MAX:
                raise np.linalg.LinAlgError("covariance not positive definite") from None


def log_marginal_likelihood(
    X: np.ndarray, y: np.ndarray, spec: KernelSpec, hyper: GPHyperparams
) -> float:
    """-1/2 y^T K_n^{-1} y - 1/2 log|K_n| - (n/2) log 2*pi, K_n = K + noise*I."""
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    K = kernel_matrix(spec, hyper, X, X)
    L, _ = _chol_with_jitter(K, hyper.noise_variance)
    alpha = cho_solve((L, True), y)
    n = y.shape[0]
    return float(
        -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2.0 * math.pi)
    )


def _lml_value_and_grad(
    z: np.ndarray, X: np.ndarray, y: np.ndarray, spec: KernelSpec
) -> tuple[float, np.ndarray]:
    """Negative LML and its gradient w.r.t. z = log([lengthscales, sf2, sn2]).

    The per-lengthscale trace terms sum M_nm (x_nj - x_mj)^2 are expanded
    into matrix products so no (d, n, n) intermediate is formed.
    """
    n, d = X.shape
    m = spec.n_lengthscales(d)
    ls = np.exp(z[:m])
    sf2 = math.exp(z[m])
    sn2 = math.exp(z[m + 1])
    ls_full = np.broadcast_to(ls, (d,))

    sq = _scaled_sqdist(X, X, ls_full)
    if spec.family == "squared-exponential":
        Kk = sf2 * np.exp(-0.5 * sq)
        dK_dsq = -0.5 * Kk
    else:
        r = np.sqrt(sq)
        s5r = math.sqrt(5.0) * r
        e = np.exp(-s5r)
        Kk = sf2 * (1.0 + s5r + (5.0 / 3.0) * sq) * e
        dK_dsq = -(5.0 / 6.0) * sf2 * (1.0 + s5r) * e

    Kn = Kk + sn2 * np.eye(n)
    try:
        L = cholesky(Kn, lower=True)
    except np.linalg.LinAlgError:
        return np.inf, np.zeros_like(z)

    alpha = cho_solve((L, True), y)
    lml = -0.5 * y @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2.0 * math.pi)

    Kinv, info = dpotri(L, lower=1)
    if info != 0:
        return np.inf, np.zeros_like(z)
    Kinv = Kinv + np.tril(Kinv, -1).T
    A = np.outer(alpha, alpha) - Kinv  # dLML/dtheta = 0.5 tr(A dK/dtheta)

    grad = np.empty_like(z)
    M = A * dK_dsq
    if spec.ard:
        # sum_nm M_nm (x_nj-x_mj)^2 = (rs+cs)@X_j^2 - 2 X_j^T M X_j per dim
        rs = M.sum(axis=1)
        cs = M.sum(axis=0)
        Xsq = X * X
        cross = np.einsum("nj,nj->j", X, M @ X)
        diff_sums = Xsq.T @ rs + Xsq.T @ cs - 2.0 * cross
        grad[:m] = -diff_sums / ls_full**2
    else:
        grad[0] = -np.sum(M * sq)  # d(sq)/dlog(l) = -2*sq for a shared scale
    grad[m] = 0.5 * np.sum(A * Kk)
    grad[m + 1] = 0.5 * sn2 * np.trace(A)
    return -lml, -grad


@dataclass(frozen=True)
class FittedGP:
    """Immutable fitted state: hyperparameters, Cholesky factor, and the
    standardizers mapping raw data to the internal space."""

    spec: KernelSpec
    hyper: GPHyperparams
    X: np.ndarray  # standardized training inputs
    y: np.ndarray  # standardized training targets
    L: np.ndarray  # lower Cholesky of K + (noise + jitter) I
    alpha: np.ndarray
    x_std: Standardizer
    y_std: Standardizer
    jitter: float
    lml: float

    def __post_init__(self):
        for name in ("X", "y", "L", "alpha"):
            arr = np.asarray(getattr(self, name), dtype=float)
            arr = arr.copy()
            arr.flags.writeable = False
            object.__setattr__(self, name, arr)


def _draw_starts(
    rng: np.random.Generator, m: int, n_starts: int
) -> list[np.ndarray]:
    """One canonical start plus log-uniform draws from the start window."""
    starts = [np.concatenate([np.zeros(m), [0.0], [math.log(1e-2)]])]
    lo = np.log(
        np.array([START_WINDOW["lengthscale"][0]] * m
                 + [START_WINDOW["signal_variance"][0], START_WINDOW["noise_variance"][0]])
    )
    hi = np.log(
        np.array([START_WINDOW["lengthscale"][1]] * m
                 + [START_WINDOW["signal_variance"][1], START_WINDOW["noise_variance"][1]])
    )
    for _ in range(n_starts - 1):
        starts.append(rng.uniform(lo, hi))
    return starts


def _prior_params(m: int, d: int, pinned: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Means/scales of the Gaussian penalty on z = log hyperparameters."""
    mu = np.concatenate([np.full(m, 0.5 * math.log(max(d, 1))), [PRIOR_LOG_SIGNAL[0]], [PRIOR_LOG_NOISE[0]]])
    sd = np.concatenate([np.full(m, PRIOR_LOG_LENGTHSCALE_SD), [PRIOR_LOG_SIGNAL[1]], [PRIOR_LOG_NOISE[1]]])
    sd[:m][pinned] = np.inf  # pinned dimensions carry no prior penalty
    return mu, sd


def gp_fit(
    X: np.ndarray,
    y: np.ndarray,
    spec: KernelSpec = KernelSpec(),
    budget: int = 200,
    n_starts: int = 5,
    seed: int = 0,
    priors: bool = True,
) -> FittedGP:
    """Fit hyperparameters by multi-start gradient ascent.

    The default objective is the log marginal likelihood penalized by the
    weakly-informative log-normal hyperpriors above (the behavior of the
    standard GP libraries); `priors=False` gives the unpenalized maximum
    likelihood fit. `budget` is the total optimizer iteration count split
    across starts. Deterministic for a fixed seed.
    """
    X = np.atleast_2d(np.asarray(X, dtype=float))
    y = np.asarray(y, dtype=float).ravel()
    if X.shape[0] != y.shape[0]:
        raise ValueError("X/y row counts disagree")
    if X.shape[0] < 1:
        raise ValueError("need at least one observation")
    if not (np.isfinite(X).all() and np.isfinite(y).all()):
        raise ValueError("non-finite training data")

    x_std = Standardizer.fit(X)
    y_std = Standardizer.fit(y[:, None])
    Xs = x_std.apply(X)
    ys = y_std.apply(y[:, None]).ravel()

    n, d = Xs.shape
    m = spec.n_lengthscales(d)
    bounds = (
        [tuple(np.log(LENGTHSCALE_BOUNDS))] * m
        + [tuple(np.log(SIGNAL_VARIANCE_BOUNDS))]
        + [tuple(np.log(NOISE_VARIANCE_BOUNDS))]
    )
    # A column that is constant in training (e.g. a fidelity token shared by
    # every row) leaves its ARD lengthscale without likelihood gradient; pin
    # it at the upper bound so queries at unseen column values are not
    # shrunk by an arbitrary unoptimized scale.
    pinned = np.zeros(m, dtype=bool)
    if spec.ard:
        pinned = Xs.std(axis=0) == 0.0
        for j in np.nonzero(pinned)[0]:
            bounds[j] = (math.log(LENGTHSCALE_BOUNDS[1]),) * 2
    rng = np.random.default_rng(seed)
    starts = _draw_starts(rng, m, n_starts)
    for z0 in starts:
        z0[:m][pinned] = math.log(LENGTHSCALE_BOUNDS[1])
    maxiter = max(1, budget // len(starts))

    if priors:
        p_mu, p_sd = _prior_params(m, d, pinned)

        def objective(z, *args):
            val, grad = _lml_value_and_grad(z, *args)
            if not np.isfinite(val):
                return val, grad
            resid = (z - p_mu) / p_sd
            return val + 0.5 * float(resid @ resid), grad + resid / p_sd
    else:
        objective = _lml_value_and_grad

    best_z, best_val = None, np.inf
    # Threaded BLAS spin-waits dominate these small factorizations; each
    # fit is contractually single-threaded, parallelism lives above.
    with threadpool_limits(limits=1, user_api="blas"):
        for z0 in starts:
            res = minimize(
                objective,
                z0,
                args=(Xs, ys, spec),
                jac=True,
                method="L-BFGS-B",
                bounds=bounds,
                options={"maxiter": maxiter},
            )
            if res.fun < best_val:
                best_val, best_z = res.fun, res.x
    if best_z is None:  # every start failed the Cholesky
        raise np.linalg.LinAlgError("covariance not positive definite")

    hyper = GPHyperparams(
        signal_variance=math.exp(best_z[m]),
        lengthscales=np.exp(best_z[:m]),
        noise_variance=math.exp(best_z[m + 1]),
    )
    K = kernel_matrix(spec, hyper, Xs, Xs)
    L, jitter = _chol_with_jitter(K, hyper.noise_variance)
    alpha = cho_solve((L, True), ys)
    lml = float(
        -0.5 * ys @ alpha - np.log(np.diag(L)).sum() - 0.5 * n * math.log(2.0 * math.pi)
    )
    return FittedGP(
        spec=spec,
        hyper=hyper,
        X=Xs,
        y=ys,
        L=L,
        alpha=alpha,
        x_std=x_std,
        y_std=y_std,
        jitter=jitter,
        lml=lml,
    )


def gp_predict(
    model: FittedGP,
    Xq: np.ndarray,
    levels: QuantileLevels = QuantileLevels(),
    include_noise: bool = True,
) -> PredictiveSummary:
    """Exact posterior marginals with Gaussian-ICDF quantiles, in raw units.

    Predictive variance includes the fitted observation noise by default so
    it describes a new response rather than the latent function.
    """
    Xq = np.atleast_2d(np.asarray(Xq, dtype=float))
    if Xq.shape[1] != model.X.shape[1]:
        raise ValueError(
            f"query dimension {Xq.shape[1]} != training dimension {model.X.shape[1]}"
        )
    Xqs = model.x_std.apply(Xq)
    Ks = kernel_matrix(model.spec, model.hyper, Xqs, model.X)
    mean_s = Ks @ model.alpha
    V = solve_triangular(model.L, Ks.T, lower=True)
    var_s = model.hyper.signal_variance - np.einsum("ij,ij->j", V, V)
    neg = var_s < 0
    if np.any(neg):
        _clamp_counter["count"] += int(neg.sum())
        var_s = np.clip(var_s, 0.0, None)
    if include_noise:
        var_s = var_s + model.hyper.noise_variance + model.jitter

    mean = model.y_std.invert(mean_s[:, None]).ravel()
    var = model.y_std.invert_variance(var_s)
    sd = np.sqrt(var)
    zq = norm.ppf(levels.as_array())
    quantiles = mean[:, None] + sd[:, None] * zq[None, :]
    return PredictiveSummary(mean=mean, variance=var, quantiles=quantiles, levels=levels)


@dataclass
class GPSurrogate:
    """Surrogate-contract adapter around `gp_fit`/`gp_predict`."""

    spec: KernelSpec = KernelSpec()
    budget: int = 200
    n_starts: int = 5
    seed: int = 0
    include_noise: bool = True
    priors: bool = True
    model: FittedGP | None = field(default=None, repr=False)

    def fit(self, X: np.ndarray, y: np.ndarray) -> "GPSurrogate":
        self.model = gp_fit(
            X,
            y,
            spec=self.spec,
            budget=self.budget,
            n_starts=self.n_starts,
            seed=self.seed,
            priors=self.priors,
        )
        return self

    def predict(self, X: np.ndarray, levels: QuantileLevels = QuantileLevels()) -> PredictiveSummary:
        if self.model is None:
            raise RuntimeError("predict called before fit")
        return gp_predict(self.model, X, levels, include_noise=self.include_noise)
