"""Benchmark problem catalog.

Two-fidelity analytic pairs follow the formulas published with the MF2
benchmark collection (Forrester et al. 2007; Xiong et al. 2013; Dong et
al. 2015; Park/Haftka/Kim 2017); the three-fidelity Branin and Hartmann-3
variants follow the Emukit test-function construction (Perdikaris et al.
2017; Cutajar et al. 2019). The high-dimensional pair, the Abrams-style
concrete strength surrogate, and the heteroscedastic trio are defined
inline. All evaluators are pure; observation noise enters only through
`gen_heteroscedastic` / the split protocol's RNG.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable

import numpy as np

TWO_PI = 2.0 * math.pi


@dataclass(frozen=True)
class ProblemSpec:
    """A benchmark problem: evaluator over (x, fidelity) plus metadata."""

    name: str
    d: int
    T: int
    bounds: np.ndarray  # (d, 2) lower/upper per dimension
    evaluator: Callable[[np.ndarray, int], float]
    noise_sigma: Callable[[np.ndarray], float] | None = None  # HF-level noise scale
    lf_sizes: tuple[int, ...] | None = None  # default N_1..N_{T-1}; None -> dimension rule

    def __post_init__(self):
        b = np.asarray(self.bounds, dtype=float).reshape(self.d, 2)
        b.flags.writeable = False
        object.__setattr__(self, "bounds", b)

    def evaluate(self, x: np.ndarray, t: int) -> float:
        if not 1 <= t <= self.T:
            raise ValueError(f"{self.name}: fidelity {t} out of range 1..{self.T}")
        x = np.asarray(x, dtype=float).ravel()
        if x.shape[0] != self.d:
            raise ValueError(f"{self.name}: expected {self.d} inputs, got {x.shape[0]}")
        return float(self.evaluator(x, t))

    def evaluate_batch(self, X: np.ndarray, t: int) -> np.ndarray:
        X = np.atleast_2d(np.asarray(X, dtype=float))
        return np.array([self.evaluate(row, t) for row in X])

    def default_lf_sizes(self) -> tuple[int, ...]:
        if self.lf_sizes is not None:
            return self.lf_sizes
        n1 = 200 if self.d < 10 else 2000
        return (n1,) * (self.T - 1) if self.T == 2 else (n1, 50)


# --- two-fidelity analytic pairs -------------------------------------------

def _forrester(x: np.ndarray, t: int) -> float:
    hf = (6.0 * x[0] - 2.0) ** 2 * math.sin(12.0 * x[0] - 4.0)
    if t == 2:
        return hf
    return 0.5 * hf + 10.0 * (x[0] - 0.5) - 5.0


def _bohachevsky_hf(x1: float, x2: float) -> float:
    return (
        x1**2 + 2.0 * x2**2
        - 0.3 * math.cos(3.0 * math.pi * x1)
        - 0.4 * math.cos(4.0 * math.pi * x2)
        + 0.7
    )


def _bohachevsky(x: np.ndarray, t: int) -> float:
    if t == 2:
        return _bohachevsky_hf(x[0], x[1])
    return _bohachevsky_hf(0.7 * x[0], x[1]) + x[0] * x[1] - 12.0


def _booth_hf(x1: float, x2: float) -> float:
    return (x1 + 2.0 * x2 - 7.0) ** 2 + (2.0 * x1 + x2 - 5.0) ** 2


def _booth(x: np.ndarray, t: int) -> float:
    if t == 2:
        return _booth_hf(x[0], x[1])
    return _booth_hf(0.4 * x[0], x[1]) + 1.7 * x[0] * x[1] - x[0] + 2.0 * x[1]


def _borehole(x: np.ndarray, t: int) -> float:
    rw, r, Tu, Hu, Tl, Hl, L, Kw = x
    log_ratio = math.log(r / rw)
    common = 2.0 * L * Tu / (log_ratio * rw**2 * Kw) + Tu / Tl
    if t == 2:
        return 2.0 * math.pi * Tu * (Hu - Hl) / (log_ratio * (1.0 + common))
    return 5.0 * Tu * (Hu - Hl) / (log_ratio * (1.5 + common))


def _branin_base(x1: float, x2: float) -> float:
    return (
        (x2 - 5.1 * x1**2 / (4.0 * math.pi**2) + 5.0 * x1 / math.pi - 6.0) ** 2
        + 10.0 * (1.0 - 1.0 / (8.0 * math.pi)) * math.cos(x1)
        + 10.0
    )


def _branin(x: np.ndarray, t: int) -> float:
    if t == 2:
        return _branin_base(x[0], x[1]) + 22.5 * x[1]
    return (
        _branin_base(0.7 * x[0], 0.7 * x[1])
        + 15.75 * x[1]
        + 20.0 * (0.9 + x[0]) ** 2
        - 50.0
    )


def _currin_hf(x1: float, x2: float) -> float:
    prefactor = 1.0 if x2 == 0.0 else 1.0 - math.exp(-1.0 / (2.0 * x2))
    num = 2300.0 * x1**3 + 1900.0 * x1**2 + 2092.0 * x1 + 60.0
    den = 100.0 * x1**3 + 500.0 * x1**2 + 4.0 * x1 + 20.0
    return prefactor * num / den


def _currin(x: np.ndarray, t: int) -> float:
    if t == 2:
        return _currin_hf(x[0], x[1])
    x1, x2 = x
    return 0.25 * (
        _currin_hf(x1 + 0.05, x2 + 0.05)
        + _currin_hf(x1 + 0.05, max(0.0, x2 - 0.05))
        + _currin_hf(x1 - 0.05, x2 + 0.05)
        + _currin_hf(x1 - 0.05, max(0.0, x2 - 0.05))
    )


_H6_ALPHA = np.array([1.0, 1.2, 3.0, 3.2])
_H6_ALPHA_LOW = np.array([0.5, 0.5, 2.0, 4.0])
_H6_A = np.array(
    [
        [10.0, 3.0, 17.0, 3.5, 1.7, 8.0],
        [0.05, 10.0, 17.0, 0.1, 8.0, 14.0],
        [3.0, 3.5, 1.7, 10.0, 17.0, 8.0],
        [17.0, 8.0, 0.05, 10.0, 0.1, 14.0],
    ]
)
_H6_P = 1e-4 * np.array(
    [
        [1312, 1696, 5569, 124, 8283, 5886],
        [2329, 4135, 8307, 3736, 1004, 9991],
        [2348, 1451, 3522, 2883, 3047, 6650],
        [4047, 8828, 8732, 5743, 1091, 381],
    ]
)


def _hartmann6(x: np.ndarray, t: int) -> float:
    inner = np.sum(_H6_A * (x[None, :] - _H6_P) ** 2, axis=1)
    alpha = _H6_ALPHA if t == 2 else _H6_ALPHA_LOW
    return float(-(2.58 + np.sum(alpha * np.exp(-inner))) / 1.94)


def _himmelblau_hf(x1: float, x2: float) -> float:
    return (x1**2 + x2 - 11.0) ** 2 + (x1 + x2**2 - 7.0) ** 2


def _himmelblau(x: np.ndarray, t: int) -> float:
    if t == 2:
        return _himmelblau_hf(x[0], x[1])
    return _himmelblau_hf(0.5 * x[0], 0.8 * x[1]) + x[1] ** 3 - (x[0] + 1.0) ** 2


def _park91a_hf(x: np.ndarray) -> float:
    x1, x2, x3, x4 = x
    return (
        x1 / 2.0 * (math.sqrt(1.0 + (x2 + x3**2) * x4 / x1**2) - 1.0)
        + (x1 + 3.0 * x4) * math.exp(1.0 + math.sin(x3))
    )


def _park91a(x: np.ndarray, t: int) -> float:
    if t == 2:
        return _park91a_hf(x)
    x1, x2, x3 = x[0], x[1], x[2]
    return (1.0 + math.sin(x1) / 10.0) * _park91a_hf(x) - 2.0 * x1 + x2**2 + x3**2 + 0.5


def _park91b_hf(x: np.ndarray) -> float:
    x1, x2, x3, x4 = x
    return (2.0 / 3.0) * math.exp(x1 + x2) - x4 * math.sin(x3) + x3


def _park91b(x: np.ndarray, t: int) -> float:
    if t == 2:
        return _park91b_hf(x)
    return 1.2 * _park91b_hf(x) - 1.0


def _six_hump_hf(x1: float, x2: float) -> float:
    return (
        4.0 * x1**2 - 2.1 * x1**4 + x1**6 / 3.0 + x1 * x2 - 4.0 * x2**2 + 4.0 * x2**4
    )


def _six_hump(x: np.ndarray, t: int) -> float:
    if t == 2:
        return _six_hump_hf(x[0], x[1])
    return _six_hump_hf(0.7 * x[0], 0.7 * x[1]) + x[0] * x[1] - 15.0


# --- three-fidelity problems ------------------------------------------------

def _branin3f(x: np.ndarray, t: int) -> float:
    x1, x2 = x
    if t == 3:
        return _branin_base(x1, x2)
    if t == 2:
        return (
            10.0 * math.sqrt(_branin_base(x1, x2))
            + 2.0 * (x1 - 0.5)
            - 3.0 * (3.0 * x2 - 1.0)
            - 1.0
        )
    return _branin3f(1.2 * (x + 2.0), 2) - 3.0 * x2 + 1.0


_H3_A = np.array(
    [
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
        [3.0, 10.0, 30.0],
        [0.1, 10.0, 35.0],
    ]
)
_H3_P = 1e-4 * np.array(
    [
        [3689, 1170, 2673],
        [4699, 4387, 7470],
        [1091, 8732, 5547],
        [381, 5743, 8828],
    ]
)
_H3_DELTA = np.array([0.01, -0.01, -0.1, 0.1])


def _hartmann3f(x: np.ndarray, t: int) -> float:
    alpha = _H6_ALPHA + (3 - t) * _H3_DELTA
    inner = np.sum(_H3_A * (x[None, :] - _H3_P) ** 2, axis=1)
    return float(-np.sum(alpha * np.exp(-inner)))


# --- high-dimensional suite --------------------------------------------------

def eval_hd(x: np.ndarray, d: int, t: int) -> float:
    """High-dimensional pair: a chained quartic target and an affine-coupled
    low-fidelity distortion of it."""
    x = np.asarray(x, dtype=float).ravel()
    if d not in (10, 20, 30, 40, 50):
        raise ValueError(f"d must be one of 10..50 by tens, got {d}")
    if x.shape[0] != d:
        raise ValueError(f"expected {d} inputs, got {x.shape[0]}")
    if t not in (1, 2):
        raise ValueError(f"fidelity must be 1 or 2, got {t}")
    hf = float(np.sum((2.0 * x[1:] ** 2 - x[:-1]) ** 2) + (x[0] - 1.0) ** 2)
    if t == 2:
        return hf
    return 0.8 * hf + float(0.4 * np.sum(x[:-1] * x[1:])) - 50.0


def _make_hd(d: int) -> ProblemSpec:
    return ProblemSpec(
        name=f"hd{d}",
        d=d,
        T=2,
        bounds=np.tile([-3.0, 3.0], (d, 1)),
        evaluator=lambda x, t, _d=d: eval_hd(x, _d, t),
    )


# --- heteroscedastic trio -----------------------------------------------------

def _goldberg_mu(x: float) -> float:
    return 2.0 * math.sin(TWO_PI * x)


def _goldberg_sigma(x: float) -> float:
    return 0.5 + x


def _yuan_mu(x: float) -> float:
    return 2.0 * (math.exp(-30.0 * (x - 0.25) ** 2) + math.sin(math.pi * x**2)) - 2.0


def _yuan_sigma(x: float) -> float:
    return math.exp(math.sin(TWO_PI * x))


def _williams_mu(x: float) -> float:
    return math.sin(2.5 * x) * math.sin(1.5 * x)


def _williams_sigma(x: float) -> float:
    return 0.01 + 0.25 * (1.0 - math.sin(2.5 * x)) ** 2


_HETERO = {
    "goldberg": (_goldberg_mu, _goldberg_sigma),
    "yuan": (_yuan_mu, _yuan_sigma),
    "williams": (_williams_mu, _williams_sigma),
}


def gen_heteroscedastic(
    name: str, x: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Return (y_hf, y_lf): the LF proxy is the noiseless base function, the
    HF observation keeps the input-dependent Gaussian noise."""
    if name not in _HETERO:
        raise ValueError(f"unknown heteroscedastic benchmark {name!r}")
    mu_fn, sigma_fn = _HETERO[name]
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    mu = np.array([mu_fn(v) for v in x])
    sigma = np.array([sigma_fn(v) for v in x])
    y_hf = mu + rng.normal(0.0, 1.0, size=x.shape[0]) * sigma
    return y_hf, mu


def hetero_moments(name: str, x: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Noise-free base values and noise scales of a heteroscedastic benchmark."""
    if name not in _HETERO:
        raise ValueError(f"unknown heteroscedastic benchmark {name!r}")
    mu_fn, sigma_fn = _HETERO[name]
    x = np.atleast_1d(np.asarray(x, dtype=float)).ravel()
    return np.array([mu_fn(v) for v in x]), np.array([sigma_fn(v) for v in x])


def _make_hetero(name: str) -> ProblemSpec:
    mu_fn, sigma_fn = _HETERO[name]
    return ProblemSpec(
        name=name,
        d=1,
        T=2,
        bounds=np.array([[0.0, 1.0]]),
        evaluator=lambda x, t: mu_fn(float(x[0])),
        noise_sigma=lambda x: sigma_fn(float(np.atleast_1d(x)[0])),
    )


# --- concrete low-fidelity surrogate -----------------------------------------

CONCRETE_BETA = {
    "intercept": 2.56,
    "wc_ratio": -0.815,
    "cement": -0.0380,
    "slag": 0.0161,
    "fly_ash": 0.00231,
    "superplasticizer": 0.0148,
    "age": 0.292,
}

# Expected shape of the user-supplied UCI concrete compressive strength
# table (see README for acquisition and verification instructions).
CONCRETE_UCI_ROWS = 1030
CONCRETE_UCI_FEATURES = 8


def concrete_lf(x: np.ndarray) -> float:
    """Abrams-style multiplicative strength model over an 8-feature mix design
    (cement, slag, fly ash, water, superplasticizer, coarse agg, fine agg, age).

    Ingredients that can legitimately be zero (slag, fly ash,
    superplasticizer) enter through a +1 offset so their log terms stay
    finite.
    """
    x = np.asarray(x, dtype=float).ravel()
    if x.shape[0] != 8:
        raise ValueError(f"expected 8 mix-design features, got {x.shape[0]}")
    cement, slag, fly_ash, water, sp, _coarse, _fine, age = x
    if cement <= 0 or water <= 0 or age <= 0:
        raise ValueError("cement, water, and age must be strictly positive")
    if slag < 0 or fly_ash < 0 or sp < 0:
        raise ValueError("slag, fly ash, and superplasticizer must be nonnegative")
    b = CONCRETE_BETA
    return float(
        math.exp(b["intercept"])
        * (water / cement) ** b["wc_ratio"]
        * cement ** b["cement"]
        * (slag + 1.0) ** b["slag"]
        * (fly_ash + 1.0) ** b["fly_ash"]
        * (sp + 1.0) ** b["superplasticizer"]
        * age ** b["age"]
    )


# --- catalog -------------------------------------------------------------------

def _catalog() -> dict[str, ProblemSpec]:
    specs = [
        ProblemSpec("bohachevsky", 2, 2, np.tile([-5.0, 5.0], (2, 1)), _bohachevsky),
        ProblemSpec("booth", 2, 2, np.tile([-10.0, 10.0], (2, 1)), _booth),
        ProblemSpec(
            "borehole",
            8,
            2,
            np.array(
                [
                    [0.05, 0.15],
                    [100.0, 50000.0],
                    [63070.0, 115600.0],
                    [990.0, 1110.0],
                    [63.1, 116.0],
                    [700.0, 820.0],
                    [1120.0, 1680.0],
                    [9855.0, 12045.0],
                ]
            ),
            _borehole,
        ),
        ProblemSpec("branin", 2, 2, np.array([[-5.0, 10.0], [0.0, 15.0]]), _branin),
        ProblemSpec("currin", 2, 2, np.tile([0.0, 1.0], (2, 1)), _currin),
        ProblemSpec("forrester", 1, 2, np.array([[0.0, 1.0]]), _forrester),
        ProblemSpec("hartmann6", 6, 2, np.tile([0.1, 1.0], (6, 1)), _hartmann6),
        ProblemSpec("himmelblau", 2, 2, np.tile([-4.0, 4.0], (2, 1)), _himmelblau),
        ProblemSpec("park91a", 4, 2, np.vstack([[1e-6, 1.0], np.tile([0.0, 1.0], (3, 1))]), _park91a),
        ProblemSpec("park91b", 4, 2, np.tile([0.0, 1.0], (4, 1)), _park91b),
        ProblemSpec("six_hump_camelback", 2, 2, np.tile([-2.0, 2.0], (2, 1)), _six_hump),
        ProblemSpec(
            "branin3f", 2, 3, np.array([[-5.0, 10.0], [0.0, 15.0]]), _branin3f,
            lf_sizes=(200, 50),
        ),
        ProblemSpec(
            "hartmann3f", 3, 3, np.tile([0.0, 1.0], (3, 1)), _hartmann3f,
            lf_sizes=(200, 50),
        ),
    ]
    specs += [_make_hd(d) for d in (10, 20, 30, 40, 50)]
    specs += [_make_hetero(name) for name in _HETERO]
    return {s.name: s for s in specs}


PROBLEMS: dict[str, ProblemSpec] = _catalog()


def list_problems() -> list[str]:
    return sorted(PROBLEMS)


def get_problem(name: str) -> ProblemSpec:
    if name not in PROBLEMS:
        raise KeyError(f"unknown problem {name!r}; known: {', '.join(list_problems())}")
    return PROBLEMS[name]


def eval_catalog(name: str, x: np.ndarray, t: int) -> float:
    """Evaluate a catalog problem at (x, t)."""
    return get_problem(name).evaluate(x, t)
