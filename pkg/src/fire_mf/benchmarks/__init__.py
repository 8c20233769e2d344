"""Benchmark problems, sampling, split protocol, and theory-check oracles."""

from fire_mf.benchmarks.oracle import (
    conditional_mse_comparison,
    oracle_conditional_mse,
)
from fire_mf.benchmarks.problems import (
    PROBLEMS,
    ProblemSpec,
    concrete_lf,
    eval_catalog,
    eval_hd,
    gen_heteroscedastic,
    get_problem,
    list_problems,
)
from fire_mf.benchmarks.sampling import sample_lhs
from fire_mf.benchmarks.splits import SplitPlan, TestSet, make_splits

__all__ = [
    "PROBLEMS",
    "ProblemSpec",
    "SplitPlan",
    "TestSet",
    "concrete_lf",
    "conditional_mse_comparison",
    "eval_catalog",
    "eval_hd",
    "gen_heteroscedastic",
    "get_problem",
    "list_problems",
    "make_splits",
    "oracle_conditional_mse",
    "sample_lhs",
]
