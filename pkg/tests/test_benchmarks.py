import math

import numpy as np
import pytest

from fire_mf.benchmarks import (
    SplitPlan,
    concrete_lf,
    eval_catalog,
    eval_hd,
    gen_heteroscedastic,
    get_problem,
    list_problems,
    make_splits,
    oracle_conditional_mse,
    sample_lhs,
)
from fire_mf.benchmarks.oracle import (
    columns_full,
    columns_mean,
    columns_mean_variance,
    conditional_mse_comparison,
    gen_goldberg,
    gen_independent,
    gen_skewed,
    gen_variance_coupled,
)
from fire_mf.benchmarks.problems import hetero_moments

# Frozen golden values, hand-evaluated from the published formulas with
# 50-digit arithmetic: (point, fidelity, value).
GOLDEN = {
    "forrester": [
        ((0.0,), 2, 3.027209981231713),
        ((0.5,), 2, 0.9092974268256817),
        ((0.3,), 1, -7.007788366846173),
    ],
    "bohachevsky": [
        ((0.0, 0.0), 2, 0.0),
        ((1.0, -2.0), 2, 9.6),
        ((1.0, -2.0), 1, -5.495316954888546),
    ],
    "booth": [
        ((1.0, 3.0), 2, 0.0),
        ((0.0, 0.0), 2, 74.0),
        ((2.0, -1.0), 1, 79.2),
    ],
    "borehole": [
        ((0.1, 25050.0, 89335.0, 1050.0, 89.55, 760.0, 1400.0, 10950.0), 2, 70.87291263681895),
        ((0.1, 25050.0, 89335.0, 1050.0, 89.55, 760.0, 1400.0, 10950.0), 1, 56.39871925957538),
        ((0.05, 100.0, 63070.0, 990.0, 63.1, 700.0, 1120.0, 9855.0), 2, 20.014783312430865),
    ],
    "branin": [
        ((0.0, 0.0), 2, 55.602112642270264),
        ((3.0, 12.0), 2, 362.8842882786941),
        ((3.0, 12.0), 1, 475.1076855764449),
    ],
    "currin": [
        ((0.5, 0.5), 2, 7.405123913298809),
        ((0.5, 0.0), 2, 11.714733542319749),
        ((0.5, 0.5), 1, 7.4424795838711075),
    ],
    "hartmann6": [
        ((0.2,) * 6, 2, -1.5402624823348092),
        ((0.2, 0.15, 0.48, 0.27, 0.31, 0.66), 2, -3.041800987077969),
        ((0.2,) * 6, 1, -1.4707635115296074),
    ],
    "himmelblau": [
        ((3.0, 2.0), 2, 0.0),
        ((0.0, 0.0), 2, 170.0),
        ((2.0, -1.0), 1, 135.3696),
    ],
    "park91a": [
        ((0.5, 0.4, 0.8, 0.6), 2, 13.02794068992378),
        ((1.0, 1.0, 1.0, 1.0), 2, 25.589254158606547),
        ((0.5, 0.4, 0.8, 0.6), 1, 13.952533438140811),
    ],
    "park91b": [
        ((0.5, 0.4, 0.8, 0.6), 2, 2.009321752898253),
        ((0.0, 0.0, 0.0, 0.0), 2, 0.6666666666666666),
        ((0.5, 0.4, 0.8, 0.6), 1, 1.4111861034779034),
    ],
    "six_hump_camelback": [
        ((0.0898, -0.7126), 2, -1.0316284229280819),
        ((0.0, 0.0), 2, 0.0),
        ((1.0, 1.0), 1, -13.014593666666666),
    ],
    "branin3f": [
        ((3.0, 12.0), 3, 92.88428827869411),
        ((3.0, 12.0), 2, -4.623504795674315),
        ((3.0, 12.0), 1, -10.206929991493553),
    ],
    "hartmann3f": [
        ((0.5, 0.5, 0.5), 3, -0.6280220150705942),
        ((0.5, 0.5, 0.5), 2, -0.6135072452144408),
        ((0.5, 0.5, 0.5), 1, -0.5989924753582874),
    ],
}

# Catalog metadata: dimension, fidelity count, default lower-fidelity sizes.
EXPECTED_SHAPES = {
    "bohachevsky": (2, 2, (200,)),
    "booth": (2, 2, (200,)),
    "borehole": (8, 2, (200,)),
    "branin": (2, 2, (200,)),
    "currin": (2, 2, (200,)),
    "forrester": (1, 2, (200,)),
    "hartmann6": (6, 2, (200,)),
    "himmelblau": (2, 2, (200,)),
    "park91a": (4, 2, (200,)),
    "park91b": (4, 2, (200,)),
    "six_hump_camelback": (2, 2, (200,)),
    "branin3f": (2, 3, (200, 50)),
    "hartmann3f": (3, 3, (200, 50)),
    "hd10": (10, 2, (2000,)),
    "hd20": (20, 2, (2000,)),
    "hd30": (30, 2, (2000,)),
    "hd40": (40, 2, (2000,)),
    "hd50": (50, 2, (2000,)),
    "goldberg": (1, 2, (200,)),
    "yuan": (1, 2, (200,)),
    "williams": (1, 2, (200,)),
}


class TestCatalog:
    @pytest.mark.parametrize("name", sorted(GOLDEN))
    def test_golden_values(self, name):
        for point, t, want in GOLDEN[name]:
            got = eval_catalog(name, np.array(point), t)
            assert got == pytest.approx(want, rel=1e-12, abs=1e-12), (name, point, t)

    def test_catalog_shapes(self):
        assert set(list_problems()) == set(EXPECTED_SHAPES)
        for name, (d, T, lf_sizes) in EXPECTED_SHAPES.items():
            p = get_problem(name)
            assert (p.d, p.T) == (d, T), name
            assert p.default_lf_sizes() == lf_sizes, name

    def test_unknown_name_lists_catalog(self):
        with pytest.raises(KeyError, match="forrester"):
            get_problem("nope")

    def test_evaluators_are_pure(self):
        rng = np.random.default_rng(0)
        for name in list_problems():
            p = get_problem(name)
            x = p.bounds[:, 0] + rng.random(p.d) * (p.bounds[:, 1] - p.bounds[:, 0])
            for t in range(1, p.T + 1):
                assert p.evaluate(x, t) == p.evaluate(x, t), (name, t)

    def test_fidelity_out_of_range(self):
        with pytest.raises(ValueError, match="fidelity"):
            eval_catalog("forrester", [0.5], 3)


class TestHighDimensionalPair:
    def test_all_ones_d10(self):
        x = np.ones(10)
        assert eval_hd(x, 10, 2) == 9.0
        assert eval_hd(x, 10, 1) == -39.2

    def test_origin(self):
        x = np.zeros(10)
        assert eval_hd(x, 10, 2) == 1.0
        assert eval_hd(x, 10, 1) == pytest.approx(0.8 - 50.0, abs=1e-12)

    def test_dimension_validation(self):
        with pytest.raises(ValueError, match="one of"):
            eval_hd(np.ones(11), 11, 2)
        with pytest.raises(ValueError, match="expected"):
            eval_hd(np.ones(9), 10, 2)

    @pytest.mark.parametrize("d", [10, 20, 30, 40, 50])
    def test_all_sizes_evaluate(self, d):
        x = np.full(d, 0.5)
        hf = eval_hd(x, d, 2)
        lf = eval_hd(x, d, 1)
        # direct recomputation of the published expressions
        want_hf = sum((2 * x[i] ** 2 - x[i - 1]) ** 2 for i in range(1, d)) + (x[0] - 1) ** 2
        want_lf = 0.8 * want_hf + sum(0.4 * x[i - 1] * x[i] for i in range(1, d)) - 50
        assert hf == pytest.approx(want_hf, rel=1e-12)
        assert lf == pytest.approx(want_lf, rel=1e-12)


class TestConcreteSurrogate:
    def test_unit_power_terms(self):
        # w/c = 1, cement = 1, age = 1, offset ingredients at zero
        x = [1.0, 0.0, 0.0, 1.0, 0.0, 950.0, 800.0, 1.0]
        assert concrete_lf(x) == pytest.approx(math.exp(2.56), abs=1e-9)

    def test_age_power_law(self):
        x1 = [300.0, 50.0, 20.0, 180.0, 5.0, 950.0, 800.0, 7.0]
        x2 = list(x1)
        x2[-1] = 14.0
        assert concrete_lf(x2) / concrete_lf(x1) == pytest.approx(2.0**0.292, abs=1e-9)

    def test_decreasing_in_water_cement_ratio(self):
        base = [300.0, 50.0, 20.0, 150.0, 5.0, 950.0, 800.0, 28.0]
        wetter = list(base)
        wetter[3] = 190.0
        assert concrete_lf(wetter) < concrete_lf(base)

    def test_nonpositive_essentials_rejected(self):
        with pytest.raises(ValueError, match="positive"):
            concrete_lf([0.0, 0, 0, 180, 0, 950, 800, 28])
        with pytest.raises(ValueError, match="positive"):
            concrete_lf([300, 0, 0, 180, 0, 950, 800, 0.0])

    def test_feature_count_checked(self):
        with pytest.raises(ValueError, match="8"):
            concrete_lf([1, 2, 3])


class TestHeteroscedasticTrio:
    def test_base_and_scale_formulas(self):
        mu, sig = hetero_moments("goldberg", [0.25])
        assert mu[0] == pytest.approx(2.0, abs=1e-12)
        assert sig[0] == pytest.approx(0.75, abs=1e-12)
        mu, sig = hetero_moments("williams", [0.0])
        assert mu[0] == 0.0
        assert sig[0] == pytest.approx(0.26, abs=1e-12)
        mu, sig = hetero_moments("yuan", [0.0])
        assert sig[0] == pytest.approx(1.0, abs=1e-12)

    def test_lf_is_noiseless_base(self):
        x = np.linspace(0, 1, 50)
        y_hf, y_lf = gen_heteroscedastic("goldberg", x, np.random.default_rng(0))
        np.testing.assert_allclose(y_lf, 2 * np.sin(2 * np.pi * x), atol=1e-12)
        assert not np.allclose(y_hf, y_lf)

    def test_noise_scale_matches_formula(self):
        x = np.full(200_00, 0.75)
        y_hf, y_lf = gen_heteroscedastic("goldberg", x, np.random.default_rng(1))
        sd = np.std(y_hf - y_lf)
        assert sd == pytest.approx(0.5 + 0.75, rel=0.05)

    def test_unknown_name(self):
        with pytest.raises(ValueError, match="unknown"):
            gen_heteroscedastic("nope", [0.5], np.random.default_rng(0))


class TestLatinHypercube:
    def test_one_point_per_stratum(self):
        X = sample_lhs(1, 4, seed=0)
        strata = np.floor(X.ravel() * 4).astype(int)
        assert sorted(strata) == [0, 1, 2, 3]

    def test_marginal_histograms_balanced(self):
        X = sample_lhs(3, 10, seed=1)
        for j in range(3):
            counts, _ = np.histogram(X[:, j], bins=10, range=(0, 1))
            assert np.all(counts == 1)

    def test_deterministic_per_seed(self):
        a = sample_lhs(2, 8, seed=3)
        b = sample_lhs(2, 8, seed=3)
        np.testing.assert_array_equal(a, b)

    def test_bounds_respected(self):
        bounds = np.array([[-2.0, 3.0], [10.0, 20.0]])
        X = sample_lhs(2, 50, bounds=bounds, seed=4)
        assert np.all(X >= bounds[:, 0]) and np.all(X <= bounds[:, 1])


class TestSplitProtocol:
    def test_low_dimension_budgets(self):
        data, test = make_splits(get_problem("currin"), SplitPlan(ratio=5.0, seed=0))
        assert [b.n for b in data.blocks] == [200, 10]
        assert test.X.shape == (100, 2)

    def test_high_dimension_budgets(self):
        data, test = make_splits(get_problem("hd10"), SplitPlan(ratio=2.0, seed=0))
        assert [b.n for b in data.blocks] == [2000, 40]
        assert test.X.shape[0] == 1000

    def test_three_fidelity_budgets(self):
        data, _ = make_splits(get_problem("branin3f"), SplitPlan(ratio=5.0, seed=0))
        assert [b.n for b in data.blocks] == [200, 50, 10]

    def test_nested_rows_come_from_lf(self):
        data, _ = make_splits(get_problem("currin"), SplitPlan(ratio=10.0, nested=True, seed=1))
        lf_rows = {tuple(r) for r in data.blocks[0].X}
        assert all(tuple(r) in lf_rows for r in data.blocks[1].X)

    def test_disjoint_rows_do_not_collide(self):
        data, test = make_splits(get_problem("currin"), SplitPlan(ratio=10.0, seed=2))
        lf = {tuple(r) for r in data.blocks[0].X}
        hf = {tuple(r) for r in data.blocks[1].X}
        ts = {tuple(r) for r in test.X}
        assert not lf & hf
        assert len(hf) == data.blocks[1].n
        assert not (lf | hf) & ts

    def test_deterministic_per_seed_and_fold(self):
        p = get_problem("forrester")
        a, ta = make_splits(p, SplitPlan(ratio=5.0, fold=3, seed=11))
        b, tb = make_splits(p, SplitPlan(ratio=5.0, fold=3, seed=11))
        np.testing.assert_array_equal(a.blocks[1].X, b.blocks[1].X)
        np.testing.assert_array_equal(ta.y, tb.y)
        c, _ = make_splits(p, SplitPlan(ratio=5.0, fold=4, seed=11))
        assert not np.array_equal(a.blocks[1].X, c.blocks[1].X)

    def test_tiny_ratio_rejected(self):
        with pytest.raises(ValueError, match="no HF points"):
            make_splits(get_problem("currin"), SplitPlan(ratio=0.1, seed=0))

    def test_noisy_problem_perturbs_hf_only(self):
        data, _ = make_splits(get_problem("goldberg"), SplitPlan(ratio=25.0, seed=3))
        mu_lf, _ = hetero_moments("goldberg", data.blocks[0].X.ravel())
        np.testing.assert_allclose(data.blocks[0].y, mu_lf, atol=1e-12)
        mu_hf, _ = hetero_moments("goldberg", data.blocks[1].X.ravel())
        assert not np.allclose(data.blocks[1].y, mu_hf)


class TestConditionalMseOracle:
    def test_independent_residual_risk_equals_variance(self):
        names, F, r = gen_independent(40_000, seed=0)
        for cols in (columns_mean(names), columns_full(names)):
            est = oracle_conditional_mse(F, r, cols)
            assert est == pytest.approx(np.var(r), rel=0.05)

    def test_variance_column_explains_residual(self):
        names, F, r = gen_variance_coupled(60_000, seed=1)
        est_mean = oracle_conditional_mse(F, r, columns_mean(names))
        est_full = oracle_conditional_mse(F, r, columns_full(names))
        assert est_mean == pytest.approx(np.var(r), rel=0.1)
        assert est_full < 0.25 * est_mean

    def test_nested_sets_never_hurt_on_noise_scale_benchmark(self):
        names, F, r = gen_goldberg(50_000, seed=2)
        cmp = conditional_mse_comparison(
            F, r, columns_mean(names), columns_full(names), n_bootstrap=10, seed=0
        )
        assert cmp.reduction <= 2 * cmp.stderr  # equality case
        assert cmp.reduction >= -2 * cmp.stderr

    def test_skewed_generator_rewards_quantiles(self):
        names, F, r = gen_skewed(50_000, seed=3)
        cmp = conditional_mse_comparison(
            F, r, columns_mean_variance(names), columns_full(names), n_bootstrap=10, seed=0
        )
        assert cmp.reduction > 2 * cmp.stderr

    def test_sample_floor_enforced(self):
        with pytest.raises(ValueError, match="10\\^4"):
            oracle_conditional_mse(np.zeros((100, 2)), np.zeros(100))

    def test_hetero_coupling_correlation(self):
        rng = np.random.default_rng(4)
        x = rng.random(10_000)
        mu, sigma = hetero_moments("goldberg", x)
        y_hf = mu + rng.normal(size=x.size) * sigma
        corr = np.corrcoef(sigma**2, (y_hf - mu) ** 2)[0, 1]
        assert corr > 0.2
