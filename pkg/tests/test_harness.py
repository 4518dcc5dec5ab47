import math

import numpy as np
import pytest
from scipy.stats import norm

from matbvm.errors import EmptySamples, ZeroEigengap
from matbvm.functionals import Eigenvalue, Entry, LogDet, Quadratic, TruthSpec
from matbvm.harness import (
    ExperimentConfig,
    coverage_study,
    effective_sample_size,
    frequentist_check,
    histogram_bins,
    ks_statistic,
    mgf_diagnostic,
    qq_pairs,
    regime_table,
    run_posterior_bvm,
    std_normal_cdf,
)
from matbvm.model import ConstrainedGaussianPrior, WishartPrior
from matbvm.rng import RngStream

S3 = np.full((3, 3), 0.3) + 0.7 * np.eye(3)


def entry_config(**kw):
    base = dict(truth=TruthSpec.from_sigma(S3), functional=Entry(1, 2), prior=WishartPrior(3), n=2000)
    base.update(kw)
    return ExperimentConfig(**base)


class TestNormalCdf:
    def test_values(self):
        assert std_normal_cdf(0.0) == 0.5
        assert std_normal_cdf(40.0) == pytest.approx(1.0, abs=1e-12)
        assert std_normal_cdf(1.959964) == pytest.approx(0.975, abs=1e-6)

    def test_against_series_oracle(self):
        # Taylor series of the error function, summed in high precision for |t| <= 3
        from fractions import Fraction

        for t in (-3.0, -1.2, 0.3, 1.0, 2.5):
            x = Fraction(t) / Fraction(math.sqrt(2))
            total, term, k = Fraction(0), x, 0
            while abs(float(term)) > 1e-20 or k < 5:
                total += term / (2 * k + 1)
                k += 1
                term = -term * x * x / k
            erf = 2 / math.sqrt(math.pi) * float(total)
            assert std_normal_cdf(t) == pytest.approx(0.5 * (1 + erf), abs=1e-7)


class TestKs:
    def test_single_point(self):
        assert ks_statistic([0.0]) == pytest.approx(0.5)

    def test_quantile_grid(self):
        n = 1000
        q = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
        assert ks_statistic(q) <= 1 / (2 * n) + 1e-6

    def test_power(self):
        u = RngStream(1).generator().uniform(size=1000)
        assert ks_statistic(u) >= 0.1

    def test_permutation_invariance_and_shift(self):
        x = RngStream(2).generator().standard_normal(500)
        assert ks_statistic(x) == ks_statistic(x[::-1])
        shifts = [ks_statistic(np.sort(x) + s) for s in (0.5, 1.0, 1.5)]
        assert shifts[0] < shifts[1] < shifts[2]

    def test_empty(self):
        with pytest.raises(EmptySamples):
            ks_statistic([])


class TestMgf:
    def test_t_zero(self):
        (point,) = mgf_diagnostic([0.3, -1.2], [0.0])
        assert point.empirical == point.target == 1.0

    def test_quantile_grid(self):
        n = 10_000
        q = norm.ppf((np.arange(1, n + 1) - 0.5) / n)
        for p in mgf_diagnostic(q, [-1.0, -0.5, 0.5, 1.0]):
            assert abs(p.empirical - p.target) <= 0.05

    def test_constant(self):
        grid = mgf_diagnostic([0.0], [-1.0, 1.0])
        assert all(p.empirical == 1.0 and p.target > 1.0 for p in grid)

    def test_grid_limit(self):
        with pytest.raises(ValueError):
            mgf_diagnostic([0.0], [2.5])
        with pytest.raises(EmptySamples):
            mgf_diagnostic([], [0.0])


class TestEss:
    def test_iid(self):
        x = RngStream(3).generator().standard_normal(20_000)
        assert 0.9 * x.size <= effective_sample_size(x) <= x.size

    def test_ar1(self):
        # AR(1) with coefficient rho has ESS ~ n (1 - rho) / (1 + rho)
        gen = RngStream(4).generator()
        rho, n = 0.8, 100_000
        x = np.empty(n)
        x[0] = 0.0
        eps = gen.standard_normal(n)
        for i in range(1, n):
            x[i] = rho * x[i - 1] + eps[i]
        assert effective_sample_size(x) == pytest.approx(n * (1 - rho) / (1 + rho), rel=0.1)


class TestPosteriorBvm:
    def test_entry_conjugate(self):
        cfg = entry_config(n=3000, truth=TruthSpec.from_sigma(S3), seed=RngStream(101))
        report = run_posterior_bvm(cfg)
        assert report.ks <= 0.03
        assert abs(report.empirical_mean) <= 0.1 and abs(report.empirical_sd - 1) <= 0.1
        assert report.ess <= report.n_draws

    def test_degenerate_config(self):
        report = run_posterior_bvm(entry_config(n_draws=100, seed=RngStream(5)))
        d = report.to_dict()
        assert all(math.isfinite(v) for v in (d["ks"], d["empirical_mean"], d["empirical_sd"], d["ess"]))
        assert report.ess <= 100
        lo, hi = report.credible_interval
        assert lo < hi

    def test_deterministic(self):
        a = run_posterior_bvm(entry_config(n_draws=200, seed=RngStream(6)))
        b = run_posterior_bvm(entry_config(n_draws=200, seed=RngStream(6)))
        assert a.to_dict() == b.to_dict()

    def test_eigengap_guard(self):
        cfg = entry_config(truth=TruthSpec.from_sigma(np.diag([1.05, 1.0, 0.5])), functional=Eigenvalue(1))
        with pytest.raises(ZeroEigengap):
            run_posterior_bvm(cfg)

    def test_mgf_near_target(self):
        report = run_posterior_bvm(entry_config(n=3000, seed=RngStream(7)))
        for p in report.mgf_grid:
            if abs(p.t) <= 1:
                assert abs(p.empirical - p.target) <= 0.1 * p.target

    def test_config_validation(self):
        with pytest.raises(ValueError):
            entry_config(n_draws=50)
        with pytest.raises(ValueError):
            entry_config(alpha=1.5)
        with pytest.raises(TypeError):
            entry_config(functional="qda")


class TestCoverage:
    def test_alpha_half(self):
        cfg = entry_config(n_draws=400, replications=200, alpha=0.5, seed=RngStream(8))
        result = coverage_study(cfg)
        half_width = 4 * math.sqrt(0.25 / 200)
        assert abs(result.coverage - 0.5) <= half_width

    def test_single(self):
        assert coverage_study(entry_config(n_draws=100, seed=RngStream(9))).coverage in (0.0, 1.0)

    def test_threads_do_not_change_results(self):
        cfg = entry_config(n_draws=100, replications=12, seed=RngStream(10))
        serial = coverage_study(cfg)
        threaded = coverage_study(ExperimentConfig(**{**cfg.__dict__, "threads": 4}))
        assert np.array_equal(serial.intervals, threaded.intervals)
        assert np.array_equal(serial.covered, threaded.covered)


class TestFrequentist:
    def test_quadratic_identity(self):
        cfg = ExperimentConfig(
            TruthSpec.from_sigma(np.eye(5)), Quadratic([1.0, 0, 0, 0, 0]), WishartPrior(), 500,
            replications=5000, seed=RngStream(11),
        )
        assert frequentist_check(cfg).ks <= 0.05

    def test_logdet_small_p(self):
        cfg = ExperimentConfig(TruthSpec.from_sigma(np.eye(2)), LogDet(), WishartPrior(), 2000, replications=2000, seed=RngStream(12))
        assert frequentist_check(cfg).ks <= 0.05


class TestRegimes:
    def test_examples(self):
        r = regime_table(Entry(1, 2, "cov"), WishartPrior(), 10, 1000)
        assert r.required == "p ≪ n" and r.satisfied
        r = regime_table(LogDet(), ConstrainedGaussianPrior(), 10, 1000)
        assert r.required == "p³ ≪ n" and not r.satisfied
        r = regime_table(Eigenvalue(1), ConstrainedGaussianPrior(), 3, 10**6)
        assert r.required == "p⁴ ≪ n" and r.satisfied

    def test_plug_in_column(self):
        assert regime_table(Entry(1, 2), None, 50, 10).required == "none"
        assert regime_table(Entry(1, 2, "prec"), None, 10, 1000).satisfied
        assert regime_table("qda", None, 10, 10_000).required == "p³ ≪ n"
        assert regime_table("lda", ConstrainedGaussianPrior(), 2, 160).satisfied


class TestPlotData:
    def test_qq(self):
        pairs = qq_pairs([3.0, 1.0, 2.0])
        assert np.array_equal(pairs[:, 1], [1.0, 2.0, 3.0])
        assert pairs[1, 0] == 0.0

    def test_hist(self):
        rows = histogram_bins(RngStream(1).generator().standard_normal(1000), bins=10)
        assert rows.shape == (10, 4)
        assert rows[:, 2].sum() == 1000
        assert np.sum(rows[:, 3] * (rows[:, 1] - rows[:, 0])) == pytest.approx(1.0)
