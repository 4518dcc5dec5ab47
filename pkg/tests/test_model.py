import math

import numpy as np
import pytest
from scipy.integrate import quad
from scipy.stats import wishart

from matbvm.errors import DimensionMismatch, NotPositiveDefinite, PerturbationTooLarge
from matbvm.model import (
    COVARIANCE,
    PRECISION,
    ConstrainedGaussianPrior,
    PerturbationDirection,
    WishartPrior,
    likelihood_expansion_check,
    log_likelihood,
    log_posterior_kernel,
    log_prior,
    normalize_target,
    perturbed_precision,
    taylor_remainder,
)


def random_spd(p, gen):
    g = gen.standard_normal((p, p))
    return g @ g.T / p + 0.5 * np.eye(p)


def random_sym(p, gen):
    g = gen.standard_normal((p, p))
    return (g + g.T) / 2


class TestTargets:
    def test_aliases(self):
        assert normalize_target("cov") == COVARIANCE
        assert normalize_target("Omega") == PRECISION
        with pytest.raises(ValueError):
            normalize_target("mean")


class TestLogLikelihood:
    def test_identity(self):
        assert log_likelihood(np.eye(4), np.eye(4), 2) == pytest.approx(-4.0)

    def test_scalar(self):
        assert log_likelihood([[2.0]], [[1.0]], 2) == pytest.approx(math.log(2) - 2)

    def test_maximizer_grid(self):
        grid = np.linspace(0.05, 3.0, 59_001)
        values = [log_likelihood([[w]], [[0.8]], 10) for w in grid]
        assert grid[int(np.argmax(values))] == pytest.approx(1 / 0.8, abs=1e-4)

    def test_not_pd(self):
        with pytest.raises(NotPositiveDefinite):
            log_likelihood(-np.eye(2), np.eye(2), 5)


class TestLogPrior:
    def test_wishart_b2(self):
        omega = random_spd(3, np.random.default_rng(0))
        assert log_prior(WishartPrior(2), omega) == pytest.approx(-0.5 * np.trace(omega))

    def test_wishart_b4(self):
        assert log_prior(WishartPrior(4), np.eye(2)) == pytest.approx(-1.0)

    def test_wishart_matches_scipy_up_to_constant(self):
        gen = np.random.default_rng(1)
        p, b = 3, 5
        a, c = random_spd(p, gen), random_spd(p, gen)
        ours = log_prior(WishartPrior(b), a) - log_prior(WishartPrior(b), c)
        ref = wishart(df=p + b - 1, scale=np.eye(p))
        assert ours == pytest.approx(ref.logpdf(a) - ref.logpdf(c), abs=1e-10)

    def test_gaussian_support(self):
        prior = ConstrainedGaussianPrior(1.0)
        assert log_prior(prior, 3 * np.eye(2)) == -math.inf
        assert log_prior(prior, 0.4 * np.eye(2)) == -math.inf  # ||Sigma|| = 2.5 > 2
        assert log_prior(prior, np.eye(2)) == pytest.approx(-1.0)

    def test_validation(self):
        with pytest.raises(ValueError):
            WishartPrior(0)
        with pytest.raises(ValueError):
            ConstrainedGaussianPrior(-1.0)


class TestPosteriorKernel:
    def test_conjugate_kernel_is_wishart_posterior(self):
        gen = np.random.default_rng(2)
        p, n, b = 3, 40, 3
        x = gen.standard_normal((n, p))
        s = x.T @ x / n
        post = wishart(df=n + p + b - 1, scale=np.linalg.inv(n * s + np.eye(p)))
        a, c = random_spd(p, gen), random_spd(p, gen)
        diff = log_posterior_kernel(WishartPrior(b), a, s, n) - log_posterior_kernel(WishartPrior(b), c, s, n)
        assert diff == pytest.approx(post.logpdf(a) - post.logpdf(c), abs=1e-9)


def covariance_direction(phi, sigma):
    c = math.sqrt(float(np.trace(sigma @ phi @ sigma @ phi)))
    return PerturbationDirection(phi, COVARIANCE, c, phi.shape[0])


class TestPerturbedPrecision:
    def test_t_zero(self):
        omega = random_spd(3, np.random.default_rng(3))
        d = covariance_direction(np.eye(3), np.eye(3))
        assert np.array_equal(perturbed_precision(omega, d, 0.0, 100), omega)

    def test_identity_direction(self):
        p, n, t = 4, 200, 1.5
        d = covariance_direction(np.eye(p), np.eye(p))
        assert d.normalizer == pytest.approx(math.sqrt(p))
        out = perturbed_precision(np.eye(p), d, t, n)
        assert np.allclose(out, np.eye(p) * (1 + math.sqrt(2) * t / math.sqrt(n * p)), atol=1e-15)

    def test_weyl_bound(self):
        gen = np.random.default_rng(4)
        for _ in range(20):
            omega = random_spd(4, gen)
            phi = random_sym(4, gen)
            d = covariance_direction(phi, np.linalg.inv(omega))
            t, n = 2.0, 300
            shift = np.linalg.eigvalsh(perturbed_precision(omega, d, t, n)) - np.linalg.eigvalsh(omega)
            bound = math.sqrt(2) * abs(t) * np.max(np.abs(np.linalg.eigvalsh(phi))) / (math.sqrt(n) * d.normalizer)
            assert np.max(np.abs(shift)) <= bound * (1 + 1e-12)

    def test_precision_step(self):
        gen = np.random.default_rng(5)
        omega_star = random_spd(3, gen)
        psi = random_sym(3, gen)
        d = PerturbationDirection(psi, PRECISION, 1.0, 3, omega_star)
        assert np.allclose(d.step_matrix(), -omega_star @ psi @ omega_star)

    def test_dimension_mismatch(self):
        d = covariance_direction(np.eye(2), np.eye(2))
        with pytest.raises(DimensionMismatch):
            perturbed_precision(np.eye(3), d, 1.0, 10)


class TestTaylorRemainder:
    @pytest.mark.parametrize("h", [-0.9, -0.3, -1e-3, 1e-6, 0.004, 0.2, 0.7, 0.95])
    def test_matches_quadrature(self, h):
        value, _ = quad(lambda s: (h - s) ** 2 / (1 - s) ** 3, 0.0, h, epsabs=1e-15, epsrel=1e-13)
        assert taylor_remainder(h) == pytest.approx(value, abs=1e-10, rel=1e-10)

    def test_vectorized(self):
        h = np.array([-0.5, 0.0, 0.5])
        assert np.allclose(taylor_remainder(h), [taylor_remainder(x) for x in h])
        assert taylor_remainder(0.0) == 0.0

    def test_too_large(self):
        with pytest.raises(PerturbationTooLarge):
            taylor_remainder(1.0)


class TestExpansionCheck:
    def test_t_zero(self):
        gen = np.random.default_rng(6)
        omega = random_spd(3, gen)
        d = covariance_direction(random_sym(3, gen), np.linalg.inv(omega))
        check = likelihood_expansion_check(omega, d, 0.0, np.eye(3), 100)
        assert check.lhs == 0.0 and check.rhs == 0.0 and check.remainder == 0.0

    @pytest.mark.parametrize("p", [2, 5])
    @pytest.mark.parametrize("n", [50, 500])
    def test_identity_holds(self, p, n):
        gen = np.random.default_rng(100 * p + n)
        for k in range(10):
            omega = random_spd(p, gen)
            sigma = np.linalg.inv(omega)
            phi = random_sym(p, gen)
            x = gen.multivariate_normal(np.zeros(p), sigma, size=n)
            s = x.T @ x / n
            if k % 2:
                c = math.sqrt(float(np.trace(omega @ phi @ omega @ phi)))
                d = PerturbationDirection(phi, PRECISION, c, p, omega)
            else:
                d = covariance_direction(phi, sigma)
            for t in (-2.0, 1.0, 3.0):
                check = likelihood_expansion_check(omega, d, t, s, n)
                assert abs(check.lhs - check.rhs) <= 1e-8 * (1 + abs(check.lhs))

    def test_remainder_cubic_scaling(self):
        gen = np.random.default_rng(7)
        omega = random_spd(3, gen)
        d = covariance_direction(random_sym(3, gen), np.linalg.inv(omega))
        r1 = likelihood_expansion_check(omega, d, 2.0, np.eye(3), 50).remainder
        r2 = likelihood_expansion_check(omega, d, 1.0, np.eye(3), 50).remainder
        assert abs(r1) >= 7 * abs(r2) > 0

    def test_too_large(self):
        d = covariance_direction(np.eye(2), np.eye(2))
        with pytest.raises(PerturbationTooLarge):
            likelihood_expansion_check(np.eye(2), d, -10.0, np.eye(2), 2)
