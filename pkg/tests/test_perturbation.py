import math
from itertools import product

import numpy as np
import pytest

from matbvm.errors import OrderTooHigh, ZeroEigengap
from matbvm.perturbation import (
    K_MAX,
    KatoContext,
    compositions,
    kato_error_scaling,
    kato_first_order,
    kato_partial_sum,
    kato_second_order,
    kato_term,
    random_symmetric,
    second_order_bias_probe,
)
from matbvm.rng import RngStream


def ctx(values, delta, m=1):
    return KatoContext(np.asarray(values, dtype=float), np.asarray(delta, dtype=float), m)


class TestCompositions:
    @pytest.mark.parametrize("total,parts", [(0, 1), (2, 3), (4, 4), (5, 6)])
    def test_matches_brute_force(self, total, parts):
        brute = sorted(c for c in product(range(total + 1), repeat=parts) if sum(c) == total)
        assert sorted(compositions(total, parts)) == brute
        assert len(brute) == math.comb(total + parts - 1, parts - 1)


class TestContext:
    def test_zero_gap(self):
        with pytest.raises(ZeroEigengap):
            ctx([2.0, 2.0, 1.0], np.zeros((3, 3)))

    def test_unsorted(self):
        with pytest.raises(ValueError):
            ctx([1.0, 2.0], np.zeros((2, 2)))

    def test_from_matrices_rotates(self):
        q, _ = np.linalg.qr(np.random.default_rng(0).standard_normal((3, 3)))
        base = q @ np.diag([3.0, 2.0, 1.0]) @ q.T
        delta = random_symmetric(3, 0.1, RngStream(1))
        c = KatoContext.from_matrices(base, delta, 1)
        exact = np.linalg.eigvalsh(base + delta)[-1] - 3.0
        assert kato_partial_sum(c, 6).partial_sum == pytest.approx(exact, abs=1e-7)


class TestFirstOrder:
    def test_zero(self):
        assert kato_first_order(ctx([3, 2, 1], np.zeros((3, 3)))) == 0.0

    def test_diagonal_is_exact(self):
        c = ctx([3, 2, 1], np.diag([0.1, -0.2, 0.05]))
        assert kato_first_order(c) == pytest.approx(0.1)
        for k in range(2, K_MAX + 1):
            assert kato_term(c, k) == 0.0
        s = kato_partial_sum(c, 1)
        assert s.partial_sum == pytest.approx(s.exact, abs=1e-14)

    def test_two_by_two_diagonal(self):
        c = ctx([3, 1], [[0.25, 0.0], [0.0, 0.0]])
        assert kato_first_order(c) == 0.25 == pytest.approx(kato_partial_sum(c, 1).exact)


class TestHigherOrder:
    def test_two_by_two_second_order(self):
        eps = 0.3
        c = ctx([3, 1], [[0, eps], [eps, 0]])
        assert kato_term(c, 2) == pytest.approx(eps**2 / 2, abs=1e-15)

    def test_second_order_closed_form(self):
        for seed in range(20):
            delta = random_symmetric(5, 0.4, RngStream(seed))
            for m in (1, 3, 5):
                c = ctx([5, 4, 3, 2, 1], delta, m)
                assert abs(kato_term(c, 2) - kato_second_order(c)) <= 1e-12

    def test_zero_delta(self):
        c = ctx([3, 2, 1], np.zeros((3, 3)))
        assert all(kato_term(c, k) == 0.0 for k in range(2, K_MAX + 1))

    def test_odd_orders_vanish_for_two_by_two(self):
        # exact top eigenvalue 2 + sqrt(1 + eps^2) is even in eps
        c = ctx([3, 1], [[0, 0.2], [0.2, 0]])
        assert kato_term(c, 3) == pytest.approx(0.0, abs=1e-15)
        assert kato_term(c, 5) == pytest.approx(0.0, abs=1e-15)

    def test_two_by_two_fourth_order(self):
        # sqrt(1 + x) = 1 + x/2 - x^2/8 + ...: the eps^4 coefficient is -1/8
        for eps in (0.05, 0.02):
            c = ctx([3, 1], [[0, eps], [eps, 0]])
            err = kato_partial_sum(c, 3).error
            assert err / eps**4 == pytest.approx(-1 / 8, rel=0.2)
            assert kato_term(c, 4) == pytest.approx(-(eps**4) / 8, rel=1e-12)

    def test_order_too_high(self):
        c = ctx([3, 1], np.zeros((2, 2)))
        with pytest.raises(OrderTooHigh):
            kato_term(c, K_MAX + 1)
        with pytest.raises(OrderTooHigh):
            kato_partial_sum(c, K_MAX + 1)


class TestPartialSum:
    @pytest.mark.parametrize("K", [1, 2, 3])
    def test_truncation_order(self, K):
        for seed in range(3):
            check = kato_error_scaling([3.0, 2.0, 1.0], 1, K, (0.1, 0.05), RngStream(seed))
            assert check.ratio >= 2 ** (K + 1) * 0.75

    def test_summability_condition(self):
        small = kato_partial_sum(ctx([3, 2, 1], random_symmetric(3, 0.01, RngStream(0))), 6)
        big = kato_partial_sum(ctx([3, 2, 1], random_symmetric(3, 2.0, RngStream(0))), 6)
        assert small.summable and not big.summable
        assert abs(small.error) <= 1e-15 + 1e-12 * abs(small.exact)


class TestBiasProbe:
    def test_positive_each_replication(self):
        s = np.diag([2.0] + [1.0] * 9)
        probe = second_order_bias_probe(s, 500, 10, 20, RngStream(3))
        assert np.all(probe.values > 0)
        assert probe.mean_sqrt_n_second_order >= probe.lower_bound - 1e-12

    def test_negligible_when_n_large(self):
        probe = second_order_bias_probe(np.diag([2.0, 1.0, 1.0]), 100_000, 3, 50, RngStream(4))
        assert probe.mean_sqrt_n_second_order <= 0.1

    def test_lower_bound_with_spread_spectrum(self):
        probe = second_order_bias_probe(np.diag([4.0, 3.0, 1.0, 0.5]), 300, 4, 30, RngStream(5))
        assert np.all(probe.values > 0)
        assert probe.lower_bound <= probe.mean_sqrt_n_second_order

    def test_requires_diagonal(self):
        with pytest.raises(ValueError):
            second_order_bias_probe(np.array([[2.0, 0.1], [0.1, 1.0]]), 10, 2, 1, RngStream(0))
