"""Eigenvalue perturbation series for a diagonal base matrix.

For ``A = diag(a)`` with a simple eigenvalue ``a_m`` and a symmetric
perturbation ``Delta`` (expressed in the eigenbasis of ``A``),

    lambda_m(A + Delta) - a_m = Delta_mm + sum_{k >= 2} lambda_m^(k),

    lambda_m^(k) = -(1/k) sum_{v_1 + ... + v_k = k - 1} tr(Delta R^{v_1} ... Delta R^{v_k}),

with ``R = sum_{j != m} e_j e_j^T / (a_m - a_j)`` and the convention
``R^0 = -e_m e_m^T``.  Every ``R^v`` is diagonal, so products are formed by
column scaling.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from itertools import combinations
from typing import Iterator, NamedTuple

import numpy as np

from .errors import OrderTooHigh, ZeroEigengap
from .linalg import eig_sym, symmetrize
from .rng import as_generator
from .samplers import draw_mvn

K_MAX = 6


def compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """All tuples of ``parts`` nonnegative integers summing to ``total``."""
    # stars and bars: choose positions of the parts - 1 bars
    for bars in combinations(range(total + parts - 1), parts - 1):
        prev = -1
        out = []
        for b in bars:
            out.append(b - prev - 1)
            prev = b
        out.append(total + parts - 1 - prev - 1)
        yield tuple(out)


@dataclass(frozen=True, eq=False)
class KatoContext:
    """Base spectrum ``values`` (nonincreasing), perturbation ``delta`` in
    that eigenbasis, and 1-based target index ``m``."""

    values: np.ndarray
    delta: np.ndarray
    m: int

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float).ravel()
        delta = symmetrize(self.delta)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "delta", delta)
        if delta.shape != (values.size, values.size):
            raise ValueError("delta must be p x p with p = len(values)")
        if np.any(np.diff(values) > 0):
            raise ValueError("base values must be nonincreasing")
        if not 1 <= self.m <= values.size:
            raise IndexError(f"m={self.m} out of range")
        if self.gap() <= 0.0:
            raise ZeroEigengap(f"a_{self.m} is not separated from its neighbours")

    @classmethod
    def from_matrices(cls, base, perturbation, m: int) -> "KatoContext":
        """Rotate ``perturbation`` into the eigenbasis of a symmetric ``base``."""
        values, vectors = eig_sym(base)
        return cls(values, vectors.T @ symmetrize(perturbation) @ vectors, m)

    @property
    def p(self) -> int:
        return self.values.size

    def gap(self) -> float:
        k = self.m - 1
        a = self.values
        gaps = [abs(a[k] - a[j]) for j in (k - 1, k + 1) if 0 <= j < a.size]
        return min(gaps) if gaps else math.inf

    def resolvent_diag(self, power: int) -> np.ndarray:
        """Diagonal of ``R^power`` (with ``R^0 = -e_m e_m^T``)."""
        k = self.m - 1
        d = np.zeros(self.p)
        if power == 0:
            d[k] = -1.0
            return d
        others = np.arange(self.p) != k
        d[others] = (self.values[k] - self.values[others]) ** (-float(power))
        return d

    def resolvent_norm(self) -> float:
        return float(np.max(np.abs(self.resolvent_diag(1)), initial=0.0))


def kato_first_order(ctx: KatoContext) -> float:
    return float(ctx.delta[ctx.m - 1, ctx.m - 1])


def kato_term(ctx: KatoContext, k: int) -> float:
    """Order-``k`` coefficient ``lambda_m^(k)`` by explicit enumeration."""
    if k < 2:
        raise ValueError("kato_term covers orders k >= 2; use kato_first_order for k = 1")
    if k > K_MAX:
        raise OrderTooHigh(f"order {k} exceeds K_MAX={K_MAX}")
    diags = [ctx.resolvent_diag(v) for v in range(k)]
    delta = ctx.delta
    total = 0.0
    for powers in compositions(k - 1, k):
        prod = delta * diags[powers[0]]
        for v in powers[1:]:
            prod = prod @ (delta * diags[v])
        total += float(np.trace(prod))
    return -total / k


def kato_second_order(ctx: KatoContext) -> float:
    """``sum_{j != m} Delta_mj^2 / (a_m - a_j)``: the ``k = 2`` term in closed form."""
    row = ctx.delta[ctx.m - 1]
    return float(np.sum(row**2 * ctx.resolvent_diag(1)))


class KatoSum(NamedTuple):
    partial_sum: float
    exact: float
    terms: tuple[float, ...]
    condition: float

    @property
    def error(self) -> float:
        return self.exact - self.partial_sum

    @property
    def summable(self) -> bool:
        return self.condition < 1.0


def kato_partial_sum(ctx: KatoContext, K: int) -> KatoSum:
    """First-order term plus orders 2..K, with the exact shift for comparison.

    ``condition = 3e ||Delta|| ||R||``; values below 1 guarantee summability.
    """
    if K < 1:
        raise ValueError("K must be >= 1")
    if K > K_MAX:
        raise OrderTooHigh(f"order {K} exceeds K_MAX={K_MAX}")
    terms = [kato_first_order(ctx)] + [kato_term(ctx, k) for k in range(2, K + 1)]
    perturbed = np.diag(ctx.values) + ctx.delta
    exact = float(eig_sym(perturbed).values[ctx.m - 1] - ctx.values[ctx.m - 1])
    spectral = float(np.max(np.abs(np.linalg.eigvalsh(ctx.delta)), initial=0.0))
    condition = 3.0 * math.e * spectral * ctx.resolvent_norm()
    return KatoSum(float(sum(terms)), exact, tuple(terms), condition)


class BiasProbe(NamedTuple):
    mean_sqrt_n_second_order: float
    lower_bound: float
    values: np.ndarray


def second_order_bias_probe(sigma_star, n: int, p: int, reps: int, rng) -> BiasProbe:
    """Monte Carlo size of ``sqrt(n) lambda_1^(2)`` for the top sample eigenvalue.

    For each replication, ``Delta = U*^T (Sigma* - Sigma_hat) U*`` with the
    uncentered sample covariance of ``n`` draws from ``N(0, Sigma*)``.
    ``lower_bound`` averages ``sqrt(n) / (a_1 - a_p) * sum_{j>=2} Delta_1j^2``,
    which never exceeds the second-order term.
    """
    sigma_star = symmetrize(sigma_star)
    if sigma_star.shape != (p, p):
        raise ValueError(f"sigma_star must be {p} x {p}")
    if np.any(sigma_star != np.diag(np.diag(sigma_star))):
        raise ValueError("sigma_star must be diagonal")
    diag = np.diag(sigma_star)
    order = np.argsort(-diag, kind="stable")
    a = diag[order]
    gen = as_generator(rng)
    root_n = math.sqrt(n)
    values = np.empty(reps)
    bounds = np.empty(reps)
    for r in range(reps):
        x = draw_mvn(sigma_star, n, gen)
        sigma_hat = x.T @ x / n
        delta = (sigma_star - sigma_hat)[np.ix_(order, order)]
        ctx = KatoContext(a, delta, 1)
        values[r] = root_n * kato_term(ctx, 2)
        bounds[r] = root_n / (a[0] - a[-1]) * float(np.sum(delta[0, 1:] ** 2))
    return BiasProbe(float(values.mean()), float(bounds.mean()), values)


def random_symmetric(p: int, spectral_norm: float, rng) -> np.ndarray:
    """Symmetric Gaussian matrix rescaled to the given spectral norm."""
    gen = as_generator(rng)
    g = gen.standard_normal((p, p))
    g = symmetrize(g)
    return g * (spectral_norm / float(np.max(np.abs(np.linalg.eigvalsh(g)))))


class ScalingCheck(NamedTuple):
    eps: tuple[float, float]
    errors: tuple[float, float]
    constant: float
    ratio: float
    second_order_gap: float


def kato_error_scaling(values, m: int, K: int, eps: tuple[float, float], rng) -> ScalingCheck:
    """Truncation error of the order-``K`` partial sum along one direction.

    A single random direction ``G`` with ``||G|| = 1`` is scaled to
    ``Delta = eps_i G``; ``constant = |error(eps_0)| / eps_0^(K+1)`` and
    ``ratio = |error(eps_0)| / |error(eps_1)|``, which tends to
    ``(eps_0 / eps_1)^(K+1)``.  ``second_order_gap`` compares the enumerated
    ``k = 2`` term with its closed form at ``eps_0``.
    """
    values = np.asarray(values, dtype=float)
    direction = random_symmetric(values.size, 1.0, rng)
    errors = []
    gap = 0.0
    for i, e in enumerate(eps):
        ctx = KatoContext(values, e * direction, m)
        errors.append(abs(kato_partial_sum(ctx, K).error))
        if i == 0:
            gap = abs(kato_term(ctx, 2) - kato_second_order(ctx))
    constant = errors[0] / eps[0] ** (K + 1)
    ratio = errors[0] / errors[1] if errors[1] > 0 else math.inf
    return ScalingCheck(tuple(eps), tuple(errors), constant, ratio, gap)
