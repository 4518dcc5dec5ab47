"""Gaussian log-likelihood, prior log-densities and the perturbed precision.

Log-densities omit normalizing constants throughout; only differences in
``omega`` are ever used.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple, Union

import numpy as np

from .errors import DimensionMismatch, NotPositiveDefinite, PerturbationTooLarge
from .linalg import cholesky, log_det, spd_inverse, symmetrize

COVARIANCE = "covariance"
PRECISION = "precision"
_TARGET_ALIASES = {
    "covariance": COVARIANCE,
    "cov": COVARIANCE,
    "sigma": COVARIANCE,
    "precision": PRECISION,
    "prec": PRECISION,
    "omega": PRECISION,
}


def normalize_target(target: str) -> str:
    try:
        return _TARGET_ALIASES[str(target).lower()]
    except KeyError:
        raise ValueError(f"target must be 'covariance' or 'precision', got {target!r}") from None


@dataclass(frozen=True)
class WishartPrior:
    """``W_p(I, p + b - 1)`` on the precision matrix."""

    b: int = 3

    def __post_init__(self):
        if int(self.b) != self.b or self.b < 1:
            raise ValueError(f"Wishart prior needs an integer b >= 1, got {self.b!r}")


@dataclass(frozen=True)
class ConstrainedGaussianPrior:
    """Density ``exp(-||Omega||_F^2 / 2)`` restricted to
    ``{||Omega|| < 2*lambda_cap, ||Omega^-1|| <= 2*lambda_cap}``."""

    lambda_cap: float = 10.0

    def __post_init__(self):
        if not (math.isfinite(self.lambda_cap) and self.lambda_cap > 0):
            raise ValueError(f"lambda_cap must be finite and positive, got {self.lambda_cap!r}")

    def contains(self, omega) -> bool:
        values = np.linalg.eigvalsh(symmetrize(omega))
        cap = 2.0 * self.lambda_cap
        # ||Omega^-1|| <= cap  <=>  lambda_min(Omega) >= 1/cap
        return bool(values[0] > 0.0 and values[-1] < cap and values[0] * cap >= 1.0)


PriorSpec = Union[WishartPrior, ConstrainedGaussianPrior]


def log_likelihood(omega, sigma_hat, n: int) -> float:
    """``(n/2) log det(omega) - (n/2) tr(omega @ sigma_hat)``."""
    omega = symmetrize(omega)
    sigma_hat = symmetrize(sigma_hat)
    if omega.shape != sigma_hat.shape:
        raise DimensionMismatch(f"omega {omega.shape} vs sigma_hat {sigma_hat.shape}")
    return 0.5 * n * (log_det(omega) - float(np.sum(omega * sigma_hat)))


def log_prior(prior: PriorSpec, omega) -> float:
    """Unnormalized prior log-density; ``-inf`` outside the support."""
    omega = symmetrize(omega)
    if isinstance(prior, WishartPrior):
        try:
            ld = log_det(omega)
        except NotPositiveDefinite:
            return -math.inf
        return 0.5 * (prior.b - 2) * ld - 0.5 * float(np.trace(omega))
    if isinstance(prior, ConstrainedGaussianPrior):
        if not prior.contains(omega):
            return -math.inf
        return -0.5 * float(np.sum(omega * omega))
    raise TypeError(f"unknown prior {prior!r}")


def log_posterior_kernel(prior: PriorSpec, omega, sigma_hat, n: int) -> float:
    lp = log_prior(prior, omega)
    if lp == -math.inf:
        return lp
    return log_likelihood(omega, sigma_hat, n) + lp


@dataclass(frozen=True, eq=False)
class PerturbationDirection:
    """Linearization direction of a functional.

    ``phi`` is the matrix Phi (covariance target) or Psi (precision target);
    ``normalizer`` is ``||S^1/2 phi S^1/2||_F`` with ``S`` the true covariance
    or precision respectively.  ``omega_star`` is carried for precision
    targets, whose perturbation moves along ``-Omega* Psi Omega*``.
    """

    phi: np.ndarray
    target: str
    normalizer: float
    rank_bound: int
    omega_star: np.ndarray | None = None

    def __post_init__(self):
        object.__setattr__(self, "target", normalize_target(self.target))
        object.__setattr__(self, "phi", symmetrize(self.phi))
        if not self.normalizer > 0:
            raise ValueError("normalizer must be positive")
        if self.target == PRECISION and self.omega_star is None:
            raise ValueError("precision-target directions need omega_star")

    def step_matrix(self) -> np.ndarray:
        """Matrix ``D`` with ``Omega_t = Omega + sqrt(2) t D / (sqrt(n) normalizer)``."""
        if self.target == COVARIANCE:
            return self.phi
        os = symmetrize(self.omega_star)
        if os.shape != self.phi.shape:
            raise DimensionMismatch("omega_star and phi differ in shape")
        return -symmetrize(os @ self.phi @ os)


def perturbed_precision(omega, direction: PerturbationDirection, t: float, n: int) -> np.ndarray:
    """Shifted precision used to absorb a location change in the functional.

    Covariance target: ``Omega + sqrt(2) t Phi / (sqrt(n) c)``.
    Precision target: ``Omega - sqrt(2) t Omega* Psi Omega* / (sqrt(n) c)``.
    The result may be indefinite for large ``|t|``.
    """
    omega = symmetrize(omega)
    step = direction.step_matrix()
    if omega.shape != step.shape:
        raise DimensionMismatch(f"omega {omega.shape} vs direction {step.shape}")
    if t == 0:
        return omega
    scale = math.sqrt(2.0) * t / (math.sqrt(n) * direction.normalizer)
    return symmetrize(omega + scale * step)


def taylor_remainder(h):
    """``int_0^h (h - s)^2 / (1 - s)^3 ds = -log(1 - h) - h - h^2/2`` for h < 1."""
    h = np.asarray(h, dtype=float)
    scalar = h.ndim == 0
    h = np.atleast_1d(h)
    if np.any(h >= 1.0):
        raise PerturbationTooLarge("remainder undefined for h >= 1")
    out = -np.log1p(-h) - h - 0.5 * h * h
    # the closed form cancels catastrophically near 0; switch to the series
    small = np.abs(h) < 1e-2
    hs = h[small]
    out[small] = sum(hs**k / k for k in range(3, 12))
    return float(out[0]) if scalar else out


class ExpansionCheck(NamedTuple):
    lhs: float
    rhs: float
    remainder: float


def likelihood_expansion_check(
    omega, direction: PerturbationDirection, t: float, sigma_hat, n: int
) -> ExpansionCheck:
    """Evaluate both sides of the exact log-likelihood expansion.

    ``lhs = l_n(Omega_t) - l_n(Omega)`` directly.  ``rhs`` is the linear term
    minus ``t^2/2`` times the Frobenius ratio minus ``remainder``, where
    ``remainder = (n/2) sum_j R(h_j)`` over the eigenvalues ``h_j`` of
    ``Sigma^1/2 (Omega - Omega_t) Sigma^1/2`` and ``Sigma = Omega^-1``.

    Raises:
        PerturbationTooLarge: if some ``h_j >= 1`` (``Omega_t`` not PD).
    """
    omega = symmetrize(omega)
    sigma_hat = symmetrize(sigma_hat)
    omega_t = perturbed_precision(omega, direction, t, n)
    sigma = spd_inverse(omega)
    factor = cholesky(sigma)
    # eigenvalues of L^T (Omega - Omega_t) L equal those of Sigma^1/2 (.) Sigma^1/2
    h = np.linalg.eigvalsh(symmetrize(factor.T @ (omega - omega_t) @ factor))
    if np.any(h >= 1.0):
        raise PerturbationTooLarge(f"max h_j = {h.max():.4g} >= 1")

    lhs = log_likelihood(omega_t, sigma_hat, n) - log_likelihood(omega, sigma_hat, n)

    step = direction.step_matrix()
    c = direction.normalizer
    linear = t * math.sqrt(n) / (math.sqrt(2.0) * c) * float(np.sum((sigma - sigma_hat) * step))
    ratio = float(np.trace(sigma @ step @ sigma @ step)) / c**2
    remainder = 0.5 * n * float(np.sum(taylor_remainder(h)))
    rhs = linear - 0.5 * t * t * ratio - remainder
    return ExpansionCheck(float(lhs), float(rhs), remainder)
