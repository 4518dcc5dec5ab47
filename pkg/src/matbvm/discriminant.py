"""Linear and quadratic discriminant functionals for two Gaussian classes.

The QDA rule evaluated at a fixed new point ``z`` is

    D = -(z - mu_x)^T Omega_x (z - mu_x) + (z - mu_y)^T Omega_y (z - mu_y)
        + log(det Omega_x / det Omega_y),

and LDA is the same with a shared ``Omega`` (the log-det term cancels).
Posterior sampling uses the product prior: ``N(0, I)`` on each mean and the
constrained Gaussian prior on each precision matrix.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import NamedTuple

import numpy as np

from .errors import BadInit, CovarianceMismatch, DimensionMismatch, NonFiniteLikelihood, NotPositiveDefinite, SingularSample
from .linalg import as_dataset, cholesky, log_det, sample_covariance, spd_inverse, sqrtm_spd, symmetrize
from .model import ConstrainedGaussianPrior, log_likelihood
from .rng import RngStream, as_generator
from .samplers import DrawMeta, McmcConfig, StepAdapter, metropolis_step, project_into_support

LDA = "lda"
QDA = "qda"


def _mode(mode: str) -> str:
    mode = str(mode).lower()
    if mode not in (LDA, QDA):
        raise ValueError(f"mode must be 'lda' or 'qda', got {mode!r}")
    return mode


@dataclass(frozen=True, eq=False)
class DaTruth:
    mu_x: np.ndarray
    mu_y: np.ndarray
    sigma_x: np.ndarray
    sigma_y: np.ndarray
    z: np.ndarray

    def __post_init__(self):
        for name in ("mu_x", "mu_y", "z"):
            object.__setattr__(self, name, np.asarray(getattr(self, name), dtype=float).ravel())
        for name in ("sigma_x", "sigma_y"):
            value = symmetrize(getattr(self, name))
            cholesky(value)
            object.__setattr__(self, name, value)
        p = self.mu_x.size
        if any(getattr(self, k).size != p for k in ("mu_y", "z")) or self.sigma_x.shape != (p, p) or self.sigma_y.shape != (p, p):
            raise DimensionMismatch("DaTruth fields disagree in dimension")

    @property
    def p(self) -> int:
        return self.mu_x.size

    @property
    def omega_x(self) -> np.ndarray:
        return spd_inverse(self.sigma_x)

    @property
    def omega_y(self) -> np.ndarray:
        return spd_inverse(self.sigma_y)

    def shared_covariance(self, tol: float = 1e-10) -> bool:
        scale = 1.0 + float(np.max(np.abs(self.sigma_x)))
        return float(np.max(np.abs(self.sigma_x - self.sigma_y))) <= tol * scale

    def value(self, mode: str) -> float:
        """Discriminant at the true parameters."""
        if _mode(mode) == LDA:
            return lda_discriminant(self.mu_x, self.mu_y, self.omega_x, self.z)
        return qda_discriminant(self.mu_x, self.mu_y, self.omega_x, self.omega_y, self.z)


@dataclass(frozen=True, eq=False)
class DaDataset:
    x: np.ndarray
    y: np.ndarray

    def __post_init__(self):
        x = as_dataset(self.x)
        y = as_dataset(self.y)
        if x.shape[1] != y.shape[1]:
            raise DimensionMismatch(f"classes have different dimensions: {x.shape[1]} vs {y.shape[1]}")
        if x.shape[0] != y.shape[0]:
            raise DimensionMismatch(f"classes must have equal sizes: x.n={x.shape[0]}, y.n={y.shape[0]}")
        object.__setattr__(self, "x", x)
        object.__setattr__(self, "y", y)

    @property
    def n(self) -> int:
        return self.x.shape[0]

    @property
    def p(self) -> int:
        return self.x.shape[1]


def qda_discriminant(mu_x, mu_y, omega_x, omega_y, z) -> float:
    dx = np.asarray(z, dtype=float) - np.asarray(mu_x, dtype=float)
    dy = np.asarray(z, dtype=float) - np.asarray(mu_y, dtype=float)
    omega_x = symmetrize(omega_x)
    omega_y = symmetrize(omega_y)
    return float(-dx @ omega_x @ dx + dy @ omega_y @ dy + log_det(omega_x) - log_det(omega_y))


def lda_discriminant(mu_x, mu_y, omega, z) -> float:
    dx = np.asarray(z, dtype=float) - np.asarray(mu_x, dtype=float)
    dy = np.asarray(z, dtype=float) - np.asarray(mu_y, dtype=float)
    omega = symmetrize(omega)
    return float(-dx @ omega @ dx + dy @ omega @ dy)


def da_center(data: DaDataset, mode: str, z) -> float:
    """Plug-in discriminant at ``z`` from sample means and centered covariances.

    LDA pools the two centered covariances as ``(S_x + S_y) / 2``.
    """
    mode = _mode(mode)
    xbar = data.x.mean(axis=0)
    ybar = data.y.mean(axis=0)
    sx = sample_covariance(data.x, centered=True)
    sy = sample_covariance(data.y, centered=True)
    try:
        if mode == LDA:
            return lda_discriminant(xbar, ybar, spd_inverse(0.5 * (sx + sy)), z)
        return qda_discriminant(xbar, ybar, spd_inverse(sx), spd_inverse(sy), z)
    except NotPositiveDefinite as exc:
        raise SingularSample("class sample covariance is singular") from exc


class LdaVariance(NamedTuple):
    v2: float
    phi: np.ndarray
    xi_x: np.ndarray
    xi_y: np.ndarray


class QdaVariance(NamedTuple):
    v2: float
    phi_x: np.ndarray
    phi_y: np.ndarray
    xi_x: np.ndarray
    xi_y: np.ndarray


def _frob_sq_sandwich(root: np.ndarray, phi: np.ndarray) -> float:
    return float(np.sum((root @ phi @ root) ** 2))


def lda_variance(truth: DaTruth) -> LdaVariance:
    """``V^2 = 4 ||S^1/2 Phi S^1/2||_F^2 + xi_x^T Omega xi_x + xi_y^T Omega xi_y``.

    Raises:
        CovarianceMismatch: if the two class covariances differ.
    """
    if not truth.shared_covariance():
        raise CovarianceMismatch("LDA needs sigma_x == sigma_y")
    omega = truth.omega_x
    ax = truth.z - truth.mu_x
    ay = truth.z - truth.mu_y
    phi = 0.5 * omega @ (np.outer(ax, ax) - np.outer(ay, ay)) @ omega
    xi_x = 2.0 * (truth.z - truth.mu_x)
    xi_y = 2.0 * (truth.mu_y - truth.z)
    root = sqrtm_spd(truth.sigma_x)
    v2 = 4.0 * _frob_sq_sandwich(root, phi) + xi_x @ omega @ xi_x + xi_y @ omega @ xi_y
    return LdaVariance(float(v2), symmetrize(phi), xi_x, xi_y)


def qda_variance(truth: DaTruth) -> QdaVariance:
    """``V^2 = 2||Sx^1/2 Phi_x Sx^1/2||^2 + 2||Sy^1/2 Phi_y Sy^1/2||^2
    + xi_x^T Omega_x xi_x + xi_y^T Omega_y xi_y``."""
    omega_x = truth.omega_x
    omega_y = truth.omega_y
    ax = truth.z - truth.mu_x
    ay = truth.z - truth.mu_y
    phi_x = -omega_x @ (truth.sigma_x - np.outer(ax, ax)) @ omega_x
    phi_y = omega_y @ (truth.sigma_y - np.outer(ay, ay)) @ omega_y
    xi_x = 2.0 * (truth.z - truth.mu_x)
    xi_y = 2.0 * (truth.mu_y - truth.z)
    v2 = (
        2.0 * _frob_sq_sandwich(sqrtm_spd(truth.sigma_x), phi_x)
        + 2.0 * _frob_sq_sandwich(sqrtm_spd(truth.sigma_y), phi_y)
        + xi_x @ omega_x @ xi_x
        + xi_y @ omega_y @ xi_y
    )
    return QdaVariance(float(v2), symmetrize(phi_x), symmetrize(phi_y), xi_x, xi_y)


def da_variance(truth: DaTruth, mode: str) -> float:
    return lda_variance(truth).v2 if _mode(mode) == LDA else qda_variance(truth).v2


class SeparationCheck(NamedTuple):
    v2: float
    bound: float
    holds: bool


def separation_bound_check(truth: DaTruth) -> SeparationCheck:
    """``V^2 >= 2 lambda_min(Omega) ||mu_x - mu_y||^2`` for the LDA variance."""
    v2 = lda_variance(truth).v2
    lam_min = float(np.linalg.eigvalsh(truth.omega_x)[0])
    gap = truth.mu_x - truth.mu_y
    bound = 2.0 * lam_min * float(gap @ gap)
    return SeparationCheck(v2, bound, v2 >= bound - 1e-10)


def centered_scatter(data, mu) -> np.ndarray:
    """``(1/n) sum (x_i - mu)(x_i - mu)^T``."""
    data = as_dataset(data)
    d = data - np.asarray(mu, dtype=float)
    return symmetrize(d.T @ d / data.shape[0])


def da_log_likelihood(mu, omega, data) -> float:
    """``(n/2) log det Omega - (n/2) tr(Omega S(mu))`` for one class."""
    data = as_dataset(data)
    return log_likelihood(omega, centered_scatter(data, mu), data.shape[0])


# -- posterior sampling -----------------------------------------------------


class MeanConditional(NamedTuple):
    mean: np.ndarray
    cov: np.ndarray


def mean_conditional(omega, xbar, n: int) -> MeanConditional:
    """Full conditional of a class mean under the ``N(0, I)`` prior:
    precision ``n Omega + I``, mean ``(n Omega + I)^-1 n Omega xbar``."""
    omega = symmetrize(omega)
    prec = n * omega + np.eye(omega.shape[0])
    cov = spd_inverse(prec)
    return MeanConditional(cov @ (n * omega @ np.asarray(xbar, dtype=float)), cov)


def draw_mean_conditional(omega, xbar, n: int, gen: np.random.Generator) -> np.ndarray:
    mean, cov = mean_conditional(omega, xbar, n)
    return mean + cholesky(cov) @ gen.standard_normal(mean.size)


@dataclass
class DaDraws:
    """Posterior draws; for LDA ``omega_x`` and ``omega_y`` are the same array."""

    mu_x: np.ndarray
    mu_y: np.ndarray
    omega_x: np.ndarray
    omega_y: np.ndarray
    meta: DrawMeta

    def __len__(self):
        return len(self.mu_x)

    def discriminants(self, mode: str, z) -> np.ndarray:
        z = np.asarray(z, dtype=float)
        dx = z - self.mu_x
        dy = z - self.mu_y
        qx = np.einsum("ki,kij,kj->k", dx, self.omega_x, dx)
        qy = np.einsum("ki,kij,kj->k", dy, self.omega_y, dy)
        if _mode(mode) == LDA:
            return qy - qx
        return qy - qx + log_det(self.omega_x) - log_det(self.omega_y)


class _ClassStats(NamedTuple):
    n: int
    xbar: np.ndarray
    scatter: np.ndarray  # centered, divided by n


def _class_stats(data) -> _ClassStats:
    data = as_dataset(data)
    if not np.all(np.isfinite(data)):
        raise NonFiniteLikelihood("data contains non-finite values")
    return _ClassStats(data.shape[0], data.mean(axis=0), sample_covariance(data, centered=True))


def _omega_log_target(stats: list[_ClassStats], mus: list[np.ndarray], prior: ConstrainedGaussianPrior):
    # sum over classes of l(mu, Omega) with S(mu) = S_c + (xbar - mu)(xbar - mu)^T
    total_n = sum(s.n for s in stats)
    weighted = sum(s.n * (s.scatter + np.outer(s.xbar - mu, s.xbar - mu)) for s, mu in zip(stats, mus)) / total_n

    def log_target(omega):
        if not prior.contains(omega):
            return -math.inf
        return log_likelihood(omega, weighted, total_n) - 0.5 * float(np.sum(omega * omega))

    return log_target


def _initial_omega(stats: list[_ClassStats], lambda_cap: float) -> np.ndarray:
    total_n = sum(s.n for s in stats)
    pooled = sum(s.n * s.scatter for s in stats) / total_n
    p = pooled.shape[0]
    try:
        return project_into_support(spd_inverse(pooled + np.eye(p) / total_n), lambda_cap)
    except NotPositiveDefinite as exc:
        raise SingularSample("cannot initialize from the sample covariance") from exc
    except Exception as exc:
        raise BadInit(str(exc)) from exc


def _gibbs_chain(stats: list[_ClassStats], lambda_cap, config: McmcConfig, gen):
    """Alternate exact mean updates with one random-walk step on the shared Omega."""
    prior = ConstrainedGaussianPrior(lambda_cap)
    steps, burn_in = config.resolve()
    omega = _initial_omega(stats, lambda_cap)
    mus = [s.xbar.copy() for s in stats]
    p = omega.shape[0]
    total_n = sum(s.n for s in stats)
    adapter = StepAdapter(config.step_scale / math.sqrt(total_n * p))

    kept_idx = range(burn_in, steps, config.thinning)
    n_kept = len(kept_idx)
    mu_out = np.empty((len(stats), n_kept, p))
    omega_out = np.empty((n_kept, p, p))
    accepted = 0
    counted = 0
    k = 0
    for i in range(steps):
        mus = [draw_mean_conditional(omega, s.xbar, s.n, gen) for s in stats]
        log_target = _omega_log_target(stats, mus, prior)
        lp = log_target(omega)
        omega, lp, ok = metropolis_step(log_target, omega, lp, adapter.step_scale, gen)
        if i < burn_in:
            if config.adapt:
                adapter.update(ok)
        else:
            accepted += ok
            counted += 1
            if (i - burn_in) % config.thinning == 0:
                for c in range(len(stats)):
                    mu_out[c, k] = mus[c]
                omega_out[k] = omega
                k += 1
    return mu_out, omega_out, accepted / max(counted, 1), burn_in


def da_posterior_draws(data: DaDataset, lambda_cap: float, mode: str, config: McmcConfig, rng) -> DaDraws:
    """Metropolis-within-Gibbs draws of ``(mu_x, mu_y, Omega_x, Omega_y)``.

    QDA runs one independent chain per class on child streams ``stream_id``
    and ``stream_id + 1``; LDA runs a single chain with a shared precision.
    """
    mode = _mode(mode)
    sx = _class_stats(data.x)
    sy = _class_stats(data.y)
    seed = stream_id = None
    if isinstance(rng, RngStream):
        seed, stream_id = rng.seed, rng.stream_id
    if mode == LDA:
        gen = as_generator(rng)
        mu, omega, acc, burn_in = _gibbs_chain([sx, sy], lambda_cap, config, gen)
        meta = DrawMeta("mcmc", acc, burn_in, config.thinning, seed, stream_id)
        return DaDraws(mu[0], mu[1], omega, omega, meta)

    if isinstance(rng, RngStream):
        gens = [rng.child(0).generator(), rng.child(1).generator()]
    else:
        gen = as_generator(rng)
        gens = [gen, gen]
    mu_x, omega_x, acc_x, burn_in = _gibbs_chain([sx], lambda_cap, config, gens[0])
    mu_y, omega_y, acc_y, _ = _gibbs_chain([sy], lambda_cap, config, gens[1])
    meta = DrawMeta("mcmc", 0.5 * (acc_x + acc_y), burn_in, config.thinning, seed, stream_id)
    return DaDraws(mu_x[0], mu_y[0], omega_x, omega_y, meta)
