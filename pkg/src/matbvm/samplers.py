"""Multivariate normal, Wishart and posterior samplers.

The conjugate route draws the Wishart posterior exactly; the constrained
Gaussian prior has no closed-form posterior, so it is sampled with a
random-walk Metropolis chain on the upper-triangular coordinates of the
precision matrix.
"""

from __future__ import annotations

import json
import math
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable, NamedTuple

import numpy as np

from .errors import BadInit, DegreesOfFreedomTooSmall, NonFiniteLikelihood
from .linalg import as_dataset, cholesky, eig_sym, matrix_from_csv, matrix_to_csv, spd_inverse, symmetrize
from .model import ConstrainedGaussianPrior, log_likelihood, log_prior
from .rng import RngStream, as_generator

ADAPT_TARGET = 0.30


@dataclass
class DrawMeta:
    method: str
    acceptance_rate: float | None = None
    burn_in: int = 0
    thinning: int = 1
    seed: int | None = None
    stream_id: int | None = None


@dataclass
class PosteriorDraws:
    """Precision-matrix draws stacked as ``(k, p, p)``."""

    draws: np.ndarray
    meta: DrawMeta

    def __len__(self):
        return len(self.draws)

    def save(self, directory) -> None:
        """One ``draw_00000.csv`` per matrix plus ``meta.json``."""
        directory = Path(directory)
        directory.mkdir(parents=True, exist_ok=True)
        for k, omega in enumerate(self.draws):
            matrix_to_csv(omega, directory / f"draw_{k:05d}.csv")
        (directory / "meta.json").write_text(json.dumps(asdict(self.meta), sort_keys=True, indent=2))

    @classmethod
    def load(cls, directory) -> "PosteriorDraws":
        directory = Path(directory)
        meta = DrawMeta(**json.loads((directory / "meta.json").read_text()))
        files = sorted(directory.glob("draw_*.csv"))
        draws = np.stack([matrix_from_csv(f) for f in files])
        return cls(draws, meta)


def _stream_fields(rng):
    if isinstance(rng, RngStream):
        return rng.seed, rng.stream_id
    return None, None


def draw_mvn(cov, n: int, rng, mean=None) -> np.ndarray:
    """``n`` rows ``mean + L z`` with ``L = cholesky(cov)``, ``z ~ N(0, I)``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    factor = cholesky(cov)
    gen = as_generator(rng)
    rows = gen.standard_normal((n, factor.shape[0])) @ factor.T
    if mean is not None:
        rows = rows + np.asarray(mean, dtype=float)
    return rows


def draw_wishart(scale, df: int, rng) -> np.ndarray:
    """``sum_{l=1}^{df} Z_l Z_l^T`` with ``Z_l ~ N(0, scale)`` i.i.d."""
    factor = cholesky(scale)
    p = factor.shape[0]
    if df < p:
        raise DegreesOfFreedomTooSmall(f"df={df} < p={p}")
    z = as_generator(rng).standard_normal((int(df), p)) @ factor.T
    return symmetrize(z.T @ z)


def conjugate_posterior_draws(data, b: int, n_draws: int, rng) -> PosteriorDraws:
    """Exact draws from ``W_p((n Sigma_hat + I)^-1, n + p + b - 1)``.

    ``data`` may have zero rows, in which case the draws come from the prior.
    """
    data = np.asarray(data, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if not np.all(np.isfinite(data)):
        raise NonFiniteLikelihood("data contains non-finite values")
    n, p = data.shape
    scatter = data.T @ data  # n * Sigma_hat (uncentered)
    scale = spd_inverse(scatter + np.eye(p))
    df = n + p + b - 1
    gen = as_generator(rng)
    draws = np.stack([draw_wishart(scale, df, gen) for _ in range(n_draws)])
    seed, stream_id = _stream_fields(rng)
    return PosteriorDraws(draws, DrawMeta("conjugate", None, 0, 1, seed, stream_id))


# -- random-walk Metropolis -------------------------------------------------


class ChainResult(NamedTuple):
    chain: np.ndarray
    acceptance_rate: float


class StepAdapter:
    """Robbins-Monro adaptation of ``log(step_scale)`` toward a target rate."""

    def __init__(self, step_scale: float, target: float = ADAPT_TARGET):
        self.log_scale = math.log(step_scale)
        self.target = target
        self.iteration = 0

    @property
    def step_scale(self) -> float:
        return math.exp(self.log_scale)

    def update(self, accepted: bool) -> None:
        self.iteration += 1
        self.log_scale += (float(accepted) - self.target) / self.iteration**0.6


def symmetric_proposal(state: np.ndarray, step_scale: float, gen: np.random.Generator) -> np.ndarray:
    """Add ``step_scale * N(0, 1)`` to each upper-triangular coordinate."""
    p = state.shape[0]
    noise = np.zeros((p, p))
    iu = np.triu_indices(p)
    noise[iu] = gen.standard_normal(len(iu[0]))
    noise = noise + np.triu(noise, 1).T
    return state + step_scale * noise


def metropolis_step(log_target, state, state_lp, step_scale, gen):
    proposal = symmetric_proposal(state, step_scale, gen)
    prop_lp = log_target(proposal)
    if prop_lp > -math.inf and math.log(gen.uniform()) < prop_lp - state_lp:
        return proposal, prop_lp, True
    return state, state_lp, False


def metropolis_chain(
    log_target: Callable[[np.ndarray], float],
    init,
    steps: int,
    step_scale: float,
    rng,
    adapt_steps: int = 0,
) -> ChainResult:
    """Random-walk Metropolis over symmetric matrices.

    The first ``adapt_steps`` iterations tune the step size toward 30%
    acceptance; it is frozen afterwards.  ``acceptance_rate`` counts only the
    non-adaptive steps when there are any.

    Raises:
        BadInit: if ``log_target(init)`` is ``-inf``.
    """
    if not step_scale > 0:
        raise ValueError("step_scale must be positive")
    state = symmetrize(np.atleast_2d(init))
    state_lp = log_target(state)
    if not state_lp > -math.inf:
        raise BadInit("log_target(init) is -inf")
    gen = as_generator(rng)
    adapter = StepAdapter(step_scale)
    chain = np.empty((steps,) + state.shape)
    accepted = 0
    counted = 0
    for i in range(steps):
        adapting = i < adapt_steps
        state, state_lp, ok = metropolis_step(log_target, state, state_lp, adapter.step_scale, gen)
        if adapting:
            adapter.update(ok)
        if not adapting or adapt_steps >= steps:
            accepted += ok
            counted += 1
        chain[i] = state
    return ChainResult(chain, accepted / counted if counted else 0.0)


@dataclass
class McmcConfig:
    """Chain settings.

    ``step_scale`` is the constant ``c`` in the initial proposal size
    ``c / sqrt(n p)``.  ``steps=None`` sizes the chain so that
    ``n_draws`` draws are recorded; ``burn_in=None`` means 20% of steps.
    """

    steps: int | None = None
    burn_in: int | None = None
    thinning: int = 1
    step_scale: float = 1.0
    adapt: bool = True
    n_draws: int = 10_000

    def resolve(self) -> tuple[int, int]:
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")
        steps = self.steps
        if steps is None:
            steps = math.ceil(self.n_draws * self.thinning / 0.8)
        burn_in = self.burn_in if self.burn_in is not None else steps // 5
        if not 0 <= burn_in < steps:
            raise ValueError("burn_in must lie in [0, steps)")
        return steps, burn_in


def project_into_support(omega, lambda_cap: float, margin: float = 1e-6) -> np.ndarray:
    """Clip the spectrum of ``omega`` into ``[1/(2 cap), 2 cap)`` strictly inside."""
    values, vectors = eig_sym(omega)
    lo = (1.0 + margin) / (2.0 * lambda_cap)
    hi = 2.0 * lambda_cap * (1.0 - margin)
    if lo >= hi:
        raise BadInit(f"support is empty for lambda_cap={lambda_cap}")
    clipped = np.clip(values, lo, hi)
    return symmetrize((vectors * clipped) @ vectors.T)


def constrained_gaussian_log_target(sigma_hat, n: int, lambda_cap: float):
    prior = ConstrainedGaussianPrior(lambda_cap)

    def log_target(omega):
        lp = log_prior(prior, omega)
        if lp == -math.inf:
            return lp
        return log_likelihood(omega, sigma_hat, n) + lp

    return log_target


def gaussian_prior_posterior_draws(data, lambda_cap: float, config: McmcConfig, rng) -> PosteriorDraws:
    """Metropolis draws from the posterior under the constrained Gaussian prior."""
    data = np.asarray(data, dtype=float)
    if not np.all(np.isfinite(data)):
        raise NonFiniteLikelihood("data contains non-finite values")
    data = as_dataset(data)
    n, p = data.shape
    sigma_hat = data.T @ data / n
    try:
        init = project_into_support(spd_inverse(sigma_hat + np.eye(p) / n), lambda_cap)
    except Exception as exc:
        raise BadInit(f"could not build an initial state: {exc}") from exc

    steps, burn_in = config.resolve()
    log_target = constrained_gaussian_log_target(sigma_hat, n, lambda_cap)
    result = metropolis_chain(
        log_target,
        init,
        steps,
        config.step_scale / math.sqrt(n * p),
        rng,
        adapt_steps=burn_in if config.adapt else 0,
    )
    kept = result.chain[burn_in :: config.thinning]
    seed, stream_id = _stream_fields(rng)
    meta = DrawMeta("mcmc", result.acceptance_rate, burn_in, config.thinning, seed, stream_id)
    return PosteriorDraws(kept, meta)
