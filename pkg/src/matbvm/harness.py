"""Experiment orchestration and distributional diagnostics.

``run_posterior_bvm`` draws one dataset from the truth, samples the
posterior, standardizes the functional draws with the plug-in centering and
the truth-based asymptotic variance, and measures the distance to N(0, 1).
``coverage_study`` and ``frequentist_check`` repeat experiments over
replications on child streams ``stream_id + r``; results are reduced in
replication order, so thread count never changes the output.
"""

from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, NamedTuple, Sequence, Union

import numpy as np
from scipy.special import ndtr, ndtri

from .discriminant import (
    DaDataset,
    DaTruth,
    LDA,
    QDA,
    da_center,
    da_posterior_draws,
    da_variance,
)
from .errors import EmptySamples, ZeroEigengap
from .functionals import (
    Eigenvalue,
    FunctionalSpec,
    TruthSpec,
    asymptotic_variance,
    eigengap,
    evaluate,
    evaluate_precision_draws,
    plug_in_center,
    standardize,
)
from .linalg import sample_covariance, spd_inverse
from .model import PRECISION, ConstrainedGaussianPrior, PriorSpec, WishartPrior
from .rng import RngStream, as_generator
from .samplers import McmcConfig, conjugate_posterior_draws, draw_mvn, gaussian_prior_posterior_draws

DEFAULT_T_GRID = (-2.0, -1.0, -0.5, 0.0, 0.5, 1.0, 2.0)
MIN_EIGENGAP = 0.1


# -- diagnostics ------------------------------------------------------------


def std_normal_cdf(t):
    """P(Z <= t) for Z ~ N(0, 1), via ``scipy.special.ndtr`` (erfc based)."""
    out = ndtr(np.asarray(t, dtype=float))
    return float(out) if np.ndim(out) == 0 else out


def ks_statistic(samples, cdf: Callable = std_normal_cdf) -> float:
    """``sup_x |F_N(x) - F(x)|`` evaluated at the jumps of the empirical CDF."""
    x = np.sort(np.asarray(samples, dtype=float).ravel())
    if x.size == 0:
        raise EmptySamples("KS statistic of an empty sample")
    n = x.size
    f = np.asarray(cdf(x), dtype=float)
    i = np.arange(1, n + 1)
    return float(max(np.max(i / n - f), np.max(f - (i - 1) / n)))


class MgfPoint(NamedTuple):
    t: float
    empirical: float
    target: float


def mgf_diagnostic(standardized, t_grid: Sequence[float] = DEFAULT_T_GRID) -> list[MgfPoint]:
    """Empirical ``E exp(t S)`` against the normal target ``exp(t^2 / 2)``."""
    s = np.asarray(standardized, dtype=float).ravel()
    if s.size == 0:
        raise EmptySamples("MGF of an empty sample")
    out = []
    for t in t_grid:
        if abs(t) > 2.0:
            raise ValueError(f"|t| must be <= 2 for tail control, got {t}")
        out.append(MgfPoint(float(t), float(np.mean(np.exp(t * s))), math.exp(0.5 * t * t)))
    return out


def effective_sample_size(trace) -> float:
    """Initial-positive-sequence ESS (Geyer) of a scalar chain, capped at N."""
    x = np.asarray(trace, dtype=float).ravel()
    n = x.size
    if n < 4:
        return float(n)
    x = x - x.mean()
    var = float(x @ x) / n
    if var == 0.0:
        return float(n)
    size = 1 << (2 * n - 1).bit_length()
    spec = np.fft.rfft(x, size)
    acf = np.fft.irfft(spec * np.conj(spec), size)[:n] / (n * var)
    # sum consecutive pairs until a pair sum turns nonpositive
    tau = -1.0
    for k in range(0, n - 1, 2):
        pair = acf[k] + acf[k + 1]
        if pair <= 0.0:
            break
        tau += 2.0 * pair
    return float(min(n, n / max(tau, 1e-12)))


def qq_pairs(standardized) -> np.ndarray:
    """``(theoretical, empirical)`` quantile pairs at plotting positions (i - 0.5)/N."""
    s = np.sort(np.asarray(standardized, dtype=float).ravel())
    probs = (np.arange(1, s.size + 1) - 0.5) / s.size
    return np.column_stack([ndtri(probs), s])


def histogram_bins(standardized, bins: int = 40) -> np.ndarray:
    """Rows ``(left, right, count, density)``."""
    s = np.asarray(standardized, dtype=float).ravel()
    counts, edges = np.histogram(s, bins=bins)
    width = np.diff(edges)
    density = counts / (s.size * width)
    return np.column_stack([edges[:-1], edges[1:], counts, density])


# -- configuration ----------------------------------------------------------

Truth = Union[TruthSpec, DaTruth]
Target = Union[FunctionalSpec, str]


@dataclass(eq=False)
class ExperimentConfig:
    """One experiment.  ``functional`` is a FunctionalSpec, or ``"lda"`` /
    ``"qda"`` together with a :class:`DaTruth`."""

    truth: Truth
    functional: Target
    prior: PriorSpec
    n: int
    n_draws: int = 10_000
    replications: int = 1
    alpha: float = 0.1
    seed: RngStream = field(default_factory=RngStream)
    mcmc: McmcConfig | None = None
    plugin_variance: bool = False
    t_grid: tuple[float, ...] = DEFAULT_T_GRID
    threads: int = 1

    def __post_init__(self):
        if self.n_draws < 100:
            raise ValueError("n_draws must be >= 100")
        if self.replications < 1:
            raise ValueError("replications must be >= 1")
        if not 0.0 < self.alpha < 1.0:
            raise ValueError("alpha must lie in (0, 1)")
        if self.n < 1:
            raise ValueError("n must be >= 1")
        if self.is_da and not isinstance(self.truth, DaTruth):
            raise TypeError("discriminant experiments need a DaTruth")
        if not self.is_da and not isinstance(self.truth, TruthSpec):
            raise TypeError("functional experiments need a TruthSpec")

    @property
    def is_da(self) -> bool:
        return isinstance(self.functional, str) and self.functional.lower() in (LDA, QDA)

    def mcmc_config(self) -> McmcConfig:
        cfg = self.mcmc or McmcConfig()
        return replace(cfg, n_draws=self.n_draws)

    def for_replication(self, r: int) -> "ExperimentConfig":
        return replace(self, seed=self.seed.child(r), replications=1)


@dataclass
class BvMReport:
    ks: float
    empirical_mean: float
    empirical_sd: float
    credible_interval: tuple[float, float]
    covered: bool
    mgf_grid: list[MgfPoint]
    ess: float
    truth_value: float
    center: float
    variance: float
    n_draws: int
    acceptance_rate: float | None = None
    standardized: np.ndarray = field(default=None, repr=False)

    def to_dict(self) -> dict:
        out = asdict(self)
        out.pop("standardized")
        out["credible_interval"] = list(self.credible_interval)
        out["mgf_grid"] = [p._asdict() for p in self.mgf_grid]
        return out


# -- experiment pieces ------------------------------------------------------


def truth_value(config: ExperimentConfig) -> float:
    if config.is_da:
        return config.truth.value(config.functional)
    return evaluate(config.functional, config.truth.sigma_star)


def truth_variance(config: ExperimentConfig, data=None) -> float:
    """Asymptotic variance at the truth, or at the plug-in when requested."""
    if config.is_da:
        truth = config.truth
        if config.plugin_variance and data is not None:
            truth = DaTruth(
                data.x.mean(axis=0),
                data.y.mean(axis=0),
                sample_covariance(data.x, centered=True),
                sample_covariance(data.y, centered=True),
                truth.z,
            )
            if config.functional.lower() == LDA:
                pooled = 0.5 * (truth.sigma_x + truth.sigma_y)
                truth = DaTruth(truth.mu_x, truth.mu_y, pooled, pooled, truth.z)
        return da_variance(truth, config.functional)
    truth = config.truth
    if config.plugin_variance and data is not None:
        truth = TruthSpec.from_sigma(sample_covariance(data))
    return asymptotic_variance(config.functional, truth)


def _check_eigengap(config: ExperimentConfig) -> None:
    f = config.functional
    if isinstance(f, Eigenvalue):
        gap = eigengap(config.truth, f.m, f.target)
        if gap <= MIN_EIGENGAP:
            raise ZeroEigengap(f"eigengap {gap:.3g} at m={f.m} must exceed {MIN_EIGENGAP}")


def draw_data(config: ExperimentConfig, gen):
    if config.is_da:
        t = config.truth
        return DaDataset(draw_mvn(t.sigma_x, config.n, gen, t.mu_x), draw_mvn(t.sigma_y, config.n, gen, t.mu_y))
    return draw_mvn(config.truth.sigma_star, config.n, gen)


def plug_in(config: ExperimentConfig, data) -> float:
    if config.is_da:
        return da_center(data, config.functional, config.truth.z)
    return plug_in_center(config.functional, data)


def posterior_values(config: ExperimentConfig, data, gen) -> tuple[np.ndarray, float | None]:
    """Functional values on posterior draws plus the MCMC acceptance rate."""
    prior = config.prior
    if config.is_da:
        if not isinstance(prior, ConstrainedGaussianPrior):
            raise TypeError("discriminant posteriors use the constrained Gaussian prior")
        draws = da_posterior_draws(data, prior.lambda_cap, config.functional, config.mcmc_config(), gen)
        return draws.discriminants(config.functional, config.truth.z), draws.meta.acceptance_rate
    if isinstance(prior, WishartPrior):
        draws = conjugate_posterior_draws(data, prior.b, config.n_draws, gen)
    elif isinstance(prior, ConstrainedGaussianPrior):
        draws = gaussian_prior_posterior_draws(data, prior.lambda_cap, config.mcmc_config(), gen)
    else:
        raise TypeError(f"unknown prior {prior!r}")
    return evaluate_precision_draws(config.functional, draws.draws), draws.meta.acceptance_rate


def run_posterior_bvm(config: ExperimentConfig) -> BvMReport:
    """Posterior BvM check for one dataset drawn from the truth."""
    _check_eigengap(config)
    gen = config.seed.generator()
    data = draw_data(config, gen)
    center = plug_in(config, data)
    variance = truth_variance(config, data)
    values, acceptance = posterior_values(config, data, gen)

    z = standardize(values, center, variance, config.n)
    lo, hi = np.quantile(values, [config.alpha / 2, 1 - config.alpha / 2])
    true_value = truth_value(config)
    return BvMReport(
        ks=ks_statistic(z),
        empirical_mean=float(z.mean()),
        empirical_sd=float(z.std(ddof=1)),
        credible_interval=(float(lo), float(hi)),
        covered=bool(lo <= true_value <= hi),
        mgf_grid=mgf_diagnostic(z, config.t_grid),
        ess=effective_sample_size(z),
        truth_value=float(true_value),
        center=float(center),
        variance=float(variance),
        n_draws=int(z.size),
        acceptance_rate=acceptance,
        standardized=z,
    )


def _map_replications(fn, config: ExperimentConfig) -> list:
    configs = [config.for_replication(r) for r in range(config.replications)]
    if config.threads > 1:
        with ThreadPoolExecutor(max_workers=config.threads) as pool:
            return list(pool.map(fn, configs))
    return [fn(c) for c in configs]


@dataclass
class CoverageResult:
    coverage: float
    replications: int
    intervals: np.ndarray = field(repr=False)
    covered: np.ndarray = field(repr=False)


def coverage_study(config: ExperimentConfig) -> CoverageResult:
    """Fraction of replications whose credible interval contains the truth."""

    def one(cfg):
        report = run_posterior_bvm(cfg)
        return report.credible_interval, report.covered

    results = _map_replications(one, config)
    intervals = np.array([r[0] for r in results])
    covered = np.array([r[1] for r in results], dtype=bool)
    return CoverageResult(float(covered.mean()), config.replications, intervals, covered)


@dataclass
class FrequentistResult:
    ks: float
    replications: int
    standardized: np.ndarray = field(repr=False)


def frequentist_check(config: ExperimentConfig) -> FrequentistResult:
    """KS distance of ``sqrt(n) (f_hat - f*) / V`` over fresh datasets."""
    _check_eigengap(config)
    true_value = truth_value(config)
    variance = truth_variance(config)

    def one(cfg):
        data = draw_data(cfg, cfg.seed.generator())
        return plug_in(cfg, data)

    estimates = np.array(_map_replications(one, config))
    z = standardize(estimates, true_value, variance, config.n)
    return FrequentistResult(ks_statistic(z), config.replications, z)


# -- (p, n) regimes ---------------------------------------------------------

# exponent k in "p^k << n" for (plug-in, conjugate, non-conjugate); None = no condition
_REGIMES = {
    ("entry", "covariance"): (None, 1, 2),
    ("entry", "precision"): (2, 2, 3),
    ("quadratic", "covariance"): (None, 1, 2),
    ("quadratic", "precision"): (2, 2, 3),
    ("bilinear", "covariance"): (None, 1, 2),
    ("bilinear", "precision"): (2, 2, 3),
    ("logdet", "covariance"): (3, 3, 3),
    ("entropy", "covariance"): (3, 3, 3),
    ("eigenvalue", "covariance"): (2, 2, 4),
    ("eigenvalue", "precision"): (2, 2, 4),
    ("lda", None): (2, 2, 4),
    ("qda", None): (3, 3, 4),
}
_SUPERSCRIPT = {1: "", 2: "²", 3: "³", 4: "⁴"}
MARGIN = 10.0


class Regime(NamedTuple):
    required: str
    satisfied: bool
    exponent: int | None


def _regime_key(functional) -> tuple:
    if isinstance(functional, str):
        return (functional.lower(), None)
    from .functionals import kind_of

    return (kind_of(functional), functional.target)


def regime_table(functional, prior: PriorSpec | None, p: int, n: int) -> Regime:
    """Required ``(p, n)`` scaling, with ``a << b`` read as ``a <= b / 10``.

    ``prior=None`` selects the plug-in (frequentist) column.
    """
    plug, conj, nonconj = _REGIMES[_regime_key(functional)]
    if prior is None:
        k = plug
    elif isinstance(prior, WishartPrior):
        k = conj
    else:
        k = nonconj
    if k is None:
        return Regime("none", True, None)
    return Regime(f"p{_SUPERSCRIPT[k]} ≪ n", float(p) ** k <= n / MARGIN, k)


def regime_rows() -> list[tuple[str, str | None]]:
    return list(_REGIMES)


# -- likelihood expansion sweep ---------------------------------------------


class SweepResult(NamedTuple):
    cases: int
    max_scaled_error: float
    rows: list


def random_spd(p: int, gen) -> np.ndarray:
    g = gen.standard_normal((p, p))
    return g @ g.T / p + 0.5 * np.eye(p)


def expansion_sweep(
    p_values=(2, 5), n_values=(50, 500), t_values=(-2.0, 1.0, 3.0), pairs: int = 100, rng=0
) -> SweepResult:
    """Exact likelihood-expansion identity over random ``(Omega, Phi)`` pairs.

    Each pair draws a precision ``Omega``, a symmetric direction and a dataset
    of size ``n`` from ``N(0, Omega^-1)``; targets alternate between
    covariance and precision.  The error is ``|lhs - rhs| / (1 + |lhs|)``.
    Because the direction is normalized at ``Omega`` itself, every
    ``|h_j| <= sqrt(2) |t| / sqrt(n)``, which stays below 1 on the default grid.
    """
    from .model import COVARIANCE, PerturbationDirection, likelihood_expansion_check
    from .perturbation import random_symmetric

    gen = as_generator(rng)
    rows = []
    worst = 0.0
    for p in p_values:
        for n in n_values:
            for k in range(pairs):
                omega = random_spd(p, gen)
                sigma = spd_inverse(omega)
                phi = random_symmetric(p, 1.0, gen)
                target = COVARIANCE if k % 2 == 0 else PRECISION
                s = sigma if target == COVARIANCE else omega
                c = math.sqrt(float(np.trace(s @ phi @ s @ phi)))
                direction = PerturbationDirection(phi, target, c, p, omega if target == PRECISION else None)
                data = draw_mvn(sigma, n, gen)
                sigma_hat = data.T @ data / n
                for t in t_values:
                    check = likelihood_expansion_check(omega, direction, t, sigma_hat, n)
                    err = abs(check.lhs - check.rhs) / (1.0 + abs(check.lhs))
                    worst = max(worst, err)
                    rows.append((p, n, k, target, t, check.lhs, check.rhs, err))
    return SweepResult(len(rows), worst, rows)
