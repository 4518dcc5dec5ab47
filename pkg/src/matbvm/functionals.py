"""Matrix functionals, their linearizations and asymptotic variances.

Each functional ``f`` is approximately linear near the truth,
``f(S) - f(S_hat) ~ tr((S - S_hat) Phi)``, where ``S`` is the covariance
(or precision, for precision targets).  The generic asymptotic variance of
``sqrt(n) (f - f_hat)`` is ``2 ||S*^1/2 Phi S*^1/2||_F^2``; every variant
also has a closed form, and the two are cross-checked on each call.

Indices (``i``, ``j``, ``m``) are 1-based.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Union

import numpy as np

from .errors import NonPositiveVariance, NotPositiveDefinite, SingularSample, ZeroEigengap
from .linalg import eig_sym, log_det, norms, sample_covariance, spd_inverse, symmetrize
from .model import COVARIANCE, PRECISION, PerturbationDirection, normalize_target

RANK_TOL = 1e-10
EIGENGAP_TOL = 1e-8


def _vector(v) -> np.ndarray:
    v = np.asarray(v, dtype=float).ravel()
    if v.size == 0 or not np.any(v):
        raise ValueError("functional vectors must be nonzero")
    return v


@dataclass(frozen=True, eq=False)
class Entry:
    i: int
    j: int
    target: str = COVARIANCE

    def __post_init__(self):
        object.__setattr__(self, "target", normalize_target(self.target))
        if self.i < 1 or self.j < 1:
            raise ValueError("entry indices are 1-based")

    def __eq__(self, other):
        return isinstance(other, Entry) and (self.i, self.j, self.target) == (other.i, other.j, other.target)


@dataclass(frozen=True, eq=False)
class Quadratic:
    v: np.ndarray
    target: str = COVARIANCE

    def __post_init__(self):
        object.__setattr__(self, "target", normalize_target(self.target))
        object.__setattr__(self, "v", _vector(self.v))

    def __eq__(self, other):
        return isinstance(other, Quadratic) and self.target == other.target and np.array_equal(self.v, other.v)


@dataclass(frozen=True, eq=False)
class Bilinear:
    u: np.ndarray
    v: np.ndarray
    target: str = COVARIANCE

    def __post_init__(self):
        object.__setattr__(self, "target", normalize_target(self.target))
        object.__setattr__(self, "u", _vector(self.u))
        object.__setattr__(self, "v", _vector(self.v))
        if self.u.shape != self.v.shape:
            raise ValueError("u and v must have the same length")

    def __eq__(self, other):
        return (
            isinstance(other, Bilinear)
            and self.target == other.target
            and np.array_equal(self.u, other.u)
            and np.array_equal(self.v, other.v)
        )


@dataclass(frozen=True)
class LogDet:
    target: str = field(default=COVARIANCE, init=False)


@dataclass(frozen=True)
class Entropy:
    target: str = field(default=COVARIANCE, init=False)


@dataclass(frozen=True)
class Eigenvalue:
    m: int
    target: str = COVARIANCE

    def __post_init__(self):
        object.__setattr__(self, "target", normalize_target(self.target))
        if self.m < 1:
            raise ValueError("eigenvalue index is 1-based")


FunctionalSpec = Union[Entry, Quadratic, Bilinear, LogDet, Entropy, Eigenvalue]

KINDS = {
    "entry": Entry,
    "quadratic": Quadratic,
    "bilinear": Bilinear,
    "logdet": LogDet,
    "entropy": Entropy,
    "eigenvalue": Eigenvalue,
}


def kind_of(f: FunctionalSpec) -> str:
    for name, cls in KINDS.items():
        if isinstance(f, cls):
            return name
    raise TypeError(f"not a functional: {f!r}")


def functional_to_dict(f: FunctionalSpec) -> dict:
    out = {"kind": kind_of(f)}
    if isinstance(f, Entry):
        out.update(i=f.i, j=f.j)
    elif isinstance(f, Quadratic):
        out.update(v=f.v.tolist())
    elif isinstance(f, Bilinear):
        out.update(u=f.u.tolist(), v=f.v.tolist())
    elif isinstance(f, Eigenvalue):
        out.update(m=f.m)
    if not isinstance(f, (LogDet, Entropy)):
        out["target"] = f.target
    return out


def functional_from_dict(obj: dict) -> FunctionalSpec:
    """Parse ``{kind, i, j, m, u, v, target}``; unused keys must be absent."""
    obj = dict(obj)
    kind = str(obj.pop("kind", "")).lower()
    if kind not in KINDS:
        raise ValueError(f"unknown functional kind {kind!r}")
    allowed = {
        "entry": {"i", "j", "target"},
        "quadratic": {"v", "target"},
        "bilinear": {"u", "v", "target"},
        "logdet": set(),
        "entropy": set(),
        "eigenvalue": {"m", "target"},
    }[kind]
    extra = set(obj) - allowed
    if extra:
        raise ValueError(f"unexpected keys for {kind}: {sorted(extra)}")
    return KINDS[kind](**obj)


@dataclass(frozen=True, eq=False)
class TruthSpec:
    sigma_star: np.ndarray
    omega_star: np.ndarray

    @classmethod
    def from_sigma(cls, sigma_star) -> "TruthSpec":
        sigma_star = symmetrize(sigma_star)
        return cls(sigma_star, spd_inverse(sigma_star))

    @property
    def p(self) -> int:
        return self.sigma_star.shape[0]

    def matrix(self, target: str) -> np.ndarray:
        return self.sigma_star if normalize_target(target) == COVARIANCE else self.omega_star


def _check_indices(f: FunctionalSpec, p: int) -> None:
    if isinstance(f, Entry) and not (f.i <= p and f.j <= p):
        raise IndexError(f"entry ({f.i}, {f.j}) out of range for p={p}")
    if isinstance(f, Eigenvalue) and f.m > p:
        raise IndexError(f"eigenvalue index {f.m} out of range for p={p}")
    if isinstance(f, (Quadratic, Bilinear)) and f.v.size != p:
        raise IndexError(f"vector length {f.v.size} does not match p={p}")


def _value_on(f: FunctionalSpec, s: np.ndarray) -> float:
    """Evaluate on ``s``, which is already Sigma or Omega per ``f.target``."""
    if isinstance(f, Entry):
        return float(s[f.i - 1, f.j - 1])
    if isinstance(f, Quadratic):
        return float(f.v @ s @ f.v)
    if isinstance(f, Bilinear):
        return float(f.u @ s @ f.v)
    if isinstance(f, Eigenvalue):
        return float(eig_sym(s).values[f.m - 1])
    raise TypeError(f"no direct evaluation for {f!r}")


def evaluate(f: FunctionalSpec, sigma) -> float:
    """Value of ``f`` at covariance ``sigma`` (precision targets use its inverse)."""
    sigma = symmetrize(sigma)
    _check_indices(f, sigma.shape[0])
    p = sigma.shape[0]
    if isinstance(f, LogDet):
        return log_det(sigma)
    if isinstance(f, Entropy):
        return 0.5 * p + 0.5 * p * math.log(2 * math.pi) + 0.5 * log_det(sigma)
    if f.target == PRECISION:
        return _value_on(f, spd_inverse(sigma))
    return _value_on(f, sigma)


def evaluate_precision_draws(f: FunctionalSpec, omegas) -> np.ndarray:
    """Evaluate ``f`` on each precision draw in a ``(k, p, p)`` stack."""
    omegas = symmetrize(omegas)
    _check_indices(f, omegas.shape[-1])
    p = omegas.shape[-1]
    if isinstance(f, (LogDet, Entropy)):
        ld = -log_det(omegas)
        if isinstance(f, Entropy):
            return 0.5 * p + 0.5 * p * math.log(2 * math.pi) + 0.5 * ld
        return np.asarray(ld, dtype=float)
    mats = omegas if f.target == PRECISION else spd_inverse(omegas)
    if isinstance(f, Entry):
        return mats[:, f.i - 1, f.j - 1].copy()
    if isinstance(f, Quadratic):
        return np.einsum("i,kij,j->k", f.v, mats, f.v)
    if isinstance(f, Bilinear):
        return np.einsum("i,kij,j->k", f.u, mats, f.v)
    return np.array([_value_on(f, s) for s in mats])


def plug_in_center(f: FunctionalSpec, data) -> float:
    """``f`` evaluated at the uncentered sample covariance.

    Raises:
        SingularSample: if a precision target needs an inverse that does not exist.
    """
    sigma_hat = sample_covariance(data, centered=False)
    try:
        return evaluate(f, sigma_hat)
    except NotPositiveDefinite as exc:
        raise SingularSample("sample covariance is singular; need n > p") from exc


def eigengap(truth: TruthSpec, m: int, target: str = COVARIANCE) -> float:
    """Distance from the m-th eigenvalue to its neighbours (one-sided at the ends)."""
    values = eig_sym(truth.matrix(target)).values
    p = len(values)
    if p < 2:
        raise ValueError("eigengap needs p >= 2")
    if not 1 <= m <= p:
        raise IndexError(f"eigenvalue index {m} out of range for p={p}")
    k = m - 1
    gaps = []
    if k > 0:
        gaps.append(abs(values[k] - values[k - 1]))
    if k < p - 1:
        gaps.append(abs(values[k] - values[k + 1]))
    return float(min(gaps))


def numerical_rank(phi) -> int:
    values = np.abs(eig_sym(phi).values)
    scale = values.max(initial=0.0)
    if scale == 0.0:
        return 0
    return int(np.sum(values > RANK_TOL * scale))


def _frobenius_normalizer(s: np.ndarray, phi: np.ndarray) -> float:
    # ||S^1/2 Phi S^1/2||_F^2 = tr(S Phi S Phi)
    return math.sqrt(max(float(np.trace(s @ phi @ s @ phi)), 0.0))


def linearization(f: FunctionalSpec, truth: TruthSpec) -> PerturbationDirection:
    """Direction ``Phi`` (or ``Psi``) with its Frobenius normalizer and rank bound."""
    p = truth.p
    _check_indices(f, p)
    target = f.target
    if isinstance(f, Entry):
        phi = np.zeros((p, p))
        phi[f.i - 1, f.j - 1] += 0.5
        phi[f.j - 1, f.i - 1] += 0.5
        rank = 2
    elif isinstance(f, Quadratic):
        phi = np.outer(f.v, f.v)
        rank = 1
    elif isinstance(f, Bilinear):
        phi = 0.5 * (np.outer(f.u, f.v) + np.outer(f.v, f.u))
        rank = 2
    elif isinstance(f, LogDet):
        phi = truth.omega_star.copy()
        rank = p
    elif isinstance(f, Entropy):
        phi = 0.5 * truth.omega_star
        rank = p
    elif isinstance(f, Eigenvalue):
        s = truth.matrix(target)
        gap = eigengap(truth, f.m, target)
        if gap < EIGENGAP_TOL * norms(s).spectral:
            raise ZeroEigengap(f"eigengap {gap:.3g} at m={f.m} is too small")
        u = eig_sym(s).vectors[:, f.m - 1]
        phi = np.outer(u, u)
        rank = 1
    else:
        raise TypeError(f"not a functional: {f!r}")
    normalizer = _frobenius_normalizer(truth.matrix(target), phi)
    omega_star = truth.omega_star if target == PRECISION else None
    return PerturbationDirection(phi, target, normalizer, rank, omega_star)


def _closed_form_variance(f: FunctionalSpec, truth: TruthSpec) -> float:
    s = truth.matrix(f.target)
    if isinstance(f, Entry):
        i, j = f.i - 1, f.j - 1
        return float(s[i, i] * s[j, j] + s[i, j] ** 2)
    if isinstance(f, Quadratic):
        return 2.0 * float(f.v @ s @ f.v) ** 2
    if isinstance(f, Bilinear):
        uv = float(f.u @ s @ f.v)
        return uv**2 + abs(float(f.u @ s @ f.u)) * abs(float(f.v @ s @ f.v))
    if isinstance(f, LogDet):
        return 2.0 * truth.p
    if isinstance(f, Entropy):
        return 0.5 * truth.p
    if isinstance(f, Eigenvalue):
        return 2.0 * float(eig_sym(s).values[f.m - 1]) ** 2
    raise TypeError(f"not a functional: {f!r}")


def asymptotic_variance(f: FunctionalSpec, truth: TruthSpec) -> float:
    """Closed-form variance of ``sqrt(n) (f - f_hat)``, checked against ``2 c^2``."""
    direction = linearization(f, truth)
    closed = _closed_form_variance(f, truth)
    generic = 2.0 * direction.normalizer**2
    if abs(closed - generic) > 1e-10 * max(abs(closed), abs(generic)):
        raise ArithmeticError(f"closed-form variance {closed!r} disagrees with generic {generic!r}")
    return closed


def standardize(values, center: float, variance: float, n: int) -> np.ndarray:
    """``sqrt(n) (v - center) / sqrt(variance)`` elementwise."""
    if not variance > 0:
        raise NonPositiveVariance(f"variance must be positive, got {variance!r}")
    return math.sqrt(n) * (np.asarray(values, dtype=float) - center) / math.sqrt(variance)
