"""Dense symmetric linear algebra.

Matrices are plain ``numpy`` arrays.  Symmetric inputs are symmetrized as
``(A + A.T) / 2`` on entry instead of being rejected, so round-off picked up
along an MCMC chain never breaks a factorization downstream.

Most functions accept a single ``(p, p)`` matrix; ``cholesky``,
``log_det`` and ``spd_inverse`` also accept stacks of shape ``(k, p, p)``.
"""

from __future__ import annotations

import json
import math
from typing import NamedTuple

import numpy as np
from scipy.linalg import solve_triangular

from .errors import DimensionMismatch, EmptyData, NoConvergence, NotPositiveDefinite

JACOBI_TOL = 1e-13
JACOBI_MAX_SWEEPS = 100


class EigenDecomposition(NamedTuple):
    """Eigenvalues in nonincreasing order with matching orthonormal columns."""

    values: np.ndarray
    vectors: np.ndarray


def symmetrize(a) -> np.ndarray:
    a = np.asarray(a, dtype=float)
    if a.ndim < 2 or a.shape[-1] != a.shape[-2]:
        raise DimensionMismatch(f"expected square matrix, got shape {a.shape}")
    if not np.all(np.isfinite(a)):
        raise ValueError("matrix has non-finite entries")
    return 0.5 * (a + np.swapaxes(a, -1, -2))


def is_symmetric(a, rtol: float = 1e-12) -> bool:
    a = np.asarray(a, dtype=float)
    scale = 1.0 + np.max(np.abs(a), initial=0.0)
    return bool(np.max(np.abs(a - a.T), initial=0.0) <= rtol * scale)


def cholesky(m) -> np.ndarray:
    """Lower-triangular ``L`` with ``L @ L.T == m``.

    Raises:
        NotPositiveDefinite: if any pivot is not strictly positive.
    """
    m = symmetrize(m)
    try:
        factor = np.linalg.cholesky(m)
    except np.linalg.LinAlgError as exc:
        raise NotPositiveDefinite("matrix is not positive definite") from exc
    diag = np.diagonal(factor, axis1=-2, axis2=-1)
    if not np.all(np.isfinite(factor)) or np.any(diag <= 0.0):
        raise NotPositiveDefinite("matrix is not positive definite")
    return factor


def is_positive_definite(m) -> bool:
    try:
        cholesky(m)
    except (NotPositiveDefinite, ValueError):
        return False
    return True


def log_det(m) -> float | np.ndarray:
    """``log det m`` as ``2 * sum(log diag(L))``."""
    factor = cholesky(m)
    diag = np.diagonal(factor, axis1=-2, axis2=-1)
    out = 2.0 * np.sum(np.log(diag), axis=-1)
    return float(out) if np.ndim(out) == 0 else out


def spd_inverse(m) -> np.ndarray:
    """Inverse of a positive definite matrix (or stack), symmetrized."""
    factor = cholesky(m)
    if factor.ndim == 2:
        eye = np.eye(factor.shape[0])
        linv = solve_triangular(factor, eye, lower=True)
    else:
        linv = np.linalg.inv(factor)
    inv = np.swapaxes(linv, -1, -2) @ linv
    return symmetrize(inv)


def _jacobi_rotate(a: np.ndarray, v: np.ndarray, p: int, q: int) -> None:
    apq = a[p, q]
    if apq == 0.0:
        return
    theta = (a[q, q] - a[p, p]) / (2.0 * apq)
    if abs(theta) > 1e150:
        t = 0.5 / theta
    else:
        t = math.copysign(1.0, theta) / (abs(theta) + math.sqrt(theta * theta + 1.0))
    c = 1.0 / math.sqrt(t * t + 1.0)
    s = t * c

    col_p = a[:, p].copy()
    col_q = a[:, q].copy()
    a[:, p] = c * col_p - s * col_q
    a[:, q] = s * col_p + c * col_q
    row_p = a[p, :].copy()
    row_q = a[q, :].copy()
    a[p, :] = c * row_p - s * row_q
    a[q, :] = s * row_p + c * row_q
    a[p, q] = a[q, p] = 0.0

    vp = v[:, p].copy()
    vq = v[:, q].copy()
    v[:, p] = c * vp - s * vq
    v[:, q] = s * vp + c * vq


def _off_norm(a: np.ndarray) -> float:
    off = a - np.diag(np.diag(a))
    return float(np.linalg.norm(off))


def eig_sym(m, tol: float = JACOBI_TOL, max_sweeps: int = JACOBI_MAX_SWEEPS) -> EigenDecomposition:
    """Eigendecomposition of a symmetric matrix by cyclic Jacobi rotations.

    Sweeps over all ``(p, q)`` pairs until the off-diagonal Frobenius mass
    drops below ``tol * ||m||_F``.  Values come back nonincreasing (exact ties
    keep index order); each eigenvector is signed so that its
    largest-magnitude coordinate is positive.

    Raises:
        NoConvergence: if ``max_sweeps`` sweeps do not reach the tolerance.
    """
    a = symmetrize(m).copy()
    if a.ndim != 2:
        raise DimensionMismatch("eig_sym takes a single matrix")
    dim = a.shape[0]
    v = np.eye(dim)
    target = tol * float(np.linalg.norm(a))

    sweeps = 0
    while _off_norm(a) > target:
        if sweeps >= max_sweeps:
            raise NoConvergence(f"Jacobi did not converge in {max_sweeps} sweeps")
        for p in range(dim - 1):
            for q in range(p + 1, dim):
                _jacobi_rotate(a, v, p, q)
        sweeps += 1

    values = np.diag(a).copy()
    order = np.argsort(-values, kind="stable")
    values = values[order]
    vectors = v[:, order]
    lead = np.argmax(np.abs(vectors), axis=0)
    signs = np.where(vectors[lead, np.arange(dim)] < 0.0, -1.0, 1.0)
    return EigenDecomposition(values, vectors * signs)


def sqrtm_spd(m) -> np.ndarray:
    """Symmetric square root of a positive semidefinite matrix."""
    values, vectors = eig_sym(m)
    if values[-1] < -1e-12 * max(abs(values[0]), 1.0):
        raise NotPositiveDefinite("matrix has a negative eigenvalue")
    root = np.sqrt(np.clip(values, 0.0, None))
    return symmetrize((vectors * root) @ vectors.T)


class Norms(NamedTuple):
    spectral: float
    frobenius: float


def norms(m) -> Norms:
    m = symmetrize(m)
    values = eig_sym(m).values
    return Norms(float(np.max(np.abs(values))), float(np.linalg.norm(m)))


def as_dataset(rows) -> np.ndarray:
    """Validate an ``(n, p)`` sample array (1-d input is one column)."""
    data = np.asarray(rows, dtype=float)
    if data.ndim == 1:
        data = data[:, None]
    if data.ndim != 2:
        raise DimensionMismatch(f"dataset must be 2-d, got shape {data.shape}")
    if data.shape[1] < 1:
        raise DimensionMismatch("dataset has no columns")
    if not np.all(np.isfinite(data)):
        raise ValueError("dataset has non-finite entries")
    return data


def sample_covariance(data, centered: bool = False) -> np.ndarray:
    """``(1/n) sum x x^T``, optionally about the sample mean."""
    data = as_dataset(data)
    n = data.shape[0]
    if n == 0:
        raise EmptyData("sample covariance of an empty dataset")
    if centered:
        data = data - data.mean(axis=0)
    return symmetrize(data.T @ data / n)


# -- serialization ----------------------------------------------------------


def matrix_to_csv(m, path) -> None:
    np.savetxt(path, np.atleast_2d(np.asarray(m, dtype=float)), delimiter=",", fmt="%.17g")


def matrix_from_csv(path) -> np.ndarray:
    return symmetrize(np.loadtxt(path, delimiter=",", ndmin=2))


def matrix_to_json(m) -> str:
    m = np.atleast_2d(np.asarray(m, dtype=float))
    return json.dumps({"dim": int(m.shape[0]), "entries": m.tolist()})


def matrix_from_json(text: str) -> np.ndarray:
    obj = json.loads(text)
    entries = np.asarray(obj["entries"], dtype=float)
    if entries.shape != (obj["dim"], obj["dim"]):
        raise DimensionMismatch(f"entries shape {entries.shape} does not match dim {obj['dim']}")
    return symmetrize(entries)


def load_dataset(path) -> np.ndarray:
    """Headerless CSV, one sample per row."""
    return as_dataset(np.loadtxt(path, delimiter=",", ndmin=2))
