"""In-block / cross-block covariance matrices and the Toeplitz linear algebra
used by the canonical-correlation solver and the bounds."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg, special

from .models import CovarianceModel


class NotPositiveDefiniteError(ArithmeticError):
    """Cholesky breakdown; ``pivot`` is the 1-based index of the failing pivot."""

    def __init__(self, pivot: int):
        super().__init__(f"matrix is not positive definite (pivot {pivot} failed)")
        self.pivot = pivot


def autocov_array(gamma, maxlag: int) -> np.ndarray:
    """Autocovariances at lags ``0..maxlag`` from a model, an array or a callable.

    ``gamma`` may be a :class:`CovarianceModel`, a 1-d array holding
    ``gamma(0), gamma(1), ...`` or a callable mapping an integer lag array to
    covariances.
    """
    if isinstance(gamma, CovarianceModel):
        return gamma.autocov(maxlag)
    if callable(gamma):
        return np.asarray(gamma(np.arange(maxlag + 1)), dtype=float)
    arr = np.asarray(gamma, dtype=float)
    if arr.ndim != 1 or arr.size <= maxlag:
        raise ValueError(f"autocovariance array too short: need lags up to {maxlag}")
    return arr[: maxlag + 1]


@dataclass(frozen=True, eq=False)
class SymToeplitz:
    """Symmetric Toeplitz matrix given by its first row ``gamma(0..b-1)``."""

    first_row: np.ndarray

    @property
    def b(self) -> int:
        return self.first_row.size

    @property
    def dense(self) -> np.ndarray:
        return linalg.toeplitz(self.first_row)


@dataclass(frozen=True, eq=False)
class CrossBlock:
    """``a x b`` matrix with entry ``(i1, i2) = gamma(i2 + k - i1)``."""

    matrix: np.ndarray
    k: int

    @property
    def shape(self):
        return self.matrix.shape


@dataclass(frozen=True, eq=False)
class PredictorCoeffs:
    """Best-linear-predictor weights ``phi_{b1}..phi_{bb}`` for ``Z_horizon``
    from ``Z_1..Z_b``; ``phi[j-1]`` multiplies ``Z_{b-j+1}``."""

    phi: np.ndarray
    horizon: int

    @property
    def b(self) -> int:
        return self.phi.size


def build_sigma(gamma, b: int) -> SymToeplitz:
    """Covariance matrix of a block of ``b`` consecutive observations."""
    if b < 1:
        raise ValueError("block size b must be >= 1")
    return SymToeplitz(autocov_array(gamma, b - 1).copy())


def build_cross(gamma, k: int, a: int, b: int) -> CrossBlock:
    """Cross covariance between ``Z_1..Z_a`` and ``Z_{k+1}..Z_{k+b}``."""
    if a < 1 or b < 1:
        raise ValueError("block sizes must be >= 1")
    if k < 0:
        raise ValueError("lag k must be >= 0")
    lags = k + np.arange(b)[None, :] - np.arange(a)[:, None]
    g = autocov_array(gamma, int(np.abs(lags).max()))
    return CrossBlock(g[np.abs(lags)], int(k))


def cholesky(S) -> np.ndarray:
    """Lower Cholesky factor; raises :class:`NotPositiveDefiniteError` with the
    failing pivot index."""
    A = S.dense if isinstance(S, SymToeplitz) else np.asarray(S, dtype=float)
    L, info = linalg.lapack.dpotrf(A, lower=1, clean=1)
    if info > 0:
        raise NotPositiveDefiniteError(int(info))
    if info < 0:
        raise ValueError(f"illegal argument {-info} to dpotrf")
    return L


def durbin_levinson(g: np.ndarray, b: int) -> np.ndarray:
    """Durbin-Levinson recursion; returns ``phi_{b1}..phi_{bb}`` from
    autocovariances ``g[0..b]``."""
    phi = np.zeros(b)
    v = g[0]
    if v <= 0:
        raise NotPositiveDefiniteError(1)
    for n in range(1, b + 1):
        prev = phi[: n - 1]
        kappa = (g[n] - prev @ g[n - 1:0:-1]) / v
        phi[: n - 1] = prev - kappa * prev[::-1]
        phi[n - 1] = kappa
        v *= 1.0 - kappa * kappa
        if v <= 0:
            raise NotPositiveDefiniteError(n + 1)
    return phi


def levinson_predictor(gamma, b: int) -> PredictorCoeffs:
    """One-step predictor of ``Z_{b+1}`` from ``Z_1..Z_b``."""
    if b < 1:
        raise ValueError("b must be >= 1")
    g = autocov_array(gamma, b)
    return PredictorCoeffs(durbin_levinson(g, b), b + 1)


def multistep_predictor(gamma, b: int, n: int) -> PredictorCoeffs:
    """Projection of ``Z_n`` on ``Z_1..Z_b`` (``n > b``) by a direct
    Yule-Walker solve."""
    if n <= b:
        raise ValueError("horizon n must exceed b")
    g = autocov_array(gamma, n - 1)
    L = cholesky(linalg.toeplitz(g[:b]))
    # rhs_i = Cov(Z_n, Z_{b-i+1}) = gamma(n - b + i - 1), i = 1..b
    rhs = g[n - b: n]
    return PredictorCoeffs(linalg.cho_solve((L, True), rhs), n)


def farima_predictor_closed_form(d: float, b: int) -> np.ndarray:
    """Closed-form FARIMA(0, d, 0) one-step coefficients

    ``phi_{bj} = -C(b, j) Gamma(j-d) Gamma(b-d-j+1) / (Gamma(-d) Gamma(b-d+1))``.
    """
    j = np.arange(1, b + 1, dtype=float)
    # -Gamma(-d) = |Gamma(-d)| for 0 < d < 1
    logphi = (np.log(special.binom(b, j)) + special.gammaln(j - d)
              + special.gammaln(b - d - j + 1) - special.gammaln(b - d + 1)
              - special.gammaln(-d))
    return np.exp(logphi)


def extreme_eigs(S) -> tuple:
    """``(lambda_min, lambda_max)`` of a symmetric matrix."""
    A = S.dense if isinstance(S, SymToeplitz) else np.asarray(S, dtype=float)
    n = A.shape[0]
    if n == 1:
        return float(A[0, 0]), float(A[0, 0])
    lo = linalg.eigh(A, eigvals_only=True, subset_by_index=[0, 0])[0]
    hi = linalg.eigh(A, eigvals_only=True, subset_by_index=[n - 1, n - 1])[0]
    return float(lo), float(hi)
