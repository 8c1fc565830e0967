"""Canonical correlation between two blocks of a stationary Gaussian series.

``rho`` is the largest singular value of the whitened cross-covariance
``L_a^{-1} Sigma_{k,(a x b)} L_b^{-T}`` where ``Sigma_a = L_a L_a^T``.
"""
from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np
from scipy import linalg

from .toeplitz import autocov_array, build_cross, cholesky


@dataclass(frozen=True, eq=False)
class CanonicalCorrResult:
    rho: float
    u_star: np.ndarray
    v_star: np.ndarray
    k: int

    @property
    def a(self) -> int:
        return self.u_star.size

    @property
    def b(self) -> int:
        return self.v_star.size


def _unit_variance(w: np.ndarray, S: np.ndarray) -> np.ndarray:
    return w / np.sqrt(w @ S @ w)


def canonical_correlation_rect(gamma, k: int, a: int, b: int) -> CanonicalCorrResult:
    """Canonical correlation of ``Z_1..Z_a`` and ``Z_{k+1}..Z_{k+b}``.

    The extremal weights are rescaled to unit block variance and signed so
    that ``sum(u_star) >= 0``.
    """
    if k < 1:
        raise ValueError("lag k must be >= 1")
    if a < 1 or b < 1:
        raise ValueError("block sizes must be >= 1")
    g = autocov_array(gamma, k + max(a, b))
    Sa = linalg.toeplitz(g[:a])
    Sb = Sa if a == b else linalg.toeplitz(g[:b])
    La = cholesky(Sa)
    Lb = La if a == b else cholesky(Sb)
    C = build_cross(g, k, a, b).matrix

    M = linalg.solve_triangular(La, C, lower=True)
    M = linalg.solve_triangular(Lb, M.T, lower=True).T
    P, s, Qt = np.linalg.svd(M)
    rho = float(min(s[0], 1.0))

    u = linalg.solve_triangular(La.T, P[:, 0], lower=False)
    v = linalg.solve_triangular(Lb.T, Qt[0], lower=False)
    if u.sum() < 0:
        u, v = -u, -v
    u = _unit_variance(u, Sa)
    v = _unit_variance(v, Sb)
    return CanonicalCorrResult(rho, u, v, int(k))


def canonical_correlation(gamma, k: int, b: int) -> CanonicalCorrResult:
    """Canonical correlation ``rho_{k,b}`` between two blocks of size ``b``."""
    return canonical_correlation_rect(gamma, k, b, b)


def block_sum_corr(gamma, k: int, b: int) -> float:
    """``Corr(Z_1 + ... + Z_b, Z_{k+1} + ... + Z_{k+b})``."""
    if k < 1:
        raise ValueError("lag k must be >= 1")
    g = autocov_array(gamma, k + b)
    lags = np.arange(-(b - 1), b)
    mult = b - np.abs(lags)
    var = mult @ g[np.abs(lags)]
    cov = mult @ g[np.abs(k + lags)]
    return float(cov / var)


def multivariate_rho(component_rhos: Sequence[float]) -> float:
    """Canonical correlation of a vector series with uncorrelated components."""
    vals = [float(r) for r in component_rhos]
    if not vals:
        raise ValueError("at least one component is required")
    for r in vals:
        if not 0.0 <= r <= 1.0:
            raise ValueError(f"component canonical correlation {r} outside [0, 1]")
    return max(vals)


def rho_curve(gamma, ks: Sequence[int], b: int) -> np.ndarray:
    """``rho_{k,b}`` for each ``k`` in ``ks``; overlapping blocks (``k < b``)
    share a variable and have ``rho = 1``."""
    ks = np.asarray(ks, dtype=int)
    out = np.ones(ks.size)
    if ks.size == 0:
        return out
    g = autocov_array(gamma, int(ks.max()) + b)
    L = cholesky(linalg.toeplitz(g[:b]))
    for i, k in enumerate(ks):
        if k < b:
            continue
        C = build_cross(g, int(k), b, b).matrix
        M = linalg.solve_triangular(L, C, lower=True)
        M = linalg.solve_triangular(L, M.T, lower=True).T
        out[i] = min(np.linalg.svd(M, compute_uv=False)[0], 1.0)
    return out
