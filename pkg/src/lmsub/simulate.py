"""Exact Gaussian sample paths with a prescribed autocovariance, subordinated
series and the stochastic-volatility construction ``X_n = G(eta_n) F(xi_n)``.

Randomness comes from a Philox counter-based generator. Normal variates are
the inverse normal CDF of open-interval uniforms built from the raw 64-bit
output, so a draw depends only on ``(seed, position)``.
"""
from __future__ import annotations

import json
import logging
import os
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import linalg, special

from . import models
from .models import CovarianceModel, SubordinationMap
from .toeplitz import NotPositiveDefiniteError, cholesky

log = logging.getLogger(__name__)

METHODS = ("cholesky", "circulant", "auto")
AUTO_CIRCULANT_MIN_N = 1024
CLIP_TOL = 1e-8
MASK64 = (1 << 64) - 1


class EmbeddingError(ArithmeticError):
    """Circulant embedding stayed indefinite up to the size cap."""


class CenteringError(ValueError):
    """``E F(xi)`` is not zero for the stochastic-volatility noise map."""


# ---------------------------------------------------------------------------
# random streams
# ---------------------------------------------------------------------------

def splitmix64(x: int) -> int:
    z = (x + 0x9E3779B97F4A7C15) & MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & MASK64
    return z ^ (z >> 31)


def derive_seed(seed: int, i: int) -> int:
    """Seed of stream ``i``: ``seed XOR splitmix64(i)``."""
    return (int(seed) & MASK64) ^ splitmix64(int(i))


def std_normals(seed: int, size: int) -> np.ndarray:
    """``size`` standard normals from the Philox stream keyed by ``seed``."""
    bg = np.random.Philox(key=int(seed) & MASK64)
    raw = bg.random_raw(size)
    u = ((raw >> np.uint64(11)).astype(np.float64) + 0.5) * 2.0**-53
    return special.ndtri(u)


# ---------------------------------------------------------------------------
# samplers
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class PathRequest:
    model: CovarianceModel
    n: int
    seed: int
    method: str = "auto"

    def __post_init__(self):
        if int(self.n) < 1:
            raise ValueError(f"path length n must be >= 1, got {self.n}")
        if self.method not in METHODS:
            raise ValueError(f"unknown method {self.method!r}; expected one of {METHODS}")


def circulant_eigenvalues(g: np.ndarray, n: int, cap: Optional[int] = None):
    """Eigenvalues of the smallest nonnegative circulant embedding.

    Starts at size ``2(n-1)`` and doubles up to ``cap`` (default ``8n``).
    Negatives down to ``-CLIP_TOL * gamma(0)`` are clipped with a warning.
    Returns ``(eigenvalues, size)``.
    """
    cap = 8 * n if cap is None else cap
    m = max(2 * (n - 1), 1)
    while True:
        half = m // 2
        if g.size <= half:
            raise ValueError("autocovariance array too short for the embedding")
        c = np.concatenate([g[: half + 1], g[1: m - half][::-1]])
        lam = np.fft.rfft(c).real
        lam = np.concatenate([lam, lam[1: m - lam.size + 1][::-1]])
        worst = lam.min()
        if worst >= 0:
            return lam, m
        if worst >= -CLIP_TOL * g[0]:
            log.warning("clipping %d negative embedding eigenvalue(s), min %.3g",
                        int(np.sum(lam < 0)), worst)
            return np.maximum(lam, 0.0), m
        if 2 * m > cap:
            raise EmbeddingError(
                f"circulant embedding not nonnegative up to size {m} (min eigenvalue {worst:.3g})")
        m *= 2


class GaussianSampler:
    """Reusable exact sampler for one ``(model, n, method)``."""

    def __init__(self, model: CovarianceModel, n: int, method: str = "auto"):
        self.model = model
        self.n = int(n)
        method_used = method
        if method == "auto":
            method_used = "circulant" if self.n > AUTO_CIRCULANT_MIN_N else "cholesky"
        self._sqrt_lam = None
        self._chol = None
        if self.n == 1:
            method_used = "cholesky"
        if method_used == "circulant":
            try:
                g = model.autocov(4 * self.n)
                lam, m = circulant_eigenvalues(g, self.n)
                self._sqrt_lam = np.sqrt(lam / m)
                self.m = m
            except EmbeddingError:
                if method != "auto":
                    raise
                log.warning("circulant embedding failed; falling back to Cholesky")
                method_used = "cholesky"
        if method_used == "cholesky":
            g = model.autocov(self.n - 1)
            self._chol = cholesky(linalg.toeplitz(g))
        self.method = method_used

    def draw(self, seed: int) -> np.ndarray:
        if self._chol is not None:
            return self._chol @ std_normals(seed, self.n)
        m = self.m
        w = std_normals(seed, 2 * m)
        x = np.fft.fft(self._sqrt_lam * (w[:m] + 1j * w[m:]))
        return x.real[: self.n].copy()

    def draw_many(self, seeds: Sequence[int]) -> np.ndarray:
        """One path per seed as rows of an array (same values as :meth:`draw`)."""
        seeds = list(seeds)
        out = np.empty((len(seeds), self.n))
        if self._chol is not None:
            Z = np.stack([std_normals(s, self.n) for s in seeds]) if seeds else np.empty((0, self.n))
            return Z @ self._chol.T
        m = self.m
        chunk = max(1, (1 << 22) // m)
        for lo in range(0, len(seeds), chunk):
            W = np.stack([std_normals(s, 2 * m) for s in seeds[lo: lo + chunk]])
            X = np.fft.fft(self._sqrt_lam * (W[:, :m] + 1j * W[:, m:]), axis=1)
            out[lo: lo + chunk] = X.real[:, : self.n]
        return out


_CACHE: "OrderedDict[tuple, GaussianSampler]" = OrderedDict()
_CACHE_SIZE = 8


def sampler_for(model: CovarianceModel, n: int, method: str = "auto") -> GaussianSampler:
    """Cached :class:`GaussianSampler` (keyed by the model's mapping form)."""
    key = (json.dumps(model.to_dict(), sort_keys=True), int(n), method)
    s = _CACHE.get(key)
    if s is None:
        s = GaussianSampler(model, n, method)
        _CACHE[key] = s
        if len(_CACHE) > _CACHE_SIZE:
            _CACHE.popitem(last=False)
    else:
        _CACHE.move_to_end(key)
    return s


def gen_gaussian(req: PathRequest) -> np.ndarray:
    """Exact ``N(0, Sigma_n)`` path; deterministic in ``(seed, method, n, model)``."""
    return sampler_for(req.model, req.n, req.method).draw(req.seed)


def gen_subordinated(req: PathRequest, g: Union[SubordinationMap, Callable]) -> np.ndarray:
    return models.apply_subordination(g, gen_gaussian(req))


def gen_stochvol(eta_model: CovarianceModel, G, F, n: int, seed: int,
                 method: str = "auto") -> np.ndarray:
    """``G(eta_t) F(xi_t)`` with ``eta`` Gaussian under ``eta_model`` and
    ``xi`` i.i.d. standard normal; streams 0 and 1 are derived from ``seed``."""
    mean_f = models.gaussian_expectation(lambda z: np.asarray(F(z), dtype=float))
    if abs(mean_f) > 1e-8:
        raise CenteringError(f"E F(xi) = {mean_f:.3g}, must be 0 within 1e-8")
    eta = gen_gaussian(PathRequest(eta_model, n, derive_seed(seed, 0), method))
    xi = std_normals(derive_seed(seed, 1), int(n))
    return models.apply_subordination(G, eta) * models.apply_subordination(F, xi)


def sample_autocov_known_mean(paths: np.ndarray, maxlag: int) -> np.ndarray:
    """``sum_t x_t x_{t+h} / (n - h)`` per row, for zero-mean paths."""
    paths = np.atleast_2d(paths)
    n = paths.shape[1]
    return np.stack([np.einsum("ij,ij->i", paths[:, : n - h], paths[:, h:]) / (n - h)
                     for h in range(maxlag + 1)], axis=1)


# ---------------------------------------------------------------------------
# export
# ---------------------------------------------------------------------------

def write_path_csv(path: np.ndarray, out: Union[str, os.PathLike], header: dict,
                   overwrite: bool = False) -> None:
    """Single-column CSV with a ``#``-comment line recording ``header`` as JSON."""
    mode = "w" if overwrite else "x"
    with open(out, mode, newline="") as fh:
        fh.write("# " + json.dumps(header, sort_keys=True) + "\n")
        fh.write("x\n")
        for v in path:
            fh.write(f"{v:#.17g}\n")


def read_series_csv(src: Union[str, os.PathLike]) -> np.ndarray:
    """Read a single-column CSV (``#`` comments and a non-numeric header skipped)."""
    vals = []
    with open(src) as fh:
        for line in fh:
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            try:
                vals.append(float(s.split(",")[0]))
            except ValueError:
                if vals:
                    raise ValueError(f"non-numeric value {s!r} in {src}") from None
    if not vals:
        raise ValueError(f"no numeric values in {src}")
    return np.asarray(vals)


__all__ = [
    "PathRequest", "GaussianSampler", "EmbeddingError", "CenteringError", "NotPositiveDefiniteError",
    "derive_seed", "std_normals", "gen_gaussian", "gen_subordinated", "gen_stochvol",
    "sampler_for", "circulant_eigenvalues", "write_path_csv", "read_series_csv",
    "sample_autocov_known_mean", "splitmix64",
]
