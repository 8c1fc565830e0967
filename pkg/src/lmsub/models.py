"""Long-memory covariance models and Gaussian subordination.

Every model exposes ``autocov(maxlag)`` (lags ``0..maxlag``) and
``spectral(lam)`` under the convention

    gamma(n) = integral_{-pi}^{pi} f(lam) exp(i n lam) dlam.

The FARIMA(0, d, 0) kernel is ``f_d(lam) = |1 - exp(i lam)|^{-2d} / (2 pi)``,
so that ``gamma_d(0) = Gamma(1 - 2d) / Gamma(1 - d)^2``.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from scipy import integrate, signal, special

TWO_PI = 2.0 * math.pi

# regime tags for the decay of the short-memory factor gamma_0
POLY_BIG_O = "poly-O"
POLY_LITTLE_O = "poly-o"
EXPONENTIAL = "exponential"
REGIMES = (POLY_BIG_O, POLY_LITTLE_O, EXPONENTIAL)


class ModelError(ValueError):
    """Invalid model parameters."""


@dataclass(frozen=True)
class MemoryParam:
    """Memory parameter ``d`` of a long-memory process, ``0 < d < 1/2``."""

    d: float

    def __post_init__(self):
        d = float(self.d)
        if not (0.0 < d < 0.5) or not math.isfinite(d):
            raise ModelError(f"memory parameter d={d!r} must lie in (0, 1/2)")
        object.__setattr__(self, "d", d)

    def __float__(self):
        return self.d

    @property
    def hurst(self) -> float:
        return self.d + 0.5


def _as_d(d) -> float:
    return float(d) if isinstance(d, MemoryParam) else MemoryParam(d).d


def _check_maxlag(maxlag: int) -> int:
    maxlag = int(maxlag)
    if maxlag < 0:
        raise ModelError(f"maxlag must be >= 0, got {maxlag}")
    return maxlag


def _check_lambda(lam, pole: bool) -> np.ndarray:
    lam = np.asarray(lam, dtype=float)
    if np.any(np.abs(lam) > math.pi * (1 + 1e-12)):
        raise ModelError("frequency outside (-pi, pi]")
    if pole and np.any(lam == 0.0):
        raise ModelError("spectral density has a pole at lambda = 0 (out of domain)")
    return lam


def fd_kernel(lam, d: float) -> np.ndarray:
    """FARIMA(0, d, 0) spectral kernel ``|1 - e^{i lam}|^{-2d} / (2 pi)``."""
    lam = np.asarray(lam, dtype=float)
    # |1 - e^{i lam}|^2 = 4 sin^2(lam / 2)
    return (4.0 * np.sin(lam / 2.0) ** 2) ** (-d) / TWO_PI


# ---------------------------------------------------------------------------
# autocovariance sequences
# ---------------------------------------------------------------------------

def farima0d0_autocov(d, sigma2: float = 1.0, maxlag: int = 0) -> np.ndarray:
    """Autocovariances ``gamma_d(0..maxlag)`` of FARIMA(0, d, 0).

    ``gamma_d(0) = sigma2 * Gamma(1-2d) / Gamma(1-d)^2`` and
    ``gamma_d(n) = gamma_d(n-1) * (n-1+d) / (n-d)``.
    """
    d = _as_d(d)
    maxlag = _check_maxlag(maxlag)
    if sigma2 <= 0:
        raise ModelError("sigma2 must be positive")
    out = np.empty(maxlag + 1)
    out[0] = sigma2 * math.exp(special.gammaln(1 - 2 * d) - 2 * special.gammaln(1 - d))
    if maxlag:
        n = np.arange(1, maxlag + 1, dtype=float)
        out[1:] = out[0] * np.cumprod((n - 1 + d) / (n - d))
    return out


def _second_difference_power(n: np.ndarray, a: float) -> np.ndarray:
    """``|n+1|^a - 2|n|^a + |n-1|^a`` for integer ``n >= 0``.

    Large lags use the binomial series to avoid cancellation.
    """
    out = np.abs(n + 1) ** a - 2 * np.abs(n) ** a + np.abs(n - 1) ** a
    big = n >= 64
    if np.any(big):
        nb = n[big]
        acc = np.zeros_like(nb)
        inv2 = nb ** -2.0
        term = np.ones_like(nb)
        for j in range(1, 10):
            term = term * inv2
            acc += 2.0 * special.binom(a, 2 * j) * term
        out[big] = nb**a * acc
    return out


def fgn_autocov(H: float, sigma2: float = 1.0, maxlag: int = 0,
                allow_boundary: bool = False) -> np.ndarray:
    """Fractional Gaussian noise autocovariances.

    ``gamma(n) = sigma2/2 * (|n+1|^{2H} - 2|n|^{2H} + |n-1|^{2H})``.
    ``allow_boundary`` admits ``H = 1/2`` (white noise) for oracle checks.
    """
    H = float(H)
    lo_ok = H >= 0.5 if allow_boundary else H > 0.5
    if not (lo_ok and H < 1.0):
        raise ModelError(f"Hurst index H={H!r} must lie in (1/2, 1)")
    maxlag = _check_maxlag(maxlag)
    if sigma2 <= 0:
        raise ModelError("sigma2 must be positive")
    n = np.arange(maxlag + 1, dtype=float)
    out = 0.5 * sigma2 * _second_difference_power(n, 2 * H)
    out[0] = sigma2
    return out


def arma_psi(ar: Sequence[float], ma: Sequence[float], length: int) -> np.ndarray:
    """Impulse response ``psi_0..psi_{length-1}`` of ``Theta(B)/Phi(B)``."""
    impulse = np.zeros(length)
    impulse[0] = 1.0
    return signal.lfilter(np.r_[1.0, ma], np.r_[1.0, -np.asarray(ar, dtype=float)], impulse)


def arma_truncation(ar: Sequence[float], ma: Sequence[float], tol: float = 1e-10) -> int:
    """Smallest ``T`` such that ``sum_{j > T} |psi_j| < tol``.

    The impulse response decays geometrically for a causal AR part; the
    response is extended until its second half is negligible.
    """
    length = 64
    while True:
        psi = np.abs(arma_psi(ar, ma, length))
        if psi[length // 2:].sum() < 1e-3 * tol or length > 2**20:
            break
        length *= 2
    tail = np.cumsum(psi[::-1])[::-1]  # tail[t] = sum_{j >= t} |psi_j|
    below = np.nonzero(tail < tol)[0]
    return int(below[0]) if below.size else length


def farima_pdq_autocov(model: "FarimaPdq", maxlag: int, trunc: Optional[int] = None) -> np.ndarray:
    """FARIMA(p, d, q) autocovariances via the MA(inf) convolution.

    ``gamma(n) = sum_{i,j <= T} psi_i psi_j gamma_d(n + i - j)``.
    """
    maxlag = _check_maxlag(maxlag)
    T = model.trunc if trunc is None else int(trunc)
    psi = arma_psi(model.ar, model.ma, T + 1)
    # a_h = sum_i psi_i psi_{i+h}, h = -T..T (symmetric)
    half = np.correlate(psi, psi, mode="full")[T:]
    a = np.r_[half[:0:-1], half]
    gd = farima0d0_autocov(model.d, model.sigma2, maxlag + T)
    ext = gd[np.abs(np.arange(-T, maxlag + T + 1))]
    return np.convolve(ext, a, mode="valid")


# ---------------------------------------------------------------------------
# model family
# ---------------------------------------------------------------------------

class CovarianceModel:
    """Base class of the stationary Gaussian covariance families."""

    family: str = ""

    def autocov(self, maxlag: int) -> np.ndarray:
        raise NotImplementedError

    def spectral(self, lam):
        raise NotImplementedError

    @property
    def memory(self) -> float:
        """Memory parameter ``d``."""
        raise NotImplementedError

    def tail_constant(self) -> float:
        """``lim gamma(n) n^{1-2d}``."""
        raise NotImplementedError

    @property
    def regime(self) -> str:
        """Decay regime of the short-memory factor ``gamma_0``."""
        return EXPONENTIAL

    def gamma(self, lags) -> np.ndarray:
        """Autocovariance at arbitrary integer lags (negative allowed)."""
        lags = np.abs(np.asarray(lags, dtype=int))
        if lags.size == 0:
            return np.zeros(0)
        return self.autocov(int(lags.max()))[lags]

    def to_dict(self) -> dict:
        raise NotImplementedError


@dataclass(frozen=True)
class Farima0d0(CovarianceModel):
    d: float
    sigma2: float = 1.0
    family = "farima0d0"

    def __post_init__(self):
        object.__setattr__(self, "d", _as_d(self.d))
        if not self.sigma2 > 0:
            raise ModelError("sigma2 must be positive")

    def autocov(self, maxlag):
        return farima0d0_autocov(self.d, self.sigma2, maxlag)

    def spectral(self, lam):
        lam = _check_lambda(lam, pole=True)
        return self.sigma2 * fd_kernel(lam, self.d)

    @property
    def memory(self):
        return self.d

    def tail_constant(self):
        d = self.d
        return self.sigma2 * math.exp(special.gammaln(1 - 2 * d) - special.gammaln(d)
                                      - special.gammaln(1 - d))

    def to_dict(self):
        return {"family": self.family, "d": self.d, "sigma2": self.sigma2}


@dataclass(frozen=True)
class FarimaPdq(CovarianceModel):
    """``Phi(B) (1-B)^d Z_n = Theta(B) xi_n`` with ``Var xi = sigma2``.

    ``ar`` holds ``phi_1..phi_p`` of ``Phi(z) = 1 - phi_1 z - ...``; ``ma``
    holds ``theta_1..theta_q`` of ``Theta(z) = 1 + theta_1 z + ...``.
    """

    d: float
    ar: tuple = ()
    ma: tuple = ()
    sigma2: float = 1.0
    trunc: int = field(default=-1, compare=False)
    family = "farima"

    def __post_init__(self):
        object.__setattr__(self, "d", _as_d(self.d))
        object.__setattr__(self, "ar", tuple(float(x) for x in self.ar))
        object.__setattr__(self, "ma", tuple(float(x) for x in self.ma))
        if not self.sigma2 > 0:
            raise ModelError("sigma2 must be positive")
        if self.ar:
            roots = np.roots(np.r_[-np.asarray(self.ar)[::-1], 1.0])
            if np.any(np.abs(roots) <= 1 + 1e-6):
                raise ModelError("AR polynomial has a root within 1e-6 of (or inside) the unit circle")
            grid = np.exp(1j * np.linspace(-math.pi, math.pi, 4097))
            if np.min(np.abs(np.polyval(np.r_[-np.asarray(self.ar)[::-1], 1.0], grid))) < 1e-6:
                raise ModelError("AR polynomial vanishes on the unit circle")
        if self.ma:
            roots = np.roots(np.r_[np.asarray(self.ma)[::-1], 1.0])
            if np.any(np.abs(np.abs(roots) - 1) <= 1e-6):
                raise ModelError("MA polynomial has a root on the unit circle (inf f_0 = 0)")
        if self.trunc < 0:
            object.__setattr__(self, "trunc", arma_truncation(self.ar, self.ma))

    def autocov(self, maxlag):
        return farima_pdq_autocov(self, maxlag)

    def _arma_gain(self, lam):
        z = np.exp(1j * np.asarray(lam, dtype=float))
        theta = np.polyval(np.r_[np.asarray(self.ma)[::-1], 1.0], z)
        phi = np.polyval(np.r_[-np.asarray(self.ar)[::-1], 1.0], z)
        return np.abs(theta) ** 2 / np.abs(phi) ** 2

    def spectral(self, lam):
        lam = _check_lambda(lam, pole=True)
        return self.sigma2 * fd_kernel(lam, self.d) * self._arma_gain(lam)

    @property
    def memory(self):
        return self.d

    def tail_constant(self):
        return Farima0d0(self.d, self.sigma2).tail_constant() * float(self._arma_gain(0.0))

    def to_dict(self):
        return {"family": self.family, "d": self.d, "sigma2": self.sigma2,
                "ar": list(self.ar), "ma": list(self.ma)}


@dataclass(frozen=True)
class Fgn(CovarianceModel):
    """Fractional Gaussian noise with Hurst index ``1/2 < H < 1``."""

    H: float
    sigma2: float = 1.0
    family = "fgn"

    def __post_init__(self):
        H = float(self.H)
        if not (0.5 < H < 1.0):
            raise ModelError(f"Hurst index H={H!r} must lie in (1/2, 1)")
        object.__setattr__(self, "H", H)
        if not self.sigma2 > 0:
            raise ModelError("sigma2 must be positive")

    def autocov(self, maxlag):
        return fgn_autocov(self.H, self.sigma2, maxlag)

    def spectral(self, lam):
        """Sinai's density; the aliasing sum is evaluated in closed form
        through the Hurwitz zeta function, so no truncation error arises."""
        lam = _check_lambda(lam, pole=True)
        H = self.H
        a = 2 * H + 1
        c = self.sigma2 * math.sin(math.pi * H) * special.gamma(2 * H + 1) / TWO_PI
        x = lam / TWO_PI
        alias = TWO_PI ** (-a) * (special.zeta(a, 1 + x) + special.zeta(a, 1 - x))
        return c * 4.0 * np.sin(lam / 2.0) ** 2 * (np.abs(lam) ** (-a) + alias)

    @property
    def memory(self):
        return self.H - 0.5

    def tail_constant(self):
        return self.sigma2 * self.H * (2 * self.H - 1)

    @property
    def regime(self):
        # f_0 is infinitely differentiable: gamma_0(n) = o(n^{-alpha}) for every alpha
        return POLY_LITTLE_O

    def to_dict(self):
        return {"family": self.family, "H": self.H, "sigma2": self.sigma2}


@dataclass(frozen=True)
class Product(CovarianceModel):
    """``f = f_d * f_0`` with a short-memory factor given by ``gamma_0(0..L)``.

    ``f_0`` defaults to ``(gamma_0(0) + 2 sum gamma_0(m) cos(m lam)) / (2 pi)``;
    an explicit evaluator may be supplied but ``autocov`` always uses
    ``gamma_0``. Positivity of ``inf f_0`` is spot-checked on a grid.
    """

    d: float
    gamma0: tuple
    f0: Optional[Callable] = field(default=None, compare=False)
    decay: str = EXPONENTIAL
    family = "product"

    def __post_init__(self):
        object.__setattr__(self, "d", _as_d(self.d))
        g0 = tuple(float(x) for x in self.gamma0)
        if not g0:
            raise ModelError("gamma0 must be non-empty")
        object.__setattr__(self, "gamma0", g0)
        if self.decay not in REGIMES:
            raise ModelError(f"decay must be one of {REGIMES}")
        grid = np.linspace(-math.pi, math.pi, 8193)
        if np.min(self.f0_values(grid)) <= 0:
            raise ModelError("f_0 is not bounded away from zero on the check grid")

    def f0_values(self, lam):
        lam = np.asarray(lam, dtype=float)
        if self.f0 is not None:
            return np.asarray(self.f0(lam), dtype=float)
        g0 = np.asarray(self.gamma0)
        m = np.arange(1, len(g0))
        return (g0[0] + 2 * np.cos(np.multiply.outer(lam, m)) @ g0[1:]) / TWO_PI

    def autocov(self, maxlag):
        maxlag = _check_maxlag(maxlag)
        L = len(self.gamma0) - 1
        g0 = np.asarray(self.gamma0)
        g0_full = g0[np.abs(np.arange(-L, L + 1))]
        gd = farima0d0_autocov(self.d, 1.0, maxlag + L)
        ext = gd[np.abs(np.arange(-L, maxlag + L + 1))]
        return np.convolve(ext, g0_full, mode="valid") / TWO_PI

    def spectral(self, lam):
        lam = _check_lambda(lam, pole=True)
        return fd_kernel(lam, self.d) * self.f0_values(lam)

    @property
    def memory(self):
        return self.d

    def tail_constant(self):
        return Farima0d0(self.d).tail_constant() * float(self.f0_values(0.0))

    @property
    def regime(self):
        return self.decay

    def to_dict(self):
        return {"family": self.family, "d": self.d, "gamma0": list(self.gamma0),
                "decay": self.decay}


@dataclass(frozen=True)
class WhiteNoise(CovarianceModel):
    """Reference model with ``gamma(n) = 0`` for ``n >= 1``; used as an oracle."""

    sigma2: float = 1.0
    family = "white"

    def __post_init__(self):
        if not self.sigma2 > 0:
            raise ModelError("sigma2 must be positive")

    def autocov(self, maxlag):
        out = np.zeros(_check_maxlag(maxlag) + 1)
        out[0] = self.sigma2
        return out

    def spectral(self, lam):
        lam = _check_lambda(lam, pole=False)
        return np.full(lam.shape, self.sigma2 / TWO_PI)[()]

    @property
    def memory(self):
        return 0.0

    def tail_constant(self):
        return 0.0

    def to_dict(self):
        return {"family": self.family, "sigma2": self.sigma2}


def spectral_density(model: CovarianceModel, lam):
    """Spectral density of ``model`` at ``lam`` in ``(-pi, pi]``."""
    return model.spectral(lam)


_FAMILY_KEYS = {
    "farima0d0": {"family", "d", "sigma2"},
    "farima": {"family", "d", "sigma2", "ar", "ma"},
    "fgn": {"family", "H", "sigma2"},
    "product": {"family", "d", "gamma0", "decay"},
    "white": {"family", "sigma2"},
}


def model_from_dict(spec: dict) -> CovarianceModel:
    """Build a model from its mapping form (keys: family, d or H, sigma2, ar, ma, gamma0)."""
    family = spec.get("family")
    if family not in _FAMILY_KEYS:
        raise ModelError(f"unknown model family {family!r}; expected one of {sorted(_FAMILY_KEYS)}")
    extra = set(spec) - _FAMILY_KEYS[family]
    if extra:
        raise ModelError(f"unexpected key(s) for family {family!r}: {sorted(extra)}")
    kw = {k: v for k, v in spec.items() if k != "family"}
    try:
        if family == "farima0d0":
            return Farima0d0(**kw)
        if family == "farima":
            kw["ar"] = tuple(kw.get("ar", ()))
            kw["ma"] = tuple(kw.get("ma", ()))
            return FarimaPdq(**kw)
        if family == "fgn":
            return Fgn(**kw)
        if family == "product":
            return Product(kw["d"], tuple(kw["gamma0"]), decay=kw.get("decay", EXPONENTIAL))
        return WhiteNoise(**kw)
    except TypeError as exc:
        raise ModelError(f"bad parameters for family {family!r}: {exc}") from None
    except KeyError as exc:
        raise ModelError(f"missing key {exc} for family {family!r}") from None


def model_to_dict(model: CovarianceModel) -> dict:
    return model.to_dict()


# ---------------------------------------------------------------------------
# Gaussian subordination
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SubordinationMap:
    """Instantaneous transform ``X_n = G(Z_n)``; ``g`` must be vectorised."""

    g: Callable[[np.ndarray], np.ndarray]
    label: str = "G"

    def __call__(self, z):
        return np.asarray(self.g(np.asarray(z, dtype=float)), dtype=float)

    def second_moment(self) -> float:
        """``E[G(Z)^2]``; raises ``ModelError`` if not finite."""
        value = gaussian_expectation(lambda z: self(z) ** 2)
        if not math.isfinite(value):
            raise ModelError(f"E[G(Z)^2] is not finite for {self.label}")
        return value


@dataclass(frozen=True)
class HermiteRank:
    """Hermite rank ``m`` (``None`` if it exceeds ``p_max``) and the moduli
    ``|E[(G(Z) - EG(Z)) Z^p]|`` for ``p = 1..``."""

    m: Optional[int]
    coefficients: tuple
    p_max: int
    tol: float

    @property
    def exceeds_pmax(self) -> bool:
        return self.m is None


class NonIntegrableError(ModelError):
    pass


def _gh_rule(n: int):
    x, w = np.polynomial.hermite_e.hermegauss(n)
    return x, w / math.sqrt(TWO_PI)


def _adaptive_half_lines(fn: Callable) -> float:
    def dens(z):
        return float(fn(np.array([z]))[0]) * math.exp(-0.5 * z * z) / math.sqrt(TWO_PI)

    total = 0.0
    with warnings.catch_warnings(), np.errstate(over="ignore", invalid="ignore"):
        warnings.simplefilter("error", integrate.IntegrationWarning)
        for lo, hi in ((-np.inf, 0.0), (0.0, np.inf)):
            try:
                val, err = integrate.quad(dens, lo, hi, epsabs=1e-13, epsrel=1e-12, limit=400)
            except (integrate.IntegrationWarning, OverflowError, FloatingPointError) as exc:
                raise NonIntegrableError(f"Gaussian expectation failed to converge: {exc}") from None
            total += val
    return total


def gaussian_expectation(fn: Callable, tol: float = 1e-12) -> float:
    """``E[fn(Z)]`` for standard normal ``Z``.

    Gauss-Hermite with 128 then 256 nodes; if the two disagree by more than
    ``tol`` (non-smooth ``fn``) the integral is recomputed adaptively on
    each half line.
    """
    with np.errstate(all="ignore"):
        est = []
        for n in (128, 256):
            x, w = _gh_rule(n)
            est.append(float(np.sum(w * fn(x))))
    if all(map(math.isfinite, est)) and abs(est[1] - est[0]) <= tol * max(1.0, abs(est[1])):
        return est[1]
    return _adaptive_half_lines(fn)


def hermite_rank(g: SubordinationMap, tol: float = 1e-8, p_max: int = 8) -> HermiteRank:
    """Smallest ``p <= p_max`` with ``|E[(G(Z) - EG(Z)) Z^p]| > tol``."""
    g.second_moment()
    mean = gaussian_expectation(g)
    coefs = []
    for p in range(1, p_max + 1):
        c = abs(gaussian_expectation(lambda z, p=p: (g(z) - mean) * z**p, tol=1e-3 * tol))
        coefs.append(c)
        if c > tol:
            return HermiteRank(p, tuple(coefs), p_max, tol)
    return HermiteRank(None, tuple(coefs), p_max, tol)


def apply_subordination(g: Union[SubordinationMap, Callable], path) -> np.ndarray:
    """Elementwise ``G(path)``."""
    out = g(np.asarray(path, dtype=float)) if isinstance(g, SubordinationMap) else \
        np.asarray(g(np.asarray(path, dtype=float)), dtype=float)
    return out


IDENTITY = SubordinationMap(lambda z: z, "identity")
SQUARE = SubordinationMap(lambda z: z**2, "square")
SQUARE_CENTERED = SubordinationMap(lambda z: z**2 - 1.0, "square_centered")
SIGN = SubordinationMap(np.sign, "sign")
EXP = SubordinationMap(np.exp, "exp")
ABS = SubordinationMap(np.abs, "abs")
ONE = SubordinationMap(np.ones_like, "one")

NAMED_MAPS = {m.label: m for m in (IDENTITY, SQUARE, SQUARE_CENTERED, SIGN, EXP, ABS, ONE)}


def named_map(name: str) -> SubordinationMap:
    try:
        return NAMED_MAPS[name]
    except KeyError:
        raise ModelError(f"unknown subordination map {name!r}; known: {sorted(NAMED_MAPS)}") from None
