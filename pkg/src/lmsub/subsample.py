"""Subsampling inference over sliding blocks.

Self-normalized block statistics for the mean and the lag-m autocovariance,
monotone M-estimators, the empirical distribution of block statistics,
confidence intervals and bands, and Monte Carlo harnesses for coverage and
for the variance of the subsample ECDF.

The self-normalizer of a length-L sequence with partial sums ``S_t`` is

    W^2 = L^{-3} sum_{t=1}^{L} (S_t - (t/L) S_L)^2,

so that ``W`` has the same order ``L^{d-1/2}`` as the centred sample mean.
"""
from __future__ import annotations

import math
import warnings
from dataclasses import asdict, dataclass, field
from typing import Callable, Optional, Sequence, Union

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from . import bounds, models, simulate
from .models import CovarianceModel


class DegenerateWarning(UserWarning):
    """Degenerate input: zero normalizer, constant series or a point-mass
    subsample distribution."""


# ---------------------------------------------------------------------------
# normalizers and plug-in estimators
# ---------------------------------------------------------------------------

NORM_RTOL = 1e-12


def _sn_norm_rows(Y: np.ndarray) -> np.ndarray:
    """Self-normalizer of each row of ``Y`` (bridge of the partial sums).

    Values below ``NORM_RTOL`` times the row's magnitude are cancellation
    noise from a constant row and are returned as exactly 0.
    """
    L = Y.shape[-1]
    D = Y - Y.mean(axis=-1, keepdims=True)
    S = np.cumsum(D, axis=-1)
    W = np.sqrt(np.einsum("...i,...i->...", S, S) / L**3)
    return np.where(W <= NORM_RTOL * np.abs(Y).max(axis=-1), 0.0, W)


def sn_normalizer(x) -> float:
    x = np.asarray(x, dtype=float)
    return float(_sn_norm_rows(x[None, :])[0])


def sample_autocov(series, m: int) -> float:
    """``n^{-1} sum_{i=1}^{n-m} (X_i - mean)(X_{i+m} - mean)``."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if not 0 <= m < n:
        raise ValueError(f"lag m must satisfy 0 <= m < n (m={m}, n={n})")
    c = x - x.mean()
    return float(c[: n - m] @ c[m:] / n)


def _lag_products(x: np.ndarray, m: int) -> np.ndarray:
    """Rows of ``(X_i - mean)(X_{i+m} - mean)`` with the row mean."""
    c = x - x.mean(axis=-1, keepdims=True)
    return c[..., : x.shape[-1] - m] * c[..., m:]


def _safe_ratio(num: np.ndarray, den: np.ndarray):
    """``num / den`` with a zero denominator mapped to 0; returns the count."""
    zero = den <= 0
    out = np.where(zero, 0.0, num / np.where(zero, 1.0, den))
    return out, int(zero.sum())


# ---------------------------------------------------------------------------
# M-estimation
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Psi:
    """Monotone estimating function; ``c`` is the Huber tuning constant."""

    name: str
    c: float = math.inf

    def __call__(self, u):
        if self.name == "sign":
            return np.sign(u)
        return np.clip(u, -self.c, self.c)


SIGN = Psi("sign")


def huber(c: float = 1.345) -> Psi:
    if not c > 0:
        raise ValueError("Huber constant must be positive")
    return Psi("huber", float(c))


def parse_psi(spec) -> Psi:
    """``"sign"``, ``"huber"`` or ``"huber:c"``."""
    if isinstance(spec, Psi):
        return spec
    s = str(spec)
    if s == "sign":
        return SIGN
    if s == "huber":
        return huber()
    if s.startswith("huber:"):
        return huber(float(s[6:]))
    raise ValueError(f"unknown psi {spec!r}; expected 'sign', 'huber' or 'huber:c'")


def m_estimate(series, psi: Union[Psi, str] = SIGN) -> float:
    """Root of ``sum_i psi(X_i - x) = 0``.

    The sign function gives the sample median (midpoint of the root
    interval). Huber's function is solved by bisection on
    ``[min, max]`` to ``1e-10 (max - min)``. A constant series returns the
    constant with a :class:`DegenerateWarning`.
    """
    psi = parse_psi(psi)
    x = np.asarray(series, dtype=float)
    if x.size == 0:
        raise ValueError("empty series")
    lo, hi = float(x.min()), float(x.max())
    if lo == hi:
        warnings.warn("constant series: estimating function has no sign change",
                      DegenerateWarning, stacklevel=2)
        return lo
    if psi.name == "sign":
        return float(np.median(x))
    tol = 1e-10 * (hi - lo)
    while hi - lo > tol:
        mid = 0.5 * (lo + hi)
        if np.sum(psi(x - mid)) > 0:
            lo = mid
        else:
            hi = mid
    return 0.5 * (lo + hi)


def _m_estimate_rows(X: np.ndarray, psi: Psi) -> np.ndarray:
    """Row-wise :func:`m_estimate` (vectorised bisection)."""
    if psi.name == "sign":
        return np.median(X, axis=1)
    lo, hi = X.min(axis=1), X.max(axis=1)
    tol = 1e-10 * (hi - lo)
    for _ in range(80):
        active = hi - lo > tol
        if not active.any():
            break
        mid = 0.5 * (lo + hi)
        pos = np.sum(psi(X - mid[:, None]), axis=1) > 0
        lo = np.where(active & pos, mid, lo)
        hi = np.where(active & ~pos, mid, hi)
    return 0.5 * (lo + hi)


# ---------------------------------------------------------------------------
# block statistics
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class Context:
    """Full-sample plug-ins shared by every block."""

    n: int
    theta: float
    normalizer: float
    sorted_sample: Optional[np.ndarray] = field(default=None, repr=False)


@dataclass(frozen=True)
class BlockStatistic:
    """A block statistic ``T_b(block; theta_hat)``.

    kinds: ``sn_mean``; ``sn_autocov`` (lag ``m``); ``m_estimator`` (``psi``),
    self-normalized by the partial-sum normalizer of the block; ``ecdf_sup``
    (``b^r sup_x |F_block - F_n|``). With ``theta`` set, the true parameter
    replaces the full-sample plug-in.
    """

    kind: str
    m: int = 0
    psi: Psi = SIGN
    rate_exponent: float = 0.5
    theta: Optional[float] = None

    KINDS = ("sn_mean", "sn_autocov", "m_estimator", "ecdf_sup")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise ValueError(f"unknown statistic {self.kind!r}; expected one of {self.KINDS}")
        if self.m < 0:
            raise ValueError("lag m must be >= 0")

    def estimate(self, x: np.ndarray) -> float:
        if self.kind == "sn_autocov":
            return sample_autocov(x, self.m)
        if self.kind == "m_estimator":
            return m_estimate(x, self.psi)
        return float(x.mean())

    def context(self, series) -> Context:
        x = np.asarray(series, dtype=float)
        if self.kind == "sn_autocov" and x.size <= self.m + 1:
            raise ValueError(f"need n > m + 1 for the lag-{self.m} statistic")
        theta = self.estimate(x) if self.theta is None else float(self.theta)
        if self.kind == "sn_autocov":
            w = sn_normalizer(_lag_products(x, self.m))
        else:
            w = sn_normalizer(x)
        srt = np.sort(x, kind="stable") if self.kind == "ecdf_sup" else None
        return Context(x.size, theta, w, srt)

    def evaluate_windows(self, X: np.ndarray, ctx: Context):
        """Statistic for each row of the window matrix ``X``; returns the
        values and the number of zero-normalizer guards."""
        b = X.shape[1]
        if self.kind == "sn_mean":
            return _safe_ratio(X.mean(axis=1) - ctx.theta, _sn_norm_rows(X))
        if self.kind == "sn_autocov":
            if b <= self.m + 1:
                raise ValueError(f"block length b={b} must exceed m + 1 = {self.m + 1}")
            Y = _lag_products(X, self.m)
            return _safe_ratio(Y.sum(axis=1) / b - ctx.theta, _sn_norm_rows(Y))
        if self.kind == "m_estimator":
            return _safe_ratio(_m_estimate_rows(X, self.psi) - ctx.theta, _sn_norm_rows(X))
        raise ValueError("ecdf_sup is evaluated by sliding_blocks_eval directly")

    def __call__(self, block, ctx: Context) -> float:
        X = np.asarray(block, dtype=float)[None, :]
        if self.kind == "ecdf_sup":
            return float(_ecdf_sup_values(X[0], X.shape[1], self.rate_exponent, ctx)[0])
        return float(self.evaluate_windows(X, ctx)[0][0])


def sn_mean_stat(block, context: Context) -> float:
    return BlockStatistic("sn_mean")(block, context)


def sn_autocov_stat(block, m: int, context: Context) -> float:
    return BlockStatistic("sn_autocov", m=m)(block, context)


# ---------------------------------------------------------------------------
# subsample distributions
# ---------------------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class SubsampleDistribution:
    """Sorted block statistics over all ``n - b + 1`` windows."""

    values: np.ndarray
    b: int
    n: int
    degenerate_count: int = 0

    def __post_init__(self):
        if self.values.size == 0:
            raise ValueError("empty subsample distribution")

    @property
    def size(self) -> int:
        return self.values.size

    def ecdf(self, x):
        """Right-continuous ECDF."""
        r = np.searchsorted(self.values, x, side="right") / self.values.size
        return float(r) if np.ndim(r) == 0 else r

    def quantile(self, q):
        """Left-continuous inverse: smallest value with ``ecdf >= q``."""
        q = np.asarray(q, dtype=float)
        if np.any((q < 0) | (q > 1)):
            raise ValueError("quantile level must lie in [0, 1]")
        N = self.values.size
        idx = np.clip(np.ceil(q * N - 1e-9).astype(int) - 1, 0, N - 1)
        v = self.values[idx]
        return float(v) if v.ndim == 0 else v

    @property
    def is_degenerate(self) -> bool:
        return self.values[0] == self.values[-1]


def ecdf(dist: SubsampleDistribution, x):
    return dist.ecdf(x)


def quantile(dist: SubsampleDistribution, q):
    return dist.quantile(q)


def _ecdf_sup_values(x: np.ndarray, b: int, rate_exponent: float, ctx: Context) -> np.ndarray:
    """``b^r sup_x |F_{b,k} - F_n|`` for every window, updating rank counts
    as the window slides."""
    srt = ctx.sorted_sample
    n = srt.size
    uniq = np.unique(srt)
    Fn = np.searchsorted(srt, uniq, side="right") / n
    pos = np.searchsorted(uniq, x)
    counts = np.zeros(uniq.size)
    np.add.at(counts, pos[:b], 1.0)
    out = np.empty(x.size - b + 1)
    scale = b**rate_exponent
    for k in range(out.size):
        if k:
            counts[pos[k - 1]] -= 1.0
            counts[pos[k + b - 1]] += 1.0
        out[k] = scale * np.max(np.abs(np.cumsum(counts) / b - Fn))
    return out


def sliding_blocks_eval(series, b: int, stat: BlockStatistic) -> SubsampleDistribution:
    """Statistic on every window ``X_i..X_{i+b-1}``, ``i = 1..n-b+1``."""
    x = np.asarray(series, dtype=float)
    n = x.size
    if not 1 <= b <= n:
        raise ValueError(f"block size must satisfy 1 <= b <= n (b={b}, n={n})")
    ctx = stat.context(x)
    if stat.kind == "ecdf_sup":
        vals, flagged = _ecdf_sup_values(x, b, stat.rate_exponent, ctx), 0
    else:
        vals, flagged = stat.evaluate_windows(sliding_window_view(x, b), ctx)
    if flagged:
        warnings.warn(f"{flagged} block(s) with zero normalizer mapped to 0",
                      DegenerateWarning, stacklevel=2)
    return SubsampleDistribution(np.sort(vals, kind="stable"), b, n, flagged)


def block_means(series, b: int) -> SubsampleDistribution:
    """Plain block averages (hand-checkable reference statistic)."""
    x = np.asarray(series, dtype=float)
    vals = sliding_window_view(x, b).mean(axis=1)
    return SubsampleDistribution(np.sort(vals, kind="stable"), b, x.size)


# ---------------------------------------------------------------------------
# confidence intervals and bands
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class ConfidenceInterval:
    lower: float
    upper: float
    estimate: float
    level: float
    degenerate: bool = False

    @property
    def length(self) -> float:
        return self.upper - self.lower

    def covers(self, value: float) -> bool:
        return self.lower <= value <= self.upper

    def as_dict(self) -> dict:
        d = asdict(self)
        d["length"] = self.length
        return d


def subsample_ci(series, b: int, stat: Union[str, BlockStatistic] = "sn_mean",
                 level: float = 0.9, m: int = 1) -> ConfidenceInterval:
    """Subsampling interval ``[est - q_{1-a/2} W_n, est - q_{a/2} W_n]``.

    ``W_n`` is the full-sample self-normalizer and ``q`` are quantiles of
    the block statistic. ``level = 0`` returns the point estimate twice.
    """
    if isinstance(stat, str):
        stat = BlockStatistic(stat, m=m) if stat != "m_estimator" else BlockStatistic(stat)
    if stat.kind == "ecdf_sup":
        raise ValueError("use ecdf_band for the ECDF statistic")
    x = np.asarray(series, dtype=float)
    if not 0 <= level < 1:
        raise ValueError("level must lie in [0, 1)")
    if not 1 <= b < x.size:
        raise ValueError(f"need 1 <= b < n (b={b}, n={x.size})")
    ctx = stat.context(x)
    if level == 0:
        return ConfidenceInterval(ctx.theta, ctx.theta, ctx.theta, 0.0)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", DegenerateWarning)
        dist = sliding_blocks_eval(x, b, stat)
    alpha = 1.0 - level
    q_lo, q_hi = dist.quantile([alpha / 2, 1 - alpha / 2])
    degenerate = dist.is_degenerate or ctx.normalizer == 0
    if degenerate:
        warnings.warn("degenerate subsample distribution", DegenerateWarning, stacklevel=2)
    return ConfidenceInterval(float(ctx.theta - q_hi * ctx.normalizer),
                              float(ctx.theta - q_lo * ctx.normalizer), ctx.theta, level,
                              bool(degenerate))


@dataclass(frozen=True, eq=False)
class ConfidenceBand:
    grid: np.ndarray
    lower: np.ndarray
    upper: np.ndarray
    cutoff: float
    center: np.ndarray

    def contains(self, F: Callable) -> np.ndarray:
        v = F(self.grid)
        return (self.lower <= v) & (v <= self.upper)

    def as_dict(self) -> dict:
        return {"x": self.grid.tolist(), "lower": self.lower.tolist(),
                "upper": self.upper.tolist(), "cutoff": self.cutoff}


def ecdf_band(series, b: int, level: float = 0.9, rate_exponent: float = 0.5) -> ConfidenceBand:
    """Uniform band ``F_n(x) -+ s`` clipped to ``[0, 1]``.

    ``s = q_level{S_k} / n^r`` where ``S_k = b^r sup_x |F_{b,k}(x) - F_n(x)|``.
    """
    x = np.asarray(series, dtype=float)
    n = x.size
    if not 1 <= b <= n:
        raise ValueError(f"need 1 <= b <= n (b={b}, n={n})")
    dist = sliding_blocks_eval(x, b, BlockStatistic("ecdf_sup", rate_exponent=rate_exponent))
    cutoff = float(dist.quantile(level)) / n**rate_exponent
    srt = np.sort(x)
    grid = np.unique(srt)
    Fn = np.searchsorted(srt, grid, side="right") / n
    return ConfidenceBand(grid, np.maximum(Fn - cutoff, 0.0), np.minimum(Fn + cutoff, 1.0),
                          cutoff, Fn)


# ---------------------------------------------------------------------------
# Monte Carlo harnesses
# ---------------------------------------------------------------------------

def _resolve_map(G):
    if G is None:
        return models.IDENTITY
    if isinstance(G, str):
        return models.named_map(G)
    return G


def _paths(model, n, seed, reps, method, G, offset=0):
    sampler = simulate.sampler_for(model, n, method)
    seeds = [simulate.derive_seed(seed, offset + i) for i in range(reps)]
    X = sampler.draw_many(seeds)
    g = _resolve_map(G)
    return X if g is models.IDENTITY else models.apply_subordination(g, X)


@dataclass
class CoverageConfig:
    model: CovarianceModel
    n: int
    b: int
    reps: int = 300
    level: float = 0.9
    seed: int = 0
    stat: str = "sn_mean"
    m: int = 1
    G: object = None
    truth: Optional[float] = None
    method: str = "auto"
    ci_fn: Optional[Callable] = None


@dataclass
class CoverageReport:
    coverage: float
    mean_length: float
    reps: int
    seed: int
    n: int
    b: int
    level: float
    truth: float
    degenerate: int

    def as_dict(self) -> dict:
        return asdict(self)


def true_parameter(cfg: CoverageConfig) -> float:
    if cfg.truth is not None:
        return float(cfg.truth)
    g = _resolve_map(cfg.G)
    if cfg.stat in ("sn_mean", "m_estimator"):
        if g is models.IDENTITY:
            return 0.0
        if cfg.stat == "sn_mean":
            sd = math.sqrt(cfg.model.autocov(0)[0])
            return models.gaussian_expectation(lambda z: g(sd * z))
    if cfg.stat == "sn_autocov" and g is models.IDENTITY:
        return float(cfg.model.autocov(cfg.m)[cfg.m])
    raise ValueError("true parameter unknown for this configuration; set 'truth'")


def mc_coverage(cfg: CoverageConfig) -> CoverageReport:
    """Fraction of replications whose interval covers the true parameter.

    Replication ``i`` uses stream ``derive_seed(seed, i)``.
    ``ci_fn(series, b, level) -> (lower, upper)`` overrides the interval.
    """
    truth = true_parameter(cfg)
    hits, lengths, degenerate = 0, 0.0, 0
    chunk = 32
    for lo in range(0, cfg.reps, chunk):
        X = _paths(cfg.model, cfg.n, cfg.seed, min(chunk, cfg.reps - lo), cfg.method, cfg.G, lo)
        for x in X:
            if cfg.ci_fn is not None:
                a, c = cfg.ci_fn(x, cfg.b, cfg.level)
            else:
                with warnings.catch_warnings():
                    warnings.simplefilter("ignore", DegenerateWarning)
                    ci = subsample_ci(x, cfg.b, cfg.stat, cfg.level, cfg.m)
                a, c = ci.lower, ci.upper
                degenerate += ci.degenerate
            hits += bool(a <= truth <= c)
            lengths += float(c - a)
    return CoverageReport(hits / cfg.reps, lengths / cfg.reps, cfg.reps, cfg.seed, cfg.n, cfg.b,
                          cfg.level, truth, degenerate)


def block_size_study(model, n: int, exponents=(0.3, 0.5, 0.7), **kw) -> list:
    """Coverage for ``b = ceil(n^a)``; a table, no assertion."""
    rows = []
    for a in exponents:
        b = int(math.ceil(n**a - 1e-9))
        rep = mc_coverage(CoverageConfig(model, n, b, **kw))
        rows.append({"exponent": a, "b": b, "coverage": rep.coverage,
                     "coverage_error": abs(rep.coverage - rep.level),
                     "mean_length": rep.mean_length})
    return rows


@dataclass
class VarianceConfig:
    model: CovarianceModel
    n: int
    b: int
    reps: int = 500
    seed: int = 0
    x_grid: Optional[Sequence[float]] = None
    theta: float = 0.0
    method: str = "auto"


@dataclass
class VarianceReport:
    x: list
    variance: list
    variance_se: list
    bound: float
    reps: int
    n: int
    b: int

    def within_bound(self, n_se: float = 3.0) -> bool:
        return all(v <= self.bound + n_se * s for v, s in zip(self.variance, self.variance_se))

    def as_dict(self) -> dict:
        return asdict(self)


def starred_ecdf_values(x: np.ndarray, b: int, theta: float, grid: np.ndarray) -> np.ndarray:
    """``F*_{n,b}`` at ``grid`` using the true parameter ``theta``."""
    X = sliding_window_view(x, b)
    T, _ = _safe_ratio(X.mean(axis=1) - theta, _sn_norm_rows(X))
    T.sort()
    return np.searchsorted(T, grid, side="right") / T.size


def variance_bound(model, n: int, b: int) -> float:
    """``2/(n-b+1) sum_{k=0}^{n-b+1} rho_{k,b}``."""
    return 2.0 / (n - b + 1) * bounds.rho_sum(model, n, b, k_from=0, k_to=n - b + 1)


def mc_variance_check(cfg: VarianceConfig) -> VarianceReport:
    """MC variance of the starred subsample ECDF (sn_mean with the true mean)
    against the canonical-correlation bound. Without an ``x_grid`` the
    pooled median of the block statistics is used."""
    X = _paths(cfg.model, cfg.n, cfg.seed, cfg.reps, cfg.method, None)
    if cfg.x_grid is None:
        pooled = []
        for x in X:
            W = sliding_window_view(x, cfg.b)
            T, _ = _safe_ratio(W.mean(axis=1) - cfg.theta, _sn_norm_rows(W))
            pooled.append(T)
        grid = np.array([float(np.median(np.concatenate(pooled)))])
    else:
        grid = np.asarray(cfg.x_grid, dtype=float)
    F = np.stack([starred_ecdf_values(x, cfg.b, cfg.theta, grid) for x in X])
    var = F.var(axis=0, ddof=1)
    dev2 = (F - F.mean(axis=0)) ** 2
    se = dev2.std(axis=0, ddof=1) / math.sqrt(cfg.reps)
    return VarianceReport(grid.tolist(), var.tolist(), se.tolist(),
                          variance_bound(cfg.model, cfg.n, cfg.b), cfg.reps, cfg.n, cfg.b)


def mc_variance(values: np.ndarray) -> tuple:
    """Sample variance and its standard error."""
    v = np.asarray(values, dtype=float)
    dev2 = (v - v.mean()) ** 2
    return float(v.var(ddof=1)), float(dev2.std(ddof=1) / math.sqrt(v.size))


def loglog_slope(ns: Sequence[float], values: Sequence[float]) -> float:
    return float(np.polyfit(np.log(ns), np.log(values), 1)[0])


def rate_experiment(model, ns: Sequence[int], estimator: Callable[[np.ndarray], np.ndarray],
                    reps: int = 500, seed: int = 0, method: str = "auto") -> dict:
    """MC variance of ``estimator`` (applied to a batch of paths, one per
    row) for each ``n`` and the log-log slope of variance against ``n``."""
    variances = []
    for j, n in enumerate(ns):
        X = _paths(model, int(n), simulate.derive_seed(seed, j), reps, method, None)
        variances.append(mc_variance(estimator(X))[0])
    return {"n": list(map(int, ns)), "variance": variances, "slope": loglog_slope(ns, variances)}


def autocov_rows(X: np.ndarray, m: int) -> np.ndarray:
    """:func:`sample_autocov` for each row."""
    n = X.shape[1]
    return _lag_products(X, m).sum(axis=1) / n


def m_estimate_rows(X: np.ndarray, psi: Union[Psi, str]) -> np.ndarray:
    return _m_estimate_rows(np.asarray(X, dtype=float), parse_psi(psi))
