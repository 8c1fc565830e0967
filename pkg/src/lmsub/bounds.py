"""Upper and lower bounds on the canonical correlation, constant calibration,
and the subsampling-condition diagnostic."""
from __future__ import annotations

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass
from typing import Callable, Iterable, Optional, Sequence

import numpy as np

from . import models
from .cancorr import block_sum_corr, rho_curve
from .models import CovarianceModel
from .toeplitz import autocov_array, build_sigma, extreme_eigs

N_TAIL_CAP = 100_000


class BoundDomainError(ValueError):
    """Bound evaluated outside its stated ordering constraints."""


# ---------------------------------------------------------------------------
# block-size rules
# ---------------------------------------------------------------------------

def block_rule(spec) -> Callable[[int], int]:
    """Block-size rule from ``"sqrt"``, ``"pow:a"``, an integer or a callable.

    ``"sqrt"`` is ``ceil(n^{1/2})`` and ``"pow:a"`` is ``ceil(n^a)``.
    """
    if callable(spec):
        return spec
    if isinstance(spec, (int, np.integer)):
        b = int(spec)
        return lambda n: b
    s = str(spec).strip()
    if s == "sqrt":
        return lambda n: int(math.ceil(math.sqrt(n) - 1e-12))
    if s.startswith("pow:"):
        a = float(s[4:])
        if not 0 < a < 1:
            raise ValueError(f"block rule exponent must lie in (0, 1), got {a}")
        return lambda n: int(math.ceil(n**a - 1e-9))
    if s.isdigit():
        return block_rule(int(s))
    raise ValueError(f"unknown block rule {spec!r}; expected 'sqrt', 'pow:a' or an integer")


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------

def tail_max(gamma, j: int, b: int) -> tuple:
    """``max |gamma(n)|`` over ``j < n <= j + N_tail``; the flag reports
    whether the maximum sits on the window's right edge (not certified)."""
    n_tail = min(10 * b, N_TAIL_CAP)
    g = np.abs(autocov_array(gamma, j + n_tail)[j + 1:])
    i = int(np.argmax(g))
    return float(g[i]), i == g.size - 1


def crude_bound(gamma, k: int, b: int) -> float:
    """``b * M_gamma(k - b) / lambda_min(Sigma_b)``."""
    if k <= b:
        raise BoundDomainError(f"crude bound needs k > b (got k={k}, b={b})")
    m, _ = tail_max(gamma, k - b, b)
    lam_min, _ = extreme_eigs(build_sigma(gamma, b))
    return b * m / lam_min


def bw_bound(d: float, Lgamma_const: float, k: int, b: int, C1: float, C2: float) -> float:
    """Two-term bound with ``L_gamma`` treated as a constant."""
    if k <= b:
        raise BoundDomainError(f"BW bound needs k > b (got k={k}, b={b})")
    first = C1 * (b / (k - b)) ** (1 - 2 * d) * Lgamma_const
    second = C2 * b**2 * float(k - b) ** (2 * d - 2) * max(Lgamma_const, 1.0)
    return first + second


def farima_shape(d: float, k: int, b: int) -> float:
    return (b / (k - b)) ** (1 - 2 * d)


def farima_bound(d: float, k: int, b: int, C: float) -> float:
    """``C * (b / (k - b))^{1 - 2d}`` for ``1 <= b < k``."""
    if not 1 <= b < k:
        raise BoundDomainError(f"FARIMA bound needs 1 <= b < k (got k={k}, b={b})")
    return C * farima_shape(d, k, b)


def main_second_term(regime: str, k: int, kprime: int, alpha_or_rate: float,
                     C2: float, c3: float) -> float:
    if regime in (models.POLY_BIG_O, models.POLY_LITTLE_O):
        return C2 * kprime * float(k) ** (-alpha_or_rate)
    if regime == models.EXPONENTIAL:
        return C2 * math.exp(-c3 * k)
    raise ValueError(f"unknown regime {regime!r}")


def main_bound(d: float, k: int, kprime: int, b: int, regime: str, alpha_or_rate: float,
               C1: float, C2: float, c3: float = 1.0, eps: float = 0.0) -> float:
    """``C1 (b / (k' - b))^{1-2d}`` plus the regime's short-memory term.

    Requires ``1 <= b < k' <= (1 - eps) k``.
    """
    if not (1 <= b < kprime <= (1 - eps) * k):
        raise BoundDomainError(
            f"need 1 <= b < k' <= (1-eps) k (got b={b}, k'={kprime}, k={k}, eps={eps})")
    return C1 * (b / (kprime - b)) ** (1 - 2 * d) + main_second_term(
        regime, k, kprime, alpha_or_rate, C2, c3)


def kprime_rule(b: int, k: int, m: int = 4, eps: float = 0.1) -> Optional[int]:
    """``k' = b (m + 1)`` capped at ``floor((1 - eps) k)``; ``None`` if no
    admissible ``k'`` exists."""
    kp = min(b * (m + 1), int(math.floor((1 - eps) * k)))
    return kp if kp > b else None


def calibrate_constant(gamma, d: float, bound_shape: Callable[[int, int], float],
                       grid: Iterable[tuple], offset: Optional[Callable[[int, int], float]] = None
                       ) -> float:
    """Smallest ``C`` with ``rho <= C * shape (+ offset)`` on every ``(k, b)``.

    ``d`` is recorded by callers for provenance; the shape already carries it.
    """
    ratios = []
    for k, b in grid:
        if k <= b:
            raise BoundDomainError(f"calibration grid needs k > b (got k={k}, b={b})")
        r = rho_curve(gamma, [k], b)[0]
        if offset is not None:
            r = r - offset(k, b)
        ratios.append(r / bound_shape(k, b))
    if not ratios:
        raise ValueError("calibration grid is empty")
    return max(0.0, float(max(ratios)))


def default_short_memory_rate(model: CovarianceModel) -> float:
    """Exponential decay rate of ``gamma_0`` used for ``c3`` (``c3 = eps * rate``)."""
    if isinstance(model, models.FarimaPdq) and model.ar:
        roots = np.roots(np.r_[-np.asarray(model.ar)[::-1], 1.0])
        return float(np.log(np.min(np.abs(roots))))
    return 1.0


@dataclass
class BoundReport:
    model: str
    d: float
    k: int
    kprime: Optional[int]
    b: int
    rho: float
    lower: float
    crude: float
    bw: float
    farima: float
    main: float
    regime: str

    def sandwich_ok(self, rtol: float = 1e-12) -> bool:
        uppers = [u for u in (self.crude, self.bw, self.farima, self.main) if not math.isnan(u)]
        lo_ok = self.lower <= self.rho * (1 + rtol) + rtol
        return lo_ok and all(self.rho <= u * (1 + rtol) + rtol for u in uppers)

    def as_dict(self) -> dict:
        return asdict(self)


COLUMNS = ("model", "d", "k", "kprime", "b", "rho", "lower", "crude", "bw", "farima", "main",
           "regime")


@dataclass
class Calibration:
    """Calibrated constants and the grid they came from."""

    C_farima: float
    C1_bw: float
    C1_main: float
    C2: float
    c3: float
    alpha: float
    margin: float
    grid: tuple


def calibrate_all(model: CovarianceModel, grid: Sequence[tuple], m: int = 4, eps: float = 0.1,
                  C2: float = 1.0, alpha: float = 2.0, c3: Optional[float] = None,
                  margin: float = 1.1) -> Calibration:
    """Calibrate the FARIMA, BW and main-theorem constants on ``grid``.

    Each constant is the calibration maximum times ``margin``.
    """
    d = model.memory
    L = model.tail_constant()
    regime = model.regime
    if c3 is None:
        c3 = eps * default_short_memory_rate(model)
    grid = tuple((int(k), int(b)) for k, b in grid if k > b)
    if not grid:
        raise ValueError("calibration grid has no point with k > b")
    C_f = calibrate_constant(model, d, lambda k, b: farima_shape(d, k, b), grid)
    C_bw = calibrate_constant(
        model, d, lambda k, b: farima_shape(d, k, b) * L, grid,
        offset=lambda k, b: bw_bound(d, L, k, b, 0.0, C2))
    main_grid = [(k, b) for k, b in grid if kprime_rule(b, k, m, eps)]
    C_m = float("nan")
    if main_grid:
        def shape(k, b):
            kp = kprime_rule(b, k, m, eps)
            return (b / (kp - b)) ** (1 - 2 * d)

        def offset(k, b):
            kp = kprime_rule(b, k, m, eps)
            return main_second_term(regime, k, kp, alpha, C2, c3)

        C_m = calibrate_constant(model, d, shape, main_grid, offset=offset)
    return Calibration(margin * C_f, margin * C_bw, margin * C_m, C2, c3, alpha, margin, grid)


def bound_table(model: CovarianceModel, grid: Sequence[tuple], calibration: Calibration,
                m: int = 4, eps: float = 0.1, label: Optional[str] = None) -> list:
    """One :class:`BoundReport` per ``(k, b)`` with ``k > b`` (others skipped)."""
    d = model.memory
    L = model.tail_constant()
    regime = model.regime
    label = label or model.family
    rows = []
    for k, b in grid:
        k, b = int(k), int(b)
        if k <= b:
            continue
        rho = float(rho_curve(model, [k], b)[0])
        kp = kprime_rule(b, k, m, eps)
        main = float("nan")
        if kp is not None and not math.isnan(calibration.C1_main):
            main = main_bound(d, k, kp, b, regime, calibration.alpha, calibration.C1_main,
                              calibration.C2, calibration.c3, eps)
        rows.append(BoundReport(
            model=label, d=d, k=k, kprime=kp, b=b, rho=rho,
            lower=block_sum_corr(model, k, b),
            crude=crude_bound(model, k, b),
            bw=bw_bound(d, L, k, b, calibration.C1_bw, calibration.C2),
            farima=farima_bound(d, k, b, calibration.C_farima),
            main=main, regime=regime))
    return rows


# ---------------------------------------------------------------------------
# subsampling-condition diagnostic
# ---------------------------------------------------------------------------

@dataclass
class DiagRow:
    n: int
    b_n: int
    mean_rho: float
    max_window_rho: float


def _geometric_grid(lo: int, hi: int, count: int, extra: Sequence[int] = ()) -> np.ndarray:
    pts = np.geomspace(lo, hi, count) if hi > lo else np.array([lo])
    pts = np.unique(np.r_[np.rint(pts).astype(int), lo, hi, list(extra)])
    return pts[(pts >= lo) & (pts <= hi)]


def rho_sum(gamma, n: int, b: int, k_from: int = 1, k_to: Optional[int] = None,
            rho_fn: Optional[Callable[[int, int], float]] = None) -> float:
    """Exact ``sum_{k=k_from}^{k_to} rho_{k,b}`` (``rho_{0,b} = 1``)."""
    k_to = n if k_to is None else k_to
    ks = np.arange(k_from, k_to + 1)
    if rho_fn is not None:
        return float(sum(rho_fn(int(k), b) for k in ks))
    vals = np.ones(ks.size)
    pos = ks >= 1
    vals[pos] = rho_curve(gamma, ks[pos], b)
    return float(vals.sum())


def _diag_one(gamma, n: int, b: int, epsilon: float, k_dense: Optional[int], n_geom: int,
              exact: bool, rho_fn) -> DiagRow:
    if not 1 <= b < n:
        raise ValueError(f"block rule gave b={b} for n={n}; need 1 <= b < n")
    k_window = max(1, int(math.ceil(epsilon * n)))

    def rho_at(ks):
        ks = np.asarray(ks, dtype=int)
        if rho_fn is not None:
            return np.array([float(rho_fn(int(k), b)) for k in ks])
        return rho_curve(gamma, ks, b)

    if exact:
        ks = np.arange(1, n + 1)
        vals = rho_at(ks)
        window = vals[ks >= k_window]
        return DiagRow(n, b, float(vals.mean()), float(window.max()))

    kd = min(4 * b, 512, n) if k_dense is None else min(int(k_dense), n)
    dense_ks = np.arange(1, kd + 1)
    dense_vals = rho_at(dense_ks)
    total = dense_vals.sum()
    window_vals = list(dense_vals[dense_ks >= k_window])
    if kd < n:
        grid = _geometric_grid(kd, n, n_geom, extra=[k_window] if k_window > kd else [])
        gvals = rho_at(grid)
        gvals[0] = dense_vals[-1]
        total += gvals[1:].sum()
        # gaps between grid points: monotone envelope of the two neighbours
        gaps = np.diff(grid) - 1
        total += np.sum(gaps * np.maximum(gvals[:-1], gvals[1:]))
        window_vals.extend(gvals[grid >= k_window])
    return DiagRow(n, b, float(total / n), float(max(window_vals)))


def subsampling_condition_diag(gamma, n_list: Sequence[int], block_rule_spec="sqrt",
                               epsilon: float = 0.1, k_dense: Optional[int] = None,
                               n_geom: int = 32, exact: bool = False,
                               rho_fn: Optional[Callable[[int, int], float]] = None,
                               workers: int = 1) -> list:
    """Table of ``(n, b_n, n^{-1} sum_k rho_{k,b_n}, max_{k >= eps n} rho_{k,b_n})``.

    ``rho`` is exact for ``k <= min(4 b_n, 512)`` and on ``n_geom`` geometric
    grid points beyond; the sum between grid points uses the larger
    neighbouring value. ``exact=True`` evaluates every ``k``.
    """
    rule = block_rule(block_rule_spec)
    jobs = [(int(n), rule(int(n))) for n in n_list]

    def run(job):
        return _diag_one(gamma, job[0], job[1], epsilon, k_dense, n_geom, exact, rho_fn)

    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            return list(pool.map(run, jobs))
    return [run(j) for j in jobs]


def strictly_decreasing(values: Sequence[float]) -> bool:
    return all(b < a for a, b in zip(values, values[1:]))
