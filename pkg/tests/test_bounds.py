import math

import numpy as np
import pytest

from lmsub import bounds as B
from lmsub import models
from lmsub.cancorr import block_sum_corr, canonical_correlation, rho_curve
from lmsub.models import Farima0d0, FarimaPdq, Fgn, Product, WhiteNoise


@pytest.mark.parametrize("model", [Farima0d0(0.1), Farima0d0(0.45), Fgn(0.7)])
def test_crude_bound_equality_at_b1(model):
    for k in (2, 5, 33):
        assert B.crude_bound(model, k, 1) == pytest.approx(canonical_correlation(model, k, 1).rho,
                                                           rel=1e-12)


def test_crude_bound_dominates():
    m = Farima0d0(0.3)
    for b in (2, 4, 8):
        for k in (b + 1, 3 * b, 20 * b):
            assert canonical_correlation(m, k, b).rho <= B.crude_bound(m, k, b)


def test_tail_max_edge_flag():
    g = np.arange(100.0)
    val, at_edge = B.tail_max(g, 3, 2)
    assert at_edge and val == 23.0
    val, at_edge = B.tail_max(Farima0d0(0.2), 3, 2)
    assert not at_edge and val == Farima0d0(0.2).autocov(4)[4]


def test_domain_errors():
    with pytest.raises(B.BoundDomainError):
        B.crude_bound(Farima0d0(0.2), 4, 4)
    with pytest.raises(B.BoundDomainError):
        B.farima_bound(0.2, 3, 3, 1.0)
    with pytest.raises(B.BoundDomainError):
        B.bw_bound(0.2, 1.0, 2, 3, 1.0, 1.0)
    with pytest.raises(B.BoundDomainError):
        B.main_bound(0.2, 10, 10, 2, models.EXPONENTIAL, 2.0, 1.0, 1.0, eps=0.1)
    with pytest.raises(B.BoundDomainError):
        B.main_bound(0.2, 10, 2, 2, models.EXPONENTIAL, 2.0, 1.0, 1.0)


def test_bound_formulas():
    assert B.farima_bound(0.25, 12, 4, 2.0) == pytest.approx(2.0 * 0.5**0.5)
    assert B.bw_bound(0.25, 2.0, 12, 4, 1.0, 3.0) == pytest.approx(
        0.5**0.5 * 2.0 + 3.0 * 16 * 8**-1.5 * 2.0)
    poly = B.main_bound(0.25, 100, 20, 4, models.POLY_BIG_O, 2.0, 1.0, 1.0)
    assert poly == pytest.approx(0.25**0.5 + 20 * 100**-2.0)
    expo = B.main_bound(0.25, 100, 20, 4, models.EXPONENTIAL, 2.0, 1.0, 1.0, c3=0.05)
    assert expo == pytest.approx(0.25**0.5 + math.exp(-5.0))


def test_kprime_rule():
    assert B.kprime_rule(4, 100) == 20
    assert B.kprime_rule(4, 10) == 9
    assert B.kprime_rule(4, 5) is None


def test_calibrate_constant_is_tight_max():
    m = Farima0d0(0.3)
    grid = [(8, 2), (32, 4), (64, 8)]
    shape = lambda k, b: B.farima_shape(0.3, k, b)  # noqa: E731
    C = B.calibrate_constant(m, 0.3, shape, grid)
    ratios = [canonical_correlation(m, k, b).rho / shape(k, b) for k, b in grid]
    assert C == pytest.approx(max(ratios), rel=1e-14)


@pytest.mark.parametrize("model", [Farima0d0(0.2), FarimaPdq(0.3, (0.4,), (0.2,)), Fgn(0.85),
                                   Product(0.25, (1.0, 0.3), decay=models.POLY_BIG_O)])
def test_bound_table_sandwich(model):
    grid = [(m * b, b) for b in (2, 4, 8) for m in (1, 2, 4, 16)]
    cal = B.calibrate_all(model, grid)
    rows = B.bound_table(model, grid, cal)
    assert len(rows) == 9  # k = b rows skipped
    for r in rows:
        assert r.sandwich_ok(), r
        assert r.regime == model.regime
        assert r.lower == pytest.approx(block_sum_corr(model, r.k, r.b))
    assert set(r.as_dict()) == set(B.COLUMNS)


def test_default_short_memory_rate():
    assert B.default_short_memory_rate(FarimaPdq(0.2, (0.5,))) == pytest.approx(math.log(2.0))
    assert B.default_short_memory_rate(Farima0d0(0.2)) == 1.0


def test_block_rules():
    assert B.block_rule("sqrt")(4096) == 64
    assert B.block_rule("sqrt")(1000) == 32
    assert B.block_rule("pow:0.7")(1024) == math.ceil(1024**0.7)
    assert B.block_rule(12)(999) == 12
    assert B.block_rule("12")(999) == 12
    for bad in ("cube", "pow:1.5"):
        with pytest.raises(ValueError):
            B.block_rule(bad)


def test_diag_white_noise_exact_value():
    n, b = 400, 20
    (row,) = B.subsampling_condition_diag(WhiteNoise(), [n], b)
    assert row.mean_rho == pytest.approx((b - 1) / n, abs=1e-15)
    assert row.max_window_rho == pytest.approx(0.0, abs=1e-15)


def test_diag_constant_rho_oracle():
    rows = B.subsampling_condition_diag(None, [100, 1000], "sqrt", rho_fn=lambda k, b: 1.0)
    for r in rows:
        assert r.mean_rho == pytest.approx(1.0, rel=1e-14)
        assert r.max_window_rho == 1.0


def test_diag_grid_envelope_upper_bounds_exact():
    m = Farima0d0(0.3)
    approx = B.subsampling_condition_diag(m, [256, 600], "sqrt")
    exact = B.subsampling_condition_diag(m, [256, 600], "sqrt", exact=True)
    for a, e in zip(approx, exact):
        assert e.mean_rho <= a.mean_rho <= 1.02 * e.mean_rho
        assert a.max_window_rho == pytest.approx(e.max_window_rho, rel=1e-13)
        assert a.b_n == e.b_n


def test_diag_exact_mean_by_hand():
    m = Fgn(0.7)
    n, b = 60, 5
    (row,) = B.subsampling_condition_diag(m, [n], b, exact=True)
    vals = rho_curve(m, np.arange(1, n + 1), b)
    assert row.mean_rho == pytest.approx(vals.mean(), rel=1e-14)
    assert row.max_window_rho == pytest.approx(vals[5:].max(), rel=1e-14)  # k >= ceil(0.1 n) = 6


def test_diag_threads_deterministic():
    m = Farima0d0(0.35)
    a = B.subsampling_condition_diag(m, [128, 256, 512], "sqrt", workers=1)
    b = B.subsampling_condition_diag(m, [128, 256, 512], "sqrt", workers=3)
    assert a == b


def test_rho_sum_white_noise():
    assert B.rho_sum(WhiteNoise(), 100, 7, k_from=0, k_to=94) == 7.0


def test_strictly_decreasing():
    assert B.strictly_decreasing([3, 2, 1])
    assert not B.strictly_decreasing([3, 3, 1])
