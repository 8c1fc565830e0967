import warnings

import numpy as np
from hypothesis import HealthCheck, given, settings
from hypothesis import strategies as st

import oracles
from lmsub import bounds as B
from lmsub import cancorr as C
from lmsub import cli
from lmsub import subsample as U
from lmsub import toeplitz as T
from lmsub.models import Farima0d0, Fgn

ds = st.floats(0.02, 0.48)
fast = settings(max_examples=40, deadline=None, suppress_health_check=[HealthCheck.too_slow])


def window_values(x, b, stat):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", U.DegenerateWarning)
        return U.sliding_blocks_eval(x, b, stat).values


def series(min_size=8, max_size=80):
    return st.lists(st.floats(-1e3, 1e3, allow_nan=False, allow_infinity=False),
                    min_size=min_size, max_size=max_size).map(np.array)


@fast
@given(d=ds, b=st.integers(1, 12), gap=st.integers(1, 60))
def test_rho_sandwich(d, b, gap):
    m = Farima0d0(d)
    k = b + gap
    rho = C.canonical_correlation(m, k, b).rho
    assert 0.0 <= rho <= 1.0
    assert C.block_sum_corr(m, k, b) <= rho + 1e-12
    assert C.canonical_correlation(m, k, 1).rho <= rho + 1e-12
    assert rho <= B.crude_bound(m, k, b) * (1 + 1e-12)


@fast
@given(H=st.floats(0.52, 0.98), b=st.integers(1, 10), k=st.integers(1, 80),
       scale=st.floats(1e-3, 1e3))
def test_rho_scale_free(H, b, k, scale):
    r1 = C.rho_curve(Fgn(H), [k], b)[0]
    r2 = C.rho_curve(Fgn(H, sigma2=scale), [k], b)[0]
    assert abs(r1 - r2) <= 1e-10


@fast
@given(d=ds, b=st.integers(1, 60))
def test_levinson_closed_form(d, b):
    np.testing.assert_allclose(T.levinson_predictor(Farima0d0(d), b).phi,
                               T.farima_predictor_closed_form(d, b), rtol=1e-9)


@fast
@given(d=ds, b=st.integers(1, 30), ahead=st.integers(1, 30))
def test_multistep_coefficients_positive(d, b, ahead):
    phi = T.multistep_predictor(Farima0d0(d), b, b + ahead).phi
    assert np.all(phi > 0)


@settings(max_examples=15, deadline=None)
@given(d=ds, b=st.integers(2, 6), ahead=st.integers(1, 6))
def test_multistep_recursive_oracle(d, b, ahead):
    m = Farima0d0(d)
    n = b + ahead
    np.testing.assert_allclose(T.multistep_predictor(m, b, n).phi,
                               oracles.multistep_recursive(m.autocov(n), b, n), rtol=1e-8)


@fast
@given(x=series(1, 50))
def test_ecdf_galois_and_monotone(x):
    d = U.SubsampleDistribution(np.sort(x, kind="stable"), 1, x.size)
    for q in np.linspace(0, 1, 101):
        assert d.ecdf(d.quantile(q)) >= q - 1e-12
    grid = np.linspace(x.min() - 1, x.max() + 1, 50)
    F = d.ecdf(grid)
    assert np.all(np.diff(F) >= 0) and F[0] == 0.0 and F[-1] == 1.0


@fast
@given(x=series(), b=st.integers(3, 8), c=st.sampled_from([1e-3, 1.0, 1e3]))
def test_sn_mean_scale_invariance(x, b, c):
    st_ = U.BlockStatistic("sn_mean")
    v1 = window_values(x, b, st_)
    v2 = window_values(c * x, b, st_)
    assert np.all(np.abs(v1 - v2) <= 1e-12 * np.maximum(1.0, np.abs(v1)))


@fast
@given(x=series(), b=st.integers(4, 8), m=st.integers(0, 2), c=st.sampled_from([1e-3, 1e3]))
def test_sn_autocov_scale_invariance(x, b, m, c):
    st_ = U.BlockStatistic("sn_autocov", m=m)
    v1 = window_values(x, b, st_)
    v2 = window_values(c * x, b, st_)
    assert np.all(np.abs(v1 - v2) <= 1e-12 * np.maximum(1.0, np.abs(v1)))


@fast
@given(x=st.lists(st.integers(-1000, 1000), min_size=8, max_size=80).map(np.array),
       b=st.integers(3, 8), shift=st.integers(-100, 100))
def test_sn_mean_location(x, b, shift):
    st_ = U.BlockStatistic("sn_mean")
    v1 = window_values(x.astype(float), b, st_)
    v2 = window_values(x + float(shift), b, st_)
    np.testing.assert_allclose(v1, v2, rtol=1e-8, atol=1e-8)


@fast
@given(x=series(10, 60), b=st.integers(2, 10), level=st.floats(0.05, 0.99))
def test_band_is_valid(x, b, level):
    band = U.ecdf_band(x, b, level)
    assert np.all((0 <= band.lower) & (band.lower <= band.upper) & (band.upper <= 1))
    assert np.all(np.diff(band.lower) >= 0) and np.all(np.diff(band.upper) >= 0)


@fast
@given(x=series(10, 60), b=st.integers(2, 9), level=st.floats(0.05, 0.95))
def test_ci_endpoints_ordered(x, b, level):
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", U.DegenerateWarning)
        ci = U.subsample_ci(x, b, "sn_mean", level)
    assert ci.lower <= ci.upper


@fast
@given(n=st.lists(st.integers(1, 10**6), max_size=4), seed=st.integers(0, 2**63),
       rule=st.sampled_from(["sqrt", "pow:0.3", "pow:0.7", 16]), reps=st.integers(1, 10**4))
def test_config_round_trip(n, seed, rule, reps):
    cfg = cli.ExperimentConfig.from_dict({"command": "coverage", "n": n, "seed": seed,
                                          "block_rule": rule, "reps": reps,
                                          "model": {"family": "farima0d0", "d": 0.3}})
    assert cli.ExperimentConfig.from_dict(cfg.to_dict()) == cfg
