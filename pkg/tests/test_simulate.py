import json
import logging

import numpy as np
import pytest

from lmsub import models, simulate as S
from lmsub.models import Farima0d0, Fgn, WhiteNoise


def unit_variance(d):
    return Farima0d0(d, 1.0 / Farima0d0(d).autocov(0)[0])


def test_std_normals_open_interval_and_moments():
    z = S.std_normals(123, 200_000)
    assert np.all(np.isfinite(z))
    assert abs(z.mean()) < 0.01 and abs(z.var() - 1) < 0.01
    np.testing.assert_array_equal(z[:10], S.std_normals(123, 10))


def test_derive_seed_streams_distinct():
    seeds = {S.derive_seed(42, i) for i in range(10_000)}
    assert len(seeds) == 10_000
    assert S.derive_seed(42, 3) != S.derive_seed(43, 3)
    assert S.splitmix64(0) == 0xE220A8397B1DCDAF


def test_path_request_validation():
    with pytest.raises(ValueError):
        S.PathRequest(Farima0d0(0.2), 0, 1)
    with pytest.raises(ValueError):
        S.PathRequest(Farima0d0(0.2), 5, 1, "fft")


def test_single_draw_variance():
    m = Farima0d0(0.3)
    x = S.sampler_for(m, 1).draw_many(range(100_000))[:, 0]
    assert x.var() == pytest.approx(m.autocov(0)[0], rel=0.03)


def test_white_noise_lag1_autocorrelation():
    x = S.gen_gaussian(S.PathRequest(WhiteNoise(), 100_000, 7))
    assert abs(np.corrcoef(x[:-1], x[1:])[0, 1]) < 0.01


@pytest.mark.parametrize("method", ["cholesky", "circulant", "auto"])
def test_determinism_and_seed_independence(method):
    m = Fgn(0.8)
    n = 4096 if method != "cholesky" else 1024
    a = S.gen_gaussian(S.PathRequest(m, n, 5, method))
    b = S.gen_gaussian(S.PathRequest(m, n, 5, method))
    c = S.gen_gaussian(S.PathRequest(m, n, 6, method))
    assert a.tobytes() == b.tobytes()
    assert abs(np.corrcoef(a, c)[0, 1]) < 0.1


def test_draw_many_matches_draw():
    for method in ("cholesky", "circulant"):
        s = S.GaussianSampler(Farima0d0(0.3), 300, method)
        seeds = [S.derive_seed(1, i) for i in range(5)]
        many = s.draw_many(seeds)
        for row, seed in zip(many, seeds):
            np.testing.assert_allclose(row, s.draw(seed), rtol=0, atol=1e-12)


def test_auto_method_selection():
    assert S.GaussianSampler(Farima0d0(0.3), 1024).method == "cholesky"
    assert S.GaussianSampler(Farima0d0(0.3), 1025).method == "circulant"


def test_circulant_reproduces_covariance_exactly():
    g = Farima0d0(0.45).autocov(4 * 700)
    lam, m = S.circulant_eigenvalues(g, 700)
    assert m == 2 * 699
    c = np.fft.ifft(lam).real
    np.testing.assert_allclose(c[:700], g[:700], rtol=0, atol=1e-14)


def test_circulant_clipping_and_failure(caplog):
    g = np.array([1.0, -(1 + 5e-9), 0, 0, 0, 0, 0, 0, 0, 0])
    with caplog.at_level(logging.WARNING, logger="lmsub.simulate"):
        lam, m = S.circulant_eigenvalues(g, 2)
    assert m == 2 and lam.min() == 0.0
    assert "clipping" in caplog.text
    g = np.r_[1.0, -1.1, np.zeros(40)]
    with pytest.raises(S.EmbeddingError):
        S.circulant_eigenvalues(g, 2)


def test_auto_falls_back_to_cholesky(monkeypatch):
    def fail(*a, **k):
        raise S.EmbeddingError("forced")
    monkeypatch.setattr(S, "circulant_eigenvalues", fail)
    assert S.GaussianSampler(Farima0d0(0.2), 2000, "auto").method == "cholesky"
    with pytest.raises(S.EmbeddingError):
        S.GaussianSampler(Farima0d0(0.2), 2000, "circulant")


def test_cholesky_and_circulant_agree_in_distribution():
    m = Farima0d0(0.25)
    reps = 500
    A = S.sample_autocov_known_mean(
        S.GaussianSampler(m, 512, "cholesky").draw_many([S.derive_seed(1, i) for i in range(reps)]), 3)
    B = S.sample_autocov_known_mean(
        S.GaussianSampler(m, 512, "circulant").draw_many([S.derive_seed(2, i) for i in range(reps)]), 3)
    z = (A.mean(0) - B.mean(0)) / np.sqrt(A.var(0, ddof=1) / reps + B.var(0, ddof=1) / reps)
    assert np.all(np.abs(z) < 4)


def test_identity_subordination_is_gaussian_path():
    req = S.PathRequest(Fgn(0.7), 300, 11)
    np.testing.assert_array_equal(S.gen_subordinated(req, models.IDENTITY), S.gen_gaussian(req))


def test_square_subordination_decay_exponent():
    m = unit_variance(0.4)
    X = S.sampler_for(m, 8192).draw_many([S.derive_seed(1, i) for i in range(200)]) ** 2 - 1
    lags = np.unique(np.geomspace(50, 500, 12).astype(int))
    ac = [np.mean(np.einsum("ij,ij->i", X[:, :-h], X[:, h:]) / (8192 - h)) for h in lags]
    slope = np.polyfit(np.log(lags), np.log(ac), 1)[0]
    assert slope == pytest.approx(2 * (2 * 0.4 - 1), abs=0.15)


def test_square_subordination_short_memory_partial_sums():
    m = unit_variance(0.1)
    X = S.sampler_for(m, 4096).draw_many([S.derive_seed(2, i) for i in range(500)]) ** 2 - 1
    ns = [256, 512, 1024, 2048, 4096]
    v = [np.var(X[:, :n].sum(axis=1)) for n in ns]
    assert np.polyfit(np.log(ns), np.log(v), 1)[0] == pytest.approx(1.0, abs=0.15)


def test_stochvol_constant_volatility_is_iid_noise():
    x = S.gen_stochvol(Farima0d0(0.3), models.ONE, models.IDENTITY, 1000, 9)
    np.testing.assert_array_equal(x, S.std_normals(S.derive_seed(9, 1), 1000))


def test_stochvol_uncorrelated_levels():
    x = S.gen_stochvol(Farima0d0(0.2), np.exp, lambda z: z, 65536, 5)
    assert abs(np.corrcoef(x[:-1], x[1:])[0, 1]) < 0.02


def test_stochvol_squares_correlated():
    r = []
    for i in range(100):
        x = S.gen_stochvol(Farima0d0(0.35), np.exp, lambda z: z, 4096, S.derive_seed(9, i)) ** 2
        r.append(np.corrcoef(x[:-1], x[1:])[0, 1])
    r = np.array(r)
    assert r.mean() > 3 * r.std(ddof=1) / np.sqrt(r.size)


def test_stochvol_centering_check():
    with pytest.raises(S.CenteringError):
        S.gen_stochvol(Farima0d0(0.3), np.exp, lambda z: z**2, 100, 1)


def test_csv_round_trip(tmp_path):
    x = S.gen_gaussian(S.PathRequest(Farima0d0(0.3), 50, 3))
    out = tmp_path / "path.csv"
    header = {"model": Farima0d0(0.3).to_dict(), "seed": 3, "method": "auto"}
    S.write_path_csv(x, out, header)
    first = out.read_text().splitlines()[0]
    assert json.loads(first[2:]) == header
    np.testing.assert_array_equal(S.read_series_csv(out), x)
    with pytest.raises(FileExistsError):
        S.write_path_csv(x, out, header)
    S.write_path_csv(x[:3], out, header, overwrite=True)
    assert S.read_series_csv(out).size == 3
