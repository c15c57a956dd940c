import math
import numpy as np
import pytest
from pytest import raises
from scipy import integrate, stats
from .distributions import (EquicorrelatedModel, TStatistic, capped_t, central_t_logpdf,
                            noncentral_t_logpdf, one_sample_t, sample_equicorrelated, T_CAP)
from .errors import ConfigError, InputError
from .test_fixtures import rng


def reference_noncentral_pdf(t, nu, mu):
    "noncentral t density as a mixture over the chi distributed scale"
    def integrand(s):
        return stats.norm.pdf(t * s / math.sqrt(nu) - mu) * s / math.sqrt(nu) * stats.chi.pdf(s, nu)
    points = [mu * math.sqrt(nu) / t] if t != 0 and 0 < mu * math.sqrt(nu) / t < 60 else None
    value, _ = integrate.quad(integrand, 0, 60, points=points, epsabs=0, epsrel=1e-12, limit=400)
    return value


@pytest.mark.parametrize("lam", [1, 5, 30])
@pytest.mark.parametrize("mu", [0.0, 1.0, 3.0])
def test_noncentral_matches_quadrature_oracle(lam, mu):
    for t in (-3.0, -0.5, 0.0, 0.7, 2.5, 6.0):
        expected = reference_noncentral_pdf(t, lam, mu)
        got = math.exp(noncentral_t_logpdf(t, lam, mu))
        assert got == pytest.approx(expected, rel=1e-8)


@pytest.mark.parametrize("lam", [1, 5, 30])
@pytest.mark.parametrize("mu", [0.0, 1.0, 3.0])
def test_noncentral_integrates_to_one(lam, mu):
    def pdf(t):
        return math.exp(noncentral_t_logpdf(t, lam, mu))
    left, _ = integrate.quad(pdf, -np.inf, 0, limit=400)
    right, _ = integrate.quad(pdf, 0, np.inf, limit=400)
    assert left + right == pytest.approx(1.0, abs=1e-6)


@pytest.mark.parametrize("lam", [1, 5, 30])
@pytest.mark.parametrize("mu", [0.5, 3.0, 12.0])
def test_noncentral_reflection_symmetry(lam, mu):
    t = np.array([-9.0, -1.0, 0.7, 4.0])
    np.testing.assert_allclose(noncentral_t_logpdf(t, lam, mu), noncentral_t_logpdf(-t, lam, -mu),
                               rtol=1e-9, atol=1e-9)


def test_noncentral_with_zero_mu_is_central():
    t = np.linspace(-8, 8, 33)
    for lam in (1, 4, 50):
        np.testing.assert_allclose(noncentral_t_logpdf(t, lam, 0.0), central_t_logpdf(t, lam), rtol=1e-12, atol=1e-12)


def test_central_matches_scipy():
    t = np.linspace(-20, 20, 41)
    for lam in (1, 3, 99):
        np.testing.assert_allclose(central_t_logpdf(t, lam), stats.t.logpdf(t, lam), rtol=1e-12)


def test_noncentral_vectorized_matches_scalar():
    t = np.array([-4.0, -1.0, 0.0, 2.0, 9.0])
    mu = np.array([0.5, 2.0, 1.0, 3.0, 4.0])
    vec = noncentral_t_logpdf(t, 7, mu)
    assert vec.shape == (5,)
    for i in range(5):
        assert vec[i] == pytest.approx(noncentral_t_logpdf(t[i], 7, mu[i]), rel=1e-14)
    assert isinstance(noncentral_t_logpdf(1.0, 3, 1.0), float)


def test_noncentral_far_tail_is_finite():
    "large positive t*mu needs many series terms, large negative uses quadrature"
    for t, mu in ((60.0, 12.0), (-60.0, 12.0), (1e4, 5.0), (-1e4, 5.0)):
        value = noncentral_t_logpdf(t, 9, mu)
        assert np.isfinite(value)


def test_invalid_degrees_of_freedom():
    with raises(InputError):
        central_t_logpdf(1.0, 0.5)
    with raises(InputError):
        noncentral_t_logpdf(1.0, 0, 1.0)
    with raises(InputError):
        noncentral_t_logpdf(np.nan, 3, 1.0)


def test_capped_t_zero_variance():
    t, degenerate = capped_t([2.0, -1.0, 0.0, 1.0], [0.0, 0.0, 0.0, 1.0], 4)
    assert t.tolist() == [T_CAP, -T_CAP, 0.0, 2.0]
    assert degenerate.tolist() == [True, True, True, False]


def test_one_sample_t():
    ys = [1.0, 2.0, 3.0, 4.0]
    stat = one_sample_t(ys)
    expected = np.mean(ys) / (np.std(ys, ddof=1) / 2.0)
    assert stat.t == pytest.approx(expected)
    assert stat.n_t == 4 and stat.lam == 3
    assert not stat.degenerate

    constant = one_sample_t([1.5, 1.5, 1.5])
    assert constant.degenerate
    assert constant.t == T_CAP

    ys = [0.3, 1.2, 0.8, 1.1]
    mean = sum(ys) / 4
    sd = math.sqrt(sum((y - mean) ** 2 for y in ys) / 3)
    assert one_sample_t(ys).t == pytest.approx(mean / (sd / 2.0), rel=1e-12)
    assert one_sample_t([1.0, -1.0]).t == 0.0
    assert not one_sample_t([1.0, -1.0]).degenerate

    with raises(InputError):
        one_sample_t([1.0])
    with raises(InputError):
        TStatistic(t=0.0, n_t=1)


def test_equicorrelated_model_validation():
    with raises(ConfigError):
        EquicorrelatedModel(m=2, rho=1.0, mu=(0.0, 0.0))
    with raises(ConfigError):
        EquicorrelatedModel(m=3, rho=0.2, mu=(0.0, 0.0))
    model = EquicorrelatedModel.shifted(5, 2, 1.5, 0.3)
    assert model.mu == (0.0, 0.0, 0.0, 1.5, 1.5)
    cov = model.covariance
    assert np.all(np.diag(cov) == 1.0)
    assert cov[0, 4] == 0.3


def test_sample_equicorrelated_moments(rng):
    "400,000 draws keep the diagonal error near 4.5 standard errors from 0.01"
    model = EquicorrelatedModel.shifted(5, 2, 1.0, 0.6)
    draws = sample_equicorrelated(model, rng, size=400_000)
    assert draws.shape == (400_000, 5)
    np.testing.assert_allclose(draws.mean(axis=0), model.mean, atol=0.01)
    np.testing.assert_allclose(np.cov(draws, rowvar=False), model.covariance, atol=0.01)
    single = sample_equicorrelated(model, rng)
    assert single.shape == (5,)


def test_sample_equicorrelated_centered_means(rng):
    model = EquicorrelatedModel.shifted(5, 0, 0.0, 0.6)
    n = 100_000
    draws = sample_equicorrelated(model, rng, size=n)
    # a coordinate mean has variance 1/n, shared term included
    assert np.all(np.abs(draws.mean(axis=0)) <= 4 / math.sqrt(n))


def test_sample_equicorrelated_is_exchangeable(rng):
    model = EquicorrelatedModel(m=5, rho=0.6, mu=(0.7,) * 5)
    n = 100_000
    draws = sample_equicorrelated(model, rng, size=n)
    # every coordinate has mean rank (m - 1) / 2 with per-row variance (m^2 - 1) / 12
    ranks = draws.argsort(axis=1).argsort(axis=1)
    np.testing.assert_allclose(ranks.mean(axis=0), 2.0, atol=5 * math.sqrt(2.0 / n))
    cov = np.cov(draws, rowvar=False)
    off = cov[~np.eye(5, dtype=bool)]
    assert off.max() - off.min() < 0.03
    np.testing.assert_allclose(np.diag(cov), 1.0, atol=0.03)


def test_sample_equicorrelated_is_seeded():
    model = EquicorrelatedModel.shifted(6, 3, 1.0, 0.2)
    a = sample_equicorrelated(model, 11, size=5)
    b = sample_equicorrelated(model, 11, size=5)
    assert np.array_equal(a, b)
