"""Numeric kernels: Student t log-densities (central and noncentral), the
one-sample t statistic and equicorrelated normal sampling.

All densities are evaluated in log space. The noncentral density is written as

    f(t | lam, mu) = C(lam) exp(-mu^2/2) * I(lam, lam + t^2, t*mu)
    I(nu, a, b)    = int_0^inf s^nu exp(-a s^2/2 + b s) ds

`I` is summed as a positive power series when b >= 0 and integrated with a
composite Gauss-Legendre rule around its mode when b < 0 (the series
alternates there and cancels catastrophically).
"""
import logging
from dataclasses import dataclass
from typing import Optional, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

from .errors import ConfigError, InputError, NumericalError
from .typing import Vector

T_CAP = 1e6  # |t| ceiling for zero-variance samples

# power series
SERIES_TOL = 1e-14
SERIES_CHUNK = 64
SERIES_MAX_TERMS = 250_000

# composite quadrature for the alternating side
_PANELS = 20
_PANEL_NODES = 24
_SPAN = 40.0  # half-width of the integration window in local scale units
_BLOCK = 2048  # elements integrated per numpy block
_GL_X, _GL_W = leggauss(_PANEL_NODES)

_LOG_2PI = np.log(2.0 * np.pi)


def _as_result(values: np.ndarray) -> Union[float, np.ndarray]:
    "unbox 0-d results so scalar calls get scalars back"
    return values.item() if values.ndim == 0 else values


@dataclass(frozen=True)
class TStatistic:
    "one-sample t statistic with its effective sample size"
    t: float
    n_t: int
    degenerate: bool = False  # zero sample variance, t capped

    def __post_init__(self):
        if self.n_t < 2:
            raise InputError(f"t statistic needs n_t >= 2, got {self.n_t}")

    @property
    def lam(self) -> int:
        "degrees of freedom"
        return self.n_t - 1


@dataclass(frozen=True)
class EquicorrelatedModel:
    "N(mu, V) with unit variances and every off-diagonal equal to rho"
    m: int
    rho: float
    mu: tuple[float, ...]

    def __post_init__(self):
        if self.m < 1:
            raise ConfigError(f"dimension m must be positive, got {self.m}")
        if not 0.0 <= self.rho < 1.0:
            raise ConfigError(f"rho must be in [0, 1), got {self.rho}")
        if len(self.mu) != self.m:
            raise ConfigError(f"mean vector has {len(self.mu)} entries, expected {self.m}")
        if not np.all(np.isfinite(self.mu)):
            raise ConfigError("mean vector must be finite")

    @classmethod
    def shifted(cls, m: int, n_false: int, mu_alt: float, rho: float) -> 'EquicorrelatedModel':
        "mean (0,...,0, mu_alt,...,mu_alt) with the last n_false coordinates shifted"
        if not 0 <= n_false <= m:
            raise ConfigError(f"n_false must be in [0, {m}], got {n_false}")
        mu = (0.0,) * (m - n_false) + (float(mu_alt),) * n_false
        return cls(m=m, rho=float(rho), mu=mu)

    @property
    def mean(self) -> np.ndarray:
        return np.asarray(self.mu, dtype=float)

    @property
    def covariance(self) -> np.ndarray:
        cov = np.full((self.m, self.m), self.rho)
        np.fill_diagonal(cov, 1.0)
        return cov


def capped_t(mean, sd, n, t_cap: float = T_CAP) -> tuple[np.ndarray, np.ndarray]:
    """Vectorized t = mean / (sd / sqrt(n)).

    Zero or vanishing sd yields sign(mean) * t_cap and a degenerate flag; a
    zero mean with zero sd gives t = 0.
    """
    mean = np.asarray(mean, dtype=float)
    sd = np.asarray(sd, dtype=float)
    n = np.asarray(n, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = mean / (sd / np.sqrt(n))
    degenerate = ~np.isfinite(t) | (np.abs(t) > t_cap)
    t = np.where(degenerate, np.sign(mean) * t_cap, t)
    return t, degenerate


def one_sample_t(ys: Vector, t_cap: float = T_CAP) -> TStatistic:
    "one-sample t statistic against mean 0 with the n-1 standard deviation"
    ys = np.asarray(ys, dtype=float)
    if ys.ndim != 1 or ys.size < 2:
        raise InputError(f"one-sample t needs at least 2 observations, got {ys.size}")
    if not np.all(np.isfinite(ys)):
        raise InputError("observations must be finite")
    t, degenerate = capped_t(ys.mean(), ys.std(ddof=1), ys.size, t_cap)
    if degenerate:
        logging.warning(f"zero sample variance over {ys.size} observations, t capped at {float(t)}")
    return TStatistic(t=float(t), n_t=int(ys.size), degenerate=bool(degenerate))


def _check_lam(lam: np.ndarray) -> None:
    if np.any(lam < 1) or not np.all(np.isfinite(lam)):
        raise InputError("degrees of freedom must be >= 1")


def central_t_logpdf(t, lam) -> Union[float, np.ndarray]:
    "log density of Student's t with lam degrees of freedom"
    t, lam = np.broadcast_arrays(np.asarray(t, dtype=float), np.asarray(lam, dtype=float))
    _check_lam(lam)
    out = (special.gammaln(0.5 * (lam + 1.0)) - special.gammaln(0.5 * lam)
           - 0.5 * (np.log(lam) + np.log(np.pi))
           - 0.5 * (lam + 1.0) * np.log1p(t * t / lam))
    return _as_result(out)


def noncentral_t_logpdf(t, lam, mu) -> Union[float, np.ndarray]:
    """Log density of the noncentral t with lam degrees of freedom and
    noncentrality mu. Vectorized over broadcastable inputs.

    Raises:
        InputError: lam < 1, non-finite mu or t.
        NumericalError: the power series did not converge.
    """
    t, lam, mu = np.broadcast_arrays(np.asarray(t, dtype=float),
                                     np.asarray(lam, dtype=float),
                                     np.asarray(mu, dtype=float))
    _check_lam(lam)
    if not (np.all(np.isfinite(mu)) and np.all(np.isfinite(t))):
        raise InputError("t and mu must be finite")

    shape = t.shape
    t, lam, mu = t.ravel(), lam.ravel(), mu.ravel()
    a = lam + t * t
    b = t * mu

    log_i = np.empty_like(t)
    pos = b >= 0
    if pos.any():
        log_i[pos] = _log_moment_series(lam[pos], a[pos], b[pos])
    if (~pos).any():
        log_i[~pos] = _log_moment_quadrature(lam[~pos], a[~pos], b[~pos])

    log_c = (np.log(2.0) + 0.5 * lam * np.log(lam) - 0.5 * _LOG_2PI
             - 0.5 * lam * np.log(2.0) - special.gammaln(0.5 * lam))
    out = log_c - 0.5 * mu * mu + log_i
    return _as_result(out.reshape(shape))


def _log_moment_series(nu: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log I(nu, a, b) for b >= 0 as

        1/2 (2/a)^((nu+1)/2) sum_j Gamma((nu+j+1)/2) / j! * x^j,  x = b sqrt(2/a)

    Terms are accumulated chunk by chunk with logsumexp. The term ratio is
    decreasing in j, so once it drops below one the remaining tail is bounded
    by a geometric series; an element stops when that bound falls below
    SERIES_TOL of its running sum.
    """
    x = b * np.sqrt(2.0 / a)
    with np.errstate(divide="ignore"):
        log_x = np.log(x)
    total = np.full(nu.shape, -np.inf)
    active = np.ones(nu.shape, dtype=bool)
    log_tol = np.log(SERIES_TOL)

    start = 0
    while active.any():
        if start >= SERIES_MAX_TERMS:
            worst = np.flatnonzero(active)[:5]
            raise NumericalError(
                f"noncentral t series did not converge after {SERIES_MAX_TERMS} terms "
                f"(nu={nu[worst].tolist()}, x={x[worst].tolist()})")
        idx = np.flatnonzero(active)
        j = np.arange(start, start + SERIES_CHUNK, dtype=float)
        nu_i = nu[idx, None]
        with np.errstate(invalid="ignore"):
            power = np.where(j == 0, 0.0, j * log_x[idx, None])
        terms = special.gammaln(0.5 * (nu_i + j + 1.0)) - special.gammaln(j + 1.0) + power
        total[idx] = np.logaddexp(total[idx], special.logsumexp(terms, axis=1))

        j_next = start + SERIES_CHUNK
        log_ratio = (special.gammaln(0.5 * (nu[idx] + j_next + 1.0))
                     - special.gammaln(0.5 * (nu[idx] + j_next))
                     - np.log(j_next) + log_x[idx])
        with np.errstate(divide="ignore"):
            log_tail = terms[:, -1] + log_ratio - np.log1p(-np.exp(np.minimum(log_ratio, -1e-300)))
        done = (log_ratio < 0) & (log_tail < total[idx] + log_tol)
        active[idx[done]] = False
        start = j_next

    if start > 10 * SERIES_CHUNK:
        logging.debug(f"noncentral t series used {start} terms (max x={x.max():.3g})")
    return np.log(0.5) + 0.5 * (nu + 1.0) * np.log(2.0 / a) + total


def _log_moment_quadrature(nu: np.ndarray, a: np.ndarray, b: np.ndarray) -> np.ndarray:
    """log I(nu, a, b) by composite Gauss-Legendre over a window of _SPAN local
    scales on each side of the integrand's mode (clipped at 0). The integrand
    is log-concave, so the window captures all mass to double precision."""
    root = np.sqrt(b * b + 4.0 * a * nu)
    with np.errstate(divide="ignore", invalid="ignore"):
        mode = np.where(b < 0, 2.0 * nu / (root - b), (b + root) / (2.0 * a))
    scale = 1.0 / np.sqrt(nu / (mode * mode) + a)
    log_peak = nu * np.log(mode) - 0.5 * a * mode * mode + b * mode

    out = np.empty_like(nu)
    grid = np.linspace(0.0, 1.0, _PANELS + 1)
    for lo_i in range(0, nu.size, _BLOCK):
        sl = slice(lo_i, lo_i + _BLOCK)
        lo = np.maximum(mode[sl] - _SPAN * scale[sl], 0.0)
        hi = mode[sl] + _SPAN * scale[sl]
        edges = lo[:, None] + (hi - lo)[:, None] * grid
        left, width = edges[:, :-1], np.diff(edges, axis=1)
        s = left[..., None] + width[..., None] * (0.5 * (_GL_X + 1.0))
        w = width[..., None] * (0.5 * _GL_W)
        log_f = (nu[sl, None, None] * np.log(s) - 0.5 * a[sl, None, None] * s * s
                 + b[sl, None, None] * s - log_peak[sl, None, None])
        total = np.sum(w * np.exp(log_f), axis=(1, 2))
        out[sl] = log_peak[sl] + np.log(total)

    if not np.all(np.isfinite(out)):
        raise NumericalError(f"noncentral t quadrature produced non-finite values for nu={nu[~np.isfinite(out)][:5].tolist()}")
    return out


def sample_equicorrelated(model: EquicorrelatedModel,
                          rng: Optional[Union[np.random.Generator, int]] = None,
                          size: Optional[int] = None) -> np.ndarray:
    """Draw mu + sqrt(rho) z0 1 + sqrt(1-rho) z.

    Args:
        model: mean vector and common correlation.
        rng: a numpy Generator (or a seed); one per thread of execution.
        size: number of independent subject vectors. None returns a single
        m-vector, otherwise a (size, m) array, one subject per row.
    """
    rng = np.random.default_rng(rng)
    shared_shape = () if size is None else (size, 1)
    own_shape = (model.m,) if size is None else (size, model.m)
    shared = rng.standard_normal(shared_shape)
    own = rng.standard_normal(own_shape)
    return model.mean + np.sqrt(model.rho) * shared + np.sqrt(1.0 - model.rho) * own
