"""Elementary e-processes, e-merging, e-to-p conversion and local e-tests.

Three families are supported, all for H_i: mu_i <= 0 under the natural
filtration (one observation per hypothesis per time step):

- gaussian_lr: exp(delta * sum(y) - n delta^2 / 2), unit variance known.
- t_lr: ratio of noncentral to central t densities of the running one-sample
  t statistic, noncentrality sqrt(n) * delta, n - 1 degrees of freedom.
- mom: t_lr integrated over a moment prior on delta (bumps at +-delta_min),
  by fixed Gauss-Legendre quadrature.

Every e-value is carried as its logarithm; exponentiation clamps at
exp(LOG_E_MAX).
"""
import logging
from dataclasses import asdict, dataclass, fields, replace
from functools import lru_cache
from typing import Optional, Sequence, Union

import numpy as np
from numpy.polynomial.legendre import leggauss
from scipy import special

from .distributions import T_CAP, capped_t, central_t_logpdf, noncentral_t_logpdf
from .errors import ConfigError, InputError
from .typing import EValue, LogEValue, Matrix, Vector

LOG_E_MAX = 700.0
FAMILIES = ("gaussian_lr", "t_lr", "mom")
PRIOR_SIDES = ("one_sided", "two_sided")
PRIOR_SPAN = 6.0  # quadrature support, in units of delta_min
MIN_NODES = 16

Prior = tuple[np.ndarray, np.ndarray]  # (deltas, normalized weights)


def check_alpha(alpha: float) -> float:
    "alpha must lie strictly between 0 and 1"
    if not 0.0 < alpha < 1.0:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")
    return float(alpha)


@dataclass(frozen=True)
class EProcessFamily:
    "which e-process to run for every elementary hypothesis, and its parameters"
    kind: str = "mom"
    delta: float = 0.5  # gaussian_lr, t_lr
    delta_min: float = 0.5  # mom
    quadrature_nodes: int = 64  # mom
    prior_sides: str = "one_sided"  # mom
    t_cap: float = T_CAP

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if self.kind not in FAMILIES:
            raise ConfigError(f"unknown e-process family {self.kind!r}, expected one of {FAMILIES}")
        if self.kind in ("gaussian_lr", "t_lr") and not self.delta > 0:
            raise ConfigError(f"{self.kind} needs delta > 0, got {self.delta}")
        if self.kind == "mom":
            if not self.delta_min > 0:
                raise ConfigError(f"mom needs delta_min > 0, got {self.delta_min}")
            if self.quadrature_nodes < MIN_NODES:
                raise ConfigError(f"mom needs at least {MIN_NODES} quadrature nodes, got {self.quadrature_nodes}")
            if self.prior_sides not in PRIOR_SIDES:
                raise ConfigError(f"prior_sides must be one of {PRIOR_SIDES}, got {self.prior_sides!r}")
        if not self.t_cap > 0:
            raise ConfigError(f"t_cap must be positive, got {self.t_cap}")

    def to_dict(self) -> dict:
        return asdict(self)

    @classmethod
    def from_dict(cls, data: dict) -> 'EProcessFamily':
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ConfigError(f"unknown e-process family keys: {sorted(unknown)}")
        return cls(**data)

    def prior(self) -> Prior:
        "quadrature prior used by the mom family"
        return mom_prior(self.delta_min, self.quadrature_nodes, self.prior_sides)


@dataclass(frozen=True)
class ElementaryState:
    "running state of one elementary e-process"
    n: int = 0  # observations consumed
    sum: float = 0.0
    sumsq: float = 0.0
    log_e: LogEValue = 0.0
    degenerate: bool = False  # last t statistic hit zero variance

    @property
    def e_value(self) -> EValue:
        return float(np.exp(min(self.log_e, LOG_E_MAX)))

    @property
    def variance(self) -> float:
        "sample variance (n - 1 denominator), 0 when undefined"
        if self.n < 2:
            return 0.0
        return max((self.sumsq - self.sum * self.sum / self.n) / (self.n - 1), 0.0)


@dataclass(frozen=True)
class PProcessSeries:
    "time-indexed p-values in (0, 1], nonincreasing"
    values: np.ndarray


@lru_cache(maxsize=32)
def mom_prior(delta_min: float, nodes: int = 64, sides: str = "one_sided") -> Prior:
    """Moment prior pi(delta) ~ delta^2 exp(-delta^2 / (2 delta_min^2)) on
    Gauss-Legendre nodes over (0, 6 delta_min] (one_sided) or
    [-6 delta_min, 6 delta_min] (two_sided), normalized on the nodes."""
    if not delta_min > 0:
        raise ConfigError(f"delta_min must be positive, got {delta_min}")
    if nodes < 1:
        raise ConfigError(f"need at least one quadrature node, got {nodes}")
    if sides not in PRIOR_SIDES:
        raise ConfigError(f"prior sides must be one of {PRIOR_SIDES}, got {sides!r}")
    x, w = leggauss(nodes)
    hi = PRIOR_SPAN * delta_min
    if sides == "one_sided":
        deltas, weights = 0.5 * (x + 1.0) * hi, 0.5 * hi * w
    else:
        deltas, weights = x * hi, hi * w
    weights = weights * deltas ** 2 * np.exp(-deltas ** 2 / (2.0 * delta_min ** 2))
    weights = weights / weights.sum()
    deltas.setflags(write=False)
    weights.setflags(write=False)
    return deltas, weights


def log_t_lr(t, n_t, lam, delta) -> Union[float, np.ndarray]:
    "log of L(t | sqrt(n_t) delta, lam) / L(t | 0, lam); vectorized"
    t, n_t, lam, delta = np.broadcast_arrays(np.asarray(t, dtype=float),
                                             np.asarray(n_t, dtype=float),
                                             np.asarray(lam, dtype=float),
                                             np.asarray(delta, dtype=float))
    if np.any(n_t < 2):
        raise InputError("t likelihood ratio needs n_t >= 2")
    if np.any(lam < 1):
        raise InputError("t likelihood ratio needs lambda >= 1")
    mu = np.sqrt(n_t) * delta
    diff = np.asarray(noncentral_t_logpdf(t, lam, mu)) - np.asarray(central_t_logpdf(t, lam))
    # null alternative: numerator and denominator are the same density
    out = np.where(mu == 0.0, 0.0, diff)
    return out.item() if out.ndim == 0 else out


def t_lr(t: float, n_t: int, lam: int, delta: float) -> EValue:
    "t likelihood ratio e-value, never 0 or inf for finite t"
    return float(np.exp(np.clip(log_t_lr(t, n_t, lam, delta), -LOG_E_MAX, LOG_E_MAX)))


class EProcessBank:
    """m elementary e-processes advanced together with numpy.

    All hypotheses consume one observation per step so they share n. The
    scalar `update_*` functions run through a bank of size one, so scalar
    and vectorized results come from the same arithmetic.
    """

    def __init__(self, m: int, family: EProcessFamily, prior: Optional[Prior] = None) -> None:
        if m < 1:
            raise InputError(f"need at least one hypothesis, got m={m}")
        self.m = m
        self.family = family
        self.n = 0
        self.sum = np.zeros(m)
        self.sumsq = np.zeros(m)
        self.log_e = np.zeros(m)
        self.degenerate = np.zeros(m, dtype=bool)
        self._prior = prior if prior is not None else (family.prior() if family.kind == "mom" else None)
        if self._prior is not None:
            deltas, weights = (np.asarray(p, dtype=float) for p in self._prior)
            if deltas.shape != weights.shape or deltas.ndim != 1 or deltas.size == 0:
                raise ConfigError("prior needs matching 1-d delta and weight arrays")
            with np.errstate(divide="ignore"):
                self._log_weights = np.log(weights)
            self._deltas = deltas

    def __repr__(self) -> str:
        return f"<EProcessBank {self.family.kind} m={self.m} n={self.n}>"

    @classmethod
    def from_states(cls, states: Sequence[ElementaryState], family: EProcessFamily,
                    prior: Optional[Prior] = None) -> 'EProcessBank':
        "rebuild a bank from persisted per-hypothesis states"
        if not states:
            raise InputError("cannot rebuild a bank from zero states")
        counts = {s.n for s in states}
        if len(counts) != 1:
            raise InputError(f"states disagree on observation count: {sorted(counts)}")
        bank = cls(len(states), family, prior)
        bank.n = counts.pop()
        bank.sum = np.array([s.sum for s in states], dtype=float)
        bank.sumsq = np.array([s.sumsq for s in states], dtype=float)
        bank.log_e = np.array([s.log_e for s in states], dtype=float)
        bank.degenerate = np.array([s.degenerate for s in states], dtype=bool)
        return bank

    def states(self) -> list[ElementaryState]:
        return [ElementaryState(n=self.n, sum=float(s), sumsq=float(q), log_e=float(le), degenerate=bool(d))
                for s, q, le, d in zip(self.sum, self.sumsq, self.log_e, self.degenerate)]

    def e_values(self) -> np.ndarray:
        return np.exp(np.minimum(self.log_e, LOG_E_MAX))

    def update(self, row: Vector) -> np.ndarray:
        """Consume one observation per hypothesis and return the new e-values.

        Raises:
            InputError: wrong length or non-finite observations.
        """
        row = np.asarray(row, dtype=float)
        if row.shape != (self.m,):
            raise InputError(f"expected {self.m} observations, got shape {row.shape}")
        if not np.all(np.isfinite(row)):
            raise InputError(f"non-finite observation at step {self.n + 1}")

        self.n += 1
        self.sum = self.sum + row
        self.sumsq = self.sumsq + row * row

        kind = self.family.kind
        if kind == "gaussian_lr":
            delta = self.family.delta
            self.log_e = self.log_e + (delta * row - 0.5 * delta * delta)
            return self.e_values()

        # t based families: no variance estimate before the second observation
        if self.n < 2:
            self.log_e = np.zeros(self.m)
            return self.e_values()

        n = self.n
        mean = self.sum / n
        var = np.maximum((self.sumsq - self.sum * mean) / (n - 1), 0.0)
        t, degenerate = capped_t(mean, np.sqrt(var), n, self.family.t_cap)
        fresh = degenerate & ~self.degenerate
        if fresh.any():
            logging.warning(f"zero sample variance at n={n} for hypotheses "
                            f"{(np.flatnonzero(fresh) + 1).tolist()}, t capped at +-{self.family.t_cap:g}")
        self.degenerate = degenerate

        if kind == "t_lr":
            self.log_e = np.asarray(log_t_lr(t, n, n - 1, self.family.delta), dtype=float).reshape(self.m)
        else:
            per_node = log_t_lr(t[:, None], n, n - 1, self._deltas[None, :])
            self.log_e = special.logsumexp(per_node + self._log_weights[None, :], axis=1)
        return self.e_values()


def init_eprocess(family: EProcessFamily) -> ElementaryState:
    "fresh state: no data, e-value 1"
    family.validate()
    return ElementaryState()


def _step(state: ElementaryState, y: float, family: EProcessFamily,
          prior: Optional[Prior] = None) -> ElementaryState:
    if not np.isfinite(y):
        raise InputError(f"observation must be finite, got {y}")
    bank = EProcessBank.from_states([state], family, prior)
    bank.update([y])
    return bank.states()[0]


def update_gaussian_lr(state: ElementaryState, y: float, delta: float) -> ElementaryState:
    "log_e += delta * y - delta^2 / 2"
    return _step(state, y, EProcessFamily(kind="gaussian_lr", delta=delta))


def update_t_lr(state: ElementaryState, y: float, delta: float, t_cap: float = T_CAP) -> ElementaryState:
    "append y, then e-value = t_lr(t, n, n - 1, delta); 1 while n < 2"
    return _step(state, y, EProcessFamily(kind="t_lr", delta=delta, t_cap=t_cap))


def update_mom(state: ElementaryState, y: float, delta_min: float, nodes: int = 64,
               sides: str = "one_sided", prior: Optional[Prior] = None,
               t_cap: float = T_CAP) -> ElementaryState:
    """Append y, then e-value = sum_k w_k t_lr(t, n, n - 1, delta_k) over the
    moment prior nodes. `prior` replaces the quadrature (a single node
    reproduces update_t_lr)."""
    family = EProcessFamily(kind="mom", delta_min=delta_min, quadrature_nodes=nodes,
                            prior_sides=sides, t_cap=t_cap)
    return _step(state, y, family, prior)


def update(state: ElementaryState, y: float, family: EProcessFamily) -> ElementaryState:
    "advance one state with the family's update rule"
    return _step(state, y, family)


def _check_evalues(e: Vector) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    if e.size == 0:
        raise InputError("cannot merge an empty list of e-values")
    if not np.all(np.isfinite(e)) or np.any(e < 0):
        raise InputError("e-values must be finite and nonnegative")
    return e


def merge_average(e: Vector) -> EValue:
    "arithmetic mean, valid under arbitrary dependence"
    e = _check_evalues(e)
    # the mean of finite floats can drift an ulp outside [min, max]
    return float(np.clip(np.mean(e), e.min(), e.max()))


def merge_product(e: Vector) -> EValue:
    "product, valid only for independent e-values"
    return float(np.prod(_check_evalues(e)))


def local_test(e: EValue, alpha: float) -> bool:
    "reject iff e >= 1/alpha"
    alpha = check_alpha(alpha)
    if not e >= 0:
        raise InputError(f"e-value must be nonnegative, got {e}")
    return bool(e >= 1.0 / alpha)


def e_to_p_process(e_series: Vector) -> PProcessSeries:
    "p[n] = min over l <= n of min(1 / e[l], 1); e = 0 contributes 1"
    e = np.asarray(e_series, dtype=float)
    if e.ndim != 1:
        raise InputError(f"expected a 1-d e-value series, got shape {e.shape}")
    return PProcessSeries(values=e_to_p_matrix(e[:, None])[:, 0])


def e_to_p_matrix(values: np.ndarray) -> np.ndarray:
    "column-wise e_to_p_process over a (time, hypothesis) array"
    values = np.asarray(values, dtype=float)
    if values.ndim != 2:
        raise InputError(f"expected a (time, hypothesis) array, got shape {values.shape}")
    if np.any(np.isnan(values)) or np.any(values < 0):
        raise InputError("e-values must be nonnegative")
    with np.errstate(divide="ignore"):
        inst = np.where(values > 0, 1.0 / np.where(values > 0, values, 1.0), 1.0)
    inst = np.minimum(inst, 1.0)
    return np.minimum.accumulate(inst, axis=0)


@dataclass
class EValueMatrix:
    """Per-time, per-hypothesis e-process values.

    Row n holds e_i^[n]; row 0 is the pre-data state and is all ones.
    """
    values: Matrix

    def __post_init__(self):
        self.values = np.array(self.values, dtype=float)
        if self.values.ndim != 2 or self.values.shape[0] < 1 or self.values.shape[1] < 1:
            raise InputError(f"e-value matrix must be (time, hypothesis) shaped, got {self.values.shape}")
        if not np.all(np.isfinite(self.values)) or np.any(self.values < 0):
            raise InputError("e-values must be finite and nonnegative")
        if not np.all(self.values[0] == 1.0):
            raise InputError("row 0 (time 0) of an e-value matrix must be all ones")

    def __repr__(self) -> str:
        return f"<EValueMatrix m={self.m} horizon={self.horizon}>"

    @property
    def m(self) -> int:
        return self.values.shape[1]

    @property
    def horizon(self) -> int:
        return self.values.shape[0] - 1

    def row(self, n: int) -> np.ndarray:
        return self.values[n]

    @classmethod
    def ones(cls, m: int, horizon: int = 0) -> 'EValueMatrix':
        return cls(np.ones((horizon + 1, m)))

    @classmethod
    def from_log(cls, log_values: np.ndarray) -> 'EValueMatrix':
        "exponentiate log e-values, clamping at exp(LOG_E_MAX)"
        log_values = np.asarray(log_values, dtype=float)
        clamped = log_values > LOG_E_MAX
        if clamped.any():
            logging.warning(f"{int(clamped.sum())} e-values clamped at exp({LOG_E_MAX:g})")
        return cls(np.exp(np.minimum(log_values, LOG_E_MAX)))

    @classmethod
    def from_observations(cls, ys: np.ndarray, family: EProcessFamily,
                          prior: Optional[Prior] = None) -> 'EValueMatrix':
        """Run the family over an (N, m) observation array, one subject per
        row, and return the (N + 1, m) matrix anchored at time 0."""
        ys = np.asarray(ys, dtype=float)
        if ys.ndim != 2:
            raise InputError(f"observations must be (subject, hypothesis) shaped, got {ys.shape}")
        if not np.all(np.isfinite(ys)):
            raise InputError("observations must be finite")
        log_values = np.zeros((ys.shape[0] + 1, ys.shape[1]))
        if family.kind == "gaussian_lr":
            # same additions, in the same order, as EProcessBank.update
            delta = family.delta
            log_values[1:] = np.cumsum(delta * ys - 0.5 * delta * delta, axis=0)
        else:
            bank = EProcessBank(ys.shape[1], family, prior)
            for n, row in enumerate(ys, start=1):
                bank.update(row)
                log_values[n] = bank.log_e
        return cls.from_log(log_values)
