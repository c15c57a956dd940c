"""Monte-Carlo harness: equicorrelated subject-by-subject data, e-processes
for every hypothesis, TDP bounds for a grid of discovery sets, aggregated
into validity (violation proportion) and power (mean bound) over time.
"""
import json
import logging
import math
import multiprocessing as mp
from dataclasses import dataclass, field, fields, replace
from pathlib import Path
from typing import Any, Iterator, Optional, Sequence, Union

import numpy as np
from dotenv import dotenv_values
from rich.console import Console
from rich.progress import track
from rich.table import Table

from .closed_testing import DiscoverySet, multi_r_bounds
from .distributions import EquicorrelatedModel, sample_equicorrelated
from .eprocess import EProcessFamily, EValueMatrix, check_alpha
from .errors import ConfigError, InputError, NumericalError

DEFAULT_PI1 = (0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9)
CONVERGENCE_TOL = 0.05
QUANTILES = (0.1, 0.5, 0.9)

_FAMILY_KEYS = {'family': 'kind', 'delta': 'delta', 'delta_min': 'delta_min',
                'quadrature_nodes': 'quadrature_nodes', 'prior_sides': 'prior_sides',
                't_cap': 't_cap'}
_TRUE = {'1', 'true', 'yes', 'on'}
_FALSE = {'0', 'false', 'no', 'off'}


def _to_bool(value: Any) -> bool:
    if isinstance(value, bool):
        return value
    text = str(value).strip().lower()
    if text in _TRUE:
        return True
    if text in _FALSE:
        return False
    raise ValueError(f"not a boolean: {value!r}")


def _to_int(value: Any) -> int:
    if isinstance(value, bool):
        raise ValueError("boolean where an integer was expected")
    if isinstance(value, float) and not value.is_integer():
        raise ValueError(f"not an integer: {value}")
    return int(value)


def _to_floats(value: Any) -> tuple[float, ...]:
    if isinstance(value, str):
        value = [v for v in value.split(',') if v.strip()]
    return tuple(float(v) for v in value)


@dataclass(frozen=True)
class ScenarioConfig:
    "one simulation cell; defaults follow the m=90, N=100 design"
    m: int = 90
    n_false: int = 45
    N: int = 100
    mu_alt: float = 1.5
    rho: float = 0.2
    alpha: float = 0.2
    pi1_list: tuple[float, ...] = DEFAULT_PI1
    r_size: int = 30
    iterations: int = 1000
    burn_in: int = 11
    family: EProcessFamily = field(default_factory=EProcessFamily)
    ard: bool = True
    seed: int = 0
    workers: int = 1

    def __post_init__(self):
        object.__setattr__(self, 'pi1_list', tuple(float(p) for p in self.pi1_list))
        check_alpha(self.alpha)
        if self.m < 1:
            raise ConfigError(f"m must be positive, got {self.m}")
        if not 0 <= self.n_false <= self.m:
            raise ConfigError(f"n_false must be in [0, m], got {self.n_false}")
        if self.N < 1:
            raise ConfigError(f"horizon N must be positive, got {self.N}")
        if not 1 <= self.burn_in <= self.N:
            raise ConfigError(f"burn_in must be in [1, N], got {self.burn_in}")
        if self.iterations < 1:
            raise ConfigError(f"iterations must be positive, got {self.iterations}")
        if not 1 <= self.r_size <= self.m:
            raise ConfigError(f"r_size must be in [1, m], got {self.r_size}")
        if not self.pi1_list:
            raise ConfigError("pi1_list is empty")
        if self.workers < 1:
            raise ConfigError(f"workers must be positive, got {self.workers}")
        # raises on unconstructible sets before any simulation work
        build_discovery_sets(self)

    @property
    def model(self) -> EquicorrelatedModel:
        return EquicorrelatedModel.shifted(self.m, self.n_false, self.mu_alt, self.rho)

    def to_dict(self) -> dict:
        "flat key/value form, the same keys a scenario file uses"
        data = {f.name: getattr(self, f.name) for f in fields(self) if f.name != 'family'}
        data['pi1_list'] = list(self.pi1_list)
        family = self.family.to_dict()
        data.update({key: family[attr] for key, attr in _FAMILY_KEYS.items()})
        return data

    @classmethod
    def from_dict(cls, data: dict) -> 'ScenarioConfig':
        """Build from flat key/value pairs (strings allowed).

        Raises:
            ConfigError: unknown key, missing value or bad type, naming the key.
        """
        converters = {'m': _to_int, 'n_false': _to_int, 'N': _to_int, 'r_size': _to_int,
                      'iterations': _to_int, 'burn_in': _to_int, 'seed': _to_int, 'workers': _to_int,
                      'quadrature_nodes': _to_int, 'mu_alt': float, 'rho': float, 'alpha': float,
                      'delta': float, 'delta_min': float, 't_cap': float, 'ard': _to_bool,
                      'pi1_list': _to_floats, 'family': str, 'prior_sides': str}
        unknown = set(data) - set(converters)
        if unknown:
            raise ConfigError(f"unknown scenario keys: {sorted(unknown)}")
        kwargs, family = {}, {}
        for key, value in data.items():
            if value is None or (isinstance(value, str) and not value.strip()):
                raise ConfigError(f"scenario key {key!r} has no value")
            try:
                converted = converters[key](value.strip() if isinstance(value, str) else value)
            except (TypeError, ValueError) as e:
                raise ConfigError(f"scenario key {key!r}: {e}") from e
            if key in _FAMILY_KEYS:
                family[_FAMILY_KEYS[key]] = converted
            else:
                kwargs[key] = converted
        return cls(family=EProcessFamily(**family), **kwargs)

    @classmethod
    def from_file(cls, path: Union[str, Path]) -> 'ScenarioConfig':
        "`key = value` text, or a JSON object when the file ends in .json"
        path = Path(path)
        if not path.exists():
            raise ConfigError(f"scenario file not found: {path}")
        if path.suffix.lower() == '.json':
            try:
                data = json.loads(path.read_text())
            except json.JSONDecodeError as e:
                raise ConfigError(f"{path}: invalid JSON ({e})") from e
            if not isinstance(data, dict):
                raise ConfigError(f"{path}: expected a JSON object")
        else:
            data = dict(dotenv_values(path, interpolate=False))
        logging.debug(f"scenario {path}: {data}")
        return cls.from_dict(data)

    def with_overrides(self, **overrides) -> 'ScenarioConfig':
        "replace fields, ignoring overrides that are None"
        return replace(self, **{k: v for k, v in overrides.items() if v is not None})


def false_null_count(pi1: float, r_size: int) -> int:
    "round(pi1 * r_size), halves rounded up"
    return int(math.floor(pi1 * r_size + 0.5))


def build_discovery_sets(config: ScenarioConfig) -> list[DiscoverySet]:
    """One set of size r_size per target pi1, holding round(pi1 * r_size) false
    nulls and true nulls for the rest, lowest indices of each class first.
    False nulls occupy the last n_false indices.
    """
    n_true = config.m - config.n_false
    sets = []
    labels = set()
    for pi1 in config.pi1_list:
        if not 0.0 < pi1 <= 1.0:
            raise ConfigError(f"pi1={pi1:g} must be in (0, 1]")
        label = f"pi1={pi1:g}"
        if label in labels:
            raise ConfigError(f"pi1 values repeat: {label} appears twice")
        labels.add(label)
        k = false_null_count(pi1, config.r_size)
        if k == 0:
            raise ConfigError(f"pi1={pi1:g} gives no false nulls in a set of {config.r_size}")
        if k > config.n_false or config.r_size - k > n_true:
            raise ConfigError(f"pi1={pi1:g} needs {k} false and {config.r_size - k} true nulls, "
                              f"only {config.n_false} and {n_true} available")
        true_part = range(1, config.r_size - k + 1)
        false_part = range(n_true + 1, n_true + k + 1)
        sets.append(DiscoverySet(indices=(*true_part, *false_part), label=label))
    return sets


def true_tau(R: DiscoverySet, mean: np.ndarray) -> int:
    "number of true nulls (mu_i <= 0) in R"
    return int(np.sum(mean[np.asarray(R.indices) - 1] <= 0))


def violation_proportion(bounds: Sequence, true_tau: int) -> np.ndarray:
    """Per-time fraction of iterations whose reported bound c is below the
    true count of nulls, i.e. whose TDP bound exceeds the true TDP.

    `bounds` holds one BoundSeries (or reported-c array) per iteration.
    """
    if len(bounds) == 0:
        raise InputError("no iterations to aggregate")
    arrays = [np.asarray(getattr(b, 'reported_c', b)) for b in bounds]
    lengths = {a.shape for a in arrays}
    if len(lengths) != 1:
        raise InputError(f"iterations disagree on horizon: {sorted(lengths)}")
    return np.mean(np.stack(arrays) < true_tau, axis=0)


def iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    "independent substream per iteration, stable under parallel execution"
    return np.random.default_rng(np.random.SeedSequence(seed, spawn_key=(iteration,)))


def run_iteration(config: ScenarioConfig, sets: Sequence[DiscoverySet], iteration: int) -> np.ndarray:
    "reported bounds c, shape (sets, reported times)"
    ys = sample_equicorrelated(config.model, iteration_rng(config.seed, iteration), size=config.N)
    matrix = EValueMatrix.from_observations(ys, config.family)
    series = multi_r_bounds(matrix, sets, config.alpha, config.ard)
    return np.stack([series[s.label].reported_c[config.burn_in:] for s in sets])


def _run_chunk(config: ScenarioConfig, sets: Sequence[DiscoverySet], iterations: range) -> np.ndarray:
    return np.stack([run_iteration(config, sets, i) for i in iterations])


@dataclass
class MetricsTable:
    """Per (time, pi1) aggregates over all iterations.

    Arrays are shaped (sets, times). `raw` keeps the per-iteration bounds
    (iterations, sets, times) when requested.
    """
    times: np.ndarray
    pi1: tuple[float, ...]
    true_pi1: tuple[float, ...]
    sizes: tuple[int, ...]
    violation_prop: np.ndarray
    mean_bound: np.ndarray
    q10: np.ndarray
    q50: np.ndarray
    q90: np.ndarray
    iterations: int
    raw: Optional[np.ndarray] = None

    def __repr__(self) -> str:
        return f"<MetricsTable sets={len(self.pi1)} times={len(self.times)} iterations={self.iterations}>"

    @classmethod
    def from_bounds(cls, c: np.ndarray, sets: Sequence[DiscoverySet], pi1: Sequence[float],
                    taus: Sequence[int], times: np.ndarray, keep_raw: bool = False) -> 'MetricsTable':
        """Aggregate reported bounds c of shape (iterations, sets, times).

        Raises:
            NumericalError: any NaN in the aggregates.
        """
        sizes = np.array([s.size for s in sets], dtype=float)
        tdp = 1.0 - c / sizes[None, :, None]
        violation = np.mean(c < np.asarray(taus)[None, :, None], axis=0)
        mean_bound = tdp.mean(axis=0)
        q10, q50, q90 = np.quantile(tdp, QUANTILES, axis=0)
        for name, values in (('violation_prop', violation), ('mean_bound', mean_bound), ('quantiles', q50)):
            if np.isnan(values).any():
                where = np.argwhere(np.isnan(values))[0]
                raise NumericalError(f"NaN in {name} for set {sets[where[0]].label} at time {times[where[1]]}")
        true_pi1 = tuple(1.0 - t / s.size for t, s in zip(taus, sets))
        return cls(times=times, pi1=tuple(pi1), true_pi1=true_pi1, sizes=tuple(s.size for s in sets),
                   violation_prop=violation, mean_bound=mean_bound, q10=q10, q50=q50, q90=q90,
                   iterations=c.shape[0], raw=c if keep_raw else None)

    def rows(self) -> Iterator[tuple]:
        "(time, pi1, violation_prop, mean_bound, q10, q50, q90), time-major"
        for t_i, time in enumerate(self.times):
            for s_i, pi1 in enumerate(self.pi1):
                yield (int(time), pi1, float(self.violation_prop[s_i, t_i]), float(self.mean_bound[s_i, t_i]),
                       float(self.q10[s_i, t_i]), float(self.q50[s_i, t_i]), float(self.q90[s_i, t_i]))

    def raw_rows(self) -> Iterator[tuple]:
        "(iteration, time, pi1, c, tdp) for every kept iteration"
        if self.raw is None:
            raise InputError("raw bounds were not kept for this run")
        for it in range(self.raw.shape[0]):
            for t_i, time in enumerate(self.times):
                for s_i, pi1 in enumerate(self.pi1):
                    c = int(self.raw[it, s_i, t_i])
                    yield (it, int(time), pi1, c, 1.0 - c / self.sizes[s_i])

    def convergence_time(self, s_i: int, tol: float = CONVERGENCE_TOL) -> Optional[int]:
        "first reported time the mean bound is within tol of the set's true TDP"
        close = np.abs(self.mean_bound[s_i] - self.true_pi1[s_i]) <= tol
        return int(self.times[np.argmax(close)]) if close.any() else None

    def summary(self) -> dict:
        return {'max_violation': float(self.violation_prop.max()),
                'iterations': self.iterations,
                'convergence': {pi1: self.convergence_time(i) for i, pi1 in enumerate(self.pi1)}}

    def summary_line(self) -> str:
        conv = ", ".join(f"{pi1:g}@{'-' if t is None else t}" for pi1, t in self.summary()['convergence'].items())
        return f"max violation {self.violation_prop.max():.4f} over {self.iterations} iterations; convergence {conv}"

    def display(self) -> None:
        console = Console()
        table = Table(title=f"Simulation ({self.iterations} iterations)", row_styles=['dim', ''])
        table.add_column("pi1", justify="right", style="blue")
        table.add_column("|R|", justify="right")
        table.add_column("Max violation", justify="right", style="yellow")
        table.add_column(f"Mean bound @ {int(self.times[-1])}", justify="right", style="green")
        table.add_column("Converged at", justify="right", style="magenta")
        for i, pi1 in enumerate(self.pi1):
            conv = self.convergence_time(i)
            table.add_row(f"{pi1:g}", str(self.sizes[i]), f"{self.violation_prop[i].max():.3f}",
                          f"{self.mean_bound[i, -1]:.3f}", "-" if conv is None else str(conv))
        console.print(table)


def run_scenario(config: ScenarioConfig, keep_raw: bool = False, progress: bool = False) -> MetricsTable:
    """Run every iteration of a scenario and aggregate.

    Results are deterministic given the config: iteration i always draws from
    its own substream and results are merged in iteration order, whatever the
    number of workers.
    """
    sets = build_discovery_sets(config)
    mean = config.model.mean
    taus = [true_tau(s, mean) for s in sets]
    logging.info(f"scenario m={config.m} N={config.N} mu_alt={config.mu_alt} rho={config.rho} "
                 f"family={config.family.kind} ard={config.ard}: {config.iterations} iterations")

    if config.workers > 1:
        chunk = math.ceil(config.iterations / config.workers)
        ranges = [range(lo, min(lo + chunk, config.iterations)) for lo in range(0, config.iterations, chunk)]
        with mp.Pool(config.workers) as pool:
            parts = pool.starmap(_run_chunk, [(config, sets, r) for r in ranges])
        c = np.concatenate(parts)
    else:
        its = range(config.iterations)
        if progress:
            its = track(its, description=f"Simulating {config.family.kind}")
        c = np.stack([run_iteration(config, sets, i) for i in its])

    times = np.arange(config.burn_in, config.N + 1)
    table = MetricsTable.from_bounds(c, sets, config.pi1_list, taus, times, keep_raw=keep_raw)
    logging.info(table.summary_line())
    return table
