"""Cross-check of the shortcut bound against exhaustive closed testing on
random small instances."""
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Optional

import numpy as np

from .closed_testing import DiscoverySet, brute_force_bound, shortcut_bound
from .errors import ConfigError, OracleMismatch

MAX_ORACLE_M = 12
LOG_E_RANGE = (-3.0, 5.0)
ALPHAS = (0.05, 0.2)


@dataclass(frozen=True)
class OracleInstance:
    "one e-vector, discovery set and level"
    e: tuple[float, ...]
    R: DiscoverySet
    alpha: float

    @property
    def m(self) -> int:
        return len(self.e)

    def to_dict(self) -> dict:
        return {'e': list(self.e), 'R': list(self.R.indices), 'alpha': self.alpha}


@dataclass(frozen=True)
class Mismatch:
    instance: OracleInstance
    shortcut: int
    brute_force: int

    @property
    def kind(self) -> str:
        # a smaller shortcut bound claims more than closed testing allows
        return "validity" if self.shortcut < self.brute_force else "power"

    def to_dict(self) -> dict:
        return {**self.instance.to_dict(), 'shortcut': self.shortcut,
                'brute_force': self.brute_force, 'kind': self.kind}


@dataclass
class CrossCheckReport:
    checked: int = 0
    mismatches: list[Mismatch] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.mismatches

    def to_json(self) -> str:
        return json.dumps({'checked': self.checked,
                           'mismatches': [m.to_dict() for m in self.mismatches]}, indent=2)

    def raise_for_mismatch(self) -> None:
        if self.mismatches:
            first = self.mismatches[0]
            raise OracleMismatch(f"{len(self.mismatches)} of {self.checked} instances disagree; "
                                 f"first: {json.dumps(first.to_dict())}")


def _random_set(rng: np.random.Generator, m: int) -> DiscoverySet:
    size = int(rng.integers(1, m + 1))
    indices = np.sort(rng.choice(m, size=size, replace=False)) + 1
    return DiscoverySet(indices=tuple(int(i) for i in indices), label="R")


def _check_max_m(max_m: int) -> None:
    if not 1 <= max_m <= MAX_ORACLE_M:
        raise ConfigError(f"oracle instances need 1 <= m <= {MAX_ORACLE_M}, got {max_m}")


def random_instance(rng: np.random.Generator, max_m: int = MAX_ORACLE_M) -> OracleInstance:
    "m uniform on 1..max_m, e log-uniform on [e^-3, e^5], random nonempty R"
    _check_max_m(max_m)
    m = int(rng.integers(1, max_m + 1))
    e = np.exp(rng.uniform(*LOG_E_RANGE, size=m))
    alpha = float(rng.choice(ALPHAS))
    return OracleInstance(e=tuple(float(x) for x in e), R=_random_set(rng, m), alpha=alpha)


def tie_instance(rng: np.random.Generator, max_m: int = MAX_ORACLE_M) -> OracleInstance:
    """Adversarial ties: every e equal to 1/alpha, or drawn from a handful of
    values on and around the threshold so sorts and sums hit exact ties."""
    _check_max_m(max_m)
    m = int(rng.integers(1, max_m + 1))
    alpha = float(rng.choice(ALPHAS))
    inv = 1.0 / alpha
    if rng.random() < 0.5:
        e = np.full(m, inv)
    else:
        e = rng.choice(np.array([0.0, 0.5 * inv, inv, 1.5 * inv, 2.0 * inv]), size=m)
    return OracleInstance(e=tuple(float(x) for x in e), R=_random_set(rng, m), alpha=alpha)


def generate_instances(count: int, seed: int, max_m: int = MAX_ORACLE_M,
                       tie_fraction: float = 0.1) -> list[OracleInstance]:
    "seeded mix of random and tie instances"
    rng = np.random.default_rng(seed)
    return [tie_instance(rng, max_m) if rng.random() < tie_fraction else random_instance(rng, max_m)
            for _ in range(count)]


def cross_check(instances: Iterable[OracleInstance]) -> CrossCheckReport:
    "shortcut vs brute force on every instance; mismatches are collected, not raised"
    report = CrossCheckReport()
    for inst in instances:
        fast, _ = shortcut_bound(inst.e, inst.R, inst.alpha)
        slow = brute_force_bound(inst.e, inst.R, inst.alpha)
        report.checked += 1
        if fast != slow:
            mismatch = Mismatch(inst, fast, slow)
            logging.error(f"oracle {mismatch.kind} mismatch: {json.dumps(mismatch.to_dict())}")
            report.mismatches.append(mismatch)
    logging.info(f"oracle checked {report.checked} instances, {len(report.mismatches)} mismatches")
    return report
