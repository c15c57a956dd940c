"""Simultaneous TDP bounds by closed testing over average-merged e-values.

For a discovery set R and level alpha, c(R) is the largest |I| over nonempty
I within R whose intersection hypothesis survives closed testing, and
1 - c(R)/|R| is a lower bound for the true discovery proportion valid
simultaneously over all R and all times.
"""
import logging
import re
from dataclasses import dataclass
from typing import Iterable, NamedTuple, Optional, Sequence

import numpy as np
from rich.console import Console
from rich.table import Table

from .eprocess import EValueMatrix, check_alpha
from .errors import InputError, SizeError
from .typing import Indices, Label, Vector

MAX_BRUTE_FORCE_M = 20
MAX_RUNNING_MAX_M = 12

_SET_LINE = re.compile(r"^\s*([^:\s][^:]*?)\s*:\s*(.+?)\s*$")


@dataclass(frozen=True)
class DiscoverySet:
    "hypotheses declared as discoveries, 1-based sorted distinct indices"
    indices: Indices
    label: Label

    def __post_init__(self):
        object.__setattr__(self, 'indices', tuple(int(i) for i in self.indices))
        if not self.indices:
            raise InputError(f"discovery set {self.label!r} is empty")
        if self.indices[0] < 1:
            raise InputError(f"discovery set {self.label!r}: indices start at 1, got {self.indices[0]}")
        if any(b <= a for a, b in zip(self.indices, self.indices[1:])):
            raise InputError(f"discovery set {self.label!r}: indices must be strictly increasing")

    def __repr__(self) -> str:
        return f"<DiscoverySet {self.label} |R|={self.size}>"

    def __len__(self) -> int:
        return len(self.indices)

    @property
    def size(self) -> int:
        return len(self.indices)

    def check_range(self, m: int) -> None:
        if self.indices[-1] > m:
            raise InputError(f"discovery set {self.label!r} has index {self.indices[-1]} but m={m}")

    def mask(self, m: int) -> np.ndarray:
        "boolean membership over 0-based positions"
        self.check_range(m)
        mask = np.zeros(m, dtype=bool)
        mask[np.asarray(self.indices) - 1] = True
        return mask

    def bits(self) -> int:
        "membership as a bitmask, bit i-1 for hypothesis i"
        return sum(1 << (i - 1) for i in self.indices)

    @classmethod
    def parse(cls, text: str) -> 'DiscoverySet':
        """Parse `label:1,2,5-9`. Indices are sorted and must be distinct.

        Raises:
            InputError: malformed line, bad range or duplicate index.
        """
        match = _SET_LINE.match(text)
        if not match:
            raise InputError(f"expected 'label:indices', got {text!r}")
        label, body = match.groups()
        indices: list[int] = []
        for part in body.split(','):
            part = part.strip()
            try:
                bounds = [int(x) for x in part.split("-", 1)]
            except ValueError as e:
                raise InputError(f"set {label!r}: bad index {part!r}") from e
            if bounds[-1] < bounds[0]:
                raise InputError(f"set {label!r}: empty range {part!r}")
            indices.extend(range(bounds[0], bounds[-1] + 1))
        if len(set(indices)) != len(indices):
            raise InputError(f"set {label!r}: duplicate indices")
        return cls(indices=tuple(sorted(indices)), label=label)

    def to_text(self) -> str:
        return f"{self.label}:{','.join(str(i) for i in self.indices)}"


@dataclass(frozen=True)
class ShortcutTrace:
    "intermediate quantities of one shortcut evaluation"
    k_star: int  # optimal number of out-of-R values joined
    rhs: float  # k*/alpha - sum of those values
    h_max: int  # largest non-rejected subset size, equals c


class BoundRow(NamedTuple):
    "one (time, set) line of bound output"
    time: int
    set_label: Label
    c_inst: int
    c_ard: int
    tdp_inst: float
    tdp_ard: float


def tdp(c, size: int):
    "1 - c/|R|"
    return 1.0 - np.asarray(c, dtype=float) / size


@dataclass
class BoundSeries:
    """Bounds for one discovery set over times start..start+len-1.

    c_ard is the running minimum of c_inst; `ard` picks which of the two is
    the reported bound.
    """
    label: Label
    size: int
    c_inst: np.ndarray
    c_ard: np.ndarray
    ard: bool = True
    start: int = 0

    @property
    def times(self) -> np.ndarray:
        return np.arange(self.start, self.start + len(self.c_inst))

    @property
    def tdp_inst(self) -> np.ndarray:
        return tdp(self.c_inst, self.size)

    @property
    def tdp_ard(self) -> np.ndarray:
        return tdp(self.c_ard, self.size)

    @property
    def reported_c(self) -> np.ndarray:
        return self.c_ard if self.ard else self.c_inst

    @property
    def reported_tdp(self) -> np.ndarray:
        return self.tdp_ard if self.ard else self.tdp_inst

    def rows(self) -> list[BoundRow]:
        return [BoundRow(int(t), self.label, int(ci), int(ca), float(ti), float(ta))
                for t, ci, ca, ti, ta in zip(self.times, self.c_inst, self.c_ard,
                                             self.tdp_inst, self.tdp_ard)]

    def display(self, every: int = 1) -> None:
        console = Console()
        table = Table(title=f"{self.label} (|R|={self.size})", row_styles=['dim', ''])
        table.add_column("Time", justify="right", style="blue")
        table.add_column("c inst", justify="right", style="yellow")
        table.add_column("c ARD", justify="right", style="yellow")
        table.add_column("TDP inst", justify="right", style="magenta")
        table.add_column("TDP ARD", justify="right", style="green")
        for row in self.rows()[::every]:
            table.add_row(str(row.time), str(row.c_inst), str(row.c_ard),
                          f"{row.tdp_inst:.3f}", f"{row.tdp_ard:.3f}")
        console.print(table)


def _check_e(e: Vector) -> np.ndarray:
    e = np.asarray(e, dtype=float)
    if e.ndim != 1 or e.size == 0:
        raise InputError(f"expected a nonempty e-value vector, got shape {e.shape}")
    if not np.all(np.isfinite(e)) or np.any(e < 0):
        raise InputError("e-values must be finite and nonnegative")
    return e


def shortcut_bound(e: Vector, R: DiscoverySet, alpha: float) -> tuple[int, ShortcutTrace]:
    """Closed testing bound in O(m log m).

    Out-of-R values are sorted ascending and the best prefix K_k maximizing
    k/alpha - sum(K_k) is joined (ties: smallest k). c is then the largest h
    for which the h smallest in-R values satisfy sum - h/alpha < rhs, or 0.
    Sorts are stable, so equal e-values order by index.
    """
    alpha = check_alpha(alpha)
    e = _check_e(e)
    mask = R.mask(e.size)
    inv = 1.0 / alpha

    e_out = np.sort(e[~mask], kind="stable")
    gains = np.concatenate(([0.0], np.cumsum(inv - e_out)))
    k_star = int(np.argmax(gains))
    rhs = float(gains[k_star])

    costs = np.cumsum(np.sort(e[mask], kind="stable") - inv)
    survivors = np.flatnonzero(costs < rhs)
    c = int(survivors[-1] + 1) if survivors.size else 0
    return c, ShortcutTrace(k_star=k_star, rhs=rhs, h_max=c)


def _check_size(m: int, limit: int) -> None:
    if m > limit:
        raise SizeError(f"exhaustive closed testing over 2^{m} subsets refused (m={m} > {limit})")


def _subset_table(values: np.ndarray, combine, empty: float) -> np.ndarray:
    "combine(values) over all 2^m subsets, bit i of the subset id for values[i]"
    table = np.array([empty])
    for v in values:
        table = np.concatenate((table, combine(table, v)))
    return table


def _popcounts(m: int) -> np.ndarray:
    return _subset_table(np.ones(m), np.add, 0.0).astype(np.int64)


def _not_closed(rejected: np.ndarray, m: int) -> np.ndarray:
    """Marks subsets with at least one non-rejected superset (including
    themselves), i.e. the complement of the closed testing rejections."""
    open_ = ~rejected
    for b in range(m):
        view = open_.reshape(-1, 2, 1 << b)
        view[:, 0, :] |= view[:, 1, :]
    return open_


def _closed_bound(rejected: np.ndarray, R: DiscoverySet, m: int) -> int:
    ids = np.arange(1 << m)
    in_r = ((ids & ~R.bits()) == 0) & (ids > 0)
    survivors = _not_closed(rejected, m) & in_r
    if not survivors.any():
        return 0
    return int(_popcounts(m)[survivors].max())


def _average_rejections(e: np.ndarray, alpha: float) -> np.ndarray:
    "mean e over J >= 1/alpha, written as sum(e - 1/alpha) >= 0"
    sums = _subset_table(e - 1.0 / alpha, np.add, 0.0)
    rejected = sums >= 0
    rejected[0] = True  # empty intersection carries no hypothesis
    return rejected


def brute_force_bound(e: Vector, R: DiscoverySet, alpha: float) -> int:
    """Full closed testing with the average local test over all 2^m
    intersections; reference for shortcut_bound.

    Raises:
        SizeError: m > 20.
    """
    alpha = check_alpha(alpha)
    e = _check_e(e)
    _check_size(e.size, MAX_BRUTE_FORCE_M)
    R.check_range(e.size)
    return _closed_bound(_average_rejections(e, alpha), R, e.size)


def p_value_closed_testing_bound(p: Vector, R: DiscoverySet, alpha: float) -> int:
    "closed testing with Bonferroni local tests: reject H_J iff min p <= alpha/|J|"
    alpha = check_alpha(alpha)
    p = np.asarray(p, dtype=float)
    if p.ndim != 1 or p.size == 0:
        raise InputError(f"expected a nonempty p-value vector, got shape {p.shape}")
    if not np.all((p > 0) & (p <= 1)):
        raise InputError("p-values must lie in (0, 1]")
    m = p.size
    _check_size(m, MAX_BRUTE_FORCE_M)
    R.check_range(m)
    mins = _subset_table(p, np.minimum, np.inf)
    sizes = _popcounts(m)
    rejected = np.empty(1 << m, dtype=bool)
    rejected[0] = True
    rejected[1:] = mins[1:] * sizes[1:] <= alpha
    return _closed_bound(rejected, R, m)


def brute_force_running_max_series(e_matrix: EValueMatrix, R: DiscoverySet, alpha: float) -> np.ndarray:
    """Exhaustive bounds where each intersection is tested on the running
    maximum of its averaged e-process, so a rejected intersection stays
    rejected. Never larger than the running minimum of the instantaneous
    bound.

    Raises:
        SizeError: m > 12.
    """
    alpha = check_alpha(alpha)
    m = e_matrix.m
    _check_size(m, MAX_RUNNING_MAX_M)
    R.check_range(m)
    ever = np.zeros(1 << m, dtype=bool)
    out = np.empty(e_matrix.horizon + 1, dtype=np.int64)
    for n, row in enumerate(e_matrix.values):
        ever |= _average_rejections(row, alpha)
        out[n] = _closed_bound(ever, R, m)
    return out


def _series_from_inst(label: str, size: int, c_inst: np.ndarray, ard: bool, start: int = 0,
                      running_min: Optional[int] = None) -> BoundSeries:
    c_ard = np.minimum.accumulate(c_inst)
    if running_min is not None:
        c_ard = np.minimum(c_ard, running_min)
    return BoundSeries(label=label, size=size, c_inst=c_inst, c_ard=c_ard, ard=ard, start=start)


def _shortcut_rows(values: np.ndarray, mask: np.ndarray, alpha: float) -> np.ndarray:
    "shortcut_bound applied to every row of a (time, m) array"
    inv = 1.0 / alpha
    e_out = np.sort(values[:, ~mask], axis=1, kind="stable")
    gains = np.concatenate((np.zeros((values.shape[0], 1)), np.cumsum(inv - e_out, axis=1)), axis=1)
    rhs = gains.max(axis=1)
    costs = np.cumsum(np.sort(values[:, mask], axis=1, kind="stable") - inv, axis=1)
    ok = costs < rhs[:, None]
    size = int(mask.sum())
    # largest h with ok, scanning from the right
    last = size - np.argmax(ok[:, ::-1], axis=1)
    return np.where(ok.any(axis=1), last, 0).astype(np.int64)


def bound_series(e_matrix: EValueMatrix, R: DiscoverySet, alpha: float, ard: bool = True) -> BoundSeries:
    "shortcut bound at every time 0..N plus its running minimum"
    alpha = check_alpha(alpha)
    mask = R.mask(e_matrix.m)
    c_inst = _shortcut_rows(e_matrix.values, mask, alpha)
    return _series_from_inst(R.label, R.size, c_inst, ard)


def _check_labels(sets: Sequence[DiscoverySet]) -> None:
    if not sets:
        raise InputError("need at least one discovery set")
    seen = set()
    for s in sets:
        if s.label in seen:
            raise InputError(f"duplicate discovery set label {s.label!r}")
        seen.add(s.label)


def multi_r_bounds(e_matrix: EValueMatrix, sets: Sequence[DiscoverySet], alpha: float,
                   ard: bool = True) -> dict[str, BoundSeries]:
    "one series per set from the same e-matrix; no correction across sets"
    _check_labels(sets)
    return {s.label: bound_series(e_matrix, s, alpha, ard) for s in sets}


class BoundTracker:
    """Row-at-a-time bounds for a fixed list of discovery sets.

    Keeps the running minimum per set so a stream can be stopped, persisted
    and continued with the same output as an uninterrupted run.
    """

    def __init__(self, sets: Sequence[DiscoverySet], alpha: float, m: int,
                 running_min: Optional[dict[str, int]] = None) -> None:
        _check_labels(sets)
        self.alpha = check_alpha(alpha)
        self.m = m
        self.sets = list(sets)
        self._masks = [s.mask(m) for s in self.sets]
        self.running_min: dict[str, int] = {s.label: s.size for s in self.sets}
        if running_min:
            unknown = set(running_min) - set(self.running_min)
            if unknown:
                raise InputError(f"running minima for unknown sets: {sorted(unknown)}")
            self.running_min.update({k: int(v) for k, v in running_min.items()})

    def __repr__(self) -> str:
        return f"<BoundTracker sets={len(self.sets)} alpha={self.alpha}>"

    def step(self, time: int, e_row: Vector) -> list[BoundRow]:
        e_row = _check_e(e_row)
        if e_row.size != self.m:
            raise InputError(f"time {time}: expected {self.m} e-values, got {e_row.size}")
        rows = []
        for s, mask in zip(self.sets, self._masks):
            c_inst = int(_shortcut_rows(e_row[None, :], mask, self.alpha)[0])
            c_ard = min(self.running_min[s.label], c_inst)
            self.running_min[s.label] = c_ard
            rows.append(BoundRow(time, s.label, c_inst, c_ard,
                                 float(tdp(c_inst, s.size)), float(tdp(c_ard, s.size))))
        logging.debug(f"time {time}: " + ", ".join(f"{r.set_label}={r.c_inst}" for r in rows))
        return rows

    def run(self, e_matrix: EValueMatrix, start: int = 0) -> Iterable[BoundRow]:
        "step through rows start..horizon of a matrix"
        for n in range(start, e_matrix.horizon + 1):
            yield from self.step(n, e_matrix.row(n))
