"""CSV exchange formats.

Matrices (observations, e-values, p-values) are `time,h1,...,hm` with one row
per time point. Bounds are `time,set_label,c_inst,c_ard,tdp_inst,tdp_ard`,
metrics `time,pi1,violation_prop,mean_bound,q10,q50,q90`. Floats are written
with Python's shortest round-trip repr so rereading is exact.
"""
import csv
import logging
from pathlib import Path
from typing import Iterable, Union

import numpy as np

from .closed_testing import BoundRow, DiscoverySet
from .errors import InputError
from .simulation import MetricsTable

BOUND_HEADER = ["time", "set_label", "c_inst", "c_ard", "tdp_inst", "tdp_ard"]
METRICS_HEADER = ["time", "pi1", "violation_prop", "mean_bound", "q10", "q50", "q90"]
RAW_HEADER = ["iteration", "time", "pi1", "c", "tdp"]

PathLike = Union[str, Path]


def fmt(value: float) -> str:
    return repr(float(value))


def matrix_header(m: int) -> list[str]:
    return ["time"] + [f"h{i}" for i in range(1, m + 1)]


def read_matrix(path: PathLike) -> tuple[np.ndarray, np.ndarray]:
    """Read a `time,h1,...,hm` file into (times, values).

    Times must be consecutive integers; every value must parse as a finite
    float.

    Raises:
        InputError: naming the file and line of the first bad row.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"file not found: {path}")
    times, rows = [], []
    with path.open("r", newline="") as handle:
        reader = csv.reader(handle)
        header = next(reader, None)
        if header is None:
            raise InputError(f"{path}: empty file")
        header = [h.strip() for h in header]
        m = len(header) - 1
        if m < 1 or header != matrix_header(m):
            raise InputError(f"{path}:1: expected header time,h1,...,hm, got {','.join(header)}")
        for row in reader:
            line = reader.line_num
            if not row or all(not cell.strip() for cell in row):
                continue
            if len(row) != m + 1:
                raise InputError(f"{path}:{line}: expected {m + 1} fields, got {len(row)}")
            try:
                time = int(row[0])
                values = [float(cell) for cell in row[1:]]
            except ValueError as e:
                raise InputError(f"{path}:{line}: {e}") from e
            if not np.all(np.isfinite(values)):
                raise InputError(f"{path}:{line}: non-finite value")
            if times and time != times[-1] + 1:
                raise InputError(f"{path}:{line}: time {time} does not follow {times[-1]}")
            times.append(time)
            rows.append(values)
    if not rows:
        raise InputError(f"{path}: no data rows")
    logging.debug(f"read {len(rows)} rows x {m} hypotheses from {path}")
    return np.asarray(times, dtype=np.int64), np.asarray(rows, dtype=float)


def read_evalues(path: PathLike) -> tuple[np.ndarray, np.ndarray]:
    "e-value matrix file; values must be nonnegative"
    times, values = read_matrix(path)
    negative = np.argwhere(values < 0)
    if negative.size:
        row, col = negative[0]
        # +2: header line and 1-based lines
        raise InputError(f"{path}:{row + 2}: negative e-value {values[row, col]} for h{col + 1}")
    if times[0] < 0:
        raise InputError(f"{path}:2: times start at 0 or later, got {times[0]}")
    if times[0] == 0 and not np.all(values[0] == 1.0):
        raise InputError(f"{path}:2: time 0 e-values must all be 1")
    return times, values


def read_observations(path: PathLike) -> tuple[np.ndarray, np.ndarray]:
    "observation file, one subject per row from time 1"
    times, values = read_matrix(path)
    if times[0] < 1:
        raise InputError(f"{path}:2: observation times start at 1, got {times[0]}")
    return times, values


def write_matrix(path: PathLike, times: Iterable[int], values: np.ndarray, append: bool = False) -> None:
    "write (or append to) a `time,h1,...,hm` file"
    path = Path(path)
    values = np.asarray(values, dtype=float)
    fresh = not (append and path.exists())
    with path.open("w" if fresh else "a", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if fresh:
            writer.writerow(matrix_header(values.shape[1]))
        for time, row in zip(times, values):
            writer.writerow([int(time)] + [fmt(v) for v in row])


def read_sets(path: PathLike) -> list[DiscoverySet]:
    """One `label:1,2,5-9` per line; blank lines and `#` comments skipped.

    Raises:
        InputError: bad line (with its number) or duplicate label.
    """
    path = Path(path)
    if not path.exists():
        raise InputError(f"sets file not found: {path}")
    sets: list[DiscoverySet] = []
    labels = set()
    for number, line in enumerate(path.read_text().splitlines(), start=1):
        text = line.split('#', 1)[0].strip()
        if not text:
            continue
        try:
            s = DiscoverySet.parse(text)
        except InputError as e:
            raise InputError(f"{path}:{number}: {e}") from e
        if s.label in labels:
            raise InputError(f"{path}:{number}: duplicate label {s.label!r}")
        labels.add(s.label)
        sets.append(s)
    if not sets:
        raise InputError(f"{path}: no discovery sets")
    return sets


def bound_fields(row: BoundRow) -> list:
    return [row.time, row.set_label, row.c_inst, row.c_ard, fmt(row.tdp_inst), fmt(row.tdp_ard)]


def write_bounds(path: PathLike, rows: Iterable[BoundRow], append: bool = False) -> int:
    "write bound rows, adding the header unless appending to an existing file"
    path = Path(path)
    fresh = not (append and path.exists())
    count = 0
    with path.open("w" if fresh else "a", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        if fresh:
            writer.writerow(BOUND_HEADER)
        for row in rows:
            writer.writerow(bound_fields(row))
            count += 1
    logging.info(f"{'wrote' if fresh else 'appended'} {count} bound rows to {path}")
    return count


def read_bounds(path: PathLike) -> list[BoundRow]:
    with Path(path).open("r", newline="") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames != BOUND_HEADER:
            raise InputError(f"{path}:1: expected header {','.join(BOUND_HEADER)}")
        return [BoundRow(int(r['time']), r['set_label'], int(r['c_inst']), int(r['c_ard']),
                         float(r['tdp_inst']), float(r['tdp_ard'])) for r in reader]


def write_metrics(path: PathLike, table: MetricsTable) -> None:
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(METRICS_HEADER)
        for time, pi1, *values in table.rows():
            writer.writerow([time, fmt(pi1)] + [fmt(v) for v in values])
    logging.info(f"wrote metrics for {len(table.pi1)} sets x {len(table.times)} times to {path}")


def write_raw(path: PathLike, table: MetricsTable) -> None:
    "per-iteration bounds for external plotting"
    with Path(path).open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(RAW_HEADER)
        for iteration, time, pi1, c, tdp in table.raw_rows():
            writer.writerow([iteration, time, fmt(pi1), c, fmt(tdp)])
