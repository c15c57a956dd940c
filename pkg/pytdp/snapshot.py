"""Resumable state for incremental `pytdp bound` runs.

A snapshot is one JSON object:

    schema      "pytdp.snapshot"
    version     1
    mode        "observations" or "evalues"
    alpha       level the bounds were computed at
    family      EProcessFamily fields (observations mode) or null
    m           number of hypotheses
    horizon     last time processed
    states      per-hypothesis ElementaryState fields (observations mode)
    sets        [{label, indices, running_min}, ...]

Floats are stored with JSON's shortest repr, which round-trips exactly, so a
resumed run continues with bit-identical state.
"""
import json
import logging
import os
import tempfile
from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Optional, Sequence, Union

from .closed_testing import DiscoverySet
from .eprocess import ElementaryState, EProcessFamily
from .errors import ConfigError, InputError

SCHEMA = "pytdp.snapshot"
VERSION = 1
MODES = ("observations", "evalues")


@dataclass
class Snapshot:
    mode: str
    alpha: float
    m: int
    horizon: int
    sets: list[DiscoverySet]
    running_min: dict[str, int]
    family: Optional[EProcessFamily] = None
    states: list[ElementaryState] = field(default_factory=list)

    def __post_init__(self):
        if self.mode not in MODES:
            raise ConfigError(f"snapshot mode must be one of {MODES}, got {self.mode!r}")
        if self.mode == "observations" and (self.family is None or len(self.states) != self.m):
            raise InputError("observation snapshots need a family and one state per hypothesis")

    def to_dict(self) -> dict:
        return {
            'schema': SCHEMA,
            'version': VERSION,
            'mode': self.mode,
            'alpha': self.alpha,
            'family': self.family.to_dict() if self.family else None,
            'm': self.m,
            'horizon': self.horizon,
            'states': [asdict(s) for s in self.states],
            'sets': [{'label': s.label, 'indices': list(s.indices), 'running_min': self.running_min[s.label]}
                     for s in self.sets],
        }

    @classmethod
    def from_dict(cls, data: dict) -> 'Snapshot':
        if data.get('schema') != SCHEMA:
            raise ConfigError(f"not a pytdp snapshot (schema={data.get('schema')!r})")
        if data.get('version') != VERSION:
            raise ConfigError(f"unsupported snapshot version {data.get('version')!r}, expected {VERSION}")
        try:
            sets = [DiscoverySet(indices=tuple(s['indices']), label=s['label']) for s in data['sets']]
            return cls(mode=data['mode'],
                       alpha=float(data['alpha']),
                       m=int(data['m']),
                       horizon=int(data['horizon']),
                       sets=sets,
                       running_min={s['label']: int(s['running_min']) for s in data['sets']},
                       family=EProcessFamily.from_dict(data['family']) if data['family'] else None,
                       states=[ElementaryState(**s) for s in data['states']])
        except (KeyError, TypeError) as e:
            raise InputError(f"corrupt snapshot: {e!r}") from e

    def save(self, path: Union[str, Path]) -> None:
        "atomic write: temp file in the same directory, then rename"
        path = Path(path)
        fd, tmp = tempfile.mkstemp(dir=path.parent if str(path.parent) else ".", prefix=f".{path.name}.")
        try:
            with os.fdopen(fd, "w") as handle:
                json.dump(self.to_dict(), handle, indent=1)
            os.replace(tmp, path)
        except BaseException:
            Path(tmp).unlink(missing_ok=True)
            raise
        logging.debug(f"snapshot saved to {path} at horizon {self.horizon}")

    @classmethod
    def load(cls, path: Union[str, Path]) -> 'Snapshot':
        path = Path(path)
        if not path.exists():
            raise InputError(f"snapshot not found: {path}")
        try:
            data = json.loads(path.read_text())
        except json.JSONDecodeError as e:
            raise InputError(f"{path}: snapshot is not valid JSON ({e})") from e
        if not isinstance(data, dict):
            raise InputError(f"{path}: snapshot must be a JSON object")
        snap = cls.from_dict(data)
        logging.info(f"resuming from {path} at horizon {snap.horizon}")
        return snap

    def check_compatible(self, mode: str, alpha: float, m: int, sets: Sequence[DiscoverySet],
                         family: Optional[EProcessFamily] = None) -> None:
        """Refuse to continue a stream under different parameters.

        Raises:
            ConfigError: naming the first parameter that differs.
        """
        if mode != self.mode:
            raise ConfigError(f"snapshot was taken in {self.mode} mode, not {mode}")
        if alpha != self.alpha:
            raise ConfigError(f"snapshot alpha {self.alpha} differs from requested {alpha}")
        if m != self.m:
            raise ConfigError(f"snapshot has m={self.m}, input has m={m}")
        if mode == "observations" and family != self.family:
            raise ConfigError(f"snapshot family {self.family} differs from requested {family}")
        mine = [(s.label, s.indices) for s in self.sets]
        theirs = [(s.label, s.indices) for s in sets]
        if mine != theirs:
            raise ConfigError("snapshot discovery sets differ from the requested sets")
