"""
Per-iteration run traces.
Every solver returns a RunTrace; commands export it as line-delimited records.
"""
from dataclasses import dataclass, field
from types import MappingProxyType
from typing import Any, Dict, Iterator, List, Mapping, Optional

import numpy as np

from utils.errors import InvalidInputError
from utils.helpers import atomic_write_text, format_float


@dataclass
class TraceRecord:
    """One iteration: index plus named real metrics."""

    k: int
    metrics: Dict[str, float]

    def to_line(self) -> str:
        fields = [str(self.k)]
        fields.extend(f"{name}={format_float(value)}" for name, value in self.metrics.items())
        return ','.join(fields)


@dataclass
class RunTrace:
    """
    Ordered per-iteration log of a solver run.

    Iteration indices are strictly increasing. Metadata (solver name,
    config snapshot, seed, wall time) is frozen by finalize().
    """

    solver: str
    config: Dict[str, Any] = field(default_factory=dict)
    seed: Optional[int] = None
    records: List[TraceRecord] = field(default_factory=list)
    wall_time: Optional[float] = None
    _frozen: bool = field(default=False, init=False, repr=False)

    def append(self, k: int, **metrics: float) -> None:
        """Append a record; k must exceed the previous index."""
        if self.records and k <= self.records[-1].k:
            raise InvalidInputError(
                f"Trace indices must increase: got {k} after {self.records[-1].k}"
            )
        self.records.append(TraceRecord(int(k), {name: float(v) for name, v in metrics.items()}))

    def finalize(self, wall_time: float) -> 'RunTrace':
        """Record the wall time and freeze the metadata."""
        if self._frozen:
            raise InvalidInputError("Trace already finalized")
        self.wall_time = float(wall_time)
        self.config = MappingProxyType(dict(self.config))
        self._frozen = True
        return self

    @property
    def frozen(self) -> bool:
        return self._frozen

    def __setattr__(self, name: str, value: Any) -> None:
        if name in ('solver', 'config', 'seed', 'wall_time') and getattr(self, '_frozen', False):
            raise AttributeError(f"Trace metadata is immutable after the run: {name}")
        super().__setattr__(name, value)

    def __len__(self) -> int:
        return len(self.records)

    def __iter__(self) -> Iterator[TraceRecord]:
        return iter(self.records)

    def column(self, name: str) -> np.ndarray:
        """Values of one metric across records (records lacking it are skipped)."""
        return np.array([r.metrics[name] for r in self.records if name in r.metrics])

    def indices(self) -> np.ndarray:
        return np.array([r.k for r in self.records], dtype=int)

    def last(self) -> Mapping[str, float]:
        return self.records[-1].metrics if self.records else {}

    def to_lines(self) -> List[str]:
        header = [f"# solver={self.solver}"]
        if self.seed is not None:
            header.append(f"# seed={self.seed}")
        for key in sorted(self.config):
            header.append(f"# {key}={self.config[key]}")
        return header + [record.to_line() for record in self.records]

    def write(self, path: str) -> None:
        """Export records atomically; wall time is left out so files are reproducible."""
        atomic_write_text(path, '\n'.join(self.to_lines()) + '\n')
