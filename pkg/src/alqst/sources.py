"""Where snapshots come from: a Born-rule simulator or a replayed snapshot file."""

from __future__ import annotations

from pathlib import Path

import numpy as np

from alqst.quantum import Snapshot, SnapshotPool, StateVector, born_sample, validate_config


class SourceExhausted(RuntimeError):
    pass


class SimulatorSource:
    def __init__(self, target: StateVector, rng: np.random.Generator, family: str = "hadamard_k"):
        self.target = target
        self.rng = rng
        self.family = family
        self.num_qubits = target.num_qubits

    def measure(self, config: str, n: int) -> list[Snapshot]:
        return born_sample(self.target, config, n, self.rng, self.family)


class ReplaySource:
    """Serves snapshots from a recorded pool, per config in file order, never twice."""

    def __init__(self, pool: SnapshotPool):
        self.num_qubits = pool.num_qubits
        self._queues: dict[str, list[Snapshot]] = {}
        for snap in pool:
            self._queues.setdefault(snap.config, []).append(snap)
        self._cursor = {c: 0 for c in self._queues}

    @classmethod
    def from_file(cls, path: str | Path) -> "ReplaySource":
        return cls(SnapshotPool.read(path))

    def available(self, config: str) -> int:
        return len(self._queues.get(config, ())) - self._cursor.get(config, 0)

    def measure(self, config: str, n: int) -> list[Snapshot]:
        config = validate_config(config, self.num_qubits)
        if self.available(config) < n:
            raise SourceExhausted(
                f"replay source has {self.available(config)} unused snapshots for {config!r}, {n} requested"
            )
        start = self._cursor[config]
        self._cursor[config] = start + n
        return self._queues[config][start : start + n]
