"""Dense statevector arithmetic: basis configurations, rotations, Born sampling.

Bit ordering: qubit 0 is the most significant bit of a basis-state index, so
index ``x`` of an N-qubit vector reads left to right like the config and outcome
strings (``"xzz"``, ``"011"``).

"Measuring in basis b" means applying the listed single-qubit gate for each
qubit to the ket and then reading out in the computational basis.
"""

from __future__ import annotations

import struct
from collections import Counter
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Iterator, NamedTuple

import numpy as np

MAX_QUBITS = 20
AXES = "xyz"
GATE_FAMILIES = ("hadamard_k", "rxy")

_S2 = 1.0 / np.sqrt(2.0)

_GATE_TABLE = {
    "hadamard_k": {
        "x": _S2 * np.array([[1, 1], [1, -1]], dtype=complex),
        "y": _S2 * np.array([[1, 1], [1j, -1j]], dtype=complex),
    },
    "rxy": {
        "x": _S2 * np.array([[1j, -1j], [1, 1]], dtype=complex),
        "y": _S2 * np.array([[1, -1j], [-1j, 1]], dtype=complex),
    },
}


class CapacityError(ValueError):
    """Raised when a dense operation would exceed MAX_QUBITS."""


class SnapshotParseError(ValueError):
    def __init__(self, message: str, line: int | None = None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


def validate_config(config: str, num_qubits: int | None = None) -> str:
    """Return the canonical (lowercase) form of a basis configuration string."""
    if not isinstance(config, str):
        raise TypeError(f"basis config must be a string, got {type(config).__name__}")
    canon = config.lower()
    bad = set(canon) - set(AXES)
    if bad or not canon:
        raise ValueError(f"invalid basis config {config!r}")
    if num_qubits is not None and len(canon) != num_qubits:
        raise ValueError(f"config {config!r} has length {len(canon)}, expected {num_qubits}")
    return canon


def uniform_config(axis: str, num_qubits: int) -> str:
    return axis * num_qubits


def check_capacity(num_qubits: int) -> None:
    if num_qubits > MAX_QUBITS:
        raise CapacityError(f"{num_qubits} qubits exceeds the dense limit of {MAX_QUBITS}")


def all_bitstrings(num_qubits: int) -> np.ndarray:
    """All 2^N bitstrings as a (2^N, N) uint8 array, row ``x`` = bits of index ``x``."""
    check_capacity(num_qubits)
    idx = np.arange(2**num_qubits, dtype=np.int64)
    shifts = np.arange(num_qubits - 1, -1, -1, dtype=np.int64)
    return ((idx[:, None] >> shifts) & 1).astype(np.uint8)


def bits_to_index(bits: np.ndarray) -> np.ndarray:
    bits = np.asarray(bits, dtype=np.int64)
    n = bits.shape[-1]
    weights = 1 << np.arange(n - 1, -1, -1, dtype=np.int64)
    return bits @ weights


def outcome_to_bits(outcome: str) -> np.ndarray:
    return np.frombuffer(outcome.encode("ascii"), dtype=np.uint8) - ord("0")


def bits_to_outcome(bits: np.ndarray) -> str:
    return "".join("1" if b else "0" for b in bits)


@dataclass(frozen=True)
class RotationGate:
    axis: str
    matrix: np.ndarray


def rotation_gate(axis: str, family: str = "hadamard_k") -> RotationGate:
    """Single-qubit measurement rotation for ``axis`` from the given gate family.

    ``hadamard_k`` holds the Hadamard gate for x and the S-adjoint+Hadamard
    combination K for y; ``rxy`` holds the R_x/R_y pair. The z axis is always
    the identity.
    """
    if family not in _GATE_TABLE:
        raise ValueError(f"unknown gate family {family!r}; expected one of {GATE_FAMILIES}")
    if axis == "z":
        return RotationGate("z", np.eye(2, dtype=complex))
    if axis not in ("x", "y"):
        raise ValueError(f"unknown axis {axis!r}")
    return RotationGate(axis, _GATE_TABLE[family][axis].copy())


def relative_gate(axis: str, reference_axis: str, family: str = "hadamard_k") -> np.ndarray:
    """Gate taking a qubit from ``reference_axis`` readout to ``axis`` readout: U_axis U_ref^dagger."""
    u = rotation_gate(axis, family).matrix
    r = rotation_gate(reference_axis, family).matrix
    return u @ r.conj().T


def readout_equivalent(a: str, b: str, family: str = "hadamard_k") -> bool:
    """True when measuring along ``a`` and ``b`` gives the same outcome statistics for every state.

    That holds exactly when U_a U_b^dagger is diagonal (the gates differ by
    outcome-wise phases). With the printed K = diag(1, i) H, x and y are
    equivalent in the hadamard_k family.
    """
    m = relative_gate(a, b, family)
    return bool(np.allclose(m - np.diag(np.diag(m)), 0.0, atol=1e-12))


@dataclass
class StateVector:
    num_qubits: int
    amplitudes: np.ndarray

    def __post_init__(self):
        if self.num_qubits < 1:
            raise ValueError("num_qubits must be >= 1")
        check_capacity(self.num_qubits)
        self.amplitudes = np.asarray(self.amplitudes, dtype=complex)
        if self.amplitudes.shape != (2**self.num_qubits,):
            raise ValueError(
                f"expected {2**self.num_qubits} amplitudes for {self.num_qubits} qubits, "
                f"got shape {self.amplitudes.shape}"
            )

    @classmethod
    def from_amplitudes(cls, amplitudes, normalize: bool = True) -> "StateVector":
        amplitudes = np.asarray(amplitudes, dtype=complex)
        n = int(round(np.log2(amplitudes.size)))
        if 2**n != amplitudes.size:
            raise ValueError(f"length {amplitudes.size} is not a power of two")
        state = cls(n, amplitudes)
        return state.normalize() if normalize else state

    @classmethod
    def basis_state(cls, outcome: str) -> "StateVector":
        n = len(outcome)
        amps = np.zeros(2**n, dtype=complex)
        amps[int(outcome, 2)] = 1.0
        return cls(n, amps)

    @property
    def norm(self) -> float:
        return float(np.linalg.norm(self.amplitudes))

    def normalize(self) -> "StateVector":
        norm = self.norm
        if norm == 0.0:
            raise ValueError("cannot normalize the zero vector")
        return StateVector(self.num_qubits, self.amplitudes / norm)

    def probabilities(self) -> np.ndarray:
        return np.abs(self.amplitudes) ** 2

    def copy(self) -> "StateVector":
        return StateVector(self.num_qubits, self.amplitudes.copy())


def apply_single_qubit(amplitudes: np.ndarray, gate: np.ndarray, qubit: int, num_qubits: int) -> np.ndarray:
    """Apply a 2x2 ``gate`` to ``qubit`` of a flat amplitude vector (or a stack of them).

    A leading batch axis is allowed: ``amplitudes`` may be (..., 2^N).
    """
    lead = amplitudes.shape[:-1]
    psi = amplitudes.reshape(*lead, 2**qubit, 2, 2 ** (num_qubits - qubit - 1))
    out = np.einsum("ab,...ibj->...iaj", gate, psi)
    return out.reshape(*lead, 2**num_qubits)


def _check_dims(state: StateVector, config: str) -> str:
    config = validate_config(config)
    if len(config) != state.num_qubits:
        raise ValueError(
            f"config {config!r} does not match a {state.num_qubits}-qubit state"
        )
    return config


def rotate_amplitudes(
    amplitudes: np.ndarray,
    config: str,
    family: str = "hadamard_k",
    reference: str | None = None,
    inverse: bool = False,
) -> np.ndarray:
    """Rotate raw amplitude vector(s) from ``reference`` readout into ``config`` readout.

    With ``reference=None`` the reference is the computational basis. ``inverse``
    applies the adjoint rotation (config readout back to reference readout).
    """
    n = len(config)
    if reference is None:
        reference = "z" * n
    out = np.array(amplitudes, dtype=complex, copy=True)
    for q, (axis, ref) in enumerate(zip(config, reference)):
        if axis == ref:
            continue
        gate = relative_gate(axis, ref, family)
        if inverse:
            gate = gate.conj().T
        out = apply_single_qubit(out, gate, q, n)
    return out


def rotate_state(
    state: StateVector,
    config: str,
    family: str = "hadamard_k",
    inverse: bool = False,
    reference: str | None = None,
) -> StateVector:
    """Return (tensor_j U_{config_j}) |state>, qubit by qubit; z-axis qubits are untouched."""
    config = _check_dims(state, config)
    if reference is not None:
        reference = _check_dims(state, reference)
    amps = rotate_amplitudes(state.amplitudes, config, family, reference, inverse)
    return StateVector(state.num_qubits, amps)


class Snapshot(NamedTuple):
    config: str
    outcome: str


class SnapshotPool:
    """Measurement snapshots for an N-qubit system, kept in arrival order.

    ``outcomes`` is a (n, N) uint8 array; ``configs`` the matching list of
    config strings.
    """

    def __init__(self, num_qubits: int, snapshots: Iterable[Snapshot] = ()):
        self.num_qubits = num_qubits
        self.configs: list[str] = []
        self._rows: list[np.ndarray] = []
        self._outcomes: np.ndarray | None = None
        self.extend(snapshots)

    def extend(self, snapshots: Iterable[Snapshot]) -> None:
        for snap in snapshots:
            config = validate_config(snap.config, self.num_qubits)
            outcome = snap.outcome
            if len(outcome) != self.num_qubits or set(outcome) - {"0", "1"}:
                raise ValueError(f"invalid outcome {outcome!r} for {self.num_qubits} qubits")
            self.configs.append(config)
            self._rows.append(outcome_to_bits(outcome))
        self._outcomes = None

    def add(self, snapshot: Snapshot) -> None:
        self.extend([snapshot])

    @property
    def outcomes(self) -> np.ndarray:
        if self._outcomes is None:
            if self._rows:
                self._outcomes = np.stack(self._rows).astype(np.uint8)
            else:
                self._outcomes = np.zeros((0, self.num_qubits), dtype=np.uint8)
        return self._outcomes

    def __len__(self) -> int:
        return len(self.configs)

    def __iter__(self) -> Iterator[Snapshot]:
        for config, row in zip(self.configs, self._rows):
            yield Snapshot(config, bits_to_outcome(row))

    def __getitem__(self, i: int) -> Snapshot:
        return Snapshot(self.configs[i], bits_to_outcome(self._rows[i]))

    def config_counts(self) -> dict[str, int]:
        """Per-config snapshot counts in first-appearance order."""
        return dict(Counter(self.configs))

    @property
    def distinct_configs(self) -> list[str]:
        return list(self.config_counts())

    def select(self, config: str) -> "SnapshotPool":
        return SnapshotPool(self.num_qubits, (s for s in self if s.config == config))

    def copy(self) -> "SnapshotPool":
        return SnapshotPool(self.num_qubits, iter(self))

    def to_text(self) -> str:
        lines = [f"N {self.num_qubits}"]
        lines.extend(f"{s.config} {s.outcome}" for s in self)
        return "\n".join(lines) + "\n"

    def write(self, path: str | Path) -> None:
        Path(path).write_bytes(self.to_text().encode("ascii"))

    @classmethod
    def from_text(cls, text: str) -> "SnapshotPool":
        lines = text.split("\n")
        if lines and lines[-1] == "":
            lines.pop()
        if not lines:
            raise SnapshotParseError("empty snapshot file", 1)
        head = lines[0].split(" ")
        if len(head) != 2 or head[0] != "N" or not head[1].isdigit() or int(head[1]) < 1:
            raise SnapshotParseError(f"bad header {lines[0]!r}, expected 'N <num_qubits>'", 1)
        n = int(head[1])
        pool = cls(n)
        for lineno, line in enumerate(lines[1:], start=2):
            parts = line.split(" ")
            if len(parts) != 2:
                raise SnapshotParseError(f"expected '<config> <outcome>', got {line!r}", lineno)
            config, outcome = parts
            if len(config) != n or len(outcome) != n:
                raise SnapshotParseError(f"expected {n} characters per field, got {line!r}", lineno)
            if set(config) - set(AXES):
                raise SnapshotParseError(f"invalid axis character in {config!r}", lineno)
            if set(outcome) - {"0", "1"}:
                raise SnapshotParseError(f"invalid bit character in {outcome!r}", lineno)
            pool.add(Snapshot(config, outcome))
        return pool

    @classmethod
    def read(cls, path: str | Path) -> "SnapshotPool":
        return cls.from_text(Path(path).read_bytes().decode("ascii"))


def born_probabilities(state: StateVector, config: str, family: str = "hadamard_k") -> np.ndarray:
    rotated = rotate_state(state, config, family)
    probs = rotated.probabilities()
    return probs / probs.sum()


def born_sample(
    state: StateVector,
    config: str,
    n: int,
    rng: np.random.Generator,
    family: str = "hadamard_k",
) -> list[Snapshot]:
    """Draw ``n`` projective measurement snapshots of ``state`` in basis ``config``."""
    if n < 1:
        raise ValueError("n must be >= 1")
    config = _check_dims(state, config)
    probs = born_probabilities(state, config, family)
    idx = rng.choice(probs.size, size=n, p=probs)
    width = state.num_qubits
    return [Snapshot(config, format(int(i), f"0{width}b")) for i in idx]


def fidelity(a: StateVector, b: StateVector) -> float:
    """Squared overlap |<a|b>|^2 of two normalized states."""
    if a.num_qubits != b.num_qubits:
        raise ValueError(f"dimension mismatch: {a.num_qubits} vs {b.num_qubits} qubits")
    f = abs(np.vdot(a.amplitudes, b.amplitudes)) ** 2
    return float(min(max(f, 0.0), 1.0))


def rescaled_fidelity(f: float, num_qubits: int) -> float:
    return float(f ** (1.0 / num_qubits))


def write_state(state: StateVector, path: str | Path) -> None:
    """Binary layout: little-endian uint64 N, then 2^N interleaved float64 (re, im)."""
    data = np.empty(2 * state.amplitudes.size, dtype="<f8")
    data[0::2] = state.amplitudes.real
    data[1::2] = state.amplitudes.imag
    with open(path, "wb") as fh:
        fh.write(struct.pack("<Q", state.num_qubits))
        fh.write(data.tobytes())


def read_state(path: str | Path) -> StateVector:
    raw = Path(path).read_bytes()
    if len(raw) < 8:
        raise ValueError(f"{path}: truncated state file")
    (n,) = struct.unpack("<Q", raw[:8])
    check_capacity(n)
    data = np.frombuffer(raw[8:], dtype="<f8")
    if data.size != 2 * 2**n:
        raise ValueError(f"{path}: expected {2 * 2**n} float64 values, found {data.size}")
    return StateVector(int(n), data[0::2] + 1j * data[1::2])
