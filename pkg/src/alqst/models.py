"""Target states: closed-form qubit states and spin-chain ground states.

Spin conventions: qubit state |0> has S^z = +1/2, |1> has S^z = -1/2, and
S^x flips a qubit with matrix element 1/2. Site j = 1..L of a chain is qubit
j-1, i.e. site 1 is the most significant bit. Both chains use open boundaries.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.sparse.linalg import ArpackNoConvergence, LinearOperator, eigsh

from alqst.quantum import MAX_QUBITS, StateVector

NAMED_STATES = ("ghz", "ghz_phi", "z_spins", "x_spins")


def named_state(kind: str, num_qubits: int) -> StateVector:
    if num_qubits < 1:
        raise ValueError("num_qubits must be >= 1")
    dim = 2**num_qubits
    amps = np.zeros(dim, dtype=complex)
    if kind == "ghz":
        amps[0] = amps[-1] = 1 / np.sqrt(2)
    elif kind == "ghz_phi":
        amps[0] = 1 / np.sqrt(2)
        amps[-1] = 1j / np.sqrt(2)
    elif kind == "z_spins":
        amps[-1] = 1.0
    elif kind == "x_spins":
        amps[:] = 1 / np.sqrt(dim)
    else:
        raise ValueError(f"unknown named state {kind!r}; expected one of {NAMED_STATES}")
    return StateVector(num_qubits, amps)


@dataclass(frozen=True)
class XxzSpec:
    """H = sum_<i,i+1> J (Sx Sx + Sy Sy) + J (1 + Delta) Sz Sz on an open chain."""

    L: int
    J: float = 1.0
    Delta: float = 0.0

    def __post_init__(self):
        if self.L < 2:
            raise ValueError("XXZ chain needs L >= 2")


@dataclass(frozen=True)
class KcsSpec:
    """Kinetically constrained chain.

    H = t sum_{j=2}^{L-1} (4 Sx_{j-1} Sx_{j+1} - 1) Sz_j - h sum_{j=1}^{L} 2 Sx_j
        + mu sum_{j=2}^{L} Sx_{j-1} Sx_j
    """

    L: int
    t: float = 1.0
    h: float = 0.0
    mu: float = 1e-7

    def __post_init__(self):
        if self.L < 3:
            raise ValueError("KCS chain needs L >= 3")


@dataclass
class GroundStateResult:
    energy: float
    state: StateVector
    residual_norm: float
    sz_total: float
    matvecs: int


class ConvergenceError(RuntimeError):
    def __init__(self, message: str, best_residual: float):
        super().__init__(f"{message} (best residual {best_residual:.3e})")
        self.best_residual = best_residual


def _bit(site: int, L: int) -> int:
    """Bit mask of 1-based chain ``site`` inside a basis-state index."""
    return 1 << (L - site)


def _sz_signs(L: int, idx: np.ndarray) -> list[np.ndarray]:
    """Per-site S^z eigenvalues (+-1/2) for every basis index; entry j-1 is site j."""
    return [0.5 - ((idx >> (L - site)) & 1) for site in range(1, L + 1)]


class _MatrixFree:
    """Term tables for H|v> built once per spec: (diagonal, [(xor mask, coefficient array)])."""

    def __init__(self, spec):
        L = spec.L
        if L > MAX_QUBITS:
            raise ValueError(f"L={L} exceeds the dense limit of {MAX_QUBITS}")
        self.L = L
        self.dim = 2**L
        idx = np.arange(self.dim, dtype=np.int64)
        sz = _sz_signs(L, idx)
        self.diag = np.zeros(self.dim)
        self.flips: list[tuple[int, np.ndarray | float]] = []
        if isinstance(spec, XxzSpec):
            for i in range(1, L):
                a, b = sz[i - 1], sz[i]
                self.diag += spec.J * (1 + spec.Delta) * a * b
                # Sx Sx + Sy Sy = (S+S- + S-S+)/2: hops only between anti-aligned pairs
                anti = (a != b).astype(float)
                self.flips.append((_bit(i, L) | _bit(i + 1, L), 0.5 * spec.J * anti))
        elif isinstance(spec, KcsSpec):
            for j in range(2, L):
                # (4 Sx Sx Sz_j) v: the flipped neighbours leave Sz_j unchanged
                mask = _bit(j - 1, L) | _bit(j + 1, L)
                self.flips.append((mask, spec.t * sz[j - 1]))
                self.diag -= spec.t * sz[j - 1]
            for j in range(1, L + 1):
                self.flips.append((_bit(j, L), -spec.h))
            for j in range(2, L + 1):
                self.flips.append((_bit(j - 1, L) | _bit(j, L), 0.25 * spec.mu))
        else:
            raise TypeError(f"unsupported Hamiltonian spec {type(spec).__name__}")
        self.count = 0

    def _flip_view(self, t: np.ndarray, mask: int) -> np.ndarray:
        # flipping bits == reversing the corresponding axes of the (2,)*L tensor
        key = tuple(
            slice(None, None, -1) if mask & (1 << (self.L - 1 - ax)) else slice(None)
            for ax in range(self.L)
        )
        return t[key]

    def __call__(self, v: np.ndarray) -> np.ndarray:
        self.count += 1
        v = np.asarray(v).reshape(-1)
        shape = (2,) * self.L
        out = (self.diag * v).reshape(shape)
        t = v.reshape(shape)
        for mask, coeff in self.flips:
            if np.isscalar(coeff):
                if coeff != 0.0:
                    out += coeff * self._flip_view(t, mask)
            else:
                out += coeff.reshape(shape) * self._flip_view(t, mask)
        return out.reshape(-1)


def apply_hamiltonian(spec, v: StateVector) -> StateVector:
    """Return H|v> (unnormalized), computed term by term without building H."""
    if v.num_qubits != spec.L:
        raise ValueError(f"state has {v.num_qubits} qubits, Hamiltonian has L={spec.L}")
    op = _MatrixFree(spec)
    out = op(v.amplitudes.real) + 1j * op(v.amplitudes.imag)
    return StateVector(spec.L, out)


def hamiltonian_operator(spec) -> LinearOperator:
    op = _MatrixFree(spec)
    return LinearOperator((op.dim, op.dim), matvec=op, dtype=float)


def dense_hamiltonian(spec) -> np.ndarray:
    """Dense H from the matrix-free kernel; for small L only."""
    op = _MatrixFree(spec)
    eye = np.eye(op.dim)
    return np.stack([op(eye[:, k]) for k in range(op.dim)], axis=1)


def total_sz(state: StateVector) -> float:
    L = state.num_qubits
    idx = np.arange(2**L, dtype=np.int64)
    sz = sum(_sz_signs(L, idx))
    return float(np.sum(sz * state.probabilities()))


def ground_state(
    spec,
    tol: float = 1e-8,
    max_iter: int = 5000,
    rng: np.random.Generator | None = None,
    krylov_dim: int = 30,
) -> GroundStateResult:
    """Lowest eigenpair of the spec's Hamiltonian by restarted Lanczos iteration.

    Raises ConvergenceError when the residual ||H psi - E psi|| stays above ``tol``.
    """
    if not 2 <= spec.L <= MAX_QUBITS:
        raise ValueError(f"ground_state supports 2 <= L <= {MAX_QUBITS}, got {spec.L}")
    rng = rng if rng is not None else np.random.default_rng(0)
    op = _MatrixFree(spec)
    dim = op.dim
    if dim <= 64:
        # too small for a Krylov space of krylov_dim; solve densely
        h = dense_hamiltonian(spec)
        w, vecs = np.linalg.eigh(h)
        energy, vec = float(w[0]), vecs[:, 0]
    else:
        lin = LinearOperator((dim, dim), matvec=op, dtype=float)
        v0 = rng.standard_normal(dim)
        best = np.inf
        energy, vec = np.nan, v0
        arpack_tol = tol * 1e-2
        for _ in range(4):
            try:
                w, vecs = eigsh(
                    lin, k=1, which="SA", v0=v0, ncv=min(krylov_dim, dim - 1),
                    tol=arpack_tol, maxiter=max_iter,
                )
            except ArpackNoConvergence as err:
                if err.eigenvalues.size:
                    w, vecs = err.eigenvalues, err.eigenvectors
                else:
                    raise ConvergenceError("Lanczos iteration did not converge", best) from err
            energy, vec = float(w[0]), vecs[:, 0]
            vec = vec / np.linalg.norm(vec)
            res = float(np.linalg.norm(op(vec) - energy * vec))
            best = min(best, res)
            if res <= tol:
                break
            v0, arpack_tol = vec, arpack_tol * 1e-2
        else:
            raise ConvergenceError("Lanczos residual above tolerance", best)
    vec = vec / np.linalg.norm(vec)
    # fix the sign so the largest-magnitude amplitude is positive
    k = int(np.argmax(np.abs(vec)))
    if vec[k] < 0:
        vec = -vec
    residual = float(np.linalg.norm(op(vec) - energy * vec))
    if residual > tol:
        raise ConvergenceError("ground state residual above tolerance", residual)
    state = StateVector(spec.L, vec.astype(complex))
    return GroundStateResult(energy, state, residual, total_sz(state), op.count)
