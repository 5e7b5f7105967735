"""Exact expectation values on dense states.

Sites and bonds are 1-based: bond j joins sites j and j+1. Site j is qubit
j-1 (most significant bit first). |0> has S^z = +1/2.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, field

import numpy as np

from alqst.quantum import StateVector


def _site_bit(L: int, site: int) -> int:
    return 1 << (L - site)


def _flip(amps: np.ndarray, L: int, sites: tuple[int, ...]) -> np.ndarray:
    """psi[y ^ mask]: amplitudes with the given sites flipped."""
    t = amps.reshape((2,) * L)
    key = tuple(slice(None, None, -1) if (ax + 1) in sites else slice(None) for ax in range(L))
    return t[key].reshape(-1)


def _sz_sign(L: int, site: int) -> np.ndarray:
    """+1 where the site is |0>, -1 where it is |1>."""
    idx = np.arange(2**L, dtype=np.int64)
    return 1.0 - 2.0 * ((idx >> (L - site)) & 1)


def pair_expectation(state: StateVector, i: int, j: int, axis: str) -> complex:
    """<S^a_i S^a_j> as a complex number (the imaginary part is round-off)."""
    L = state.num_qubits
    psi = state.amplitudes
    if axis == "z":
        return complex(0.25 * np.sum(_sz_sign(L, i) * _sz_sign(L, j) * np.abs(psi) ** 2))
    flipped = _flip(psi, L, (i, j))
    if axis == "x":
        return complex(0.25 * np.vdot(psi, flipped))
    if axis == "y":
        # sigma^y sigma^y |ab> = -s_a s_b |a'b'>
        return complex(-0.25 * np.vdot(flipped, _sz_sign(L, i) * _sz_sign(L, j) * psi))
    raise ValueError(f"unknown axis {axis!r}")


def correlator_terms(state: StateVector, axis: str) -> np.ndarray:
    """Complex <S^a_i S^a_{i+1}> for every bond i = 1..L-1."""
    L = state.num_qubits
    if L < 2:
        raise ValueError("correlators need at least two sites")
    return np.array([pair_expectation(state, i, i + 1, axis) for i in range(1, L)])


def nn_correlator(state: StateVector, axis: str) -> float:
    """sum_{i=1}^{L-1} <S^a_i S^a_{i+1}>."""
    return float(correlator_terms(state, axis).sum().real)


def _check_bond(L: int, j: int) -> None:
    if not 1 <= j <= L - 1:
        raise IndexError(f"bond {j} out of range 1..{L - 1}")


def _density_apply(psi: np.ndarray, L: int, j: int) -> np.ndarray:
    """n(j) psi with n(j) = (1 - 4 S^x_j S^x_{j+1}) / 2."""
    return 0.5 * (psi - _flip(psi, L, (j, j + 1)))


def domain_wall_density(state: StateVector, j: int) -> float:
    L = state.num_qubits
    _check_bond(L, j)
    psi = state.amplitudes
    return float(np.vdot(psi, _density_apply(psi, L, j)).real)


def density_vector(state: StateVector) -> np.ndarray:
    return np.array([domain_wall_density(state, j) for j in range(1, state.num_qubits)])


def total_density(state: StateVector) -> float:
    return float(np.mean(density_vector(state)))


def center_site(L: int) -> int:
    """L/2 for even L, L/2 + 1/2 for odd L (1-based)."""
    return L // 2 if L % 2 == 0 else (L + 1) // 2


def greens_function_complex(state: StateVector, d: int) -> complex:
    L = state.num_qubits
    c = center_site(L)
    if not 0 <= d <= L // 2 - 1:
        raise IndexError(f"distance {d} out of range 0..{L // 2 - 1}")
    psi = state.amplitudes
    left = _density_apply(psi, L, c)
    right = _density_apply(psi, L, c + d)
    for site in range(c + 1, c + d + 1):
        right = _sz_sign(L, site) * right
    return complex(np.vdot(left, right))


def greens_function(state: StateVector, d: int) -> float:
    """String-ordered domain-wall Green's function relative to the chain center.

    <n(c) prod_{c<j<=c+d} 2 S^z_j n(c+d)>, reported as its real part (the
    Hermitian part of the operator); d = 0 gives the center-bond density.
    """
    return float(greens_function_complex(state, d).real)


def greens_vector(state: StateVector) -> np.ndarray:
    return np.array([greens_function(state, d) for d in range(state.num_qubits // 2)])


def relative_diff(v, target) -> float:
    """||v - target|| / ||target|| (Euclidean)."""
    v = np.asarray(v, dtype=float)
    target = np.asarray(target, dtype=float)
    if v.shape != target.shape:
        raise ValueError(f"length mismatch: {v.shape} vs {target.shape}")
    norm = np.linalg.norm(target)
    if norm == 0.0:
        raise ValueError("target has zero norm")
    return float(np.linalg.norm(v - target) / norm)


def _r_squared(x: np.ndarray, y: np.ndarray) -> float:
    coef = np.polyfit(x, y, 1)
    resid = y - np.polyval(coef, x)
    ss_tot = np.sum((y - y.mean()) ** 2)
    return float(1.0 - np.sum(resid**2) / ss_tot) if ss_tot > 0 else 1.0


def decay_fits(c: np.ndarray) -> dict:
    """Least-squares R^2 of power-law (log-log) and exponential (lin-log) fits over d >= 1.

    The classification is advisory only.
    """
    c = np.abs(np.asarray(c, dtype=float))
    d = np.arange(len(c))
    mask = (d >= 1) & (c > 0)
    if mask.sum() < 3:
        return {"power_r2": float("nan"), "exp_r2": float("nan"), "decay": "undetermined"}
    logc = np.log(c[mask])
    power = _r_squared(np.log(d[mask]), logc)
    expo = _r_squared(d[mask].astype(float), logc)
    return {"power_r2": power, "exp_r2": expo, "decay": "power" if power > expo else "exponential"}


@dataclass
class ObservableReport:
    correlators: dict[str, float]
    density_vector: list[float]
    n_tot: float
    greens: list[float]
    k_F: float
    rescaled_fidelity: float | None = None
    kl: float | None = None
    decay: dict = field(default_factory=dict)

    def to_dict(self) -> dict:
        return asdict(self)


def observable_report(
    state: StateVector,
    target: StateVector | None = None,
    kl: float | None = None,
) -> ObservableReport:
    from alqst.quantum import fidelity, rescaled_fidelity

    L = state.num_qubits
    corr = {a: nn_correlator(state, a) for a in "xyz"} if L >= 2 else {}
    dens = density_vector(state) if L >= 2 else np.zeros(0)
    n_tot = float(dens.mean()) if dens.size else 0.0
    greens = greens_vector(state) if L >= 2 else np.zeros(0)
    f = None
    if target is not None:
        f = rescaled_fidelity(fidelity(state, target), L)
    return ObservableReport(
        correlators=corr,
        density_vector=dens.tolist(),
        n_tot=n_tot,
        greens=greens.tolist(),
        k_F=float(np.pi * n_tot),
        rescaled_fidelity=f,
        kl=kl,
        decay=decay_fits(greens) if greens.size else {},
    )
