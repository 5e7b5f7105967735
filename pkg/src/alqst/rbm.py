"""Complex RBM wavefunctions and their contrastive-divergence training.

A wavefunction is a pair of RBMs over the same N visible units:

    psi(x) = sqrt(p_lam(x) / Z_lam) * exp(i * theta_mu(x) / 2),
    theta_mu(x) = log p_mu(x),

where p(v) = exp(b.v) * prod_i (1 + exp(W_i.v + c_i)) is the RBM visible
marginal without its normalization. The amplitude RBM (lam) is the only one
with a partition function; the phase RBM (mu) never needs one.

The RBM represents the state as read out in a *reference* basis. A snapshot
measured in config b is compared against the amplitude obtained by rotating
each qubit j with U_{b_j} U_{ref_j}^dagger.
"""

from __future__ import annotations

import json
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Callable

import numpy as np
from scipy.special import expit, logsumexp

from alqst.quantum import (
    MAX_QUBITS,
    CapacityError,
    SnapshotPool,
    StateVector,
    all_bitstrings,
    bits_to_index,
    outcome_to_bits,
    relative_gate,
    rotate_amplitudes,
    validate_config,
)


@dataclass
class RbmParams:
    weights: np.ndarray  # (num_hidden, num_visible)
    visible_bias: np.ndarray
    hidden_bias: np.ndarray

    def __post_init__(self):
        self.weights = np.asarray(self.weights, dtype=float)
        self.visible_bias = np.asarray(self.visible_bias, dtype=float)
        self.hidden_bias = np.asarray(self.hidden_bias, dtype=float)
        h, v = self.weights.shape
        if self.visible_bias.shape != (v,) or self.hidden_bias.shape != (h,):
            raise ValueError(
                f"inconsistent shapes: W {self.weights.shape}, b {self.visible_bias.shape}, "
                f"c {self.hidden_bias.shape}"
            )

    @property
    def num_visible(self) -> int:
        return self.weights.shape[1]

    @property
    def num_hidden(self) -> int:
        return self.weights.shape[0]

    @classmethod
    def zeros(cls, num_visible: int, num_hidden: int) -> "RbmParams":
        return cls(np.zeros((num_hidden, num_visible)), np.zeros(num_visible), np.zeros(num_hidden))

    @classmethod
    def random(
        cls, num_visible: int, num_hidden: int, rng: np.random.Generator, init_scale: float
    ) -> "RbmParams":
        w = rng.uniform(-init_scale, init_scale, size=(num_hidden, num_visible))
        return cls(w, np.zeros(num_visible), np.zeros(num_hidden))

    def copy(self) -> "RbmParams":
        return RbmParams(self.weights.copy(), self.visible_bias.copy(), self.hidden_bias.copy())

    def flat(self) -> np.ndarray:
        return np.concatenate([self.weights.ravel(), self.visible_bias, self.hidden_bias])

    @classmethod
    def from_flat(cls, flat: np.ndarray, num_visible: int, num_hidden: int) -> "RbmParams":
        nw = num_hidden * num_visible
        flat = np.asarray(flat, dtype=float)
        return cls(
            flat[:nw].reshape(num_hidden, num_visible),
            flat[nw : nw + num_visible],
            flat[nw + num_visible :],
        )

    def step(self, grad: "RbmParams", lr: float) -> None:
        self.weights -= lr * grad.weights
        self.visible_bias -= lr * grad.visible_bias
        self.hidden_bias -= lr * grad.hidden_bias

    def is_finite(self) -> bool:
        return bool(np.isfinite(self.flat()).all())


def log_unnormalized_prob(params: RbmParams, v: np.ndarray) -> np.ndarray:
    """log p(v) for visible rows ``v`` of shape (..., V)."""
    v = np.asarray(v, dtype=float)
    act = v @ params.weights.T + params.hidden_bias
    return v @ params.visible_bias + np.logaddexp(0.0, act).sum(axis=-1)


def unnormalized_prob(params: RbmParams, v) -> np.ndarray | float:
    """exp(sum_j b_j v_j) * prod_i (1 + exp(sum_j W_ij v_j + c_i))."""
    if isinstance(v, str):
        v = outcome_to_bits(v)
    v = np.asarray(v)
    if v.shape[-1] != params.num_visible:
        raise ValueError(f"visible vector length {v.shape[-1]} != {params.num_visible}")
    out = np.exp(log_unnormalized_prob(params, v))
    return float(out) if out.ndim == 0 else out


def log_partition_exact(params: RbmParams) -> float:
    if params.num_visible > MAX_QUBITS:
        raise CapacityError(f"exact partition needs V <= {MAX_QUBITS}, got {params.num_visible}")
    return float(logsumexp(log_unnormalized_prob(params, all_bitstrings(params.num_visible))))


def partition_exact(params: RbmParams) -> float:
    """Z = sum over all 2^V visible configurations of the unnormalized probability."""
    return float(np.exp(log_partition_exact(params)))


def _weighted_log_prob_grad(params: RbmParams, v: np.ndarray, weights: np.ndarray) -> RbmParams:
    """sum_n weights_n * d log p(v_n) / d params."""
    v = np.asarray(v, dtype=float)
    s = expit(v @ params.weights.T + params.hidden_bias)
    ws = weights[:, None] * s
    return RbmParams(ws.T @ v, weights @ v, ws.sum(axis=0))


def _combine(a: RbmParams, b: RbmParams, alpha: float = 1.0, beta: float = 1.0) -> RbmParams:
    return RbmParams(
        alpha * a.weights + beta * b.weights,
        alpha * a.visible_bias + beta * b.visible_bias,
        alpha * a.hidden_bias + beta * b.hidden_bias,
    )


@dataclass
class ComplexRbmWavefunction:
    lam: RbmParams
    mu: RbmParams

    def __post_init__(self):
        if self.lam.num_visible != self.mu.num_visible:
            raise ValueError("amplitude and phase RBMs must share the visible layer")

    @property
    def num_qubits(self) -> int:
        return self.lam.num_visible

    @classmethod
    def random(
        cls,
        num_qubits: int,
        rng: np.random.Generator,
        num_hidden: int | None = None,
        init_scale: float | None = None,
    ) -> "ComplexRbmWavefunction":
        num_hidden = num_qubits if num_hidden is None else num_hidden
        if init_scale is None:
            init_scale = 0.1 / np.sqrt(num_qubits)
        lam = RbmParams.random(num_qubits, num_hidden, rng, init_scale)
        mu = RbmParams.random(num_qubits, num_hidden, rng, init_scale)
        return cls(lam, mu)

    def copy(self) -> "ComplexRbmWavefunction":
        return ComplexRbmWavefunction(self.lam.copy(), self.mu.copy())

    def log_psi(self, v: np.ndarray, log_z: float) -> np.ndarray:
        return 0.5 * (log_unnormalized_prob(self.lam, v) - log_z) + 0.5j * log_unnormalized_prob(self.mu, v)

    def to_dict(self) -> dict:
        def pack(p: RbmParams) -> dict:
            return {
                "num_visible": p.num_visible,
                "num_hidden": p.num_hidden,
                "weights": p.weights.ravel().tolist(),
                "visible_bias": p.visible_bias.tolist(),
                "hidden_bias": p.hidden_bias.tolist(),
            }

        return {"lambda": pack(self.lam), "mu": pack(self.mu)}

    @classmethod
    def from_dict(cls, data: dict) -> "ComplexRbmWavefunction":
        def unpack(d: dict) -> RbmParams:
            w = np.asarray(d["weights"], dtype=float).reshape(d["num_hidden"], d["num_visible"])
            return RbmParams(w, d["visible_bias"], d["hidden_bias"])

        return cls(unpack(data["lambda"]), unpack(data["mu"]))


def save_checkpoint(wf: ComplexRbmWavefunction, path: str | Path, seed: int | None = None, epoch: int = 0) -> None:
    """JSON checkpoint: shapes, row-major flattened weights, biases, seed and epoch counter."""
    payload = {"num_qubits": wf.num_qubits, "seed": seed, "epoch": epoch, **wf.to_dict()}
    Path(path).write_text(json.dumps(payload, indent=1))


def load_checkpoint(path: str | Path) -> tuple[ComplexRbmWavefunction, dict]:
    data = json.loads(Path(path).read_text())
    return ComplexRbmWavefunction.from_dict(data), {"seed": data.get("seed"), "epoch": data.get("epoch")}


def psi(wf: ComplexRbmWavefunction, x, z_lambda: float) -> complex:
    """Normalized amplitude of bitstring ``x`` given the amplitude partition function."""
    if isinstance(x, str):
        x = outcome_to_bits(x)
    lp = wf.log_psi(np.asarray(x)[None, :], np.log(z_lambda))
    return complex(np.exp(lp[0]))


def psi_vector(wf: ComplexRbmWavefunction, log_z: float | None = None) -> np.ndarray:
    """All 2^N amplitudes in the reference readout basis, using the exact partition function."""
    if wf.num_qubits > MAX_QUBITS:
        raise CapacityError(f"dense wavefunction needs N <= {MAX_QUBITS}")
    space = all_bitstrings(wf.num_qubits)
    if log_z is None:
        log_z = log_partition_exact(wf.lam)
    return np.exp(wf.log_psi(space, log_z))


def _branches(config: str, reference: str, family: str):
    """Rotated-qubit sites, their relative gates (S, 2, 2) and all 2^S input combos (C, S)."""
    sites = [j for j, (a, r) in enumerate(zip(config, reference)) if a != r]
    gates = np.array([relative_gate(config[j], reference[j], family) for j in sites]).reshape(-1, 2, 2)
    combos = all_bitstrings(len(sites)) if sites else np.zeros((1, 0), dtype=np.uint8)
    return sites, gates, combos


def _branch_terms(sites, gates, combos, outcomes: np.ndarray):
    """Branch inputs x' (B, C, N) and gate weights prod_s G_s[sigma_s, x'_s] (B, C)."""
    b = outcomes.shape[0]
    c = combos.shape[0]
    xs = np.repeat(outcomes[:, None, :], c, axis=1)
    if not sites:
        return xs, np.ones((b, 1), dtype=complex)
    xs[:, :, sites] = combos[None, :, :]
    s_idx = np.arange(len(sites))
    sel = gates[s_idx[None, None, :], outcomes[:, sites][:, None, :], combos[None, :, :]]
    return xs, sel.prod(axis=-1)


def rotated_psi(
    wf: ComplexRbmWavefunction,
    config: str,
    outcome: str,
    family: str = "hadamard_k",
    z_lambda: float | None = None,
    reference: str | None = None,
) -> complex:
    """Amplitude of ``outcome`` when the RBM state is measured in ``config``.

    Sums only over the 2^S bitstrings that differ from ``outcome`` on the S
    qubits whose axis differs from the reference; the other qubits carry
    identity factors.
    """
    n = wf.num_qubits
    config = validate_config(config, n)
    reference = "z" * n if reference is None else validate_config(reference, n)
    log_z = log_partition_exact(wf.lam) if z_lambda is None else np.log(z_lambda)
    sites, gates, combos = _branches(config, reference, family)
    xs, weights = _branch_terms(sites, gates, combos, outcome_to_bits(outcome)[None, :])
    amps = np.exp(wf.log_psi(xs[0], log_z))
    return complex(np.sum(weights[0] * amps))


def cd_k_negative_samples(
    params: RbmParams, batch: np.ndarray, k: int, rng: np.random.Generator
) -> np.ndarray:
    """Run ``k`` block-Gibbs steps h ~ p(h|v), v ~ p(v|h) from each row of ``batch``."""
    if k < 1:
        raise ValueError("k must be >= 1")
    v = np.asarray(batch, dtype=float)
    b, nv = v.shape
    nh = params.num_hidden
    wt = params.weights.T
    uh = rng.random((k, b, nh))
    uv = rng.random((k, b, nv))
    for step in range(k):
        h = (uh[step] < expit(v @ wt + params.hidden_bias)).astype(float)
        v = (uv[step] < expit(h @ params.weights + params.visible_bias)).astype(float)
    return v.astype(np.uint8)


class PreparedPool:
    """A snapshot pool with per-config rotation tables precomputed for training."""

    def __init__(self, pool: SnapshotPool, reference: str, family: str = "hadamard_k"):
        n = pool.num_qubits
        self.num_qubits = n
        self.reference = validate_config(reference, n)
        self.family = family
        self.outcomes = pool.outcomes
        configs = pool.distinct_configs
        self.config_names = configs
        index = {c: i for i, c in enumerate(configs)}
        self.config_ids = np.array([index[c] for c in pool.configs], dtype=np.int64)
        self.tables = [_branches(c, self.reference, family) for c in configs]
        self.is_reference = np.array([c == self.reference for c in configs])

    def __len__(self) -> int:
        return len(self.config_ids)


def _positive_phase(wf: ComplexRbmWavefunction, prep: PreparedPool, idx: np.ndarray, amplitude_from_rotated: bool):
    """Summed data terms of the NLL gradient over the snapshots ``idx``.

    Returns (sum_n Re<d log p_lam>_w, sum_n Im<d log p_mu>_w, number of samples
    that contributed to the amplitude term).
    """
    n = wf.num_qubits
    g_lam = RbmParams.zeros(n, wf.lam.num_hidden)
    g_mu = RbmParams.zeros(n, wf.mu.num_hidden)
    n_lam = 0
    cids = prep.config_ids[idx]
    for cid in np.unique(cids):
        rows = idx[cids == cid]
        outcomes = prep.outcomes[rows]
        if prep.is_reference[cid]:
            w = np.ones(len(rows))
            g_lam = _combine(g_lam, _weighted_log_prob_grad(wf.lam, outcomes, w))
            n_lam += len(rows)
            continue
        sites, gates, combos = prep.tables[cid]
        xs, gw = _branch_terms(sites, gates, combos, outcomes)
        flat = xs.reshape(-1, n)
        lp = wf.log_psi(flat, 0.0).reshape(xs.shape[:2])
        lp = lp - lp.real.max(axis=1, keepdims=True)
        terms = gw * np.exp(lp)
        weights = (terms / terms.sum(axis=1, keepdims=True)).reshape(-1)
        g_mu = _combine(g_mu, _weighted_log_prob_grad(wf.mu, flat, weights.imag))
        if amplitude_from_rotated:
            g_lam = _combine(g_lam, _weighted_log_prob_grad(wf.lam, flat, weights.real))
            n_lam += len(rows)
    return g_lam, g_mu, n_lam


def model_expectation_exact(params: RbmParams) -> RbmParams:
    """E_p[d log p(v) / d params] over the normalized model distribution."""
    space = all_bitstrings(params.num_visible)
    lp = log_unnormalized_prob(params, space)
    p = np.exp(lp - logsumexp(lp))
    return _weighted_log_prob_grad(params, space, p)


def _gradient_on(
    wf: ComplexRbmWavefunction,
    prep: PreparedPool,
    idx: np.ndarray,
    k: int,
    rng: np.random.Generator,
    exact_z: bool,
    amplitude_from_rotated: bool,
) -> tuple[RbmParams, RbmParams]:
    m = len(idx)
    pos_lam, pos_mu, n_lam = _positive_phase(wf, prep, idx, amplitude_from_rotated)
    g_mu = _combine(pos_mu, pos_mu, 1.0 / m, 0.0)
    if n_lam == 0:
        return RbmParams.zeros(wf.num_qubits, wf.lam.num_hidden), g_mu
    if exact_z:
        neg = model_expectation_exact(wf.lam)
    else:
        start = prep.outcomes[idx]
        ref_rows = prep.is_reference[prep.config_ids[idx]]
        if ref_rows.any():
            start = start[ref_rows]
        chain = cd_k_negative_samples(wf.lam, start, k, rng)
        neg = _weighted_log_prob_grad(wf.lam, chain, np.full(len(chain), 1.0 / len(chain)))
    g_lam = _combine(pos_lam, neg, -1.0 / n_lam, 1.0)
    return g_lam, g_mu


def gradient(
    wf: ComplexRbmWavefunction,
    pool: SnapshotPool,
    reference: str,
    k: int,
    rng: np.random.Generator,
    exact_z: bool = False,
    family: str = "hadamard_k",
    amplitude_from_rotated: bool = True,
) -> tuple[RbmParams, RbmParams]:
    """Gradient of the mean negative log-likelihood -ln|psi_b(sigma)|^2 over ``pool``.

    Reference-basis snapshots feed only the amplitude RBM. Rotated snapshots
    feed the phase RBM and, unless ``amplitude_from_rotated`` is off, the
    amplitude RBM too. The log-partition term is estimated from CD-k chains
    started at the batch data, or computed by enumeration when ``exact_z``.
    """
    if len(pool) == 0:
        raise ValueError("gradient needs a nonempty pool")
    if pool.num_qubits != wf.num_qubits:
        raise ValueError(f"pool has {pool.num_qubits} qubits, wavefunction has {wf.num_qubits}")
    prep = PreparedPool(pool, reference, family)
    return _gradient_on(wf, prep, np.arange(len(pool)), k, rng, exact_z, amplitude_from_rotated)


def nll_exact(
    wf: ComplexRbmWavefunction,
    pool: SnapshotPool,
    reference: str,
    family: str = "hadamard_k",
) -> float:
    """Mean -ln|psi_b(sigma)|^2 over the pool with the exact partition function."""
    probs = rotated_probabilities(wf, pool.distinct_configs, reference, family)
    ids = {c: i for i, c in enumerate(pool.distinct_configs)}
    cols = bits_to_index(pool.outcomes)
    rows = np.array([ids[c] for c in pool.configs])
    return float(-np.mean(np.log(probs[rows, cols])))


def rotated_probabilities(
    wf: ComplexRbmWavefunction,
    configs: list[str],
    reference: str,
    family: str = "hadamard_k",
    vector: np.ndarray | None = None,
) -> np.ndarray:
    """|psi_b|^2 over all outcomes for each config, shape (len(configs), 2^N)."""
    vec = psi_vector(wf) if vector is None else vector
    out = np.empty((len(configs), vec.size))
    for i, c in enumerate(configs):
        out[i] = np.abs(rotate_amplitudes(vec, c, family, reference)) ** 2
    return out


@dataclass
class EmpiricalDistribution:
    """Per-config outcome frequencies q(x) = N_x / N_config."""

    frequencies: dict[str, dict[str, float]]

    @classmethod
    def from_pool(cls, pool: SnapshotPool) -> "EmpiricalDistribution":
        counts: dict[str, dict[str, int]] = {}
        for snap in pool:
            per = counts.setdefault(snap.config, {})
            per[snap.outcome] = per.get(snap.outcome, 0) + 1
        freqs = {
            c: {o: n / sum(per.values()) for o, n in sorted(per.items())} for c, per in counts.items()
        }
        return cls(freqs)


def kl_divergence(
    q: EmpiricalDistribution,
    wf: ComplexRbmWavefunction,
    z_lambda: float | None = None,
    family: str = "hadamard_k",
    reference: str | None = None,
    vector: np.ndarray | None = None,
) -> float:
    """Sum over configs of KL(q_b || p_b); +inf when the model gives zero weight to observed data."""
    n = wf.num_qubits
    reference = "z" * n if reference is None else reference
    if vector is None:
        log_z = None if z_lambda is None else float(np.log(z_lambda))
        vector = psi_vector(wf, log_z)
    total = 0.0
    for config, freqs in q.frequencies.items():
        amps = rotate_amplitudes(vector, config, family, reference)
        for outcome, qx in freqs.items():
            p = abs(amps[int(outcome, 2)]) ** 2
            if p <= 0.0:
                return float("inf")
            total += qx * np.log(qx / p)
    return float(max(total, 0.0))


@dataclass
class TrainConfig:
    epochs: int = 1000
    learning_rate: float = 0.07
    cd_steps: int = 100
    batch_size: int = 100
    init_scale: float | None = None  # None -> 0.1 / sqrt(N)
    seed: int = 0
    num_hidden: int | None = None  # None -> N
    exact_negative_phase: bool = False
    amplitude_from_rotated: bool = True
    log_every: int = 1

    def __post_init__(self):
        if self.epochs < 0:
            raise ValueError("epochs must be >= 0")
        for name in ("learning_rate", "cd_steps", "batch_size", "log_every"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")

    def resolved_init_scale(self, num_qubits: int) -> float:
        return 0.1 / np.sqrt(num_qubits) if self.init_scale is None else self.init_scale

    def to_dict(self) -> dict:
        return asdict(self)


def train(
    wf_init: ComplexRbmWavefunction,
    pool: SnapshotPool,
    reference: str,
    cfg: TrainConfig,
    family: str = "hadamard_k",
    callback: Callable[[int, ComplexRbmWavefunction], None] | None = None,
    rng: np.random.Generator | None = None,
) -> ComplexRbmWavefunction:
    """Minibatch gradient descent on the snapshot NLL; returns a new wavefunction.

    ``callback(epoch, wf)`` runs after every epoch (1-based epoch index).
    """
    wf = wf_init.copy()
    if cfg.epochs == 0:
        return wf
    rng = np.random.default_rng(cfg.seed) if rng is None else rng
    prep = PreparedPool(pool, reference, family)
    n = len(prep)
    if n == 0:
        raise ValueError("cannot train on an empty pool")
    for epoch in range(1, cfg.epochs + 1):
        order = rng.permutation(n) if n > cfg.batch_size else np.arange(n)
        for start in range(0, n, cfg.batch_size):
            idx = order[start : start + cfg.batch_size]
            g_lam, g_mu = _gradient_on(
                wf, prep, idx, cfg.cd_steps, rng, cfg.exact_negative_phase, cfg.amplitude_from_rotated
            )
            wf.lam.step(g_lam, cfg.learning_rate)
            wf.mu.step(g_mu, cfg.learning_rate)
        if not (wf.lam.is_finite() and wf.mu.is_finite()):
            raise FloatingPointError(f"non-finite RBM parameters at epoch {epoch}")
        if callback is not None:
            callback(epoch, wf)
    return wf


def to_statevector(
    wf: ComplexRbmWavefunction,
    reference: str | None = None,
    family: str = "hadamard_k",
) -> StateVector:
    """The RBM state as a computational-basis StateVector.

    The RBM amplitudes live in the reference readout; undo that rotation.
    """
    vec = psi_vector(wf)
    n = wf.num_qubits
    if reference is not None and reference != "z" * n:
        vec = rotate_amplitudes(vec, reference, family, None, inverse=True)
    return StateVector(n, vec)
