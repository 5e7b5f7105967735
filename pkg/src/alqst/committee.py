"""Query-by-committee active learning over measurement basis configurations.

One AL run: bootstrap snapshots in the three uniform bases, pick the reference
basis the committee agrees on most, then repeat {reset members to their stored
initial parameters, train on the pool, check the stopping rule, ask for more
snapshots where the members disagree most}.
"""

from __future__ import annotations

import hashlib
import itertools
from collections import deque
from dataclasses import asdict, dataclass, field
from typing import Callable, Iterable

import numpy as np

from alqst.observables import density_vector, greens_vector, nn_correlator, relative_diff
from alqst.quantum import (
    SnapshotPool,
    StateVector,
    fidelity,
    readout_equivalent,
    rescaled_fidelity,
    rotate_amplitudes,
)
from alqst.rbm import (
    ComplexRbmWavefunction,
    EmpiricalDistribution,
    TrainConfig,
    kl_divergence,
    psi_vector,
    to_statevector,
    train,
)

UNIFORM_AXES = "zxy"  # also the reference tie-break order

Observer = Callable[[dict], None]


class LoopAborted(RuntimeError):
    """An AL or baseline run stopped early; ``partial`` holds what was built so far."""

    def __init__(self, message: str, partial):
        super().__init__(message)
        self.partial = partial


@dataclass(frozen=True)
class StoppingRule:
    variant: str = "fidelity"  # fidelity | xxz_correlator | kcs_observables | none
    threshold: float = 0.9
    fraction: float = 2.0 / 3.0
    n_stop: float = 0.2
    c_stop: float = 0.2

    def __post_init__(self):
        if self.variant not in ("fidelity", "xxz_correlator", "kcs_observables", "none"):
            raise ValueError(f"unknown stopping rule {self.variant!r}")
        for name in ("threshold", "fraction", "n_stop", "c_stop"):
            if not 0.0 < getattr(self, name) <= 1.0:
                raise ValueError(f"{name} must lie in (0, 1]")

    def evaluate(self, states: list[StateVector], target: StateVector | None) -> tuple[bool, dict]:
        """Member-averaged metrics for the reconstructions and whether the rule is met."""
        metrics = member_metrics(states, target, self.variant)
        if self.variant == "none":
            return False, metrics
        if target is None:
            raise ValueError(f"stopping rule {self.variant!r} needs a target state")
        if self.variant == "fidelity":
            met = float(np.mean(metrics["rescaled_fidelity"])) >= self.threshold
        elif self.variant == "xxz_correlator":
            met = True
            for axis in "xyz":
                want = metrics["target_correlators"][axis]
                got = float(np.mean(metrics["correlators"][axis]))
                if abs(want) < 1e-12:
                    continue
                if np.sign(got) != np.sign(want) or abs(got) < self.fraction * abs(want):
                    met = False
        else:
            met = (
                float(np.mean(metrics["density_rel_diff"])) <= self.n_stop
                and float(np.mean(metrics["greens_rel_diff"])) <= self.c_stop
            )
        return bool(met), metrics


def member_metrics(states: list[StateVector], target: StateVector | None, variant: str = "fidelity") -> dict:
    """Per-member diagnostics; lists are indexed by member."""
    out: dict = {}
    if target is None:
        return out
    n = target.num_qubits
    out["rescaled_fidelity"] = [rescaled_fidelity(fidelity(s, target), n) for s in states]
    if variant == "xxz_correlator":
        out["target_correlators"] = {a: nn_correlator(target, a) for a in "xyz"}
        out["correlators"] = {a: [nn_correlator(s, a) for s in states] for a in "xyz"}
    if variant == "kcs_observables":
        n_t, c_t = density_vector(target), greens_vector(target)
        out["density_rel_diff"] = [relative_diff(density_vector(s), n_t) for s in states]
        out["greens_rel_diff"] = [relative_diff(greens_vector(s), c_t) for s in states]
    return out


@dataclass
class QueryPolicy:
    n_per_query: int = 1
    reference_multiplier: int = 3
    max_queries: int = 30
    candidate_cap: int | None = None  # None -> min(2^N, 512), at least 3
    bootstrap_per_basis: int = 100
    stop: StoppingRule = field(default_factory=StoppingRule)
    reference_epoch_fraction: float = 3.0
    reference_score: str = "amplitude"  # or "probability"
    reference_resample: bool = True  # bootstrap-resampled member pools in reference selection

    def __post_init__(self):
        for name in ("n_per_query", "reference_multiplier", "max_queries", "bootstrap_per_basis"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1")
        if self.reference_score not in ("amplitude", "probability"):
            raise ValueError("reference_score must be 'amplitude' or 'probability'")
        if self.reference_epoch_fraction <= 0:
            raise ValueError("reference_epoch_fraction must be positive")

    def resolved_cap(self, num_qubits: int) -> int:
        if self.candidate_cap is not None:
            return max(3, self.candidate_cap)
        return max(3, min(2**num_qubits, 512))

    def to_dict(self) -> dict:
        return asdict(self)


@dataclass
class QueryRecord:
    query: int
    config: str
    added: int
    rule: str  # "4a" reference request, "4b" committee vote, "forced" after two reference requests


@dataclass
class LearnerState:
    reference: str
    pool: SnapshotPool
    bootstrap_size: int
    query_log: list[QueryRecord] = field(default_factory=list)

    @property
    def n_tot(self) -> int:
        return len(self.pool)

    @property
    def n_queries(self) -> int:
        return len(self.query_log)

    @property
    def n_config(self) -> int:
        return len(self.pool.distinct_configs)

    def query_log_json(self) -> list[dict]:
        return [asdict(q) for q in self.query_log]


def _freeze(wf: ComplexRbmWavefunction) -> ComplexRbmWavefunction:
    frozen = wf.copy()
    for p in (frozen.lam, frozen.mu):
        for arr in (p.weights, p.visible_bias, p.hidden_bias):
            arr.flags.writeable = False
    return frozen


@dataclass
class Committee:
    members: list[ComplexRbmWavefunction]
    initial_params: tuple[ComplexRbmWavefunction, ...]
    member_seeds: tuple[int, ...]

    @classmethod
    def create(
        cls,
        num_qubits: int,
        n_rbm: int = 4,
        seed: int = 0,
        num_hidden: int | None = None,
        init_scale: float | None = None,
    ) -> "Committee":
        children = np.random.SeedSequence(seed).spawn(n_rbm)
        seeds = tuple(int(c.generate_state(1, dtype=np.uint64)[0]) for c in children)
        inits = tuple(
            _freeze(ComplexRbmWavefunction.random(num_qubits, np.random.default_rng(s), num_hidden, init_scale))
            for s in seeds
        )
        return cls([w.copy() for w in inits], inits, seeds)

    @property
    def num_qubits(self) -> int:
        return self.initial_params[0].num_qubits

    def __len__(self) -> int:
        return len(self.members)

    def reset(self) -> None:
        self.members = [w.copy() for w in self.initial_params]

    def fingerprint(self) -> str:
        h = hashlib.sha256()
        for wf in self.initial_params:
            h.update(wf.lam.flat().tobytes())
            h.update(wf.mu.flat().tobytes())
        return h.hexdigest()

    def train(
        self,
        pool: SnapshotPool | list[SnapshotPool],
        reference: str,
        cfg: TrainConfig,
        family: str = "hadamard_k",
        cycle: int = 0,
        on_epoch: Callable[[int, int, ComplexRbmWavefunction], None] | None = None,
    ) -> None:
        """Train every member from its stored initial parameters.

        ``pool`` is shared by all members, or given as one pool per member.
        """
        pools = pool if isinstance(pool, list) else [pool] * len(self.members)
        if len(pools) != len(self.members):
            raise ValueError(f"{len(pools)} pools for {len(self.members)} members")
        trained = []
        for i, (init, seed) in enumerate(zip(self.initial_params, self.member_seeds)):
            rng = np.random.default_rng([seed, cycle])
            cb = None if on_epoch is None else (lambda epoch, wf, i=i: on_epoch(i, epoch, wf))
            trained.append(train(init, pools[i], reference, cfg, family, cb, rng))
        self.members = trained

    def vectors(self) -> np.ndarray:
        """Normalized reference-readout amplitude vectors, shape (members, 2^N)."""
        return np.stack([psi_vector(wf) for wf in self.members])

    def states(self, reference: str, family: str = "hadamard_k") -> list[StateVector]:
        return [to_statevector(wf, reference, family) for wf in self.members]


def bootstrap(source, per_basis: int) -> SnapshotPool:
    """``per_basis`` snapshots in each of zz..z, xx..x and yy..y."""
    if per_basis < 1:
        raise ValueError("per_basis must be >= 1")
    n = source.num_qubits
    pool = SnapshotPool(n)
    for axis in UNIFORM_AXES:
        pool.extend(source.measure(axis * n, per_basis))
    return pool


def resample_pool(pool: SnapshotPool, rng: np.random.Generator) -> SnapshotPool:
    """Bootstrap resample (with replacement) of the same size."""
    idx = rng.integers(0, len(pool), size=len(pool))
    return SnapshotPool(pool.num_qubits, [pool[int(i)] for i in idx])


_SCORE_TOL = 1e-12


def _variance_sum(vectors: np.ndarray) -> float:
    return float(np.var(vectors, axis=0).sum())


def select_reference(
    bootstrap_pool: SnapshotPool,
    committee_factory: Callable[[], Committee],
    cfg: TrainConfig,
    family: str = "hadamard_k",
    epoch_fraction: float = 3.0,
    score: str = "amplitude",
    rng: np.random.Generator | None = None,
) -> tuple[str, dict[str, float]]:
    """Uniform basis whose separately trained committee agrees most on its state vector.

    Each candidate basis gets a fresh committee trained (amplitude only) on
    that basis's snapshots alone, for ``epoch_fraction`` of the usual epochs.
    The score is the summed member variance of the normalized amplitude vector
    entries (or probabilities with ``score="probability"``). Ties go to z, x, y
    in that order; a basis whose readout is equivalent to an earlier one (same
    Born statistics for every state) inherits that basis's score and loses the tie.

    With ``rng`` given, each member trains on its own bootstrap resample of the
    basis's snapshots, so the score measures how firmly the few samples pin
    down the distribution. Without it all members see the same snapshots.
    """
    n = bootstrap_pool.num_qubits
    ref_cfg = TrainConfig(**{**cfg.to_dict(), "epochs": max(1, int(round(cfg.epochs * epoch_fraction)))})
    scores: dict[str, float] = {}
    for axis in UNIFORM_AXES:
        basis = axis * n
        twin = next((b for b in scores if readout_equivalent(axis, b[0], family)), None)
        if twin is not None:
            # identical Born statistics for every state: an exact tie, decided by the fixed order
            scores[basis] = scores[twin]
            continue
        sub = bootstrap_pool.select(basis)
        if len(sub) == 0:
            raise ValueError(f"bootstrap pool has no snapshots in {basis!r}")
        committee = committee_factory()
        pools: SnapshotPool | list[SnapshotPool] = sub
        if rng is not None:
            pools = [resample_pool(sub, rng) for _ in range(len(committee))]
        committee.train(pools, basis, ref_cfg, family)
        amps = np.abs(committee.vectors())
        scores[basis] = _variance_sum(amps if score == "amplitude" else amps**2)
    best = min(scores, key=lambda b: (scores[b], UNIFORM_AXES.index(b[0])))
    return best, scores


def disagreement_amplitude_vs_phase(vectors: np.ndarray) -> tuple[str, float, float]:
    """Compare member disagreement on amplitudes against disagreement on phases.

    amplitude score: sum_x Var_i |psi_i(x)|
    phase score: sum_x circular variance of arg psi_i(x) - arg psi_i(x_ref), with
    x_ref the entry of largest mean amplitude (removes each member's global phase).
    Returns ("amplitude" | "phase", amplitude score, phase score); ties go to amplitude.
    """
    vectors = np.asarray(vectors)
    mags = np.abs(vectors)
    amp_score = _variance_sum(mags)
    x_ref = int(np.argmax(mags.mean(axis=0)))
    rel = np.angle(vectors) - np.angle(vectors[:, x_ref])[:, None]
    circ = 1.0 - np.abs(np.exp(1j * rel).mean(axis=0))
    phase_score = float(np.clip(circ, 0.0, None).sum())
    # round-off leaves ~1e-16 per entry even for identical members
    kind = "amplitude" if amp_score >= phase_score - _SCORE_TOL * vectors.shape[-1] else "phase"
    return kind, amp_score, phase_score


def config_scores(vectors: np.ndarray, candidates: Iterable[str], reference: str, family: str = "hadamard_k") -> dict[str, float]:
    """sum over outcomes of the member variance of |psi_i rotated into b|^2, per candidate b."""
    out = {}
    for b in candidates:
        probs = np.abs(rotate_amplitudes(vectors, b, family, reference)) ** 2
        out[b] = _variance_sum(probs)
    return out


def select_query_config(
    vectors: np.ndarray, candidates: list[str], reference: str, family: str = "hadamard_k"
) -> tuple[str, dict[str, float]]:
    """Candidate with the largest summed outcome-probability variance; ties -> smallest string."""
    if not candidates:
        raise ValueError("no candidate configurations")
    scores = config_scores(vectors, candidates, reference, family)
    top = max(scores.values())
    tol = 1e-12 * max(1.0, abs(top))
    best = min(b for b, s in scores.items() if s >= top - tol)
    return best, scores


def candidate_configs(num_qubits: int, cap: int, rng: np.random.Generator) -> list[str]:
    """All 3^N configs if they fit under ``cap``, else a random cap-sized subset
    that always contains the three uniform configs."""
    if cap < 3:
        raise ValueError("cap must be >= 3")
    if 3**num_qubits <= cap:
        return ["".join(p) for p in itertools.product("xyz", repeat=num_qubits)]
    chosen = [a * num_qubits for a in UNIFORM_AXES]
    seen = set(chosen)
    while len(chosen) < cap:
        draw = rng.integers(0, 3, size=(cap, num_qubits))
        for row in draw:
            c = "".join("xyz"[k] for k in row)
            if c not in seen:
                seen.add(c)
                chosen.append(c)
                if len(chosen) == cap:
                    break
    return chosen


@dataclass
class RunResult:
    """Outcome of one AL or baseline run."""

    state: LearnerState
    committee: Committee
    met: bool
    metrics: dict
    cycles: list[dict] = field(default_factory=list)
    reference_scores: dict[str, float] = field(default_factory=dict)

    def final_states(self, family: str = "hadamard_k") -> list[StateVector]:
        return self.committee.states(self.state.reference, family)


class _CurveLogger:
    """Turns per-epoch training callbacks into learning-curve records."""

    def __init__(self, observers, pool, reference, family, target, epochs, log_every, phase, cycle):
        self.observers = list(observers)
        self.pool = pool
        self.q = EmpiricalDistribution.from_pool(pool)
        self.reference = reference
        self.family = family
        self.target = target
        self.epochs = epochs
        self.log_every = log_every
        self.phase = phase
        self.cycle = cycle

    def __call__(self, member: int, epoch: int, wf: ComplexRbmWavefunction) -> None:
        if epoch % self.log_every and epoch != self.epochs:
            return
        vec = psi_vector(wf)
        kl = kl_divergence(self.q, wf, family=self.family, reference=self.reference, vector=vec)
        omf = float("nan")
        if self.target is not None:
            n = wf.num_qubits
            comp = vec
            if self.reference != "z" * n:
                comp = rotate_amplitudes(vec, self.reference, self.family, None, inverse=True)
            f = abs(np.vdot(comp, self.target.amplitudes)) ** 2
            omf = 1.0 - rescaled_fidelity(min(f, 1.0), n)
        record = {
            "phase": self.phase,
            "cycle": self.cycle,
            "epoch": self.cycle * self.epochs + epoch,
            "member": member,
            "one_minus_rescaled_fidelity": omf,
            "kl": kl,
            "n_samples": len(self.pool),
        }
        for obs in self.observers:
            obs(record)


def _uniform_others(reference: str) -> list[str]:
    n = len(reference)
    return [a * n for a in UNIFORM_AXES if a * n != reference]


def al_loop(
    source,
    policy: QueryPolicy,
    cfg: TrainConfig,
    *,
    n_rbm: int = 4,
    seed: int = 0,
    family: str = "hadamard_k",
    target: StateVector | None = None,
    observers: Iterable[Observer] = (),
) -> RunResult:
    """Run the active-learning tomography loop until the stopping rule or the query cap.

    Raises LoopAborted (with the partial RunResult attached) when the source
    runs dry or training diverges.
    """
    observers = list(observers)
    n = source.num_qubits
    init_scale = cfg.resolved_init_scale(n)

    def factory() -> Committee:
        return Committee.create(n, n_rbm, seed, cfg.num_hidden, init_scale)

    boot = bootstrap(source, policy.bootstrap_per_basis)
    bag_rng = np.random.default_rng([seed, 0xB0]) if policy.reference_resample else None
    reference, ref_scores = select_reference(
        boot, factory, cfg, family, policy.reference_epoch_fraction, policy.reference_score, bag_rng
    )
    committee = factory()
    fp = committee.fingerprint()
    pool = boot.select(reference)
    state = LearnerState(reference, pool, bootstrap_size=len(pool))
    result = RunResult(state, committee, False, {}, [], ref_scores)

    query_rng = np.random.default_rng([seed, 0x51])
    forced: deque[str] = deque()
    reference_streak = 0
    cycle = 0
    try:
        while True:
            committee.reset()
            if committee.fingerprint() != fp:
                raise RuntimeError("committee initial parameters changed between cycles")
            logger = None
            if observers:
                logger = _CurveLogger(observers, pool, reference, family, target, cfg.epochs, cfg.log_every, "al", cycle)
            committee.train(pool, reference, cfg, family, cycle, logger)
            met, metrics = policy.stop.evaluate(committee.states(reference, family), target)
            result.met, result.metrics = met, metrics
            result.cycles.append({"cycle": cycle, "n_tot": state.n_tot, "met": met, "metrics": metrics})
            if met or state.n_queries >= policy.max_queries:
                break

            if forced:
                config, rule = forced.popleft(), "forced"
            else:
                vectors = committee.vectors()
                kind, _, _ = disagreement_amplitude_vs_phase(vectors)
                if kind == "amplitude":
                    config, rule = reference, "4a"
                else:
                    cands = candidate_configs(n, policy.resolved_cap(n), query_rng)
                    config, _ = select_query_config(vectors, cands, reference, family)
                    rule = "4b"
            added = policy.n_per_query * (policy.reference_multiplier if config == reference else 1)
            pool.extend(source.measure(config, added))
            state.query_log.append(QueryRecord(state.n_queries + 1, config, added, rule))

            if rule != "forced":
                reference_streak = reference_streak + 1 if config == reference else 0
                if reference_streak >= 2:
                    forced.extend(_uniform_others(reference))
                    reference_streak = 0
            cycle += 1
    except (RuntimeError, FloatingPointError, ValueError) as err:
        raise LoopAborted(f"active-learning run aborted: {err}", result) from err
    return result


def baseline_budget(state: LearnerState) -> list[int]:
    """Per-config sample counts of a finished AL run, reference count first."""
    counts = state.pool.config_counts()
    ref = counts.pop(state.reference, 0)
    return [ref, *counts.values()]


def random_configs(num_qubits: int, count: int, rng: np.random.Generator, exclude: Iterable[str] = ()) -> list[str]:
    seen = set(exclude)
    if count > 3**num_qubits - len(seen):
        raise ValueError(f"cannot draw {count} distinct configs for {num_qubits} qubits")
    out: list[str] = []
    while len(out) < count:
        c = "".join(rng.choice(list("xyz"), size=num_qubits))
        if c not in seen:
            seen.add(c)
            out.append(c)
    return out


def baseline_run(
    source,
    budget: list[int],
    cfg: TrainConfig,
    rng: np.random.Generator,
    *,
    n_rbm: int = 4,
    seed: int = 0,
    family: str = "hadamard_k",
    target: StateVector | None = None,
    stop: StoppingRule | None = None,
    observers: Iterable[Observer] = (),
) -> RunResult:
    """Train once on a budget-matched pool: zz..z reference plus random configs.

    ``budget[0]`` snapshots go to zz..z and each further entry to its own
    uniformly drawn config.
    """
    if not budget or sum(budget) <= 0 or min(budget) < 0:
        raise ValueError(f"invalid sample budget {budget!r}")
    n = source.num_qubits
    reference = "z" * n
    configs = [reference, *random_configs(n, len(budget) - 1, rng, exclude=[reference])]
    pool = SnapshotPool(n)
    committee = Committee.create(n, n_rbm, seed, cfg.num_hidden, cfg.resolved_init_scale(n))
    state = LearnerState(reference, pool, bootstrap_size=0)
    result = RunResult(state, committee, False, {})
    stop = stop or StoppingRule("none")
    try:
        for config, count in zip(configs, budget):
            if count:
                pool.extend(source.measure(config, count))
        logger = None
        observers = list(observers)
        if observers:
            logger = _CurveLogger(observers, pool, reference, family, target, cfg.epochs, cfg.log_every, "baseline", 0)
        committee.train(pool, reference, cfg, family, 0, logger)
        met, metrics = stop.evaluate(committee.states(reference, family), target)
        result.met, result.metrics = met, metrics
        result.cycles.append({"cycle": 0, "n_tot": len(pool), "met": met, "metrics": metrics})
    except (RuntimeError, FloatingPointError, ValueError) as err:
        raise LoopAborted(f"baseline run aborted: {err}", result) from err
    return result
