"""Experiment orchestration: TOML configs, per-seed runs, result files.

A run directory holds manifest.json plus, per arm (``al`` / ``baseline``),
learning_curve.csv, query_log.json, observables.json and summary.json. Single
arm modes write the arm files at the top level; compare mode uses ``al/`` and
``baseline/`` subdirectories.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

try:
    import tomllib
except ImportError:  # python < 3.11
    import tomli as tomllib

from alqst import __version__
from alqst.committee import (
    LoopAborted,
    QueryPolicy,
    RunResult,
    StoppingRule,
    al_loop,
    baseline_budget,
    baseline_run,
)
from alqst.models import NAMED_STATES, KcsSpec, XxzSpec, ground_state, named_state
from alqst.observables import density_vector, greens_vector, observable_report, relative_diff
from alqst.quantum import GATE_FAMILIES, SnapshotPool, StateVector, read_state
from alqst.rbm import EmpiricalDistribution, TrainConfig, kl_divergence
from alqst.sources import ReplaySource, SimulatorSource

MODES = ("al", "baseline", "compare", "sweep")
CURVE_COLUMNS = ("seed", "epoch", "member", "one_minus_rescaled_fidelity", "kl", "n_samples")

EXIT_MET = 0
EXIT_MAX_QUERIES = 2
EXIT_CONFIG = 3
EXIT_ABORTED = 4
EXIT_BUDGET = 5


class ConfigError(ValueError):
    pass


class BudgetMismatch(RuntimeError):
    pass


@dataclass
class TargetConfig:
    kind: str = "named"  # named | xxz | kcs | state_file | snapshots
    name: str = "ghz_phi"
    num_qubits: int = 5
    L: int = 8
    J: float = 1.0
    Delta: float = 0.0
    t: float = 1.0
    h: float = 0.0
    mu: float = 1e-7
    path: str = ""  # snapshot file (snapshots) or binary state (state_file)
    state_path: str = ""  # optional exact state used to score a replayed run
    tol: float = 1e-8

    def validate(self) -> None:
        kinds = ("named", "xxz", "kcs", "state_file", "snapshots")
        if self.kind not in kinds:
            raise ConfigError(f"target.kind must be one of {kinds}, got {self.kind!r}")
        if self.kind == "named" and self.name not in NAMED_STATES:
            raise ConfigError(f"target.name must be one of {NAMED_STATES}")
        if self.kind in ("state_file", "snapshots"):
            if not self.path:
                raise ConfigError(f"target.path is required for kind {self.kind!r}")
            if not Path(self.path).is_file():
                raise ConfigError(f"target.path {self.path!r} does not exist")
        if self.state_path and not Path(self.state_path).is_file():
            raise ConfigError(f"target.state_path {self.state_path!r} does not exist")


@dataclass
class SweepConfig:
    axis: str = "n_samples"  # or n_configs
    values: list[int] = field(default_factory=list)
    n_samples: int = 100  # held fixed when sweeping n_configs
    n_configs: int = 6  # held fixed when sweeping n_samples

    def validate(self) -> None:
        if self.axis not in ("n_samples", "n_configs"):
            raise ConfigError("sweep.axis must be 'n_samples' or 'n_configs'")
        if not self.values:
            raise ConfigError("sweep.values must be nonempty")
        if min(self.values) < 1 or self.n_samples < 1 or self.n_configs < 1:
            raise ConfigError("sweep values must be >= 1")


@dataclass
class ExperimentConfig:
    target: TargetConfig = field(default_factory=TargetConfig)
    gate_family: str = "hadamard_k"
    policy: QueryPolicy = field(default_factory=QueryPolicy)
    train: TrainConfig = field(default_factory=TrainConfig)
    n_rbm: int = 4
    seeds: list[int] = field(default_factory=lambda: [0])
    output_dir: str = "runs/default"
    mode: str = "al"
    budget: list[int] = field(default_factory=list)  # baseline mode without an AL run
    sweep: SweepConfig = field(default_factory=SweepConfig)
    save_checkpoints: bool = True

    def validate(self) -> None:
        self.target.validate()
        if self.gate_family not in GATE_FAMILIES:
            raise ConfigError(f"gate_family must be one of {GATE_FAMILIES}")
        if self.mode not in MODES:
            raise ConfigError(f"mode must be one of {MODES}")
        if not self.seeds:
            raise ConfigError("seeds must be nonempty")
        if any(s < 0 for s in self.seeds):
            raise ConfigError("seeds must be non-negative")
        if self.n_rbm < 1:
            raise ConfigError("n_rbm must be >= 1")
        if self.mode == "baseline" and not self.budget:
            raise ConfigError("baseline mode needs a budget (list of per-config sample counts)")
        if self.mode == "sweep":
            self.sweep.validate()

    def to_dict(self) -> dict:
        return asdict(self)


def _build(cls, data: dict, where: str):
    known = {f.name for f in fields(cls)}
    unknown = set(data) - known
    if unknown:
        raise ConfigError(f"unknown keys in [{where}]: {sorted(unknown)}")
    try:
        return cls(**data)
    except (TypeError, ValueError) as err:
        raise ConfigError(f"[{where}]: {err}") from err


def config_from_dict(data: dict) -> ExperimentConfig:
    data = dict(data)
    target = _build(TargetConfig, data.pop("target", {}), "target")
    policy_data = dict(data.pop("policy", {}))
    stop = _build(StoppingRule, policy_data.pop("stop", {}), "policy.stop")
    policy = _build(QueryPolicy, {**policy_data, "stop": stop}, "policy")
    train = _build(TrainConfig, data.pop("train", {}), "train")
    sweep = _build(SweepConfig, data.pop("sweep", {}), "sweep")
    cfg = _build(ExperimentConfig, {**data, "target": target, "policy": policy, "train": train, "sweep": sweep}, "top level")
    cfg.validate()
    return cfg


def load_config(path: str | Path) -> ExperimentConfig:
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file {str(path)!r} not found")
    try:
        data = tomllib.loads(path.read_text())
    except tomllib.TOMLDecodeError as err:
        raise ConfigError(f"{path}: {err}") from err
    return config_from_dict(data)


@dataclass
class Target:
    num_qubits: int
    state: StateVector | None
    pool: SnapshotPool | None = None
    info: dict = field(default_factory=dict)

    def source(self, seed: int, stream: int, family: str):
        if self.pool is not None:
            return ReplaySource(self.pool)
        return SimulatorSource(self.state, np.random.default_rng([seed, stream]), family)


def resolve_target(tc: TargetConfig) -> Target:
    info: dict = {"kind": tc.kind}
    if tc.kind == "named":
        state = named_state(tc.name, tc.num_qubits)
        info.update(name=tc.name, num_qubits=tc.num_qubits)
    elif tc.kind in ("xxz", "kcs"):
        spec = XxzSpec(tc.L, tc.J, tc.Delta) if tc.kind == "xxz" else KcsSpec(tc.L, tc.t, tc.h, tc.mu)
        gs = ground_state(spec, tol=tc.tol)
        state = gs.state
        info.update(spec=asdict(spec), energy=gs.energy, residual_norm=gs.residual_norm,
                    sz_total=gs.sz_total, boundary="open, nearest neighbour")
    elif tc.kind == "state_file":
        state = read_state(tc.path)
        info.update(path=tc.path)
    else:
        pool = SnapshotPool.read(tc.path)
        state = read_state(tc.state_path) if tc.state_path else None
        if state is not None and state.num_qubits != pool.num_qubits:
            raise ConfigError("state_path and snapshot file disagree on the qubit count")
        info.update(path=tc.path, snapshots=len(pool))
        return Target(pool.num_qubits, state, pool, info)
    return Target(state.num_qubits, state, None, info)


# ---------------------------------------------------------------- per-seed work


def _mean_std(values) -> tuple[float, float]:
    arr = np.asarray(values, dtype=float)
    std = float(arr.std(ddof=1)) if arr.size > 1 else 0.0
    return float(arr.mean()), std


def _arm_outputs(result: RunResult, target: Target, cfg: ExperimentConfig, seed: int, curve: list[dict], status: str) -> dict:
    """Everything one arm of one seed contributes to the result files."""
    family = cfg.gate_family
    state = result.state
    summary: dict = {
        "seed": seed,
        "status": status,
        "reference": state.reference,
        "n_tot": state.n_tot,
        "n_queries": state.n_queries,
        "n_config": state.n_config,
        "bootstrap_size": state.bootstrap_size,
        "met": result.met,
        "reference_scores": result.reference_scores,
        "config_counts": state.pool.config_counts(),
    }
    observables: dict = {"members": []}
    trained = status != "aborted" or bool(result.metrics)
    if trained and len(state.pool):
        states = result.final_states(family)
        q = EmpiricalDistribution.from_pool(state.pool)
        kls = [kl_divergence(q, wf, family=family, reference=state.reference) for wf in result.committee.members]
        reports = [observable_report(s, target.state, kl).to_dict() for s, kl in zip(states, kls)]
        observables["members"] = reports
        summary["kl"] = _mean_std(kls)
        if target.state is not None:
            summary["rescaled_fidelity"] = _mean_std([r["rescaled_fidelity"] for r in reports])
            if target.num_qubits >= 3:
                n_t, c_t = density_vector(target.state), greens_vector(target.state)
                if np.linalg.norm(n_t) > 0:
                    summary["density_rel_diff"] = _mean_std([relative_diff(density_vector(s), n_t) for s in states])
                if np.linalg.norm(c_t) > 0:
                    summary["greens_rel_diff"] = _mean_std([relative_diff(greens_vector(s), c_t) for s in states])
            if target.num_qubits >= 2:
                summary["correlators"] = {
                    a: _mean_std([r["correlators"][a] for r in reports]) for a in "xyz"
                }
    if target.state is not None:
        observables["target"] = observable_report(target.state).to_dict()
    return {
        "summary": summary,
        "observables": observables,
        "query_log": state.query_log_json(),
        "curve": [{"seed": seed, **rec} for rec in curve],
        "members": [wf.to_dict() for wf in result.committee.members],
    }


def _run_seed(cfg: ExperimentConfig, target: Target, seed: int, mode: str) -> dict:
    """Run one seed in ``mode`` (al, baseline or compare); returns per-arm outputs."""
    family = cfg.gate_family
    out: dict = {"seed": seed, "arms": {}, "error": None}
    al_result = None
    if mode in ("al", "compare"):
        curve: list[dict] = []
        try:
            al_result = al_loop(
                target.source(seed, 1, family), cfg.policy, cfg.train,
                n_rbm=cfg.n_rbm, seed=seed, family=family, target=target.state, observers=[curve.append],
            )
            status = "met" if al_result.met else "max_queries"
            if cfg.policy.stop.variant == "none":
                status = "max_queries"
        except LoopAborted as err:
            out["error"] = str(err)
            al_result = err.partial
            status = "aborted"
        out["arms"]["al"] = _arm_outputs(al_result, target, cfg, seed, curve, status)
        if status == "aborted":
            return out
    if mode in ("baseline", "compare"):
        budget = list(cfg.budget) if mode == "baseline" else baseline_budget(al_result.state)
        if mode == "compare":
            check_budget_parity(al_result.state, budget)
        curve = []
        try:
            res = baseline_run(
                target.source(seed, 2, family), budget, cfg.train, np.random.default_rng([seed, 3]),
                n_rbm=cfg.n_rbm, seed=seed, family=family, target=target.state,
                stop=cfg.policy.stop, observers=[curve.append],
            )
            status = "met" if res.met else "not_met"
        except LoopAborted as err:
            out["error"] = str(err)
            res = err.partial
            status = "aborted"
        if mode == "compare" and status != "aborted":
            check_budget_parity(al_result.state, res.state.pool.config_counts(), after=True)
        out["arms"]["baseline"] = _arm_outputs(res, target, cfg, seed, curve, status)
    return out


def check_budget_parity(al_state, budget, after: bool = False) -> None:
    """Baseline must use the AL run's N_tot and N_config exactly."""
    counts = list(budget.values()) if isinstance(budget, dict) else list(budget)
    n_tot, n_config = sum(counts), sum(1 for c in counts if c > 0)
    if n_tot != al_state.n_tot or n_config != al_state.n_config:
        when = "after" if after else "before"
        raise BudgetMismatch(
            f"budget parity violated {when} training: baseline N_tot={n_tot}, N_config={n_config}; "
            f"AL N_tot={al_state.n_tot}, N_config={al_state.n_config}"
        )


# ---------------------------------------------------------------- file output


def _fmt(v) -> str:
    if isinstance(v, float):
        return "inf" if math.isinf(v) else ("nan" if math.isnan(v) else repr(v))
    return str(v)


def curve_csv(rows: list[dict]) -> str:
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(CURVE_COLUMNS)
    for r in rows:
        w.writerow([_fmt(r[c]) for c in CURVE_COLUMNS])
    return buf.getvalue()


def _json_default(o):
    if isinstance(o, np.generic):
        return o.item()
    if isinstance(o, np.ndarray):
        return o.tolist()
    raise TypeError(f"not JSON serializable: {type(o).__name__}")


def _write_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2, sort_keys=True, default=_json_default) + "\n")


def _aggregate(per_seed: list[dict]) -> dict:
    """Across-seed mean and standard error of the member means."""
    agg: dict = {"n_seeds": len(per_seed)}
    for key in ("rescaled_fidelity", "kl", "density_rel_diff", "greens_rel_diff"):
        vals = [s[key][0] for s in per_seed if key in s]
        if vals:
            arr = np.asarray(vals, dtype=float)
            sem = float(arr.std(ddof=1) / np.sqrt(arr.size)) if arr.size > 1 else 0.0
            agg[key] = {"mean": float(arr.mean()), "sem": sem, "median": float(np.median(arr))}
    for key in ("n_tot", "n_queries", "n_config"):
        agg[key] = [s[key] for s in per_seed]
    agg["references"] = [s["reference"] for s in per_seed]
    return agg


def design_decisions(cfg: ExperimentConfig, num_qubits: int) -> dict:
    return {
        "bit_order": "qubit 0 is the most significant bit; config/outcome strings read left to right",
        "spin_convention": "|0> has S^z = +1/2",
        "measurement_convention": "apply the listed gate to the ket, then read out in the computational basis",
        "gate_family": cfg.gate_family,
        "num_hidden": cfg.train.num_hidden if cfg.train.num_hidden is not None else num_qubits,
        "init_scale": cfg.train.resolved_init_scale(num_qubits),
        "init_distribution": "weights uniform in [-init_scale, init_scale], biases zero",
        "batch_size": cfg.train.batch_size,
        "negative_phase": "exact enumeration" if cfg.train.exact_negative_phase else f"CD-{cfg.train.cd_steps}",
        "amplitude_from_rotated": cfg.train.amplitude_from_rotated,
        "candidate_cap": cfg.policy.resolved_cap(num_qubits),
        "reference_epochs": max(1, int(round(cfg.train.epochs * cfg.policy.reference_epoch_fraction))),
        "reference_score": cfg.policy.reference_score,
        "reference_resample": cfg.policy.reference_resample,
        "reference_tie_order": "z < x < y; readout-equivalent bases tie exactly",
        "phase_gauge": "relative to the largest mean-amplitude basis state, circular variance",
        "stop_uses": "member mean",
        "forced_queries": "two other uniform bases injected as the next two queries",
        "pool_after_reference": "bootstrap snapshots of the chosen reference basis only",
        "baseline_reference": "z" * num_qubits,
        "greens_center": "L/2 for even L, (L+1)/2 for odd L; real part reported",
        "chain_boundary": "open",
        "summary_statistics": "mean and sample std over members; across seeds mean and standard error",
    }


def _write_arm(dirpath: Path, arm: str, seeds_out: list[dict], save_checkpoints: bool, epochs: int) -> dict:
    dirpath.mkdir(parents=True, exist_ok=True)
    outs = [s["arms"][arm] for s in seeds_out if arm in s["arms"]]
    rows = [r for o in outs for r in o["curve"]]
    (dirpath / "learning_curve.csv").write_text(curve_csv(rows))
    _write_json(dirpath / "query_log.json", {str(o["summary"]["seed"]): o["query_log"] for o in outs})
    _write_json(dirpath / "observables.json", {str(o["summary"]["seed"]): o["observables"] for o in outs})
    per_seed = [o["summary"] for o in outs]
    summary = {"per_seed": per_seed, "aggregate": _aggregate(per_seed)}
    _write_json(dirpath / "summary.json", summary)
    if save_checkpoints:
        for o in outs:
            cdir = dirpath / "checkpoints" / f"seed_{o['summary']['seed']}"
            cdir.mkdir(parents=True, exist_ok=True)
            for i, m in enumerate(o["members"]):
                # same layout as rbm.save_checkpoint, plus the member index
                payload = {"num_qubits": m["lambda"]["num_visible"], "seed": o["summary"]["seed"],
                           "epoch": epochs, "member": i, **m}
                _write_json(cdir / f"member_{i}.json", payload)
    return summary


def run(cfg: ExperimentConfig, workers: int = 1) -> tuple[int, Path]:
    """Execute ``cfg`` and write the run directory; returns (exit code, directory)."""
    cfg.validate()
    out_dir = Path(cfg.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    target = resolve_target(cfg.target)
    manifest = {
        "version": __version__,
        "config": cfg.to_dict(),
        "target_info": target.info,
        "design_decisions": design_decisions(cfg, target.num_qubits),
        "status": "running",
    }
    _write_json(out_dir / "manifest.json", manifest)
    if cfg.mode == "sweep":
        code = _run_sweep(cfg, target, out_dir)
        manifest["status"] = "complete"
        _write_json(out_dir / "manifest.json", manifest)
        return code, out_dir

    seeds_out: list[dict] = []
    budget_error = None
    try:
        if workers > 1 and len(cfg.seeds) > 1:
            with ProcessPoolExecutor(max_workers=workers) as pool:
                futures = [pool.submit(_run_seed, cfg, target, s, cfg.mode) for s in cfg.seeds]
                seeds_out = [f.result() for f in futures]
        else:
            seeds_out = [_run_seed(cfg, target, s, cfg.mode) for s in cfg.seeds]
    except BudgetMismatch as err:
        budget_error = str(err)

    arms = ["al", "baseline"] if cfg.mode == "compare" else [cfg.mode]
    summaries = {}
    for arm in arms:
        d = out_dir / arm if cfg.mode == "compare" else out_dir
        summaries[arm] = _write_arm(d, arm, seeds_out, cfg.save_checkpoints, cfg.train.epochs)

    errors = [s["error"] for s in seeds_out if s["error"]]
    if budget_error:
        manifest.update(status="aborted", errors=[budget_error], partial=True)
        code = EXIT_BUDGET
    elif errors:
        manifest.update(status="aborted", errors=errors, partial=True)
        code = EXIT_ABORTED
    else:
        manifest["status"] = "complete"
        primary = summaries["al" if "al" in summaries else arms[0]]["per_seed"]
        code = EXIT_MET if all(s["met"] for s in primary) else EXIT_MAX_QUERIES
    _write_json(out_dir / "manifest.json", manifest)
    return code, out_dir


def sweep_budget(n_samples: int, n_configs: int) -> list[int]:
    """Split ``n_samples`` as evenly as possible over ``n_configs`` configs."""
    if n_configs > n_samples:
        raise ConfigError(f"cannot spread {n_samples} samples over {n_configs} configs")
    base, extra = divmod(n_samples, n_configs)
    return [base + (i < extra) for i in range(n_configs)]


def _run_sweep(cfg: ExperimentConfig, target: Target, out_dir: Path) -> int:
    if target.state is None:
        raise ConfigError("sweep mode needs an exact target state to score reconstructions")
    sw = cfg.sweep
    rows = []
    for value in sw.values:
        n_samples = value if sw.axis == "n_samples" else sw.n_samples
        n_configs = value if sw.axis == "n_configs" else sw.n_configs
        budget = sweep_budget(n_samples, n_configs)
        fids = []
        for seed in cfg.seeds:
            res = baseline_run(
                target.source(seed, 2, cfg.gate_family), budget, cfg.train, np.random.default_rng([seed, 3]),
                n_rbm=cfg.n_rbm, seed=seed, family=cfg.gate_family, target=target.state,
                stop=StoppingRule("fidelity", cfg.policy.stop.threshold),
            )
            fids.extend(res.metrics["rescaled_fidelity"])
        mean, std = _mean_std(fids)
        rows.append({"value": value, "mean_rescaled_fidelity": mean, "std_rescaled_fidelity": std, "n": len(fids)})
    buf = io.StringIO()
    w = csv.writer(buf, lineterminator="\n")
    w.writerow(["value", "mean_rescaled_fidelity", "std_rescaled_fidelity", "n"])
    for r in rows:
        w.writerow([r["value"], _fmt(r["mean_rescaled_fidelity"]), _fmt(r["std_rescaled_fidelity"]), r["n"]])
    (out_dir / "sweep.csv").write_text(buf.getvalue())
    return EXIT_MET


def ingest_snapshots(path: str | Path) -> SnapshotPool:
    """Read and validate a snapshot file; parse errors carry the line number."""
    return SnapshotPool.read(path)
