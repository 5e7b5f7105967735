import csv
import json

import numpy as np
import pytest

import alqst.harness as hz
from alqst.cli import main
from alqst.harness import (
    CURVE_COLUMNS,
    EXIT_ABORTED,
    EXIT_BUDGET,
    EXIT_CONFIG,
    EXIT_MAX_QUERIES,
    EXIT_MET,
    BudgetMismatch,
    ConfigError,
    check_budget_parity,
    config_from_dict,
    load_config,
    sweep_budget,
)
from alqst.committee import LearnerState
from alqst.models import named_state
from alqst.quantum import Snapshot, SnapshotPool, born_sample, read_state
from alqst.rbm import load_checkpoint

TINY = """
seeds = [0]
n_rbm = 2
[target]
kind = "named"
name = "{name}"
num_qubits = {n}
[train]
epochs = {epochs}
exact_negative_phase = true
log_every = {log_every}
[policy]
bootstrap_per_basis = {boot}
max_queries = {maxq}
reference_epoch_fraction = 1.0
[policy.stop]
variant = "fidelity"
threshold = {thr}
"""


def _cfg(tmp_path, name="ghz_phi", n=3, epochs=10, log_every=5, boot=4, maxq=2, thr=0.9999, extra=""):
    path = tmp_path / f"cfg_{name}_{epochs}_{maxq}_{thr}.toml"
    path.write_text(TINY.format(name=name, n=n, epochs=epochs, log_every=log_every, boot=boot, maxq=maxq, thr=thr) + extra)
    return str(path)


# -- config parsing -------------------------------------------------------------


def test_config_roundtrip_and_defaults(tmp_path):
    cfg = load_config(_cfg(tmp_path))
    assert cfg.n_rbm == 2 and cfg.train.epochs == 10 and cfg.policy.stop.threshold == 0.9999
    assert cfg.gate_family == "hadamard_k"
    again = config_from_dict(json.loads(json.dumps(cfg.to_dict())))
    assert again == cfg


@pytest.mark.parametrize(
    "data",
    [
        {"bogus": 1},
        {"train": {"epochs": -3}},
        {"policy": {"stop": {"variant": "nope"}}},
        {"target": {"kind": "named", "name": "w"}},
        {"target": {"kind": "snapshots", "path": "/nonexistent"}},
        {"gate_family": "pauli"},
        {"mode": "baseline"},
        {"seeds": []},
    ],
)
def test_config_errors(data):
    with pytest.raises(ConfigError):
        config_from_dict(data)


def test_bad_toml(tmp_path):
    p = tmp_path / "bad.toml"
    p.write_text("seeds = [0\n")
    with pytest.raises(ConfigError):
        load_config(p)
    with pytest.raises(ConfigError):
        load_config(tmp_path / "missing.toml")


def test_sweep_budget():
    assert sweep_budget(10, 3) == [4, 3, 3]
    assert sweep_budget(6, 6) == [1] * 6
    with pytest.raises(ConfigError):
        sweep_budget(2, 3)


def test_check_budget_parity():
    st = LearnerState("zz", SnapshotPool(2, [Snapshot("zz", "00")] * 3 + [Snapshot("xx", "01")]), 3)
    check_budget_parity(st, [3, 1])
    check_budget_parity(st, {"zz": 2, "xy": 2})
    for bad in ([4], [3, 2], [2, 1, 1]):
        with pytest.raises(BudgetMismatch):
            check_budget_parity(st, bad)


# -- CLI: state / sample / observables --------------------------------------------


def test_cli_state_and_sample(tmp_path, capsys):
    state = tmp_path / "s.bin"
    assert main(["state", "--kind", "named", "--name", "ghz_phi", "-n", "3", "--out", str(state)]) == EXIT_MET
    assert np.array_equal(read_state(state).amplitudes, named_state("ghz_phi", 3).amplitudes)
    snaps = tmp_path / "p.txt"
    rc = main(["sample", "--state", str(state), "--bootstrap", "5", "--basis", "xxz:2", "--seed", "4", "--out", str(snaps)])
    assert rc == EXIT_MET
    lines = snaps.read_text().splitlines()
    assert lines[0] == "N 3" and len(lines) == 1 + 17
    pool = SnapshotPool.read(snaps)
    assert pool.config_counts() == {"zzz": 5, "xxx": 5, "yyy": 5, "xxz": 2}
    first = snaps.read_bytes()
    main(["sample", "--state", str(state), "--bootstrap", "5", "--basis", "xxz:2", "--seed", "4", "--out", str(snaps)])
    assert snaps.read_bytes() == first


def test_cli_kcs_state(tmp_path):
    out = tmp_path / "k.bin"
    assert main(["state", "--kind", "kcs", "--L", "7", "--h", "1", "--mu", "1", "--out", str(out)]) == EXIT_MET
    assert read_state(out).num_qubits == 7


def test_cli_input_errors(tmp_path, capsys):
    bad = tmp_path / "bad.txt"
    bad.write_text("N 2\nzz 00\nzz 0x\n")
    cfg = tmp_path / "c.toml"
    cfg.write_text(f'[target]\nkind = "snapshots"\npath = "{bad}"\n')
    assert main(["al-run", "--config", str(cfg), "--out", str(tmp_path / "r")]) == EXIT_CONFIG
    assert "line 3" in capsys.readouterr().err
    assert main(["al-run"]) == EXIT_CONFIG
    assert main(["sample", "--state", str(tmp_path / "none.bin"), "--bootstrap", "1"]) == EXIT_CONFIG
    assert main(["sample", "--basis", "zz"]) == EXIT_CONFIG


def test_cli_observables(tmp_path):
    state = tmp_path / "s.bin"
    main(["state", "--kind", "kcs", "--L", "7", "--h", "1", "--mu", "1", "--out", str(state)])
    out = tmp_path / "obs"
    assert main(["observables", "--state", str(state), "--target", str(state), "--out", str(out)]) == EXIT_MET
    rep = json.loads((out / "observables.json").read_text())
    assert rep["rescaled_fidelity"] == pytest.approx(1.0)
    rows = list(csv.reader(open(out / "density.csv")))
    assert rows[0] == ["j", "n_j"] and len(rows) == 7
    rows = list(csv.reader(open(out / "greens.csv")))
    assert rows[0] == ["d", "c_d"] and len(rows) == 4
    assert float(rows[1][1]) == pytest.approx(rep["density_vector"][3])


# -- CLI: runs ------------------------------------------------------------------------


def test_al_run_exit_max_queries_and_files(tmp_path):
    out = tmp_path / "run"
    assert main(["al-run", "--config", _cfg(tmp_path), "--out", str(out)]) == EXIT_MAX_QUERIES
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "complete" and "design_decisions" in manifest
    rows = list(csv.reader(open(out / "learning_curve.csv")))
    assert tuple(rows[0]) == CURVE_COLUMNS
    # 3 cycles x 2 members x 2 logged epochs
    assert len(rows) - 1 == 12
    assert sorted({int(r[1]) for r in rows[1:]}) == [5, 10, 15, 20, 25, 30]
    summary = json.loads((out / "summary.json").read_text())
    seed0 = summary["per_seed"][0]
    log = json.loads((out / "query_log.json").read_text())["0"]
    assert seed0["n_queries"] == len(log) == 2
    assert seed0["n_tot"] == seed0["bootstrap_size"] + sum(q["added"] for q in log)
    assert sum(seed0["config_counts"].values()) == seed0["n_tot"]
    wf, meta = load_checkpoint(out / "checkpoints" / "seed_0" / "member_1.json")
    assert wf.num_qubits == 3 and meta == {"seed": 0, "epoch": 10}
    obs = tmp_path / "obs"
    assert main(["observables", "--checkpoint", str(out / "checkpoints" / "seed_0" / "member_1.json"),
                 "--reference", seed0["reference"], "--out", str(obs)]) == EXIT_MET


def test_al_run_exit_met(tmp_path):
    cfg = _cfg(tmp_path, name="z_spins", epochs=1000, log_every=500, boot=4, maxq=5, thr=0.95)
    assert main(["al-run", "--config", cfg, "--out", str(tmp_path / "r")]) == EXIT_MET


def test_learning_curve_byte_identical(tmp_path):
    cfg = _cfg(tmp_path, extra="")
    a, b, c = tmp_path / "a", tmp_path / "b", tmp_path / "c"
    main(["al-run", "--config", cfg, "--seed", "3", "--out", str(a)])
    main(["al-run", "--config", cfg, "--seed", "3", "--out", str(b)])
    assert (a / "learning_curve.csv").read_bytes() == (b / "learning_curve.csv").read_bytes()
    assert (a / "summary.json").read_bytes() == (b / "summary.json").read_bytes()
    main(["al-run", "--config", cfg, "--seed", "4", "--out", str(c)])
    assert (a / "learning_curve.csv").read_bytes() != (c / "learning_curve.csv").read_bytes()


def test_workers_do_not_change_results(tmp_path):
    cfg = _cfg(tmp_path, maxq=1)
    text = open(cfg).read().replace("seeds = [0]", "seeds = [0, 1]")
    open(cfg, "w").write(text)
    main(["al-run", "--config", cfg, "--out", str(tmp_path / "w1"), "--workers", "1"])
    main(["al-run", "--config", cfg, "--out", str(tmp_path / "w2"), "--workers", "2"])
    assert (tmp_path / "w1" / "learning_curve.csv").read_bytes() == (tmp_path / "w2" / "learning_curve.csv").read_bytes()


def test_compare_budget_parity(tmp_path):
    out = tmp_path / "cmp"
    assert main(["compare", "--config", _cfg(tmp_path), "--out", str(out)]) == EXIT_MAX_QUERIES
    al = json.loads((out / "al" / "summary.json").read_text())["per_seed"][0]
    bl = json.loads((out / "baseline" / "summary.json").read_text())["per_seed"][0]
    assert al["n_tot"] == bl["n_tot"] and al["n_config"] == bl["n_config"]
    assert bl["reference"] == "zzz"
    assert (out / "baseline" / "learning_curve.csv").exists()


def test_compare_aborts_on_budget_mismatch(tmp_path, monkeypatch):
    monkeypatch.setattr(hz, "baseline_budget", lambda st: [st.n_tot + 1])
    out = tmp_path / "cmp"
    assert main(["compare", "--config", _cfg(tmp_path, maxq=1), "--out", str(out)]) == EXIT_BUDGET
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "aborted" and "parity" in manifest["errors"][0]


def test_baseline_run_cli_budget(tmp_path):
    out = tmp_path / "bl"
    rc = main(["baseline-run", "--config", _cfg(tmp_path), "--budget", "6,2,1", "--out", str(out)])
    assert rc == EXIT_MAX_QUERIES
    s = json.loads((out / "summary.json").read_text())["per_seed"][0]
    assert s["n_tot"] == 9 and s["n_config"] == 3
    assert main(["baseline-run", "--config", _cfg(tmp_path), "--budget", "6,x", "--out", str(out)]) == EXIT_CONFIG
    assert main(["baseline-run", "--config", _cfg(tmp_path), "--out", str(out)]) == EXIT_CONFIG


def test_replay_exhaustion_exit_code(tmp_path):
    rng = np.random.default_rng(0)
    target = named_state("ghz", 2)
    pool = SnapshotPool(2)
    for c in ("zz", "xx", "yy"):
        pool.extend(born_sample(target, c, 3, rng))
    snaps = tmp_path / "p.txt"
    pool.write(snaps)
    cfg = tmp_path / "c.toml"
    cfg.write_text(
        f'n_rbm = 2\n[target]\nkind = "snapshots"\npath = "{snaps}"\n'
        "[train]\nepochs = 3\ncd_steps = 1\n[policy]\nbootstrap_per_basis = 3\nmax_queries = 4\n"
        '[policy.stop]\nvariant = "none"\n'
    )
    out = tmp_path / "r"
    assert main(["al-run", "--config", str(cfg), "--out", str(out)]) == EXIT_ABORTED
    manifest = json.loads((out / "manifest.json").read_text())
    assert manifest["status"] == "aborted" and manifest["partial"]
    assert json.loads((out / "summary.json").read_text())["per_seed"][0]["status"] == "aborted"


def test_sweep_single_point_equals_baseline(tmp_path):
    extra = '\n[sweep]\naxis = "n_samples"\nvalues = [9]\nn_configs = 3\n'
    cfg = _cfg(tmp_path, extra=extra)
    out = tmp_path / "sw"
    assert main(["sweep", "--config", cfg, "--out", str(out)]) == EXIT_MET
    rows = list(csv.DictReader(open(out / "sweep.csv")))
    assert len(rows) == 1 and rows[0]["value"] == "9"
    bl = tmp_path / "bl"
    main(["baseline-run", "--config", cfg, "--budget", "3,3,3", "--out", str(bl)])
    s = json.loads((bl / "summary.json").read_text())["per_seed"][0]
    assert float(rows[0]["mean_rescaled_fidelity"]) == pytest.approx(s["rescaled_fidelity"][0], abs=1e-12)
