import itertools

import numpy as np
import pytest

from alqst.quantum import (
    GATE_FAMILIES,
    CapacityError,
    Snapshot,
    SnapshotParseError,
    SnapshotPool,
    StateVector,
    born_probabilities,
    born_sample,
    fidelity,
    read_state,
    readout_equivalent,
    relative_gate,
    rescaled_fidelity,
    rotate_state,
    rotation_gate,
    validate_config,
    write_state,
)
from alqst.models import named_state

from oracles import GATES, rotation_matrix


@pytest.mark.parametrize("family", GATE_FAMILIES)
@pytest.mark.parametrize("axis", "xyz")
def test_gates_unitary(family, axis):
    u = rotation_gate(axis, family).matrix
    assert np.max(np.abs(u @ u.conj().T - np.eye(2))) <= 1e-12


@pytest.mark.parametrize("family", GATE_FAMILIES)
def test_gates_match_printed_matrices(family):
    for axis in "xyz":
        np.testing.assert_allclose(rotation_gate(axis, family).matrix, GATES[family][axis], atol=0)


def test_unknown_family_and_axis():
    with pytest.raises(ValueError):
        rotation_gate("x", "pauli")
    with pytest.raises(ValueError):
        rotation_gate("w")


def test_readout_equivalence_table():
    pairs = {(a, b): readout_equivalent(a, b, "hadamard_k") for a in "xyz" for b in "xyz" if a != b}
    assert pairs[("x", "y")] and pairs[("y", "x")]
    assert sum(pairs.values()) == 2
    assert not any(readout_equivalent(a, b, "rxy") for a in "xyz" for b in "xyz" if a != b)


def test_y_statistics_equal_x_statistics_in_hadamard_k_family():
    rng = np.random.default_rng(3)
    for _ in range(5):
        amps = rng.normal(size=8) + 1j * rng.normal(size=8)
        s = StateVector.from_amplitudes(amps)
        np.testing.assert_allclose(born_probabilities(s, "yyy"), born_probabilities(s, "xxx"), atol=1e-12)


@pytest.mark.parametrize("family", GATE_FAMILIES)
def test_rotate_state_matches_kron_oracle(family):
    rng = np.random.default_rng(0)
    n = 3
    amps = rng.normal(size=2**n) + 1j * rng.normal(size=2**n)
    s = StateVector.from_amplitudes(amps)
    for config in ("".join(c) for c in itertools.product("xyz", repeat=n)):
        want = rotation_matrix(config, family) @ s.amplitudes
        np.testing.assert_allclose(rotate_state(s, config, family).amplitudes, want, atol=1e-12)
        back = rotate_state(rotate_state(s, config, family), config, family, inverse=True)
        np.testing.assert_allclose(back.amplitudes, s.amplitudes, atol=1e-12)


def test_rotation_relative_to_reference():
    rng = np.random.default_rng(1)
    s = StateVector.from_amplitudes(rng.normal(size=4) + 1j * rng.normal(size=4))
    ref = rotate_state(s, "xy")
    via_ref = rotate_state(ref, "zx", reference="xy")
    np.testing.assert_allclose(via_ref.amplitudes, rotate_state(s, "zx").amplitudes, atol=1e-12)
    np.testing.assert_allclose(relative_gate("x", "x"), np.eye(2), atol=1e-15)


def test_ghz_phi_xxx_statistics_derived():
    # [DERIVED] kron oracle: GHZ_phi in xxx gives 1/8 for every outcome
    s = named_state("ghz_phi", 3)
    want = np.abs(rotation_matrix("xxx") @ s.amplitudes) ** 2
    np.testing.assert_allclose(want, np.full(8, 1 / 8), atol=1e-12)
    np.testing.assert_allclose(born_probabilities(s, "xxx"), want, atol=1e-12)


def test_validate_config():
    assert validate_config("XZy", 3) == "xzy"
    for bad in ("", "xa", "xx"):
        with pytest.raises(ValueError):
            validate_config(bad, 3)
    with pytest.raises(TypeError):
        validate_config(3)


def test_born_sample_is_deterministic_and_frequency_correct():
    s = named_state("ghz", 3)
    a = born_sample(s, "zzz", 2000, np.random.default_rng(5))
    b = born_sample(s, "zzz", 2000, np.random.default_rng(5))
    assert a == b
    counts = {o: sum(1 for x in a if x.outcome == o) for o in ("000", "111")}
    assert sum(counts.values()) == 2000
    assert abs(counts["000"] / 2000 - 0.5) < 0.05
    with pytest.raises(ValueError):
        born_sample(s, "zz", 1, np.random.default_rng(0))
    with pytest.raises(ValueError):
        born_sample(s, "zzz", 0, np.random.default_rng(0))


def test_fidelity_and_rescaling():
    a = named_state("ghz", 4)
    b = named_state("ghz_phi", 4)
    assert fidelity(a, a) == pytest.approx(1.0)
    assert fidelity(a, b) == pytest.approx(0.5)
    assert rescaled_fidelity(0.5, 4) == pytest.approx(0.5**0.25)
    with pytest.raises(ValueError):
        fidelity(a, named_state("ghz", 3))


def test_capacity():
    with pytest.raises(CapacityError):
        StateVector(21, np.zeros(1))


def test_state_file_roundtrip_bit_exact(tmp_path):
    rng = np.random.default_rng(2)
    s = StateVector.from_amplitudes(rng.normal(size=16) + 1j * rng.normal(size=16))
    path = tmp_path / "s.bin"
    write_state(s, path)
    raw = path.read_bytes()
    assert len(raw) == 8 + 16 * 16
    assert int.from_bytes(raw[:8], "little") == 4
    back = read_state(path)
    assert np.array_equal(back.amplitudes, s.amplitudes)
    path.write_bytes(raw[:-8])
    with pytest.raises(ValueError):
        read_state(path)


def test_snapshot_text_roundtrip_bit_exact(tmp_path):
    pool = SnapshotPool(3, [Snapshot("zzz", "010"), Snapshot("xyz", "111")])
    path = tmp_path / "p.txt"
    pool.write(path)
    assert path.read_bytes() == b"N 3\nzzz 010\nxyz 111\n"
    again = SnapshotPool.read(path)
    assert list(again) == list(pool)
    again.write(path)
    assert path.read_bytes() == b"N 3\nzzz 010\nxyz 111\n"


@pytest.mark.parametrize(
    "text, line",
    [
        ("", 1),
        ("M 3\n", 1),
        ("N 3\nzzz 010\nzz 01\n", 3),
        ("N 2\nzq 01\n", 2),
        ("N 2\nzz 02\n", 2),
        ("N 2\nzz 01 x\n", 2),
    ],
)
def test_snapshot_parse_errors_carry_line_numbers(text, line):
    with pytest.raises(SnapshotParseError) as err:
        SnapshotPool.from_text(text)
    assert err.value.line == line
    assert f"line {line}" in str(err.value)


def test_pool_bookkeeping():
    pool = SnapshotPool(2)
    pool.extend([Snapshot("zz", "00"), Snapshot("xx", "01"), Snapshot("zz", "11")])
    assert pool.config_counts() == {"zz": 2, "xx": 1}
    assert pool.distinct_configs == ["zz", "xx"]
    assert len(pool.select("zz")) == 2
    assert pool.outcomes.shape == (3, 2)
    with pytest.raises(ValueError):
        pool.add(Snapshot("zz", "0"))
