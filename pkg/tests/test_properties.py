"""Property-based checks of the invariants listed for each module."""

import numpy as np
from hypothesis import given, settings
from hypothesis import strategies as st

from alqst.committee import candidate_configs, config_scores, disagreement_amplitude_vs_phase, select_query_config
from alqst.observables import domain_wall_density, greens_function, center_site
from alqst.quantum import Snapshot, SnapshotPool, StateVector, born_probabilities, rotate_state
from alqst.rbm import (
    ComplexRbmWavefunction,
    EmpiricalDistribution,
    RbmParams,
    kl_divergence,
    partition_exact,
    psi_vector,
    rotated_probabilities,
)

from oracles import rotation_matrix

SETTINGS = settings(max_examples=40, deadline=None)

configs = lambda n: st.text(alphabet="xyz", min_size=n, max_size=n)  # noqa: E731


@st.composite
def wavefunctions(draw, max_n=4):
    n = draw(st.integers(1, max_n))
    h = draw(st.integers(1, n + 1))
    seed = draw(st.integers(0, 2**32 - 1))
    scale = draw(st.floats(0.05, 1.5))
    rng = np.random.default_rng(seed)

    def params():
        return RbmParams(rng.normal(0, scale, (h, n)), rng.normal(0, scale, n), rng.normal(0, scale, h))

    return ComplexRbmWavefunction(params(), params())


@st.composite
def states(draw, min_n=1, max_n=5):
    n = draw(st.integers(min_n, max_n))
    seed = draw(st.integers(0, 2**32 - 1))
    rng = np.random.default_rng(seed)
    return StateVector.from_amplitudes(rng.normal(size=2**n) + 1j * rng.normal(size=2**n))


@SETTINGS
@given(wavefunctions(), st.data())
def test_rotated_distribution_is_normalized(wf, data):
    n = wf.num_qubits
    config = data.draw(configs(n))
    reference = data.draw(configs(n))
    family = data.draw(st.sampled_from(["hadamard_k", "rxy"]))
    p = rotated_probabilities(wf, [config], reference, family)[0]
    assert abs(p.sum() - 1.0) <= 1e-8


@SETTINGS
@given(wavefunctions())
def test_psi_normalized_with_exact_z(wf):
    v = psi_vector(wf, np.log(partition_exact(wf.lam)))
    assert abs(np.sum(np.abs(v) ** 2) - 1.0) <= 1e-8


@SETTINGS
@given(states(max_n=4), st.data())
def test_rotation_preserves_norm_and_matches_kron(state, data):
    config = data.draw(configs(state.num_qubits))
    family = data.draw(st.sampled_from(["hadamard_k", "rxy"]))
    out = rotate_state(state, config, family)
    assert abs(out.norm - 1.0) <= 1e-12
    np.testing.assert_allclose(out.amplitudes, rotation_matrix(config, family) @ state.amplitudes, atol=1e-12)
    assert abs(born_probabilities(state, config, family).sum() - 1.0) <= 1e-12


@SETTINGS
@given(wavefunctions(max_n=3), st.data())
def test_kl_nonnegative(wf, data):
    n = wf.num_qubits
    snaps = data.draw(
        st.lists(st.tuples(configs(n), st.text(alphabet="01", min_size=n, max_size=n)), min_size=1, max_size=12)
    )
    q = EmpiricalDistribution.from_pool(SnapshotPool(n, [Snapshot(c, o) for c, o in snaps]))
    assert kl_divergence(q, wf) >= 0.0


@SETTINGS
@given(wavefunctions(max_n=3))
def test_kl_zero_when_model_matches(wf):
    # q equal to the exact model distribution on the full support -> KL = 0
    n = wf.num_qubits
    p = np.abs(psi_vector(wf)) ** 2
    q = EmpiricalDistribution({"z" * n: {format(i, f"0{n}b"): float(pi) for i, pi in enumerate(p)}})
    assert abs(kl_divergence(q, wf)) < 1e-10


@SETTINGS
@given(states(min_n=4, max_n=7))
def test_c0_equals_center_density(state):
    L = state.num_qubits
    assert abs(greens_function(state, 0) - domain_wall_density(state, center_site(L))) <= 1e-10


@SETTINGS
@given(states(max_n=4), st.integers(1, 4), st.floats(0, 2 * np.pi), st.data())
def test_identical_members_and_global_phases(state, m, phi, data):
    v = np.stack([state.amplitudes * np.exp(1j * phi * k) for k in range(m)])
    kind, amp, phase = disagreement_amplitude_vs_phase(v)
    assert kind == "amplitude" and amp < 1e-12 and phase < 1e-9
    cands = data.draw(st.lists(configs(state.num_qubits), min_size=1, max_size=6, unique=True))
    best, scores = select_query_config(v, cands, "z" * state.num_qubits)
    assert best == min(cands)
    assert all(s < 1e-12 for s in scores.values())


@SETTINGS
@given(st.integers(1, 9), st.integers(3, 300), st.integers(0, 1000))
def test_candidate_configs_properties(n, cap, seed):
    a = candidate_configs(n, cap, np.random.default_rng(seed))
    assert a == candidate_configs(n, cap, np.random.default_rng(seed))
    assert len(a) == len(set(a)) == min(cap, 3**n)
    assert {ax * n for ax in "xyz"} <= set(a)


@SETTINGS
@given(states(max_n=3), st.data())
def test_config_scores_nonnegative(state, data):
    rng = np.random.default_rng(data.draw(st.integers(0, 99)))
    n = state.num_qubits
    v = rng.normal(size=(3, 2**n)) + 1j * rng.normal(size=(3, 2**n))
    v /= np.linalg.norm(v, axis=1, keepdims=True)
    cands = data.draw(st.lists(configs(n), min_size=1, max_size=5, unique=True))
    assert all(s >= 0 for s in config_scores(v, cands, "z" * n).values())


@SETTINGS
@given(st.lists(st.tuples(configs(3), st.text(alphabet="01", min_size=3, max_size=3)), max_size=20))
def test_snapshot_text_roundtrip(snaps):
    pool = SnapshotPool(3, [Snapshot(c, o) for c, o in snaps])
    text = pool.to_text()
    again = SnapshotPool.from_text(text)
    assert again.to_text() == text
    assert len(again) == len(snaps)
