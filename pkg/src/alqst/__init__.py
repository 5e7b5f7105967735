"""Active-learning quantum state tomography with committees of complex RBMs."""

__version__ = "0.1.0"

from alqst.committee import (  # noqa: E402
    Committee,
    LearnerState,
    QueryPolicy,
    StoppingRule,
    al_loop,
    baseline_run,
    select_reference,
)
from alqst.models import KcsSpec, XxzSpec, ground_state, named_state  # noqa: E402
from alqst.quantum import SnapshotPool, StateVector, fidelity, rescaled_fidelity, rotate_state  # noqa: E402
from alqst.rbm import ComplexRbmWavefunction, TrainConfig, train  # noqa: E402

__all__ = [
    "Committee",
    "ComplexRbmWavefunction",
    "KcsSpec",
    "LearnerState",
    "QueryPolicy",
    "SnapshotPool",
    "StateVector",
    "StoppingRule",
    "TrainConfig",
    "XxzSpec",
    "al_loop",
    "baseline_run",
    "fidelity",
    "ground_state",
    "named_state",
    "rescaled_fidelity",
    "rotate_state",
    "select_reference",
    "train",
]
