"""Simulation of the FLASH superluminal-signaling proposal and why it fails.

A singlet photon pair, phase-covariant parametric amplification of Bob's
photon, lossy photon counting, and the exact and Monte Carlo statistics
showing that Alice's basis choice leaves no trace at Bob's station.
"""

from .opa import (
    AmplifiedState,
    BackendLimitError,
    GainParameter,
    TruncationError,
    amplify_analytic,
    amplify_numeric,
    fock_rotate,
    mean_photon,
    squeezed_one_prob,
    squeezed_vacuum_prob,
)
from .photostats import (
    ImperfectionModel,
    InfeasibleConditioningError,
    PhotonCountDistribution,
    clone_fidelity,
    delta_distribution,
    delta_moments,
    joint_distribution,
    visibility_model,
)
from .protocol import (
    DetectorModel,
    ExperimentDataset,
    TrialRecord,
    fit_fringe,
    run_conditional,
    run_nonconditional,
    sample_counts,
    thin,
)
from .qstate import (
    HV,
    PM,
    RL,
    MeasurementBasis,
    Qubit,
    equatorial,
    equatorial_basis,
    linear_basis,
    singlet_project,
    time_reversal,
)

__version__ = "0.1.0"
