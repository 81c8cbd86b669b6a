"""Exact and sampled statistics of parameter-dependent sequential quantum measurements."""

from .atomjump import (
    AtomParams,
    PhotonStatistics,
    mean_photon_number,
    first_emission_density,
    no_emission_probability,
    phase_uncertainty,
    photon_number_probability,
    photon_probabilities,
    photon_statistics,
)
from .errors import (
    CapacityError,
    CompletenessError,
    DegenerateModelError,
    DomainError,
    JumpMetError,
    TruncationError,
    TruncationWarning,
    UnidentifiableError,
    ValidationError,
)
from .fisher import (
    FisherScan,
    ScalingFit,
    cramer_rao_bound,
    fisher_information,
    fit_quadratic_scaling,
    scan_phi,
    scan_steps,
    single_shot_fisher,
)
from .qops import (
    DensityMatrix,
    KrausSet,
    ModelSpec,
    apply_outcome,
    build_model,
    commutator_norm,
    completeness_defect,
    default_initial_state,
)
from .seqmeas import (
    SequenceDistribution,
    enumerate_distribution,
    ensemble_step,
    markov_gap,
    markov_report,
    sequence_probability,
)
from .trajectory import (
    CountHistogram,
    TrajectoryRecord,
    histogram_counts,
    simulate_atom_counts,
    simulate_atom_trajectories,
    simulate_atom_trajectory,
    simulate_kraus_chain,
    simulate_kraus_chains,
)

__version__ = "0.1.0"
