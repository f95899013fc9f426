"""Numerical laboratory for a viscoelastic plate equation with fading memory.

Simulates the plate system in its history-variable form on sine spectral
discretizations of the box, and verifies the dissipation estimates the
analysis provides: energy identities, decay envelopes, absorbing balls,
continuous dependence on the damping coefficient, and the vanishing of
attractor semidistances as the damping perturbation goes to zero.
"""

from .spectral import (
    DomainSpec,
    EmbeddingConstants,
    SpectralField,
    embedding_constants,
    laplacian_eigenvalue,
    norms,
    to_physical,
    to_spectral,
)
from .memory import (
    HistoryField,
    MemoryKernel,
    history_advance,
    kernel_mass,
    memory_dissipation_bound,
    memory_integral,
    memory_norm_sq,
    validate_kernel,
)
from .dynamics import (
    DampingSpec,
    ForcingSpec,
    Model,
    NonlinearitySpec,
    PlateState,
    Trajectory,
    eval_damping,
    eval_nonlinearity,
    initial_state,
    rhs,
    simulate,
    step,
    translation_bounded_norm,
)
from .energy import (
    EnergyConstants,
    EnergyRecorder,
    EnergyReport,
    absorbing_radius,
    constants_for,
    decay_envelope_check,
    dissipation_residual,
    energy,
    energy_derivative_identity,
    perturbed_energy,
    phase_norm_sq,
    psi,
)
from .attractor import (
    SnapshotCloud,
    SweepReport,
    continuous_dependence_experiment,
    difference_energy,
    epsilon_sweep,
    hausdorff_semidistance,
    omega_limit_approx,
)
from .errors import ConfigError, DivergenceError

__version__ = "0.1.0"
