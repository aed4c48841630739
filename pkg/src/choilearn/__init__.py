"""choilearn: learn Hamiltonian coefficients from encoded states, classically simulated.

A Hamiltonian H = sum_m c_m H_m over Pauli basis terms is represented as a
normalized superposition of (H x I)|Phi>|0> with a reference branch
|Phi>|1>; classical-shadow tomography of that state recovers the
coefficient vector.  The package provides the exact dense oracle path, a
fast stabilizer engine validated against it, both shadow flavors, the
heralded preparation circuit driven by a block-encoded evolution unitary,
closed-form sample/query budgets, and robustness experiments.
"""

__version__ = "0.1.0"

from .densesim import (
    BlockEncoding,
    PseudoChoiState,
    StateVector,
    block_encoding_dilation,
    dense_expectation,
    hamiltonian_matrix,
    maximally_entangled_state,
    measure_all,
    prepare_pseudo_choi,
    pseudo_choi_exact,
)
from .errors import ConfigError, EstimateAbortError, InternalInvariantError, PreconditionError
from .learner import (
    BudgetSpec,
    LearningReport,
    UnitaryBudget,
    chernoff_attempts,
    epsilon_s_for,
    find_coeff_clifford,
    find_coeff_pauli,
    find_coeff_unitary,
    shadow_sample_count,
    unitary_query_budget,
)
from .paulis import (
    HamiltonianModel,
    PauliString,
    enumerate_klocal,
    hs_inner,
    parse_pauli,
    pauli_product,
    random_model,
)
from .robustness import (
    NoisySource,
    UnderspecifiedInstance,
    estimate_chi,
    mix_noise,
    run_noisy,
    run_underspecified,
)
from .shadows import (
    CliffordShadow,
    DecodingOperatorClifford,
    DecodingOperatorPauli,
    ExactStateSource,
    PauliShadow,
    collect_clifford_shadow,
    collect_pauli_shadow,
    estimate_clifford_expectation,
    estimate_pauli_expectation,
    median_of_means,
    read_clifford_shadow,
    read_pauli_shadow,
    write_clifford_shadow,
    write_pauli_shadow,
)
from .stabilizer import (
    CliffordTableau,
    StabilizerState,
    pauli_times_entangled,
    sample_uniform_clifford,
    snapshot_state,
    stab_inner,
    tableau_to_gates,
)
