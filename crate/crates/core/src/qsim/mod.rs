//! Sparse statevector simulation: register layouts, gates, measurement, and
//! preparation of range superpositions for claw-free function pairs.

mod layout;
mod ops;
mod range;
mod state;

pub use layout::{Register, RegisterLayout, MAX_LAYOUT_BITS};
pub use ops::{
    apply_1q, clear_register, cnot, hadamard_all, hadamard_bits, hadamard_gate, marginal, measure,
    parity128, pauli_x, phase_query_concrete, project, random_bits, register_distribution,
    sample_hadamard_two_branch, sample_index, u2_gate, x_bit, xor_into, Gate1, HadamardOutcome,
    MeasurementOutcome, FRAC_1_SQRT_2,
};
pub use range::{
    collapse, collapse_at, collapsed_state, joint_outcome_distribution_collapsed,
    joint_outcome_distribution_full, prepare_range_superposition, range_layout, Collapsed,
    JointOutcome,
};
pub use state::{HexLabel, Label, Registers, SparseState, C64, PRUNE_EPS};
