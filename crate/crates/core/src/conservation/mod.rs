//! Symmetries and first integrals of constrained systems, certified by
//! residuals at sampled states and by drift along integrated trajectories.

pub mod mechanical;
pub mod noether;
pub mod quasi;
pub mod report;
pub mod zf;

pub use mechanical::{
    higher_degree_check, induced_connection, killing_restricted, metric_compatibility, quadratic_integral_check,
    restricted_tensor_check, second_fundamental_form, CTensor, InducedConnection, SecondFundamentalForm, TensorKind,
};
pub use noether::{noether_sample, noether_triple, reaction_annihilator_test, CandidateField, NoetherSample};
pub use quasi::quasi_symmetry_check;
pub use report::{measure_drift, ConditionStats, ConservationReport, DriftRun, DriftStats, Verdict};
pub use zf::{
    newfasso_check, symmetry_pairing, thm_int_check, z_f_field, z_f_solve, Observable, TangentField, ZfField,
};
