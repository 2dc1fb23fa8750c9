//! Witnesses, the hemisphere trade-off and the sequential CHSH seesaw.

pub mod hemisphere;
pub mod seesaw;
pub mod witness;

pub use hemisphere::{
    hemisphere_tradeoff, hemisphere_witness, pi_fidelity_at, pi_tradeoff_curves, Tradeoff,
};
pub use seesaw::{
    seesaw_sequential_chsh, Assemblage, SeesawReport, SeesawSettings, SeesawState, SeesawStatus,
};
pub use witness::{witness_pi_bound, WitnessBound, WitnessSpec};
