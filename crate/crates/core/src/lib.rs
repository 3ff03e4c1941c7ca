//! Joint transmitter-receiver design for the downlink multiuser
//! spatial-multiplexing MIMO system: minimize weighted sum transmit power
//! subject to per-substream post-SINR targets.
//!
//! The solver alternates between the primal downlink and its virtual uplink.
//! Receive filters come from a generalized Rayleigh quotient on the downlink
//! covariances, transmit filters from the same quotient on the uplink
//! covariances, and both power vectors from closed-form linear solves against
//! the SINR constraint matrix. The harness layer runs seeded Monte Carlo
//! sweeps over channel draws and verifies delivered SINR at the symbol level.

pub mod harness;
pub mod model;
pub mod numerics;
pub mod sinr;
pub mod solver;

pub use model::{
    draw_channels, init_state, validate_config, BeamformerState, ChannelSet, SystemConfig,
};
pub use sinr::{constraint_system, gain_tensor, sinr_downlink, sinr_uplink, ConstraintSystem};
pub use solver::{solve, DualityAudit, SolveOptions, SolveReport, SolveStatus};
