//! Closed-form calculators: loop-gain stability and the complexity, memory
//! and latency figures of merit of a delay-loop reservoir versus a baseline.

mod fom;
mod stability;

pub use fom::{compute_foms, latency_model, FomInputs, FomTable, LatencyBreakdown};
pub use stability::{average_gain, loop_gain, StabilityParams};
