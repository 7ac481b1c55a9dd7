//! Dynamic facility location via exponential clocks.
//!
//! The pipeline is: build and solve the LP relaxation ([`lp`]), stabilize
//! client connections over time and split facilities into copies with a
//! single opening fraction ([`preprocess`]), then round every time step with
//! one shared set of exponential clocks ([`rounding`]). [`evaluate`] measures
//! the rounded cost and checks the expected-cost bounds by Monte Carlo, and
//! [`oracle`] solves tiny instances exactly.

pub mod evaluate;
pub mod instance;
pub mod lp;
pub mod oracle;
pub mod preprocess;
pub mod rounding;
pub mod synth;
