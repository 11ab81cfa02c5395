//! Discrete-event simulator and numeric kernels for age-of-information-
//! constrained, risk-sensitive transmit power control.
//!
//! Sensors sample an environment at random instants and upload status data
//! to a controller over fading channels. Each upload's power is chosen by
//! minimizing a drift-plus-penalty bound (entropic energy risk + virtual
//! queues for three staleness constraints) via a convex-concave procedure.
//! Rare staleness exceedances are modeled by a generalized Pareto tail whose
//! parameters are trained across sensors with federated tilted-risk steps,
//! and the trained tail replaces the exceedance queue at interval
//! boundaries.
//!
//! Modules follow the pipeline: [`phy`] (radio math) -> [`aoi`] (age
//! bookkeeping) -> [`lyapunov`] (queues and per-transmission cost) ->
//! [`ccp`] (power solver) -> [`evt`] (tail model) -> [`federation`] (round
//! protocol) -> [`engine`] (event loop) -> [`metrics`]/[`sweep`]
//! (experiment harness).

pub mod aoi;
pub mod ccp;
pub mod config;
pub mod engine;
pub mod error;
pub mod evt;
pub mod federation;
pub mod lyapunov;
pub mod metrics;
pub mod phy;
pub mod report;
pub mod sweep;

// pub use config::SimConfig;
// pub use engine::{run, RunOutput};
pub use error::{Result, SimError};
