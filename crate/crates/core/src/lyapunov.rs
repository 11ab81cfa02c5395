//! Virtual-queue state machine for the three long-term staleness constraints
//! and construction of the per-transmission drift-plus-penalty objective.
//!
//! Each completed upload updates three accumulators:
//!
//! ```text
//! gamma'   = [gamma + f - f0]+                        (mean staleness)
//! upsilon' = [upsilon + (q - e0) 1{q > 0}]+           (exceedance magnitude)
//! lambda'  = [lambda + (1{q > 0} - eps) f]+           (violation frequency)
//! ```
//!
//! Boundedness of a queue certifies its time-averaged constraint. The
//! per-transmission cost `V exp(rho E(p)) + theta1 f(p)^2 + theta2 f(p)`
//! bounds the queue drift plus the energy penalty; the additive
//! decision-independent constant of the bound is dropped.

use crate::aoi::{self, StalenessParams};
use crate::error::Result;
use crate::phy::{self, ChannelParams};

// ============================================================================
// Domain types
// ============================================================================

/// The per-sensor virtual-queue triple. All three are non-negative.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct VirtualQueues {
    pub gamma: f64,
    pub upsilon: f64,
    pub lambda: f64,
}

impl VirtualQueues {
    /// All queues start empty.
    pub fn zero() -> Self {
        Self {
            gamma: 0.0,
            upsilon: 0.0,
            lambda: 0.0,
        }
    }
}

/// Which constraints the controller enforces.
///
/// `Full` keeps all three queues. `StalenessOnly` drops the exceedance and
/// violation-probability constraints entirely (the tail-agnostic baseline);
/// its drift bound has no indicator terms.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ConstraintMode {
    Full,
    StalenessOnly,
}

/// Weights of the quadratic-in-staleness drift bound for one branch of the
/// exceedance indicator.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DppCoefficients {
    /// Quadratic weight; strictly positive on both branches.
    pub theta1: f64,
    /// Linear weight.
    pub theta2: f64,
    /// Energy-penalty tradeoff weight.
    pub v: f64,
    /// Risk sensitivity.
    pub rho: f64,
}

// ============================================================================
// Queue updates
// ============================================================================

/// Advance the mean-staleness queue: `[gamma + f - f0]+`.
pub fn update_gamma(q: &VirtualQueues, f: f64, sp: &StalenessParams) -> VirtualQueues {
    VirtualQueues {
        gamma: (q.gamma + f - sp.f0).max(0.0),
        ..*q
    }
}

/// Advance the exceedance queue: unchanged when there is no exceedance,
/// `[upsilon + q - e0]+` otherwise.
pub fn update_upsilon(
    q: &VirtualQueues,
    exceed: Option<f64>,
    sp: &StalenessParams,
) -> VirtualQueues {
    match exceed {
        None => *q,
        Some(x) => VirtualQueues {
            upsilon: (q.upsilon + x - sp.e0).max(0.0),
            ..*q
        },
    }
}

/// Advance the violation-probability queue: `[lambda + (1 - eps) f]+` on an
/// exceedance, `[lambda - eps f]+` otherwise.
pub fn update_lambda(
    q: &VirtualQueues,
    f: f64,
    exceeded: bool,
    sp: &StalenessParams,
) -> VirtualQueues {
    let indicator = if exceeded { 1.0 } else { 0.0 };
    VirtualQueues {
        lambda: (q.lambda + (indicator - sp.epsilon) * f).max(0.0),
        ..*q
    }
}

// ============================================================================
// Drift-plus-penalty coefficients and objective
// ============================================================================

/// Coefficients of the quadratic drift bound for the requested indicator
/// branch:
///
/// ```text
/// theta1 = 1/2 (1 + eps^2) + (1 - eps) 1
/// theta2 = gamma - f0 - eps lambda + [lambda + upsilon - f0 - e0] 1
/// ```
///
/// Under `StalenessOnly` the indicator terms and the dropped queues vanish:
/// `theta1 = 1/2`, `theta2 = gamma - f0`.
pub fn dpp_coefficients(
    q: &VirtualQueues,
    exceeded_branch: bool,
    sp: &StalenessParams,
    v: f64,
    rho: f64,
    mode: ConstraintMode,
) -> DppCoefficients {
    match mode {
        ConstraintMode::Full => {
            let indicator = if exceeded_branch { 1.0 } else { 0.0 };
            let theta1 =
                0.5 * (1.0 + sp.epsilon * sp.epsilon) + (1.0 - sp.epsilon) * indicator;
            let theta2 = q.gamma - sp.f0 - sp.epsilon * q.lambda
                + (q.lambda + q.upsilon - sp.f0 - sp.e0) * indicator;
            DppCoefficients {
                theta1,
                theta2,
                v,
                rho,
            }
        }
        ConstraintMode::StalenessOnly => DppCoefficients {
            theta1: 0.5,
            theta2: q.gamma - sp.f0,
            v,
            rho,
        },
    }
}

/// The staleness part of the bound: `theta1 f^2 + theta2 f`.
pub fn staleness_penalty(f: f64, c: &DppCoefficients) -> f64 {
    c.theta1 * f * f + c.theta2 * f
}

/// Realized per-transmission cost at power `p`:
/// `V exp(rho p t(p)) + theta1 f^2 + theta2 f`, with the indicator branch
/// chosen self-consistently from the realized staleness.
pub fn per_transmission_objective(
    p: f64,
    eta: f64,
    gain: f64,
    q: &VirtualQueues,
    cp: &ChannelParams,
    sp: &StalenessParams,
    v: f64,
    rho: f64,
    mode: ConstraintMode,
) -> Result<f64> {
    let t = phy::transmission_time(p, gain, cp)?;
    let f = aoi::staleness(eta + t, sp)?;
    let exceeded = f > sp.f0;
    let c = dpp_coefficients(q, exceeded, sp, v, rho, mode);
    Ok(v * (rho * p * t).exp() + staleness_penalty(f, &c))
}
