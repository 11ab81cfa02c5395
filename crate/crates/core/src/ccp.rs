//! Convex-concave procedure for the per-transmission power problem.
//!
//! The per-transmission cost is `V exp(rho E(p)) + F(f(p))` with `F`
//! quadratic in the staleness and `exp(rho E(p))` non-convex in `p`. Each
//! iteration linearizes the exponential at the current reference point and
//! minimizes `V J(p_ref) p + F(f(p))` over the power budget, split into the
//! two indicator-consistent sub-intervals of the exceedance branch.
//!
//! The staleness is strictly decreasing in power, so there is at most one
//! threshold power `p0` with `f(p0) = f0`: the exceeding branch lives on
//! `(0, p0)`, the non-exceeding branch on `[p0, p_max]`. Each branch is
//! minimized by a coarse scan plus golden-section refinement, and the better
//! branch wins.
//!
//! Plain CCP iteration can oscillate here because the linearized part is not
//! globally concave, so an iterate that increases the true cost is rejected
//! and the iteration halts on the best point seen.

use crate::aoi::{self, StalenessParams};
use crate::error::{Result, SimError};
use crate::lyapunov::{self, ConstraintMode, VirtualQueues};
use crate::phy::{self, ChannelParams};

/// Lower end of the searchable power range, as a fraction of `p_max`.
/// The cost diverges as `p -> 0`, so nothing is lost by flooring.
const POWER_FLOOR_FRAC: f64 = 1e-12;

/// Points in the bracketing scan that precedes golden-section refinement.
const SCAN_POINTS: usize = 33;

const GOLDEN_RATIO: f64 = 0.618_033_988_749_894_9;

// ============================================================================
// Settings and results
// ============================================================================

/// How the first reference point is chosen.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum InitPolicy {
    /// Uniform draw from `(0, p_max]` (the engine supplies the draw).
    RandomUniform,
    /// A fixed starting power, W.
    Fixed(f64),
    /// Reuse the previous transmission's solution; falls back to the random
    /// draw on the first solve.
    WarmStart,
}

/// Solver knobs.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcpSettings {
    /// Stop when consecutive reference points differ by less than this, W.
    pub tol_power_w: f64,
    /// Outer iteration budget.
    pub max_iters: u32,
    /// Relative tolerance of the one-dimensional inner minimization.
    pub inner_tol: f64,
    pub init_policy: InitPolicy,
}

impl Default for CcpSettings {
    fn default() -> Self {
        Self {
            tol_power_w: 1e-6,
            max_iters: 50,
            inner_tol: 1e-9,
            init_policy: InitPolicy::RandomUniform,
        }
    }
}

impl CcpSettings {
    pub fn validate(&self) -> Result<()> {
        if !(self.tol_power_w > 0.0) {
            return Err(SimError::Config(format!(
                "ccp.tol_power_w must be > 0, got {}",
                self.tol_power_w
            )));
        }
        if self.max_iters < 1 {
            return Err(SimError::Config("ccp.max_iters must be >= 1".into()));
        }
        if !(self.inner_tol > 0.0) {
            return Err(SimError::Config(format!(
                "ccp.inner_tol must be > 0, got {}",
                self.inner_tol
            )));
        }
        if let InitPolicy::Fixed(p) = self.init_policy {
            if !(p > 0.0) {
                return Err(SimError::Config(format!(
                    "ccp fixed init power must be > 0, got {p}"
                )));
            }
        }
        Ok(())
    }
}

/// Outcome of one per-transmission solve.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CcpResult {
    /// Chosen transmit power, in `(0, p_max]`.
    pub p_star: f64,
    /// Inner solves performed.
    pub iters: u32,
    /// Whether the reference-point gap fell below `tol_power_w`.
    pub converged: bool,
    /// Realized per-transmission cost at `p_star`.
    pub objective_at_solution: f64,
}

/// Everything one solve needs besides the solver settings.
#[derive(Debug, Clone, Copy)]
pub struct SolveContext<'a> {
    /// Head-of-queue procrastinated time, s.
    pub eta: f64,
    /// Realized channel gain (path loss times fading).
    pub gain: f64,
    pub queues: &'a VirtualQueues,
    pub channel: &'a ChannelParams,
    pub staleness: &'a StalenessParams,
    pub v: f64,
    pub rho: f64,
    pub mode: ConstraintMode,
}

impl SolveContext<'_> {
    fn power_floor(&self) -> f64 {
        self.channel.p_max_w * POWER_FLOOR_FRAC
    }

    /// Realized cost with the indicator branch taken from the realized
    /// staleness.
    pub fn true_objective(&self, p: f64) -> Result<f64> {
        lyapunov::per_transmission_objective(
            p,
            self.eta,
            self.gain,
            self.queues,
            self.channel,
            self.staleness,
            self.v,
            self.rho,
            self.mode,
        )
    }
}

// ============================================================================
// Linearization
// ============================================================================

/// Analytic derivative of `exp(rho E(p))` at the reference point:
/// `rho exp(rho E) (t + p t')` with
/// `t'(p) = -t^2 B h / (N (N0 B + h p) ln 2)`.
pub fn linearization_slope(p_hat: f64, gain: f64, cp: &ChannelParams, rho: f64) -> Result<f64> {
    let t = phy::transmission_time(p_hat, gain, cp)?;
    let energy = p_hat * t;
    let t_prime = -t * t * cp.bandwidth_hz * gain
        / (cp.payload_bits
            * (cp.noise_floor_w() + gain * p_hat)
            * std::f64::consts::LN_2);
    Ok(rho * (rho * energy).exp() * (t + p_hat * t_prime))
}

// ============================================================================
// Inner one-dimensional minimization
// ============================================================================

/// One indicator-consistent power interval.
#[derive(Debug, Clone, Copy)]
struct Branch {
    lo: f64,
    hi: f64,
    exceeded: bool,
}

/// Split `(0, p_max]` at the threshold power where the realized staleness
/// crosses `f0`. Under `StalenessOnly` there is no indicator and hence a
/// single interval.
fn branch_intervals(ctx: &SolveContext<'_>) -> Result<Vec<Branch>> {
    let floor = ctx.power_floor();
    let p_max = ctx.channel.p_max_w;
    if ctx.mode == ConstraintMode::StalenessOnly {
        return Ok(vec![Branch {
            lo: floor,
            hi: p_max,
            exceeded: false,
        }]);
    }

    let age_at_threshold = aoi::staleness_inverse(ctx.staleness.f0, ctx.staleness)?;
    let t_threshold = age_at_threshold - ctx.eta;
    if t_threshold <= 0.0 {
        // The wait alone already exceeds the threshold.
        return Ok(vec![Branch {
            lo: floor,
            hi: p_max,
            exceeded: true,
        }]);
    }
    let t_at_pmax = phy::transmission_time(p_max, ctx.gain, ctx.channel)?;
    if t_at_pmax > t_threshold {
        // Even full power cannot beat the threshold.
        return Ok(vec![Branch {
            lo: floor,
            hi: p_max,
            exceeded: true,
        }]);
    }
    let p0 = phy::power_for_tx_time(t_threshold, ctx.gain, ctx.channel)?.min(p_max);
    if p0 <= floor {
        return Ok(vec![Branch {
            lo: floor,
            hi: p_max,
            exceeded: false,
        }]);
    }
    Ok(vec![
        Branch {
            lo: floor,
            hi: p0,
            exceeded: true,
        },
        Branch {
            lo: p0,
            hi: p_max,
            exceeded: false,
        },
    ])
}

/// Golden-section minimization on `[lo, hi]`; assumes the bracket already
/// isolates the minimum well enough. Returns `(x, g(x))`.
fn golden_min(mut lo: f64, mut hi: f64, tol: f64, g: &dyn Fn(f64) -> f64) -> (f64, f64) {
    let mut x1 = hi - GOLDEN_RATIO * (hi - lo);
    let mut x2 = lo + GOLDEN_RATIO * (hi - lo);
    let mut g1 = g(x1);
    let mut g2 = g(x2);
    while hi - lo > tol {
        if g1 <= g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - GOLDEN_RATIO * (hi - lo);
            g1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + GOLDEN_RATIO * (hi - lo);
            g2 = g(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, g(mid))
}

/// Scan-then-refine minimization on `[lo, hi]`: a coarse bracket scan
/// (log-spaced when the interval spans decades) followed by golden-section
/// inside the best bracket, with both endpoints kept in the comparison.
fn minimize_on_interval(lo: f64, hi: f64, tol: f64, g: &dyn Fn(f64) -> f64) -> (f64, f64) {
    debug_assert!(lo < hi);
    let log_spaced = hi / lo > 100.0;
    let pts: Vec<f64> = (0..SCAN_POINTS)
        .map(|i| {
            let s = i as f64 / (SCAN_POINTS - 1) as f64;
            if log_spaced {
                (lo.ln() + s * (hi.ln() - lo.ln())).exp()
            } else {
                lo + s * (hi - lo)
            }
        })
        .collect();
    let vals: Vec<f64> = pts.iter().map(|&p| g(p)).collect();
    let best = vals
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.partial_cmp(b.1).unwrap_or(std::cmp::Ordering::Equal))
        .map(|(i, _)| i)
        .unwrap_or(0);

    let bracket_lo = if best == 0 { pts[0] } else { pts[best - 1] };
    let bracket_hi = if best == SCAN_POINTS - 1 {
        pts[SCAN_POINTS - 1]
    } else {
        pts[best + 1]
    };
    let (mut x, mut gx) = golden_min(bracket_lo, bracket_hi, tol, g);
    if vals[best] < gx {
        x = pts[best];
        gx = vals[best];
    }
    (x, gx)
}

/// Minimize the convexified cost `V slope p + F(f(p))` over the
/// branch-consistent intervals of `(0, p_max]`.
pub fn solve_inner(slope: f64, ctx: &SolveContext<'_>, inner_tol: f64) -> Result<f64> {
    if !slope.is_finite() {
        return Err(SimError::Domain(format!(
            "linearization slope must be finite, got {slope}"
        )));
    }
    let branches = branch_intervals(ctx)?;
    let tol = (inner_tol * ctx.channel.p_max_w).max(1e-9);

    let mut best: Option<(f64, f64)> = None;
    for b in &branches {
        if b.hi - b.lo <= 0.0 {
            continue;
        }
        let coeffs = lyapunov::dpp_coefficients(
            ctx.queues,
            b.exceeded,
            ctx.staleness,
            ctx.v,
            ctx.rho,
            ctx.mode,
        );
        let g = |p: f64| -> f64 {
            let t = phy::transmission_time(p, ctx.gain, ctx.channel)
                .expect("power inside the branch interval is positive");
            let f = aoi::staleness(ctx.eta + t, ctx.staleness)
                .expect("age is non-negative by construction");
            ctx.v * slope * p + lyapunov::staleness_penalty(f, &coeffs)
        };
        let (x, gx) = minimize_on_interval(b.lo, b.hi, tol, &g);
        if best.map_or(true, |(_, g0)| gx < g0) {
            best = Some((x, gx));
        }
    }
    best.map(|(x, _)| x)
        .ok_or_else(|| SimError::Domain("no feasible power interval".into()))
}

// ============================================================================
// Outer iteration
// ============================================================================

/// Full per-transmission solve: iterate linearize/minimize from `init` until
/// the reference point settles, guarding against ascent of the true cost.
pub fn ccp_solve(ctx: &SolveContext<'_>, settings: &CcpSettings, init: f64) -> Result<CcpResult> {
    let p_max = ctx.channel.p_max_w;
    let mut p = init.clamp(ctx.power_floor(), p_max);
    let mut best_obj = ctx.true_objective(p)?;

    // Degenerate tradeoff weight: the linearized term vanishes and one inner
    // solve is exact.
    if ctx.v == 0.0 {
        let p_star = solve_inner(0.0, ctx, settings.inner_tol)?;
        return Ok(CcpResult {
            p_star,
            iters: 1,
            converged: true,
            objective_at_solution: ctx.true_objective(p_star)?,
        });
    }

    let mut iters = 0;
    let mut converged = false;
    while iters < settings.max_iters {
        iters += 1;
        let slope = linearization_slope(p, ctx.gain, ctx.channel, ctx.rho)?;
        let candidate = solve_inner(slope, ctx, settings.inner_tol)?;
        let cand_obj = ctx.true_objective(candidate)?;
        let ascent_slack = 1e-12 * best_obj.abs().max(1e-300);
        if cand_obj > best_obj + ascent_slack {
            // Majorization failed; keep the best point seen.
            converged = (candidate - p).abs() < settings.tol_power_w;
            break;
        }
        let delta = (candidate - p).abs();
        p = candidate;
        best_obj = cand_obj;
        if delta < settings.tol_power_w {
            converged = true;
            break;
        }
    }

    Ok(CcpResult {
        p_star: p,
        iters,
        converged,
        objective_at_solution: best_obj,
    })
}
