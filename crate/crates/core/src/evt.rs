//! Generalized Pareto modeling of staleness exceedances: likelihood,
//! tilted-loss training (single gradient steps with per-parameter step
//! sizes), and a multi-start maximum-likelihood reference fitter.
//!
//! The tilted loss over a sample set Q is
//!
//! ```text
//! L(theta | t, Q) = (1/t) ln( (1/|Q|) sum_q G(theta|q)^(-t) )
//! ```
//!
//! which tends to the mean negative log-likelihood as t -> 0 and, for t < 0,
//! down-weights low-density outliers.

use crate::error::{Result, SimError};

/// Floor on the scale parameter after a projection step.
const SIGMA_FLOOR: f64 = 1e-8;

/// Required slack of `1 + xi q / sigma` above zero after projection.
const SUPPORT_SLACK: f64 = 1e-12;

/// Below this |xi| the exponential-limit formulas are used.
const XI_TINY: f64 = 1e-12;

// ============================================================================
// Domain types
// ============================================================================

/// GPD scale/shape pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GpdModel {
    /// Scale, > 0.
    pub sigma: f64,
    /// Shape; the mean exists only for xi < 1.
    pub xi: f64,
}

impl GpdModel {
    pub fn new(sigma: f64, xi: f64) -> Result<Self> {
        if !(sigma > 0.0) || !sigma.is_finite() || !xi.is_finite() {
            return Err(SimError::Domain(format!(
                "invalid GPD parameters: sigma = {sigma}, xi = {xi}"
            )));
        }
        Ok(Self { sigma, xi })
    }

    /// Whether `q` lies in the distribution's support.
    pub fn supports(&self, q: f64) -> bool {
        q >= 0.0 && 1.0 + self.xi * q / self.sigma > 0.0
    }
}

/// Tilted-training constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TermSettings {
    /// Tilt factor; negative emphasizes outliers.
    pub tilt: f64,
    /// Gradient step size for the scale.
    pub step_sigma: f64,
    /// Gradient step size for the shape.
    pub step_xi: f64,
    /// Model broadcast before any training.
    pub init_model: GpdModel,
    /// Gradient steps per update interval.
    pub epochs: u32,
}

impl Default for TermSettings {
    fn default() -> Self {
        Self {
            tilt: -0.1,
            step_sigma: 1e-9,
            step_xi: 1e-3,
            init_model: GpdModel {
                sigma: 2e-4,
                xi: 0.02,
            },
            epochs: 1,
        }
    }
}

impl TermSettings {
    pub fn validate(&self) -> Result<()> {
        if self.tilt == 0.0 || !self.tilt.is_finite() {
            return Err(SimError::Config(format!(
                "term.tilt must be non-zero, got {}",
                self.tilt
            )));
        }
        if !(self.step_sigma > 0.0) || !(self.step_xi > 0.0) {
            return Err(SimError::Config("term step sizes must be > 0".into()));
        }
        if self.epochs < 1 {
            return Err(SimError::Config("term.epochs must be >= 1".into()));
        }
        GpdModel::new(self.init_model.sigma, self.init_model.xi).map(|_| ())
    }
}

// ============================================================================
// Density, mean, quantile
// ============================================================================

fn check_support(model: &GpdModel, q: f64) -> Result<()> {
    if q < 0.0 || !q.is_finite() {
        return Err(SimError::Domain(format!(
            "exceedance must be non-negative, got {q}"
        )));
    }
    if !model.supports(q) {
        return Err(SimError::Domain(format!(
            "q = {q} outside GPD support (sigma = {}, xi = {})",
            model.sigma, model.xi
        )));
    }
    Ok(())
}

/// Log-density `ln G(sigma, xi | q)`.
pub fn gpd_log_pdf(model: &GpdModel, q: f64) -> Result<f64> {
    check_support(model, q)?;
    let z = q / model.sigma;
    if model.xi.abs() < XI_TINY {
        Ok(-model.sigma.ln() - z)
    } else {
        Ok(-model.sigma.ln() - (1.0 + 1.0 / model.xi) * (model.xi * z).ln_1p())
    }
}

/// Density `G(sigma, xi | q) = (1/sigma)(1 + xi q / sigma)^(-(1/xi + 1))`.
pub fn gpd_pdf(model: &GpdModel, q: f64) -> Result<f64> {
    Ok(gpd_log_pdf(model, q)?.exp())
}

/// Mean `sigma / (1 - xi)`, defined for shape < 1.
pub fn gpd_mean(model: &GpdModel) -> Result<f64> {
    if model.xi >= 1.0 {
        return Err(SimError::UndefinedMean { xi: model.xi });
    }
    Ok(model.sigma / (1.0 - model.xi))
}

/// Quantile transform: maps `u` in [0, 1) to a GPD draw (inverse CDF).
pub fn gpd_quantile(model: &GpdModel, u: f64) -> Result<f64> {
    if !(0.0..1.0).contains(&u) {
        return Err(SimError::Domain(format!(
            "quantile argument must be in [0, 1), got {u}"
        )));
    }
    if model.xi.abs() < XI_TINY {
        Ok(-model.sigma * (1.0 - u).ln())
    } else {
        Ok(model.sigma / model.xi * ((1.0 - u).powf(-model.xi) - 1.0))
    }
}

/// Gradient of the per-sample negative log-likelihood w.r.t. (sigma, xi).
fn nll_gradient_one(model: &GpdModel, q: f64) -> (f64, f64) {
    let (sigma, xi) = (model.sigma, model.xi);
    let z = q / sigma;
    // d(-lnG)/dsigma = -(q - sigma) / (sigma^2 (1 + xi z))
    let d_sigma = -(q - sigma) / (sigma * sigma * (1.0 + xi * z));
    // d(-lnG)/dxi, with the xi -> 0 limit z - z^2/2.
    let d_xi = if xi.abs() < 1e-8 {
        z - 0.5 * z * z
    } else {
        -((xi * z).ln_1p() / (xi * xi) - (1.0 + 1.0 / xi) * q / (sigma + xi * q))
    };
    (d_sigma, d_xi)
}

// ============================================================================
// Tilted loss and gradient
// ============================================================================

fn check_batch(model: &GpdModel, samples: &[f64]) -> Result<()> {
    if samples.is_empty() {
        return Err(SimError::NotEnoughSamples { got: 0, need: 1 });
    }
    for &q in samples {
        check_support(model, q)?;
    }
    Ok(())
}

/// Tilted empirical risk `(1/t) ln((1/n) sum exp(t * nll_j))`, evaluated in
/// log space.
pub fn term_loss(model: &GpdModel, samples: &[f64], tilt: f64) -> Result<f64> {
    check_batch(model, samples)?;
    if tilt == 0.0 {
        return Err(SimError::Domain("tilt must be non-zero".into()));
    }
    let scaled: Vec<f64> = samples
        .iter()
        .map(|&q| Ok(-tilt * gpd_log_pdf(model, q)?))
        .collect::<Result<_>>()?;
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let sum_exp: f64 = scaled.iter().map(|&x| (x - m).exp()).sum();
    Ok((m + (sum_exp / samples.len() as f64).ln()) / tilt)
}

/// Gradient of [`term_loss`]: the tilt-weighted mean of per-sample
/// negative-log-likelihood gradients, with weights `softmax(t * nll_j)`.
pub fn term_gradient(model: &GpdModel, samples: &[f64], tilt: f64) -> Result<(f64, f64)> {
    check_batch(model, samples)?;
    if tilt == 0.0 {
        return Err(SimError::Domain("tilt must be non-zero".into()));
    }
    let scaled: Vec<f64> = samples
        .iter()
        .map(|&q| Ok(-tilt * gpd_log_pdf(model, q)?))
        .collect::<Result<_>>()?;
    let m = scaled.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let weights: Vec<f64> = scaled.iter().map(|&x| (x - m).exp()).collect();
    let total: f64 = weights.iter().sum();

    let mut g_sigma = 0.0;
    let mut g_xi = 0.0;
    for (&q, w) in samples.iter().zip(&weights) {
        let (ds, dx) = nll_gradient_one(model, q);
        g_sigma += w * ds;
        g_xi += w * dx;
    }
    Ok((g_sigma / total, g_xi / total))
}

// ============================================================================
// Local training step
// ============================================================================

/// Clamp a model into the likelihood's domain for the given samples.
fn project(model: GpdModel, samples: &[f64]) -> GpdModel {
    let sigma = model.sigma.max(SIGMA_FLOOR);
    let mut xi = model.xi;
    if let Some(q_max) = samples.iter().cloned().fold(None::<f64>, |acc, q| {
        Some(acc.map_or(q, |m| m.max(q)))
    }) {
        if q_max > 0.0 {
            let xi_min = (SUPPORT_SLACK - 1.0) * sigma / q_max;
            xi = xi.max(xi_min);
        }
    }
    GpdModel { sigma, xi }
}

/// One interval's local training: `epochs` tilted-gradient steps from the
/// received global model, with per-parameter step sizes and projection back
/// into the domain. An empty batch returns the global model unchanged.
pub fn local_update(global: &GpdModel, samples: &[f64], settings: &TermSettings) -> GpdModel {
    if samples.is_empty() {
        return *global;
    }
    let mut model = project(*global, samples);
    for _ in 0..settings.epochs.max(1) {
        let (g_sigma, g_xi) = match term_gradient(&model, samples, settings.tilt) {
            Ok(g) => g,
            Err(_) => return model,
        };
        model = project(
            GpdModel {
                sigma: model.sigma - settings.step_sigma * g_sigma,
                xi: model.xi - settings.step_xi * g_xi,
            },
            samples,
        );
    }
    model
}

// ============================================================================
// Maximum-likelihood reference fitter
// ============================================================================

/// Smallest batch the MLE fitter accepts.
pub const MLE_MIN_SAMPLES: usize = 10;

// The likelihood degenerates as xi -> -1 (and the usual regularity
// conditions need xi > -1/2), so the search is confined to a window that
// comfortably covers heavy and short tails.
const MLE_XI_LO: f64 = -0.45;
const MLE_XI_HI: f64 = 1.5;

fn nll(samples: &[f64], sigma: f64, xi: f64) -> f64 {
    let model = GpdModel { sigma, xi };
    let mut total = 0.0;
    for &q in samples {
        match gpd_log_pdf(&model, q) {
            Ok(lp) => total -= lp,
            Err(_) => return f64::INFINITY,
        }
    }
    if total.is_nan() {
        f64::INFINITY
    } else {
        total
    }
}

fn golden_min_1d(mut lo: f64, mut hi: f64, tol: f64, g: &dyn Fn(f64) -> f64) -> (f64, f64) {
    const R: f64 = 0.618_033_988_749_894_9;
    let mut x1 = hi - R * (hi - lo);
    let mut x2 = lo + R * (hi - lo);
    let mut g1 = g(x1);
    let mut g2 = g(x2);
    while hi - lo > tol {
        if g1 <= g2 {
            hi = x2;
            x2 = x1;
            g2 = g1;
            x1 = hi - R * (hi - lo);
            g1 = g(x1);
        } else {
            lo = x1;
            x1 = x2;
            g1 = g2;
            x2 = lo + R * (hi - lo);
            g2 = g(x2);
        }
    }
    let mid = 0.5 * (lo + hi);
    (mid, g(mid))
}

/// Maximum-likelihood GPD fit by multi-start coordinate descent with
/// golden-section line searches (log-scale in sigma).
pub fn mle_fit(samples: &[f64]) -> Result<GpdModel> {
    if samples.len() < MLE_MIN_SAMPLES {
        return Err(SimError::NotEnoughSamples {
            got: samples.len(),
            need: MLE_MIN_SAMPLES,
        });
    }
    for &q in samples {
        if !(q > 0.0) || !q.is_finite() {
            return Err(SimError::Domain(format!(
                "exceedance samples must be strictly positive, got {q}"
            )));
        }
    }
    let n = samples.len() as f64;
    let mean = samples.iter().sum::<f64>() / n;
    let var = samples.iter().map(|&q| (q - mean).powi(2)).sum::<f64>() / n;
    let q_max = samples.iter().cloned().fold(f64::MIN, f64::max);

    // Method-of-moments initializer; exponential fallback for degenerate
    // spread.
    let (mom_sigma, mom_xi) = if var > 0.0 {
        let xi = (0.5 * (1.0 - mean * mean / var)).clamp(MLE_XI_LO + 0.05, MLE_XI_HI - 0.05);
        ((mean * (1.0 - xi)).max(SIGMA_FLOOR), xi)
    } else {
        (mean.max(SIGMA_FLOOR), 0.0)
    };

    let mut starts = vec![(2e-4, 0.02), (mom_sigma, mom_xi)];
    for &(cs, dx) in &[
        (0.5, -0.2),
        (0.5, 0.2),
        (2.0, -0.2),
        (2.0, 0.2),
        (0.25, 0.0),
        (4.0, 0.0),
        (1.0, -0.35),
        (1.0, 0.4),
    ] {
        starts.push((
            mom_sigma * cs,
            (mom_xi + dx).clamp(MLE_XI_LO + 1e-6, MLE_XI_HI - 1e-6),
        ));
    }

    let mut best: Option<(f64, f64, f64)> = None;
    for &(s0, x0) in &starts {
        let mut sigma = s0.max(SIGMA_FLOOR);
        let mut xi = x0;
        // Keep the start inside the support region.
        let xi_floor = |sigma: f64| (MLE_XI_LO).max((SUPPORT_SLACK - 1.0) * sigma / q_max);
        xi = xi.max(xi_floor(sigma) + 1e-9);
        let mut prev = nll(samples, sigma, xi);
        if !prev.is_finite() {
            continue;
        }
        for _ in 0..100 {
            let xi_now = xi;
            let (ln_sigma, _) = golden_min_1d(
                sigma.ln() - std::f64::consts::LN_2 * 3.0,
                sigma.ln() + std::f64::consts::LN_2 * 3.0,
                1e-10,
                &|u: f64| nll(samples, u.exp(), xi_now),
            );
            sigma = ln_sigma.exp();
            let sigma_now = sigma;
            let lo = xi_floor(sigma_now) + 1e-12;
            let (xi_new, value) = golden_min_1d(lo, MLE_XI_HI, 1e-10, &|x: f64| {
                nll(samples, sigma_now, x)
            });
            xi = xi_new;
            if (prev - value).abs() <= 1e-10 * prev.abs().max(1.0) {
                prev = value;
                break;
            }
            prev = value;
        }
        if best.map_or(true, |(_, _, b)| prev < b) {
            best = Some((sigma, xi, prev));
        }
    }

    let (sigma, xi, value) = best.ok_or_else(|| {
        SimError::Domain("MLE failed: no start produced a finite likelihood".into())
    })?;
    if !value.is_finite() {
        return Err(SimError::Domain(
            "MLE failed: likelihood did not become finite".into(),
        ));
    }
    GpdModel::new(sigma, xi)
}
