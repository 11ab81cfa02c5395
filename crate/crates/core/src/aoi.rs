//! Per-sensor age-of-information bookkeeping: the procrastinated-time /
//! AoI recursion, the staleness transform, and exceedances over the
//! staleness threshold.

use crate::error::{Result, SimError};

// ============================================================================
// Domain types
// ============================================================================

/// AoI recursion state of one sensor.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct AoiState {
    /// Sampling instant of the most recently completed upload, s.
    pub last_sample_instant: f64,
    /// AoI realized by that upload, s.
    pub last_aoi: f64,
    /// Number of completed uploads.
    pub data_index: u64,
}

impl AoiState {
    /// State before any upload: instants and age at zero.
    pub fn initial() -> Self {
        Self {
            last_sample_instant: 0.0,
            last_aoi: 0.0,
            data_index: 0,
        }
    }
}

/// Staleness-transform and threshold constants.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct StalenessParams {
    /// Staleness exponent, <= 0. The transform is `a^(1-beta) / (1-beta)`.
    pub beta: f64,
    /// Staleness threshold.
    pub f0: f64,
    /// Exceedance threshold.
    pub e0: f64,
    /// Tolerable threshold-violation probability.
    pub epsilon: f64,
}

impl StalenessParams {
    pub fn validate(&self) -> Result<()> {
        if self.beta > 0.0 {
            return Err(SimError::Config(format!(
                "staleness.beta must be <= 0, got {}",
                self.beta
            )));
        }
        if !(self.f0 > 0.0) {
            return Err(SimError::Config(format!(
                "staleness.f0 must be > 0, got {}",
                self.f0
            )));
        }
        if !(self.e0 > 0.0) {
            return Err(SimError::Config(format!(
                "staleness.e0 must be > 0, got {}",
                self.e0
            )));
        }
        if !(self.epsilon > 0.0 && self.epsilon < 1.0) {
            return Err(SimError::Config(format!(
                "staleness.epsilon must be in (0, 1), got {}",
                self.epsilon
            )));
        }
        Ok(())
    }
}

// ============================================================================
// Operations
// ============================================================================

/// Time the new sample spends waiting for the previous upload to finish:
/// `[tau(i-1) + a(i-1) - tau(i)]+`.
pub fn procrastinated_time(state: &AoiState, new_sample_instant: f64) -> Result<f64> {
    if new_sample_instant < state.last_sample_instant {
        return Err(SimError::Ordering(format!(
            "sample instant {new_sample_instant} precedes previous instant {}",
            state.last_sample_instant
        )));
    }
    Ok((state.last_sample_instant + state.last_aoi - new_sample_instant).max(0.0))
}

/// Advance the AoI recursion by one completed upload:
/// `a(i) = [tau(i-1) + a(i-1) - tau(i)]+ + t(i)`.
pub fn update_aoi(state: &AoiState, new_sample_instant: f64, tx_time: f64) -> Result<AoiState> {
    if !(tx_time > 0.0) || !tx_time.is_finite() {
        return Err(SimError::Domain(format!(
            "transmission time must be strictly positive, got {tx_time}"
        )));
    }
    let eta = procrastinated_time(state, new_sample_instant)?;
    Ok(AoiState {
        last_sample_instant: new_sample_instant,
        last_aoi: eta + tx_time,
        data_index: state.data_index + 1,
    })
}

/// Staleness transform `f(a) = a^(1-beta) / (1-beta)`; convex and strictly
/// increasing in the age for beta <= 0.
pub fn staleness(aoi: f64, sp: &StalenessParams) -> Result<f64> {
    if aoi < 0.0 || !aoi.is_finite() {
        return Err(SimError::Domain(format!(
            "age must be non-negative, got {aoi}"
        )));
    }
    let exponent = 1.0 - sp.beta;
    Ok(aoi.powf(exponent) / exponent)
}

/// Inverse of the staleness transform: the age whose staleness equals `f`.
pub fn staleness_inverse(f: f64, sp: &StalenessParams) -> Result<f64> {
    if f < 0.0 || !f.is_finite() {
        return Err(SimError::Domain(format!(
            "staleness must be non-negative, got {f}"
        )));
    }
    let exponent = 1.0 - sp.beta;
    Ok((f * exponent).powf(1.0 / exponent))
}

/// The positive excess of staleness over the threshold, if any.
/// `f == f0` is not an exceedance.
pub fn exceedance(f: f64, sp: &StalenessParams) -> Option<f64> {
    if f > sp.f0 {
        Some(f - sp.f0)
    } else {
        None
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn sp() -> StalenessParams {
        StalenessParams {
            beta: -2.0,
            f0: 5e-4,
            e0: 1e-4,
            epsilon: 2e-3,
        }
    }

    #[test]
    fn procrastinated_time_cases() {
        // Previous upload finished before the new sample: no wait.
        let s = AoiState {
            last_sample_instant: 0.0,
            last_aoi: 0.05,
            data_index: 1,
        };
        assert_eq!(procrastinated_time(&s, 0.10).unwrap(), 0.0);
        // Previous upload still in flight.
        assert!((procrastinated_time(&s, 0.02).unwrap() - 0.03).abs() < 1e-15);
        // Time regression is an ordering error.
        assert!(procrastinated_time(&s, -0.01).is_err());
    }

    #[test]
    fn saturated_sampling_grows_backlog_linearly() {
        // Sampling every 10 ms against a fixed 20 ms service time: the wait
        // grows by 10 ms per data. Iterated by hand from the recursion.
        let mut s = AoiState::initial();
        for i in 1..=10u64 {
            let tau = 0.01 * i as f64;
            let eta = procrastinated_time(&s, tau).unwrap();
            let expected = 0.01 * (i - 1) as f64;
            assert!(
                (eta - expected).abs() < 1e-12,
                "step {i}: eta = {eta}, expected {expected}"
            );
            s = update_aoi(&s, tau, 0.02).unwrap();
        }
    }

    #[test]
    fn first_upload_age_equals_tx_time() {
        let s = AoiState::initial();
        let s1 = update_aoi(&s, 0.004, 0.0136).unwrap();
        assert_eq!(s1.last_aoi, 0.0136);
        assert_eq!(s1.data_index, 1);
    }

    #[test]
    fn aoi_is_wait_plus_tx_time() {
        let s = AoiState {
            last_sample_instant: 0.0,
            last_aoi: 0.05,
            data_index: 3,
        };
        let s1 = update_aoi(&s, 0.02, 0.0136).unwrap();
        assert!((s1.last_aoi - 0.0436).abs() < 1e-15);
    }

    #[test]
    fn only_overlapping_uploads_procrastinate() {
        // Three consecutive data where only the third overlaps: the first two
        // realize a = t, the third realizes a = eta + t.
        let ts = [0.02, 0.04, 0.03];
        let mut s = AoiState::initial();
        let taus = [0.00, 0.10, 0.12];
        let mut ages = Vec::new();
        for (tau, t) in taus.iter().zip(ts) {
            let eta = procrastinated_time(&s, *tau).unwrap();
            s = update_aoi(&s, *tau, t).unwrap();
            ages.push((eta, s.last_aoi));
        }
        assert_eq!(ages[0], (0.0, 0.02));
        assert_eq!(ages[1], (0.0, 0.04));
        let eta3 = 0.10 + 0.04 - 0.12;
        assert!((ages[2].0 - eta3).abs() < 1e-15);
        assert!((ages[2].1 - (eta3 + 0.03)).abs() < 1e-15);
    }

    #[test]
    fn staleness_identity_at_beta_zero() {
        let sp0 = StalenessParams { beta: 0.0, ..sp() };
        for a in [0.0, 0.01, 0.5, 3.0] {
            assert!((staleness(a, &sp0).unwrap() - a).abs() < 1e-15);
        }
    }

    #[test]
    fn staleness_cube_over_three_at_beta_minus_two() {
        let f = staleness(0.1, &sp()).unwrap();
        assert!((f - 0.001 / 3.0).abs() < 1e-18, "f = {f}");
    }

    #[test]
    fn staleness_threshold_age() {
        // f = f0 = 5e-4 at beta = -2 corresponds to a = (3 f0)^(1/3).
        // Frozen from a high-precision evaluation: 0.11447142425533319 s.
        let a0 = staleness_inverse(5e-4, &sp()).unwrap();
        assert!((a0 - 0.11447142425533319).abs() < 1e-12, "a0 = {a0}");
        let back = staleness(a0, &sp()).unwrap();
        assert!((back - 5e-4).abs() / 5e-4 < 1e-10);
    }

    #[test]
    fn staleness_monotone_and_roundtrip() {
        let sp = sp();
        let mut prev = -1.0;
        for i in 0..200 {
            let a = 1e-3 * (i as f64 + 1.0).powi(2);
            let f = staleness(a, &sp).unwrap();
            assert!(f > prev);
            prev = f;
            let a_back = staleness_inverse(f, &sp).unwrap();
            assert!((a_back - a).abs() / a < 1e-10);
        }
    }

    #[test]
    fn negative_age_rejected() {
        assert!(staleness(-1e-9, &sp()).is_err());
    }

    #[test]
    fn exceedance_strictness_and_value() {
        let sp = sp();
        assert_eq!(exceedance(sp.f0, &sp), None);
        assert_eq!(exceedance(0.0, &sp), None);
        let q = exceedance(6e-4, &sp).unwrap();
        assert!((q - 1e-4).abs() < 1e-18);
    }
}
