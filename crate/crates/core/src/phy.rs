//! Radio-layer math: transmission time and energy over a Shannon-rate link,
//! the factory path-loss model, Rayleigh fading draws, and the energy model
//! for tail-model training traffic.
//!
//! All functions work in linear SI units (watts, hertz, seconds, joules).
//! dB / dBm quantities are converted exactly once, at config load.

use rand::Rng;

use crate::error::{Result, SimError};

// ============================================================================
// Unit conversions
// ============================================================================

/// dBm to watts.
pub fn dbm_to_watts(dbm: f64) -> f64 {
    10f64.powf((dbm - 30.0) / 10.0)
}

/// Attenuation in dB to a linear power gain (< 1 for positive dB).
pub fn db_attenuation_to_gain(db: f64) -> f64 {
    10f64.powf(-db / 10.0)
}

// ============================================================================
// Domain types
// ============================================================================

/// Radio constants shared by every rate/energy formula.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelParams {
    /// Payload size per status update, in bits.
    pub payload_bits: f64,
    /// Dedicated bandwidth per sensor, Hz.
    pub bandwidth_hz: f64,
    /// Noise power spectral density, W/Hz (linear).
    pub noise_psd_w_per_hz: f64,
    /// Path-loss attenuation between sensor and controller, dB.
    pub pathloss_db: f64,
    /// Transmit power budget, W (linear).
    pub p_max_w: f64,
}

impl ChannelParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("payload_bits", self.payload_bits),
            ("bandwidth_hz", self.bandwidth_hz),
            ("noise_psd_w_per_hz", self.noise_psd_w_per_hz),
            ("pathloss_db", self.pathloss_db),
            ("p_max_w", self.p_max_w),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::Config(format!(
                    "channel.{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }

    /// Linear power gain of the path-loss component of the channel.
    pub fn pathloss_gain(&self) -> f64 {
        db_attenuation_to_gain(self.pathloss_db)
    }

    /// Noise floor over the full bandwidth, W.
    pub fn noise_floor_w(&self) -> f64 {
        self.noise_psd_w_per_hz * self.bandwidth_hz
    }
}

/// One realized channel state: path-loss gain times a fading power draw.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ChannelRealization {
    pub gain_linear: f64,
}

impl ChannelRealization {
    pub fn new(gain_linear: f64) -> Result<Self> {
        if !(gain_linear > 0.0) || !gain_linear.is_finite() {
            return Err(SimError::Domain(format!(
                "channel gain must be strictly positive, got {gain_linear}"
            )));
        }
        Ok(Self { gain_linear })
    }
}

/// Constants of the training-traffic energy model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TrainingEnergyParams {
    /// Controller CPU speed, cycles/s.
    pub f_cpu_controller: f64,
    /// Sensor CPU speed, cycles/s.
    pub f_cpu_sensor: f64,
    /// Size of one training message/sample, bits.
    pub n_tr_bits: f64,
    /// Required computation, cycles per bit.
    pub l_req_cycles_per_bit: f64,
    /// Effective capacitance coefficient.
    pub kappa: f64,
}

impl TrainingEnergyParams {
    pub fn validate(&self) -> Result<()> {
        let fields = [
            ("f_cpu_controller", self.f_cpu_controller),
            ("f_cpu_sensor", self.f_cpu_sensor),
            ("n_tr_bits", self.n_tr_bits),
            ("l_req_cycles_per_bit", self.l_req_cycles_per_bit),
            ("kappa", self.kappa),
        ];
        for (name, v) in fields {
            if !(v > 0.0) || !v.is_finite() {
                return Err(SimError::Config(format!(
                    "training_energy.{name} must be strictly positive, got {v}"
                )));
            }
        }
        Ok(())
    }
}

// ============================================================================
// Operations
// ============================================================================

/// Time to push one payload through the link at power `p_w` and gain `gain`:
/// `N / (B log2(1 + h p / (N0 B)))` seconds.
pub fn transmission_time(p_w: f64, gain: f64, cp: &ChannelParams) -> Result<f64> {
    if !(p_w > 0.0) || !p_w.is_finite() {
        return Err(SimError::Domain(format!(
            "transmit power must be strictly positive, got {p_w}"
        )));
    }
    if !(gain > 0.0) || !gain.is_finite() {
        return Err(SimError::Domain(format!(
            "channel gain must be strictly positive, got {gain}"
        )));
    }
    let snr = gain * p_w / cp.noise_floor_w();
    let bits_per_s = cp.bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2;
    Ok(cp.payload_bits / bits_per_s)
}

/// Energy of one upload: `p * t(p)` joules.
pub fn transmission_energy(p_w: f64, gain: f64, cp: &ChannelParams) -> Result<f64> {
    Ok(p_w * transmission_time(p_w, gain, cp)?)
}

/// Power needed to finish one payload in exactly `t` seconds (inverse of
/// [`transmission_time`] in its power argument).
pub fn power_for_tx_time(t: f64, gain: f64, cp: &ChannelParams) -> Result<f64> {
    if !(t > 0.0) || !t.is_finite() {
        return Err(SimError::Domain(format!(
            "target transmission time must be strictly positive, got {t}"
        )));
    }
    if !(gain > 0.0) || !gain.is_finite() {
        return Err(SimError::Domain(format!(
            "channel gain must be strictly positive, got {gain}"
        )));
    }
    let required_snr = (cp.payload_bits / (cp.bandwidth_hz * t)).exp2() - 1.0;
    Ok(required_snr * cp.noise_floor_w() / gain)
}

/// Factory path-loss model: `32.45 + 31.9 log10(d_m) + 20 log10(f_GHz)` dB.
pub fn pathloss_db(distance_m: f64, carrier_ghz: f64) -> Result<f64> {
    if !(distance_m > 0.0) || !distance_m.is_finite() {
        return Err(SimError::Domain(format!(
            "distance must be strictly positive, got {distance_m}"
        )));
    }
    if !(carrier_ghz > 0.0) || !carrier_ghz.is_finite() {
        return Err(SimError::Domain(format!(
            "carrier frequency must be strictly positive, got {carrier_ghz}"
        )));
    }
    Ok(32.45 + 31.9 * distance_m.log10() + 20.0 * carrier_ghz.log10())
}

/// One Rayleigh-fading power draw: unit-mean exponential.
pub fn draw_fading(rng: &mut impl Rng) -> f64 {
    // gen::<f64>() is uniform on [0, 1); 1-u is on (0, 1] so the log is finite.
    let u: f64 = rng.gen();
    let gain = -(1.0 - u).ln();
    gain.max(f64::MIN_POSITIVE)
}

/// Computation energy of training over `n_samples` messages:
/// `n * kappa * f_cpu^2 * N_tr * l_req`, with the CPU speed picked by side.
pub fn training_compute_energy(
    n_samples: usize,
    tp: &TrainingEnergyParams,
    at_controller: bool,
) -> f64 {
    let f_cpu = if at_controller {
        tp.f_cpu_controller
    } else {
        tp.f_cpu_sensor
    };
    n_samples as f64 * tp.kappa * f_cpu * f_cpu * tp.n_tr_bits * tp.l_req_cycles_per_bit
}

/// Energy to upload one training message at full power:
/// `p_max * N_tr / (B log2(1 + h p_max / (N0 B)))` joules.
pub fn model_upload_energy(
    gain: f64,
    cp: &ChannelParams,
    tp: &TrainingEnergyParams,
) -> Result<f64> {
    if !(gain > 0.0) || !gain.is_finite() {
        return Err(SimError::Domain(format!(
            "channel gain must be strictly positive, got {gain}"
        )));
    }
    let snr = gain * cp.p_max_w / cp.noise_floor_w();
    let bits_per_s = cp.bandwidth_hz * snr.ln_1p() / std::f64::consts::LN_2;
    Ok(cp.p_max_w * tp.n_tr_bits / bits_per_s)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn reference_channel() -> ChannelParams {
        ChannelParams {
            payload_bits: 24_000.0,
            bandwidth_hz: 180_000.0,
            noise_psd_w_per_hz: dbm_to_watts(-174.0),
            pathloss_db: 84.834217748686513,
            p_max_w: dbm_to_watts(23.0),
        }
    }

    fn reference_training() -> TrainingEnergyParams {
        TrainingEnergyParams {
            f_cpu_controller: 2e11,
            f_cpu_sensor: 1e9,
            n_tr_bits: 240.0,
            l_req_cycles_per_bit: 87.8,
            kappa: 1e-27,
        }
    }

    fn rel_err(a: f64, b: f64) -> f64 {
        (a - b).abs() / b.abs().max(f64::MIN_POSITIVE)
    }

    #[test]
    fn transmission_time_at_unit_snr() {
        // h p / (N0 B) = 1 makes the log term exactly 1 bit/symbol.
        let cp = reference_channel();
        let p = 0.05;
        let gain = cp.noise_floor_w() / p;
        let t = transmission_time(p, gain, &cp).unwrap();
        assert!(rel_err(t, 24_000.0 / 180_000.0) < 1e-12, "t = {t}");
    }

    #[test]
    fn transmission_time_diverges_as_power_vanishes() {
        let cp = reference_channel();
        let t_tiny = transmission_time(1e-12, cp.pathloss_gain(), &cp).unwrap();
        let t_small = transmission_time(1e-9, cp.pathloss_gain(), &cp).unwrap();
        assert!(t_tiny > t_small);
        assert!(t_tiny > 1e3, "t at 1 pW should be enormous, got {t_tiny}");
    }

    #[test]
    fn transmission_time_reference_point() {
        // p = 23 dBm, path loss 84.834 dB, unit fading, §IV constants.
        // Frozen from an independent high-precision evaluation of the rate
        // formula (mpmath, 30 digits).
        let cp = reference_channel();
        let t = transmission_time(cp.p_max_w, cp.pathloss_gain(), &cp).unwrap();
        assert!(rel_err(t, 6.7329762041510841e-3) < 1e-12, "t = {t}");
    }

    #[test]
    fn transmission_time_monotone_in_power_and_gain() {
        let cp = reference_channel();
        let h = cp.pathloss_gain();
        let mut prev = f64::INFINITY;
        for i in 1..=1000 {
            let p = cp.p_max_w * i as f64 / 1000.0;
            let t = transmission_time(p, h, &cp).unwrap();
            assert!(t < prev, "t not strictly decreasing at p = {p}");
            prev = t;
        }
        let t_low_gain = transmission_time(0.1, h, &cp).unwrap();
        let t_high_gain = transmission_time(0.1, 2.0 * h, &cp).unwrap();
        assert!(t_high_gain < t_low_gain);
    }

    #[test]
    fn transmission_energy_is_power_times_time() {
        let cp = reference_channel();
        let h = cp.pathloss_gain();
        for i in 1..=1000 {
            let p = cp.p_max_w * i as f64 / 1000.0;
            let e = transmission_energy(p, h, &cp).unwrap();
            let t = transmission_time(p, h, &cp).unwrap();
            assert_eq!(e, p * t);
            assert!(e > 0.0 && e.is_finite());
        }
    }

    #[test]
    fn transmission_energy_reference_point() {
        let cp = reference_channel();
        let e = transmission_energy(cp.p_max_w, cp.pathloss_gain(), &cp).unwrap();
        assert!(rel_err(e, 1.3434053687724872e-3) < 1e-12, "E = {e}");
    }

    #[test]
    fn power_for_tx_time_inverts_transmission_time() {
        let cp = reference_channel();
        let h = cp.pathloss_gain();
        for &p in &[1e-6, 1e-4, 1e-2, cp.p_max_w] {
            let t = transmission_time(p, h, &cp).unwrap();
            let p_back = power_for_tx_time(t, h, &cp).unwrap();
            assert!(rel_err(p_back, p) < 1e-10, "p = {p}, p_back = {p_back}");
        }
    }

    #[test]
    fn non_positive_inputs_are_domain_errors() {
        let cp = reference_channel();
        assert!(transmission_time(0.0, 1.0, &cp).is_err());
        assert!(transmission_time(-1.0, 1.0, &cp).is_err());
        assert!(transmission_time(0.1, 0.0, &cp).is_err());
        assert!(pathloss_db(0.0, 3.5).is_err());
        assert!(pathloss_db(20.0, -1.0).is_err());
        assert!(model_upload_energy(0.0, &cp, &reference_training()).is_err());
    }

    #[test]
    fn pathloss_reference_values() {
        // Log terms vanish at 1 m / 1 GHz.
        assert!((pathloss_db(1.0, 1.0).unwrap() - 32.45).abs() < 1e-12);
        // log10(10) = 1.
        assert!((pathloss_db(10.0, 1.0).unwrap() - 64.35).abs() < 1e-12);
        // 20 m, 3.5 GHz factory reference. Frozen from direct evaluation.
        let pl = pathloss_db(20.0, 3.5).unwrap();
        assert!((pl - 84.834217748686513).abs() < 1e-9, "pl = {pl}");
    }

    #[test]
    fn fading_is_unit_mean_exponential() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut above_3 = 0usize;
        for _ in 0..n {
            let g = draw_fading(&mut rng);
            assert!(g > 0.0);
            sum += g;
            if g > 3.0 {
                above_3 += 1;
            }
        }
        let mean = sum / n as f64;
        assert!((0.99..=1.01).contains(&mean), "mean = {mean}");
        let p3 = above_3 as f64 / n as f64;
        assert!(
            (p3 - 0.049787068367863944).abs() < 2e-3,
            "P(gain > 3) = {p3}"
        );
    }

    #[test]
    fn fading_stream_reproducible_for_fixed_seed() {
        let mut a = ChaCha8Rng::seed_from_u64(42);
        let mut b = ChaCha8Rng::seed_from_u64(42);
        for _ in 0..256 {
            assert_eq!(draw_fading(&mut a).to_bits(), draw_fading(&mut b).to_bits());
        }
    }

    #[test]
    fn training_compute_energy_reference_values() {
        let tp = reference_training();
        assert_eq!(training_compute_energy(0, &tp, false), 0.0);
        // Sensor side, one sample: 1e-27 * (1e9)^2 * 240 * 87.8.
        let e_sensor = training_compute_energy(1, &tp, false);
        assert!(rel_err(e_sensor, 2.1072e-5) < 1e-12, "E = {e_sensor}");
        // Controller rate is (2e11 / 1e9)^2 = 4e4 times the sensor rate.
        let e_ctrl = training_compute_energy(1, &tp, true);
        assert!(rel_err(e_ctrl / e_sensor, 4e4) < 1e-12);
    }

    #[test]
    fn model_upload_energy_reference_values() {
        let cp = reference_channel();
        let tp = reference_training();
        // Unit SNR point: energy is p_max * n_tr / B.
        let gain = cp.noise_floor_w() / cp.p_max_w;
        let e = model_upload_energy(gain, &cp, &tp).unwrap();
        assert!(rel_err(e, cp.p_max_w * 240.0 / 180_000.0) < 1e-12);

        // Unit fading with §IV constants. Frozen from the same independent
        // evaluation as the transmission-time reference point.
        let e = model_upload_energy(cp.pathloss_gain(), &cp, &tp).unwrap();
        assert!(rel_err(e, 1.3434053687724872e-5) < 1e-12, "E = {e}");

        // Linear in the message size.
        let mut tp2 = tp;
        tp2.n_tr_bits *= 2.0;
        let e2 = model_upload_energy(cp.pathloss_gain(), &cp, &tp2).unwrap();
        assert!(rel_err(e2, 2.0 * e) < 1e-12);
    }
}
