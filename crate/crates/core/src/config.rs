//! Experiment configuration: the full `SimConfig` description plus a parser
//! for flat `key = value` config files with unit suffixes.
//!
//! Values may carry units (`23 dBm`, `180 kHz`, `30 ms`, `3000 bytes`,
//! `20 m`, `3.5 GHz`); conversion to linear SI happens here, exactly once.
//! Every key has a desk-scale default, so a config file only states
//! overrides.

use std::path::Path;
use std::str::FromStr;

use crate::aoi::StalenessParams;
use crate::ccp::{CcpSettings, InitPolicy};
use crate::error::{Result, SimError};
use crate::evt::{GpdModel, TermSettings};
use crate::federation::{RoundSchedule, Scheme};
use crate::phy::{dbm_to_watts, pathloss_db, ChannelParams, TrainingEnergyParams};

/// Full description of one simulation run.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SimConfig {
    /// Number of sensors, K.
    pub n_sensors: u32,
    /// Simulated horizon, s.
    pub horizon_s: f64,
    /// Per-sensor Poisson sampling rate, Hz.
    pub sampling_rate_hz: f64,
    pub scheme: Scheme,
    /// Drift/penalty tradeoff weight.
    pub v: f64,
    /// Risk sensitivity.
    pub rho: f64,
    pub seed: u64,
    /// Leading fraction of the horizon excluded from time-averaged metrics.
    pub burn_in_frac: f64,
    pub channel: ChannelParams,
    pub staleness: StalenessParams,
    pub schedule: RoundSchedule,
    pub ccp: CcpSettings,
    pub term: TermSettings,
    pub training_energy: TrainingEnergyParams,
}

impl SimConfig {
    /// Desk-scale defaults: ten sensors for thirty seconds with the factory
    /// radio constants (3000-byte payloads over 180 kHz at -174 dBm/Hz, 23
    /// dBm budget, 20 m / 3.5 GHz path loss), cubic staleness with
    /// f0 = 5e-4, e0 = 1e-4, eps = 2e-3, and 30 ms training intervals split
    /// into three windows.
    pub fn desk_default() -> Self {
        Self {
            n_sensors: 10,
            horizon_s: 30.0,
            sampling_rate_hz: 50.0,
            scheme: Scheme::Fl,
            v: 1e-5,
            rho: 2.0,
            seed: 1,
            burn_in_frac: 0.1,
            channel: ChannelParams {
                payload_bits: 24_000.0,
                bandwidth_hz: 180_000.0,
                noise_psd_w_per_hz: dbm_to_watts(-174.0),
                pathloss_db: pathloss_db(20.0, 3.5).expect("positive reference geometry"),
                p_max_w: dbm_to_watts(23.0),
            },
            staleness: StalenessParams {
                beta: -2.0,
                f0: 5e-4,
                e0: 1e-4,
                epsilon: 2e-3,
            },
            schedule: RoundSchedule::new(0.030, 0.010).expect("3 windows per interval"),
            ccp: CcpSettings::default(),
            term: TermSettings::default(),
            training_energy: TrainingEnergyParams {
                f_cpu_controller: 2e11,
                f_cpu_sensor: 1e9,
                n_tr_bits: 240.0,
                l_req_cycles_per_bit: 87.8,
                kappa: 1e-27,
            },
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_sensors < 1 {
            return Err(SimError::Config("n_sensors must be >= 1".into()));
        }
        if !(self.horizon_s > 0.0) {
            return Err(SimError::Config(format!(
                "horizon must be > 0, got {}",
                self.horizon_s
            )));
        }
        if !(self.sampling_rate_hz > 0.0) {
            return Err(SimError::Config(format!(
                "sampling_rate must be > 0, got {}",
                self.sampling_rate_hz
            )));
        }
        if self.v < 0.0 || !self.v.is_finite() {
            return Err(SimError::Config(format!("v must be >= 0, got {}", self.v)));
        }
        if !(self.rho > 0.0) {
            return Err(SimError::Config(format!(
                "rho must be > 0, got {}",
                self.rho
            )));
        }
        if !(0.0..1.0).contains(&self.burn_in_frac) {
            return Err(SimError::Config(format!(
                "burn_in_frac must be in [0, 1), got {}",
                self.burn_in_frac
            )));
        }
        self.channel.validate()?;
        self.staleness.validate()?;
        self.ccp.validate()?;
        self.term.validate()?;
        self.training_energy.validate()?;
        // The schedule was already validated on construction; re-check the
        // ratio in case fields were edited directly.
        RoundSchedule::new(self.schedule.interval_s, self.schedule.window_s)?;
        Ok(())
    }

    /// Parse a config file, starting from the desk defaults.
    pub fn from_file(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)?;
        Self::from_str_contents(&text)
    }

    /// Parse config text, starting from the desk defaults.
    pub fn from_str_contents(text: &str) -> Result<Self> {
        let mut cfg = Self::desk_default();
        let mut section = String::new();
        // distance/carrier pairs override pathloss once both are seen.
        let mut distance_m: Option<f64> = None;
        let mut carrier_ghz: Option<f64> = None;

        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            if line.starts_with('[') {
                if !line.ends_with(']') {
                    return Err(SimError::Config(format!(
                        "line {}: malformed section header '{line}'",
                        lineno + 1
                    )));
                }
                section = line[1..line.len() - 1].trim().to_ascii_lowercase();
                continue;
            }
            let (key, value) = line.split_once('=').ok_or_else(|| {
                SimError::Config(format!("line {}: expected 'key = value'", lineno + 1))
            })?;
            let key = key.trim().to_ascii_lowercase();
            let value = value.trim();
            let ctx = format!("line {}: {section}.{key}", lineno + 1);

            match (section.as_str(), key.as_str()) {
                ("", "n_sensors") => cfg.n_sensors = parse_count(value, &ctx)? as u32,
                ("", "horizon") => cfg.horizon_s = parse_duration(value, &ctx)?,
                ("", "sampling_rate") => cfg.sampling_rate_hz = parse_frequency(value, &ctx)?,
                ("", "scheme") => cfg.scheme = Scheme::from_str(value)?,
                ("", "v") => cfg.v = parse_number(value, &ctx)?,
                ("", "rho") => cfg.rho = parse_number(value, &ctx)?,
                ("", "seed") => cfg.seed = parse_count(value, &ctx)?,
                ("", "burn_in_frac") => cfg.burn_in_frac = parse_number(value, &ctx)?,

                ("channel", "payload") => cfg.channel.payload_bits = parse_bits(value, &ctx)?,
                ("channel", "bandwidth") => {
                    cfg.channel.bandwidth_hz = parse_frequency(value, &ctx)?
                }
                ("channel", "noise_psd") => {
                    cfg.channel.noise_psd_w_per_hz = parse_power(value, &ctx)?
                }
                ("channel", "p_max") => cfg.channel.p_max_w = parse_power(value, &ctx)?,
                ("channel", "pathloss") => {
                    cfg.channel.pathloss_db = parse_db(value, &ctx)?;
                }
                ("channel", "distance") => distance_m = Some(parse_distance(value, &ctx)?),
                ("channel", "carrier") => {
                    carrier_ghz = Some(parse_frequency(value, &ctx)? / 1e9)
                }

                ("staleness", "beta") => cfg.staleness.beta = parse_number(value, &ctx)?,
                ("staleness", "f0") => cfg.staleness.f0 = parse_number(value, &ctx)?,
                ("staleness", "e0") => cfg.staleness.e0 = parse_number(value, &ctx)?,
                ("staleness", "epsilon") => cfg.staleness.epsilon = parse_number(value, &ctx)?,

                ("schedule", "interval") => {
                    cfg.schedule =
                        RoundSchedule::new(parse_duration(value, &ctx)?, cfg.schedule.window_s)?
                }
                ("schedule", "window") => {
                    cfg.schedule =
                        RoundSchedule::new(cfg.schedule.interval_s, parse_duration(value, &ctx)?)?
                }

                ("ccp", "tol_power") => cfg.ccp.tol_power_w = parse_power(value, &ctx)?,
                ("ccp", "max_iters") => cfg.ccp.max_iters = parse_count(value, &ctx)? as u32,
                ("ccp", "inner_tol") => cfg.ccp.inner_tol = parse_number(value, &ctx)?,
                ("ccp", "init") => cfg.ccp.init_policy = parse_init_policy(value, &ctx)?,

                ("term", "tilt") => cfg.term.tilt = parse_number(value, &ctx)?,
                ("term", "step_sigma") => cfg.term.step_sigma = parse_number(value, &ctx)?,
                ("term", "step_xi") => cfg.term.step_xi = parse_number(value, &ctx)?,
                ("term", "init_sigma") => {
                    cfg.term.init_model = GpdModel {
                        sigma: parse_number(value, &ctx)?,
                        xi: cfg.term.init_model.xi,
                    }
                }
                ("term", "init_xi") => {
                    cfg.term.init_model = GpdModel {
                        sigma: cfg.term.init_model.sigma,
                        xi: parse_number(value, &ctx)?,
                    }
                }
                ("term", "epochs") => cfg.term.epochs = parse_count(value, &ctx)? as u32,

                ("training_energy", "f_cpu_controller") => {
                    cfg.training_energy.f_cpu_controller = parse_number(value, &ctx)?
                }
                ("training_energy", "f_cpu_sensor") => {
                    cfg.training_energy.f_cpu_sensor = parse_number(value, &ctx)?
                }
                ("training_energy", "message") => {
                    cfg.training_energy.n_tr_bits = parse_bits(value, &ctx)?
                }
                ("training_energy", "l_req") => {
                    cfg.training_energy.l_req_cycles_per_bit = parse_number(value, &ctx)?
                }
                ("training_energy", "kappa") => {
                    cfg.training_energy.kappa = parse_number(value, &ctx)?
                }

                _ => {
                    return Err(SimError::Config(format!(
                        "line {}: unknown key '{}' in section '[{}]'",
                        lineno + 1,
                        key,
                        section
                    )))
                }
            }
        }

        match (distance_m, carrier_ghz) {
            (Some(d), Some(f)) => cfg.channel.pathloss_db = pathloss_db(d, f)?,
            (None, None) => {}
            _ => {
                return Err(SimError::Config(
                    "channel.distance and channel.carrier must be given together".into(),
                ))
            }
        }

        cfg.validate()?;
        Ok(cfg)
    }
}

// ============================================================================
// Value parsing
// ============================================================================

fn split_unit<'a>(value: &'a str, ctx: &str) -> Result<(f64, Option<&'a str>)> {
    let mut it = value.split_whitespace();
    let num = it
        .next()
        .ok_or_else(|| SimError::Config(format!("{ctx}: empty value")))?;
    let number: f64 = num
        .parse()
        .map_err(|_| SimError::Config(format!("{ctx}: '{num}' is not a number")))?;
    let unit = it.next();
    if it.next().is_some() {
        return Err(SimError::Config(format!(
            "{ctx}: trailing tokens in '{value}'"
        )));
    }
    Ok((number, unit))
}

fn parse_number(value: &str, ctx: &str) -> Result<f64> {
    match split_unit(value, ctx)? {
        (n, None) => Ok(n),
        (_, Some(u)) => Err(SimError::Config(format!(
            "{ctx}: unexpected unit '{u}' on a dimensionless value"
        ))),
    }
}

fn parse_count(value: &str, ctx: &str) -> Result<u64> {
    let n = parse_number(value, ctx)?;
    if n < 0.0 || n.fract() != 0.0 {
        return Err(SimError::Config(format!(
            "{ctx}: expected a non-negative integer, got {n}"
        )));
    }
    Ok(n as u64)
}

/// Power or power density: bare watts, `W`, `mW`, or `dBm`.
fn parse_power(value: &str, ctx: &str) -> Result<f64> {
    let (n, unit) = split_unit(value, ctx)?;
    match unit {
        None | Some("W") => Ok(n),
        Some("mW") => Ok(n * 1e-3),
        Some("dBm") => Ok(dbm_to_watts(n)),
        Some(u) => Err(SimError::Config(format!(
            "{ctx}: unknown power unit '{u}'"
        ))),
    }
}

fn parse_frequency(value: &str, ctx: &str) -> Result<f64> {
    let (n, unit) = split_unit(value, ctx)?;
    match unit {
        None | Some("Hz") => Ok(n),
        Some("kHz") => Ok(n * 1e3),
        Some("MHz") => Ok(n * 1e6),
        Some("GHz") => Ok(n * 1e9),
        Some(u) => Err(SimError::Config(format!(
            "{ctx}: unknown frequency unit '{u}'"
        ))),
    }
}

fn parse_duration(value: &str, ctx: &str) -> Result<f64> {
    let (n, unit) = split_unit(value, ctx)?;
    match unit {
        None | Some("s") => Ok(n),
        Some("ms") => Ok(n * 1e-3),
        Some("us") => Ok(n * 1e-6),
        Some(u) => Err(SimError::Config(format!(
            "{ctx}: unknown duration unit '{u}'"
        ))),
    }
}

fn parse_bits(value: &str, ctx: &str) -> Result<f64> {
    let (n, unit) = split_unit(value, ctx)?;
    match unit {
        None | Some("bits") => Ok(n),
        Some("bytes") => Ok(n * 8.0),
        Some(u) => Err(SimError::Config(format!(
            "{ctx}: unknown size unit '{u}'"
        ))),
    }
}

fn parse_db(value: &str, ctx: &str) -> Result<f64> {
    let (n, unit) = split_unit(value, ctx)?;
    match unit {
        None | Some("dB") => Ok(n),
        Some(u) => Err(SimError::Config(format!(
            "{ctx}: expected dB, got unit '{u}'"
        ))),
    }
}

fn parse_distance(value: &str, ctx: &str) -> Result<f64> {
    let (n, unit) = split_unit(value, ctx)?;
    match unit {
        None | Some("m") => Ok(n),
        Some("km") => Ok(n * 1e3),
        Some(u) => Err(SimError::Config(format!(
            "{ctx}: unknown distance unit '{u}'"
        ))),
    }
}

fn parse_init_policy(value: &str, ctx: &str) -> Result<InitPolicy> {
    let lower = value.to_ascii_lowercase();
    if lower == "random" {
        return Ok(InitPolicy::RandomUniform);
    }
    if lower == "warm" {
        return Ok(InitPolicy::WarmStart);
    }
    if let Some(rest) = lower.strip_prefix("fixed") {
        let p = parse_power(rest.trim(), ctx)?;
        return Ok(InitPolicy::Fixed(p));
    }
    Err(SimError::Config(format!(
        "{ctx}: expected 'random', 'warm' or 'fixed <power>', got '{value}'"
    )))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn desk_default_is_valid() {
        SimConfig::desk_default().validate().unwrap();
    }

    #[test]
    fn empty_config_is_desk_default() {
        let cfg = SimConfig::from_str_contents("").unwrap();
        assert_eq!(cfg, SimConfig::desk_default());
    }

    #[test]
    fn parses_units_and_sections() {
        let text = "\
# experiment
n_sensors = 4
horizon = 1500 ms
sampling_rate = 50 Hz
scheme = cent
v = 2e-5
rho = 4
seed = 9

[channel]
payload = 3000 bytes
bandwidth = 180 kHz
noise_psd = -174 dBm
p_max = 23 dBm
distance = 20 m
carrier = 3.5 GHz

[schedule]
interval = 30 ms
window = 10 ms

[ccp]
init = fixed 100 mW
";
        let cfg = SimConfig::from_str_contents(text).unwrap();
        assert_eq!(cfg.n_sensors, 4);
        assert!((cfg.horizon_s - 1.5).abs() < 1e-15);
        assert_eq!(cfg.scheme, Scheme::Cent);
        assert_eq!(cfg.seed, 9);
        assert!((cfg.channel.payload_bits - 24_000.0).abs() < 1e-12);
        assert!((cfg.channel.p_max_w - dbm_to_watts(23.0)).abs() < 1e-15);
        assert!((cfg.channel.pathloss_db - 84.834217748686513).abs() < 1e-9);
        assert_eq!(cfg.ccp.init_policy, InitPolicy::Fixed(0.1));
    }

    #[test]
    fn rejects_unknown_keys_and_bad_values() {
        assert!(SimConfig::from_str_contents("bogus = 1").is_err());
        assert!(SimConfig::from_str_contents("[channel]\npower = 1").is_err());
        assert!(SimConfig::from_str_contents("v = fast").is_err());
        assert!(SimConfig::from_str_contents("rho = -1").is_err());
        assert!(SimConfig::from_str_contents("[channel]\ndistance = 20 m").is_err());
        assert!(SimConfig::from_str_contents("[schedule]\nwindow = 7 ms").is_err());
    }

    #[test]
    fn scheme_parse_is_case_insensitive() {
        for (s, want) in [
            ("fl", Scheme::Fl),
            ("NONT", Scheme::NonT),
            ("esa", Scheme::Esa),
        ] {
            let cfg = SimConfig::from_str_contents(&format!("scheme = {s}")).unwrap();
            assert_eq!(cfg.scheme, want);
        }
    }
}
