//! The interval-synchronized training round: windowed extreme-sample
//! extraction, sample-count-weighted model aggregation, exceedance-queue
//! replacement from the trained tail mean, and the per-scheme energy
//! accounting that separates federated training from its baselines.

use std::fmt;
use std::str::FromStr;

use crate::aoi::StalenessParams;
use crate::error::{Result, SimError};
use crate::evt::{gpd_mean, GpdModel};
use crate::lyapunov::VirtualQueues;
use crate::phy::{self, ChannelParams, TrainingEnergyParams};

// ============================================================================
// Schemes
// ============================================================================

/// Power-allocation / training scheme.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Scheme {
    /// Federated training: local tilted steps, count-weighted aggregation.
    Fl,
    /// Centralized training: raw exceedances pooled at the controller and
    /// fitted by maximum likelihood.
    Cent,
    /// Purely local training, no information exchange.
    Local,
    /// No tail training; the exceedance queue evolves only by its recursion.
    NonT,
    /// Excess-staleness-agnostic: the exceedance and violation-probability
    /// constraints are dropped entirely.
    Esa,
}

impl Scheme {
    pub const ALL: [Scheme; 5] = [
        Scheme::Fl,
        Scheme::Cent,
        Scheme::Local,
        Scheme::NonT,
        Scheme::Esa,
    ];
}

impl fmt::Display for Scheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            Scheme::Fl => "FL",
            Scheme::Cent => "CENT",
            Scheme::Local => "LOCAL",
            Scheme::NonT => "NonT",
            Scheme::Esa => "ESA",
        };
        f.write_str(s)
    }
}

impl FromStr for Scheme {
    type Err = SimError;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_uppercase().as_str() {
            "FL" => Ok(Scheme::Fl),
            "CENT" => Ok(Scheme::Cent),
            "LOCAL" => Ok(Scheme::Local),
            "NONT" => Ok(Scheme::NonT),
            "ESA" => Ok(Scheme::Esa),
            other => Err(SimError::Config(format!(
                "unknown scheme '{other}' (expected FL, CENT, LOCAL, NonT or ESA)"
            ))),
        }
    }
}

// ============================================================================
// Round schedule
// ============================================================================

/// Model-update interval `M` subdivided into `W = M/O` observation windows.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundSchedule {
    pub interval_s: f64,
    pub window_s: f64,
    pub windows_per_interval: u32,
}

impl RoundSchedule {
    pub fn new(interval_s: f64, window_s: f64) -> Result<Self> {
        if !(interval_s > 0.0) || !(window_s > 0.0) {
            return Err(SimError::Config(format!(
                "schedule durations must be positive, got M = {interval_s}, O = {window_s}"
            )));
        }
        if window_s >= interval_s {
            return Err(SimError::Config(format!(
                "window ({window_s} s) must be shorter than the interval ({interval_s} s)"
            )));
        }
        let ratio = interval_s / window_s;
        let w = ratio.round();
        if (ratio - w).abs() > 1e-9 * ratio {
            return Err(SimError::Config(format!(
                "interval must be an integer number of windows, got M/O = {ratio}"
            )));
        }
        Ok(Self {
            interval_s,
            window_s,
            windows_per_interval: w as u32,
        })
    }

    /// Start time of 1-based interval `m`.
    pub fn interval_start(&self, m: u32) -> f64 {
        self.interval_s * (m - 1) as f64
    }

    /// End time of 1-based interval `m`.
    pub fn interval_end(&self, m: u32) -> f64 {
        self.interval_s * m as f64
    }
}

// ============================================================================
// Window maxima
// ============================================================================

/// One exceedance keyed by the sampling instant of its data.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ExceedanceEvent {
    pub sample_instant: f64,
    pub exceedance: f64,
}

/// The training set of interval `m`: for each observation window, the
/// largest exceedance whose sampling instant falls inside it. Windows
/// without exceedances contribute nothing.
pub fn extract_window_maxima(
    events: &[ExceedanceEvent],
    m: u32,
    sched: &RoundSchedule,
) -> Vec<f64> {
    let start = sched.interval_start(m);
    let w_count = sched.windows_per_interval as usize;
    let mut maxima: Vec<Option<f64>> = vec![None; w_count];
    for ev in events {
        let offset = ev.sample_instant - start;
        if offset < 0.0 {
            continue;
        }
        let w = (offset / sched.window_s).floor() as usize;
        if w >= w_count {
            continue;
        }
        maxima[w] = Some(maxima[w].map_or(ev.exceedance, |cur: f64| cur.max(ev.exceedance)));
    }
    maxima.into_iter().flatten().collect()
}

// ============================================================================
// Aggregation and queue replacement
// ============================================================================

/// One sensor's end-of-interval report.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct LocalReport {
    /// Locally updated model.
    pub model: GpdModel,
    /// Number of window maxima the update used.
    pub sample_count: usize,
    /// Cumulative count of exceedance events at this sensor since start.
    pub exceedance_count_cum: u64,
}

/// The controller's broadcast: aggregated model plus the cross-sensor mean
/// cumulative exceedance count.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct GlobalModel {
    pub model: GpdModel,
    pub mean_exceedance_count: f64,
}

/// Sample-count-weighted average of the reported models. Zero-count reports
/// carry zero weight; if every count is zero the previous global model is
/// retained.
pub fn aggregate(reports: &[LocalReport], previous: &GpdModel) -> Result<GlobalModel> {
    if reports.is_empty() {
        return Err(SimError::Protocol(
            "aggregation requires at least one report".into(),
        ));
    }
    let total: usize = reports.iter().map(|r| r.sample_count).sum();
    let model = if total == 0 {
        *previous
    } else {
        let mut sigma = 0.0;
        let mut xi = 0.0;
        for r in reports {
            let w = r.sample_count as f64;
            sigma += w * r.model.sigma;
            xi += w * r.model.xi;
        }
        GpdModel {
            sigma: sigma / total as f64,
            xi: xi / total as f64,
        }
    };
    let mean_exceedance_count = reports
        .iter()
        .map(|r| r.exceedance_count_cum as f64)
        .sum::<f64>()
        / reports.len() as f64;
    Ok(GlobalModel {
        model,
        mean_exceedance_count,
    })
}

/// The broadcast replacement value for the exceedance queue:
/// `[sigma/(1 - xi) - e0]+ * mean cumulative exceedance count`.
pub fn upsilon_replacement(g: &GlobalModel, sp: &StalenessParams) -> Result<f64> {
    let mean = gpd_mean(&g.model)?;
    Ok((mean - sp.e0).max(0.0) * g.mean_exceedance_count)
}

/// Replace the exceedance queue with the model-predicted steady-state value,
/// leaving the other two queues untouched. A model with shape >= 1 is
/// rejected (the caller keeps the previous queue).
pub fn replace_upsilon(
    q: &VirtualQueues,
    g: &GlobalModel,
    sp: &StalenessParams,
) -> Result<VirtualQueues> {
    Ok(VirtualQueues {
        upsilon: upsilon_replacement(g, sp)?,
        ..*q
    })
}

// ============================================================================
// Round energy accounting
// ============================================================================

/// Who spent the energy.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Party {
    Sensor(u32),
    Controller,
}

/// What the energy was spent on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EnergyKind {
    TrainingUpload,
    TrainingCompute,
}

/// One ledger row of a training round.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyLedgerEntry {
    pub party: Party,
    pub kind: EnergyKind,
    pub joules: f64,
}

/// Per-sensor inputs to the round-energy ledger.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SensorRoundActivity {
    pub sensor_id: u32,
    /// Window maxima fed into the local/central training step.
    pub trained_sample_count: usize,
    /// Raw exceedance events observed this interval (what CENT uploads).
    pub raw_sample_count: usize,
}

/// Energy ledger of one round.
///
/// FL charges each sensor with a non-empty sample set one model upload plus
/// local compute over its samples. CENT charges each sensor one upload per
/// raw exceedance sample and the controller compute over all of them. LOCAL
/// charges local compute only. NonT and ESA train nothing.
///
/// `draw_fading` supplies the fading power of each training upload for the
/// given sensor; it is drawn from a stream separate from the data path so
/// that data-path decisions stay comparable across schemes under one seed.
pub fn round_energy(
    scheme: Scheme,
    activities: &[SensorRoundActivity],
    cp: &ChannelParams,
    tp: &TrainingEnergyParams,
    draw_fading: &mut dyn FnMut(u32) -> f64,
) -> Result<Vec<EnergyLedgerEntry>> {
    let mut entries = Vec::new();
    match scheme {
        Scheme::Fl => {
            for a in activities {
                if a.trained_sample_count == 0 {
                    continue;
                }
                let gain = cp.pathloss_gain() * draw_fading(a.sensor_id);
                entries.push(EnergyLedgerEntry {
                    party: Party::Sensor(a.sensor_id),
                    kind: EnergyKind::TrainingUpload,
                    joules: phy::model_upload_energy(gain, cp, tp)?,
                });
                entries.push(EnergyLedgerEntry {
                    party: Party::Sensor(a.sensor_id),
                    kind: EnergyKind::TrainingCompute,
                    joules: phy::training_compute_energy(a.trained_sample_count, tp, false),
                });
            }
        }
        Scheme::Cent => {
            let mut pooled = 0usize;
            for a in activities {
                if a.raw_sample_count == 0 {
                    continue;
                }
                pooled += a.raw_sample_count;
                let mut upload = 0.0;
                for _ in 0..a.raw_sample_count {
                    let gain = cp.pathloss_gain() * draw_fading(a.sensor_id);
                    upload += phy::model_upload_energy(gain, cp, tp)?;
                }
                entries.push(EnergyLedgerEntry {
                    party: Party::Sensor(a.sensor_id),
                    kind: EnergyKind::TrainingUpload,
                    joules: upload,
                });
            }
            if pooled > 0 {
                entries.push(EnergyLedgerEntry {
                    party: Party::Controller,
                    kind: EnergyKind::TrainingCompute,
                    joules: phy::training_compute_energy(pooled, tp, true),
                });
            }
        }
        Scheme::Local => {
            for a in activities {
                if a.trained_sample_count == 0 {
                    continue;
                }
                entries.push(EnergyLedgerEntry {
                    party: Party::Sensor(a.sensor_id),
                    kind: EnergyKind::TrainingCompute,
                    joules: phy::training_compute_energy(a.trained_sample_count, tp, false),
                });
            }
        }
        Scheme::NonT | Scheme::Esa => {}
    }
    Ok(entries)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::phy::dbm_to_watts;
    use proptest::prelude::*;

    fn sp() -> StalenessParams {
        StalenessParams {
            beta: -2.0,
            f0: 5e-4,
            e0: 1e-4,
            epsilon: 2e-3,
        }
    }

    fn cp() -> ChannelParams {
        ChannelParams {
            payload_bits: 24_000.0,
            bandwidth_hz: 180_000.0,
            noise_psd_w_per_hz: dbm_to_watts(-174.0),
            pathloss_db: 84.834217748686513,
            p_max_w: dbm_to_watts(23.0),
        }
    }

    fn tp() -> TrainingEnergyParams {
        TrainingEnergyParams {
            f_cpu_controller: 2e11,
            f_cpu_sensor: 1e9,
            n_tr_bits: 240.0,
            l_req_cycles_per_bit: 87.8,
            kappa: 1e-27,
        }
    }

    fn sched() -> RoundSchedule {
        RoundSchedule::new(0.030, 0.010).unwrap()
    }

    fn report(sigma: f64, count: usize, cum: u64) -> LocalReport {
        LocalReport {
            model: GpdModel { sigma, xi: 0.02 },
            sample_count: count,
            exceedance_count_cum: cum,
        }
    }

    #[test]
    fn schedule_validates_integer_window_count() {
        let s = sched();
        assert_eq!(s.windows_per_interval, 3);
        assert!(RoundSchedule::new(0.030, 0.007).is_err());
        assert!(RoundSchedule::new(0.030, 0.030).is_err());
        assert!(RoundSchedule::new(0.0, 0.010).is_err());
    }

    #[test]
    fn window_maxima_empty_interval() {
        assert!(extract_window_maxima(&[], 1, &sched()).is_empty());
    }

    #[test]
    fn window_maxima_identity_for_one_event_per_window() {
        let events = [
            ExceedanceEvent {
                sample_instant: 0.002,
                exceedance: 1e-4,
            },
            ExceedanceEvent {
                sample_instant: 0.012,
                exceedance: 3e-4,
            },
            ExceedanceEvent {
                sample_instant: 0.025,
                exceedance: 2e-4,
            },
        ];
        assert_eq!(
            extract_window_maxima(&events, 1, &sched()),
            vec![1e-4, 3e-4, 2e-4]
        );
    }

    #[test]
    fn window_maxima_takes_max_within_a_window() {
        let events: Vec<ExceedanceEvent> = [1e-4, 3e-4, 2e-4]
            .iter()
            .enumerate()
            .map(|(i, &q)| ExceedanceEvent {
                sample_instant: 0.001 + 0.002 * i as f64,
                exceedance: q,
            })
            .collect();
        assert_eq!(extract_window_maxima(&events, 1, &sched()), vec![3e-4]);
    }

    #[test]
    fn window_maxima_keyed_on_sampling_instant_of_interval() {
        // Same events, asked for interval 2: none belong there.
        let events = [ExceedanceEvent {
            sample_instant: 0.012,
            exceedance: 3e-4,
        }];
        assert!(extract_window_maxima(&events, 2, &sched()).is_empty());
        // An event at exactly the interval end belongs to the next interval.
        let boundary = [ExceedanceEvent {
            sample_instant: 0.030,
            exceedance: 5e-4,
        }];
        assert!(extract_window_maxima(&boundary, 1, &sched()).is_empty());
        assert_eq!(extract_window_maxima(&boundary, 2, &sched()), vec![5e-4]);
    }

    #[test]
    fn aggregate_of_identical_reports_is_that_model() {
        let prev = GpdModel {
            sigma: 9e-4,
            xi: 0.5,
        };
        let reports = vec![report(2e-4, 2, 4), report(2e-4, 5, 8)];
        let g = aggregate(&reports, &prev).unwrap();
        assert!((g.model.sigma - 2e-4).abs() < 1e-18);
        assert!((g.model.xi - 0.02).abs() < 1e-15);
        assert!((g.mean_exceedance_count - 6.0).abs() < 1e-12);
    }

    #[test]
    fn aggregate_weighted_arithmetic() {
        let prev = GpdModel {
            sigma: 1.0,
            xi: 0.0,
        };
        let reports = vec![report(1e-4, 1, 0), report(3e-4, 3, 0)];
        let g = aggregate(&reports, &prev).unwrap();
        assert!(
            (g.model.sigma - 2.5e-4).abs() < 1e-18,
            "sigma = {}",
            g.model.sigma
        );
    }

    #[test]
    fn aggregate_ignores_zero_count_reports_and_keeps_previous_when_all_empty() {
        let prev = GpdModel {
            sigma: 7e-4,
            xi: 0.1,
        };
        let mut reports = vec![report(1e-4, 1, 0), report(3e-4, 3, 0)];
        let with = aggregate(&reports, &prev).unwrap();
        reports.push(report(9e-1, 0, 2));
        let without = aggregate(&reports, &prev).unwrap();
        assert_eq!(with.model, without.model);

        let empty_counts = vec![report(1e-4, 0, 0), report(3e-4, 0, 5)];
        let kept = aggregate(&empty_counts, &prev).unwrap();
        assert_eq!(kept.model, prev);

        assert!(aggregate(&[], &prev).is_err());
    }

    #[test]
    fn upsilon_replacement_values() {
        let sp = sp();
        // Predicted mean exactly at the threshold: zero queue.
        let g = GlobalModel {
            model: GpdModel {
                sigma: 1e-4,
                xi: 0.0,
            },
            mean_exceedance_count: 9.0,
        };
        assert_eq!(upsilon_replacement(&g, &sp).unwrap(), 0.0);

        // Reference arithmetic: (2.0408...e-4 - 1e-4) * 12.
        let g = GlobalModel {
            model: GpdModel {
                sigma: 2e-4,
                xi: 0.02,
            },
            mean_exceedance_count: 12.0,
        };
        let v = upsilon_replacement(&g, &sp).unwrap();
        assert!(((v - 1.2489795918367347e-3) / v).abs() < 1e-12, "v = {v}");

        // No exceedances anywhere: zero regardless of the model.
        let g = GlobalModel {
            model: GpdModel {
                sigma: 5.0,
                xi: 0.5,
            },
            mean_exceedance_count: 0.0,
        };
        assert_eq!(upsilon_replacement(&g, &sp).unwrap(), 0.0);
    }

    #[test]
    fn replace_upsilon_touches_only_upsilon_and_rejects_heavy_shapes() {
        let sp = sp();
        let q = VirtualQueues {
            gamma: 1.0,
            upsilon: 2.0,
            lambda: 3.0,
        };
        let g = GlobalModel {
            model: GpdModel {
                sigma: 2e-4,
                xi: 0.02,
            },
            mean_exceedance_count: 12.0,
        };
        let q2 = replace_upsilon(&q, &g, &sp).unwrap();
        assert_eq!(q2.gamma, 1.0);
        assert_eq!(q2.lambda, 3.0);
        assert!(q2.upsilon > 0.0);

        let bad = GlobalModel {
            model: GpdModel {
                sigma: 2e-4,
                xi: 1.0,
            },
            mean_exceedance_count: 12.0,
        };
        assert!(replace_upsilon(&q, &bad, &sp).is_err());
    }

    #[test]
    fn round_energy_scheme_shapes() {
        let cp = cp();
        let tp = tp();
        let activities = vec![
            SensorRoundActivity {
                sensor_id: 0,
                trained_sample_count: 2,
                raw_sample_count: 5,
            },
            SensorRoundActivity {
                sensor_id: 1,
                trained_sample_count: 0,
                raw_sample_count: 0,
            },
            SensorRoundActivity {
                sensor_id: 2,
                trained_sample_count: 1,
                raw_sample_count: 2,
            },
        ];
        let mut unit = |_: u32| 1.0;

        let fl = round_energy(Scheme::Fl, &activities, &cp, &tp, &mut unit).unwrap();
        let fl_uploads = fl
            .iter()
            .filter(|e| e.kind == EnergyKind::TrainingUpload)
            .count();
        assert_eq!(fl_uploads, 2); // sensors 0 and 2 reported samples

        let cent = round_energy(Scheme::Cent, &activities, &cp, &tp, &mut unit).unwrap();
        let cent_upload_total: f64 = cent
            .iter()
            .filter(|e| e.kind == EnergyKind::TrainingUpload)
            .map(|e| e.joules)
            .sum();
        let per_message = phy::model_upload_energy(cp.pathloss_gain(), &cp, &tp).unwrap();
        // 7 raw samples at unit fading.
        assert!((cent_upload_total - 7.0 * per_message).abs() < 1e-15);
        let ctrl: Vec<_> = cent
            .iter()
            .filter(|e| e.party == Party::Controller)
            .collect();
        assert_eq!(ctrl.len(), 1);
        assert!((ctrl[0].joules - phy::training_compute_energy(7, &tp, true)).abs() < 1e-12);

        let local = round_energy(Scheme::Local, &activities, &cp, &tp, &mut unit).unwrap();
        assert!(local.iter().all(|e| e.kind == EnergyKind::TrainingCompute));
        assert_eq!(local.len(), 2);

        for scheme in [Scheme::NonT, Scheme::Esa] {
            assert!(round_energy(scheme, &activities, &cp, &tp, &mut unit)
                .unwrap()
                .is_empty());
        }

        // Nothing observed anywhere: every scheme's ledger is empty.
        let idle = vec![SensorRoundActivity {
            sensor_id: 0,
            trained_sample_count: 0,
            raw_sample_count: 0,
        }];
        for scheme in Scheme::ALL {
            assert!(round_energy(scheme, &idle, &cp, &tp, &mut unit)
                .unwrap()
                .is_empty());
        }
    }

    #[test]
    fn scheme_names_round_trip() {
        for scheme in Scheme::ALL {
            assert_eq!(scheme.to_string().parse::<Scheme>().unwrap(), scheme);
        }
        assert!("bogus".parse::<Scheme>().is_err());
    }

    proptest! {
        #[test]
        fn aggregation_permutation_invariant_and_homogeneous(
            sigmas in proptest::collection::vec(1e-6f64..1e-2, 1..8),
            counts in proptest::collection::vec(0usize..20, 1..8),
            scale in 0.1f64..10.0,
        ) {
            let n = sigmas.len().min(counts.len());
            let reports: Vec<LocalReport> = (0..n)
                .map(|i| report(sigmas[i], counts[i], i as u64))
                .collect();
            let prev = GpdModel { sigma: 1e-4, xi: 0.0 };
            let fwd = aggregate(&reports, &prev).unwrap();

            let mut shuffled = reports.clone();
            shuffled.reverse();
            let rev = aggregate(&shuffled, &prev).unwrap();
            prop_assert!((fwd.model.sigma - rev.model.sigma).abs() <= 1e-18 + 1e-12 * fwd.model.sigma);
            prop_assert!((fwd.mean_exceedance_count - rev.mean_exceedance_count).abs() < 1e-9);

            // Degree-1 homogeneity in the model coordinates.
            let scaled: Vec<LocalReport> = reports
                .iter()
                .map(|r| LocalReport {
                    model: GpdModel {
                        sigma: r.model.sigma * scale,
                        xi: r.model.xi * scale,
                    },
                    ..*r
                })
                .collect();
            let prev_scaled = GpdModel { sigma: prev.sigma * scale, xi: prev.xi * scale };
            let s = aggregate(&scaled, &prev_scaled).unwrap();
            prop_assert!((s.model.sigma - scale * fwd.model.sigma).abs() <= 1e-15 + 1e-9 * s.model.sigma.abs());
            prop_assert!((s.model.xi - scale * fwd.model.xi).abs() <= 1e-12 + 1e-9 * s.model.xi.abs());
        }

        #[test]
        fn replacement_never_negative(
            sigma in 1e-6f64..1e-2,
            xi in -0.5f64..0.99,
            count in 0.0f64..1e4,
        ) {
            let g = GlobalModel {
                model: GpdModel { sigma, xi },
                mean_exceedance_count: count,
            };
            let q = replace_upsilon(&VirtualQueues::zero(), &g, &sp()).unwrap();
            prop_assert!(q.upsilon >= 0.0);
        }
    }
}
