//! Deterministic event-driven simulation: per-sensor Poisson sampling,
//! FIFO upload scheduling with procrastination, per-transmission power
//! solves, queue updates, and scheme-dispatched training rounds at interval
//! boundaries.
//!
//! Time advances by events (sample arrivals, upload completions, interval
//! boundaries). Sensors are independent between boundaries, so each interval
//! is simulated sensor-by-sensor in id order; boundaries act as barriers.
//! Every random draw comes from a purpose-specific ChaCha stream keyed by
//! (seed, sensor, purpose), which makes the event timeline a function of
//! (seed, config) alone and keeps data-path draws identical across schemes
//! under one seed.

use std::collections::VecDeque;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::aoi::{self, AoiState};
use crate::ccp::{self, InitPolicy, SolveContext};
use crate::config::SimConfig;
use crate::error::{Result, SimError};
use crate::evt::{self, GpdModel};
use crate::federation::{
    self, EnergyKind, EnergyLedgerEntry, ExceedanceEvent, GlobalModel, LocalReport, Party,
    Scheme, SensorRoundActivity,
};
use crate::lyapunov::{self, ConstraintMode, VirtualQueues};
use crate::metrics::{self, MetricsSummary};
use crate::phy;

// ============================================================================
// Output rows
// ============================================================================

/// One completed upload. Queue columns are the pre-decision snapshot (the
/// state the solver saw); the post-decision state is the next record's
/// snapshot. The completion instant is `sample_instant + aoi`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TransmissionRecord {
    pub sensor_id: u32,
    pub data_index: u64,
    pub sample_instant: f64,
    pub procrastinated: f64,
    pub power: f64,
    pub tx_time: f64,
    pub energy: f64,
    pub aoi: f64,
    pub staleness: f64,
    pub exceedance: Option<f64>,
    pub gamma: f64,
    pub upsilon: f64,
    pub lambda: f64,
    pub ccp_iters: u32,
}

/// One row of the round log. `sensor_id` is -1 for the controller's entry
/// (CENT compute). Local model columns hold the model the row's party
/// reported or received; for CENT sensor rows that is the broadcast model.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RoundRow {
    pub interval: u32,
    pub sensor_id: i64,
    pub sigma_local: f64,
    pub xi_local: f64,
    pub sample_count: usize,
    pub sigma_global: f64,
    pub xi_global: f64,
    pub upsilon_replacement: Option<f64>,
    pub train_upload_j: f64,
    pub train_compute_j: f64,
}

/// Everything one run produces.
#[derive(Debug, Clone)]
pub struct RunOutput {
    pub records: Vec<TransmissionRecord>,
    pub rounds: Vec<RoundRow>,
    pub summary: MetricsSummary,
}

/// Per-sensor closing state handed to the metrics layer.
#[derive(Debug, Clone, Copy)]
pub struct SensorClose {
    pub sensor_id: u32,
    pub queues: VirtualQueues,
    pub model: GpdModel,
    pub uploads: u64,
}

// ============================================================================
// Sensor state
// ============================================================================

struct Sensor {
    id: u32,
    aoi: AoiState,
    queues: VirtualQueues,
    pending: VecDeque<f64>,
    /// Working tail model: last local update (LOCAL keeps its own chain; FL
    /// reports this and then trains from the broadcast global).
    gpd: GpdModel,
    interval_events: Vec<ExceedanceEvent>,
    exceedance_count_cum: u64,
    sampling_rng: ChaCha8Rng,
    decision_rng: ChaCha8Rng,
    next_sample: f64,
    prev_p_star: Option<f64>,
}

fn stream_rng(seed: u64, sensor: u32, purpose: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream((sensor as u64) * 8 + purpose);
    rng
}

impl Sensor {
    fn new(id: u32, cfg: &SimConfig) -> Self {
        let mut sampling_rng = stream_rng(cfg.seed, id, 0);
        let first = exp_gap(&mut sampling_rng, cfg.sampling_rate_hz);
        Self {
            id,
            aoi: AoiState::initial(),
            queues: VirtualQueues::zero(),
            pending: VecDeque::new(),
            gpd: cfg.term.init_model,
            interval_events: Vec::new(),
            exceedance_count_cum: 0,
            sampling_rng,
            decision_rng: stream_rng(cfg.seed, id, 1),
            next_sample: first,
            prev_p_star: None,
        }
    }
}

fn exp_gap(rng: &mut ChaCha8Rng, rate_hz: f64) -> f64 {
    let u: f64 = rng.gen();
    (-(1.0 - u).ln() / rate_hz).max(f64::MIN_POSITIVE)
}

// ============================================================================
// Run loop
// ============================================================================

/// Simulate one configuration to its horizon.
pub fn run(cfg: &SimConfig) -> Result<RunOutput> {
    cfg.validate()?;
    let mode = if cfg.scheme == Scheme::Esa {
        ConstraintMode::StalenessOnly
    } else {
        ConstraintMode::Full
    };

    let mut sensors: Vec<Sensor> = (0..cfg.n_sensors).map(|k| Sensor::new(k, cfg)).collect();
    let mut training_rngs: Vec<ChaCha8Rng> = (0..cfg.n_sensors)
        .map(|k| stream_rng(cfg.seed, k, 2))
        .collect();
    let mut records: Vec<TransmissionRecord> = Vec::new();
    let mut rounds: Vec<RoundRow> = Vec::new();

    // Controller-side training state.
    let mut global = GlobalModel {
        model: cfg.term.init_model,
        mean_exceedance_count: 0.0,
    };
    let mut cent_pool: Vec<f64> = Vec::new();
    let mut cent_model: Option<GpdModel> = None;

    let interval_s = cfg.schedule.interval_s;
    let n_intervals = (cfg.horizon_s / interval_s + 1e-9).floor() as u32;

    for m in 1..=n_intervals {
        let t_end = cfg.schedule.interval_end(m);
        for s in sensors.iter_mut() {
            simulate_sensor_until(s, t_end, cfg, mode, &mut records)?;
        }
        interval_boundary(
            m,
            cfg,
            &mut sensors,
            &mut training_rngs,
            &mut global,
            &mut cent_pool,
            &mut cent_model,
            &mut rounds,
        )?;
        for s in sensors.iter_mut() {
            s.interval_events.clear();
        }
    }
    // Partial trailing interval: simulate, no training round.
    if cfg.horizon_s > n_intervals as f64 * interval_s + 1e-12 {
        for s in sensors.iter_mut() {
            simulate_sensor_until(s, cfg.horizon_s, cfg, mode, &mut records)?;
        }
    }

    let closes: Vec<SensorClose> = sensors
        .iter()
        .map(|s| SensorClose {
            sensor_id: s.id,
            queues: s.queues,
            model: s.gpd,
            uploads: s.aoi.data_index,
        })
        .collect();
    let tail_model = match cfg.scheme {
        Scheme::Fl => Some(global.model),
        Scheme::Cent => cent_model,
        _ => None,
    };
    let summary = metrics::summarize(cfg, &records, &rounds, &closes, tail_model)?;

    Ok(RunOutput {
        records,
        rounds,
        summary,
    })
}

/// Advance one sensor's local timeline: take all samples arriving before
/// `t_end` and upload them in order (completions may land past `t_end`; they
/// are attributed to windows by sampling instant).
fn simulate_sensor_until(
    s: &mut Sensor,
    t_end: f64,
    cfg: &SimConfig,
    mode: ConstraintMode,
    records: &mut Vec<TransmissionRecord>,
) -> Result<()> {
    while s.next_sample < t_end {
        s.pending.push_back(s.next_sample);
        s.next_sample += exp_gap(&mut s.sampling_rng, cfg.sampling_rate_hz);
    }
    while let Some(tau) = s.pending.pop_front() {
        let record = step_transmission(s, tau, cfg, mode)?;
        records.push(record);
    }
    Ok(())
}

/// Decide and realize one upload: draw fading, solve for power, realize the
/// age/staleness/exceedance, and advance the virtual queues.
fn step_transmission(
    s: &mut Sensor,
    tau: f64,
    cfg: &SimConfig,
    mode: ConstraintMode,
) -> Result<TransmissionRecord> {
    let eta = aoi::procrastinated_time(&s.aoi, tau)?;
    let fading = phy::draw_fading(&mut s.decision_rng);
    let gain = cfg.channel.pathloss_gain() * fading;
    // One uniform is consumed per upload regardless of policy so that the
    // decision stream stays aligned across init policies.
    let u: f64 = s.decision_rng.gen();
    let init = match cfg.ccp.init_policy {
        InitPolicy::RandomUniform => cfg.channel.p_max_w * (1.0 - u),
        InitPolicy::Fixed(p) => p,
        InitPolicy::WarmStart => s
            .prev_p_star
            .unwrap_or(cfg.channel.p_max_w * (1.0 - u)),
    };

    let pre_queues = s.queues;
    let ctx = SolveContext {
        eta,
        gain,
        queues: &pre_queues,
        channel: &cfg.channel,
        staleness: &cfg.staleness,
        v: cfg.v,
        rho: cfg.rho,
        mode,
    };
    let res = ccp::ccp_solve(&ctx, &cfg.ccp, init)?;

    let tx_time = phy::transmission_time(res.p_star, gain, &cfg.channel)?;
    let energy = res.p_star * tx_time;
    s.aoi = aoi::update_aoi(&s.aoi, tau, tx_time)?;
    let age = s.aoi.last_aoi;
    let staleness = aoi::staleness(age, &cfg.staleness)?;
    let exceedance = aoi::exceedance(staleness, &cfg.staleness);

    s.queues = lyapunov::update_gamma(&s.queues, staleness, &cfg.staleness);
    if mode == ConstraintMode::Full {
        s.queues = lyapunov::update_upsilon(&s.queues, exceedance, &cfg.staleness);
        s.queues =
            lyapunov::update_lambda(&s.queues, staleness, exceedance.is_some(), &cfg.staleness);
    }
    if let Some(q) = exceedance {
        s.exceedance_count_cum += 1;
        s.interval_events.push(ExceedanceEvent {
            sample_instant: tau,
            exceedance: q,
        });
    }
    s.prev_p_star = Some(res.p_star);

    Ok(TransmissionRecord {
        sensor_id: s.id,
        data_index: s.aoi.data_index,
        sample_instant: tau,
        procrastinated: eta,
        power: res.p_star,
        tx_time,
        energy,
        aoi: age,
        staleness,
        exceedance,
        gamma: pre_queues.gamma,
        upsilon: pre_queues.upsilon,
        lambda: pre_queues.lambda,
        ccp_iters: res.iters,
    })
}

// ============================================================================
// Interval boundary
// ============================================================================

fn interval_boundary(
    m: u32,
    cfg: &SimConfig,
    sensors: &mut [Sensor],
    global: &mut GlobalModel,
    cent_pool: &mut Vec<f64>,
    cent_model: &mut Option<GpdModel>,
    rounds: &mut Vec<RoundRow>,
) -> Result<()> {
    match cfg.scheme {
        Scheme::NonT | Scheme::Esa => return Ok(()),
        _ => {}
    }

    let activities: Vec<SensorRoundActivity> = sensors
        .iter()
        .map(|s| {
            let trained =
                federation::extract_window_maxima(&s.interval_events, m, &cfg.schedule).len();
            SensorRoundActivity {
                sensor_id: s.id,
                trained_sample_count: if cfg.scheme == Scheme::Cent { 0 } else { trained },
                raw_sample_count: s.interval_events.len(),
            }
        })
        .collect();

    match cfg.scheme {
        Scheme::Fl => {
            let mut reports = Vec::with_capacity(sensors.len());
            for s in sensors.iter_mut() {
                let samples =
                    federation::extract_window_maxima(&s.interval_events, m, &cfg.schedule);
                s.gpd = evt::local_update(&global.model, &samples, &cfg.term);
                reports.push(LocalReport {
                    model: s.gpd,
                    sample_count: samples.len(),
                    exceedance_count_cum: s.exceedance_count_cum,
                });
            }
            *global = federation::aggregate(&reports, &global.model)?;
            // A model with an undefined mean is rejected; queues keep their
            // recursion value.
            let replacement = federation::upsilon_replacement(global, &cfg.staleness).ok();
            if let Some(v) = replacement {
                for s in sensors.iter_mut() {
                    s.queues.upsilon = v;
                }
            }
            let ledger = charge_round(cfg, sensors, &activities)?;
            for (s, r) in sensors.iter().zip(&reports) {
                let (up, comp) = ledger_for(&ledger, Party::Sensor(s.id));
                rounds.push(RoundRow {
                    interval: m,
                    sensor_id: s.id as i64,
                    sigma_local: r.model.sigma,
                    xi_local: r.model.xi,
                    sample_count: r.sample_count,
                    sigma_global: global.model.sigma,
                    xi_global: global.model.xi,
                    upsilon_replacement: replacement,
                    train_upload_j: up,
                    train_compute_j: comp,
                });
            }
        }
        Scheme::Cent => {
            let new_samples: usize = sensors.iter().map(|s| s.interval_events.len()).sum();
            for s in sensors.iter() {
                cent_pool.extend(s.interval_events.iter().map(|e| e.exceedance));
            }
            if new_samples > 0 && cent_pool.len() >= evt::MLE_MIN_SAMPLES {
                if let Ok(fit) = evt::mle_fit(cent_pool) {
                    *cent_model = Some(fit);
                }
            }
            let mean_count = sensors
                .iter()
                .map(|s| s.exceedance_count_cum as f64)
                .sum::<f64>()
                / sensors.len() as f64;
            let mut replacement = None;
            if let Some(model) = *cent_model {
                let g = GlobalModel {
                    model,
                    mean_exceedance_count: mean_count,
                };
                if let Ok(v) = federation::upsilon_replacement(&g, &cfg.staleness) {
                    replacement = Some(v);
                    for s in sensors.iter_mut() {
                        s.queues.upsilon = v;
                    }
                }
            }
            let ledger = charge_round(cfg, sensors, &activities)?;
            let shown = cent_model.unwrap_or(cfg.term.init_model);
            for (s, a) in sensors.iter().zip(&activities) {
                let (up, comp) = ledger_for(&ledger, Party::Sensor(s.id));
                rounds.push(RoundRow {
                    interval: m,
                    sensor_id: s.id as i64,
                    sigma_local: shown.sigma,
                    xi_local: shown.xi,
                    sample_count: a.raw_sample_count,
                    sigma_global: shown.sigma,
                    xi_global: shown.xi,
                    upsilon_replacement: replacement,
                    train_upload_j: up,
                    train_compute_j: comp,
                });
            }
            let (up, comp) = ledger_for(&ledger, Party::Controller);
            rounds.push(RoundRow {
                interval: m,
                sensor_id: -1,
                sigma_local: shown.sigma,
                xi_local: shown.xi,
                sample_count: new_samples,
                sigma_global: shown.sigma,
                xi_global: shown.xi,
                upsilon_replacement: replacement,
                train_upload_j: up,
                train_compute_j: comp,
            });
        }
        Scheme::Local => {
            let ledger = charge_round(cfg, sensors, &activities)?;
            for s in sensors.iter_mut() {
                let samples =
                    federation::extract_window_maxima(&s.interval_events, m, &cfg.schedule);
                s.gpd = evt::local_update(&s.gpd, &samples, &cfg.term);
                let own = GlobalModel {
                    model: s.gpd,
                    mean_exceedance_count: s.exceedance_count_cum as f64,
                };
                let replacement = federation::upsilon_replacement(&own, &cfg.staleness).ok();
                if let Some(v) = replacement {
                    s.queues.upsilon = v;
                }
                let (up, comp) = ledger_for(&ledger, Party::Sensor(s.id));
                rounds.push(RoundRow {
                    interval: m,
                    sensor_id: s.id as i64,
                    sigma_local: s.gpd.sigma,
                    xi_local: s.gpd.xi,
                    sample_count: samples.len(),
                    sigma_global: s.gpd.sigma,
                    xi_global: s.gpd.xi,
                    upsilon_replacement: replacement,
                    train_upload_j: up,
                    train_compute_j: comp,
                });
            }
        }
        Scheme::NonT | Scheme::Esa => unreachable!(),
    }
    Ok(())
}

fn charge_round(
    cfg: &SimConfig,
    training_rngs: &mut [ChaCha8Rng],
    activities: &[SensorRoundActivity],
) -> Result<Vec<EnergyLedgerEntry>> {
    // Training-upload fading comes from each sensor's dedicated stream.
    let mut draw =
        |sensor_id: u32| -> f64 { phy::draw_fading(&mut training_rngs[sensor_id as usize]) };
    federation::round_energy(
        cfg.scheme,
        activities,
        &cfg.channel,
        &cfg.training_energy,
        &mut draw,
    )
}

fn ledger_for(ledger: &[EnergyLedgerEntry], party: Party) -> (f64, f64) {
    let mut upload = 0.0;
    let mut compute = 0.0;
    for e in ledger {
        if e.party == party {
            match e.kind {
                EnergyKind::TrainingUpload => upload += e.joules,
                EnergyKind::TrainingCompute => compute += e.joules,
            }
        }
    }
    (upload, compute)
}
