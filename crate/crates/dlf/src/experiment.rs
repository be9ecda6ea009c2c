//! Replicated experiments: configuration with reference defaults, a single
//! replicate runner, parameter sweeps over `(α, I)`, and quantile summaries.
//!
//! Every replicate regenerates the truth, observations, and (when uncertain)
//! the filter's initial data from streams derived only from
//! `(base_seed, replicate, role)`, so any row of any output is reproducible
//! in isolation. Jobs at `(cell, replicate)` granularity run on rayon when
//! the `parallel` feature is on, sequentially otherwise; results are sorted,
//! never ordered by completion.

use crate::error::{Error, Result};
use crate::filter::{
    run_filter, FilterKind, FilterRun, GaussianState, RunContext,
};
use crate::grid::{Grid, TimeAxis};
use crate::metrics::{evaluate, Metric, MetricsSeries};
use crate::model::{build_operators, ModelConfig};
use crate::noise::{NoiseSpec, RngStream, StreamRole};
use crate::observation::{generate_observations, ObservationSet};
use crate::pseudo::PseudoSettings;
use crate::truth::{
    initial_field, simulate_truth, FieldState, Forcing, PhaseSpeed, PhysicsConfig, TruthNoise,
};
use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

/// Amplitude and phase the truth always uses.
pub const TRUTH_AMPLITUDE: f64 = 1.0;
pub const TRUTH_PHASE: f64 = 0.5;
/// Numerical floor added to every initial covariance.
pub const INIT_COV_FLOOR: f64 = 1e-6;
/// Default deflation of the nominal process-noise covariance. The noise
/// amplitudes give the exact stochastic forcing of the dynamics; a filter
/// run with that full budget is close to optimal and calibrated, which is
/// not the regime the reference comparisons live in. The default models an
/// under-dispersed filter whose analysis corrections decay between
/// observation times.
pub const DEFAULT_Q_SCALE: f64 = 0.01;
const SIGMA_LO: f64 = 0.5;
const SIGMA_HI: f64 = 1.5;

/// How the filters' initial data is drawn. The truth always starts from
/// `σ = 1, θ = 1/2`; the filters may start from a sample.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "snake_case")]
pub enum InitMode {
    #[default]
    Deterministic,
    /// `σ ~ U[1/2, 3/2]`, phase known.
    UncertainAmplitude,
    /// `θ ~ U[0, 1]`, amplitude known.
    UncertainPhase,
    /// Both uncertain, independent.
    UncertainBoth,
}

/// Full experiment configuration. Every field defaults to the reference
/// setup, so an empty JSON object `{}` reproduces the base case.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub domain_length: f64,
    pub dx: f64,
    pub t_end: f64,
    pub dt: f64,
    pub obs_times: Vec<f64>,
    /// Observations per observation time (`I`).
    pub obs_count: usize,
    /// Relative diffusion `α`.
    pub alpha: f64,
    /// Spatially uncorrelated wave-noise amplitude (`A`), truth and model.
    pub wave_noise: f64,
    /// Spatially constant wave-noise amplitude (`Ã`), truth only; the model
    /// always assumes zero.
    pub wave_noise_constant: f64,
    /// Forcing-noise amplitude (`B`).
    pub forcing_noise: f64,
    pub obs_var: f64,
    pub init: InitMode,
    pub replicates: usize,
    /// Maximum number of live pseudo-observation groups; defaults to the
    /// number of observation times (keep everything).
    pub cap: Option<usize>,
    pub base_seed: u64,
    pub filters: Vec<FilterKind>,
    pub pseudo: PseudoSettings,
    pub speed: PhaseSpeed,
    pub forcing: Forcing,
    /// Multiplicative factor on the model's process-noise covariance.
    pub q_scale: f64,
    /// Whether the model's process-noise covariance carries the
    /// gradient-coupled wave-noise term.
    pub q_gradient_term: bool,
    /// How the filters' initial covariance treats the init uncertainty.
    pub init_prior: InitPrior,
}

/// Initial covariance policy. `Trusting` keeps the numerical floor even when
/// the initial data was sampled, so an init error acts as a systematic error
/// the filters must correct from data. `Matched` sets the covariance of the
/// generating distribution.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum InitPrior {
    #[default]
    Trusting,
    Matched,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            domain_length: 1.0,
            dx: 0.01,
            t_end: 0.5,
            dt: 0.005,
            obs_times: (1..=9).map(|m| 0.05 * m as f64).collect(),
            obs_count: 20,
            alpha: 0.01,
            wave_noise: 0.05,
            wave_noise_constant: 0.0,
            forcing_noise: 0.05,
            obs_var: 1e-4,
            init: InitMode::Deterministic,
            replicates: 20,
            cap: None,
            base_seed: 0,
            filters: vec![FilterKind::Kf, FilterKind::Dlf],
            pseudo: PseudoSettings::default(),
            speed: PhaseSpeed::default(),
            forcing: Forcing::Zero,
            q_scale: DEFAULT_Q_SCALE,
            q_gradient_term: true,
            init_prior: InitPrior::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: Self = serde_json::from_str(text)?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        if self.replicates == 0 {
            return Err(Error::Config("replicates must be at least 1".into()));
        }
        if self.filters.is_empty() {
            return Err(Error::Config("at least one filter must be selected".into()));
        }
        if !(self.dx > 0.0) || !(self.domain_length > 0.0) {
            return Err(Error::Config("dx and domain length must be positive".into()));
        }
        self.noise_spec().validate()?;
        self.grid()?;
        self.time_axis()?;
        Ok(())
    }

    pub fn grid(&self) -> Result<Grid> {
        let k = (self.domain_length / self.dx).round() as usize;
        if k < 2 || (k as f64 * self.dx - self.domain_length).abs() > 1e-9 * self.domain_length {
            return Err(Error::Config(format!(
                "dx = {} does not evenly divide the domain length {}",
                self.dx, self.domain_length
            )));
        }
        Grid::new(self.domain_length, k)
    }

    pub fn time_axis(&self) -> Result<TimeAxis> {
        TimeAxis::new(self.t_end, self.dt, &self.obs_times)
    }

    pub fn cap_or_default(&self) -> usize {
        self.cap.unwrap_or(self.obs_times.len())
    }

    fn noise_spec(&self) -> NoiseSpec {
        NoiseSpec {
            wave_uncorrelated: self.wave_noise,
            wave_constant: self.wave_noise_constant,
            forcing: self.forcing_noise,
            obs_var: self.obs_var,
        }
    }

    /// Truth-side physics (includes the constant wave noise).
    pub fn physics(&self) -> PhysicsConfig {
        PhysicsConfig {
            alpha: self.alpha,
            speed: self.speed,
            forcing: self.forcing,
            noise: self.noise_spec(),
            init_amplitude: TRUTH_AMPLITUDE,
            init_phase: TRUTH_PHASE,
        }
    }

    /// Model-side belief: identical, except it is unaware of the constant
    /// wave noise.
    pub fn model(&self) -> ModelConfig {
        let mut noise = self.noise_spec();
        noise.wave_constant = 0.0;
        ModelConfig {
            alpha: self.alpha,
            speed: self.speed,
            forcing: self.forcing,
            noise,
            q_scale: self.q_scale,
            q_gradient_term: self.q_gradient_term,
        }
    }

    /// Copy of this configuration for one sweep cell.
    pub fn cell(&self, alpha: f64, obs_count: usize) -> Self {
        Self {
            alpha,
            obs_count,
            ..self.clone()
        }
    }
}

/// Draw the filters' initial `(σ, θ)` for one replicate.
pub fn sample_init(mode: InitMode, rng: &mut RngStream) -> (f64, f64) {
    match mode {
        InitMode::Deterministic => (TRUTH_AMPLITUDE, TRUTH_PHASE),
        InitMode::UncertainAmplitude => (rng.uniform(SIGMA_LO, SIGMA_HI), TRUTH_PHASE),
        InitMode::UncertainPhase => (TRUTH_AMPLITUDE, rng.uniform(0.0, 1.0)),
        InitMode::UncertainBoth => {
            let sigma = rng.uniform(SIGMA_LO, SIGMA_HI);
            let theta = rng.uniform(0.0, 1.0);
            (sigma, theta)
        }
    }
}

/// Prior covariance of the initial field under the init distribution, plus
/// a small PSD floor. Deterministic data gets the floor alone; an uncertain
/// amplitude contributes a rank-one term; an uncertain phase contributes the
/// covariance of the bump over the phase prior, computed by quadrature.
pub fn init_covariance(mode: InitMode, grid: &Grid) -> DMatrix<f64> {
    let k = grid.node_count();
    let floor = DMatrix::identity(k, k) * INIT_COV_FLOOR;
    let sigma_var = match mode {
        InitMode::Deterministic | InitMode::UncertainPhase => 0.0,
        InitMode::UncertainAmplitude | InitMode::UncertainBoth => {
            (SIGMA_HI - SIGMA_LO).powi(2) / 12.0
        }
    };
    let sigma_sq_mean = 1.0 + sigma_var; // E[σ] = 1 in every mode

    match mode {
        InitMode::Deterministic => floor,
        InitMode::UncertainAmplitude => {
            let shape = initial_field(grid, 1.0, TRUTH_PHASE).values;
            &shape * shape.transpose() * sigma_var + floor
        }
        InitMode::UncertainPhase | InitMode::UncertainBoth => {
            let quad = 512usize;
            let mut mean = nalgebra::DVector::zeros(k);
            let mut second = DMatrix::zeros(k, k);
            for j in 0..quad {
                let theta = (j as f64 + 0.5) / quad as f64 * grid.length();
                let shape = initial_field(grid, 1.0, theta).values;
                second += &shape * shape.transpose();
                mean += shape;
            }
            mean /= quad as f64;
            second /= quad as f64;
            second * sigma_sq_mean - &mean * mean.transpose() + floor
        }
    }
}

/// FNV-1a digest of a trajectory's bit patterns; identifies the shared truth
/// across the filters of one replicate.
pub fn truth_digest(truth: &[FieldState]) -> u64 {
    let mut hash: u64 = 0xcbf2_9ce4_8422_2325;
    for field in truth {
        for v in field.values.iter() {
            for byte in v.to_bits().to_le_bytes() {
                hash ^= byte as u64;
                hash = hash.wrapping_mul(0x0000_0100_0000_01b3);
            }
        }
    }
    hash
}

/// Metric outcomes of one replicate, per filter.
pub struct ReplicateOutcome {
    pub replicate: u64,
    pub truth_hash: u64,
    pub sampled_init: (f64, f64),
    pub per_filter: Vec<(FilterKind, MetricsSeries)>,
}

fn truth_streams(seed: u64, replicate: u64) -> TruthNoise {
    TruthNoise {
        advection: RngStream::for_role(seed, replicate, StreamRole::TruthAdvectionNoise),
        forcing: RngStream::for_role(seed, replicate, StreamRole::TruthForcingNoise),
        constant: RngStream::for_role(seed, replicate, StreamRole::TruthConstantNoise),
    }
}

struct ReplicateData {
    grid: Grid,
    ta: TimeAxis,
    truth: Vec<FieldState>,
    observations: Vec<ObservationSet>,
    init: GaussianState,
    sampled_init: (f64, f64),
    model: ModelConfig,
}

fn prepare_replicate(cfg: &ExperimentConfig, replicate: u64) -> Result<ReplicateData> {
    let grid = cfg.grid()?;
    let ta = cfg.time_axis()?;
    let mut streams = truth_streams(cfg.base_seed, replicate);
    let truth = simulate_truth(&grid, &ta, &cfg.physics(), &mut streams)?;
    let mut obs_rng = RngStream::for_role(cfg.base_seed, replicate, StreamRole::ObservationNoise);
    let observations =
        generate_observations(&grid, &ta, &truth, cfg.obs_count, cfg.obs_var, &mut obs_rng)?;
    let mut init_rng = RngStream::for_role(cfg.base_seed, replicate, StreamRole::InitialData);
    let sampled_init = sample_init(cfg.init, &mut init_rng);
    let init_cov_mode = match cfg.init_prior {
        InitPrior::Trusting => InitMode::Deterministic,
        InitPrior::Matched => cfg.init,
    };
    let init = GaussianState {
        mean: initial_field(&grid, sampled_init.0, sampled_init.1).values,
        cov: init_covariance(init_cov_mode, &grid),
        time_index: 0,
    };
    Ok(ReplicateData {
        grid,
        ta,
        truth,
        observations,
        init,
        sampled_init,
        model: cfg.model(),
    })
}

/// Run one replicate: one truth, one observation sequence, one sampled
/// initial state, shared by every filter in the set.
pub fn run_replicate(cfg: &ExperimentConfig, replicate: u64) -> Result<ReplicateOutcome> {
    let data = prepare_replicate(cfg, replicate)?;
    let operators = build_operators(&data.grid, &data.ta, &data.model)?;
    let ctx = RunContext {
        grid: &data.grid,
        ta: &data.ta,
        model: &data.model,
        operators: &operators,
        observations: &data.observations,
        cap: cfg.cap_or_default(),
        settings: cfg.pseudo,
        record_characteristics: false,
    };
    let mut per_filter = Vec::with_capacity(cfg.filters.len());
    for &kind in &cfg.filters {
        let run = run_filter(kind, &ctx, data.init.clone())?;
        let metrics = evaluate(&data.truth, &run.states, &data.grid, &data.ta)?;
        per_filter.push((kind, metrics));
    }
    Ok(ReplicateOutcome {
        replicate,
        truth_hash: truth_digest(&data.truth),
        sampled_init: data.sampled_init,
        per_filter,
    })
}

/// One replicate with full trajectories kept, for field plots and dumps.
pub struct DemoRun {
    pub grid: Grid,
    pub ta: TimeAxis,
    pub truth: Vec<FieldState>,
    pub observations: Vec<ObservationSet>,
    pub runs: Vec<(FilterKind, FilterRun, MetricsSeries)>,
    pub truth_hash: u64,
    pub sampled_init: (f64, f64),
}

pub fn run_demo(cfg: &ExperimentConfig, replicate: u64) -> Result<DemoRun> {
    let data = prepare_replicate(cfg, replicate)?;
    let operators = build_operators(&data.grid, &data.ta, &data.model)?;
    let ctx = RunContext {
        grid: &data.grid,
        ta: &data.ta,
        model: &data.model,
        operators: &operators,
        observations: &data.observations,
        cap: cfg.cap_or_default(),
        settings: cfg.pseudo,
        record_characteristics: true,
    };
    let mut runs = Vec::with_capacity(cfg.filters.len());
    for &kind in &cfg.filters {
        let run = run_filter(kind, &ctx, data.init.clone())?;
        let metrics = evaluate(&data.truth, &run.states, &data.grid, &data.ta)?;
        runs.push((kind, run, metrics));
    }
    let truth_hash = truth_digest(&data.truth);
    Ok(DemoRun {
        grid: data.grid,
        ta: data.ta,
        truth: data.truth,
        observations: data.observations,
        runs,
        truth_hash,
        sampled_init: data.sampled_init,
    })
}

/// One `(cell, filter, replicate)` result: metric totals, plus the series
/// when produced by a fresh run (parsed records carry totals only).
#[derive(Debug, Clone, PartialEq)]
pub struct RunRecord {
    pub alpha: f64,
    pub obs_count: usize,
    pub filter: FilterKind,
    pub seed: u64,
    pub replicate: u64,
    pub truth_hash: u64,
    /// Totals in `Metric::ALL` order.
    pub totals: [f64; 4],
    pub series: Option<[Vec<f64>; 4]>,
}

impl RunRecord {
    pub fn run_id(&self) -> String {
        format!("a{}-i{}-r{}", self.alpha, self.obs_count, self.replicate)
    }
}

/// A replicate that errored; recorded and excluded from aggregation.
#[derive(Debug, Clone, Serialize)]
pub struct FailureRecord {
    pub alpha: f64,
    pub obs_count: usize,
    pub replicate: u64,
    pub error: String,
}

/// Quantile summary of one `(filter, α, I, metric)` cell.
#[derive(Debug, Clone, PartialEq)]
pub struct SweepSummary {
    pub filter: FilterKind,
    pub alpha: f64,
    pub obs_count: usize,
    pub metric: Metric,
    pub min: f64,
    pub q25: f64,
    pub median: f64,
    pub q75: f64,
    pub max: f64,
    pub mean: f64,
    pub count: usize,
}

pub struct SweepResult {
    pub config: ExperimentConfig,
    pub alphas: Vec<f64>,
    pub obs_counts: Vec<usize>,
    pub records: Vec<RunRecord>,
    pub failures: Vec<FailureRecord>,
    pub summaries: Vec<SweepSummary>,
}

/// Map a job list, in parallel when the `parallel` feature is enabled.
/// Output order always matches input order.
#[cfg(feature = "parallel")]
pub fn map_jobs<J: Sync, T: Send>(jobs: &[J], f: impl Fn(&J) -> T + Sync + Send) -> Vec<T> {
    use rayon::prelude::*;
    jobs.par_iter().map(f).collect()
}

/// Map a job list, in parallel when the `parallel` feature is enabled.
/// Output order always matches input order.
#[cfg(not(feature = "parallel"))]
pub fn map_jobs<J: Sync, T: Send>(jobs: &[J], f: impl Fn(&J) -> T + Sync + Send) -> Vec<T> {
    jobs.iter().map(f).collect()
}

/// Linear-interpolation quantile of an ascending-sorted slice.
fn quantile(sorted: &[f64], p: f64) -> f64 {
    if sorted.is_empty() {
        return f64::NAN;
    }
    let h = (sorted.len() - 1) as f64 * p;
    let lo = h.floor() as usize;
    let hi = h.ceil() as usize;
    sorted[lo] + (h - lo as f64) * (sorted[hi] - sorted[lo])
}

/// Aggregate per-replicate totals into quantile summaries. A pure function
/// of the record set; re-aggregating parsed CSV rows reproduces it exactly.
pub fn summaries_from_records(records: &[RunRecord]) -> Vec<SweepSummary> {
    use std::collections::BTreeMap;
    let mut groups: BTreeMap<(u64, usize, &'static str), Vec<&RunRecord>> = BTreeMap::new();
    for rec in records {
        groups
            .entry((rec.alpha.to_bits(), rec.obs_count, rec.filter.name()))
            .or_default()
            .push(rec);
    }
    let mut out = Vec::new();
    for ((alpha_bits, obs_count, _), rows) in &groups {
        for (mi, metric) in Metric::ALL.into_iter().enumerate() {
            let mut values: Vec<f64> = rows.iter().map(|r| r.totals[mi]).collect();
            values.sort_by(f64::total_cmp);
            let mean = values.iter().sum::<f64>() / values.len() as f64;
            out.push(SweepSummary {
                filter: rows[0].filter,
                alpha: f64::from_bits(*alpha_bits),
                obs_count: *obs_count,
                metric,
                min: values[0],
                q25: quantile(&values, 0.25),
                median: quantile(&values, 0.5),
                q75: quantile(&values, 0.75),
                max: *values.last().unwrap(),
                mean,
                count: values.len(),
            });
        }
    }
    out
}

fn outcome_records(
    cfg: &ExperimentConfig,
    alpha: f64,
    obs_count: usize,
    outcome: ReplicateOutcome,
) -> Vec<RunRecord> {
    outcome
        .per_filter
        .into_iter()
        .map(|(filter, metrics)| RunRecord {
            alpha,
            obs_count,
            filter,
            seed: cfg.base_seed,
            replicate: outcome.replicate,
            truth_hash: outcome.truth_hash,
            totals: [
                metrics.rms.total,
                metrics.mass.total,
                metrics.com.total,
                metrics.calibration.total,
            ],
            series: Some([
                metrics.rms.series,
                metrics.mass.series,
                metrics.com.series,
                metrics.calibration.series,
            ]),
        })
        .collect()
}

/// Run the Cartesian product of `alphas × obs_counts`, `replicates` runs per
/// cell. Failed replicates are recorded and excluded from the summaries.
pub fn run_sweep(
    cfg: &ExperimentConfig,
    alphas: &[f64],
    obs_counts: &[usize],
) -> Result<SweepResult> {
    cfg.validate()?;
    if alphas.is_empty() || obs_counts.is_empty() {
        return Err(Error::Config("sweep lists must not be empty".into()));
    }
    let mut jobs = Vec::new();
    for &alpha in alphas {
        for &obs_count in obs_counts {
            for replicate in 0..cfg.replicates as u64 {
                jobs.push((alpha, obs_count, replicate));
            }
        }
    }
    let outcomes = map_jobs(&jobs, |&(alpha, obs_count, replicate)| {
        let cell = cfg.cell(alpha, obs_count);
        (alpha, obs_count, replicate, run_replicate(&cell, replicate))
    });

    let mut records = Vec::new();
    let mut failures = Vec::new();
    for (alpha, obs_count, replicate, outcome) in outcomes {
        match outcome {
            Ok(o) => records.extend(outcome_records(cfg, alpha, obs_count, o)),
            Err(e) => failures.push(FailureRecord {
                alpha,
                obs_count,
                replicate,
                error: e.to_string(),
            }),
        }
    }
    records.sort_by(|a, b| {
        (a.alpha.to_bits(), a.obs_count, a.filter.name(), a.replicate).cmp(&(
            b.alpha.to_bits(),
            b.obs_count,
            b.filter.name(),
            b.replicate,
        ))
    });
    let summaries = summaries_from_records(&records);
    Ok(SweepResult {
        config: cfg.clone(),
        alphas: alphas.to_vec(),
        obs_counts: obs_counts.to_vec(),
        records,
        failures,
        summaries,
    })
}

/// Log-spaced grid, endpoints included.
pub fn log_spaced(min: f64, max: f64, count: usize) -> Vec<f64> {
    assert!(min > 0.0 && max > min && count >= 2);
    let (l0, l1) = (min.ln(), max.ln());
    (0..count)
        .map(|i| (l0 + (l1 - l0) * i as f64 / (count - 1) as f64).exp())
        .collect()
}

/// Sweep over an `α` grid at the configured `I`; the per-cell means form the
/// α-curves.
pub fn run_alpha_curve(cfg: &ExperimentConfig, alphas: &[f64]) -> Result<SweepResult> {
    run_sweep(cfg, alphas, &[cfg.obs_count])
}
