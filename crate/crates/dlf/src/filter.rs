//! Sequential Gaussian filtering: the Kalman predict/analysis steps, the
//! pseudo-observation-only update, the multi-analysis update at observation
//! times, the time-stepping driver, and forecasting past the last
//! observation.
//!
//! The multi-analysis update conditions on the new observation and on all
//! live pseudo-observations. Their error blocks are independent, so it is
//! performed as two sequential analysis steps (real observations first),
//! which equals one-shot joint Gaussian conditioning on the stacked
//! observation vector.

use crate::error::{Error, Result};
use crate::grid::{interp_matrix, Grid, TimeAxis};
use crate::model::{
    forcing_vector, process_noise_cov, ModelConfig, ModelOperator, ProcessNoiseCov,
};
use crate::observation::ObservationSet;
use crate::pseudo::{PseudoObsBank, PseudoSettings};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Gaussian posterior `N(mean, cov)` at one estimation time.
#[derive(Debug, Clone, PartialEq)]
pub struct GaussianState {
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
    pub time_index: usize,
}

/// Which filter drives a run. `Dlf` carries pseudo-observation machinery;
/// `Kf` never touches it.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum FilterKind {
    Kf,
    Dlf,
}

impl FilterKind {
    pub fn name(self) -> &'static str {
        match self {
            FilterKind::Kf => "kf",
            FilterKind::Dlf => "dlf",
        }
    }
}

impl std::fmt::Display for FilterKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for FilterKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim().to_ascii_lowercase().as_str() {
            "kf" => Ok(FilterKind::Kf),
            "dlf" => Ok(FilterKind::Dlf),
            other => Err(Error::InvalidArgument(format!(
                "unknown filter '{other}', expected kf or dlf"
            ))),
        }
    }
}

/// Everything a filter run borrows: the discretization, the model belief,
/// the precomputed step operators, and the observation sequence.
pub struct RunContext<'a> {
    pub grid: &'a Grid,
    pub ta: &'a TimeAxis,
    pub model: &'a ModelConfig,
    pub operators: &'a [ModelOperator],
    pub observations: &'a [ObservationSet],
    /// Maximum number of live pseudo-observation groups.
    pub cap: usize,
    pub settings: PseudoSettings,
    pub record_characteristics: bool,
}

/// One recorded pseudo-observation sample, for trajectory dumps.
#[derive(Debug, Clone, Copy)]
pub struct CharacteristicSample {
    pub origin: usize,
    pub member: usize,
    pub time_index: usize,
    pub position: f64,
    pub mean: f64,
    pub var: f64,
}

/// Output of a filter run: the posterior at every estimation time, plus the
/// recorded pseudo-observation trajectories when requested.
#[derive(Debug)]
pub struct FilterRun {
    pub states: Vec<GaussianState>,
    pub characteristics: Vec<CharacteristicSample>,
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Predict step: `mean' = L·mean + dt·f`, `cov' = L·cov·Lᵀ + Q`.
pub fn predict(
    state: &GaussianState,
    op: &ModelOperator,
    forcing: &DVector<f64>,
    dt: f64,
    q: &ProcessNoiseCov,
) -> GaussianState {
    let mean = &op.matrix * &state.mean + forcing * dt;
    let cov = symmetrize(&op.matrix * &state.cov * op.matrix.transpose() + &q.matrix);
    GaussianState {
        mean,
        cov,
        time_index: state.time_index + 1,
    }
}

/// Analysis step: condition the state on `values ~ N(H·state, R)`.
///
/// The innovation covariance is factorized symmetrically; on failure a
/// relative jitter of `1e-10·trace/I` is added once before giving up.
pub fn analysis(
    state: &GaussianState,
    h: &DMatrix<f64>,
    values: &DVector<f64>,
    r: &DMatrix<f64>,
) -> Result<GaussianState> {
    let obs_dim = values.len();
    if obs_dim == 0 {
        return Ok(state.clone());
    }
    if h.nrows() != obs_dim || h.ncols() != state.mean.len() {
        return Err(Error::InvalidArgument(format!(
            "observation operator is {}×{}, expected {}×{}",
            h.nrows(),
            h.ncols(),
            obs_dim,
            state.mean.len()
        )));
    }
    let gain = compute_gain(&state.cov, h, r)?;
    apply_gain(state, h, &gain, values)
}

/// Kalman gain `K = P Hᵀ (H P Hᵀ + R)⁻¹` via symmetric factorization.
pub fn compute_gain(
    cov: &DMatrix<f64>,
    h: &DMatrix<f64>,
    r: &DMatrix<f64>,
) -> Result<DMatrix<f64>> {
    let obs_dim = h.nrows();
    let ph_t = cov * h.transpose();
    let s = symmetrize(h * &ph_t + r);
    let chol = match s.clone().cholesky() {
        Some(c) => c,
        None => {
            let jitter = 1e-10 * s.trace() / obs_dim as f64;
            (s.clone() + DMatrix::identity(obs_dim, obs_dim) * jitter)
                .cholesky()
                .ok_or_else(|| Error::Conditioning {
                    context: format!(
                        "innovation covariance of size {obs_dim} is not positive definite \
                         (trace {:.3e}) even after jitter",
                        s.trace()
                    ),
                })?
        }
    };
    Ok(chol.solve(&ph_t.transpose()).transpose())
}

/// Apply a gain: `mean' = mean + K·(Y - H·mean)`, `cov' = (I - K·H)·cov`.
pub fn apply_gain(
    state: &GaussianState,
    h: &DMatrix<f64>,
    gain: &DMatrix<f64>,
    values: &DVector<f64>,
) -> Result<GaussianState> {
    let innovation = values - h * &state.mean;
    let mean = &state.mean + gain * innovation;
    let k_dim = state.mean.len();
    let identity = DMatrix::identity(k_dim, k_dim);
    let cov = symmetrize((identity - gain * h) * &state.cov);
    Ok(GaussianState {
        mean,
        cov,
        time_index: state.time_index,
    })
}

fn analyze_observation(
    state: &GaussianState,
    obs: &ObservationSet,
    grid: &Grid,
) -> Result<GaussianState> {
    let h = interp_matrix(&obs.locations, grid);
    analysis(state, &h, &obs.values, &obs.error_cov)
}

/// Update on pseudo-observations only. An empty bank leaves the state
/// untouched.
pub fn dlf_update(state: &GaussianState, bank: &PseudoObsBank, grid: &Grid) -> Result<GaussianState> {
    if bank.is_empty() {
        return Ok(state.clone());
    }
    let stacked = bank.concatenate();
    let h = interp_matrix(&stacked.positions, grid);
    analysis(state, &h, &stacked.mean, &stacked.cov)
}

/// Multi-analysis update at an observation time: condition on the new
/// observation and on all live pseudo-observations (origins strictly older
/// than the new batch). Equal to joint conditioning on the stacked
/// observation with block-diagonal error covariance.
pub fn mdlf_update(
    state: &GaussianState,
    obs: &ObservationSet,
    bank: &PseudoObsBank,
    grid: &Grid,
) -> Result<GaussianState> {
    let after_obs = analyze_observation(state, obs, grid)?;
    dlf_update(&after_obs, bank, grid)
}

fn record_bank(bank: &PseudoObsBank, n: usize, out: &mut Vec<CharacteristicSample>) {
    for group in bank.groups() {
        for (i, &x) in group.positions.iter().enumerate() {
            out.push(CharacteristicSample {
                origin: group.origin_index,
                member: i,
                time_index: n,
                position: x,
                mean: group.value_mean[i],
                var: group.value_cov[(i, i)],
            });
        }
    }
}

/// Walk the time axis: predict every step; at observation times run the
/// analysis (KF) or the multi-analysis update followed by ingestion (DLF);
/// between observations the DLF keeps conditioning on the advancing bank.
/// Returns the posterior at every estimation time `0..=N`.
pub fn run_filter(
    kind: FilterKind,
    ctx: &RunContext<'_>,
    init: GaussianState,
) -> Result<FilterRun> {
    let n_steps = ctx.ta.step_count();
    if ctx.operators.len() < n_steps {
        return Err(Error::InvalidArgument(format!(
            "need {n_steps} step operators, got {}",
            ctx.operators.len()
        )));
    }
    let dt = ctx.ta.dt();
    let second_diff = crate::model::second_difference_matrix(ctx.grid);
    let mut bank = PseudoObsBank::new(ctx.cap);
    let mut states = Vec::with_capacity(n_steps + 1);
    let mut characteristics = Vec::new();
    states.push(init);

    for n in 1..=n_steps {
        let step = (|| -> Result<GaussianState> {
            let previous = states.last().unwrap();
            let t_prev = ctx.ta.time(n - 1);
            let op = &ctx.operators[n - 1];
            let forcing = forcing_vector(ctx.grid, &ctx.model.forcing, t_prev);
            let q = process_noise_cov(&previous.mean, ctx.model, dt, ctx.grid);
            let mut state = predict(previous, op, &forcing, dt, &q);

            if kind == FilterKind::Dlf {
                bank.advance_values(
                    &previous.mean,
                    &previous.cov,
                    ctx.model,
                    &second_diff,
                    ctx.grid,
                    t_prev,
                    dt,
                    &ctx.settings,
                );
                bank.advance_positions(&ctx.model.speed, t_prev, dt, ctx.grid);
            }

            match ctx.ta.obs_index(n) {
                Some(m) => {
                    let obs = ctx.observations.get(m).ok_or_else(|| {
                        Error::InvalidArgument(format!("no observation batch for index {m}"))
                    })?;
                    if kind == FilterKind::Dlf {
                        state = mdlf_update(&state, obs, &bank, ctx.grid)?;
                        bank.ingest(obs);
                    } else {
                        state = analyze_observation(&state, obs, ctx.grid)?;
                    }
                }
                None => {
                    if kind == FilterKind::Dlf && !bank.is_empty() {
                        state = dlf_update(&state, &bank, ctx.grid)?;
                    }
                }
            }
            Ok(state)
        })()
        .map_err(|e| Error::FilterStep {
            step: n,
            mode: kind.name(),
            source: Box::new(e),
        })?;

        if ctx.record_characteristics && kind == FilterKind::Dlf {
            record_bank(&bank, n, &mut characteristics);
        }
        states.push(step);
    }

    Ok(FilterRun {
        states,
        characteristics,
    })
}

/// Continue past the last state with the DLF loop minus real observations:
/// predict plus pseudo-only updates, with the bank still advancing. Returns
/// `horizon + 1` states starting with the input state.
pub fn forecast(
    grid: &Grid,
    dt: f64,
    model: &ModelConfig,
    settings: &PseudoSettings,
    state: &GaussianState,
    bank: &PseudoObsBank,
    horizon: usize,
) -> Result<Vec<GaussianState>> {
    let second_diff = crate::model::second_difference_matrix(grid);
    let mut bank = bank.clone();
    let mut states = Vec::with_capacity(horizon + 1);
    states.push(state.clone());
    for j in 0..horizon {
        let previous = states.last().unwrap();
        let n_prev = state.time_index + j;
        let t_prev = n_prev as f64 * dt;
        let op = crate::model::build_operator(grid, n_prev, t_prev, dt, model.alpha, &model.speed)?;
        let forcing = forcing_vector(grid, &model.forcing, t_prev);
        let q = process_noise_cov(&previous.mean, model, dt, grid);
        let mut next = predict(previous, &op, &forcing, dt, &q);
        bank.advance_values(
            &previous.mean,
            &previous.cov,
            model,
            &second_diff,
            grid,
            t_prev,
            dt,
            settings,
        );
        bank.advance_positions(&model.speed, t_prev, dt, grid);
        if !bank.is_empty() {
            next = dlf_update(&next, &bank, grid)?;
        }
        states.push(next);
    }
    Ok(states)
}

/// Gains recorded for one step of the two-pass mode.
#[derive(Debug, Clone)]
pub enum StepGains {
    /// No update this step.
    None,
    /// Plain analysis on the real observation batch.
    Observation { h: DMatrix<f64>, gain: DMatrix<f64> },
    /// Pseudo-observation-only update.
    Pseudo { h: DMatrix<f64>, gain: DMatrix<f64> },
    /// Multi-analysis: real observation first, then pseudo-observations.
    Both {
        h_obs: DMatrix<f64>,
        gain_obs: DMatrix<f64>,
        h_pseudo: DMatrix<f64>,
        gain_pseudo: DMatrix<f64>,
    },
}

/// Gain schedule plus the covariance trajectory it implies.
pub struct GainSchedule {
    pub per_step: Vec<StepGains>,
    pub covariances: Vec<DMatrix<f64>>,
}

/// Pass one of the two-pass mode: run the covariance recursion only and
/// record every gain. Valid when the model's noise covariances do not depend
/// on the running mean, i.e. the model wave-noise amplitudes are zero; the
/// gains are then independent of the measured values.
pub fn precompute_gains(
    kind: FilterKind,
    ctx: &RunContext<'_>,
    init_cov: &DMatrix<f64>,
) -> Result<GainSchedule> {
    if ctx.model.noise.wave_uncorrelated != 0.0 || ctx.model.noise.wave_constant != 0.0 {
        return Err(Error::Config(
            "two-pass gains require a model without wave noise (state-dependent covariance)"
                .into(),
        ));
    }
    let n_steps = ctx.ta.step_count();
    let dt = ctx.ta.dt();
    let k_dim = init_cov.nrows();
    let zero_mean = DVector::zeros(k_dim);
    let second_diff = crate::model::second_difference_matrix(ctx.grid);
    let identity = DMatrix::identity(k_dim, k_dim);
    let mut bank = PseudoObsBank::new(ctx.cap);
    let mut cov = init_cov.clone();
    let mut per_step = Vec::with_capacity(n_steps + 1);
    let mut covariances = Vec::with_capacity(n_steps + 1);
    per_step.push(StepGains::None);
    covariances.push(cov.clone());

    for n in 1..=n_steps {
        let t_prev = ctx.ta.time(n - 1);
        let op = &ctx.operators[n - 1];

        // The bank advances with the posterior moments of step n-1, exactly
        // as in the single-pass driver.
        if kind == FilterKind::Dlf {
            bank.advance_values(
                &zero_mean,
                &cov,
                ctx.model,
                &second_diff,
                ctx.grid,
                t_prev,
                dt,
                &ctx.settings,
            );
            bank.advance_positions(&ctx.model.speed, t_prev, dt, ctx.grid);
        }

        let q = process_noise_cov(&zero_mean, ctx.model, dt, ctx.grid);
        cov = symmetrize(&op.matrix * &cov * op.matrix.transpose() + q.matrix);

        let gains = match ctx.ta.obs_index(n) {
            Some(m) => {
                let obs = &ctx.observations[m];
                let h_obs = interp_matrix(&obs.locations, ctx.grid);
                let gain_obs = compute_gain(&cov, &h_obs, &obs.error_cov)?;
                cov = symmetrize((&identity - &gain_obs * &h_obs) * &cov);
                let gains = if kind == FilterKind::Dlf && !bank.is_empty() {
                    let stacked = bank.concatenate();
                    let h_pseudo = interp_matrix(&stacked.positions, ctx.grid);
                    let gain_pseudo = compute_gain(&cov, &h_pseudo, &stacked.cov)?;
                    cov = symmetrize((&identity - &gain_pseudo * &h_pseudo) * &cov);
                    StepGains::Both {
                        h_obs,
                        gain_obs,
                        h_pseudo,
                        gain_pseudo,
                    }
                } else {
                    StepGains::Observation {
                        h: h_obs,
                        gain: gain_obs,
                    }
                };
                if kind == FilterKind::Dlf {
                    bank.ingest(obs);
                }
                gains
            }
            None => {
                if kind == FilterKind::Dlf && !bank.is_empty() {
                    let stacked = bank.concatenate();
                    let h = interp_matrix(&stacked.positions, ctx.grid);
                    let gain = compute_gain(&cov, &h, &stacked.cov)?;
                    cov = symmetrize((&identity - &gain * &h) * &cov);
                    StepGains::Pseudo { h, gain }
                } else {
                    StepGains::None
                }
            }
        };
        per_step.push(gains);
        covariances.push(cov.clone());
    }
    Ok(GainSchedule {
        per_step,
        covariances,
    })
}

/// Pass two: replay the mean recursion applying the recorded gains.
pub fn apply_gains(
    kind: FilterKind,
    ctx: &RunContext<'_>,
    init_mean: &DVector<f64>,
    schedule: &GainSchedule,
) -> Result<Vec<DVector<f64>>> {
    let n_steps = ctx.ta.step_count();
    let dt = ctx.ta.dt();
    let second_diff = crate::model::second_difference_matrix(ctx.grid);
    let zero_cov = DMatrix::zeros(init_mean.len(), init_mean.len());
    let mut bank = PseudoObsBank::new(ctx.cap);
    let mut means = Vec::with_capacity(n_steps + 1);
    means.push(init_mean.clone());

    for n in 1..=n_steps {
        let t_prev = ctx.ta.time(n - 1);
        let previous = means.last().unwrap();
        let op = &ctx.operators[n - 1];
        let forcing = forcing_vector(ctx.grid, &ctx.model.forcing, t_prev);
        let mut mean = &op.matrix * previous + forcing * dt;

        if kind == FilterKind::Dlf {
            bank.advance_values(
                previous,
                &zero_cov,
                ctx.model,
                &second_diff,
                ctx.grid,
                t_prev,
                dt,
                &ctx.settings,
            );
            bank.advance_positions(&ctx.model.speed, t_prev, dt, ctx.grid);
        }

        match &schedule.per_step[n] {
            StepGains::None => {}
            StepGains::Observation { h, gain } => {
                let obs = &ctx.observations[ctx.ta.obs_index(n).unwrap()];
                mean += gain * (&obs.values - h * &mean);
            }
            StepGains::Pseudo { h, gain } => {
                let stacked = bank.concatenate();
                mean += gain * (&stacked.mean - h * &mean);
            }
            StepGains::Both {
                h_obs,
                gain_obs,
                h_pseudo,
                gain_pseudo,
            } => {
                let obs = &ctx.observations[ctx.ta.obs_index(n).unwrap()];
                mean += gain_obs * (&obs.values - h_obs * &mean);
                let stacked = bank.concatenate();
                mean += gain_pseudo * (&stacked.mean - h_pseudo * &mean);
            }
        }
        if kind == FilterKind::Dlf {
            if let Some(m) = ctx.ta.obs_index(n) {
                bank.ingest(&ctx.observations[m]);
            }
        }
        means.push(mean);
    }
    Ok(means)
}

/// Two-pass driver: precompute the gain schedule, then apply it. Produces
/// the same trajectory as [`run_filter`] whenever the schedule is valid.
pub fn run_filter_two_pass(
    kind: FilterKind,
    ctx: &RunContext<'_>,
    init: GaussianState,
) -> Result<FilterRun> {
    let schedule = precompute_gains(kind, ctx, &init.cov)?;
    let means = apply_gains(kind, ctx, &init.mean, &schedule)?;
    let states = means
        .into_iter()
        .zip(schedule.covariances)
        .enumerate()
        .map(|(n, (mean, cov))| GaussianState {
            mean,
            cov,
            time_index: n,
        })
        .collect();
    Ok(FilterRun {
        states,
        characteristics: Vec::new(),
    })
}
