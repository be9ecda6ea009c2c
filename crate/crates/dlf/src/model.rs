//! The coarse forward model used by the filters: a first-order split step
//! (upwind + explicit Euler advection, exact spectral diffusion) materialized
//! as a dense linear operator, plus its process-noise covariance.

use crate::error::{Error, Result};
use crate::grid::{Grid, TimeAxis};
use crate::noise::{NoiseSpec, RngStream};
use crate::truth::{Forcing, PhaseSpeed, SpectralDiffusion};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// What the model believes about the dynamics. The model is typically told
/// `wave_constant = 0` even when the truth uses it.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ModelConfig {
    pub alpha: f64,
    pub speed: PhaseSpeed,
    pub forcing: Forcing,
    pub noise: NoiseSpec,
    /// Multiplicative factor on the process-noise covariance. One keeps the
    /// nominal covariance; smaller values model an under-dispersed filter.
    #[serde(default = "default_q_scale")]
    pub q_scale: f64,
    /// Whether the process-noise covariance carries the gradient-coupled
    /// wave-noise term. The pseudo-observation covariance always does.
    #[serde(default = "default_true")]
    pub q_gradient_term: bool,
}

fn default_q_scale() -> f64 {
    1.0
}

fn default_true() -> bool {
    true
}

/// Dense one-step linear operator `L_n`, advancing the state from `t_n` to
/// `t_{n+1}`. Rows sum to one, so constants are preserved.
#[derive(Debug, Clone)]
pub struct ModelOperator {
    pub matrix: DMatrix<f64>,
    pub time_index: usize,
}

/// Symmetric PSD process-noise covariance `Q_n`.
#[derive(Debug, Clone)]
pub struct ProcessNoiseCov {
    pub matrix: DMatrix<f64>,
}

/// Upwind advection matrix for `u_t - c u_x = 0` at time `t`: information
/// travels toward `-c`, so positive speeds difference on the `+x` side.
fn upwind_matrix(grid: &Grid, t: f64, dt: f64, speed: &PhaseSpeed) -> Result<DMatrix<f64>> {
    let k = grid.node_count();
    let dx = grid.spacing();
    let mut a = DMatrix::zeros(k, k);
    for i in 0..k {
        let nu = speed.eval(grid.node(i), t) * dt / dx;
        if nu.abs() > 1.0 + 1e-9 {
            return Err(Error::CflViolation {
                courant: nu,
                limit: 1.0,
                time: t,
            });
        }
        if nu >= 0.0 {
            a[(i, i)] = 1.0 - nu;
            a[(i, (i + 1) % k)] += nu;
        } else {
            a[(i, i)] = 1.0 + nu;
            a[(i, (i + k - 1) % k)] += -nu;
        }
    }
    Ok(a)
}

/// Dense circulant matrix of the exact spectral diffusion step.
fn diffusion_matrix(grid: &Grid, alpha: f64, dt: f64) -> DMatrix<f64> {
    let k = grid.node_count();
    if alpha == 0.0 || dt == 0.0 {
        return DMatrix::identity(k, k);
    }
    let spectral = SpectralDiffusion::new(grid);
    let mut impulse = DVector::zeros(k);
    impulse[0] = 1.0;
    let kernel = spectral.step(&impulse, alpha, dt);
    DMatrix::from_fn(k, k, |i, j| kernel[(i + k - j) % k])
}

/// Build `L_n = D_exact(dt) · A_upwind(t_n, dt)`.
pub fn build_operator(
    grid: &Grid,
    time_index: usize,
    t: f64,
    dt: f64,
    alpha: f64,
    speed: &PhaseSpeed,
) -> Result<ModelOperator> {
    let advect = upwind_matrix(grid, t, dt, speed)?;
    let matrix = if alpha == 0.0 {
        advect
    } else {
        diffusion_matrix(grid, alpha, dt) * advect
    };
    Ok(ModelOperator {
        matrix,
        time_index,
    })
}

/// Precompute the operators for every step of a run. `L_n` depends only on
/// `(t_n, dt, α)`, so one set serves both filters of a replicate.
pub fn build_operators(grid: &Grid, ta: &TimeAxis, cfg: &ModelConfig) -> Result<Vec<ModelOperator>> {
    let dt = ta.dt();
    let diffusion = if cfg.alpha == 0.0 {
        None
    } else {
        Some(diffusion_matrix(grid, cfg.alpha, dt))
    };
    (0..ta.step_count())
        .map(|n| {
            let advect = upwind_matrix(grid, ta.time(n), dt, &cfg.speed)?;
            let matrix = match &diffusion {
                Some(d) => d * advect,
                None => advect,
            };
            Ok(ModelOperator {
                matrix,
                time_index: n,
            })
        })
        .collect()
}

/// Periodic centered differences: first and second derivative estimates.
pub fn model_derivatives(values: &DVector<f64>, grid: &Grid) -> (DVector<f64>, DVector<f64>) {
    let k = values.len();
    let dx = grid.spacing();
    let grad = DVector::from_fn(k, |i, _| {
        (values[(i + 1) % k] - values[(i + k - 1) % k]) / (2.0 * dx)
    });
    let second = DVector::from_fn(k, |i, _| {
        (values[(i + 1) % k] - 2.0 * values[i] + values[(i + k - 1) % k]) / (dx * dx)
    });
    (grad, second)
}

/// Dense circulant matrix of the centered second-difference stencil.
pub fn second_difference_matrix(grid: &Grid) -> DMatrix<f64> {
    let k = grid.node_count();
    let dx2 = grid.spacing() * grid.spacing();
    DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            -2.0 / dx2
        } else if j == (i + 1) % k || i == (j + 1) % k {
            1.0 / dx2
        } else {
            0.0
        }
    })
}

/// Process-noise covariance over one step, derived from the Euler-Maruyama
/// covariance of the dynamics noise with the gradient taken from the current
/// mean state: `Q = q_scale·dt·(B² I + A² diag((∇V)²)) [+ Ã² dt · d dᵀ]`.
pub fn process_noise_cov(
    mean: &DVector<f64>,
    model: &ModelConfig,
    dt: f64,
    grid: &Grid,
) -> ProcessNoiseCov {
    let k = mean.len();
    let spec = &model.noise;
    let (grad, _) = model_derivatives(mean, grid);
    let b_sq = spec.forcing * spec.forcing * dt;
    let a_sq = if model.q_gradient_term {
        spec.wave_uncorrelated * spec.wave_uncorrelated * dt
    } else {
        0.0
    };
    let mut q = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            b_sq + a_sq * grad[i] * grad[i]
        } else {
            0.0
        }
    });
    if spec.wave_constant != 0.0 {
        let at_sq = spec.wave_constant * spec.wave_constant * dt;
        for i in 0..k {
            for j in 0..k {
                q[(i, j)] += at_sq * grad[i] * grad[j];
            }
        }
    }
    if model.q_scale != 1.0 {
        q *= model.q_scale;
    }
    ProcessNoiseCov { matrix: q }
}

/// Deterministic mean step `V' = L V + dt f`.
pub fn step_mean(
    op: &ModelOperator,
    state: &DVector<f64>,
    forcing: &DVector<f64>,
    dt: f64,
) -> DVector<f64> {
    &op.matrix * state + forcing * dt
}

/// Sampled step `V' = L V + dt f + w`, `w ~ N(0, Q)`.
pub fn step_sample(
    op: &ModelOperator,
    state: &DVector<f64>,
    forcing: &DVector<f64>,
    dt: f64,
    q: &ProcessNoiseCov,
    rng: &mut RngStream,
) -> Result<DVector<f64>> {
    let mut next = step_mean(op, state, forcing, dt);
    let k = state.len();
    if q.matrix.iter().any(|&v| v != 0.0) {
        let chol = q
            .matrix
            .clone()
            .cholesky()
            .or_else(|| {
                let jitter = 1e-14 * q.matrix.trace().max(1e-300) / k as f64;
                (q.matrix.clone() + DMatrix::identity(k, k) * jitter).cholesky()
            })
            .ok_or_else(|| Error::Conditioning {
                context: "process-noise covariance is not PSD".into(),
            })?;
        let z = DVector::from_fn(k, |_, _| rng.standard_normal());
        next += chol.l() * z;
    }
    Ok(next)
}

/// Forcing vector `f_n = (f(x^k, t_n))_k`.
pub fn forcing_vector(grid: &Grid, forcing: &Forcing, t: f64) -> DVector<f64> {
    DVector::from_fn(grid.node_count(), |k, _| forcing.eval(grid.node(k), t))
}
