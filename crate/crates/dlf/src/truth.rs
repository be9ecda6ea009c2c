//! Ground-truth trajectory generation.
//!
//! One time step applies Strang splitting: half a step of exact spectral
//! diffusion, a full stochastic advection step, and another half step of
//! diffusion. The advection step transports with the classical Lax-Wendroff
//! stencil at the deterministic Courant number, realizes the spatially
//! constant speed noise as an exact spectral translation, and adds the
//! spatially uncorrelated speed noise and the forcing noise as mean-zero
//! increments with the second-order weak corrections of an explicit
//! predictor-supported Runge-Kutta step.

use crate::error::{Error, Result};
use crate::grid::{Grid, TimeAxis};
use crate::noise::{wiener_increments, NoiseSpec, RngStream};
use nalgebra::DVector;
use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};
use serde::{Deserialize, Serialize};
use std::sync::Arc;

/// Inverse squared half-width of the initial bump `σ·exp(-250 d²)`.
pub const INITIAL_BUMP_RATE: f64 = 250.0;

/// A grid-valued field snapshot.
#[derive(Debug, Clone, PartialEq)]
pub struct FieldState {
    pub values: DVector<f64>,
    pub time_index: usize,
}

/// Deterministic phase speed `c(x, t)`, periodic in `x`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum PhaseSpeed {
    Zero,
    Constant { value: f64 },
    /// `amplitude · cos(omega · t)`, independent of `x`.
    Cosine { amplitude: f64, omega: f64 },
}

impl PhaseSpeed {
    pub fn eval(&self, _x: f64, t: f64) -> f64 {
        match self {
            PhaseSpeed::Zero => 0.0,
            PhaseSpeed::Constant { value } => *value,
            PhaseSpeed::Cosine { amplitude, omega } => amplitude * (omega * t).cos(),
        }
    }

    /// Largest possible |c| over all (x, t); used for CFL reporting.
    pub fn max_abs(&self) -> f64 {
        match self {
            PhaseSpeed::Zero => 0.0,
            PhaseSpeed::Constant { value } => value.abs(),
            PhaseSpeed::Cosine { amplitude, .. } => amplitude.abs(),
        }
    }
}

impl Default for PhaseSpeed {
    fn default() -> Self {
        PhaseSpeed::Cosine {
            amplitude: 1.0,
            omega: 5.0 * std::f64::consts::PI,
        }
    }
}

/// Deterministic forcing `f(x, t)`.
#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Forcing {
    #[default]
    Zero,
    Constant {
        value: f64,
    },
}

impl Forcing {
    pub fn eval(&self, _x: f64, _t: f64) -> f64 {
        match self {
            Forcing::Zero => 0.0,
            Forcing::Constant { value } => *value,
        }
    }

    pub fn is_zero(&self) -> bool {
        matches!(self, Forcing::Zero)
    }
}

/// Physical configuration of the dynamics in dimensionless units.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PhysicsConfig {
    /// Relative diffusion `α = D/(c₀·L)`.
    pub alpha: f64,
    pub speed: PhaseSpeed,
    pub forcing: Forcing,
    pub noise: NoiseSpec,
    /// Initial bump amplitude `σ`.
    pub init_amplitude: f64,
    /// Initial bump center `θ`.
    pub init_phase: f64,
}

impl PhysicsConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.alpha >= 0.0) {
            return Err(Error::InvalidArgument(format!(
                "alpha must be nonnegative, got {}",
                self.alpha
            )));
        }
        self.noise.validate()
    }
}

/// The three Wiener streams the truth consumes.
pub struct TruthNoise {
    pub advection: RngStream,
    pub forcing: RngStream,
    pub constant: RngStream,
}

/// `u0(x) = σ·exp(-250 d(x, θ)²)` with `d` the circle distance, so a bump
/// centered anywhere on the periodic domain stays smooth across the wrap.
pub fn initial_field(grid: &Grid, amplitude: f64, phase: f64) -> FieldState {
    let values = DVector::from_fn(grid.node_count(), |k, _| {
        let d = grid.circle_distance(grid.node(k), phase);
        amplitude * (-INITIAL_BUMP_RATE * d * d).exp()
    });
    FieldState {
        values,
        time_index: 0,
    }
}

/// Exact Fourier-space solution operators on a periodic grid: heat-kernel
/// decay per mode and exact translation.
pub struct SpectralDiffusion {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    /// Folded wavenumbers `2πk/L`, `k ∈ (-K/2, K/2]`.
    wavenumbers: Vec<f64>,
    len: usize,
}

impl SpectralDiffusion {
    pub fn new(grid: &Grid) -> Self {
        let len = grid.node_count();
        let mut planner = FftPlanner::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let wavenumbers = (0..len)
            .map(|j| {
                let k = if j <= len / 2 {
                    j as f64
                } else {
                    j as f64 - len as f64
                };
                2.0 * std::f64::consts::PI * k / grid.length()
            })
            .collect();
        Self {
            fwd,
            inv,
            wavenumbers,
            len,
        }
    }

    fn transform(&self, values: &DVector<f64>) -> Vec<Complex64> {
        let mut buf: Vec<Complex64> = values.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        self.fwd.process(&mut buf);
        buf
    }

    fn restore(&self, mut buf: Vec<Complex64>) -> DVector<f64> {
        self.inv.process(&mut buf);
        let scale = 1.0 / self.len as f64;
        DVector::from_iterator(self.len, buf.iter().map(|c| c.re * scale))
    }

    /// Multiply every mode by `exp(-α k̂² dt)`: the exact heat solution.
    pub fn step(&self, values: &DVector<f64>, alpha: f64, dt: f64) -> DVector<f64> {
        if alpha == 0.0 || dt == 0.0 {
            return values.clone();
        }
        let mut buf = self.transform(values);
        for (c, &k_hat) in buf.iter_mut().zip(&self.wavenumbers) {
            *c *= (-alpha * k_hat * k_hat * dt).exp();
        }
        self.restore(buf)
    }

    /// Exact translation `u(x) ← u(x + s)`. The Nyquist mode gets the real
    /// multiplier `cos(k̂ s)` to keep real fields real.
    pub fn shift(&self, values: &DVector<f64>, displacement: f64) -> DVector<f64> {
        if displacement == 0.0 {
            return values.clone();
        }
        let mut buf = self.transform(values);
        for (j, (c, &k_hat)) in buf.iter_mut().zip(&self.wavenumbers).enumerate() {
            let phase = k_hat * displacement;
            if self.len % 2 == 0 && j == self.len / 2 {
                *c *= phase.cos();
            } else {
                *c *= Complex64::new(phase.cos(), phase.sin());
            }
        }
        self.restore(buf)
    }
}

/// Periodic centered first difference `(u_{k+1} - u_{k-1}) / (2 dx)`.
pub fn centered_gradient(values: &DVector<f64>, dx: f64) -> DVector<f64> {
    let k = values.len();
    DVector::from_fn(k, |i, _| {
        (values[(i + 1) % k] - values[(i + k - 1) % k]) / (2.0 * dx)
    })
}

/// One classical Lax-Wendroff update for `u_t - c u_x = 0` with a per-node
/// Courant number `ν_k = c_k·dt/dx`. Exact one-cell shift at `|ν| = 1`.
pub fn lax_wendroff(values: &DVector<f64>, courant: &DVector<f64>) -> DVector<f64> {
    let k = values.len();
    DVector::from_fn(k, |i, _| {
        let up = values[(i + 1) % k];
        let down = values[(i + k - 1) % k];
        let nu = courant[i];
        values[i] + 0.5 * nu * (up - down) + 0.5 * nu * nu * (up - 2.0 * values[i] + down)
    })
}

const CFL_LIMIT: f64 = 1.0 + 1e-9;

fn deterministic_courant(
    grid: &Grid,
    speed: &PhaseSpeed,
    t_mid: f64,
    dt: f64,
) -> Result<DVector<f64>> {
    let dx = grid.spacing();
    let mut courant = DVector::zeros(grid.node_count());
    for k in 0..grid.node_count() {
        let nu = speed.eval(grid.node(k), t_mid) * dt / dx;
        if nu.abs() > CFL_LIMIT {
            return Err(Error::CflViolation {
                courant: nu,
                limit: 1.0,
                time: t_mid,
            });
        }
        courant[k] = nu;
    }
    Ok(courant)
}

/// One stochastic advection substep of length `dt` starting at time `t`.
///
/// Deterministic limit: classical Lax-Wendroff transport plus a trapezoidal
/// step for the forcing. The spatially constant speed noise enters as an
/// exact spectral translation; the spatially uncorrelated speed noise and
/// the forcing noise enter as mean-zero increments with the second-order
/// weak correction terms, so the ensemble mean follows the deterministic
/// scheme exactly.
pub fn advection_substep(
    state: &FieldState,
    t: f64,
    dt: f64,
    grid: &Grid,
    cfg: &PhysicsConfig,
    spectral: &SpectralDiffusion,
    noise: &mut TruthNoise,
) -> Result<FieldState> {
    let k = grid.node_count();
    let dx = grid.spacing();
    let u = &state.values;

    let courant = deterministic_courant(grid, &cfg.speed, t + 0.5 * dt, dt)?;
    let transported = lax_wendroff(u, &courant);

    // Forcing via the trapezoid rule.
    let mut next = transported.clone();
    if !cfg.forcing.is_zero() {
        for i in 0..k {
            let x = grid.node(i);
            next[i] += 0.5 * dt * (cfg.forcing.eval(x, t) + cfg.forcing.eval(x, t + dt));
        }
    }

    let spec = &cfg.noise;
    let dw_c = wiener_increments(&mut noise.advection, k, dt, false);
    let dw_u = wiener_increments(&mut noise.forcing, k, dt, false);
    let dw_tilde = wiener_increments(&mut noise.constant, 1, dt, true)[0];

    // Constant-speed noise: exact translation by Ã·ΔW̃ (profiles move toward
    // -x for positive speed).
    if spec.wave_constant != 0.0 {
        next = spectral.shift(&next, spec.wave_constant * dw_tilde);
    }

    if spec.wave_uncorrelated != 0.0 || spec.forcing != 0.0 {
        let sq = dt.sqrt();
        let a = spec.wave_uncorrelated;
        let amp = centered_gradient(u, dx) * a;
        // Supporting values carry the full drift displacement plus ±√dt times
        // the diffusion amplitude.
        let mut drifted = transported;
        if !cfg.forcing.is_zero() {
            for i in 0..k {
                drifted[i] += dt * cfg.forcing.eval(grid.node(i), t);
            }
        }
        let amp_plus = centered_gradient(&(&drifted + &amp * sq), dx) * a;
        let amp_minus = centered_gradient(&(&drifted - &amp * sq), dx) * a;
        for i in 0..k {
            next[i] += 0.25 * (amp_plus[i] + amp_minus[i] + 2.0 * amp[i]) * dw_c[i]
                + 0.25 * (amp_plus[i] - amp_minus[i]) * (dw_c[i] * dw_c[i] - dt) / sq
                + spec.forcing * dw_u[i];
        }
    }

    Ok(FieldState {
        values: next,
        time_index: state.time_index + 1,
    })
}

/// Generate the truth trajectory for `n = 0..=N` by Strang splitting:
/// half diffusion, full stochastic advection, half diffusion per step.
pub fn simulate_truth(
    grid: &Grid,
    ta: &TimeAxis,
    cfg: &PhysicsConfig,
    noise: &mut TruthNoise,
) -> Result<Vec<FieldState>> {
    cfg.validate()?;
    let spectral = SpectralDiffusion::new(grid);
    let dt = ta.dt();
    let mut trajectory = Vec::with_capacity(ta.step_count() + 1);
    trajectory.push(initial_field(grid, cfg.init_amplitude, cfg.init_phase));
    for n in 0..ta.step_count() {
        let current = trajectory.last().unwrap();
        let half = SpectralDiffusion::step(&spectral, &current.values, cfg.alpha, 0.5 * dt);
        let mid = FieldState {
            values: half,
            time_index: current.time_index,
        };
        let advected = advection_substep(&mid, ta.time(n), dt, grid, cfg, &spectral, noise)?;
        let full = spectral.step(&advected.values, cfg.alpha, 0.5 * dt);
        trajectory.push(FieldState {
            values: full,
            time_index: n + 1,
        });
    }
    Ok(trajectory)
}

/// One explicit weak-order-2 step for a scalar SDE `dX = a(X,t)dt + b(X,t)dW`
/// (predictor-supported Runge-Kutta with the `(ΔW² - dt)` correction). This
/// is the scalar core of the noise treatment used in [`advection_substep`].
pub fn weak2_scalar_step(
    a: impl Fn(f64, f64) -> f64,
    b: impl Fn(f64, f64) -> f64,
    x: f64,
    t: f64,
    dt: f64,
    dw: f64,
) -> f64 {
    let sq = dt.sqrt();
    let a0 = a(x, t);
    let b0 = b(x, t);
    let predictor = x + a0 * dt + b0 * dw;
    let x_plus = x + a0 * dt + b0 * sq;
    let x_minus = x + a0 * dt - b0 * sq;
    let b_plus = b(x_plus, t);
    let b_minus = b(x_minus, t);
    x + 0.5 * dt * (a0 + a(predictor, t + dt))
        + 0.25 * (b_plus + b_minus + 2.0 * b0) * dw
        + 0.25 * (b_plus - b_minus) * (dw * dw - dt) / sq
}
