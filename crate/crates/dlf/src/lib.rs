//! Data assimilation for a noisy 1-D advection-diffusion equation on a
//! periodic domain.
//!
//! The crate provides:
//!
//! * a ground-truth simulator (Strang splitting: exact spectral diffusion
//!   around a stochastic Lax-Wendroff advection step),
//! * a deliberately coarse forward model (upwind + explicit Euler advection,
//!   exact spectral diffusion) as a dense linear operator with process-noise
//!   covariance,
//! * synthetic observations drawn from the truth,
//! * pseudo-observations: past observations transported forward along
//!   characteristics, with mean and covariance evolved under the model's
//!   derivative estimates,
//! * the Kalman filter (KF) and dynamic likelihood filter (DLF/MDLF) updates
//!   plus a sequential driver and forecasting past the last observation,
//! * the four quality metrics (RMS, mass, center-of-mass, calibration),
//! * a replicated experiment harness with parameter sweeps, quantile
//!   summaries, and CSV/JSON outputs.
//!
//! Replicates and sweep cells are embarrassingly parallel; they run on rayon
//! when the default `parallel` feature is enabled and fall back to a
//! sequential loop otherwise.

pub mod error;
pub mod experiment;
pub mod filter;
pub mod grid;
pub mod metrics;
pub mod model;
pub mod noise;
pub mod observation;
pub mod output;
pub mod pseudo;
pub mod truth;

pub use error::{Error, Result};
pub use experiment::{ExperimentConfig, InitMode, SweepSummary};
pub use filter::{FilterKind, GaussianState};
pub use grid::{Grid, InterpRow, TimeAxis};
pub use noise::{NoiseSpec, RngStream, StreamRole};
pub use truth::{FieldState, PhaseSpeed, Forcing, PhysicsConfig};
