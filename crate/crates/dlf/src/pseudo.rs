//! Pseudo-observations: past observations carried forward along the
//! characteristics of the advective flow.
//!
//! Each ingested observation batch becomes a group whose positions solve
//! `dx = -c(x, t) dt` by explicit Euler, whose value mean drifts with the
//! model's interpolated second derivative (diffusion seen from the moving
//! frame), and whose covariance inflates with the process noise and with the
//! model's own uncertainty. A cap bounds the number of live groups; the
//! oldest group is discarded first.

use crate::grid::{interp_matrix, Grid};
use crate::model::ModelConfig;
use crate::observation::ObservationSet;
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};
use std::collections::VecDeque;

/// Coefficient convention for the model-uncertainty term of the covariance
/// propagation. `Squared` scales the second-derivative map quadratically,
/// as the covariance of a linear map requires; `Linear` keeps a single
/// factor for fidelity comparisons.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ModelCovCoeff {
    #[default]
    Squared,
    Linear,
}

/// Shape of the wave-noise contribution to the covariance growth: the full
/// outer product of the interpolated gradient, or its diagonal.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WaveNoiseCov {
    #[default]
    Outer,
    Diagonal,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct PseudoSettings {
    #[serde(default)]
    pub model_cov_coeff: ModelCovCoeff,
    #[serde(default)]
    pub wavenoise_cov: WaveNoiseCov,
}

/// Pseudo-observations descended from one real observation batch.
#[derive(Debug, Clone)]
pub struct PseudoObsGroup {
    pub origin_index: usize,
    pub origin_time_index: usize,
    pub positions: Vec<f64>,
    pub value_mean: DVector<f64>,
    pub value_cov: DMatrix<f64>,
}

/// Ordered bank of live groups, oldest first, capped at `cap` groups.
#[derive(Debug, Clone)]
pub struct PseudoObsBank {
    groups: VecDeque<PseudoObsGroup>,
    cap: usize,
}

/// Concatenation of the live bank in origin order, with the block-diagonal
/// covariance handed to the filters.
#[derive(Debug, Clone)]
pub struct Concatenated {
    pub positions: Vec<f64>,
    pub mean: DVector<f64>,
    pub cov: DMatrix<f64>,
}

impl PseudoObsBank {
    pub fn new(cap: usize) -> Self {
        Self {
            groups: VecDeque::new(),
            cap,
        }
    }

    pub fn cap(&self) -> usize {
        self.cap
    }

    pub fn len(&self) -> usize {
        self.groups.len()
    }

    pub fn is_empty(&self) -> bool {
        self.groups.is_empty()
    }

    pub fn groups(&self) -> impl Iterator<Item = &PseudoObsGroup> {
        self.groups.iter()
    }

    /// Total number of live pseudo-observation values.
    pub fn total_members(&self) -> usize {
        self.groups.iter().map(|g| g.value_mean.len()).sum()
    }

    /// Seed a new group from a fresh observation batch. If the bank would
    /// exceed its cap the oldest group is dropped first.
    pub fn ingest(&mut self, obs: &ObservationSet) {
        self.push_group(PseudoObsGroup {
            origin_index: obs.obs_index,
            origin_time_index: obs.time_index,
            positions: obs.locations.clone(),
            value_mean: obs.values.clone(),
            value_cov: obs.error_cov.clone(),
        });
    }

    /// Append an already-built group, enforcing the cap.
    pub fn push_group(&mut self, group: PseudoObsGroup) {
        if self.cap == 0 {
            return;
        }
        self.groups.push_back(group);
        while self.groups.len() > self.cap {
            self.groups.pop_front();
        }
    }

    /// Explicit Euler on `dx = -c(x, t) dt`, wrapped back onto the domain.
    pub fn advance_positions(&mut self, speed: &crate::truth::PhaseSpeed, t: f64, dt: f64, grid: &Grid) {
        for group in self.groups.iter_mut() {
            for x in group.positions.iter_mut() {
                *x = grid.wrap(*x - speed.eval(*x, t) * dt);
            }
        }
    }

    /// Advance every group's value mean and covariance over one step using
    /// the model moments at the step start.
    ///
    /// With `H̃` the interpolation at the current positions and `g` the
    /// interpolated model gradient:
    ///
    /// ```text
    /// mean += dt·((α + A²/2)·H̃·∇²⟨V⟩ + f(positions, t))
    /// cov  += dt·(B²·I + A²·g gᵀ) + dt²·coeff·(H̃∇²)·P·(H̃∇²)ᵀ
    /// ```
    ///
    /// where `coeff` is `(α + A²/2)²` by default.
    #[allow(clippy::too_many_arguments)]
    pub fn advance_values(
        &mut self,
        model_mean: &DVector<f64>,
        model_cov: &DMatrix<f64>,
        model: &ModelConfig,
        second_diff: &DMatrix<f64>,
        grid: &Grid,
        t: f64,
        dt: f64,
        settings: &PseudoSettings,
    ) {
        if self.groups.is_empty() {
            return;
        }
        let a = model.noise.wave_uncorrelated;
        let b = model.noise.forcing;
        let drift = model.alpha + 0.5 * a * a;
        let coeff = match settings.model_cov_coeff {
            ModelCovCoeff::Squared => drift * drift,
            ModelCovCoeff::Linear => drift,
        };
        let d2_mean = second_diff * model_mean;
        let grad_mean = crate::model::model_derivatives(model_mean, grid).0;

        for group in self.groups.iter_mut() {
            let h = interp_matrix(&group.positions, grid);
            let interp_d2 = &h * &d2_mean;
            for (i, &x) in group.positions.iter().enumerate() {
                group.value_mean[i] +=
                    dt * (drift * interp_d2[i] + model.forcing.eval(x, t));
            }

            let g = &h * &grad_mean;
            let i_dim = group.positions.len();
            for r in 0..i_dim {
                match settings.wavenoise_cov {
                    WaveNoiseCov::Outer => {
                        for c in 0..i_dim {
                            group.value_cov[(r, c)] += dt * a * a * g[r] * g[c];
                        }
                    }
                    WaveNoiseCov::Diagonal => {
                        group.value_cov[(r, r)] += dt * a * a * g[r] * g[r];
                    }
                }
                group.value_cov[(r, r)] += dt * b * b;
            }
            if coeff != 0.0 {
                let map = &h * second_diff;
                let spread = &map * model_cov * map.transpose();
                group.value_cov += spread * (dt * dt * coeff);
            }
            let sym = (&group.value_cov + group.value_cov.transpose()) * 0.5;
            group.value_cov = sym;
        }
    }

    /// Stack positions, value means, and covariances in origin order. Cross
    /// covariances between groups of different origin are zero, so the
    /// stacked covariance is block diagonal. An empty bank concatenates to
    /// empty vectors and a 0×0 matrix.
    pub fn concatenate(&self) -> Concatenated {
        let total = self.total_members();
        let mut positions = Vec::with_capacity(total);
        let mut mean = DVector::zeros(total);
        let mut cov = DMatrix::zeros(total, total);
        let mut offset = 0;
        for group in &self.groups {
            let i_dim = group.value_mean.len();
            positions.extend_from_slice(&group.positions);
            mean.rows_mut(offset, i_dim).copy_from(&group.value_mean);
            cov.view_mut((offset, offset), (i_dim, i_dim))
                .copy_from(&group.value_cov);
            offset += i_dim;
        }
        Concatenated {
            positions,
            mean,
            cov,
        }
    }
}
