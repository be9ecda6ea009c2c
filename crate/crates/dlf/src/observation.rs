//! Synthetic observations: random grid locations, truth values plus Gaussian
//! measurement error, and the diagonal error covariance handed to the filters.

use crate::error::{Error, Result};
use crate::grid::{interp_row, Grid, TimeAxis};
use crate::noise::{obs_noise, RngStream};
use crate::truth::FieldState;
use nalgebra::{DMatrix, DVector};

/// One observation batch: `I` locations, measured values, and the error
/// covariance `R = obs_var·I`.
#[derive(Debug, Clone)]
pub struct ObservationSet {
    /// 0-based observation index `m`.
    pub obs_index: usize,
    /// Estimation step `n_m` the batch belongs to.
    pub time_index: usize,
    /// Distinct grid-node positions, within `[0, L)`.
    pub locations: Vec<f64>,
    pub values: DVector<f64>,
    pub error_cov: DMatrix<f64>,
}

/// Draw `count` distinct grid nodes, uniformly without replacement.
pub fn draw_locations(grid: &Grid, count: usize, rng: &mut RngStream) -> Result<Vec<f64>> {
    let k = grid.node_count();
    if count > k {
        return Err(Error::InvalidArgument(format!(
            "cannot draw {count} distinct locations from {k} grid nodes"
        )));
    }
    // Partial Fisher-Yates over the node indices.
    let mut indices: Vec<usize> = (0..k).collect();
    for i in 0..count {
        let j = i + rng.index(k - i);
        indices.swap(i, j);
    }
    Ok(indices[..count].iter().map(|&i| grid.node(i)).collect())
}

/// Measure the truth at the given locations: exact node reads plus
/// independent `N(0, obs_var)` errors.
pub fn observe(
    truth: &FieldState,
    obs_index: usize,
    locations: &[f64],
    obs_var: f64,
    grid: &Grid,
    rng: &mut RngStream,
) -> ObservationSet {
    let noise = obs_noise(rng, locations.len(), obs_var);
    let values = DVector::from_fn(locations.len(), |i, _| {
        interp_row(locations[i], grid).apply(&truth.values) + noise[i]
    });
    ObservationSet {
        obs_index,
        time_index: truth.time_index,
        locations: locations.to_vec(),
        values,
        error_cov: DMatrix::identity(locations.len(), locations.len()) * obs_var,
    }
}

/// Generate the full observation sequence for a truth trajectory: locations
/// are redrawn independently at every observation time.
pub fn generate_observations(
    grid: &Grid,
    ta: &TimeAxis,
    truth: &[FieldState],
    count: usize,
    obs_var: f64,
    rng: &mut RngStream,
) -> Result<Vec<ObservationSet>> {
    ta.obs_steps()
        .iter()
        .enumerate()
        .map(|(m, &n)| {
            let locations = draw_locations(grid, count, rng)?;
            Ok(observe(&truth[n], m, &locations, obs_var, grid, rng))
        })
        .collect()
}
