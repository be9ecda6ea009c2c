//! Periodic spatial grid, time axis, and the linear interpolation operator
//! shared by the model, the filters, and the pseudo-observations.

use crate::error::{Error, Result};
use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

/// Wrap a position into `[0, L)`.
///
/// Positions exactly at `L` (and values that round up to `L` after the
/// remainder) map to `0`, so interpolation stays single-valued.
pub fn wrap(x: f64, length: f64) -> f64 {
    debug_assert!(length > 0.0);
    let mut r = x.rem_euclid(length);
    if r >= length {
        r -= length;
    }
    if r < 0.0 {
        // rem_euclid is nonnegative, but keep the guard for -0.0.
        r = 0.0;
    }
    r
}

/// Uniform periodic grid of `K` nodes `x^k = k·dx` on `[0, L)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Grid {
    length: f64,
    node_count: usize,
    spacing: f64,
}

impl Grid {
    pub fn new(length: f64, node_count: usize) -> Result<Self> {
        if !(length > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "grid length must be positive, got {length}"
            )));
        }
        if node_count < 2 {
            return Err(Error::InvalidArgument(format!(
                "grid needs at least 2 nodes, got {node_count}"
            )));
        }
        Ok(Self {
            length,
            node_count,
            spacing: length / node_count as f64,
        })
    }

    /// Domain length `L`.
    pub fn length(&self) -> f64 {
        self.length
    }

    /// Number of nodes `K`; the last node sits at `L - dx`.
    pub fn node_count(&self) -> usize {
        self.node_count
    }

    /// Node spacing `dx = L / K`.
    pub fn spacing(&self) -> f64 {
        self.spacing
    }

    /// Position of node `k`.
    pub fn node(&self, k: usize) -> f64 {
        debug_assert!(k < self.node_count);
        k as f64 * self.spacing
    }

    /// All node positions as a vector.
    pub fn nodes(&self) -> DVector<f64> {
        DVector::from_fn(self.node_count, |k, _| self.node(k))
    }

    /// Wrap a position into this grid's `[0, L)`.
    pub fn wrap(&self, x: f64) -> f64 {
        wrap(x, self.length)
    }

    /// Circle distance between two (wrapped) positions, in `[0, L/2]`.
    pub fn circle_distance(&self, a: f64, b: f64) -> f64 {
        let d = (self.wrap(a) - self.wrap(b)).abs();
        d.min(self.length - d)
    }
}

/// One row of the linear interpolation operator: the left node index and the
/// `(1 - r, r)` weight pair, `r ∈ [0, 1)`. The right node is `left + 1 mod K`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct InterpRow {
    pub left_index: usize,
    pub weights: (f64, f64),
}

impl InterpRow {
    /// Apply the row to a field vector.
    pub fn apply(&self, field: &DVector<f64>) -> f64 {
        let k = field.len();
        let right = (self.left_index + 1) % k;
        self.weights.0 * field[self.left_index] + self.weights.1 * field[right]
    }
}

/// Interpolation row for position `x`: weights `(1 - r, r)` on the nodes
/// bracketing `x`, with `r = (x - x^ℓ)/dx`. Positions are wrapped first, so
/// the rightmost cell pairs the last node with node 0.
pub fn interp_row(x: f64, grid: &Grid) -> InterpRow {
    let xw = grid.wrap(x);
    let dx = grid.spacing();
    let k = grid.node_count();
    let mut left = (xw / dx).floor() as usize;
    if left >= k {
        left = k - 1;
    }
    let mut r = (xw - left as f64 * dx) / dx;
    // Snap positions within roundoff of a node, so exact node reads stay
    // exact even when the position was computed as k·dx in floating point.
    if r < 1e-9 {
        r = 0.0;
    }
    if r > 1.0 - 1e-9 {
        r = 0.0;
        left = (left + 1) % k;
    }
    InterpRow {
        left_index: left,
        weights: (1.0 - r, r),
    }
}

/// Stack interpolation rows for a set of positions into an `I × K` matrix.
/// Each row sums to one; an empty position list gives a `0 × K` matrix.
pub fn interp_matrix(positions: &[f64], grid: &Grid) -> DMatrix<f64> {
    let k = grid.node_count();
    let mut h = DMatrix::zeros(positions.len(), k);
    for (i, &x) in positions.iter().enumerate() {
        let row = interp_row(x, grid);
        h[(i, row.left_index)] += row.weights.0;
        h[(i, (row.left_index + 1) % k)] += row.weights.1;
    }
    h
}

/// Uniform time axis `t_n = n·dt`, `n = 0..=N`, with the ordered subset of
/// observation step indices.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TimeAxis {
    dt: f64,
    step_count: usize,
    obs_steps: Vec<usize>,
}

impl TimeAxis {
    /// Build from a final time, step size, and observation times. Observation
    /// times must coincide with estimation steps and increase strictly.
    pub fn new(final_time: f64, dt: f64, obs_times: &[f64]) -> Result<Self> {
        if !(dt > 0.0) || !(final_time > 0.0) {
            return Err(Error::InvalidArgument(format!(
                "time axis needs dt > 0 and final time > 0, got dt = {dt}, t_N = {final_time}"
            )));
        }
        let steps = final_time / dt;
        let step_count = steps.round() as usize;
        if step_count == 0 || (steps - step_count as f64).abs() > 1e-9 * steps.max(1.0) {
            return Err(Error::InvalidArgument(format!(
                "final time {final_time} is not an integer number of steps of {dt}"
            )));
        }
        let mut obs_steps = Vec::with_capacity(obs_times.len());
        for &t in obs_times {
            let n = (t / dt).round() as usize;
            if ((n as f64) * dt - t).abs() > 1e-9 * t.max(dt) || n > step_count {
                return Err(Error::InvalidArgument(format!(
                    "observation time {t} does not lie on the time grid"
                )));
            }
            if let Some(&last) = obs_steps.last() {
                if n <= last {
                    return Err(Error::InvalidArgument(
                        "observation times must be strictly increasing".into(),
                    ));
                }
            }
            obs_steps.push(n);
        }
        Ok(Self {
            dt,
            step_count,
            obs_steps,
        })
    }

    pub fn dt(&self) -> f64 {
        self.dt
    }

    /// Number of steps `N`; there are `N + 1` estimation times.
    pub fn step_count(&self) -> usize {
        self.step_count
    }

    pub fn final_time(&self) -> f64 {
        self.dt * self.step_count as f64
    }

    pub fn time(&self, n: usize) -> f64 {
        n as f64 * self.dt
    }

    /// Ordered observation step indices `n_1 < … < n_M`.
    pub fn obs_steps(&self) -> &[usize] {
        &self.obs_steps
    }

    pub fn is_obs_step(&self, n: usize) -> bool {
        self.obs_steps.binary_search(&n).is_ok()
    }

    /// Observation index `m` (0-based) for step `n`, if `n` is an observation step.
    pub fn obs_index(&self, n: usize) -> Option<usize> {
        self.obs_steps.binary_search(&n).ok()
    }
}
