//! Quality metrics for a (truth, posterior) trajectory pair: residual mean
//! square error, mass error, center-of-mass error, and probabilistic
//! calibration.
//!
//! Each metric comes as a per-time series and a time-aggregated total. The
//! series value at `t_n` is the total's summand with the `Δt` weight and the
//! time sum dropped; totals sum over `n = 1..=N`.

use crate::error::{Error, Result};
use crate::filter::GaussianState;
use crate::grid::{Grid, TimeAxis};
use crate::truth::FieldState;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Metric {
    Rms,
    Mass,
    Com,
    Calibration,
}

impl Metric {
    pub const ALL: [Metric; 4] = [Metric::Rms, Metric::Mass, Metric::Com, Metric::Calibration];

    pub fn name(self) -> &'static str {
        match self {
            Metric::Rms => "rms",
            Metric::Mass => "mass",
            Metric::Com => "com",
            Metric::Calibration => "calibration",
        }
    }
}

impl std::fmt::Display for Metric {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Metric {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rms" => Ok(Metric::Rms),
            "mass" => Ok(Metric::Mass),
            "com" => Ok(Metric::Com),
            "calibration" => Ok(Metric::Calibration),
            other => Err(Error::InvalidArgument(format!("unknown metric '{other}'"))),
        }
    }
}

/// One metric as a time series plus its aggregate over the run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricSeries {
    pub series: Vec<f64>,
    pub total: f64,
}

/// All four metrics for one filter run.
#[derive(Debug, Clone, PartialEq)]
pub struct MetricsSeries {
    pub rms: MetricSeries,
    pub mass: MetricSeries,
    pub com: MetricSeries,
    pub calibration: MetricSeries,
    /// Time indices where the center of mass was degenerate (all-zero field).
    pub degenerate_com_steps: Vec<usize>,
}

impl MetricsSeries {
    pub fn total(&self, metric: Metric) -> f64 {
        match metric {
            Metric::Rms => self.rms.total,
            Metric::Mass => self.mass.total,
            Metric::Com => self.com.total,
            Metric::Calibration => self.calibration.total,
        }
    }

    pub fn series(&self, metric: Metric) -> &[f64] {
        match metric {
            Metric::Rms => &self.rms.series,
            Metric::Mass => &self.mass.series,
            Metric::Com => &self.com.series,
            Metric::Calibration => &self.calibration.series,
        }
    }
}

fn check_alignment(truth: &[FieldState], posterior: &[GaussianState], ta: &TimeAxis) -> Result<()> {
    let expected = ta.step_count() + 1;
    if truth.len() != expected || posterior.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "trajectories must hold {expected} states, got truth {} and posterior {}",
            truth.len(),
            posterior.len()
        )));
    }
    Ok(())
}

/// `√(Δx·Σ_k (U^k - ⟨V^k⟩)²)` per time; total `√(Δt·Σ_n Δx·Σ_k (…)²)`.
pub fn rms_error(
    truth: &[FieldState],
    posterior: &[GaussianState],
    grid: &Grid,
    ta: &TimeAxis,
) -> Result<MetricSeries> {
    check_alignment(truth, posterior, ta)?;
    let dx = grid.spacing();
    let series: Vec<f64> = truth
        .iter()
        .zip(posterior)
        .map(|(u, v)| {
            let sq: f64 = (&u.values - &v.mean).iter().map(|d| d * d).sum();
            (dx * sq).sqrt()
        })
        .collect();
    let total = (ta.dt() * series[1..].iter().map(|v| v * v).sum::<f64>()).sqrt();
    Ok(MetricSeries { series, total })
}

/// `Δx·|Σ_k |U^k| - Σ_k |⟨V^k⟩||` per time; total `√(Δt·Σ_n (…)²)`.
pub fn mass_error(
    truth: &[FieldState],
    posterior: &[GaussianState],
    grid: &Grid,
    ta: &TimeAxis,
) -> Result<MetricSeries> {
    check_alignment(truth, posterior, ta)?;
    let dx = grid.spacing();
    let series: Vec<f64> = truth
        .iter()
        .zip(posterior)
        .map(|(u, v)| {
            let mu: f64 = u.values.iter().map(|x| x.abs()).sum();
            let mv: f64 = v.mean.iter().map(|x| x.abs()).sum();
            dx * (mu - mv).abs()
        })
        .collect();
    let total = (ta.dt() * series[1..].iter().map(|v| v * v).sum::<f64>()).sqrt();
    Ok(MetricSeries { series, total })
}

fn center_of_mass(values: impl Iterator<Item = f64>, grid: &Grid) -> Option<f64> {
    let mut weight = 0.0;
    let mut moment = 0.0;
    for (k, v) in values.enumerate() {
        let w = v.abs();
        weight += w;
        moment += w * grid.node(k);
    }
    (weight > 0.0).then(|| moment / weight)
}

/// Absolute difference of the |·|-weighted centers of mass per time; total
/// `√(Δt·Σ_n (…)²)`. An all-zero field makes the center of mass degenerate;
/// that time contributes zero and is flagged.
pub fn com_error(
    truth: &[FieldState],
    posterior: &[GaussianState],
    grid: &Grid,
    ta: &TimeAxis,
) -> Result<(MetricSeries, Vec<usize>)> {
    check_alignment(truth, posterior, ta)?;
    let mut degenerate = Vec::new();
    let series: Vec<f64> = truth
        .iter()
        .zip(posterior)
        .enumerate()
        .map(|(n, (u, v))| {
            let cu = center_of_mass(u.values.iter().copied(), grid);
            let cv = center_of_mass(v.mean.iter().copied(), grid);
            match (cu, cv) {
                (Some(a), Some(b)) => (a - b).abs(),
                _ => {
                    degenerate.push(n);
                    0.0
                }
            }
        })
        .collect();
    let total = (ta.dt() * series[1..].iter().map(|v| v * v).sum::<f64>()).sqrt();
    Ok((MetricSeries { series, total }, degenerate))
}

/// Fraction of grid cells where the truth lies inside the two-standard-
/// deviation band of the posterior, per time; total is the mean over all
/// `(n, k)` cells with `n ≥ 1`. Approximately 0.95 under correct Gaussian
/// uncertainty.
pub fn calibration(
    truth: &[FieldState],
    posterior: &[GaussianState],
    ta: &TimeAxis,
) -> Result<MetricSeries> {
    let expected = ta.step_count() + 1;
    if truth.len() != expected || posterior.len() != expected {
        return Err(Error::InvalidArgument(format!(
            "trajectories must hold {expected} states, got truth {} and posterior {}",
            truth.len(),
            posterior.len()
        )));
    }
    let series: Vec<f64> = truth
        .iter()
        .zip(posterior)
        .map(|(u, v)| {
            let k = u.values.len();
            let hits = (0..k)
                .filter(|&i| {
                    let sd = v.cov[(i, i)].max(0.0).sqrt();
                    (u.values[i] - v.mean[i]).abs() < 2.0 * sd
                })
                .count();
            hits as f64 / k as f64
        })
        .collect();
    let total = series[1..].iter().sum::<f64>() / ta.step_count() as f64;
    Ok(MetricSeries { series, total })
}

/// Evaluate all four metrics for one run.
pub fn evaluate(
    truth: &[FieldState],
    posterior: &[GaussianState],
    grid: &Grid,
    ta: &TimeAxis,
) -> Result<MetricsSeries> {
    let rms = rms_error(truth, posterior, grid, ta)?;
    let mass = mass_error(truth, posterior, grid, ta)?;
    let (com, degenerate_com_steps) = com_error(truth, posterior, grid, ta)?;
    let calibration = calibration(truth, posterior, ta)?;
    Ok(MetricsSeries {
        rms,
        mass,
        com,
        calibration,
        degenerate_com_steps,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noise::RngStream;
    use approx::assert_relative_eq;
    use nalgebra::{DMatrix, DVector};

    fn fixtures(k: usize, steps: usize) -> (Grid, TimeAxis) {
        let grid = Grid::new(1.0, k).unwrap();
        let ta = TimeAxis::new(steps as f64 * 0.005, 0.005, &[]).unwrap();
        (grid, ta)
    }

    fn truth_from(fields: Vec<DVector<f64>>) -> Vec<FieldState> {
        fields
            .into_iter()
            .enumerate()
            .map(|(n, values)| FieldState {
                values,
                time_index: n,
            })
            .collect()
    }

    fn posterior_from(fields: Vec<DVector<f64>>, var: f64) -> Vec<GaussianState> {
        fields
            .into_iter()
            .enumerate()
            .map(|(n, mean)| {
                let k = mean.len();
                GaussianState {
                    mean,
                    cov: DMatrix::identity(k, k) * var,
                    time_index: n,
                }
            })
            .collect()
    }

    #[test]
    fn identical_trajectories_have_zero_errors() {
        let (grid, ta) = fixtures(10, 3);
        let fields: Vec<DVector<f64>> = (0..4)
            .map(|n| DVector::from_fn(10, |k, _| (k + n) as f64))
            .collect();
        let truth = truth_from(fields.clone());
        let posterior = posterior_from(fields, 0.1);
        let m = evaluate(&truth, &posterior, &grid, &ta).unwrap();
        assert_eq!(m.rms.total, 0.0);
        assert_eq!(m.mass.total, 0.0);
        assert_eq!(m.com.total, 0.0);
        assert_eq!(m.calibration.total, 1.0);
    }

    #[test]
    fn constant_offset_gives_sqrt_l_times_delta() {
        let (grid, ta) = fixtures(20, 2);
        let delta = 0.3;
        let base: Vec<DVector<f64>> = (0..3).map(|_| DVector::from_element(20, 1.0)).collect();
        let shifted: Vec<DVector<f64>> = base
            .iter()
            .map(|v| v.map(|x| x + delta))
            .collect();
        let truth = truth_from(base);
        let posterior = posterior_from(shifted, 0.0);
        let m = rms_error(&truth, &posterior, &grid, &ta).unwrap();
        for v in &m.series {
            assert_relative_eq!(*v, delta, max_relative = 1e-12); // √L·δ with L = 1
        }
        // Doubling the offset doubles the metric.
        let double = posterior_from(
            truth.iter().map(|f| f.values.map(|x| x + 2.0 * delta)).collect(),
            0.0,
        );
        let m2 = rms_error(&truth, &double, &grid, &ta).unwrap();
        assert_relative_eq!(m2.total, 2.0 * m.total, max_relative = 1e-12);
    }

    #[test]
    fn rms_total_squares_the_series_with_dt() {
        let (grid, ta) = fixtures(8, 4);
        let mut rng = RngStream::new(3, 0);
        let fields: Vec<DVector<f64>> = (0..5)
            .map(|_| DVector::from_fn(8, |_, _| rng.standard_normal()))
            .collect();
        let other: Vec<DVector<f64>> = (0..5)
            .map(|_| DVector::from_fn(8, |_, _| rng.standard_normal()))
            .collect();
        let truth = truth_from(fields);
        let posterior = posterior_from(other, 0.1);
        let m = rms_error(&truth, &posterior, &grid, &ta).unwrap();
        let reconstructed =
            (ta.dt() * m.series[1..].iter().map(|v| v * v).sum::<f64>()).sqrt();
        assert_eq!(m.total, reconstructed);
    }

    #[test]
    fn mass_error_examples() {
        let (grid, ta) = fixtures(10, 1);
        let bump = DVector::from_fn(10, |k, _| ((k as f64) / 3.0).exp());
        let truth = truth_from(vec![bump.clone(), bump.clone()]);

        // Posterior doubled: per-time value Δx·Σ|U|.
        let doubled = posterior_from(vec![&bump * 2.0, &bump * 2.0], 0.0);
        let m = mass_error(&truth, &doubled, &grid, &ta).unwrap();
        let expected = grid.spacing() * bump.iter().map(|v| v.abs()).sum::<f64>();
        for v in &m.series {
            assert_relative_eq!(*v, expected, max_relative = 1e-12);
        }

        // Sign flip is invisible to the mass metric.
        let flipped = posterior_from(vec![-&bump, -&bump], 0.0);
        let m = mass_error(&truth, &flipped, &grid, &ta).unwrap();
        assert_eq!(m.total, 0.0);
    }

    #[test]
    fn com_error_point_masses_and_shifts() {
        let (grid, ta) = fixtures(100, 1);
        let mut a = DVector::zeros(100);
        a[25] = 1.0; // x = 0.25
        let mut b = DVector::zeros(100);
        b[35] = 1.0; // x = 0.35
        let truth = truth_from(vec![a.clone(), a]);
        let posterior = posterior_from(vec![b.clone(), b], 0.0);
        let (m, degenerate) = com_error(&truth, &posterior, &grid, &ta).unwrap();
        assert!(degenerate.is_empty());
        for v in &m.series {
            assert_relative_eq!(*v, 0.1, max_relative = 1e-12);
        }

        // A localized bump shifted by s cells moves the center by s·Δx.
        let bump = crate::truth::initial_field(&grid, 1.0, 0.3).values;
        let shifted = DVector::from_fn(100, |k, _| bump[(k + 3) % 100]);
        let truth = truth_from(vec![bump.clone(), bump]);
        let posterior = posterior_from(vec![shifted.clone(), shifted], 0.0);
        let (m, _) = com_error(&truth, &posterior, &grid, &ta).unwrap();
        assert_relative_eq!(m.series[0], 3.0 * grid.spacing(), max_relative = 1e-6);
    }

    #[test]
    fn degenerate_center_of_mass_is_flagged_and_contributes_zero() {
        let (grid, ta) = fixtures(10, 1);
        let zero = DVector::zeros(10);
        let bump = DVector::from_fn(10, |k, _| k as f64);
        let truth = truth_from(vec![zero.clone(), zero]);
        let posterior = posterior_from(vec![bump.clone(), bump], 0.0);
        let (m, degenerate) = com_error(&truth, &posterior, &grid, &ta).unwrap();
        assert_eq!(degenerate, vec![0, 1]);
        assert_eq!(m.total, 0.0);
    }

    #[test]
    fn calibration_trivial_cases() {
        let (_, ta) = fixtures(10, 1);
        let field = DVector::from_fn(10, |k, _| k as f64);
        let truth = truth_from(vec![field.clone(), field.clone()]);
        let exact = posterior_from(vec![field.clone(), field.clone()], 0.5);
        let m = calibration(&truth, &exact, &ta).unwrap();
        assert_eq!(m.total, 1.0);

        let off = posterior_from(
            vec![field.map(|x| x + 1.0), field.map(|x| x + 1.0)],
            0.0,
        );
        let m = calibration(&truth, &off, &ta).unwrap();
        assert_eq!(m.total, 0.0);
    }

    #[test]
    fn calibration_is_scale_invariant() {
        let (_, ta) = fixtures(50, 2);
        let mut rng = RngStream::new(8, 0);
        let truth_fields: Vec<DVector<f64>> = (0..3)
            .map(|_| DVector::from_fn(50, |_, _| rng.standard_normal()))
            .collect();
        let mean_fields: Vec<DVector<f64>> = (0..3)
            .map(|_| DVector::from_fn(50, |_, _| rng.standard_normal()))
            .collect();
        let truth = truth_from(truth_fields.clone());
        let base = posterior_from(mean_fields.clone(), 0.7);
        let m1 = calibration(&truth, &base, &ta).unwrap();

        // Rescale residuals and standard deviations identically.
        let scale = 17.0;
        let truth_scaled = truth_from(
            truth_fields
                .iter()
                .zip(&mean_fields)
                .map(|(u, v)| v + (u - v) * scale)
                .collect(),
        );
        let scaled = posterior_from(mean_fields, 0.7 * scale * scale);
        let m2 = calibration(&truth_scaled, &scaled, &ta).unwrap();
        assert_eq!(m1.series, m2.series);
    }

    #[test]
    fn calibration_hits_the_two_sigma_mass_on_synthetic_data() {
        // Truth sampled as mean + N(0, Var) over 10^5 cells: the two-sided
        // two-sigma indicator averages to ≈ 0.9545.
        let k = 1000;
        let steps = 100;
        let ta = TimeAxis::new(steps as f64 * 0.005, 0.005, &[]).unwrap();
        let mut rng = RngStream::new(2024, 0);
        let var: f64 = 0.09;
        let mut truth = Vec::with_capacity(steps + 1);
        let mut posterior = Vec::with_capacity(steps + 1);
        for n in 0..=steps {
            let mean = DVector::from_fn(k, |_, _| rng.uniform(-1.0, 1.0));
            let sample = DVector::from_fn(k, |i, _| mean[i] + var.sqrt() * rng.standard_normal());
            truth.push(FieldState {
                values: sample,
                time_index: n,
            });
            posterior.push(GaussianState {
                mean,
                cov: DMatrix::identity(k, k) * var,
                time_index: n,
            });
        }
        let m = calibration(&truth, &posterior, &ta).unwrap();
        assert!(
            (0.950..0.959).contains(&m.total),
            "calibration {} outside [0.950, 0.959]",
            m.total
        );
    }
}
