//! Acceptance suite: one test per criterion, each printing a PASS/FAIL line
//! (run with `--nocapture` to see them). Oracles here are deliberately
//! independent of the library's solve paths: joint Gaussian conditioning is
//! done with a direct LU inverse, closed forms are evaluated inline.

use dlf::experiment::{
    run_demo, run_replicate, run_sweep, ExperimentConfig, InitMode,
};
use dlf::filter::{analysis, dlf_update, mdlf_update, FilterKind, GaussianState};
use dlf::grid::{interp_matrix, Grid, TimeAxis};
use dlf::metrics::{calibration, Metric};
use dlf::noise::{NoiseSpec, RngStream};
use dlf::observation::ObservationSet;
use dlf::output::{parse_runs_csv, runs_csv};
use dlf::pseudo::{PseudoObsBank, PseudoObsGroup};
use dlf::truth::{
    initial_field, lax_wendroff, simulate_truth, FieldState, Forcing, PhaseSpeed, PhysicsConfig,
    SpectralDiffusion, TruthNoise, INITIAL_BUMP_RATE,
};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use std::time::Instant;

fn report(criterion: &str, pass: bool, detail: &str) {
    println!(
        "{} criterion {criterion}: {detail}",
        if pass { "PASS" } else { "FAIL" }
    );
}

fn symmetrize(m: DMatrix<f64>) -> DMatrix<f64> {
    let t = m.transpose();
    (m + t) * 0.5
}

/// Brute-force joint Gaussian conditioning via direct LU inverse.
fn joint_condition(
    state: &GaussianState,
    h: &DMatrix<f64>,
    values: &DVector<f64>,
    r: &DMatrix<f64>,
) -> (DVector<f64>, DMatrix<f64>) {
    let s = h * &state.cov * h.transpose() + r;
    let s_inv = s.try_inverse().expect("oracle inversion failed");
    let gain = &state.cov * h.transpose() * s_inv;
    let mean = &state.mean + &gain * (values - h * &state.mean);
    let k = state.mean.len();
    let cov = (DMatrix::identity(k, k) - &gain * h) * &state.cov;
    (mean, symmetrize(cov))
}

fn cell_totals(cfg: &ExperimentConfig) -> (Vec<[f64; 4]>, Vec<[f64; 4]>) {
    let sweep = run_sweep(cfg, &[cfg.alpha], &[cfg.obs_count]).expect("sweep failed");
    assert!(
        sweep.failures.is_empty(),
        "unexpected replicate failures: {:?}",
        sweep.failures
    );
    let grab = |f: FilterKind| -> Vec<[f64; 4]> {
        sweep
            .records
            .iter()
            .filter(|r| r.filter == f)
            .map(|r| r.totals)
            .collect()
    };
    (grab(FilterKind::Kf), grab(FilterKind::Dlf))
}

/// Paired mean difference (KF - DLF) and its standard error.
fn paired_diff(kf: &[[f64; 4]], dlf: &[[f64; 4]], metric: usize) -> (f64, f64) {
    let n = kf.len() as f64;
    let diffs: Vec<f64> = kf
        .iter()
        .zip(dlf)
        .map(|(a, b)| a[metric] - b[metric])
        .collect();
    let mean = diffs.iter().sum::<f64>() / n;
    let var = diffs.iter().map(|d| (d - mean) * (d - mean)).sum::<f64>() / (n - 1.0);
    (mean, (var / n).sqrt())
}

fn mean_total(rows: &[[f64; 4]], metric: usize) -> f64 {
    rows.iter().map(|t| t[metric]).sum::<f64>() / rows.len() as f64
}

#[test]
fn criterion_01_gaussian_conditioning_oracle() {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(0xACCE);
    let mut worst: f64 = 0.0;
    for _ in 0..100 {
        let k = rng.random_range(3..=8);
        let i_dim = rng.random_range(1..=3);
        let groups = rng.random_range(0..=3);
        let grid = Grid::new(1.0, k).unwrap();
        let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
        let state = GaussianState {
            mean: DVector::from_fn(k, |_, _| rng.random_range(-1.0..1.0)),
            cov: &m * m.transpose() + DMatrix::identity(k, k) * 0.3,
            time_index: 1,
        };
        let obs = ObservationSet {
            obs_index: 9,
            time_index: 1,
            locations: (0..i_dim).map(|_| rng.random_range(0.0..1.0)).collect(),
            values: DVector::from_fn(i_dim, |_, _| rng.random_range(-1.0..1.0)),
            error_cov: DMatrix::identity(i_dim, i_dim) * rng.random_range(0.01..0.2),
        };
        let mut bank = PseudoObsBank::new(4);
        for g in 0..groups {
            let n = DMatrix::from_fn(i_dim, i_dim, |_, _| rng.random_range(-0.4..0.4));
            bank.push_group(PseudoObsGroup {
                origin_index: g,
                origin_time_index: g,
                positions: (0..i_dim).map(|_| rng.random_range(0.0..1.0)).collect(),
                value_mean: DVector::from_fn(i_dim, |_, _| rng.random_range(-1.0..1.0)),
                value_cov: &n * n.transpose() + DMatrix::identity(i_dim, i_dim) * 0.05,
            });
        }

        // MDLF against one-shot conditioning on the stacked batch.
        let got = mdlf_update(&state, &obs, &bank, &grid).unwrap();
        let stacked = bank.concatenate();
        let total = i_dim + stacked.mean.len();
        let mut h = DMatrix::zeros(total, k);
        h.view_mut((0, 0), (i_dim, k))
            .copy_from(&interp_matrix(&obs.locations, &grid));
        let mut values = DVector::zeros(total);
        values.rows_mut(0, i_dim).copy_from(&obs.values);
        let mut r = DMatrix::zeros(total, total);
        r.view_mut((0, 0), (i_dim, i_dim)).copy_from(&obs.error_cov);
        if !stacked.positions.is_empty() {
            h.view_mut((i_dim, 0), (stacked.mean.len(), k))
                .copy_from(&interp_matrix(&stacked.positions, &grid));
            values
                .rows_mut(i_dim, stacked.mean.len())
                .copy_from(&stacked.mean);
            r.view_mut((i_dim, i_dim), (stacked.mean.len(), stacked.mean.len()))
                .copy_from(&stacked.cov);
        }
        let (mean_o, cov_o) = joint_condition(&state, &h, &values, &r);
        worst = worst
            .max((&got.mean - &mean_o).norm() / mean_o.norm())
            .max((&got.cov - &cov_o).norm() / cov_o.norm());

        // DLF-only update against conditioning on the bank alone.
        if !bank.is_empty() {
            let got = dlf_update(&state, &bank, &grid).unwrap();
            let hb = interp_matrix(&stacked.positions, &grid);
            let (mean_o, cov_o) = joint_condition(&state, &hb, &stacked.mean, &stacked.cov);
            worst = worst
                .max((&got.mean - &mean_o).norm() / mean_o.norm())
                .max((&got.cov - &cov_o).norm() / cov_o.norm());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst < 1e-8 && elapsed < 5.0;
    report(
        "1 (conditioning oracle)",
        pass,
        &format!("worst relative error {worst:.2e} over 100 instances in {elapsed:.2}s"),
    );
    assert!(pass, "worst {worst:.2e}, elapsed {elapsed:.2}s");
}

#[test]
fn criterion_02_zero_cap_reduces_to_kalman() {
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for seed in 0..3u64 {
        let cfg = ExperimentConfig {
            base_seed: seed,
            cap: Some(0),
            ..ExperimentConfig::default()
        };
        let demo = run_demo(&cfg, 0).expect("demo failed");
        let kf = &demo
            .runs
            .iter()
            .find(|(k, _, _)| *k == FilterKind::Kf)
            .unwrap()
            .1;
        let dlf = &demo
            .runs
            .iter()
            .find(|(k, _, _)| *k == FilterKind::Dlf)
            .unwrap()
            .1;
        for (a, b) in kf.states.iter().zip(&dlf.states) {
            worst = worst.max((&a.mean - &b.mean).abs().max());
            worst = worst.max((&a.cov - &b.cov).abs().max());
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst < 1e-12 && elapsed < 10.0;
    report(
        "2 (zero-cap KF reduction)",
        pass,
        &format!("max |difference| {worst:.2e} over 3 seeds in {elapsed:.2}s"),
    );
    assert!(pass, "worst {worst:.2e}, elapsed {elapsed:.2}s");
}

#[test]
fn criterion_03_numerics_oracles() {
    let start = Instant::now();

    // (a) Exact spectral decay per mode.
    let grid = Grid::new(1.0, 100).unwrap();
    let spectral = SpectralDiffusion::new(&grid);
    let mut worst_decay: f64 = 0.0;
    for &(alpha, dt, mode) in &[(0.01, 0.005, 1usize), (0.1, 0.005, 3), (0.001, 0.01, 7)] {
        let field = DVector::from_fn(100, |k, _| {
            (2.0 * std::f64::consts::PI * mode as f64 * grid.node(k)).sin()
        });
        let out = spectral.step(&field, alpha, dt);
        let expected =
            (-alpha * (2.0 * std::f64::consts::PI * mode as f64).powi(2) * dt).exp();
        for k in 0..100 {
            worst_decay = worst_decay.max((out[k] - expected * field[k]).abs());
        }
    }

    // (b) Unit-Courant exactness of the two advection stencils.
    let field = initial_field(&grid, 1.0, 0.37).values;
    let unit = DVector::from_element(100, 1.0);
    let lw = lax_wendroff(&field, &unit);
    let mut worst_shift: f64 = 0.0;
    for k in 0..100 {
        worst_shift = worst_shift.max((lw[k] - field[(k + 1) % 100]).abs());
    }
    let op = dlf::model::build_operator(&grid, 0, 0.0, 0.01, 0.0, &PhaseSpeed::Constant {
        value: 1.0,
    })
    .unwrap();
    let up = &op.matrix * &field;
    for k in 0..100 {
        worst_shift = worst_shift.max((up[k] - field[(k + 1) % 100]).abs());
    }

    // (c) Pure diffusion against the spreading-Gaussian closed form.
    let ta = TimeAxis::new(0.5, 0.005, &[]).unwrap();
    let cfg = PhysicsConfig {
        alpha: 0.01,
        speed: PhaseSpeed::Zero,
        forcing: Forcing::Zero,
        noise: NoiseSpec::silent(0.0),
        init_amplitude: 1.0,
        init_phase: 0.5,
    };
    let mut streams = TruthNoise {
        advection: RngStream::new(0, 0),
        forcing: RngStream::new(0, 1),
        constant: RngStream::new(0, 2),
    };
    let traj = simulate_truth(&grid, &ta, &cfg, &mut streams).unwrap();
    let s0_sq = 1.0 / (2.0 * INITIAL_BUMP_RATE);
    let s_sq = s0_sq + 2.0 * 0.01 * 0.5;
    let closed = DVector::from_fn(100, |k, _| {
        let mut v = 0.0;
        for image in -3i32..=3 {
            let d = grid.node(k) - 0.5 + image as f64;
            v += (s0_sq / s_sq).sqrt() * (-d * d / (2.0 * s_sq)).exp();
        }
        v
    });
    let rel_l2 = (&traj[100].values - &closed).norm() / closed.norm();

    let elapsed = start.elapsed().as_secs_f64();
    let pass = worst_decay < 1e-12 && worst_shift < 1e-12 && rel_l2 < 1e-3 && elapsed < 5.0;
    report(
        "3 (numerics oracles)",
        pass,
        &format!(
            "mode decay {worst_decay:.2e}, unit-Courant shift {worst_shift:.2e}, \
             diffusion closed form {rel_l2:.2e} in {elapsed:.2}s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_04_calibration_sanity() {
    let start = Instant::now();
    // 10^5 cells of truth = mean + N(0, Var).
    let k = 1000usize;
    let steps = 100usize;
    let ta = TimeAxis::new(steps as f64 * 0.005, 0.005, &[]).unwrap();
    let mut rng = RngStream::new(424242, 0);
    let var: f64 = 0.04;
    let mut truth = Vec::with_capacity(steps + 1);
    let mut posterior = Vec::with_capacity(steps + 1);
    for n in 0..=steps {
        let mean = DVector::from_fn(k, |_, _| rng.uniform(-2.0, 2.0));
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
    let elapsed = start.elapsed().as_secs_f64();
    let pass = (0.950..0.959).contains(&m.total) && elapsed < 2.0;
    report(
        "4 (calibration sanity)",
        pass,
        &format!("two-sigma coverage {:.4} over 10^5 cells in {elapsed:.2}s", m.total),
    );
    assert!(pass, "coverage {}", m.total);
}

#[test]
fn criterion_05_base_case_divide() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        replicates: 20,
        ..ExperimentConfig::default()
    };
    let (kf, dlf) = cell_totals(&cfg);
    let (rms_gap, rms_se) = paired_diff(&kf, &dlf, 0);
    let (mass_gap, mass_se) = paired_diff(&kf, &dlf, 1);
    let elapsed = start.elapsed().as_secs_f64();
    let pass = rms_gap > rms_se && mass_gap > mass_se && elapsed < 300.0;
    report(
        "5 (base-case divide)",
        pass,
        &format!(
            "RMS gap {rms_gap:+.5} (SE {rms_se:.5}), mass gap {mass_gap:+.5} (SE {mass_se:.5}), \
             20 replicates in {elapsed:.1}s"
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_06_phase_uncertain_init() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        replicates: 20,
        init: InitMode::UncertainPhase,
        ..ExperimentConfig::default()
    };
    let (kf, dlf) = cell_totals(&cfg);
    let rms_win = mean_total(&dlf, 0) < mean_total(&kf, 0);
    let com_win = mean_total(&dlf, 2) < mean_total(&kf, 2);
    let cal_kf = mean_total(&kf, 3);
    let cal_dlf = mean_total(&dlf, 3);
    let cal_win = (cal_dlf - 0.95).abs() < (cal_kf - 0.95).abs();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = rms_win && com_win && cal_win && elapsed < 300.0;
    report(
        "6 (phase-uncertain init)",
        pass,
        &format!(
            "RMS {:.5}/{:.5}, CoM {:.5}/{:.5}, calibration {:.4}/{:.4} (KF/DLF), \
             20 replicates in {elapsed:.1}s",
            mean_total(&kf, 0),
            mean_total(&dlf, 0),
            mean_total(&kf, 2),
            mean_total(&dlf, 2),
            cal_kf,
            cal_dlf
        ),
    );
    assert!(pass);
}

#[test]
fn criterion_07_phase_speed_error() {
    let start = Instant::now();
    let cfg = ExperimentConfig {
        replicates: 20,
        wave_noise_constant: 1.0,
        ..ExperimentConfig::default()
    };
    let (kf, dlf) = cell_totals(&cfg);
    let mut clauses = Vec::new();
    for (mi, metric) in Metric::ALL.into_iter().enumerate() {
        let (kf_mean, dlf_mean) = (mean_total(&kf, mi), mean_total(&dlf, mi));
        let win = match metric {
            Metric::Calibration => (dlf_mean - 0.95).abs() < (kf_mean - 0.95).abs(),
            _ => dlf_mean < kf_mean,
        };
        clauses.push((metric, kf_mean, dlf_mean, win));
    }
    let elapsed = start.elapsed().as_secs_f64();
    let pass = clauses.iter().all(|c| c.3) && elapsed < 300.0;
    let detail: Vec<String> = clauses
        .iter()
        .map(|(m, k, d, w)| format!("{m} {k:.5}/{d:.5} {}", if *w { "ok" } else { "FAIL" }))
        .collect();
    report(
        "7 (phase-speed error)",
        pass,
        &format!("{} (KF/DLF), 20 replicates in {elapsed:.1}s", detail.join(", ")),
    );
    // The calibration clause is structurally out of reach for this method:
    // both filters are blind to the constant speed noise by construction,
    // and the pseudo-observation updates strictly shrink the posterior
    // covariance, so the DLF is always the more overconfident of the two
    // even where its errors are smaller. The three error clauses hold; the
    // assertion states the criterion as written and fails honestly on the
    // calibration clause.
    assert!(pass, "{}", detail.join(", "));
}

#[test]
fn criterion_08_alpha_dependence() {
    let start = Instant::now();
    let gaps: Vec<f64> = [1e-3, 1e-2, 1e-1, 1.0]
        .iter()
        .map(|&alpha| {
            let cfg = ExperimentConfig {
                replicates: 20,
                alpha,
                ..ExperimentConfig::default()
            };
            let (kf, dlf) = cell_totals(&cfg);
            mean_total(&kf, 0) - mean_total(&dlf, 0)
        })
        .collect();
    let elapsed = start.elapsed().as_secs_f64();
    let pass = gaps[0] > gaps[3] && elapsed < 300.0;
    report(
        "8 (alpha dependence)",
        pass,
        &format!(
            "RMS gaps (KF-DLF) {:?} over α = 1e-3..1, 20 replicates each in {elapsed:.1}s",
            gaps.iter().map(|g| format!("{g:+.5}")).collect::<Vec<_>>()
        ),
    );
    assert!(pass, "gaps {gaps:?}");
}

#[test]
fn criterion_09_gain_cost_scaling() {
    // Wall time of the analysis update must grow consistently with the cube
    // of the stacked observation count; capping the bank bounds that count.
    let k = 8usize;
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let m = DMatrix::from_fn(k, k, |_, _| rng.random_range(-1.0..1.0));
    let state = GaussianState {
        mean: DVector::zeros(k),
        cov: &m * m.transpose() * 1e-3 + DMatrix::identity(k, k) * 1e-2,
        time_index: 0,
    };
    let sizes = [256usize, 512, 1024];
    let mut times = Vec::new();
    for &s in &sizes {
        let h = DMatrix::from_fn(s, k, |_, _| rng.random_range(-0.2..0.2));
        let r = DMatrix::identity(s, s) * 1e-3
            + {
                let n = DMatrix::from_fn(s, s, |_, _| rng.random_range(-0.01..0.01));
                &n * n.transpose()
            };
        let y = DVector::from_fn(s, |_, _| rng.random_range(-1.0..1.0));
        let mut best = f64::INFINITY;
        for _ in 0..5 {
            let t0 = Instant::now();
            let out = analysis(&state, &h, &y, &r).unwrap();
            let dt = t0.elapsed().as_secs_f64();
            assert!(out.mean.iter().all(|v| v.is_finite()));
            best = best.min(dt);
        }
        times.push(best);
    }
    // Least-squares slope of log(time) against log(s).
    let xs: Vec<f64> = sizes.iter().map(|&s| (s as f64).ln()).collect();
    let ys: Vec<f64> = times.iter().map(|&t| t.ln()).collect();
    let xm = xs.iter().sum::<f64>() / 3.0;
    let ym = ys.iter().sum::<f64>() / 3.0;
    let slope = xs
        .iter()
        .zip(&ys)
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum::<f64>()
        / xs.iter().map(|x| (x - xm) * (x - xm)).sum::<f64>();

    // Capping the bank bounds the live count regardless of how many batches
    // arrive, hence bounds the per-step cost.
    let grid = Grid::new(1.0, 100).unwrap();
    let mut capped = PseudoObsBank::new(3);
    let mut uncapped = PseudoObsBank::new(64);
    for mth in 0..24usize {
        let obs = ObservationSet {
            obs_index: mth,
            time_index: mth,
            locations: (0..8).map(|i| grid.node((mth * 8 + i) % 100)).collect(),
            values: DVector::zeros(8),
            error_cov: DMatrix::identity(8, 8) * 1e-4,
        };
        capped.ingest(&obs);
        uncapped.ingest(&obs);
    }
    let bounded = capped.total_members() == 3 * 8 && uncapped.total_members() == 24 * 8;

    let pass = (2.5..=3.5).contains(&slope) && bounded;
    report(
        "9 (gain cost scaling)",
        pass,
        &format!(
            "log-log slope {slope:.2} over rows {sizes:?} (times {times:?}); \
             capped bank holds {} values vs {} uncapped",
            capped.total_members(),
            uncapped.total_members()
        ),
    );
    assert!(pass, "slope {slope:.2}, bounded {bounded}");
}

#[test]
fn criterion_10_row_determinism() {
    let cfg = ExperimentConfig {
        replicates: 3,
        dx: 0.02,
        t_end: 0.2,
        obs_times: vec![0.05, 0.1, 0.15],
        obs_count: 8,
        ..ExperimentConfig::default()
    };
    let a = run_sweep(&cfg, &[0.01, 0.1], &[8], ).unwrap();
    let b = run_sweep(&cfg, &[0.01, 0.1], &[8]).unwrap();
    let csv_a = runs_csv(&a.records);
    let csv_b = runs_csv(&b.records);
    let identical_sweeps = csv_a == csv_b;

    // Reproduce one row in isolation from (config, base_seed, replicate).
    let cell = cfg.cell(0.1, 8);
    let outcome = run_replicate(&cell, 2).unwrap();
    let parsed = parse_runs_csv(&csv_a).unwrap();
    let row = parsed
        .iter()
        .find(|r| r.alpha == 0.1 && r.replicate == 2 && r.filter == FilterKind::Dlf)
        .expect("row missing");
    let fresh = outcome
        .per_filter
        .iter()
        .find(|(k, _)| *k == FilterKind::Dlf)
        .map(|(_, m)| {
            [
                m.rms.total,
                m.mass.total,
                m.com.total,
                m.calibration.total,
            ]
        })
        .unwrap();
    let identical_row = row
        .totals
        .iter()
        .zip(&fresh)
        .all(|(a, b)| a.to_bits() == b.to_bits())
        && row.truth_hash == outcome.truth_hash;

    let pass = identical_sweeps && identical_row;
    report(
        "10 (row determinism)",
        pass,
        &format!("sweep CSVs identical: {identical_sweeps}, isolated row bit-identical: {identical_row}"),
    );
    assert!(pass);
}
