//! Simulation of records with a known mixed-model structure. Test-side
//! machinery for calibration oracles (LRT size/power, assumption checks,
//! effect recovery); not part of the analysis pipeline.

use nalgebra::DMatrix;

use super::{standardize, LmmData, PREDICTOR_NAMES};
use crate::model::Task;
use crate::numerics::RngState;
use crate::training::ForecastRecord;

/// Ground-truth structure for [`simulate_records`], on the transformed
/// (cube-root) response scale with standardized predictors.
#[derive(Debug, Clone)]
pub struct SimSpec {
    pub n_subjects: usize,
    pub per_subject: usize,
    /// Coefficients on the standardized scale:
    /// [intercept, fh, torso, toe, cop].
    pub beta: [f64; 5],
    /// Random intercept/slope covariance (response scale).
    pub g: [[f64; 2]; 2],
    pub sigma_e: f64,
    /// Correlation knob between torso and toe velocity draws.
    pub torso_toe_corr: f64,
}

impl SimSpec {
    pub fn null_torso(n_subjects: usize, per_subject: usize) -> Self {
        SimSpec {
            n_subjects,
            per_subject,
            beta: [3.0, 0.25, 0.0, -0.06, 0.08],
            g: [[0.01, 0.0], [0.0, 0.004]],
            sigma_e: 0.2,
            torso_toe_corr: 0.0,
        }
    }
}

/// Draw records whose cube-root absolute error follows the given mixed
/// model exactly (the response is built on the standardized design, then
/// cubed back into an absolute error).
pub fn simulate_records(spec: &SimSpec, seed: u64) -> Vec<ForecastRecord> {
    let mut rng = RngState::new(seed).derive(0x51a1);
    let n = spec.n_subjects * spec.per_subject;
    let mut fh = Vec::with_capacity(n);
    let mut torso = Vec::with_capacity(n);
    let mut toe = Vec::with_capacity(n);
    let mut cop = Vec::with_capacity(n);
    let mut subject = Vec::with_capacity(n);
    for s in 0..spec.n_subjects {
        for i in 0..spec.per_subject {
            let k = (i % 15 + 1) as f64;
            fh.push(k * 1000.0 / 60.0);
            let u = rng.next_normal();
            torso.push(1250.0 + 120.0 * u);
            toe.push(4000.0 + 450.0 * (spec.torso_toe_corr * u
                + (1.0 - spec.torso_toe_corr * spec.torso_toe_corr).sqrt() * rng.next_normal()));
            cop.push(130.0 + 55.0 * rng.next_normal());
            subject.push(s as u16);
        }
    }
    let cols = [&fh, &torso, &toe, &cop];
    let mut std_cols = Vec::with_capacity(4);
    for (name, col) in PREDICTOR_NAMES.iter().zip(cols) {
        let (z, _) = standardize(name, col).expect("simulated columns vary");
        std_cols.push(z);
    }
    // Cholesky of the 2x2 random-effect covariance.
    let l11 = spec.g[0][0].sqrt();
    let l21 = if l11 > 0.0 { spec.g[1][0] / l11 } else { 0.0 };
    let l22 = (spec.g[1][1] - l21 * l21).max(0.0).sqrt();
    let effects: Vec<(f64, f64)> = (0..spec.n_subjects)
        .map(|_| {
            let (a, b) = (rng.next_normal(), rng.next_normal());
            (l11 * a, l21 * a + l22 * b)
        })
        .collect();
    (0..n)
        .map(|i| {
            let s = subject[i] as usize;
            let z = spec.beta[0]
                + spec.beta[1] * std_cols[0][i]
                + spec.beta[2] * std_cols[1][i]
                + spec.beta[3] * std_cols[2][i]
                + spec.beta[4] * std_cols[3][i]
                + effects[s].0
                + effects[s].1 * std_cols[0][i]
                + spec.sigma_e * rng.next_normal();
            let z = z.max(1e-6);
            let abs_error = z * z * z;
            let k = ((i % spec.per_subject) % 15 + 1) as u32;
            ForecastRecord {
                subject: subject[i],
                trial: i / 15,
                task: Task::Cop,
                fh_frames: k,
                fh_ms: fh[i],
                prediction: 0.0,
                truth: abs_error,
                abs_error,
                torso_vel: torso[i],
                toe_vel: toe[i],
                cop_truth_mm: cop[i],
            }
        })
        .collect()
}

/// Ordinary least squares on the standardized design of `data` (oracle for
/// zero-random-variance fits).
pub fn ols_beta(data: &LmmData) -> Vec<f64> {
    let x = &data.x;
    let y = nalgebra::DVector::from_column_slice(&data.response);
    let xtx: DMatrix<f64> = x.transpose() * x;
    let xty = x.transpose() * y;
    xtx.cholesky()
        .expect("full-rank design")
        .solve(&xty)
        .iter()
        .copied()
        .collect()
}
