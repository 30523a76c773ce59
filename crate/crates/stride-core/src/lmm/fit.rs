//! Profiled (restricted) likelihood machinery for the Gaussian mixed model
//! y = X b + Z_s u_s + e with u_s ~ N(0, G), e ~ N(0, sigma2 I).
//!
//! The relative covariance Gamma = G / sigma2 is parameterized by its
//! log-Cholesky factor; beta and sigma2 are profiled out in closed form via
//! generalized least squares. All per-subject algebra runs through q x q
//! Woodbury identities over precomputed cross-products, so one deviance
//! evaluation costs O(S q^2 p + p^3) regardless of observation count.

use nalgebra::{DMatrix, DVector};

use super::LmmData;
use crate::lmm::simplex::{nelder_mead, SimplexResult};

/// Per-subject sufficient statistics.
pub(crate) struct SubjectBlocks {
    pub m_zz: DMatrix<f64>,
    pub p_zx: DMatrix<f64>,
    pub q_zy: DVector<f64>,
    pub xx: DMatrix<f64>,
    pub xy: DVector<f64>,
    pub yy: f64,
    pub rows: Vec<usize>,
}

pub(crate) fn subject_blocks(data: &LmmData) -> Vec<SubjectBlocks> {
    let p = data.x.ncols();
    let q = data.z_cols;
    let mut blocks: Vec<SubjectBlocks> = (0..data.n_subjects)
        .map(|_| SubjectBlocks {
            m_zz: DMatrix::zeros(q, q),
            p_zx: DMatrix::zeros(q, p),
            q_zy: DVector::zeros(q),
            xx: DMatrix::zeros(p, p),
            xy: DVector::zeros(p),
            yy: 0.0,
            rows: Vec::new(),
        })
        .collect();
    for (row, &s) in data.subject_index.iter().enumerate() {
        let b = &mut blocks[s];
        let z = data.z_row(row);
        let x = data.x.row(row);
        let y = data.response[row];
        for i in 0..q {
            for j in 0..q {
                b.m_zz[(i, j)] += z[i] * z[j];
            }
            for j in 0..p {
                b.p_zx[(i, j)] += z[i] * x[j];
            }
            b.q_zy[i] += z[i] * y;
        }
        for i in 0..p {
            for j in 0..p {
                b.xx[(i, j)] += x[i] * x[j];
            }
            b.xy[i] += x[i] * y;
        }
        b.yy += y * y;
        b.rows.push(row);
    }
    blocks
}

/// Everything the profiled deviance yields at a given Gamma.
pub(crate) struct ProfiledFit {
    pub beta: DVector<f64>,
    pub sigma2: f64,
    pub deviance: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Criterion {
    Reml,
    Ml,
}

/// Profiled deviance at relative covariance `gamma` (q x q, PSD).
/// Returns None when the design is numerically singular.
pub(crate) fn profiled_deviance(
    data: &LmmData,
    blocks: &[SubjectBlocks],
    gamma: &DMatrix<f64>,
    criterion: Criterion,
) -> Option<ProfiledFit> {
    let p = data.x.ncols();
    let q = data.z_cols;
    let n = data.response.len();
    let eye = DMatrix::<f64>::identity(q, q);

    let mut xtwx = DMatrix::<f64>::zeros(p, p);
    let mut xtwy = DVector::<f64>::zeros(p);
    let mut ytwy = 0.0;
    let mut logdet_w = 0.0;
    for b in blocks {
        // W_s = I + Z Gamma Z'; by Woodbury W^-1 = I - Z A Z' with
        // A = (I + Gamma M)^-1 Gamma, and |W_s| = |I + Gamma M|.
        let t = &eye + gamma * &b.m_zz;
        let det = t.determinant();
        if !(det > 0.0) || !det.is_finite() {
            return None;
        }
        logdet_w += det.ln();
        let t_inv = t.clone().try_inverse()?;
        let a = &t_inv * gamma;
        xtwx += &b.xx - b.p_zx.transpose() * &a * &b.p_zx;
        xtwy += &b.xy - b.p_zx.transpose() * &a * &b.q_zy;
        ytwy += b.yy - (b.q_zy.transpose() * &a * &b.q_zy)[(0, 0)];
    }

    let chol = xtwx.clone().cholesky()?;
    let beta = chol.solve(&xtwy);
    let qform = ytwy - beta.dot(&xtwy);
    if !(qform > 0.0) {
        return None;
    }
    let logdet_xtwx = 2.0 * chol.l().diagonal().iter().map(|d| d.ln()).sum::<f64>();
    let two_pi = std::f64::consts::TAU;
    let (sigma2, deviance) = match criterion {
        Criterion::Ml => {
            let s2 = qform / n as f64;
            let dev = n as f64 * (two_pi * s2).ln() + logdet_w + n as f64;
            (s2, dev)
        }
        Criterion::Reml => {
            let df = (n - p) as f64;
            let s2 = qform / df;
            let dev = df * (two_pi * s2).ln() + logdet_w + logdet_xtwx + df;
            (s2, dev)
        }
    };
    Some(ProfiledFit {
        beta,
        sigma2,
        deviance,
    })
}

/// Map the log-Cholesky parameter vector to Gamma = L L'. Layout: diagonal
/// logs first, then the below-diagonal entries row-major.
pub(crate) fn gamma_from_theta(theta: &[f64], q: usize) -> DMatrix<f64> {
    let mut l = DMatrix::<f64>::zeros(q, q);
    for i in 0..q {
        l[(i, i)] = theta[i].exp();
    }
    let mut k = q;
    for i in 1..q {
        for j in 0..i {
            l[(i, j)] = theta[k];
            k += 1;
        }
    }
    &l * l.transpose()
}

pub(crate) fn theta_dim(q: usize) -> usize {
    q * (q + 1) / 2
}

/// Method-of-moments warm start: per-subject OLS coefficients of the global
/// OLS residuals regressed on that subject's Z, whose covariance over
/// subjects (relative to the OLS residual variance) estimates Gamma.
fn moment_start(data: &LmmData, blocks: &[SubjectBlocks]) -> Option<Vec<f64>> {
    let p = data.x.ncols();
    let q = data.z_cols;
    let n = data.response.len();
    let mut xx = DMatrix::<f64>::zeros(p, p);
    let mut xy = DVector::<f64>::zeros(p);
    for b in blocks {
        xx += &b.xx;
        xy += &b.xy;
    }
    let beta = xx.cholesky()?.solve(&xy);
    let mut ss = 0.0;
    let mut coefs: Vec<DVector<f64>> = Vec::with_capacity(blocks.len());
    for b in blocks {
        let mut zz = b.m_zz.clone();
        for i in 0..q {
            zz[(i, i)] += 1e-8;
        }
        // Z' e = Z'y - Z'X beta for this subject.
        let ze = &b.q_zy - &b.p_zx * &beta;
        coefs.push(zz.cholesky()?.solve(&ze));
        ss += b.yy - 2.0 * beta.dot(&b.xy) + (beta.transpose() * &b.xx * &beta)[(0, 0)];
    }
    let sigma2 = (ss / (n - p) as f64).max(1e-12);
    let s = coefs.len() as f64;
    let mean = coefs.iter().fold(DVector::zeros(q), |acc, c| acc + c) / s;
    let mut cov = DMatrix::<f64>::zeros(q, q);
    for c in &coefs {
        let d = c - &mean;
        cov += &d * d.transpose();
    }
    cov /= (s - 1.0).max(1.0);
    cov /= sigma2;
    for i in 0..q {
        cov[(i, i)] = cov[(i, i)].max(1e-4);
    }
    let chol = cov.cholesky()?;
    let l = chol.l();
    let mut theta = Vec::with_capacity(theta_dim(q));
    for i in 0..q {
        theta.push(l[(i, i)].max(1e-6).ln());
    }
    for i in 1..q {
        for j in 0..i {
            theta.push(l[(i, j)]);
        }
    }
    Some(theta)
}

pub(crate) struct OptimOutcome {
    pub theta: Vec<f64>,
    pub result: SimplexResult,
}

/// Minimize the profiled deviance over theta from the documented
/// multi-start: Gamma = 0.1 I and the method-of-moments warm start.
pub(crate) fn optimize(
    data: &LmmData,
    blocks: &[SubjectBlocks],
    criterion: Criterion,
    max_evals: usize,
) -> OptimOutcome {
    let q = data.z_cols;
    let dim = theta_dim(q);
    let mut objective = |theta: &[f64]| {
        let gamma = gamma_from_theta(theta, q);
        match profiled_deviance(data, blocks, &gamma, criterion) {
            Some(fit) => fit.deviance,
            None => f64::INFINITY,
        }
    };
    // Start (a): Gamma = 0.1 I.
    let mut start_a = vec![0.0; dim];
    for t in start_a.iter_mut().take(q) {
        *t = (0.1f64).sqrt().ln();
    }
    let mut best = nelder_mead(&mut objective, &start_a, 0.7, 1e-8, max_evals);
    // Start (b): method-of-moments.
    if let Some(start_b) = moment_start(data, blocks) {
        let run = nelder_mead(&mut objective, &start_b, 0.4, 1e-8, max_evals);
        if run.value < best.value {
            best = run;
        }
    }
    OptimOutcome {
        theta: best.x.clone(),
        result: best,
    }
}

/// Best linear unbiased predictors of the per-subject random effects at the
/// fitted Gamma and beta: u_s = A (Z'y - Z'X beta).
pub(crate) fn blups(
    data: &LmmData,
    blocks: &[SubjectBlocks],
    gamma: &DMatrix<f64>,
    beta: &DVector<f64>,
) -> Vec<DVector<f64>> {
    let q = data.z_cols;
    let eye = DMatrix::<f64>::identity(q, q);
    blocks
        .iter()
        .map(|b| {
            let t = &eye + gamma * &b.m_zz;
            let a = t.try_inverse().expect("fitted Gamma keeps I + Gamma M invertible") * gamma;
            let u = &b.q_zy - &b.p_zx * beta;
            &a * u
        })
        .collect()
}
