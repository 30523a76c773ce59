//! Linear mixed-effects error modelling: cube-root transform, predictor
//! standardization, REML/ML fitting with subject random intercepts and
//! forecast-horizon slopes, likelihood-ratio significance tests with
//! drop-and-refit, approximately unbiased back-transformation, and
//! domain-endpoint effect sizes.

mod fit;
#[doc(hidden)]
pub mod sim;
pub mod simplex;

use nalgebra::{DMatrix, DVector};
use statrs::distribution::{ChiSquared, ContinuousCDF};
use thiserror::Error;

use crate::training::ForecastRecord;
use fit::{blups, gamma_from_theta, optimize, profiled_deviance, subject_blocks, Criterion};

pub use fit::Criterion as FitCriterion;

#[derive(Debug, Error)]
pub enum LmmError {
    #[error("column '{0}' is constant; cannot standardize")]
    ConstantColumn(String),
    #[error("need >= 2 subjects, got {0}")]
    NotEnoughSubjects(usize),
    #[error("subject {0} has fewer than 3 observations")]
    SubjectTooSmall(u16),
    #[error("response values must be >= 0 before the cube-root transform, got {0}")]
    NegativeResponse(f64),
    #[error("variance must be >= 0, got {0}")]
    NegativeVariance(f64),
    #[error("predictor '{0}' is not in the model")]
    UnknownPredictor(String),
    #[error("design is numerically singular")]
    SingularDesign,
    #[error("optimizer did not converge after {evals} evaluations (deviance {deviance})")]
    NonConvergence { evals: usize, deviance: f64 },
}

/// Standardization constants of one design column.
#[derive(Debug, Clone, PartialEq)]
pub struct ColumnStats {
    pub name: String,
    pub mean: f64,
    pub sd: f64,
}

/// z-score a column, returning the scores and the constants needed to map
/// domain endpoints later. Uses the sample (n-1) standard deviation.
pub fn standardize(name: &str, column: &[f64]) -> Result<(Vec<f64>, ColumnStats), LmmError> {
    let n = column.len();
    let mean = column.iter().sum::<f64>() / n as f64;
    let var = column.iter().map(|x| (x - mean) * (x - mean)).sum::<f64>() / (n - 1) as f64;
    if var <= 0.0 {
        return Err(LmmError::ConstantColumn(name.to_string()));
    }
    let sd = var.sqrt();
    Ok((
        column.iter().map(|x| (x - mean) / sd).collect(),
        ColumnStats {
            name: name.to_string(),
            mean,
            sd,
        },
    ))
}

/// Response transform applied before fitting.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ResponseTransform {
    /// z = |error|^(1/3), the variance-stabilizing choice.
    CubeRoot,
    /// Raw |error|; used by the heteroscedasticity workflow check.
    Identity,
}

/// z = |error|^(1/3); rejects negative input.
pub fn cube_root_transform(abs_error: f64) -> Result<f64, LmmError> {
    if abs_error < 0.0 {
        return Err(LmmError::NegativeResponse(abs_error));
    }
    Ok(abs_error.cbrt())
}

/// Approximately unbiased back-transformation: for z ~ N(mu, sigma2),
/// E[z^3] = mu^3 + 3 mu sigma2 exactly.
pub fn back_transform(mu: f64, sigma2: f64) -> Result<f64, LmmError> {
    if sigma2 < 0.0 {
        return Err(LmmError::NegativeVariance(sigma2));
    }
    Ok(mu * mu * mu + 3.0 * mu * sigma2)
}

/// Model data: transformed response, standardized fixed design, and the
/// per-subject random design (intercept and, optionally, the standardized
/// forecast horizon).
#[derive(Debug, Clone)]
pub struct LmmData {
    pub response: Vec<f64>,
    pub x: DMatrix<f64>,
    pub col_names: Vec<String>,
    pub col_stats: Vec<ColumnStats>,
    pub subject_index: Vec<usize>,
    pub subject_ids: Vec<u16>,
    pub n_subjects: usize,
    /// Column index of the standardized FH predictor, if present.
    pub fh_col: Option<usize>,
    /// 2 with a random FH slope, 1 with intercept-only random effects.
    pub z_cols: usize,
}

pub const PREDICTOR_NAMES: [&str; 4] = ["fh_ms", "torso_vel", "toe_vel", "cop_truth_mm"];

impl LmmData {
    /// Assemble the paper's design from forecast records: intercept plus the
    /// four standardized predictors, subject random intercepts and FH
    /// slopes, cube-root (or raw) absolute error as the response.
    pub fn from_records(
        records: &[ForecastRecord],
        transform: ResponseTransform,
    ) -> Result<Self, LmmError> {
        let n = records.len();
        let mut subject_ids: Vec<u16> = records.iter().map(|r| r.subject).collect();
        subject_ids.sort_unstable();
        subject_ids.dedup();
        if subject_ids.len() < 2 {
            return Err(LmmError::NotEnoughSubjects(subject_ids.len()));
        }
        for &s in &subject_ids {
            let count = records.iter().filter(|r| r.subject == s).count();
            if count < 3 {
                return Err(LmmError::SubjectTooSmall(s));
            }
        }
        let mut response = Vec::with_capacity(n);
        for r in records {
            response.push(match transform {
                ResponseTransform::CubeRoot => cube_root_transform(r.abs_error)?,
                ResponseTransform::Identity => {
                    if r.abs_error < 0.0 {
                        return Err(LmmError::NegativeResponse(r.abs_error));
                    }
                    r.abs_error
                }
            });
        }
        let raw_cols: [Vec<f64>; 4] = [
            records.iter().map(|r| r.fh_ms).collect(),
            records.iter().map(|r| r.torso_vel).collect(),
            records.iter().map(|r| r.toe_vel).collect(),
            records.iter().map(|r| r.cop_truth_mm).collect(),
        ];
        let mut x = DMatrix::<f64>::zeros(n, 5);
        let mut col_names = vec!["intercept".to_string()];
        let mut col_stats = vec![ColumnStats {
            name: "intercept".into(),
            mean: 0.0,
            sd: 1.0,
        }];
        for i in 0..n {
            x[(i, 0)] = 1.0;
        }
        for (j, (name, col)) in PREDICTOR_NAMES.iter().zip(&raw_cols).enumerate() {
            let (z, stats) = standardize(name, col)?;
            for (i, v) in z.into_iter().enumerate() {
                x[(i, j + 1)] = v;
            }
            col_names.push(name.to_string());
            col_stats.push(stats);
        }
        let subject_index = records
            .iter()
            .map(|r| subject_ids.iter().position(|&s| s == r.subject).expect("id present"))
            .collect();
        Ok(LmmData {
            response,
            x,
            col_names,
            col_stats,
            subject_index,
            n_subjects: subject_ids.len(),
            subject_ids,
            fh_col: Some(1),
            z_cols: 2,
        })
    }

    /// Row of the random design: (1) or (1, FH_standardized).
    fn z_row(&self, row: usize) -> Vec<f64> {
        match (self.z_cols, self.fh_col) {
            (2, Some(c)) => vec![1.0, self.x[(row, c)]],
            _ => vec![1.0],
        }
    }

    /// Copy of the data without one fixed-effect column (for LRT refits).
    pub fn without_column(&self, name: &str) -> Result<LmmData, LmmError> {
        let idx = self
            .col_names
            .iter()
            .position(|c| c == name)
            .ok_or_else(|| LmmError::UnknownPredictor(name.to_string()))?;
        let mut out = self.clone();
        out.x = self.x.clone().remove_column(idx);
        out.col_names.remove(idx);
        out.col_stats.remove(idx);
        out.fh_col = out.col_names.iter().position(|c| c == "fh_ms");
        if out.fh_col.is_none() && out.z_cols == 2 {
            // The random slope keeps using standardized FH even if the fixed
            // effect were removed; that situation never arises because FH is
            // never dropped, but keep the invariant explicit.
            out.z_cols = 1;
        }
        Ok(out)
    }

    /// Copy with an extra standardized column appended (linearity checks).
    pub fn with_extra_column(&self, name: &str, values: &[f64]) -> Result<LmmData, LmmError> {
        let (z, stats) = standardize(name, values)?;
        let p = self.x.ncols();
        let mut out = self.clone();
        out.x = self.x.clone().insert_column(p, 0.0);
        for (i, v) in z.into_iter().enumerate() {
            out.x[(i, p)] = v;
        }
        out.col_names.push(name.to_string());
        out.col_stats.push(stats);
        Ok(out)
    }
}

/// A fitted mixed model.
#[derive(Debug, Clone)]
pub struct LmmFit {
    pub criterion: FitCriterion,
    pub beta: Vec<f64>,
    pub col_names: Vec<String>,
    pub col_stats: Vec<ColumnStats>,
    /// Random-effect covariance on the response scale (q x q).
    pub g: DMatrix<f64>,
    pub sigma2_e: f64,
    pub deviance_reml: f64,
    pub deviance_ml: f64,
    pub converged: bool,
    pub n_evals: usize,
    pub n_obs: usize,
    pub n_subjects: usize,
    pub theta: Vec<f64>,
    pub z_cols: usize,
}

impl LmmFit {
    pub fn coef(&self, name: &str) -> Option<f64> {
        self.col_names
            .iter()
            .position(|c| c == name)
            .map(|i| self.beta[i])
    }

    /// Standard deviations of the random intercept and slope.
    pub fn random_sds(&self) -> Vec<f64> {
        (0..self.z_cols).map(|i| self.g[(i, i)].sqrt()).collect()
    }

    /// Correlation between random intercept and slope, when both exist.
    pub fn random_correlation(&self) -> Option<f64> {
        if self.z_cols == 2 {
            let d = (self.g[(0, 0)] * self.g[(1, 1)]).sqrt();
            if d > 0.0 {
                return Some(self.g[(0, 1)] / d);
            }
        }
        None
    }

    /// Marginal variance of the transformed response at standardized FH
    /// `fh_std`: z_r' G z_r + sigma2_e with z_r = (1, fh_std).
    pub fn marginal_variance(&self, fh_std: f64) -> f64 {
        let zr = match self.z_cols {
            2 => vec![1.0, fh_std],
            _ => vec![1.0],
        };
        let mut v = self.sigma2_e;
        for i in 0..self.z_cols {
            for j in 0..self.z_cols {
                v += zr[i] * self.g[(i, j)] * zr[j];
            }
        }
        v
    }
}

/// Profiled fit with the relative random-effect covariance held fixed
/// (Gamma = G / sigma2_e). `Gamma = 0` forces the random effects out, which
/// reduces the GLS step to ordinary least squares exactly.
pub fn fit_lmm_fixed(
    data: &LmmData,
    gamma: &DMatrix<f64>,
    criterion: FitCriterion,
) -> Result<LmmFit, LmmError> {
    let blocks = subject_blocks(data);
    let at = |c: Criterion| profiled_deviance(data, &blocks, gamma, c);
    let fitted = at(criterion).ok_or(LmmError::SingularDesign)?;
    let other = at(match criterion {
        Criterion::Reml => Criterion::Ml,
        Criterion::Ml => Criterion::Reml,
    })
    .ok_or(LmmError::SingularDesign)?;
    let (dev_reml, dev_ml) = match criterion {
        Criterion::Reml => (fitted.deviance, other.deviance),
        Criterion::Ml => (other.deviance, fitted.deviance),
    };
    Ok(LmmFit {
        criterion,
        beta: fitted.beta.iter().copied().collect(),
        col_names: data.col_names.clone(),
        col_stats: data.col_stats.clone(),
        g: gamma * fitted.sigma2,
        sigma2_e: fitted.sigma2,
        deviance_reml: dev_reml,
        deviance_ml: dev_ml,
        converged: true,
        n_evals: 2,
        n_obs: data.response.len(),
        n_subjects: data.n_subjects,
        theta: Vec::new(),
        z_cols: data.z_cols,
    })
}

/// Maximize the (restricted) likelihood. Non-convergence is reported on the
/// returned fit, never silently.
pub fn fit_lmm(data: &LmmData, criterion: FitCriterion) -> Result<LmmFit, LmmError> {
    if data.n_subjects < 2 {
        return Err(LmmError::NotEnoughSubjects(data.n_subjects));
    }
    let blocks = subject_blocks(data);
    let outcome = optimize(data, &blocks, criterion, 4000);
    let mut gamma = gamma_from_theta(&outcome.theta, data.z_cols);
    // Boundary candidate: the log-Cholesky parameterization can only
    // approach G = 0 asymptotically, so a boundary optimum leaves the
    // simplex stranded on a flat shelf at some tiny positive Gamma. When
    // the deviance at exactly zero is within the convergence tolerance of
    // the simplex optimum, take the boundary fit (which makes the GLS step
    // collapse to OLS exactly).
    let zero = nalgebra::DMatrix::<f64>::zeros(data.z_cols, data.z_cols);
    if let (Some(at_zero), Some(at_opt)) = (
        profiled_deviance(data, &blocks, &zero, criterion),
        profiled_deviance(data, &blocks, &gamma, criterion),
    ) {
        if at_zero.deviance <= at_opt.deviance + 1e-7 {
            gamma = zero;
        }
    }
    let at = |c: Criterion| profiled_deviance(data, &blocks, &gamma, c);
    let fitted = at(criterion).ok_or(LmmError::SingularDesign)?;
    let other = at(match criterion {
        Criterion::Reml => Criterion::Ml,
        Criterion::Ml => Criterion::Reml,
    })
    .ok_or(LmmError::SingularDesign)?;
    let (dev_reml, dev_ml) = match criterion {
        Criterion::Reml => (fitted.deviance, other.deviance),
        Criterion::Ml => (other.deviance, fitted.deviance),
    };
    Ok(LmmFit {
        criterion,
        beta: fitted.beta.iter().copied().collect(),
        col_names: data.col_names.clone(),
        col_stats: data.col_stats.clone(),
        g: &gamma * fitted.sigma2,
        sigma2_e: fitted.sigma2,
        deviance_reml: dev_reml,
        deviance_ml: dev_ml,
        converged: outcome.result.converged,
        n_evals: outcome.result.evals,
        n_obs: data.response.len(),
        n_subjects: data.n_subjects,
        theta: outcome.theta,
        z_cols: data.z_cols,
    })
}

/// One fixed effect's likelihood-ratio test.
#[derive(Debug, Clone)]
pub struct FixedEffectTest {
    pub name: String,
    pub deviance_delta: f64,
    pub p_value: f64,
}

/// Likelihood-ratio test per non-intercept fixed effect: refit without the
/// column under ML and refer the deviance difference to chi-squared(1).
/// (The paper used lmerTest's t-tests; the LRT is the documented substitute.)
pub fn fixed_effect_tests(data: &LmmData) -> Result<Vec<FixedEffectTest>, LmmError> {
    let full = fit_lmm(data, Criterion::Ml)?;
    if !full.converged {
        return Err(LmmError::NonConvergence {
            evals: full.n_evals,
            deviance: full.deviance_ml,
        });
    }
    let chi2 = ChiSquared::new(1.0).expect("1 dof");
    let mut tests = Vec::new();
    for name in data.col_names.iter().filter(|n| *n != "intercept") {
        let reduced_data = data.without_column(name)?;
        let reduced = fit_lmm(&reduced_data, Criterion::Ml)?;
        if !reduced.converged {
            return Err(LmmError::NonConvergence {
                evals: reduced.n_evals,
                deviance: reduced.deviance_ml,
            });
        }
        // Nested models: the reduced deviance cannot be smaller up to
        // optimizer slack.
        let delta = (reduced.deviance_ml - full.deviance_ml).max(0.0);
        tests.push(FixedEffectTest {
            name: name.clone(),
            deviance_delta: delta,
            p_value: 1.0 - chi2.cdf(delta),
        });
    }
    Ok(tests)
}

/// Result of the paper's single-pass removal of insignificant effects.
#[derive(Debug)]
pub struct DropAndRefit {
    pub initial_tests: Vec<FixedEffectTest>,
    pub dropped: Vec<String>,
    pub final_data: LmmData,
    pub final_fit: LmmFit,
    pub final_tests: Vec<FixedEffectTest>,
}

/// Remove all fixed effects with p > alpha (never the intercept, never FH,
/// never the random structure), then refit once.
pub fn drop_and_refit(
    data: &LmmData,
    alpha: f64,
    report_criterion: FitCriterion,
) -> Result<DropAndRefit, LmmError> {
    let initial_tests = fixed_effect_tests(data)?;
    let dropped: Vec<String> = initial_tests
        .iter()
        .filter(|t| t.p_value > alpha && t.name != "fh_ms")
        .map(|t| t.name.clone())
        .collect();
    let mut final_data = data.clone();
    for name in &dropped {
        final_data = final_data.without_column(name)?;
    }
    let final_fit = fit_lmm(&final_data, report_criterion)?;
    let final_tests = fixed_effect_tests(&final_data)?;
    Ok(DropAndRefit {
        initial_tests,
        dropped,
        final_data,
        final_fit,
        final_tests,
    })
}

/// Expected absolute-error increase across `[a, b]` of one predictor with
/// all other predictors at their means: back_transform at b minus at a,
/// using the marginal variance at each design point.
pub fn effect_across_domain(
    fit: &LmmFit,
    predictor: &str,
    domain: (f64, f64),
) -> Result<f64, LmmError> {
    let idx = fit
        .col_names
        .iter()
        .position(|c| c == predictor)
        .ok_or_else(|| LmmError::UnknownPredictor(predictor.to_string()))?;
    let stats = &fit.col_stats[idx];
    let b0 = fit.coef("intercept").unwrap_or(0.0);
    let at = |x: f64| -> Result<f64, LmmError> {
        let z = (x - stats.mean) / stats.sd;
        let mu = b0 + fit.beta[idx] * z;
        let fh_std = if predictor == "fh_ms" { z } else { 0.0 };
        back_transform(mu, fit.marginal_variance(fh_std))
    };
    Ok(at(domain.1)? - at(domain.0)?)
}

/// Expected absolute error with every predictor at its mean (the
/// back-transformed intercept).
pub fn intercept_effect(fit: &LmmFit) -> Result<f64, LmmError> {
    let b0 = fit.coef("intercept").unwrap_or(0.0);
    back_transform(b0, fit.marginal_variance(0.0))
}

/// Assumption diagnostics on a fitted model.
#[derive(Debug, Clone)]
pub struct Diagnostics {
    /// Breusch-Pagan-style LM test of squared conditional residuals on
    /// fitted values (statistic, p against chi-squared(1)).
    pub bp_stat: f64,
    pub bp_p: f64,
    /// Jarque-Bera normality test on conditional residuals.
    pub jb_stat: f64,
    pub jb_p: f64,
    /// Per-predictor linearity LRT of an added squared term.
    pub linearity: Vec<FixedEffectTest>,
}

/// Conditional residuals y - X beta - Z u at the fit's BLUPs.
pub fn conditional_residuals(data: &LmmData, fit: &LmmFit) -> (Vec<f64>, Vec<f64>) {
    let blocks = subject_blocks(data);
    let gamma = &fit.g / fit.sigma2_e;
    let beta = DVector::from_column_slice(&fit.beta);
    let us = blups(data, &blocks, &gamma, &beta);
    let n = data.response.len();
    let mut fitted = vec![0.0; n];
    let mut resid = vec![0.0; n];
    for (s, block) in blocks.iter().enumerate() {
        for &row in &block.rows {
            let xb: f64 = (0..data.x.ncols())
                .map(|j| data.x[(row, j)] * fit.beta[j])
                .sum();
            let zu: f64 = data
                .z_row(row)
                .iter()
                .zip(us[s].iter())
                .map(|(z, u)| z * u)
                .sum();
            fitted[row] = xb + zu;
            resid[row] = data.response[row] - fitted[row];
        }
    }
    (fitted, resid)
}

/// Breusch-Pagan LM statistic: n * R^2 of e^2 regressed on the fitted
/// values, against chi-squared(1).
pub fn breusch_pagan(fitted: &[f64], resid: &[f64]) -> (f64, f64) {
    let n = fitted.len() as f64;
    let e2: Vec<f64> = resid.iter().map(|e| e * e).collect();
    let xm = fitted.iter().sum::<f64>() / n;
    let ym = e2.iter().sum::<f64>() / n;
    let sxx: f64 = fitted.iter().map(|x| (x - xm) * (x - xm)).sum();
    let syy: f64 = e2.iter().map(|y| (y - ym) * (y - ym)).sum();
    if sxx <= 0.0 || syy <= 0.0 {
        return (0.0, 1.0);
    }
    let sxy: f64 = fitted
        .iter()
        .zip(&e2)
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum();
    let r2 = (sxy * sxy) / (sxx * syy);
    let stat = n * r2;
    let chi2 = ChiSquared::new(1.0).expect("1 dof");
    (stat, 1.0 - chi2.cdf(stat))
}

/// Jarque-Bera normality statistic on residuals, against chi-squared(2).
pub fn jarque_bera(resid: &[f64]) -> (f64, f64) {
    let n = resid.len() as f64;
    let mean = resid.iter().sum::<f64>() / n;
    let m2 = resid.iter().map(|e| (e - mean).powi(2)).sum::<f64>() / n;
    let m3 = resid.iter().map(|e| (e - mean).powi(3)).sum::<f64>() / n;
    let m4 = resid.iter().map(|e| (e - mean).powi(4)).sum::<f64>() / n;
    if m2 <= 0.0 {
        return (0.0, 1.0);
    }
    let skew = m3 / m2.powf(1.5);
    let kurt = m4 / (m2 * m2);
    let stat = n / 6.0 * (skew * skew + (kurt - 3.0).powi(2) / 4.0);
    let chi2 = ChiSquared::new(2.0).expect("2 dof");
    (stat, 1.0 - chi2.cdf(stat))
}

/// Full assumption report: homoscedasticity, normality, and linearity of
/// each continuous predictor (LRT of an added squared term).
pub fn assumption_checks(data: &LmmData, fit: &LmmFit) -> Result<Diagnostics, LmmError> {
    let (fitted, resid) = conditional_residuals(data, fit);
    let (bp_stat, bp_p) = breusch_pagan(&fitted, &resid);
    let (jb_stat, jb_p) = jarque_bera(&resid);
    let chi2 = ChiSquared::new(1.0).expect("1 dof");
    let base = fit_lmm(data, Criterion::Ml)?;
    let mut linearity = Vec::new();
    for name in data.col_names.iter().filter(|n| *n != "intercept") {
        let idx = data.col_names.iter().position(|c| c == name).expect("name exists");
        let squared: Vec<f64> = (0..data.response.len())
            .map(|i| data.x[(i, idx)] * data.x[(i, idx)])
            .collect();
        // A squared binary-ish column can be collinear; skip those.
        let augmented = match data.with_extra_column(&format!("{name}^2"), &squared) {
            Ok(d) => d,
            Err(LmmError::ConstantColumn(_)) => continue,
            Err(e) => return Err(e),
        };
        let aug_fit = match fit_lmm(&augmented, Criterion::Ml) {
            Ok(f) => f,
            Err(LmmError::SingularDesign) => continue,
            Err(e) => return Err(e),
        };
        let delta = (base.deviance_ml - aug_fit.deviance_ml).max(0.0);
        linearity.push(FixedEffectTest {
            name: name.clone(),
            deviance_delta: delta,
            p_value: 1.0 - chi2.cdf(delta),
        });
    }
    Ok(Diagnostics {
        bp_stat,
        bp_p,
        jb_stat,
        jb_p,
        linearity,
    })
}

/// The paper's workflow guard: fit the raw |error| response and test for
/// heteroscedasticity; a rejection recommends the cube-root transform.
pub fn recommend_cube_root(records: &[ForecastRecord]) -> Result<(bool, f64), LmmError> {
    let raw = LmmData::from_records(records, ResponseTransform::Identity)?;
    let fit = fit_lmm(&raw, Criterion::Reml)?;
    let (fitted, resid) = conditional_residuals(&raw, &fit);
    let (_, p) = breusch_pagan(&fitted, &resid);
    Ok((p < 0.05, p))
}
