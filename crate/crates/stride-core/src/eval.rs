//! Forecast-quality analytics: MAE/RMSE per forecast horizon, residuals and
//! their regression on ground truth, slope-vs-horizon correlation, boxplot
//! statistics, percentile bootstrap CIs, and mean-fTOI curves. All f64.

use statrs::distribution::{ContinuousCDF, StudentsT};
use thiserror::Error;

use crate::numerics::RngState;
use crate::training::ForecastRecord;

#[derive(Debug, Error)]
pub enum EvalError {
    #[error("need at least {need} values, got {got}")]
    NotEnoughData { need: usize, got: usize },
    #[error("regressor is constant; slope undefined")]
    ConstantRegressor,
}

/// Metric carried by an [`FhCurve`].
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Metric {
    Mae,
    Rmse,
    MeanPrediction,
}

/// One point of a per-horizon curve. `value` is `None` when the bucket was
/// empty (absent, not zero).
#[derive(Debug, Clone, PartialEq)]
pub struct FhPoint {
    pub fh_frames: u32,
    pub fh_ms: f64,
    pub value: Option<f64>,
    pub n: usize,
}

/// Fifteen-point curve on the k/60-second grid.
#[derive(Debug, Clone, PartialEq)]
pub struct FhCurve {
    pub metric: Metric,
    pub points: Vec<FhPoint>,
}

impl FhCurve {
    pub fn value_at(&self, fh_frames: u32) -> Option<f64> {
        self.points
            .iter()
            .find(|p| p.fh_frames == fh_frames)
            .and_then(|p| p.value)
    }
}

fn curve_over(records: &[ForecastRecord], metric: Metric, f: impl Fn(&[f64]) -> f64) -> FhCurve {
    let mut points = Vec::with_capacity(15);
    for k in 1..=15u32 {
        let vals: Vec<f64> = records
            .iter()
            .filter(|r| r.fh_frames == k)
            .map(|r| match metric {
                Metric::MeanPrediction => r.prediction,
                _ => r.truth - r.prediction,
            })
            .collect();
        points.push(FhPoint {
            fh_frames: k,
            fh_ms: k as f64 * (1000.0 / 60.0),
            value: if vals.is_empty() { None } else { Some(f(&vals)) },
            n: vals.len(),
        });
    }
    FhCurve { metric, points }
}

/// Mean absolute error per forecast horizon, in reporting units.
pub fn mae_by_fh(records: &[ForecastRecord]) -> FhCurve {
    curve_over(records, Metric::Mae, |errs| {
        errs.iter().map(|e| e.abs()).sum::<f64>() / errs.len() as f64
    })
}

/// Root mean squared error per forecast horizon.
pub fn rmse_by_fh(records: &[ForecastRecord]) -> FhCurve {
    curve_over(records, Metric::Rmse, |errs| {
        (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt()
    })
}

/// Mean predicted value per horizon (the fTOI curve against the idealized
/// prediction = FH line).
pub fn mean_ftoi_curve(records: &[ForecastRecord]) -> FhCurve {
    curve_over(records, Metric::MeanPrediction, |preds| {
        preds.iter().sum::<f64>() / preds.len() as f64
    })
}

/// Per-subject mean prediction at the longest horizon: the long-horizon
/// plateau each subject's forecaster regresses toward.
pub fn ftoi_plateaus(records: &[ForecastRecord]) -> Vec<(u16, f64)> {
    let max_fh = records.iter().map(|r| r.fh_frames).max().unwrap_or(0);
    let mut subjects: Vec<u16> = records.iter().map(|r| r.subject).collect();
    subjects.sort_unstable();
    subjects.dedup();
    subjects
        .into_iter()
        .filter_map(|s| {
            let preds: Vec<f64> = records
                .iter()
                .filter(|r| r.subject == s && r.fh_frames == max_fh)
                .map(|r| r.prediction)
                .collect();
            if preds.is_empty() {
                None
            } else {
                Some((s, preds.iter().sum::<f64>() / preds.len() as f64))
            }
        })
        .collect()
}

/// Residual r = truth - prediction: positive means underprediction.
pub fn residuals(records: &[ForecastRecord]) -> Vec<f64> {
    records.iter().map(|r| r.truth - r.prediction).collect()
}

/// Ordinary least squares fit of residuals on ground truth.
#[derive(Debug, Clone, PartialEq)]
pub struct RegressionFit {
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
    pub p_value: f64,
    pub n: usize,
    /// Set when the response had zero variance; r_squared is reported as 0.
    pub degenerate: bool,
}

/// OLS of `response` on `regressor` with the slope's two-sided t-test.
pub fn residual_regression(
    response: &[f64],
    regressor: &[f64],
) -> Result<RegressionFit, EvalError> {
    let n = response.len();
    if n < 3 || regressor.len() != n {
        return Err(EvalError::NotEnoughData {
            need: 3,
            got: n.min(regressor.len()),
        });
    }
    let xm = regressor.iter().sum::<f64>() / n as f64;
    let ym = response.iter().sum::<f64>() / n as f64;
    let sxx: f64 = regressor.iter().map(|x| (x - xm) * (x - xm)).sum();
    if sxx == 0.0 {
        return Err(EvalError::ConstantRegressor);
    }
    let sxy: f64 = regressor
        .iter()
        .zip(response)
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum();
    let syy: f64 = response.iter().map(|y| (y - ym) * (y - ym)).sum();
    let slope = sxy / sxx;
    let intercept = ym - slope * xm;
    let ss_res: f64 = regressor
        .iter()
        .zip(response)
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    let degenerate = syy == 0.0;
    let r_squared = if degenerate { 0.0 } else { 1.0 - ss_res / syy };
    let p_value = if ss_res > 0.0 {
        let sigma2 = ss_res / (n - 2) as f64;
        let se = (sigma2 / sxx).sqrt();
        let t = slope / se;
        let dist = StudentsT::new(0.0, 1.0, (n - 2) as f64).expect("valid dof");
        2.0 * (1.0 - dist.cdf(t.abs()))
    } else {
        // A perfect linear fit: the slope is exact.
        0.0
    };
    Ok(RegressionFit {
        slope,
        intercept,
        r_squared,
        p_value,
        n,
        degenerate,
    })
}

/// Pearson correlation between horizons and their regression slopes.
/// `None` when either side has zero variance (flagged undefined).
pub fn slope_fh_correlation(fh_ms: &[f64], slopes: &[f64]) -> Result<Option<f64>, EvalError> {
    let n = fh_ms.len();
    if n < 3 || slopes.len() != n {
        return Err(EvalError::NotEnoughData {
            need: 3,
            got: n.min(slopes.len()),
        });
    }
    let xm = fh_ms.iter().sum::<f64>() / n as f64;
    let ym = slopes.iter().sum::<f64>() / n as f64;
    let sxx: f64 = fh_ms.iter().map(|x| (x - xm) * (x - xm)).sum();
    let syy: f64 = slopes.iter().map(|y| (y - ym) * (y - ym)).sum();
    // Constant inputs leave only rounding residue in the sums of squares;
    // compare against the scale of that residue, not exact zero.
    let degenerate = |ss: f64, mean: f64| ss <= 16.0 * n as f64 * (f64::EPSILON * mean.abs()).powi(2);
    if degenerate(sxx, xm) || degenerate(syy, ym) {
        return Ok(None);
    }
    let sxy: f64 = fh_ms
        .iter()
        .zip(slopes)
        .map(|(x, y)| (x - xm) * (y - ym))
        .sum();
    Ok(Some(sxy / (sxx.sqrt() * syy.sqrt())))
}

/// Five-number summary with 1.5*IQR whiskers.
#[derive(Debug, Clone, PartialEq)]
pub struct BoxStats {
    pub median: f64,
    pub q1: f64,
    pub q3: f64,
    pub iqr: f64,
    /// Most extreme observations within 1.5*IQR of the quartiles.
    pub whisker_lo: f64,
    pub whisker_hi: f64,
    pub outliers: Vec<f64>,
    pub n: usize,
}

/// Quantile by linear interpolation between closest ranks (the R type-7
/// definition): h = (n-1)p, value = x[floor(h)] + frac(h) * (x[floor(h)+1] -
/// x[floor(h)]).
pub fn quantile_sorted(sorted: &[f64], p: f64) -> f64 {
    let n = sorted.len();
    debug_assert!(n > 0);
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    let frac = h - lo as f64;
    if lo + 1 < n {
        sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
    } else {
        sorted[n - 1]
    }
}

pub fn boxplot_stats(values: &[f64]) -> Result<BoxStats, EvalError> {
    if values.is_empty() {
        return Err(EvalError::NotEnoughData { need: 1, got: 0 });
    }
    let mut sorted = values.to_vec();
    sorted.sort_by(|a, b| a.partial_cmp(b).expect("finite values"));
    let q1 = quantile_sorted(&sorted, 0.25);
    let median = quantile_sorted(&sorted, 0.5);
    let q3 = quantile_sorted(&sorted, 0.75);
    let iqr = q3 - q1;
    let fence_lo = q1 - 1.5 * iqr;
    let fence_hi = q3 + 1.5 * iqr;
    let whisker_lo = sorted
        .iter()
        .copied()
        .find(|&v| v >= fence_lo)
        .unwrap_or(sorted[0]);
    let whisker_hi = sorted
        .iter()
        .rev()
        .copied()
        .find(|&v| v <= fence_hi)
        .unwrap_or(sorted[sorted.len() - 1]);
    let outliers = sorted
        .iter()
        .copied()
        .filter(|&v| v < fence_lo || v > fence_hi)
        .collect();
    Ok(BoxStats {
        median,
        q1,
        q3,
        iqr,
        whisker_lo,
        whisker_hi,
        outliers,
        n: sorted.len(),
    })
}

/// Percentile bootstrap CI for the mean of `values`: B resamples with
/// replacement, endpoints at the (1-level)/2 and 1-(1-level)/2 quantiles of
/// the resampled means. Seeded and reproducible.
pub fn bootstrap_mean_ci(
    values: &[f64],
    b: usize,
    level: f64,
    seed: u64,
) -> Result<(f64, f64), EvalError> {
    let n = values.len();
    if n < 2 {
        return Err(EvalError::NotEnoughData { need: 2, got: n });
    }
    let mut rng = RngState::new(seed).derive(0xb005);
    let mut means = Vec::with_capacity(b);
    for _ in 0..b {
        let mut acc = 0.0;
        for _ in 0..n {
            acc += values[rng.range_u64(n as u64) as usize];
        }
        means.push(acc / n as f64);
    }
    means.sort_by(|a, b| a.partial_cmp(b).expect("finite means"));
    let alpha = (1.0 - level) / 2.0;
    Ok((
        quantile_sorted(&means, alpha),
        quantile_sorted(&means, 1.0 - alpha),
    ))
}
