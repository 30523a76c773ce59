//! Acceptance suite: one test per pipeline-level requirement, each printing
//! a PASS line with its measured numbers. Tests serialize on a global lock
//! so the timing-sensitive benchmark is never perturbed by parallel work.

use std::fs;
use std::path::{Path, PathBuf};
use std::process::Command;
use std::sync::Mutex;
use std::time::Instant;

use stride_cli::commands::{self, TaskArg};
use stride_cli::livesim::{run_livesim, LivesimConfig};
use stride_core::datagen::generate_dataset;
use stride_core::eval::{
    boxplot_stats, bootstrap_mean_ci, mae_by_fh, quantile_sorted, residual_regression, residuals,
    rmse_by_fh,
};
use stride_core::lmm::sim::{ols_beta, simulate_records, SimSpec};
use stride_core::lmm::{
    back_transform, fit_lmm, fit_lmm_fixed, FitCriterion, LmmData, ResponseTransform,
};
use stride_core::model::{micro_config, ForecasterConfig, ForecasterModel, Task};
use stride_core::numerics::ops::mse;
use stride_core::training::{
    cross_validate_with, loocv, pretrain, FoldPlan, ForecastRecord, TrainConfig, TrialPredictor,
};
use stride_core::{RngState, StreamMode, StreamState, Tensor};

static GATE: Mutex<()> = Mutex::new(());

fn lock() -> std::sync::MutexGuard<'static, ()> {
    GATE.lock().unwrap_or_else(|poison| poison.into_inner())
}

// ---------------------------------------------------------------------------
// 1. Gradient correctness: analytic adjoints vs central finite differences
//    (f64, step 1e-5) within relative error 1e-6 on a randomized micro-model,
//    for every layer type, in under 60 seconds.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_01_gradient_correctness() {
    let _g = lock();
    let started = Instant::now();
    let cfg = micro_config(Task::Cop);
    let model = ForecasterModel::<f64>::init_random(cfg.clone(), 42);
    let mut rng = RngState::new(43);
    let frames: Vec<Tensor<f64>> = (0..cfg.window)
        .map(|_| {
            let n = cfg.input_channels * cfg.input_height * cfg.input_width;
            Tensor::from_vec(
                &[cfg.input_channels, cfg.input_height, cfg.input_width],
                rng.uniform(n),
            )
            .unwrap()
        })
        .collect();
    // Verified off the ReLU6 kinks: see stride-core/tests/gradcheck.rs for
    // the explicit margin check on this same seed.
    let targets: Vec<f64> = (0..cfg.window).map(|_| rng.range_f64(-0.5, 0.5)).collect();

    let loss = |m: &ForecasterModel<f64>| {
        let latents: Vec<Tensor<f64>> =
            frames.iter().map(|f| m.encode_frame(f).unwrap()).collect();
        let outputs = m.forecast_window(&latents).unwrap();
        mse(&outputs, &targets).0
    };
    let mut latents = Vec::new();
    let mut tapes = Vec::new();
    for f in &frames {
        let (l, t) = model.encode_frame_with_tape(f).unwrap();
        latents.push(l);
        tapes.push(t);
    }
    let wtape = model.forecast_window_with_tape(&latents).unwrap();
    let (_, grad_out) = mse(&wtape.outputs, &targets);
    let mut grads = ForecasterModel::zeros(cfg.clone());
    let glat = model.rnn_backward(&latents, &wtape, &grad_out, &mut grads);
    for (t, g) in tapes.iter().zip(&glat) {
        model.cnn_backward(t, g, &mut grads).unwrap();
    }

    let gmax = grads
        .params()
        .iter()
        .flat_map(|t| t.data().iter().map(|g| g.abs()))
        .fold(0.0f64, f64::max);
    let h = 1e-5;
    let mut checked = 0usize;
    let mut worst = 0.0f64;
    for ti in 0..model.params().len() {
        for i in 0..model.params()[ti].len() {
            let x0 = model.params()[ti].data()[i];
            let probe = |v: f64| {
                let mut m = model.clone();
                m.params_mut()[ti].data_mut()[i] = v;
                loss(&m)
            };
            let fd = (probe(x0 + h) - probe(x0 - h)) / (2.0 * h);
            let g = grads.params()[ti].data()[i];
            let rel = (fd - g).abs() / fd.abs().max(1e-3 * gmax);
            worst = worst.max(rel);
            assert!(rel < 1e-6, "tensor {ti} elem {i}: rel {rel:e}");
            checked += 1;
        }
    }
    let secs = started.elapsed().as_secs_f64();
    assert_eq!(checked, cfg.param_count());
    assert!(secs < 60.0, "gradient suite took {secs:.1} s");
    println!(
        "ACCEPTANCE 1 gradient correctness: PASS ({checked} params, worst rel {worst:.2e}, {secs:.1} s)"
    );
}

// ---------------------------------------------------------------------------
// 2. Parameter accounting: analytic counts, walk-and-sum equality, and the
//    recorded difference against the original system's reported CNN budget.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_02_parameter_accounting() {
    let _g = lock();
    let cfg = ForecasterConfig::default_for(Task::Cop);
    assert_eq!(cfg.cnn_param_count(), 52_572);
    assert_eq!(cfg.rnn_param_count(), 34_147);
    let model = ForecasterModel::<f32>::zeros(cfg.clone());
    assert_eq!(model.param_count_walk(), cfg.param_count());
    // Known difference, recorded: the original system reports a 47,437-
    // parameter CNN, but any bias-bearing stack under the described channel
    // plan has an even parameter count, so the described layers cannot
    // reproduce that figure. The analytic count is canonical here.
    const REPORTED_CNN_PARAMS: usize = 47_437;
    assert_ne!(cfg.cnn_param_count(), REPORTED_CNN_PARAMS);
    assert_eq!(REPORTED_CNN_PARAMS % 2, 1);
    assert_eq!(cfg.cnn_param_count() % 2, 0);
    println!(
        "ACCEPTANCE 2 parameter accounting: PASS (cnn 52572, rnn 34147, walk {}, recorded diff vs {})",
        model.param_count_walk(),
        REPORTED_CNN_PARAMS
    );
}

// ---------------------------------------------------------------------------
// 3. Shape contract: 2x25x50 -> 576 latent; windowed streaming equals
//    offline windowed evaluation bit-for-bit in f64.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_03_shape_contract_and_stream_equality() {
    let _g = lock();
    let cfg = ForecasterConfig::default_for(Task::Toi);
    let model = ForecasterModel::<f64>::init_random(cfg.clone(), 7);
    let mut rng = RngState::new(8);
    let frames: Vec<Tensor<f64>> = (0..40)
        .map(|_| Tensor::from_vec(&[2, 25, 50], rng.uniform(2500)).unwrap())
        .collect();
    assert_eq!(model.encode_frame(&frames[0]).unwrap().len(), 576);

    let mut state = StreamState::new(&cfg, StreamMode::Windowed);
    let mut checked = 0usize;
    for (i, frame) in frames.iter().enumerate() {
        let streamed = model.stream_predict(frame, &mut state).unwrap();
        if i + 1 < cfg.window {
            assert!(streamed.is_none());
            continue;
        }
        let latents: Vec<Tensor<f64>> = frames[i + 1 - cfg.window..=i]
            .iter()
            .map(|f| model.encode_frame(f).unwrap())
            .collect();
        let offline = *model.forecast_window(&latents).unwrap().last().unwrap();
        assert_eq!(
            streamed.unwrap().to_bits(),
            offline.to_bits(),
            "frame {i}: streaming and offline disagree"
        );
        checked += 1;
    }
    println!("ACCEPTANCE 3 shape contract: PASS (latent 576, {checked} frames bit-equal)");
}

// ---------------------------------------------------------------------------
// 4. Causality: mutating frames after the forecast frame leaves the forecast
//    bit-identical (100 randomized cases).
// ---------------------------------------------------------------------------
#[test]
fn acceptance_04_causality() {
    let _g = lock();
    let cfg = ForecasterConfig::default_for(Task::Cop);
    let model = ForecasterModel::<f32>::init_random(cfg.clone(), 11);
    let mut rng = RngState::new(12);
    let n_frames = 30usize;
    let base_frames: Vec<Vec<f64>> = (0..n_frames).map(|_| rng.uniform(2500)).collect();
    let forecast_at = |frames: &[Vec<f64>], t: usize| -> u32 {
        let mut state = StreamState::new(&cfg, StreamMode::Windowed);
        let mut out = None;
        for f in &frames[..=t] {
            let tensor = Tensor::from_vec(&[2, 25, 50], f.clone()).unwrap().cast::<f32>();
            out = model.stream_predict(&tensor, &mut state).unwrap();
        }
        out.expect("window filled").to_bits()
    };
    for case in 0..100 {
        let t = 14 + rng.range_u64((n_frames - 15) as u64) as usize;
        let before = forecast_at(&base_frames, t);
        let mut mutated = base_frames.clone();
        let late = t + 1 + rng.range_u64((n_frames - t - 1) as u64) as usize;
        for v in mutated[late].iter_mut() {
            *v = rng.next_f64();
        }
        let after = forecast_at(&mutated, t);
        assert_eq!(before, after, "case {case}: frame {late} leaked into forecast at {t}");
    }
    println!("ACCEPTANCE 4 causality: PASS (100 randomized mutation cases bit-identical)");
}

// ---------------------------------------------------------------------------
// 5/6. Synthetic learnability: fine-tuned models beat the predict-training-
//      mean baseline at FH = 50 ms by at least 20% on a fixed-seed 4x24
//      dataset, within the runtime budget; TOI additionally shows the
//      monotone trend MAE(16.67 ms) <= MAE(250 ms).
// ---------------------------------------------------------------------------
struct ConstantPredictor(f64);
impl TrialPredictor for ConstantPredictor {
    fn predict(
        &self,
        _trial: &stride_core::datagen::Trial,
        _k: usize,
    ) -> Result<f64, stride_core::training::TrainError> {
        Ok(self.0)
    }
}

fn learnability(task: Task) -> (f64, f64, Vec<ForecastRecord>, f64) {
    let started = Instant::now();
    let ds = generate_dataset(4, 24, 20250810).unwrap();
    let base_ds = stride_core::datagen::generate_base_dataset(2, 6, 4242).unwrap();
    let mut config = TrainConfig::new(task, 77);
    config.pretrain_epochs = 12;
    let base = pretrain(&base_ds, &config).unwrap();
    config.finetune_epochs = 2;
    let mut model_records = Vec::new();
    let mut baseline_records = Vec::new();
    for subject in 0..4u16 {
        model_records
            .extend(loocv(&base.model, &ds, subject, FoldPlan::KFold(8), &config).unwrap());
        baseline_records.extend(
            cross_validate_with(&ds, subject, FoldPlan::KFold(8), &config, |train| {
                let mean = match task {
                    // Predict the training trials' mean normalized COP.
                    Task::Cop => {
                        train.iter().map(|t| t.cop_norm as f64).sum::<f64>() / train.len() as f64
                    }
                    // Predict the mean training target (k/60 averaged over
                    // the 15-horizon grid, identical for every trial).
                    Task::Toi => (1..=15).map(|k| k as f64 / 60.0).sum::<f64>() / 15.0,
                };
                Ok(ConstantPredictor(mean))
            })
            .unwrap(),
        );
    }
    let model_mae = mae_by_fh(&model_records).value_at(3).expect("fh 50 ms bucket");
    let baseline_mae = mae_by_fh(&baseline_records).value_at(3).expect("fh 50 ms bucket");
    (
        model_mae,
        baseline_mae,
        model_records,
        started.elapsed().as_secs_f64(),
    )
}

#[test]
fn acceptance_05_learnability_cop() {
    let _g = lock();
    let (model_mae, baseline_mae, _, secs) = learnability(Task::Cop);
    assert!(
        model_mae <= 0.8 * baseline_mae,
        "COP FH=50ms MAE {model_mae:.2} mm vs baseline {baseline_mae:.2} mm"
    );
    assert!(secs < 1800.0, "runtime {secs:.0} s exceeds 30 min");
    println!(
        "ACCEPTANCE 5 synthetic learnability (COP): PASS (MAE {model_mae:.2} mm vs baseline {baseline_mae:.2} mm, ratio {:.3}, {secs:.0} s)",
        model_mae / baseline_mae
    );
}

#[test]
fn acceptance_06_learnability_toi() {
    let _g = lock();
    let (model_mae, baseline_mae, records, secs) = learnability(Task::Toi);
    assert!(
        model_mae <= 0.8 * baseline_mae,
        "TOI FH=50ms MAE {model_mae:.2} ms vs baseline {baseline_mae:.2} ms"
    );
    let curve = mae_by_fh(&records);
    let near = curve.value_at(1).expect("fh 16.67 ms");
    let far = curve.value_at(15).expect("fh 250 ms");
    assert!(
        near <= far,
        "monotone trend violated: MAE(16.67ms) {near:.2} > MAE(250ms) {far:.2}"
    );
    assert!(secs < 1800.0, "runtime {secs:.0} s exceeds 30 min");
    println!(
        "ACCEPTANCE 6 synthetic learnability (TOI): PASS (MAE {model_mae:.2} ms vs baseline {baseline_mae:.2} ms, ratio {:.3}; MAE {near:.2} @16.67ms <= {far:.2} @250ms, {secs:.0} s)",
        model_mae / baseline_mae
    );
}

// ---------------------------------------------------------------------------
// 7. Evaluation oracles: per-horizon metrics, residuals, box statistics, and
//    bootstrap CIs match independent brute-force recomputation to 1e-10 on
//    1000 random record sets; the constant predictor's residual regression
//    has slope exactly 1 within 1e-9.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_07_evaluation_oracles() {
    let _g = lock();
    let mut rng = RngState::new(1009);
    for set in 0..1000 {
        let n = 30 + rng.range_u64(90) as usize;
        let records: Vec<ForecastRecord> = (0..n)
            .map(|i| {
                let truth = rng.range_f64(0.0, 250.0);
                let prediction = truth + rng.range_f64(-60.0, 60.0);
                ForecastRecord {
                    subject: (i % 4) as u16,
                    trial: i,
                    task: Task::Cop,
                    fh_frames: (rng.range_u64(15) + 1) as u32,
                    fh_ms: 0.0,
                    prediction,
                    truth,
                    abs_error: (truth - prediction).abs(),
                    torso_vel: 1.0,
                    toe_vel: 1.0,
                    cop_truth_mm: truth,
                }
            })
            .collect();
        let mae = mae_by_fh(&records);
        let rmse = rmse_by_fh(&records);
        for k in 1..=15u32 {
            let errs: Vec<f64> = records
                .iter()
                .filter(|r| r.fh_frames == k)
                .map(|r| r.truth - r.prediction)
                .collect();
            if errs.is_empty() {
                assert_eq!(mae.value_at(k), None);
                continue;
            }
            let want_mae = errs.iter().map(|e| e.abs()).sum::<f64>() / errs.len() as f64;
            let want_rmse =
                (errs.iter().map(|e| e * e).sum::<f64>() / errs.len() as f64).sqrt();
            assert!((mae.value_at(k).unwrap() - want_mae).abs() < 1e-10, "set {set}");
            assert!((rmse.value_at(k).unwrap() - want_rmse).abs() < 1e-10);
        }
        let rs = residuals(&records);
        for (r, rec) in rs.iter().zip(&records) {
            assert!((r - (rec.truth - rec.prediction)).abs() < 1e-10);
        }
        let stats = boxplot_stats(&rs).unwrap();
        let mut sorted = rs.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        assert!((stats.median - quantile_sorted(&sorted, 0.5)).abs() < 1e-10);
        assert!(stats.q1 <= stats.median && stats.median <= stats.q3);

        if set % 50 == 0 {
            // Bootstrap endpoints are order statistics of resampled means:
            // replay the documented counter-based stream independently.
            let abs: Vec<f64> = records.iter().map(|r| r.abs_error).collect();
            let b = 400;
            let (lo, hi) = bootstrap_mean_ci(&abs, b, 0.95, 31).unwrap();
            let mut replay = RngState::new(31).derive(0xb005);
            let mut means: Vec<f64> = (0..b)
                .map(|_| {
                    (0..abs.len())
                        .map(|_| abs[replay.range_u64(abs.len() as u64) as usize])
                        .sum::<f64>()
                        / abs.len() as f64
                })
                .collect();
            means.sort_by(|a, b| a.partial_cmp(b).unwrap());
            assert!((lo - quantile_sorted(&means, 0.025)).abs() < 1e-10);
            assert!((hi - quantile_sorted(&means, 0.975)).abs() < 1e-10);
            assert!(lo <= hi);
        }
    }
    // Constant predictor: residuals equal truth minus a constant, slope 1.
    let mut rng = RngState::new(2027);
    let truths: Vec<f64> = (0..500).map(|_| rng.range_f64(0.0, 263.0)).collect();
    let mean = truths.iter().sum::<f64>() / truths.len() as f64;
    let rs: Vec<f64> = truths.iter().map(|y| y - mean).collect();
    let fit = residual_regression(&rs, &truths).unwrap();
    assert!((fit.slope - 1.0).abs() < 1e-9, "slope {}", fit.slope);
    println!(
        "ACCEPTANCE 7 evaluation oracles: PASS (1000 record sets at 1e-10, constant-predictor slope {:.12})",
        fit.slope
    );
}

// ---------------------------------------------------------------------------
// 8. LMM oracles: OLS reduction, ANOVA variance components, LRT size
//    calibration, and the exact normal-cubic-moment back-transform.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_08_lmm_oracles() {
    let _g = lock();
    // (a) zero random variance: with the random effects forced out the fit
    // reproduces OLS (the free fit on the same data keeps only small
    // finite-sample noise in its variance components).
    let mut spec = SimSpec::null_torso(8, 1000);
    spec.g = [[0.0, 0.0], [0.0, 0.0]];
    spec.sigma_e = 0.3;
    let records = simulate_records(&spec, 501);
    let data = LmmData::from_records(&records, ResponseTransform::CubeRoot).unwrap();
    let forced = fit_lmm_fixed(&data, &nalgebra::DMatrix::zeros(2, 2), FitCriterion::Reml).unwrap();
    let ols = ols_beta(&data);
    let mut worst_beta = 0.0f64;
    for (b, o) in forced.beta.iter().zip(&ols) {
        worst_beta = worst_beta.max((b - o).abs());
        assert!((b - o).abs() < 1e-6, "{b} vs {o}");
    }
    let free = fit_lmm(&data, FitCriterion::Reml).unwrap();
    assert!(free.g[(0, 0)] < 1e-4, "free-fit g00 {}", free.g[(0, 0)]);
    assert!(free.g[(1, 1)] < 1e-4, "free-fit g11 {}", free.g[(1, 1)]);

    // (b) balanced random-intercept layout -> ANOVA estimators within 1e-3.
    let (s, m) = (10usize, 24usize);
    let (tau2, sigma2): (f64, f64) = (0.4, 1.1);
    let mut rng = RngState::new(502);
    let mut response = Vec::new();
    let mut subject_index = Vec::new();
    for subj in 0..s {
        let b = tau2.sqrt() * rng.next_normal();
        for _ in 0..m {
            response.push(1.5 + b + sigma2.sqrt() * rng.next_normal());
            subject_index.push(subj);
        }
    }
    let n = response.len();
    let grand = response.iter().sum::<f64>() / n as f64;
    let mut group = vec![0.0; s];
    for (r, &si) in response.iter().zip(&subject_index) {
        group[si] += r / m as f64;
    }
    let ms_b = m as f64 * group.iter().map(|g| (g - grand) * (g - grand)).sum::<f64>()
        / (s - 1) as f64;
    let ms_w = response
        .iter()
        .zip(&subject_index)
        .map(|(r, &si)| (r - group[si]) * (r - group[si]))
        .sum::<f64>()
        / (n - s) as f64;
    let anova_tau2 = (ms_b - ms_w) / m as f64;
    let one_way = LmmData {
        response,
        x: nalgebra::DMatrix::from_element(n, 1, 1.0),
        col_names: vec!["intercept".into()],
        col_stats: vec![stride_core::lmm::ColumnStats {
            name: "intercept".into(),
            mean: 0.0,
            sd: 1.0,
        }],
        subject_index,
        subject_ids: (0..s as u16).collect(),
        n_subjects: s,
        fh_col: None,
        z_cols: 1,
    };
    let anova_fit = fit_lmm(&one_way, FitCriterion::Reml).unwrap();
    let rel_sigma = (anova_fit.sigma2_e - ms_w).abs() / ms_w;
    let rel_tau = (anova_fit.g[(0, 0)] - anova_tau2).abs() / anova_tau2;
    assert!(rel_sigma < 1e-3, "sigma2 rel {rel_sigma}");
    assert!(rel_tau < 1e-3, "tau2 rel {rel_tau}");

    // (c) LRT size over 500 null simulations stays within [0.03, 0.07].
    use statrs::distribution::ContinuousCDF;
    let chi2 = statrs::distribution::ChiSquared::new(1.0).unwrap();
    let null_spec = SimSpec::null_torso(8, 250);
    let mut rejections = 0usize;
    for seed in 0..500u64 {
        let recs = simulate_records(&null_spec, 50_000 + seed);
        let d = LmmData::from_records(&recs, ResponseTransform::CubeRoot).unwrap();
        let full = fit_lmm(&d, FitCriterion::Ml).unwrap();
        let reduced = fit_lmm(&d.without_column("torso_vel").unwrap(), FitCriterion::Ml).unwrap();
        let delta = (reduced.deviance_ml - full.deviance_ml).max(0.0);
        if 1.0 - chi2.cdf(delta) < 0.05 {
            rejections += 1;
        }
    }
    let size = rejections as f64 / 500.0;
    assert!((0.03..=0.07).contains(&size), "LRT size {size}");

    // (d) back_transform(mu, sigma2) = mu^3 + 3 mu sigma2 vs Monte Carlo.
    let (mu, s2) = (1.0, 1.0);
    let exact = back_transform(mu, s2).unwrap();
    assert_eq!(exact, 4.0);
    let mut rng = RngState::new(503);
    let mc: f64 = (0..1_000_000)
        .map(|_| {
            let z = mu + s2.sqrt() * rng.next_normal();
            z * z * z
        })
        .sum::<f64>()
        / 1e6;
    let mc_rel = (mc - exact).abs() / exact;
    assert!(mc_rel < 0.01, "MC {mc}");
    println!(
        "ACCEPTANCE 8 lmm oracles: PASS (ols diff {worst_beta:.2e}; anova rel {rel_tau:.2e}; LRT size {size:.3}; MC rel {mc_rel:.4})"
    );
}

// ---------------------------------------------------------------------------
// 9. Pipeline determinism: two full end-to-end CLI runs with one master seed
//    produce byte-identical dataset, weights, CSVs, and SVGs.
// ---------------------------------------------------------------------------
fn run_pipeline(out: &Path) {
    let stride = env!("CARGO_BIN_EXE_stride");
    let run = |args: &[&str]| {
        let output = Command::new(stride)
            .args(args)
            .env("STRIDE_THREADS", "1")
            .output()
            .expect("spawn stride");
        assert!(
            output.status.success(),
            "stride {:?} failed: {}",
            args,
            String::from_utf8_lossy(&output.stderr)
        );
    };
    let o = out.to_str().unwrap();
    run(&["gen", "--seed", "9090", "--subjects", "2", "--trials", "4", "--out", o]);
    run(&[
        "pretrain", "--seed", "9090", "--task", "both", "--clips", "2", "--epochs", "1",
        "--out", o,
    ]);
    let dataset = format!("{o}/dataset.gait");
    run(&[
        "loocv", "--seed", "9090", "--task", "both",
        "--dataset", &dataset,
        "--base-cop", &format!("{o}/base_cop.sfw"),
        "--base-toi", &format!("{o}/base_toi.sfw"),
        "--folds", "2", "--epochs", "1", "--out", o,
    ]);
    let records = format!("{o}/records.csv");
    run(&["eval", "--records", &records, "--seed", "1", "--bootstrap", "500", "--out", o]);
    run(&["lmm", "--records", &records, "--task", "cop", "--out", o]);
    run(&["lmm", "--records", &records, "--task", "toi", "--out", o]);
    run(&["plots", "--records", &records, "--seed", "1", "--bootstrap", "500", "--out", o]);
}

fn artifact_listing(dir: &Path) -> Vec<(String, u64)> {
    let mut out = Vec::new();
    for entry in fs::read_dir(dir).unwrap() {
        let path = entry.unwrap().path();
        let name = path.file_name().unwrap().to_string_lossy().to_string();
        let keep = [".gait", ".sfw", ".csv", ".svg"]
            .iter()
            .any(|ext| name.ends_with(ext));
        if keep {
            out.push((name, stride_core::hash::fnv1a64(&fs::read(&path).unwrap())));
        }
    }
    out.sort();
    out
}

#[test]
fn acceptance_09_pipeline_determinism() {
    let _g = lock();
    let dir_a = tempfile::tempdir().unwrap();
    let dir_b = tempfile::tempdir().unwrap();
    run_pipeline(dir_a.path());
    run_pipeline(dir_b.path());
    let a = artifact_listing(dir_a.path());
    let b = artifact_listing(dir_b.path());
    assert!(!a.is_empty());
    assert_eq!(
        a.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>(),
        b.iter().map(|(n, _)| n.clone()).collect::<Vec<_>>()
    );
    let mut n_checked = 0usize;
    for ((name_a, hash_a), (_, hash_b)) in a.iter().zip(&b) {
        assert_eq!(hash_a, hash_b, "{name_a} differs between identical runs");
        n_checked += 1;
    }
    println!("ACCEPTANCE 9 pipeline determinism: PASS ({n_checked} artifacts byte-identical)");
}

// ---------------------------------------------------------------------------
// 10. Real-time budget: both models at 60 FPS pacing for 120 s sustain
//     effective FPS >= 59.9 with zero dropped frames and p99 latency under
//     one frame period.
// ---------------------------------------------------------------------------
#[test]
fn acceptance_10_realtime_budget() {
    let _g = lock();
    let cop = ForecasterModel::<f32>::init_random(ForecasterConfig::default_for(Task::Cop), 1);
    let toi = ForecasterModel::<f32>::init_random(ForecasterConfig::default_for(Task::Toi), 2);
    let config = LivesimConfig {
        duration_s: 120.0,
        repeats: 1,
        mode: StreamMode::Windowed,
        seed: 5,
        throttle: None,
    };
    let report = &run_livesim(&cop, &toi, &config).unwrap()[0];
    assert!(
        report.effective_fps >= 59.9,
        "effective fps {:.4}",
        report.effective_fps
    );
    assert_eq!(report.frames_dropped, 0, "dropped {}", report.frames_dropped);
    assert!(report.p99_ms < 16.67, "p99 {:.3} ms", report.p99_ms);
    println!(
        "ACCEPTANCE 10 real-time budget: PASS ({:.3} fps over {:.1} s, 0 dropped, p50 {:.2} ms, p99 {:.2} ms, max {:.2} ms)",
        report.effective_fps, report.duration_s, report.p50_ms, report.p99_ms, report.max_ms
    );
}

// Used indirectly by the learnability harness through `commands` types; keep
// the import grounded.
#[allow(unused)]
fn _touch(_: &commands::GenArgs, _: TaskArg, _: PathBuf) {}
