//! Command implementations: thin deterministic wrappers over the core
//! pipeline, each producing artifacts plus a run manifest.

use std::fs;
use std::path::{Path, PathBuf};
use std::time::Instant;

use anyhow::{bail, Context, Result};
use stride_core::datagen::{self, io as dsio};
use stride_core::eval::{
    boxplot_stats, bootstrap_mean_ci, ftoi_plateaus, mae_by_fh, mean_ftoi_curve, residual_regression,
    residuals, rmse_by_fh, slope_fh_correlation,
};
use stride_core::lmm::{
    assumption_checks, drop_and_refit, effect_across_domain, fit_lmm, intercept_effect,
    recommend_cube_root, FitCriterion, LmmData, ResponseTransform,
};
use stride_core::model::io as wio;
use stride_core::training::{
    finetune, loocv, pretrain, read_records, write_records, FoldPlan, ForecastRecord, TrainConfig,
};
use stride_core::{StreamMode, Task};

use crate::livesim::{run_livesim, LivesimConfig};
use crate::manifest::RunManifest;
use crate::svg::{Frame, Svg};

pub fn ensure_out_dir(out: &Path) -> Result<()> {
    fs::create_dir_all(out).with_context(|| format!("creating {}", out.display()))
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    fs::write(path, text).with_context(|| format!("writing {}", path.display()))
}

/// `--task` argument: one task or both.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TaskArg {
    One(Task),
    Both,
}

impl TaskArg {
    pub fn tasks(self) -> Vec<Task> {
        match self {
            TaskArg::One(t) => vec![t],
            TaskArg::Both => vec![Task::Cop, Task::Toi],
        }
    }
}

impl std::str::FromStr for TaskArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cop" => Ok(TaskArg::One(Task::Cop)),
            "toi" => Ok(TaskArg::One(Task::Toi)),
            "both" => Ok(TaskArg::Both),
            other => Err(format!("unknown task '{other}' (expected cop, toi, or both)")),
        }
    }
}

/// `--folds` argument.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct FoldsArg(pub FoldPlan);

impl std::str::FromStr for FoldsArg {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s == "loo" {
            return Ok(FoldsArg(FoldPlan::LeaveOneOut));
        }
        s.parse::<usize>()
            .map(|k| FoldsArg(FoldPlan::KFold(k)))
            .map_err(|_| format!("--folds expects 'loo' or a fold count, got '{s}'"))
    }
}

// --- gen ---------------------------------------------------------------------

pub struct GenArgs {
    pub seed: u64,
    pub subjects: usize,
    pub trials: usize,
    pub out: PathBuf,
}

pub fn cmd_gen(args: &GenArgs) -> Result<PathBuf> {
    ensure_out_dir(&args.out)?;
    let mut manifest = RunManifest::new("gen");
    manifest
        .config("subjects", args.subjects)
        .config("trials_per_subject", args.trials)
        .seed(args.seed);
    manifest.seal();
    let t0 = Instant::now();
    let ds = datagen::generate_dataset(args.subjects, args.trials, args.seed)?;
    manifest.timing("generate", t0.elapsed().as_millis());
    let path = args.out.join("dataset.gait");
    dsio::write_dataset(&ds, &path)?;
    manifest.output(&path)?;
    manifest.write(&args.out)?;
    eprintln!(
        "gen: {} subjects x {} trials -> {}",
        args.subjects,
        args.trials,
        path.display()
    );
    Ok(path)
}

// --- pretrain -----------------------------------------------------------------

pub struct PretrainArgs {
    pub seed: u64,
    pub task: TaskArg,
    pub clips: usize,
    pub epochs: usize,
    pub lr: f64,
    pub out: PathBuf,
}

pub fn cmd_pretrain(args: &PretrainArgs) -> Result<Vec<PathBuf>> {
    ensure_out_dir(&args.out)?;
    let mut manifest = RunManifest::new("pretrain");
    manifest
        .config("clips", args.clips)
        .config("epochs", args.epochs)
        .config("lr", args.lr)
        .config("task", format!("{:?}", args.task))
        .seed(args.seed);
    let hash = manifest.seal();
    // The base task draws personas from a disjoint seed space; two pseudo
    // subjects give the clips persona diversity.
    let base = datagen::generate_base_dataset(2, args.clips.div_ceil(2), args.seed ^ 0xba5e)?;
    let mut outputs = Vec::new();
    for task in args.task.tasks() {
        let mut config = TrainConfig::new(task, args.seed);
        config.pretrain_epochs = args.epochs;
        config.pretrain_lr = args.lr;
        let t0 = Instant::now();
        let outcome = pretrain(&base, &config)?;
        manifest.timing(&format!("pretrain_{}", task.name()), t0.elapsed().as_millis());
        let path = args.out.join(format!("base_{}.sfw", task.name()));
        wio::save_weights(&outcome.model, &path)?;
        manifest.output(&path)?;
        let curve = args.out.join(format!("pretrain_curve_{}.csv", task.name()));
        let mut text = format!("# manifest: {hash}\nepoch,mean_loss\n");
        for (i, l) in outcome.epoch_losses.iter().enumerate() {
            text.push_str(&format!("{i},{l}\n"));
        }
        write_text(&curve, &text)?;
        manifest.output(&curve)?;
        eprintln!(
            "pretrain {}: loss {:.5} -> {:.5} ({} clips, {} epochs)",
            task.name(),
            outcome.epoch_losses.first().unwrap_or(&f64::NAN),
            outcome.epoch_losses.last().unwrap_or(&f64::NAN),
            base.trials.len(),
            args.epochs
        );
        outputs.push(path);
    }
    manifest.write(&args.out)?;
    Ok(outputs)
}

// --- finetune -----------------------------------------------------------------

pub struct FinetuneArgs {
    pub seed: u64,
    pub task: Task,
    pub dataset: PathBuf,
    pub base: PathBuf,
    pub subject: u16,
    pub epochs: usize,
    pub out: PathBuf,
}

pub fn cmd_finetune(args: &FinetuneArgs) -> Result<PathBuf> {
    ensure_out_dir(&args.out)?;
    let mut manifest = RunManifest::new("finetune");
    manifest
        .config("task", args.task.name())
        .config("subject", args.subject)
        .config("epochs", args.epochs)
        .seed(args.seed);
    manifest.input(&args.dataset)?;
    manifest.input(&args.base)?;
    manifest.seal();
    let ds = dsio::read_dataset(&args.dataset)?;
    let base = wio::load_weights(&args.base)?;
    let idxs = ds.trial_indices(args.subject);
    if idxs.is_empty() {
        bail!("subject {} has no trials in the dataset", args.subject);
    }
    let trials: Vec<&datagen::Trial> = idxs.iter().map(|&i| &ds.trials[i]).collect();
    let mut config = TrainConfig::new(args.task, args.seed);
    config.finetune_epochs = args.epochs;
    let t0 = Instant::now();
    let outcome = finetune(&base, &trials, &config)?;
    manifest.timing("finetune", t0.elapsed().as_millis());
    let path = args
        .out
        .join(format!("finetuned_{}_s{}.sfw", args.task.name(), args.subject));
    wio::save_weights(&outcome.model, &path)?;
    manifest.output(&path)?;
    manifest.write(&args.out)?;
    eprintln!(
        "finetune {} subject {}: loss {:.5} -> {:.5}",
        args.task.name(),
        args.subject,
        outcome.epoch_losses.first().unwrap_or(&f64::NAN),
        outcome.epoch_losses.last().unwrap_or(&f64::NAN)
    );
    Ok(path)
}

// --- loocv --------------------------------------------------------------------

pub struct LoocvArgs {
    pub seed: u64,
    pub task: TaskArg,
    pub dataset: PathBuf,
    pub base_cop: Option<PathBuf>,
    pub base_toi: Option<PathBuf>,
    pub folds: FoldPlan,
    pub epochs: usize,
    pub clamp_cop: bool,
    pub out: PathBuf,
}

pub fn cmd_loocv(args: &LoocvArgs) -> Result<PathBuf> {
    ensure_out_dir(&args.out)?;
    let mut manifest = RunManifest::new("loocv");
    manifest
        .config("task", format!("{:?}", args.task))
        .config("folds", format!("{:?}", args.folds))
        .config("epochs", args.epochs)
        .config("clamp_cop", args.clamp_cop)
        .seed(args.seed);
    manifest.input(&args.dataset)?;
    let ds = dsio::read_dataset(&args.dataset)?;
    let mut bases = Vec::new();
    for task in args.task.tasks() {
        let path = match task {
            Task::Cop => args.base_cop.as_ref(),
            Task::Toi => args.base_toi.as_ref(),
        }
        .with_context(|| format!("--base-{} is required for task {}", task.name(), task.name()))?;
        manifest.input(path)?;
        let model = wio::load_weights(path)?;
        if model.config.task != task {
            bail!(
                "weights {} carry task {}, expected {}",
                path.display(),
                model.config.task.name(),
                task.name()
            );
        }
        bases.push((task, model));
    }
    manifest.seal();
    let t0 = Instant::now();
    let mut records: Vec<ForecastRecord> = Vec::new();
    for (task, base) in &bases {
        let mut config = TrainConfig::new(*task, args.seed);
        config.finetune_epochs = args.epochs;
        config.clamp_cop = args.clamp_cop;
        for subject in ds.subjects.iter().map(|s| s.id) {
            records.extend(loocv(base, &ds, subject, args.folds, &config)?);
        }
    }
    manifest.timing("loocv", t0.elapsed().as_millis());
    let path = args.out.join("records.csv");
    write_records(&path, &records, &manifest.preamble())?;
    manifest.output(&path)?;
    manifest.write(&args.out)?;
    eprintln!("loocv: {} records -> {}", records.len(), path.display());
    Ok(path)
}

// --- eval ---------------------------------------------------------------------

pub struct EvalArgs {
    pub records: PathBuf,
    pub seed: u64,
    pub bootstrap: usize,
    pub fh_split_ms: f64,
    pub out: PathBuf,
}

fn task_records(records: &[ForecastRecord], task: Task) -> Vec<ForecastRecord> {
    records.iter().filter(|r| r.task == task).cloned().collect()
}

pub fn cmd_eval(args: &EvalArgs) -> Result<Vec<PathBuf>> {
    ensure_out_dir(&args.out)?;
    let mut manifest = RunManifest::new("eval");
    manifest
        .config("bootstrap", args.bootstrap)
        .config("fh_split_ms", args.fh_split_ms)
        .seed(args.seed);
    manifest.input(&args.records)?;
    let hash = manifest.seal();
    let records = read_records(&args.records)?;
    let mut outputs = Vec::new();

    // Per-horizon curves with bootstrap CIs on the MAE.
    let mut curves = format!("# manifest: {hash}\ntask,metric,fh_frames,fh_ms,value,n,ci_lo,ci_hi\n");
    let mut boxes = format!(
        "# manifest: {hash}\ntask,fh_frames,fh_ms,median,q1,q3,iqr,whisker_lo,whisker_hi,n_outliers,n\n"
    );
    let mut regression = format!(
        "# manifest: {hash}\ntask,fh_frames,fh_ms,slope,intercept,r_squared,p_value,n,degenerate\n"
    );
    let mut correlation = format!("# manifest: {hash}\ntask,subject,pearson_r,defined\n");
    let mut piecewise = format!(
        "# manifest: {hash}\ntask,segment,fh_lo_ms,fh_hi_ms,slope,intercept,r_squared,p_value,n\n"
    );
    let mut ftoi = format!("# manifest: {hash}\nfh_frames,fh_ms,mean_ftoi_ms,ideal_ms,n\n");
    let mut plateaus = format!("# manifest: {hash}\nsubject,plateau_ms\n");

    for task in [Task::Cop, Task::Toi] {
        let recs = task_records(&records, task);
        if recs.is_empty() {
            continue;
        }
        let mae = mae_by_fh(&recs);
        let rmse = rmse_by_fh(&recs);
        for (p, r) in mae.points.iter().zip(&rmse.points) {
            if let Some(v) = p.value {
                let errs: Vec<f64> = recs
                    .iter()
                    .filter(|x| x.fh_frames == p.fh_frames)
                    .map(|x| x.abs_error)
                    .collect();
                let (lo, hi) = bootstrap_mean_ci(&errs, args.bootstrap, 0.95, args.seed)
                    .unwrap_or((v, v));
                curves.push_str(&format!(
                    "{},mae,{},{},{},{},{},{}\n",
                    task.name(),
                    p.fh_frames,
                    p.fh_ms,
                    v,
                    p.n,
                    lo,
                    hi
                ));
            }
            if let Some(v) = r.value {
                curves.push_str(&format!(
                    "{},rmse,{},{},{},{},,\n",
                    task.name(),
                    r.fh_frames,
                    r.fh_ms,
                    v,
                    r.n
                ));
            }
        }

        // Residual boxplots and per-horizon residual-vs-truth regressions.
        let mut fh_ms_grid = Vec::new();
        let mut group_slopes = Vec::new();
        for k in 1..=15u32 {
            let bucket: Vec<&ForecastRecord> =
                recs.iter().filter(|r| r.fh_frames == k).collect();
            if bucket.is_empty() {
                continue;
            }
            let rs: Vec<f64> = bucket.iter().map(|r| r.truth - r.prediction).collect();
            let fh_ms = k as f64 * 1000.0 / 60.0;
            if let Ok(b) = boxplot_stats(&rs) {
                boxes.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{},{},{}\n",
                    task.name(),
                    k,
                    fh_ms,
                    b.median,
                    b.q1,
                    b.q3,
                    b.iqr,
                    b.whisker_lo,
                    b.whisker_hi,
                    b.outliers.len(),
                    b.n
                ));
            }
            let truths: Vec<f64> = bucket.iter().map(|r| r.truth).collect();
            if let Ok(fit) = residual_regression(&rs, &truths) {
                regression.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    task.name(),
                    k,
                    fh_ms,
                    fit.slope,
                    fit.intercept,
                    fit.r_squared,
                    fit.p_value,
                    fit.n,
                    fit.degenerate
                ));
                fh_ms_grid.push(fh_ms);
                group_slopes.push(fit.slope);
            }
        }
        // Slope-vs-horizon correlation: per subject, then the group.
        let mut subjects: Vec<u16> = recs.iter().map(|r| r.subject).collect();
        subjects.sort_unstable();
        subjects.dedup();
        for s in subjects {
            let mut fhs = Vec::new();
            let mut slopes = Vec::new();
            for k in 1..=15u32 {
                let bucket: Vec<&ForecastRecord> = recs
                    .iter()
                    .filter(|r| r.subject == s && r.fh_frames == k)
                    .collect();
                if bucket.len() < 3 {
                    continue;
                }
                let rs: Vec<f64> = bucket.iter().map(|r| r.truth - r.prediction).collect();
                let truths: Vec<f64> = bucket.iter().map(|r| r.truth).collect();
                if let Ok(fit) = residual_regression(&rs, &truths) {
                    fhs.push(k as f64 * 1000.0 / 60.0);
                    slopes.push(fit.slope);
                }
            }
            if fhs.len() >= 3 {
                match slope_fh_correlation(&fhs, &slopes)? {
                    Some(r) => correlation
                        .push_str(&format!("{},{},{},true\n", task.name(), s, r)),
                    None => correlation
                        .push_str(&format!("{},{},,false\n", task.name(), s)),
                }
            }
        }
        if fh_ms_grid.len() >= 3 {
            match slope_fh_correlation(&fh_ms_grid, &group_slopes)? {
                Some(r) => correlation.push_str(&format!("{},group,{},true\n", task.name(), r)),
                None => correlation.push_str(&format!("{},group,,false\n", task.name())),
            }
        }

        // Piecewise MAE-vs-FH linearity around the split (the split only
        // matters for TOI; COP also gets the full-range fit).
        let segments: Vec<(&str, f64, f64)> = match task {
            Task::Cop => vec![("full", 0.0, f64::INFINITY)],
            Task::Toi => vec![
                ("below_split", 0.0, args.fh_split_ms + 1e-9),
                ("above_split", args.fh_split_ms - 1e-9, f64::INFINITY),
                ("full", 0.0, f64::INFINITY),
            ],
        };
        for (name, lo, hi) in segments {
            let pts: Vec<(f64, f64)> = mae
                .points
                .iter()
                .filter(|p| p.value.is_some() && p.fh_ms >= lo && p.fh_ms <= hi)
                .map(|p| (p.fh_ms, p.value.expect("filtered")))
                .collect();
            if pts.len() < 3 {
                continue;
            }
            let xs: Vec<f64> = pts.iter().map(|p| p.0).collect();
            let ys: Vec<f64> = pts.iter().map(|p| p.1).collect();
            if let Ok(fit) = residual_regression(&ys, &xs) {
                piecewise.push_str(&format!(
                    "{},{},{},{},{},{},{},{},{}\n",
                    task.name(),
                    name,
                    xs.first().expect("non-empty"),
                    xs.last().expect("non-empty"),
                    fit.slope,
                    fit.intercept,
                    fit.r_squared,
                    fit.p_value,
                    fit.n
                ));
            }
        }

        if task == Task::Toi {
            let curve = mean_ftoi_curve(&recs);
            for p in &curve.points {
                if let Some(v) = p.value {
                    ftoi.push_str(&format!(
                        "{},{},{},{},{}\n",
                        p.fh_frames, p.fh_ms, v, p.fh_ms, p.n
                    ));
                }
            }
            for (s, v) in ftoi_plateaus(&recs) {
                plateaus.push_str(&format!("{s},{v}\n"));
            }
        }
    }

    for (name, text) in [
        ("eval_curves.csv", &curves),
        ("eval_boxstats.csv", &boxes),
        ("eval_residual_regression.csv", &regression),
        ("eval_slope_correlation.csv", &correlation),
        ("eval_piecewise.csv", &piecewise),
        ("eval_ftoi.csv", &ftoi),
        ("eval_ftoi_plateaus.csv", &plateaus),
    ] {
        let path = args.out.join(name);
        write_text(&path, text)?;
        manifest.output(&path)?;
        outputs.push(path);
    }
    manifest.write(&args.out)?;
    eprintln!("eval: {} records -> {} tables", records.len(), outputs.len());
    Ok(outputs)
}

// --- lmm ----------------------------------------------------------------------

pub struct LmmArgs {
    pub records: PathBuf,
    pub task: Task,
    pub fh_split_ms: f64,
    pub alpha: f64,
    pub out: PathBuf,
}

pub fn cmd_lmm(args: &LmmArgs) -> Result<Vec<PathBuf>> {
    ensure_out_dir(&args.out)?;
    let mut manifest = RunManifest::new("lmm");
    manifest
        .config("task", args.task.name())
        .config("fh_split_ms", args.fh_split_ms)
        .config("alpha", args.alpha);
    manifest.input(&args.records)?;
    let hash = manifest.seal();
    let all = read_records(&args.records)?;
    let mut records = task_records(&all, args.task);
    if args.task == Task::Toi {
        // The paper restricts the TOI model to the linear region below the
        // split.
        records.retain(|r| r.fh_ms <= args.fh_split_ms + 1e-9);
    }
    if records.is_empty() {
        bail!("no {} records in {}", args.task.name(), args.records.display());
    }

    let (recommend, bp_raw_p) = recommend_cube_root(&records)?;
    let data = LmmData::from_records(&records, ResponseTransform::CubeRoot)?;
    let out = drop_and_refit(&data, args.alpha, FitCriterion::Reml)?;
    let initial_fit = fit_lmm(&data, FitCriterion::Reml)?;
    let diag = assumption_checks(&out.final_data, &out.final_fit)?;

    let unit = match args.task {
        Task::Cop => "mm",
        Task::Toi => "ms",
    };
    // Domain endpoints: FH per task, velocities from the reported ranges,
    // COP truth from the observed quartiles (the paper's footnote).
    let mut cop_truths: Vec<f64> = records.iter().map(|r| r.cop_truth_mm).collect();
    cop_truths.sort_by(|a, b| a.partial_cmp(b).expect("finite"));
    let q = |p: f64| stride_core::eval::quantile_sorted(&cop_truths, p);
    let fh_hi = match args.task {
        Task::Cop => 250.0,
        Task::Toi => args.fh_split_ms,
    };
    let domains: Vec<(&str, f64, f64)> = vec![
        ("fh_ms", 1000.0 / 60.0, fh_hi),
        ("torso_vel", 1000.0, 1500.0),
        ("toe_vel", 3000.0, 5000.0),
        ("cop_truth_mm", q(0.25), q(0.75)),
    ];

    let mut fit_csv = format!(
        "# manifest: {hash}\npredictor,domain_lo,domain_hi,effect_initial_{unit},p_initial,effect_final_{unit},p_final,dropped\n"
    );
    let b0 = intercept_effect(&initial_fit)?;
    let b0_final = intercept_effect(&out.final_fit)?;
    fit_csv.push_str(&format!(",,,{b0},,{b0_final},,false\n"));
    // Rewrite the intercept row with its name for readability.
    let mut fit_csv = fit_csv.replace("\n,,,", "\nintercept,,,");
    for (name, lo, hi) in &domains {
        let initial_effect = effect_across_domain(&initial_fit, name, (*lo, *hi))?;
        let p_initial = out
            .initial_tests
            .iter()
            .find(|t| &t.name == name)
            .map(|t| t.p_value);
        let dropped = out.dropped.contains(&name.to_string());
        let (final_effect, p_final) = if dropped {
            (None, None)
        } else {
            (
                Some(effect_across_domain(&out.final_fit, name, (*lo, *hi))?),
                out.final_tests
                    .iter()
                    .find(|t| &t.name == name)
                    .map(|t| t.p_value),
            )
        };
        fit_csv.push_str(&format!(
            "{},{},{},{},{},{},{},{}\n",
            name,
            lo,
            hi,
            initial_effect,
            p_initial.map(|p| p.to_string()).unwrap_or_default(),
            final_effect.map(|e| e.to_string()).unwrap_or_default(),
            p_final.map(|p| p.to_string()).unwrap_or_default(),
            dropped
        ));
    }

    let mut random_csv = format!("# manifest: {hash}\nquantity,initial,final\n");
    let sds_i = initial_fit.random_sds();
    let sds_f = out.final_fit.random_sds();
    random_csv.push_str(&format!("random_intercept_sd_{unit},{},{}\n", sds_i[0], sds_f[0]));
    if sds_i.len() > 1 {
        random_csv.push_str(&format!("random_fh_slope_sd,{},{}\n", sds_i[1], sds_f[1]));
    }
    random_csv.push_str(&format!(
        "random_correlation,{},{}\n",
        initial_fit.random_correlation().unwrap_or(f64::NAN),
        out.final_fit.random_correlation().unwrap_or(f64::NAN)
    ));
    random_csv.push_str(&format!("sigma_e,{},{}\n", initial_fit.sigma2_e.sqrt(), out.final_fit.sigma2_e.sqrt()));

    let mut diag_csv = format!("# manifest: {hash}\ncheck,statistic,p_value,note\n");
    diag_csv.push_str(&format!(
        "breusch_pagan_raw_response,,{bp_raw_p},{}\n",
        if recommend {
            "heteroscedastic; cube-root transform recommended and applied"
        } else {
            "homoscedastic on raw scale"
        }
    ));
    diag_csv.push_str(&format!("breusch_pagan,{},{},on transformed fit\n", diag.bp_stat, diag.bp_p));
    diag_csv.push_str(&format!("jarque_bera,{},{},on conditional residuals\n", diag.jb_stat, diag.jb_p));
    for l in &diag.linearity {
        diag_csv.push_str(&format!(
            "linearity_{},{},{},LRT of added squared term\n",
            l.name, l.deviance_delta, l.p_value
        ));
    }
    diag_csv.push_str(&format!(
        "convergence,,,converged={} evals={} reml_deviance={} ml_deviance={}\n",
        out.final_fit.converged,
        out.final_fit.n_evals,
        out.final_fit.deviance_reml,
        out.final_fit.deviance_ml
    ));
    diag_csv.push_str(
        "significance_method,,,ML likelihood-ratio tests (paper used lmerTest t-tests)\n",
    );
    diag_csv.push_str(&format!("dropped,,,{}\n", out.dropped.join("+")));

    let mut outputs = Vec::new();
    for (name, text) in [
        (format!("lmm_fit_{}.csv", args.task.name()), &fit_csv),
        (format!("lmm_random_effects_{}.csv", args.task.name()), &random_csv),
        (format!("lmm_diagnostics_{}.csv", args.task.name()), &diag_csv),
    ] {
        let path = args.out.join(name);
        write_text(&path, text)?;
        manifest.output(&path)?;
        outputs.push(path);
    }
    manifest.write(&args.out)?;
    eprintln!(
        "lmm {}: dropped [{}], intercept {:.2} {unit}",
        args.task.name(),
        out.dropped.join(", "),
        b0_final
    );
    Ok(outputs)
}

// --- livesim ------------------------------------------------------------------

pub struct LivesimArgs {
    pub cop: PathBuf,
    pub toi: PathBuf,
    pub duration_s: f64,
    pub repeats: usize,
    pub mode: StreamMode,
    pub seed: u64,
    pub out: PathBuf,
}

pub fn cmd_livesim(args: &LivesimArgs) -> Result<PathBuf> {
    ensure_out_dir(&args.out)?;
    let mut manifest = RunManifest::new("livesim");
    manifest
        .config("duration_s", args.duration_s)
        .config("repeats", args.repeats)
        .config(
            "mode",
            match args.mode {
                StreamMode::Windowed => "windowed",
                StreamMode::Continuous => "continuous",
            },
        )
        .seed(args.seed);
    manifest.input(&args.cop)?;
    manifest.input(&args.toi)?;
    let hash = manifest.seal();
    let cop = wio::load_weights(&args.cop)?;
    let toi = wio::load_weights(&args.toi)?;
    let config = LivesimConfig {
        duration_s: args.duration_s,
        repeats: args.repeats,
        mode: args.mode,
        seed: args.seed,
        throttle: None,
    };
    let reports = run_livesim(&cop, &toi, &config)?;
    let mut text = format!(
        "# manifest: {hash}\ntrial,duration_s,frames_processed,frames_dropped,effective_fps,predictions,p50_ms,p99_ms,max_ms,mode,models\n"
    );
    for r in &reports {
        text.push_str(&format!(
            "{},{:.6},{},{},{:.4},{},{:.4},{:.4},{:.4},{},{}\n",
            r.trial,
            r.duration_s,
            r.frames_processed,
            r.frames_dropped,
            r.effective_fps,
            r.predictions,
            r.p50_ms,
            r.p99_ms,
            r.max_ms,
            r.mode,
            r.models
        ));
        eprintln!(
            "livesim run {}: {:.3} fps, {} frames, {} dropped, p99 {:.2} ms",
            r.trial, r.effective_fps, r.frames_processed, r.frames_dropped, r.p99_ms
        );
    }
    let path = args.out.join("fps_report.csv");
    write_text(&path, &text)?;
    manifest.output(&path)?;
    manifest.write(&args.out)?;
    Ok(path)
}

// --- plots --------------------------------------------------------------------

pub struct PlotsArgs {
    pub records: PathBuf,
    pub seed: u64,
    pub bootstrap: usize,
    pub out: PathBuf,
}

pub fn cmd_plots(args: &PlotsArgs) -> Result<Vec<PathBuf>> {
    ensure_out_dir(&args.out)?;
    let mut manifest = RunManifest::new("plots");
    manifest.config("bootstrap", args.bootstrap).seed(args.seed);
    manifest.input(&args.records)?;
    let hash = manifest.seal();
    let records = read_records(&args.records)?;
    if records.is_empty() {
        eprintln!(
            "warning: {} contains no records; emitting empty-axes figures",
            args.records.display()
        );
    }
    let mut outputs = Vec::new();
    let mut emit = |name: String, svg: String, manifest: &mut RunManifest| -> Result<()> {
        let path = args.out.join(name);
        write_text(&path, &svg)?;
        manifest.output(&path)?;
        outputs.push(path);
        Ok(())
    };

    for task in [Task::Cop, Task::Toi] {
        let recs = task_records(&records, task);
        let unit = match task {
            Task::Cop => "mm",
            Task::Toi => "ms",
        };
        if recs.is_empty() && !records.is_empty() {
            continue;
        }
        // MAE-FH curve with bootstrap CI shading.
        let mae = mae_by_fh(&recs);
        let mut pts = Vec::new();
        let mut band = Vec::new();
        for p in &mae.points {
            if let Some(v) = p.value {
                let errs: Vec<f64> = recs
                    .iter()
                    .filter(|r| r.fh_frames == p.fh_frames)
                    .map(|r| r.abs_error)
                    .collect();
                let (lo, hi) =
                    bootstrap_mean_ci(&errs, args.bootstrap, 0.95, args.seed).unwrap_or((v, v));
                pts.push((p.fh_ms, v));
                band.push((p.fh_ms, lo, hi));
            }
        }
        let y_hi = band.iter().map(|b| b.2).fold(1.0f64, f64::max);
        let mut svg = Svg::new(
            Frame::new(0.0, 260.0, 0.0, y_hi * 1.15),
            &format!("Group MAE vs forecast horizon ({})", task.name()),
            "forecast horizon (ms)",
            &format!("MAE ({unit})"),
        );
        svg.band(&band, "#7aa7d9");
        svg.polyline(&pts, "#14518a", None);
        svg.markers(&pts, "#14518a");
        emit(format!("mae_fh_{}.svg", task.name()), svg.finish(&hash), &mut manifest)?;

        // Prediction vs truth and residual-vs-truth at FH = 100 ms (k = 6).
        let bucket: Vec<&ForecastRecord> = recs.iter().filter(|r| r.fh_frames == 6).collect();
        let scatter: Vec<(f64, f64)> = bucket.iter().map(|r| (r.truth, r.prediction)).collect();
        let lims = scatter
            .iter()
            .flat_map(|(a, b)| [*a, *b])
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), v| {
                (lo.min(v), hi.max(v))
            });
        let (lo, hi) = if scatter.is_empty() { (0.0, 1.0) } else { lims };
        let mut svg = Svg::new(
            Frame::new(lo, hi, lo, hi),
            &format!("Prediction vs ground truth at FH 100 ms ({})", task.name()),
            &format!("ground truth ({unit})"),
            &format!("prediction ({unit})"),
        );
        svg.fit_line(1.0, 0.0, "#999999");
        svg.dots(&scatter, "#b3402a");
        emit(
            format!("pred_vs_truth_{}_fh100.svg", task.name()),
            svg.finish(&hash),
            &mut manifest,
        )?;

        let rs: Vec<f64> = bucket.iter().map(|r| r.truth - r.prediction).collect();
        let truths: Vec<f64> = bucket.iter().map(|r| r.truth).collect();
        let resid_pts: Vec<(f64, f64)> = truths.iter().copied().zip(rs.iter().copied()).collect();
        let (rlo, rhi) = rs
            .iter()
            .fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        let mut svg = Svg::new(
            Frame::new(lo, hi, rlo, rhi),
            &format!("Residuals vs ground truth at FH 100 ms ({})", task.name()),
            &format!("ground truth ({unit})"),
            &format!("residual ({unit})"),
        );
        if let Ok(fit) = residual_regression(&rs, &truths) {
            svg.fit_line(fit.slope, fit.intercept, "#14518a");
            svg.note(
                MARGIN_NOTE_X,
                MARGIN_NOTE_Y,
                &format!("slope {:.4}, R^2 {:.3}", fit.slope, fit.r_squared),
            );
        }
        svg.dots(&resid_pts, "#b3402a");
        emit(
            format!("residuals_{}_fh100.svg", task.name()),
            svg.finish(&hash),
            &mut manifest,
        )?;

        // Residual boxplots over the horizon grid.
        let all_res = residuals(&recs);
        let (blo, bhi) = all_res
            .iter()
            .fold((0.0f64, 0.0f64), |(lo, hi), v| (lo.min(*v), hi.max(*v)));
        let mut svg = Svg::new(
            Frame::new(0.0, 260.0, blo * 1.1 - 1.0, bhi * 1.1 + 1.0),
            &format!("Residuals by forecast horizon ({})", task.name()),
            "forecast horizon (ms)",
            &format!("residual ({unit})"),
        );
        for k in 1..=15u32 {
            let vals: Vec<f64> = recs
                .iter()
                .filter(|r| r.fh_frames == k)
                .map(|r| r.truth - r.prediction)
                .collect();
            if let Ok(stats) = boxplot_stats(&vals) {
                svg.boxplot(k as f64 * 1000.0 / 60.0, 5.5, &stats);
            }
        }
        emit(format!("resid_box_{}.svg", task.name()), svg.finish(&hash), &mut manifest)?;

        // Mean fTOI curves per subject against the idealized line.
        if task == Task::Toi {
            let mut svg = Svg::new(
                Frame::new(0.0, 260.0, 0.0, 260.0),
                "Mean fTOI vs forecast horizon",
                "forecast horizon (ms)",
                "mean fTOI (ms)",
            );
            svg.fit_line(1.0, 0.0, "#999999");
            let mut subjects: Vec<u16> = recs.iter().map(|r| r.subject).collect();
            subjects.sort_unstable();
            subjects.dedup();
            for s in subjects {
                let sub: Vec<ForecastRecord> =
                    recs.iter().filter(|r| r.subject == s).cloned().collect();
                let curve = mean_ftoi_curve(&sub);
                let pts: Vec<(f64, f64)> = curve
                    .points
                    .iter()
                    .filter_map(|p| p.value.map(|v| (p.fh_ms, v)))
                    .collect();
                svg.polyline(&pts, "#2a7a4b", None);
            }
            emit("ftoi_mean.svg".to_string(), svg.finish(&hash), &mut manifest)?;
        }
    }
    manifest.write(&args.out)?;
    eprintln!("plots: {} figures -> {}", outputs.len(), args.out.display());
    Ok(outputs)
}

const MARGIN_NOTE_X: f64 = 80.0;
const MARGIN_NOTE_Y: f64 = 56.0;
