//! Base-model pretraining, the fine-tuning protocol (lr/10, 250 epochs,
//! constant 15-frame context, loss over the last 250 ms), and the
//! cross-validation harness emitting [`ForecastRecord`]s.

mod records;

pub use records::{read_records, write_records, ForecastRecord};

use rayon::prelude::*;
use thiserror::Error;

use crate::datagen::{self, cop_to_mm, normalize_frame, Dataset, Trial, FPS};
use crate::model::{ForecasterConfig, ForecasterModel, Task};
use crate::numerics::{AdamError, AdamState, Real, RngState, ShapeError, Tensor};

#[derive(Debug, Error)]
pub enum TrainError {
    #[error("no training trials supplied")]
    EmptyTrainingSet,
    #[error("model task {model} does not match config task {config}")]
    TaskMismatch { model: &'static str, config: &'static str },
    #[error("trial impact index {impact} leaves no full 15-frame context for every horizon")]
    TrialTooShort { impact: usize },
    #[error("cross-validation needs >= 2 trials, got {0}")]
    NotEnoughTrials(usize),
    #[error("fold count {folds} invalid for {trials} trials")]
    BadFoldCount { folds: usize, trials: usize },
    #[error(transparent)]
    Shape(#[from] ShapeError),
    #[error(transparent)]
    Adam(#[from] AdamError),
    #[error(transparent)]
    Datagen(#[from] datagen::DatagenError),
}

/// Training hyper-parameters. The fine-tune learning rate is pinned to
/// pretrain_lr / 10 and fine-tuning runs 250 epochs unless overridden.
#[derive(Debug, Clone)]
pub struct TrainConfig {
    pub task: Task,
    pub pretrain_lr: f64,
    pub pretrain_epochs: usize,
    pub finetune_epochs: usize,
    pub seed: u64,
    /// Clamp COP predictions to [-0.5, 0.5] at reporting time.
    pub clamp_cop: bool,
}

impl TrainConfig {
    pub fn new(task: Task, seed: u64) -> Self {
        TrainConfig {
            task,
            pretrain_lr: 1e-3,
            pretrain_epochs: 100,
            finetune_epochs: 250,
            seed,
            clamp_cop: false,
        }
    }

    /// Fine-tuning always runs at a tenth of the pretraining rate.
    pub fn finetune_lr(&self) -> f64 {
        self.pretrain_lr / 10.0
    }
}

/// The 15 forecast horizons, in frames.
pub const HORIZONS: std::ops::RangeInclusive<usize> = 1..=15;
pub const WINDOW: usize = 15;

fn target(task: Task, trial: &Trial, k: usize) -> f64 {
    match task {
        Task::Cop => trial.cop_norm as f64,
        Task::Toi => k as f64 / FPS,
    }
}

fn check_context(trial: &Trial) -> Result<usize, TrainError> {
    let impact = trial.impact_idx as usize;
    // Horizon 15 needs frames impact-29 .. impact-15.
    if impact < 2 * WINDOW - 1 {
        return Err(TrainError::TrialTooShort { impact });
    }
    Ok(impact)
}

/// Mean squared error over the 15 horizon windows of one trial: for each
/// k in [1, 15] the model sees the 15 normalized frames ending at frame
/// impact-k and its final scalar is compared against the task target (the
/// normalized COP, or k/60 seconds).
pub fn window_loss<R: Real>(
    model: &ForecasterModel<R>,
    trial: &Trial,
    task: Task,
) -> Result<f64, TrainError> {
    let impact = check_context(trial)?;
    let first = impact - (2 * WINDOW - 1);
    let latents: Vec<Tensor<R>> = (0..2 * WINDOW - 1)
        .map(|i| {
            let frame = normalize_frame::<R>(trial.frame_bytes(first + i));
            model.encode_frame(&frame)
        })
        .collect::<Result<_, _>>()?;
    let mut loss = 0.0;
    for k in HORIZONS {
        let window = &latents[WINDOW - k..2 * WINDOW - k];
        let outputs = model.forecast_window(window)?;
        let err = outputs.last().expect("window outputs").to_f64() - target(task, trial, k);
        loss += err * err;
    }
    Ok(loss / WINDOW as f64)
}

/// [`window_loss`] plus parameter gradients accumulated over all 15 windows.
/// Latents are encoded once per unique frame and their gradients summed
/// across the overlapping windows before the convolutional backward pass.
pub fn window_loss_with_grads<R: Real>(
    model: &ForecasterModel<R>,
    trial: &Trial,
    task: Task,
) -> Result<(f64, ForecasterModel<R>), TrainError> {
    let impact = check_context(trial)?;
    let first = impact - (2 * WINDOW - 1);
    let n_frames = 2 * WINDOW - 1;
    let mut latents = Vec::with_capacity(n_frames);
    let mut tapes = Vec::with_capacity(n_frames);
    for i in 0..n_frames {
        let frame = normalize_frame::<R>(trial.frame_bytes(first + i));
        let (latent, tape) = model.encode_frame_with_tape(&frame)?;
        latents.push(latent);
        tapes.push(tape);
    }
    let mut grads = ForecasterModel::zeros(model.config.clone());
    let mut latent_grads: Vec<Tensor<R>> =
        vec![Tensor::zeros(&[model.config.latent_len()]); n_frames];
    let mut loss = 0.0;
    for k in HORIZONS {
        let lo = WINDOW - k;
        let window = &latents[lo..lo + WINDOW];
        let tape = model.forecast_window_with_tape(window)?;
        let err =
            tape.outputs.last().expect("window outputs").to_f64() - target(task, trial, k);
        loss += err * err;
        // Loss touches only the window's final scalar.
        let mut grad_outputs = vec![R::ZERO; WINDOW];
        grad_outputs[WINDOW - 1] = R::from_f64(2.0 * err / WINDOW as f64);
        let window_latent_grads = model.rnn_backward(window, &tape, &grad_outputs, &mut grads);
        for (i, g) in window_latent_grads.into_iter().enumerate() {
            let dst = latent_grads[lo + i].data_mut();
            for (d, &s) in dst.iter_mut().zip(g.data()) {
                *d += s;
            }
        }
    }
    for (tape, g_latent) in tapes.iter().zip(&latent_grads) {
        model.cnn_backward(tape, g_latent, &mut grads)?;
    }
    Ok((loss / WINDOW as f64, grads))
}

/// Variable-context loss used for base-model pretraining: the recurrent
/// state runs from the clip start, and the same 15 pre-impact targets are
/// scored at their frames (a forecast at frame t sees all frames <= t).
pub fn static_loss_with_grads<R: Real>(
    model: &ForecasterModel<R>,
    trial: &Trial,
    task: Task,
    with_grads: bool,
) -> Result<(f64, Option<ForecasterModel<R>>), TrainError> {
    let impact = check_context(trial)?;
    let n_frames = impact; // frames 0 .. impact-1
    let mut latents = Vec::with_capacity(n_frames);
    let mut tapes = Vec::with_capacity(if with_grads { n_frames } else { 0 });
    for t in 0..n_frames {
        let frame = normalize_frame::<R>(trial.frame_bytes(t));
        if with_grads {
            let (latent, tape) = model.encode_frame_with_tape(&frame)?;
            latents.push(latent);
            tapes.push(tape);
        } else {
            latents.push(model.encode_frame(&frame)?);
        }
    }
    let tape = model.forecast_sequence_with_tape(&latents)?;
    let mut loss = 0.0;
    let mut grad_outputs = vec![R::ZERO; n_frames];
    for k in HORIZONS {
        let t = impact - k;
        let err = tape.outputs[t].to_f64() - target(task, trial, k);
        loss += err * err;
        grad_outputs[t] = R::from_f64(2.0 * err / WINDOW as f64);
    }
    loss /= WINDOW as f64;
    if !with_grads {
        return Ok((loss, None));
    }
    let mut grads = ForecasterModel::zeros(model.config.clone());
    let latent_grads = model.rnn_backward(&latents, &tape, &grad_outputs, &mut grads);
    for (tape, g_latent) in tapes.iter().zip(&latent_grads) {
        model.cnn_backward(tape, g_latent, &mut grads)?;
    }
    Ok((loss, Some(grads)))
}

fn adam_update(
    model: &mut ForecasterModel<f32>,
    state: &mut AdamState<f32>,
    grads: &ForecasterModel<f32>,
    lr: f64,
) -> Result<(), TrainError> {
    let gs = grads.params();
    let mut ps = model.params_mut();
    state.step(&mut ps, &gs, lr)?;
    Ok(())
}

/// Training curve plus the final model.
#[derive(Debug)]
pub struct TrainOutcome {
    pub model: ForecasterModel<f32>,
    /// Mean per-step loss of each epoch, preceded by the untrained loss at
    /// index 0.
    pub epoch_losses: Vec<f64>,
}

/// Train a base model from seeded initialization on 100-frame clips using
/// the variable-context scheme.
pub fn pretrain(base: &Dataset, config: &TrainConfig) -> Result<TrainOutcome, TrainError> {
    if base.trials.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    let mut model = ForecasterModel::<f32>::init_random(
        ForecasterConfig::default_for(config.task),
        RngState::new(config.seed).derive(0x1417).next_u64(),
    );
    let mut adam = AdamState::new(&model.params());
    let mut epoch_losses = Vec::with_capacity(config.pretrain_epochs + 1);
    // Epoch 0: the untrained model's mean loss.
    let initial: f64 = base
        .trials
        .iter()
        .map(|t| static_loss_with_grads(&model, t, config.task, false).map(|(l, _)| l))
        .sum::<Result<f64, _>>()?
        / base.trials.len() as f64;
    epoch_losses.push(initial);
    let mut order: Vec<usize> = (0..base.trials.len()).collect();
    for epoch in 0..config.pretrain_epochs {
        let mut rng = RngState::new(config.seed).derive(0xe90c ^ epoch as u64);
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let (loss, grads) =
                static_loss_with_grads(&model, &base.trials[i], config.task, true)?;
            adam_update(
                &mut model,
                &mut adam,
                &grads.expect("grads requested"),
                config.pretrain_lr,
            )?;
            epoch_loss += loss;
        }
        epoch_losses.push(epoch_loss / base.trials.len() as f64);
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
    })
}

/// Fine-tune a base model: constant 15-frame contexts, one Adam step per
/// trial, seeded shuffling per epoch, learning rate = pretrain rate / 10.
/// The base model is copied, never mutated.
pub fn finetune(
    base: &ForecasterModel<f32>,
    trials: &[&Trial],
    config: &TrainConfig,
) -> Result<TrainOutcome, TrainError> {
    if trials.is_empty() {
        return Err(TrainError::EmptyTrainingSet);
    }
    if base.config.task != config.task {
        return Err(TrainError::TaskMismatch {
            model: base.config.task.name(),
            config: config.task.name(),
        });
    }
    let mut model = base.clone();
    let mut adam = AdamState::new(&model.params());
    let lr = config.finetune_lr();
    let mut epoch_losses = Vec::with_capacity(config.finetune_epochs + 1);
    let initial: f64 = trials
        .iter()
        .map(|t| window_loss(&model, t, config.task))
        .sum::<Result<f64, _>>()?
        / trials.len() as f64;
    epoch_losses.push(initial);
    let mut order: Vec<usize> = (0..trials.len()).collect();
    for epoch in 0..config.finetune_epochs {
        let mut rng = RngState::new(config.seed).derive(0xf17e ^ epoch as u64);
        rng.shuffle(&mut order);
        let mut epoch_loss = 0.0;
        for &i in &order {
            let (loss, grads) = window_loss_with_grads(&model, trials[i], config.task)?;
            adam_update(&mut model, &mut adam, &grads, lr)?;
            epoch_loss += loss;
        }
        epoch_losses.push(epoch_loss / trials.len() as f64);
    }
    Ok(TrainOutcome {
        model,
        epoch_losses,
    })
}

/// Anything that can forecast a trial at a given horizon, in model units
/// (normalized COP, or seconds to impact). Lets the cross-validation
/// plumbing be exercised with oracle predictors in tests.
pub trait TrialPredictor {
    fn predict(&self, trial: &Trial, k: usize) -> Result<f64, TrainError>;
}

/// The real predictor: encode the 15 frames ending at impact-k and take the
/// window's final scalar.
pub struct ModelPredictor<'a>(pub &'a ForecasterModel<f32>);

impl TrialPredictor for ModelPredictor<'_> {
    fn predict(&self, trial: &Trial, k: usize) -> Result<f64, TrainError> {
        let impact = check_context(trial)?;
        let latents: Vec<Tensor<f32>> = (0..WINDOW)
            .map(|i| {
                let t = impact - k - (WINDOW - 1) + i;
                let frame = normalize_frame::<f32>(trial.frame_bytes(t));
                self.0.encode_frame(&frame)
            })
            .collect::<Result<_, _>>()?;
        let outputs = self.0.forecast_window(&latents)?;
        Ok(*outputs.last().expect("window outputs") as f64)
    }
}

/// Cross-validation fold plan.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum FoldPlan {
    /// One fold per trial (the paper's protocol).
    LeaveOneOut,
    /// K folds over the subject's trials; an approximation for desk-scale
    /// runs (folds < trials means held-out trials share a fine-tuned model).
    KFold(usize),
}

fn fold_partition(n: usize, plan: FoldPlan) -> Result<Vec<Vec<usize>>, TrainError> {
    match plan {
        FoldPlan::LeaveOneOut => Ok((0..n).map(|i| vec![i]).collect()),
        FoldPlan::KFold(k) => {
            if k < 2 || k > n {
                return Err(TrainError::BadFoldCount { folds: k, trials: n });
            }
            let mut folds = vec![Vec::new(); k];
            for i in 0..n {
                folds[i % k].push(i);
            }
            Ok(folds)
        }
    }
}

/// Emit the 15 per-horizon records for one held-out trial, converting to
/// reporting units (COP -> mm over the subject's insole, TOI -> ms).
fn records_for_trial<P: TrialPredictor>(
    predictor: &P,
    trial: &Trial,
    trial_idx: usize,
    insole_len_mm: f64,
    config: &TrainConfig,
) -> Result<Vec<ForecastRecord>, TrainError> {
    let mut out = Vec::with_capacity(WINDOW);
    let cop_truth_mm = cop_to_mm(trial.cop_norm as f64, insole_len_mm)?;
    for k in HORIZONS {
        let raw = predictor.predict(trial, k)?;
        let (prediction, truth) = match config.task {
            Task::Cop => {
                let y = if config.clamp_cop { raw.clamp(-0.5, 0.5) } else { raw };
                ((y + 0.5) * insole_len_mm, cop_truth_mm)
            }
            Task::Toi => (raw * 1000.0, k as f64 / FPS * 1000.0),
        };
        out.push(ForecastRecord {
            subject: trial.subject_id,
            trial: trial_idx,
            task: config.task,
            fh_frames: k as u32,
            fh_ms: k as f64 * (1000.0 / FPS),
            prediction,
            truth,
            abs_error: (truth - prediction).abs(),
            torso_vel: trial.torso_velocity as f64,
            toe_vel: trial.toe_velocity as f64,
            cop_truth_mm,
        });
    }
    Ok(out)
}

/// Cross-validate one subject with an arbitrary per-fold trainer; the
/// trainer maps a training set to a predictor. Folds run in parallel and
/// records are merged in fold order.
pub fn cross_validate_with<P, F>(
    dataset: &Dataset,
    subject: u16,
    plan: FoldPlan,
    config: &TrainConfig,
    trainer: F,
) -> Result<Vec<ForecastRecord>, TrainError>
where
    P: TrialPredictor + Send,
    F: Fn(&[&Trial]) -> Result<P, TrainError> + Sync,
{
    let idxs = dataset.trial_indices(subject);
    if idxs.len() < 2 {
        return Err(TrainError::NotEnoughTrials(idxs.len()));
    }
    let insole = dataset
        .profile(subject)
        .map(|p| p.insole_len_mm as f64)
        .unwrap_or(263.2);
    let folds = fold_partition(idxs.len(), plan)?;
    let fold_records: Vec<Result<Vec<ForecastRecord>, TrainError>> = folds
        .par_iter()
        .map(|held_out| {
            let train: Vec<&Trial> = idxs
                .iter()
                .enumerate()
                .filter(|(pos, _)| !held_out.contains(pos))
                .map(|(_, &i)| &dataset.trials[i])
                .collect();
            let predictor = trainer(&train)?;
            let mut records = Vec::with_capacity(held_out.len() * WINDOW);
            for &pos in held_out {
                let trial_idx = idxs[pos];
                records.extend(records_for_trial(
                    &predictor,
                    &dataset.trials[trial_idx],
                    trial_idx,
                    insole,
                    config,
                )?);
            }
            Ok(records)
        })
        .collect();
    let mut out = Vec::with_capacity(idxs.len() * WINDOW);
    for r in fold_records {
        out.extend(r?);
    }
    Ok(out)
}

/// Owns its model so folds can run in parallel.
pub struct OwnedModelPredictor(pub ForecasterModel<f32>);

impl TrialPredictor for OwnedModelPredictor {
    fn predict(&self, trial: &Trial, k: usize) -> Result<f64, TrainError> {
        ModelPredictor(&self.0).predict(trial, k)
    }
}

/// Leave-one-out (or k-fold) cross-validation of one subject: each fold
/// fine-tunes a copy of the base model on the remaining trials and forecasts
/// the held-out trials at all 15 horizons.
pub fn loocv(
    base: &ForecasterModel<f32>,
    dataset: &Dataset,
    subject: u16,
    plan: FoldPlan,
    config: &TrainConfig,
) -> Result<Vec<ForecastRecord>, TrainError> {
    cross_validate_with(dataset, subject, plan, config, |train| {
        let outcome = finetune(base, train, config)?;
        Ok(OwnedModelPredictor(outcome.model))
    })
}
