//! The fixed CNN-RNN forecaster: per-frame convolutional encoder, two
//! serially stacked tanh recurrent blocks with a parameter-free mean readout,
//! windowed/continuous streaming, and the tape-based backward pass.

pub mod io;

use std::collections::VecDeque;

use crate::numerics::ops::{
    conv2d_same, conv2d_same_backward, maxpool2, maxpool2_backward, outer_add, relu6_backward,
    rnn_step, rnn_step_backward,
};
use crate::numerics::{Real, RngState, ShapeError, Tensor};

/// Which quantity a model forecasts.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Task {
    Cop,
    Toi,
}

impl Task {
    pub fn name(self) -> &'static str {
        match self {
            Task::Cop => "cop",
            Task::Toi => "toi",
        }
    }
}

impl std::str::FromStr for Task {
    type Err = String;
    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s {
            "cop" => Ok(Task::Cop),
            "toi" => Ok(Task::Toi),
            other => Err(format!("unknown task '{other}' (expected cop or toi)")),
        }
    }
}

/// Architecture description. Three conv blocks of three 3x3 convolutions
/// each (ReLU6 activations, 2x2 max pool per block), then two recurrent
/// blocks; the scalar readout is the parameter-free mean of the second
/// hidden state.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ForecasterConfig {
    pub task: Task,
    pub input_channels: usize,
    pub input_height: usize,
    pub input_width: usize,
    /// Output channel width of each block; expansion happens at the first
    /// conv of a block.
    pub block_channels: [usize; 3],
    pub rnn1_hidden: usize,
    pub rnn2_hidden: usize,
    /// Context window length in frames.
    pub window: usize,
}

impl ForecasterConfig {
    /// The deployed geometry: 2x25x50 stereo input, 2->12->32->32 channel
    /// plan, hidden sizes 52 and 19, 15-frame (250 ms) context.
    pub fn default_for(task: Task) -> Self {
        ForecasterConfig {
            task,
            input_channels: 2,
            input_height: 25,
            input_width: 50,
            block_channels: [12, 32, 32],
            rnn1_hidden: 52,
            rnn2_hidden: 19,
            window: 15,
        }
    }

    /// Channel widths (cin, cout) of the nine convolutions in order.
    pub fn conv_plan(&self) -> [(usize, usize); 9] {
        let [c1, c2, c3] = self.block_channels;
        [
            (self.input_channels, c1),
            (c1, c1),
            (c1, c1),
            (c1, c2),
            (c2, c2),
            (c2, c2),
            (c2, c3),
            (c3, c3),
            (c3, c3),
        ]
    }

    /// Spatial extent after the three pooling stages (floor semantics).
    pub fn pooled_hw(&self) -> (usize, usize) {
        let mut h = self.input_height;
        let mut w = self.input_width;
        for _ in 0..3 {
            h /= 2;
            w /= 2;
        }
        (h, w)
    }

    /// Length of the flattened CNN feature vector.
    pub fn latent_len(&self) -> usize {
        let (h, w) = self.pooled_hw();
        self.block_channels[2] * h * w
    }

    /// Analytic trainable-parameter count of the convolutional stage.
    pub fn cnn_param_count(&self) -> usize {
        self.conv_plan()
            .iter()
            .map(|&(cin, cout)| 9 * cin * cout + cout)
            .sum()
    }

    /// Analytic trainable-parameter count of the recurrent stage. Each block
    /// carries an input matrix, a recurrent matrix, and two bias vectors.
    pub fn rnn_param_count(&self) -> usize {
        let n = self.latent_len();
        let (h1, h2) = (self.rnn1_hidden, self.rnn2_hidden);
        (n * h1 + h1 * h1 + 2 * h1) + (h1 * h2 + h2 * h2 + 2 * h2)
    }

    /// Total analytic parameter count.
    pub fn param_count(&self) -> usize {
        self.cnn_param_count() + self.rnn_param_count()
    }
}

/// One convolution's parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvLayer<R: Real> {
    pub kernels: Tensor<R>,
    pub bias: Tensor<R>,
}

/// One recurrent block's parameters (dual-bias tanh cell).
#[derive(Debug, Clone, PartialEq)]
pub struct RnnBlock<R: Real> {
    pub w_in: Tensor<R>,
    pub w_rec: Tensor<R>,
    pub b_in: Tensor<R>,
    pub b_rec: Tensor<R>,
}

/// The forecaster's full parameter set.
#[derive(Debug, Clone, PartialEq)]
pub struct ForecasterModel<R: Real> {
    pub config: ForecasterConfig,
    pub convs: Vec<ConvLayer<R>>,
    pub rnn1: RnnBlock<R>,
    pub rnn2: RnnBlock<R>,
}

impl<R: Real> ForecasterModel<R> {
    /// All-zero parameters (useful as a gradient accumulator and in tests).
    pub fn zeros(config: ForecasterConfig) -> Self {
        let convs = config
            .conv_plan()
            .iter()
            .map(|&(cin, cout)| ConvLayer {
                kernels: Tensor::zeros(&[cout, cin, 3, 3]),
                bias: Tensor::zeros(&[cout]),
            })
            .collect();
        let n = config.latent_len();
        let (h1, h2) = (config.rnn1_hidden, config.rnn2_hidden);
        ForecasterModel {
            convs,
            rnn1: RnnBlock {
                w_in: Tensor::zeros(&[h1, n]),
                w_rec: Tensor::zeros(&[h1, h1]),
                b_in: Tensor::zeros(&[h1]),
                b_rec: Tensor::zeros(&[h1]),
            },
            rnn2: RnnBlock {
                w_in: Tensor::zeros(&[h2, h1]),
                w_rec: Tensor::zeros(&[h2, h2]),
                b_in: Tensor::zeros(&[h2]),
                b_rec: Tensor::zeros(&[h2]),
            },
            config,
        }
    }

    /// Seeded initialization: He-style fan-in uniform for conv kernels,
    /// uniform +-1/sqrt(fan_in) for recurrent matrices, zero biases.
    /// Parameters are filled in canonical order from a single stream, so a
    /// seed pins every weight.
    pub fn init_random(config: ForecasterConfig, seed: u64) -> Self {
        let mut model = Self::zeros(config);
        let mut rng = RngState::new(seed).derive(0x1217);
        for conv in &mut model.convs {
            let cin = conv.kernels.shape()[1];
            let bound = (6.0 / (9 * cin) as f64).sqrt();
            for v in conv.kernels.data_mut() {
                *v = R::from_f64(rng.range_f64(-bound, bound));
            }
        }
        for rnn in [&mut model.rnn1, &mut model.rnn2] {
            for w in [&mut rnn.w_in, &mut rnn.w_rec] {
                let fan_in = w.shape()[1];
                let bound = 1.0 / (fan_in as f64).sqrt();
                for v in w.data_mut() {
                    *v = R::from_f64(rng.range_f64(-bound, bound));
                }
            }
        }
        model
    }

    /// Parameter tensors in canonical order (conv kernels/bias per layer in
    /// block order, then RNN1 and RNN2 matrices and biases).
    pub fn params(&self) -> Vec<&Tensor<R>> {
        let mut out = Vec::with_capacity(self.convs.len() * 2 + 8);
        for conv in &self.convs {
            out.push(&conv.kernels);
            out.push(&conv.bias);
        }
        for rnn in [&self.rnn1, &self.rnn2] {
            out.push(&rnn.w_in);
            out.push(&rnn.w_rec);
            out.push(&rnn.b_in);
            out.push(&rnn.b_rec);
        }
        out
    }

    pub fn params_mut(&mut self) -> Vec<&mut Tensor<R>> {
        let mut out = Vec::with_capacity(self.convs.len() * 2 + 8);
        for conv in &mut self.convs {
            out.push(&mut conv.kernels);
            out.push(&mut conv.bias);
        }
        for rnn in [&mut self.rnn1, &mut self.rnn2] {
            out.push(&mut rnn.w_in);
            out.push(&mut rnn.w_rec);
            out.push(&mut rnn.b_in);
            out.push(&mut rnn.b_rec);
        }
        out
    }

    /// Parameter count by walking the instantiated tensors.
    pub fn param_count_walk(&self) -> usize {
        self.params().iter().map(|t| t.len()).sum()
    }

    /// Convert parameters to another element type (for f64 check paths).
    pub fn cast<T: Real>(&self) -> ForecasterModel<T> {
        ForecasterModel {
            config: self.config.clone(),
            convs: self
                .convs
                .iter()
                .map(|c| ConvLayer {
                    kernels: c.kernels.cast(),
                    bias: c.bias.cast(),
                })
                .collect(),
            rnn1: RnnBlock {
                w_in: self.rnn1.w_in.cast(),
                w_rec: self.rnn1.w_rec.cast(),
                b_in: self.rnn1.b_in.cast(),
                b_rec: self.rnn1.b_rec.cast(),
            },
            rnn2: RnnBlock {
                w_in: self.rnn2.w_in.cast(),
                w_rec: self.rnn2.w_rec.cast(),
                b_in: self.rnn2.b_in.cast(),
                b_rec: self.rnn2.b_rec.cast(),
            },
        }
    }

    /// Encode one normalized frame to the flattened latent feature vector.
    pub fn encode_frame(&self, frame: &Tensor<R>) -> Result<Tensor<R>, ShapeError> {
        let (latent, _) = self.encode_inner(frame, false)?;
        Ok(latent)
    }

    /// Encode one frame while recording the activations needed by
    /// [`ForecasterModel::cnn_backward`].
    pub fn encode_frame_with_tape(
        &self,
        frame: &Tensor<R>,
    ) -> Result<(Tensor<R>, CnnTape<R>), ShapeError> {
        let (latent, tape) = self.encode_inner(frame, true)?;
        Ok((latent, tape.expect("tape requested")))
    }

    fn encode_inner(
        &self,
        frame: &Tensor<R>,
        with_tape: bool,
    ) -> Result<(Tensor<R>, Option<CnnTape<R>>), ShapeError> {
        let cfg = &self.config;
        frame.expect_shape(
            "encode_frame",
            &[cfg.input_channels, cfg.input_height, cfg.input_width],
        )?;
        let mut tape = if with_tape {
            Some(CnnTape {
                conv_inputs: Vec::with_capacity(9),
                conv_preacts: Vec::with_capacity(9),
                pool_argmax: Vec::with_capacity(3),
                pool_in_shapes: Vec::with_capacity(3),
            })
        } else {
            None
        };
        let mut x = frame.clone();
        for block in 0..3 {
            for conv_in_block in 0..3 {
                let conv = &self.convs[block * 3 + conv_in_block];
                let pre = conv2d_same(&x, &conv.kernels, &conv.bias)?;
                if let Some(t) = tape.as_mut() {
                    t.conv_inputs.push(x);
                    t.conv_preacts.push(pre.clone());
                }
                let mut act = pre;
                crate::numerics::ops::relu6_inplace(&mut act);
                x = act;
            }
            let (pooled, argmax) = maxpool2(&x)?;
            if let Some(t) = tape.as_mut() {
                t.pool_in_shapes.push([x.shape()[0], x.shape()[1], x.shape()[2]]);
                t.pool_argmax.push(argmax);
            }
            x = pooled;
        }
        let latent = Tensor::from_vec(&[cfg.latent_len()], x.into_data())?;
        Ok((latent, tape))
    }

    /// Run the two recurrent blocks over exactly `window` latents (oldest
    /// first) from zero initial hidden states. Returns the per-step scalar
    /// outputs; the last one is the forecast at the current frame.
    pub fn forecast_window(&self, latents: &[Tensor<R>]) -> Result<Vec<R>, ShapeError> {
        Ok(self.forecast_window_with_tape(latents)?.outputs)
    }

    /// As [`ForecasterModel::forecast_window`], recording hidden states for
    /// the backward pass.
    pub fn forecast_window_with_tape(
        &self,
        latents: &[Tensor<R>],
    ) -> Result<WindowTape<R>, ShapeError> {
        let cfg = &self.config;
        if latents.len() != cfg.window {
            return Err(ShapeError::Invalid {
                op: "forecast_window",
                msg: format!("expected {} latents, got {}", cfg.window, latents.len()),
            });
        }
        let n = cfg.latent_len();
        let mut h1 = Tensor::zeros(&[cfg.rnn1_hidden]);
        let mut h2 = Tensor::zeros(&[cfg.rnn2_hidden]);
        let mut tape = WindowTape {
            h1: Vec::with_capacity(cfg.window),
            h2: Vec::with_capacity(cfg.window),
            outputs: Vec::with_capacity(cfg.window),
        };
        for latent in latents {
            latent.expect_shape("forecast_window", &[n])?;
            h1 = rnn_step(
                latent,
                &h1,
                &self.rnn1.w_in,
                &self.rnn1.w_rec,
                &self.rnn1.b_in,
                &self.rnn1.b_rec,
            )?;
            h2 = rnn_step(
                &h1,
                &h2,
                &self.rnn2.w_in,
                &self.rnn2.w_rec,
                &self.rnn2.b_in,
                &self.rnn2.b_rec,
            )?;
            tape.outputs.push(mean(h2.data()));
            tape.h1.push(h1.clone());
            tape.h2.push(h2.clone());
        }
        Ok(tape)
    }

    /// Run the recurrent blocks over an arbitrary-length latent sequence
    /// from zero initial states (variable-context scheme used by base-model
    /// pretraining). Returns per-step outputs and the full hidden tape.
    pub fn forecast_sequence_with_tape(
        &self,
        latents: &[Tensor<R>],
    ) -> Result<WindowTape<R>, ShapeError> {
        let mut h1 = Tensor::zeros(&[self.config.rnn1_hidden]);
        let mut h2 = Tensor::zeros(&[self.config.rnn2_hidden]);
        let mut tape = WindowTape {
            h1: Vec::with_capacity(latents.len()),
            h2: Vec::with_capacity(latents.len()),
            outputs: Vec::with_capacity(latents.len()),
        };
        for latent in latents {
            h1 = rnn_step(
                latent,
                &h1,
                &self.rnn1.w_in,
                &self.rnn1.w_rec,
                &self.rnn1.b_in,
                &self.rnn1.b_rec,
            )?;
            h2 = rnn_step(
                &h1,
                &h2,
                &self.rnn2.w_in,
                &self.rnn2.w_rec,
                &self.rnn2.b_in,
                &self.rnn2.b_rec,
            )?;
            tape.outputs.push(mean(h2.data()));
            tape.h1.push(h1.clone());
            tape.h2.push(h2.clone());
        }
        Ok(tape)
    }

    /// Backpropagate through the recurrent stage given dL/d(output_t) for
    /// every step. Gradients accumulate into `grads`; returns dL/d(latent_t)
    /// for the convolutional backward. Gradient flows through the entire
    /// sequence (no truncation inside the window).
    pub fn rnn_backward(
        &self,
        latents: &[Tensor<R>],
        tape: &WindowTape<R>,
        grad_outputs: &[R],
        grads: &mut ForecasterModel<R>,
    ) -> Vec<Tensor<R>> {
        let steps = tape.outputs.len();
        debug_assert_eq!(grad_outputs.len(), steps);
        let h2_len = self.config.rnn2_hidden;
        let h1_len = self.config.rnn1_hidden;
        let mut grad_latents = vec![Tensor::zeros(&[self.config.latent_len()]); steps];
        let mut carry_h1 = vec![R::ZERO; h1_len];
        let mut carry_h2 = vec![R::ZERO; h2_len];
        let zero_h1 = Tensor::zeros(&[h1_len]);
        let zero_h2 = Tensor::zeros(&[h2_len]);
        for t in (0..steps).rev() {
            // d(mean)/dh2 spreads the output gradient uniformly.
            let g_per = grad_outputs[t] / R::from_f64(h2_len as f64);
            let mut gh2 = carry_h2.clone();
            for g in gh2.iter_mut() {
                *g += g_per;
            }
            let h2_prev = if t == 0 { &zero_h2 } else { &tape.h2[t - 1] };
            let h1_prev = if t == 0 { &zero_h1 } else { &tape.h1[t - 1] };
            let step2 = rnn_step_backward(&tape.h2[t], &gh2, &self.rnn2.w_in, &self.rnn2.w_rec);
            outer_add(grads.rnn2.w_in.data_mut(), &step2.dpre, tape.h1[t].data());
            outer_add(grads.rnn2.w_rec.data_mut(), &step2.dpre, h2_prev.data());
            add_assign(grads.rnn2.b_in.data_mut(), &step2.dpre);
            add_assign(grads.rnn2.b_rec.data_mut(), &step2.dpre);
            carry_h2 = step2.h_prev.into_data();

            let mut gh1 = step2.x.into_data();
            add_assign(&mut gh1, &carry_h1);
            let step1 = rnn_step_backward(&tape.h1[t], &gh1, &self.rnn1.w_in, &self.rnn1.w_rec);
            outer_add(grads.rnn1.w_in.data_mut(), &step1.dpre, latents[t].data());
            outer_add(grads.rnn1.w_rec.data_mut(), &step1.dpre, h1_prev.data());
            add_assign(grads.rnn1.b_in.data_mut(), &step1.dpre);
            add_assign(grads.rnn1.b_rec.data_mut(), &step1.dpre);
            carry_h1 = step1.h_prev.into_data();
            grad_latents[t] = step1.x;
        }
        grad_latents
    }

    /// Backpropagate one frame's latent gradient through the convolutional
    /// stage, accumulating kernel/bias gradients into `grads`.
    pub fn cnn_backward(
        &self,
        tape: &CnnTape<R>,
        grad_latent: &Tensor<R>,
        grads: &mut ForecasterModel<R>,
    ) -> Result<(), ShapeError> {
        let cfg = &self.config;
        let (ph, pw) = cfg.pooled_hw();
        let mut g = Tensor::from_vec(
            &[cfg.block_channels[2], ph, pw],
            grad_latent.data().to_vec(),
        )?;
        for block in (0..3).rev() {
            let in_shape = tape.pool_in_shapes[block];
            g = maxpool2_backward(&in_shape, &tape.pool_argmax[block], &g);
            for conv_in_block in (0..3).rev() {
                let idx = block * 3 + conv_in_block;
                let conv = &self.convs[idx];
                let pre = &tape.conv_preacts[idx];
                let g_pre = relu6_backward(pre, &g);
                let (g_in, g_k, g_b) =
                    conv2d_same_backward(&tape.conv_inputs[idx], &conv.kernels, &g_pre)?;
                add_assign(grads.convs[idx].kernels.data_mut(), g_k.data());
                add_assign(grads.convs[idx].bias.data_mut(), g_b.data());
                g = g_in;
            }
        }
        Ok(())
    }

    /// Feed one normalized frame to a live stream. Returns the forecast if
    /// one is emitted this frame.
    pub fn stream_predict(
        &self,
        frame: &Tensor<R>,
        state: &mut StreamState<R>,
    ) -> Result<Option<R>, ShapeError> {
        let latent = self.encode_frame(frame)?;
        match state.mode {
            StreamMode::Windowed => {
                if state.ring.len() == self.config.window {
                    state.ring.pop_front();
                }
                state.ring.push_back(latent);
                if state.ring.len() < self.config.window {
                    return Ok(None);
                }
                let latents: Vec<Tensor<R>> = state.ring.iter().cloned().collect();
                let outputs = self.forecast_window(&latents)?;
                Ok(Some(*outputs.last().expect("window is non-empty")))
            }
            StreamMode::Continuous => {
                let h1 = rnn_step(
                    &latent,
                    &state.h1,
                    &self.rnn1.w_in,
                    &self.rnn1.w_rec,
                    &self.rnn1.b_in,
                    &self.rnn1.b_rec,
                )?;
                let h2 = rnn_step(
                    &h1,
                    &state.h2,
                    &self.rnn2.w_in,
                    &self.rnn2.w_rec,
                    &self.rnn2.b_in,
                    &self.rnn2.b_rec,
                )?;
                let y = mean(h2.data());
                state.h1 = h1;
                state.h2 = h2;
                Ok(Some(y))
            }
        }
    }
}

/// Activations recorded by one frame's encoder pass.
pub struct CnnTape<R: Real> {
    pub conv_inputs: Vec<Tensor<R>>,
    pub conv_preacts: Vec<Tensor<R>>,
    pub pool_argmax: Vec<Vec<u32>>,
    pub pool_in_shapes: Vec<[usize; 3]>,
}

/// Hidden states and per-step outputs of one recurrent pass.
pub struct WindowTape<R: Real> {
    pub h1: Vec<Tensor<R>>,
    pub h2: Vec<Tensor<R>>,
    pub outputs: Vec<R>,
}

/// Streaming inference mode. `Windowed` replays the recurrent blocks over
/// the last `window` cached latents from zero hidden states, matching the
/// fine-tuning context exactly; `Continuous` carries hidden state forward
/// across every frame and emits from the first frame on.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum StreamMode {
    Windowed,
    Continuous,
}

/// Per-stream state: the latent ring buffer and (continuous mode) the
/// persistent hidden pair. One owner per live stream.
pub struct StreamState<R: Real> {
    pub mode: StreamMode,
    ring: VecDeque<Tensor<R>>,
    h1: Tensor<R>,
    h2: Tensor<R>,
}

impl<R: Real> StreamState<R> {
    pub fn new(config: &ForecasterConfig, mode: StreamMode) -> Self {
        StreamState {
            mode,
            ring: VecDeque::with_capacity(config.window),
            h1: Tensor::zeros(&[config.rnn1_hidden]),
            h2: Tensor::zeros(&[config.rnn2_hidden]),
        }
    }

    /// Number of latents currently buffered (windowed mode).
    pub fn fill(&self) -> usize {
        self.ring.len()
    }
}

fn mean<R: Real>(xs: &[R]) -> R {
    let mut acc = R::ZERO;
    for &x in xs {
        acc += x;
    }
    acc / R::from_f64(xs.len() as f64)
}

fn add_assign<R: Real>(dst: &mut [R], src: &[R]) {
    debug_assert_eq!(dst.len(), src.len());
    for (d, &s) in dst.iter_mut().zip(src) {
        *d += s;
    }
}

/// Micro geometry used by gradient checks and other fast tests: 2x9x12
/// input, 3/4/4 channels, tiny hidden sizes, 2-frame window.
pub fn micro_config(task: Task) -> ForecasterConfig {
    ForecasterConfig {
        task,
        input_channels: 2,
        input_height: 9,
        input_width: 12,
        block_channels: [3, 4, 4],
        rnn1_hidden: 5,
        rnn2_hidden: 3,
        window: 2,
    }
}
