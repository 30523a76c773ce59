//! Weight-file serialization.
//!
//! Layout (little-endian): magic `SFW1`; config block (u8 task tag, u16 h1,
//! u16 h2, u16 input channels/height/width, u16 window length); parameter
//! tensors as f32 in canonical order (conv kernels and bias per layer in
//! block order, then RNN1 and RNN2 as W_in, W_rec, b_in, b_rec); FNV-1a
//! 64-bit checksum over everything after the magic. The channel plan is not
//! part of the config block, so only the canonical 12/32/32 plan is
//! serializable.

use std::fs;
use std::io::{self};
use std::path::Path;

use thiserror::Error;

use super::{ForecasterConfig, ForecasterModel, Task};
use crate::hash::Fnv1a64;

pub const WEIGHT_MAGIC: &[u8; 4] = b"SFW1";
const CANONICAL_CHANNELS: [usize; 3] = [12, 32, 32];

#[derive(Debug, Error)]
pub enum WeightFileError {
    #[error("bad magic: expected \"SFW1\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("file truncated: needed {needed} more bytes for {what}")]
    Truncated { what: &'static str, needed: usize },
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("invalid config field {field}: {value}")]
    InvalidConfig { field: &'static str, value: u64 },
    #[error("model uses channel plan {got:?}; only {want:?} is serializable")]
    UnsupportedChannelPlan { got: [usize; 3], want: [usize; 3] },
    #[error(transparent)]
    Io(#[from] io::Error),
}

fn task_tag(task: Task) -> u8 {
    match task {
        Task::Cop => 0,
        Task::Toi => 1,
    }
}

/// Serialize a model to bytes (see module docs for layout).
pub fn encode_weights(model: &ForecasterModel<f32>) -> Result<Vec<u8>, WeightFileError> {
    let cfg = &model.config;
    if cfg.block_channels != CANONICAL_CHANNELS {
        return Err(WeightFileError::UnsupportedChannelPlan {
            got: cfg.block_channels,
            want: CANONICAL_CHANNELS,
        });
    }
    let mut payload = Vec::with_capacity(4 * model.param_count_walk() + 16);
    payload.push(task_tag(cfg.task));
    for v in [
        cfg.rnn1_hidden,
        cfg.rnn2_hidden,
        cfg.input_channels,
        cfg.input_height,
        cfg.input_width,
        cfg.window,
    ] {
        payload.extend_from_slice(&(v as u16).to_le_bytes());
    }
    for t in model.params() {
        for &x in t.data() {
            payload.extend_from_slice(&x.to_le_bytes());
        }
    }
    let mut hash = Fnv1a64::new();
    hash.update(&payload);
    let mut out = Vec::with_capacity(payload.len() + 12);
    out.extend_from_slice(WEIGHT_MAGIC);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&hash.finish().to_le_bytes());
    Ok(out)
}

/// Parse a weight file. Rejects bad magic, truncation, checksum mismatch,
/// and nonsensical config fields; never yields a partial model.
pub fn decode_weights(bytes: &[u8]) -> Result<ForecasterModel<f32>, WeightFileError> {
    if bytes.len() < 4 {
        return Err(WeightFileError::Truncated {
            what: "magic",
            needed: 4 - bytes.len(),
        });
    }
    if &bytes[..4] != WEIGHT_MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(WeightFileError::BadMagic { found });
    }
    let rest = &bytes[4..];
    if rest.len() < 13 + 8 {
        return Err(WeightFileError::Truncated {
            what: "config block",
            needed: 13 + 8 - rest.len(),
        });
    }
    let payload = &rest[..rest.len() - 8];
    let stored = u64::from_le_bytes(rest[rest.len() - 8..].try_into().expect("8 bytes"));
    let mut hash = Fnv1a64::new();
    hash.update(payload);
    let computed = hash.finish();
    if stored != computed {
        return Err(WeightFileError::ChecksumMismatch { stored, computed });
    }

    let task = match payload[0] {
        0 => Task::Cop,
        1 => Task::Toi,
        other => {
            return Err(WeightFileError::InvalidConfig {
                field: "task tag",
                value: other as u64,
            })
        }
    };
    let mut u16s = [0usize; 6];
    for (i, v) in u16s.iter_mut().enumerate() {
        *v = u16::from_le_bytes(payload[1 + 2 * i..3 + 2 * i].try_into().expect("2 bytes")) as usize;
    }
    let [h1, h2, in_c, in_h, in_w, window] = u16s;
    for (field, value) in [
        ("h1", h1),
        ("h2", h2),
        ("input channels", in_c),
        ("input height", in_h),
        ("input width", in_w),
        ("window length", window),
    ] {
        if value == 0 {
            return Err(WeightFileError::InvalidConfig {
                field,
                value: value as u64,
            });
        }
    }
    let config = ForecasterConfig {
        task,
        input_channels: in_c,
        input_height: in_h,
        input_width: in_w,
        block_channels: CANONICAL_CHANNELS,
        rnn1_hidden: h1,
        rnn2_hidden: h2,
        window,
    };
    let mut model = ForecasterModel::<f32>::zeros(config);
    let mut offset = 13usize;
    for t in model.params_mut() {
        let need = t.len() * 4;
        if payload.len() < offset + need {
            return Err(WeightFileError::Truncated {
                what: "parameter tensor",
                needed: offset + need - payload.len(),
            });
        }
        for (x, chunk) in t
            .data_mut()
            .iter_mut()
            .zip(payload[offset..offset + need].chunks_exact(4))
        {
            *x = f32::from_le_bytes(chunk.try_into().expect("4 bytes"));
        }
        offset += need;
    }
    if offset != payload.len() {
        return Err(WeightFileError::InvalidConfig {
            field: "trailing bytes after parameters",
            value: (payload.len() - offset) as u64,
        });
    }
    Ok(model)
}

pub fn save_weights(model: &ForecasterModel<f32>, path: &Path) -> Result<(), WeightFileError> {
    fs::write(path, encode_weights(model)?)?;
    Ok(())
}

pub fn load_weights(path: &Path) -> Result<ForecasterModel<f32>, WeightFileError> {
    decode_weights(&fs::read(path)?)
}
