//! Dataset container format.
//!
//! Layout (little-endian): magic `GAIT`; u16 version; u64 generator seed;
//! u16 subject count; per subject: u16 id, f32 insole length, persona as
//! 7 f32 (cadence factor, swing scale, swing duration, jitter amplitude,
//! noise amplitude, cop spread, speed jitter) and u64 seed offset; u32 trial
//! count; per trial: u16 subject id, u16 n_frames, u16 impact index, f32
//! cop_norm, f32 torso velocity, f32 toe velocity, u8 speed category, u8
//! strike category, then n_frames x 2x25x50 raw bytes; FNV-1a 64-bit
//! checksum over everything after the magic.

use std::fs;
use std::io;
use std::path::Path;

use thiserror::Error;

use super::{
    Dataset, SpeedCategory, StrikeCategory, SubjectProfile, Trial, FRAME_PIXELS, MIN_IMPACT_IDX,
};
use crate::hash::Fnv1a64;

pub const DATASET_MAGIC: &[u8; 4] = b"GAIT";
pub const DATASET_VERSION: u16 = 1;

#[derive(Debug, Error)]
pub enum DatasetFileError {
    #[error("bad magic: expected \"GAIT\", found {found:?}")]
    BadMagic { found: [u8; 4] },
    #[error("unsupported version {0} (expected {DATASET_VERSION})")]
    UnsupportedVersion(u16),
    #[error("file truncated while reading {0}")]
    Truncated(&'static str),
    #[error("checksum mismatch: stored {stored:#018x}, computed {computed:#018x}")]
    ChecksumMismatch { stored: u64, computed: u64 },
    #[error("invariant violation: {0}")]
    Invariant(String),
    #[error(transparent)]
    Io(#[from] io::Error),
}

pub fn encode_dataset(ds: &Dataset) -> Vec<u8> {
    let frames_bytes: usize = ds.trials.iter().map(|t| t.frames.len()).sum();
    let mut payload = Vec::with_capacity(frames_bytes + ds.trials.len() * 24 + 256);
    payload.extend_from_slice(&DATASET_VERSION.to_le_bytes());
    payload.extend_from_slice(&ds.seed.to_le_bytes());
    payload.extend_from_slice(&(ds.subjects.len() as u16).to_le_bytes());
    for s in &ds.subjects {
        payload.extend_from_slice(&s.id.to_le_bytes());
        for v in [
            s.insole_len_mm,
            s.cadence_factor,
            s.swing_scale,
            s.swing_duration_s,
            s.jitter_amp,
            s.noise_amp,
            s.cop_spread,
            s.speed_jitter,
        ] {
            payload.extend_from_slice(&v.to_le_bytes());
        }
        payload.extend_from_slice(&s.seed_offset.to_le_bytes());
    }
    payload.extend_from_slice(&(ds.trials.len() as u32).to_le_bytes());
    for t in &ds.trials {
        payload.extend_from_slice(&t.subject_id.to_le_bytes());
        payload.extend_from_slice(&(t.n_frames() as u16).to_le_bytes());
        payload.extend_from_slice(&t.impact_idx.to_le_bytes());
        payload.extend_from_slice(&t.cop_norm.to_le_bytes());
        payload.extend_from_slice(&t.torso_velocity.to_le_bytes());
        payload.extend_from_slice(&t.toe_velocity.to_le_bytes());
        payload.push(t.speed as u8);
        payload.push(t.strike as u8);
        payload.extend_from_slice(&t.frames);
    }
    let mut hash = Fnv1a64::new();
    hash.update(&payload);
    let mut out = Vec::with_capacity(payload.len() + 12);
    out.extend_from_slice(DATASET_MAGIC);
    out.extend_from_slice(&payload);
    out.extend_from_slice(&hash.finish().to_le_bytes());
    out
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &'static str) -> Result<&'a [u8], DatasetFileError> {
        if self.bytes.len() < self.pos + n {
            return Err(DatasetFileError::Truncated(what));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }
    fn u16(&mut self, what: &'static str) -> Result<u16, DatasetFileError> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().expect("2 bytes")))
    }
    fn u32(&mut self, what: &'static str) -> Result<u32, DatasetFileError> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
    fn u64(&mut self, what: &'static str) -> Result<u64, DatasetFileError> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().expect("8 bytes")))
    }
    fn f32(&mut self, what: &'static str) -> Result<f32, DatasetFileError> {
        Ok(f32::from_le_bytes(self.take(4, what)?.try_into().expect("4 bytes")))
    }
    fn u8(&mut self, what: &'static str) -> Result<u8, DatasetFileError> {
        Ok(self.take(1, what)?[0])
    }
}

pub fn decode_dataset(bytes: &[u8]) -> Result<Dataset, DatasetFileError> {
    if bytes.len() < 4 {
        return Err(DatasetFileError::Truncated("magic"));
    }
    if &bytes[..4] != DATASET_MAGIC {
        let mut found = [0u8; 4];
        found.copy_from_slice(&bytes[..4]);
        return Err(DatasetFileError::BadMagic { found });
    }
    if bytes.len() < 12 {
        return Err(DatasetFileError::Truncated("checksum"));
    }
    let payload = &bytes[4..bytes.len() - 8];
    let stored = u64::from_le_bytes(bytes[bytes.len() - 8..].try_into().expect("8 bytes"));
    let mut hash = Fnv1a64::new();
    hash.update(payload);
    let computed = hash.finish();
    if stored != computed {
        return Err(DatasetFileError::ChecksumMismatch { stored, computed });
    }

    let mut r = Reader {
        bytes: payload,
        pos: 0,
    };
    let version = r.u16("version")?;
    if version != DATASET_VERSION {
        return Err(DatasetFileError::UnsupportedVersion(version));
    }
    let seed = r.u64("seed")?;
    let n_subjects = r.u16("subject count")? as usize;
    let mut subjects = Vec::with_capacity(n_subjects);
    for _ in 0..n_subjects {
        let id = r.u16("subject id")?;
        subjects.push(SubjectProfile {
            id,
            insole_len_mm: r.f32("insole length")?,
            cadence_factor: r.f32("cadence factor")?,
            swing_scale: r.f32("swing scale")?,
            swing_duration_s: r.f32("swing duration")?,
            jitter_amp: r.f32("jitter amplitude")?,
            noise_amp: r.f32("noise amplitude")?,
            cop_spread: r.f32("cop spread")?,
            speed_jitter: r.f32("speed jitter")?,
            seed_offset: r.u64("seed offset")?,
        });
        let s = subjects.last().expect("just pushed");
        if s.insole_len_mm <= 0.0 {
            return Err(DatasetFileError::Invariant(format!(
                "subject {id}: insole length must be > 0, got {}",
                s.insole_len_mm
            )));
        }
    }
    let n_trials = r.u32("trial count")? as usize;
    let mut trials = Vec::with_capacity(n_trials);
    for i in 0..n_trials {
        let subject_id = r.u16("trial subject id")?;
        if !subjects.iter().any(|s| s.id == subject_id) {
            return Err(DatasetFileError::Invariant(format!(
                "trial {i}: subject id {subject_id} has no profile"
            )));
        }
        let n_frames = r.u16("trial frame count")? as usize;
        let impact_idx = r.u16("impact index")?;
        if impact_idx < MIN_IMPACT_IDX {
            return Err(DatasetFileError::Invariant(format!(
                "trial {i}: impact_idx {impact_idx} < {MIN_IMPACT_IDX}"
            )));
        }
        if impact_idx as usize >= n_frames {
            return Err(DatasetFileError::Invariant(format!(
                "trial {i}: impact_idx {impact_idx} outside {n_frames} frames"
            )));
        }
        let cop_norm = r.f32("cop_norm")?;
        if !(-0.5..=0.5).contains(&cop_norm) {
            return Err(DatasetFileError::Invariant(format!(
                "trial {i}: cop_norm {cop_norm} outside [-0.5, 0.5]"
            )));
        }
        let torso_velocity = r.f32("torso velocity")?;
        let toe_velocity = r.f32("toe velocity")?;
        if torso_velocity <= 0.0 || toe_velocity <= 0.0 {
            return Err(DatasetFileError::Invariant(format!(
                "trial {i}: velocities must be > 0"
            )));
        }
        let speed = SpeedCategory::from_u8(r.u8("speed category")?)
            .ok_or_else(|| DatasetFileError::Invariant(format!("trial {i}: bad speed byte")))?;
        let strike = StrikeCategory::from_u8(r.u8("strike category")?)
            .ok_or_else(|| DatasetFileError::Invariant(format!("trial {i}: bad strike byte")))?;
        let frames = r.take(n_frames * FRAME_PIXELS, "trial frames")?.to_vec();
        trials.push(Trial {
            subject_id,
            impact_idx,
            cop_norm,
            torso_velocity,
            toe_velocity,
            speed,
            strike,
            frames,
        });
    }
    if r.pos != payload.len() {
        return Err(DatasetFileError::Invariant(format!(
            "{} trailing payload bytes",
            payload.len() - r.pos
        )));
    }
    Ok(Dataset {
        version,
        seed,
        subjects,
        trials,
    })
}

pub fn write_dataset(ds: &Dataset, path: &Path) -> Result<(), DatasetFileError> {
    fs::write(path, encode_dataset(ds))?;
    Ok(())
}

pub fn read_dataset(path: &Path) -> Result<Dataset, DatasetFileError> {
    decode_dataset(&fs::read(path)?)
}
