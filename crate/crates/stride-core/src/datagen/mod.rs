//! Deterministic synthetic stereo gait-clip generator, frame/label
//! processing, and the dataset container.
//!
//! Each trial renders a simplified shank-camera view of a stair approach:
//! the stair edge is a bright vertical band whose horizontal position encodes
//! toe-to-stair distance, the foot is a textured block whose height follows
//! the swing arc and whose forward extent reflects foot pitch, and a bright
//! toe mark's vertical position encodes the landing center of pressure. The
//! right channel is the same scene shifted by a disparity proportional to
//! inverse depth.
//!
//! Band and mark boundaries are anti-aliased on the exact 1/255 sub-pixel
//! grid that 8-bit intensities can represent, and ground truth (impact frame,
//! `cop_norm`) is *defined from the quantized rendering*, so the closed-form
//! inverse in [`decode_trial`] recovers labels of noise-free trials exactly.

pub mod io;

use crate::numerics::{Real, RngState, Tensor};
use thiserror::Error;

pub const FPS: f64 = 60.0;
pub const FRAME_WIDTH: usize = 50;
pub const FRAME_HEIGHT: usize = 25;
pub const FRAME_CHANNELS: usize = 2;
pub const FRAME_PIXELS: usize = FRAME_CHANNELS * FRAME_HEIGHT * FRAME_WIDTH;
pub const TRIAL_FRAMES: usize = 100;
pub const MIN_IMPACT_IDX: u16 = 30;

/// Image column of the stair edge at contact (left channel).
const BAND_CONTACT_COL: f64 = 18.0;
/// Columns per millimetre of toe-to-stair distance.
const PX_PER_MM: f64 = 0.014;
const BAND_WIDTH: usize = 3;
/// Stereo disparity: DISP_K / (DEPTH_BASE + distance) columns.
const DISP_K: f64 = 800.0;
const DEPTH_BASE: f64 = 400.0;
/// The foot sits at constant depth from the shank camera.
const FOOT_DISPARITY: usize = 2;

/// Toe-mark geometry: row = MARK_ROW_CENTER + MARK_GAIN * cop_norm.
const MARK_ROW_CENTER: f64 = 12.0;
const MARK_GAIN: f64 = 8.0;
const MARK_COL: usize = 15; // columns 15..=17 in the left channel
const MARK_HEIGHT: usize = 2;

/// Swing kinematics (millimetres, seconds).
const STAIR_HEIGHT_MM: f64 = 180.0;
const LIFT_PER_SCALE_MM: f64 = 15.0;
const FOOT_ROW_CONTACT: f64 = 14.0;
const PX_PER_MM_VERTICAL: f64 = 0.03;

/// Commanded approach speeds (mm/s) for the three categories.
pub const SPEED_BASE_MM_S: [f64; 3] = [1000.0, 1250.0, 1500.0];

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[repr(u8)]
pub enum SpeedCategory {
    Slow = 0,
    Medium = 1,
    Fast = 2,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
#[repr(u8)]
pub enum StrikeCategory {
    Rear = 0,
    Mid = 1,
    Fore = 2,
}

impl SpeedCategory {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(SpeedCategory::Slow),
            1 => Some(SpeedCategory::Medium),
            2 => Some(SpeedCategory::Fast),
            _ => None,
        }
    }
    pub fn base_speed_mm_s(self) -> f64 {
        SPEED_BASE_MM_S[self as usize]
    }
}

impl StrikeCategory {
    pub fn from_u8(v: u8) -> Option<Self> {
        match v {
            0 => Some(StrikeCategory::Rear),
            1 => Some(StrikeCategory::Mid),
            2 => Some(StrikeCategory::Fore),
            _ => None,
        }
    }
    /// Center of the landing-offset distribution for this strike strategy.
    pub fn cop_center(self) -> f64 {
        match self {
            StrikeCategory::Rear => -0.3,
            StrikeCategory::Mid => 0.0,
            StrikeCategory::Fore => 0.3,
        }
    }
}

/// Per-subject kinematic persona plus insole length.
#[derive(Debug, Clone, PartialEq)]
pub struct SubjectProfile {
    pub id: u16,
    /// Insole length in millimetres.
    pub insole_len_mm: f32,
    /// Multiplies the commanded approach speed.
    pub cadence_factor: f32,
    /// Peak swing-speed multiplier relative to approach speed.
    pub swing_scale: f32,
    pub swing_duration_s: f32,
    /// Camera-jitter amplitude in [0, 1]; 0 disables jitter.
    pub jitter_amp: f32,
    /// Additive pixel-noise amplitude in intensity counts; 0 disables noise.
    pub noise_amp: f32,
    /// Half-width of the landing-offset spread around the strike center.
    pub cop_spread: f32,
    /// Relative per-trial speed jitter.
    pub speed_jitter: f32,
    /// Per-subject contribution to trial seeds.
    pub seed_offset: u64,
}

impl SubjectProfile {
    /// A jitter-free, noise-free persona with neutral kinematics; trials
    /// generated from it decode exactly.
    pub fn noise_free(id: u16) -> Self {
        SubjectProfile {
            id,
            insole_len_mm: 263.2,
            cadence_factor: 1.0,
            swing_scale: 3.1,
            swing_duration_s: 0.5,
            jitter_amp: 0.0,
            noise_amp: 0.0,
            cop_spread: 0.0,
            speed_jitter: 0.0,
            seed_offset: 0,
        }
    }
}

/// One stair-approach clip with its labels and covariates.
#[derive(Debug, Clone, PartialEq)]
pub struct Trial {
    pub subject_id: u16,
    pub impact_idx: u16,
    pub cop_norm: f32,
    pub torso_velocity: f32,
    pub toe_velocity: f32,
    pub speed: SpeedCategory,
    pub strike: StrikeCategory,
    /// `n_frames` stereo frames, 2x25x50 bytes each, frame-major.
    pub frames: Vec<u8>,
}

impl Trial {
    pub fn n_frames(&self) -> usize {
        self.frames.len() / FRAME_PIXELS
    }

    pub fn frame_bytes(&self, t: usize) -> &[u8] {
        &self.frames[t * FRAME_PIXELS..(t + 1) * FRAME_PIXELS]
    }

    /// The torso/toe velocity covariates attached at generation time (mm/s).
    pub fn covariates(&self) -> (f64, f64) {
        (self.torso_velocity as f64, self.toe_velocity as f64)
    }
}

/// Profiles plus trials; regenerating from (config, seed) is bit-identical.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub version: u16,
    pub seed: u64,
    pub subjects: Vec<SubjectProfile>,
    pub trials: Vec<Trial>,
}

impl Dataset {
    pub fn profile(&self, subject_id: u16) -> Option<&SubjectProfile> {
        self.subjects.iter().find(|p| p.id == subject_id)
    }

    /// Indices of this subject's trials, in file order.
    pub fn trial_indices(&self, subject_id: u16) -> Vec<usize> {
        self.trials
            .iter()
            .enumerate()
            .filter(|(_, t)| t.subject_id == subject_id)
            .map(|(i, _)| i)
            .collect()
    }
}

#[derive(Debug, Error)]
pub enum DatagenError {
    #[error("cop_norm {0} outside [-0.5, 0.5]")]
    CopOutOfRange(f64),
    #[error("frame index {frame} is not before impact index {impact}")]
    FrameNotBeforeImpact { frame: usize, impact: usize },
    #[error("dataset needs n_subjects >= 1 and trials_per_subject >= 1, got {subjects}x{trials}")]
    EmptyDataset { subjects: usize, trials: usize },
}

// --- exact sub-pixel codes -------------------------------------------------
//
// Positions are quantized to integer codes k = round(pos * 255); the code is
// what the anti-aliased rendering stores, and the shared decode expression
// below is the single definition both the generator (for ground truth) and
// the inverse use, so they agree bit for bit.

fn code_from_pos(pos: f64) -> i64 {
    (pos * 255.0).round() as i64
}

fn pos_from_code(code: i64) -> f64 {
    let j = code.div_euclid(255);
    let m = code.rem_euclid(255);
    j as f64 + (m as f64) / 255.0
}

fn band_distance_from_code(code: i64) -> f64 {
    (pos_from_code(code) - BAND_CONTACT_COL) / PX_PER_MM
}

fn cop_from_code(code: i64) -> f32 {
    (((pos_from_code(code) - MARK_ROW_CENTER) / MARK_GAIN) as f32).clamp(-0.5, 0.5)
}

// --- kinematics -------------------------------------------------------------

struct TrialKinematics {
    /// Approach (torso) speed, mm/s.
    v: f64,
    /// Peak swing multiplier.
    a: f64,
    /// Swing duration, seconds.
    s: f64,
    /// Continuous impact time in frames.
    t_imp: f64,
}

impl TrialKinematics {
    fn swing_start(&self) -> f64 {
        self.t_imp - self.s * FPS
    }

    /// Toe-to-stair distance (mm) at frame time `t`.
    fn distance_mm(&self, t: f64) -> f64 {
        if t >= self.t_imp {
            return 0.0;
        }
        let t_ss = self.swing_start();
        if t >= t_ss {
            let tau = (t - t_ss) / (self.s * FPS);
            self.v * self.s * ((1.0 - tau) + self.a / std::f64::consts::PI * (1.0 + (std::f64::consts::PI * tau).cos()))
        } else {
            let d_ss = self.v * self.s * (1.0 + 2.0 * self.a / std::f64::consts::PI);
            d_ss + self.v * (t_ss - t) / FPS
        }
    }

    /// Forward toe speed (mm/s) at frame time `t` (pre-impact).
    fn toe_speed_mm_s(&self, t: f64) -> f64 {
        let t_ss = self.swing_start();
        if t >= t_ss && t < self.t_imp {
            let tau = (t - t_ss) / (self.s * FPS);
            self.v * (1.0 + self.a * (std::f64::consts::PI * tau).sin())
        } else {
            self.v
        }
    }

    /// Toe height relative to the stair top (mm, negative below).
    fn toe_height_mm(&self, t: f64) -> f64 {
        if t >= self.t_imp {
            return 0.0;
        }
        let t_ss = self.swing_start();
        if t >= t_ss {
            let tau = (t - t_ss) / (self.s * FPS);
            -STAIR_HEIGHT_MM * (1.0 - tau)
                + self.a * LIFT_PER_SCALE_MM * (std::f64::consts::PI * tau).sin()
        } else {
            -STAIR_HEIGHT_MM
        }
    }
}

// --- rendering ---------------------------------------------------------------

/// Draw a vertical intensity-255 band whose left edge sits at sub-pixel
/// code `edge_code`, across all rows of one channel plane.
fn draw_band(plane: &mut [u8], edge_code: i64) {
    let j = edge_code.div_euclid(255);
    let m = edge_code.rem_euclid(255) as u8;
    for row in 0..FRAME_HEIGHT {
        let base = row * FRAME_WIDTH;
        let put = |plane: &mut [u8], col: i64, v: u8| {
            if (0..FRAME_WIDTH as i64).contains(&col) {
                plane[base + col as usize] = v;
            }
        };
        if m == 0 {
            for c in 0..BAND_WIDTH as i64 {
                put(plane, j + c, 255);
            }
        } else {
            put(plane, j, 255 - m);
            for c in 1..BAND_WIDTH as i64 {
                put(plane, j + c, 255);
            }
            put(plane, j + BAND_WIDTH as i64, m);
        }
    }
}

/// Draw the toe mark: a 2-row bright strip whose top edge sits at sub-pixel
/// code `row_code`, over `MARK_COL..MARK_COL+3` shifted by `col_shift`.
fn draw_mark(plane: &mut [u8], row_code: i64, col_shift: i64) {
    let j = row_code.div_euclid(255);
    let m = row_code.rem_euclid(255) as u8;
    let mut put = |row: i64, v: u8| {
        if (0..FRAME_HEIGHT as i64).contains(&row) {
            for dc in 0..3i64 {
                let col = MARK_COL as i64 + dc + col_shift;
                if (0..FRAME_WIDTH as i64).contains(&col) {
                    plane[row as usize * FRAME_WIDTH + col as usize] = v;
                }
            }
        }
    };
    if m == 0 {
        for r in 0..MARK_HEIGHT as i64 {
            put(j + r, 255);
        }
    } else {
        put(j, 255 - m);
        for r in 1..MARK_HEIGHT as i64 {
            put(j + r, 255);
        }
        put(j + MARK_HEIGHT as i64, m);
    }
}

/// Textured foot block: columns 2..=2+extent, five rows from `top_row`.
fn draw_foot(plane: &mut [u8], top_row: i64, extent: usize, subject_id: u16, col_shift: i64) {
    for dy in 0..5i64 {
        let row = top_row + dy;
        if !(0..FRAME_HEIGHT as i64).contains(&row) {
            continue;
        }
        for dx in 0..=extent as i64 {
            let col = 2 + dx + col_shift;
            if (0..FRAME_WIDTH as i64).contains(&col) {
                let tex = 110 + (((dx * 7 + row * 13 + subject_id as i64 * 31) % 5) * 15) as u8;
                plane[row as usize * FRAME_WIDTH + col as usize] = tex;
            }
        }
    }
}

fn shift_plane(plane: &[u8], jx: i64, jy: i64) -> Vec<u8> {
    let mut out = vec![0u8; plane.len()];
    for row in 0..FRAME_HEIGHT as i64 {
        let src_row = row - jy;
        if !(0..FRAME_HEIGHT as i64).contains(&src_row) {
            continue;
        }
        for col in 0..FRAME_WIDTH as i64 {
            let src_col = col - jx;
            if (0..FRAME_WIDTH as i64).contains(&src_col) {
                out[row as usize * FRAME_WIDTH + col as usize] =
                    plane[src_row as usize * FRAME_WIDTH + src_col as usize];
            }
        }
    }
    out
}

// --- generation ---------------------------------------------------------------

/// Render one 100-frame stereo trial. All randomness comes from `seed`; the
/// same (profile, categories, seed) yields a bit-identical trial.
pub fn generate_trial(
    profile: &SubjectProfile,
    speed: SpeedCategory,
    strike: StrikeCategory,
    seed: u64,
) -> Trial {
    let mut rng = RngState::new(seed ^ profile.seed_offset);

    // Draw order is fixed: speed jitter, landing offset, impact time, swing
    // shape, then per-frame camera jitter and pixel noise.
    let u_speed = rng.range_f64(-1.0, 1.0);
    let v = speed.base_speed_mm_s()
        * profile.cadence_factor as f64
        * (1.0 + profile.speed_jitter as f64 * u_speed);
    let u_cop = rng.range_f64(-1.0, 1.0);
    let cop_candidate =
        (strike.cop_center() + profile.cop_spread as f64 * u_cop).clamp(-0.45, 0.45);
    let t_imp = rng.range_f64(58.0, 92.0);
    let s = (profile.swing_duration_s as f64 * (1.0 + 0.05 * rng.range_f64(-1.0, 1.0)))
        .clamp(0.35, 0.7);
    // Swing jitter scales with the persona amplitude, so a zero-amplitude
    // persona degenerates exactly to torso kinematics.
    let a = (profile.swing_scale as f64 * (1.0 + 0.05 * rng.range_f64(-1.0, 1.0))).max(0.0);
    let kin = TrialKinematics { v, a, s, t_imp };

    // Ground truth comes from the quantized codes the scene will render.
    let mark_code = code_from_pos(MARK_ROW_CENTER + MARK_GAIN * cop_candidate);
    let cop_norm = cop_from_code(mark_code);
    let band_codes: Vec<i64> = (0..TRIAL_FRAMES)
        .map(|t| {
            let d = kin.distance_mm(t as f64);
            code_from_pos(BAND_CONTACT_COL + d * PX_PER_MM)
        })
        .collect();
    let impact_idx = band_codes
        .iter()
        .position(|&k| band_distance_from_code(k) <= 0.0)
        .expect("impact occurs within the clip") as u16;

    // Covariates: commanded approach speed and mean forward toe speed over
    // frames [impact-15, impact-3].
    let torso_velocity = v as f32;
    let toe_velocity = {
        let lo = impact_idx as i64 - 15;
        let hi = impact_idx as i64 - 3;
        let mut acc = 0.0;
        let mut n = 0usize;
        let mut t = lo;
        while t <= hi {
            acc += kin.toe_speed_mm_s(t as f64);
            n += 1;
            t += 1;
        }
        (acc / n as f64) as f32
    };

    let extent = 4 + ((cop_norm as f64 + 0.5) * 8.0).round() as usize;
    let mut frames = vec![0u8; TRIAL_FRAMES * FRAME_PIXELS];
    let plane = FRAME_HEIGHT * FRAME_WIDTH;
    for t in 0..TRIAL_FRAMES {
        let d = band_distance_from_code(band_codes[t]).max(0.0);
        let disparity = DISP_K / (DEPTH_BASE + d);
        let band_code_right = code_from_pos(pos_from_code(band_codes[t]) - disparity);
        let h = kin.toe_height_mm(t as f64);
        let foot_row = ((FOOT_ROW_CONTACT - h * PX_PER_MM_VERTICAL).round() as i64).clamp(7, 19);

        let mut left = vec![0u8; plane];
        let mut right = vec![0u8; plane];
        draw_band(&mut left, band_codes[t]);
        draw_band(&mut right, band_code_right);
        draw_foot(&mut left, foot_row, extent, profile.id, 0);
        draw_foot(&mut right, foot_row, extent, profile.id, -(FOOT_DISPARITY as i64));
        draw_mark(&mut left, mark_code, 0);
        draw_mark(&mut right, mark_code, -(FOOT_DISPARITY as i64));

        // Camera jitter: one integer shift for the whole stereo pair.
        let (jx, jy) = if profile.jitter_amp > 0.0 {
            let amp = profile.jitter_amp as f64;
            (
                (amp * rng.range_f64(-1.5, 1.5)).round() as i64,
                (amp * rng.range_f64(-1.5, 1.5)).round() as i64,
            )
        } else {
            (0, 0)
        };
        if jx != 0 || jy != 0 {
            left = shift_plane(&left, jx, jy);
            right = shift_plane(&right, jx, jy);
        }

        let frame = &mut frames[t * FRAME_PIXELS..(t + 1) * FRAME_PIXELS];
        frame[..plane].copy_from_slice(&left);
        frame[plane..].copy_from_slice(&right);
        if profile.noise_amp > 0.0 {
            let na = profile.noise_amp as f64;
            for px in frame.iter_mut() {
                let delta = (na * rng.range_f64(-1.0, 1.0)).round() as i64;
                *px = (*px as i64 + delta).clamp(0, 255) as u8;
            }
        }
    }

    Trial {
        subject_id: profile.id,
        impact_idx,
        cop_norm,
        torso_velocity,
        toe_velocity,
        speed,
        strike,
        frames,
    }
}

/// Draw a persona for subject `id` from the dataset seed. `base_task`
/// personas occupy a disjoint seed space with a wider swing-shape spread and
/// serve as the pretraining distribution.
pub fn subject_profile(seed: u64, id: u16, base_task: bool) -> SubjectProfile {
    let tag = if base_task { 0xba5e_0000_0000 } else { 0x5b_0000 } + id as u64;
    let mut rng = RngState::new(seed).derive(tag);
    let (swing_lo, swing_hi) = if base_task { (2.5, 3.9) } else { (2.7, 3.5) };
    SubjectProfile {
        id,
        insole_len_mm: rng.range_f64(245.0, 285.0) as f32,
        cadence_factor: rng.range_f64(0.95, 1.05) as f32,
        swing_scale: rng.range_f64(swing_lo, swing_hi) as f32,
        swing_duration_s: rng.range_f64(0.45, 0.58) as f32,
        jitter_amp: rng.range_f64(0.2, 0.8) as f32,
        noise_amp: rng.range_f64(2.0, 5.0) as f32,
        cop_spread: rng.range_f64(0.08, 0.14) as f32,
        speed_jitter: 0.05,
        seed_offset: rng.next_u64(),
    }
}

fn trial_seed(seed: u64, subject: u16, trial_idx: usize) -> u64 {
    RngState::new(seed)
        .derive(((subject as u64) << 32) | trial_idx as u64)
        .next_u64()
}

/// Balanced speed x strike assignment plus per-trial seeds for one subject.
fn category_plan(seed: u64, subject: u16, n: usize) -> Vec<(SpeedCategory, StrikeCategory)> {
    let mut rng = RngState::new(seed).derive(0xca7 ^ subject as u64);
    let mut plan = Vec::with_capacity(n);
    while plan.len() < n {
        let mut block: Vec<u8> = (0..9).collect();
        rng.shuffle(&mut block);
        for cell in block {
            if plan.len() == n {
                break;
            }
            plan.push((
                SpeedCategory::from_u8(cell / 3).expect("cell in range"),
                StrikeCategory::from_u8(cell % 3).expect("cell in range"),
            ));
        }
    }
    plan
}

/// Generate the full dataset: per-subject personas, a balanced 3x3 grid of
/// speed and strike categories with seeded ordering, and hashed per-trial
/// seeds. Deterministic and embarrassingly parallel per trial.
pub fn generate_dataset(
    n_subjects: usize,
    trials_per_subject: usize,
    seed: u64,
) -> Result<Dataset, DatagenError> {
    generate_dataset_with(n_subjects, trials_per_subject, seed, false)
}

/// As [`generate_dataset`] but drawing personas from the disjoint
/// pretraining space.
pub fn generate_base_dataset(
    n_subjects: usize,
    trials_per_subject: usize,
    seed: u64,
) -> Result<Dataset, DatagenError> {
    generate_dataset_with(n_subjects, trials_per_subject, seed, true)
}

fn generate_dataset_with(
    n_subjects: usize,
    trials_per_subject: usize,
    seed: u64,
    base_task: bool,
) -> Result<Dataset, DatagenError> {
    use rayon::prelude::*;
    if n_subjects == 0 || trials_per_subject == 0 {
        return Err(DatagenError::EmptyDataset {
            subjects: n_subjects,
            trials: trials_per_subject,
        });
    }
    let subjects: Vec<SubjectProfile> = (0..n_subjects)
        .map(|i| subject_profile(seed, i as u16, base_task))
        .collect();
    let mut jobs = Vec::with_capacity(n_subjects * trials_per_subject);
    for profile in &subjects {
        let plan = category_plan(seed, profile.id, trials_per_subject);
        for (idx, (speed, strike)) in plan.into_iter().enumerate() {
            jobs.push((profile.clone(), speed, strike, trial_seed(seed, profile.id, idx)));
        }
    }
    let trials: Vec<Trial> = jobs
        .par_iter()
        .map(|(profile, speed, strike, s)| generate_trial(profile, *speed, *strike, *s))
        .collect();
    Ok(Dataset {
        version: io::DATASET_VERSION,
        seed,
        subjects,
        trials,
    })
}

// --- label processing ---------------------------------------------------------

/// Per-frame min-max normalization over both stereo channels jointly,
/// mapping raw bytes into [0, 1]; a constant frame maps to all zeros.
pub fn normalize_frame<R: Real>(raw: &[u8]) -> Tensor<R> {
    debug_assert_eq!(raw.len(), FRAME_PIXELS);
    let (mut lo, mut hi) = (u8::MAX, u8::MIN);
    for &p in raw {
        lo = lo.min(p);
        hi = hi.max(p);
    }
    let shape = [FRAME_CHANNELS, FRAME_HEIGHT, FRAME_WIDTH];
    if hi == lo {
        return Tensor::zeros(&shape);
    }
    let scale = 1.0 / (hi - lo) as f64;
    let data = raw
        .iter()
        .map(|&p| R::from_f64((p - lo) as f64 * scale))
        .collect();
    Tensor::from_vec(&shape, data).expect("shape matches FRAME_PIXELS")
}

/// Rescale normalized COP to millimetres from the rear-foot: (cop + 0.5) * L.
pub fn cop_to_mm(cop_norm: f64, insole_len_mm: f64) -> Result<f64, DatagenError> {
    if !(-0.5..=0.5).contains(&cop_norm) {
        return Err(DatagenError::CopOutOfRange(cop_norm));
    }
    Ok((cop_norm + 0.5) * insole_len_mm)
}

/// Time-of-impact target at frame `t`: frames and seconds until impact.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ToiTarget {
    pub frames: u32,
    pub seconds: f64,
    /// True when the target falls in the [1, 15]-frame training window.
    pub in_training_window: bool,
}

pub fn toi_targets(impact_idx: usize, t: usize) -> Result<ToiTarget, DatagenError> {
    if t >= impact_idx {
        return Err(DatagenError::FrameNotBeforeImpact {
            frame: t,
            impact: impact_idx,
        });
    }
    let frames = (impact_idx - t) as u32;
    Ok(ToiTarget {
        frames,
        seconds: frames as f64 / FPS,
        in_training_window: (1..=15).contains(&frames),
    })
}

// --- closed-form inverse --------------------------------------------------------

#[derive(Debug, Error)]
pub enum DecodeError {
    #[error("frame {0}: no stair band visible in the decode row")]
    BandNotFound(usize),
    #[error("toe mark not found in the mark column")]
    MarkNotFound,
    #[error("no frame decodes to contact; impact not visible")]
    NoImpact,
}

/// Labels recovered from rendered frames alone.
#[derive(Debug, Clone, PartialEq)]
pub struct DecodedTrial {
    pub cop_norm: f32,
    pub impact_idx: u16,
    /// Decoded toe-to-stair distance per frame (mm), where the band was
    /// visible.
    pub distances_mm: Vec<Option<f64>>,
}

/// The generator's own closed-form inverse: reconstruct sub-pixel codes from
/// the left channel's anti-aliased boundaries. Exact on noise-free trials
/// (zero `jitter_amp`/`noise_amp`); pixel noise and camera jitter are not
/// modelled.
pub fn decode_trial(trial: &Trial) -> Result<DecodedTrial, DecodeError> {
    let n = trial.n_frames();
    let mut distances = Vec::with_capacity(n);
    for t in 0..n {
        distances.push(decode_band_code(trial.frame_bytes(t)).map(band_distance_from_code));
    }
    let impact_idx = distances
        .iter()
        .position(|d| matches!(d, Some(d) if *d <= 0.0))
        .ok_or(DecodeError::NoImpact)? as u16;
    let mark_code = decode_mark_code(trial.frame_bytes(0)).ok_or(DecodeError::MarkNotFound)?;
    Ok(DecodedTrial {
        cop_norm: cop_from_code(mark_code),
        impact_idx,
        distances_mm: distances,
    })
}

/// Recover the band's left-edge code from decode row 0 of the left channel.
fn decode_band_code(frame: &[u8]) -> Option<i64> {
    let row = &frame[..FRAME_WIDTH];
    let c0 = row.iter().position(|&v| v > 0)?;
    let v = row[c0];
    Some(if v == 255 {
        c0 as i64 * 255
    } else {
        c0 as i64 * 255 + (255 - v as i64)
    })
}

/// Recover the toe-mark top-edge code from the mark's center column.
fn decode_mark_code(frame: &[u8]) -> Option<i64> {
    let col = MARK_COL + 1;
    let mut r0 = None;
    for row in 0..FRAME_HEIGHT {
        if frame[row * FRAME_WIDTH + col] > 0 {
            r0 = Some(row);
            break;
        }
    }
    let r0 = r0?;
    let v = frame[r0 * FRAME_WIDTH + col];
    Some(if v == 255 {
        r0 as i64 * 255
    } else {
        r0 as i64 * 255 + (255 - v as i64)
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn centered_landing_with_zero_noise_is_exactly_zero_cop() {
        let profile = SubjectProfile::noise_free(0);
        let trial = generate_trial(&profile, SpeedCategory::Medium, StrikeCategory::Mid, 1234);
        assert_eq!(trial.cop_norm, 0.0);
    }

    #[test]
    fn generation_is_bit_deterministic() {
        let profile = subject_profile(77, 3, false);
        let a = generate_trial(&profile, SpeedCategory::Fast, StrikeCategory::Fore, 99);
        let b = generate_trial(&profile, SpeedCategory::Fast, StrikeCategory::Fore, 99);
        assert_eq!(a, b);
    }

    #[test]
    fn inverse_recovers_noise_free_labels_exactly() {
        let mut profile = SubjectProfile::noise_free(4);
        profile.cop_spread = 0.12; // landing offsets vary, rendering stays clean
        for seed in [5u64, 6, 7, 8, 9] {
            for strike in [StrikeCategory::Rear, StrikeCategory::Mid, StrikeCategory::Fore] {
                let trial = generate_trial(&profile, SpeedCategory::Slow, strike, seed);
                let decoded = decode_trial(&trial).unwrap();
                assert_eq!(decoded.impact_idx, trial.impact_idx, "seed {seed}");
                let err = (decoded.cop_norm as f64 - trial.cop_norm as f64).abs();
                assert!(err < 1e-9, "seed {seed}: cop err {err}");
            }
        }
    }

    #[test]
    fn impact_leaves_full_context_for_all_horizons() {
        let ds = generate_dataset(3, 12, 42).unwrap();
        for trial in &ds.trials {
            assert!(trial.impact_idx >= MIN_IMPACT_IDX);
            assert!((trial.impact_idx as usize) < trial.n_frames());
            assert_eq!(trial.n_frames(), TRIAL_FRAMES);
            assert!(trial.cop_norm >= -0.5 && trial.cop_norm <= 0.5);
            assert!(trial.torso_velocity > 0.0 && trial.toe_velocity > 0.0);
        }
    }

    #[test]
    fn dataset_defaults_are_balanced() {
        // Desk-scale stand-in for the 8x90 default: the balance property is
        // per subject and per 9-trial block, so 4x27 exercises it fully.
        let ds = generate_dataset(4, 27, 9).unwrap();
        assert_eq!(ds.trials.len(), 108);
        for subject in &ds.subjects {
            let idxs = ds.trial_indices(subject.id);
            for strike in [StrikeCategory::Rear, StrikeCategory::Mid, StrikeCategory::Fore] {
                let count = idxs
                    .iter()
                    .filter(|&&i| ds.trials[i].strike == strike)
                    .count();
                assert!(
                    count as f64 >= 0.25 * idxs.len() as f64 - 1.0,
                    "subject {} strike {:?}: {}",
                    subject.id,
                    strike,
                    count
                );
            }
        }
    }

    #[test]
    fn seed_change_changes_some_trial() {
        let a = generate_dataset(1, 3, 1).unwrap();
        let b = generate_dataset(1, 3, 2).unwrap();
        assert_ne!(a.trials, b.trials);
    }

    #[test]
    fn single_trial_dataset() {
        let ds = generate_dataset(1, 1, 5).unwrap();
        assert_eq!(ds.trials.len(), 1);
        assert_eq!(ds.subjects.len(), 1);
    }

    #[test]
    fn normalize_frame_examples() {
        let mut raw = vec![10u8; FRAME_PIXELS];
        raw[0] = 210;
        raw[1] = 110;
        let t: Tensor<f64> = normalize_frame(&raw);
        assert_eq!(t.data()[0], 1.0);
        assert_eq!(t.data()[1], 0.5);
        assert_eq!(t.data()[2], 0.0);
        assert_eq!(t.shape(), &[2, 25, 50]);

        let constant = vec![37u8; FRAME_PIXELS];
        let t: Tensor<f64> = normalize_frame(&constant);
        assert!(t.data().iter().all(|&v| v == 0.0));
    }

    #[test]
    fn normalize_frame_hits_exact_bounds() {
        let profile = subject_profile(11, 0, false);
        let trial = generate_trial(&profile, SpeedCategory::Medium, StrikeCategory::Rear, 3);
        let t: Tensor<f64> = normalize_frame(trial.frame_bytes(50));
        let lo = t.data().iter().cloned().fold(f64::INFINITY, f64::min);
        let hi = t.data().iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        assert_eq!(lo, 0.0);
        assert_eq!(hi, 1.0);
    }

    #[test]
    fn cop_to_mm_maps_bounds_affinely() {
        assert_eq!(cop_to_mm(-0.5, 263.2).unwrap(), 0.0);
        assert_eq!(cop_to_mm(0.5, 263.2).unwrap(), 263.2);
        assert_eq!(cop_to_mm(0.0, 200.0).unwrap(), 100.0);
        assert!(cop_to_mm(0.51, 263.2).is_err());
    }

    #[test]
    fn toi_target_examples() {
        let t = toi_targets(95, 94).unwrap();
        assert_eq!(t.frames, 1);
        assert!((t.seconds - 1.0 / 60.0).abs() < 1e-15);
        assert!(t.in_training_window);

        let t = toi_targets(95, 80).unwrap();
        assert_eq!(t.frames, 15);
        assert!((t.seconds - 0.25).abs() < 1e-15);
        assert!(t.in_training_window);

        let t = toi_targets(95, 60).unwrap();
        assert_eq!(t.frames, 35);
        assert!(!t.in_training_window);

        assert!(toi_targets(95, 95).is_err());
    }

    #[test]
    fn covariates_track_kinematics() {
        // Neutral persona, zero jitter: commanded slow speed is exactly 1.0 m/s.
        let profile = SubjectProfile::noise_free(1);
        let trial = generate_trial(&profile, SpeedCategory::Slow, StrikeCategory::Mid, 10);
        assert_eq!(trial.torso_velocity, 1000.0);

        // Zero swing amplitude: toe speed degenerates to the torso speed.
        let mut flat = SubjectProfile::noise_free(2);
        flat.swing_scale = 0.0;
        let trial = generate_trial(&flat, SpeedCategory::Medium, StrikeCategory::Mid, 10);
        let (torso, toe) = trial.covariates();
        assert!((toe - torso).abs() < 1e-6, "{toe} vs {torso}");
    }

    #[test]
    fn toe_velocity_span_roughly_matches_reported_domain() {
        let ds = generate_dataset(6, 30, 1717).unwrap();
        let mut toes: Vec<f64> = ds.trials.iter().map(|t| t.toe_velocity as f64).collect();
        toes.sort_by(|a, b| a.partial_cmp(b).unwrap());
        let p10 = toes[toes.len() / 10];
        let p90 = toes[toes.len() * 9 / 10];
        let mean = toes.iter().sum::<f64>() / toes.len() as f64;
        assert!(p10 > 2600.0, "p10 {p10}");
        assert!(p90 < 5700.0, "p90 {p90}");
        assert!((3200.0..=4800.0).contains(&mean), "mean {mean}");
    }
}
