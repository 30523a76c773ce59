//! Frame-paced live inference benchmark: a producer emits synthetic stereo
//! frames at 60 FPS through a bounded queue while the consumer runs both the
//! COP and TOI models on every frame, propagating their stream state.

use std::sync::mpsc::{sync_channel, TrySendError};
use std::thread;
use std::time::{Duration, Instant};

use anyhow::{bail, Result};
use stride_core::datagen::{generate_trial, normalize_frame, SpeedCategory, StrikeCategory, SubjectProfile};
use stride_core::{ForecasterModel, StreamMode, StreamState, Task};

pub const FRAME_PERIOD: Duration = Duration::from_nanos(16_666_667);

/// One repeat's measurements.
#[derive(Debug, Clone, serde::Serialize)]
pub struct FpsReport {
    pub trial: usize,
    pub duration_s: f64,
    pub frames_processed: usize,
    pub frames_dropped: usize,
    pub effective_fps: f64,
    pub predictions: usize,
    pub p50_ms: f64,
    pub p99_ms: f64,
    pub max_ms: f64,
    pub mode: String,
    pub models: String,
}

#[derive(Debug, Clone)]
pub struct LivesimConfig {
    pub duration_s: f64,
    pub repeats: usize,
    pub mode: StreamMode,
    pub seed: u64,
    /// Test hook: artificial per-frame consumer delay.
    pub throttle: Option<Duration>,
}

/// Run the benchmark: `repeats` independent runs of `duration_s` seconds at
/// 60 FPS pacing, both models evaluated on every frame. The producer paces
/// against a monotonic deadline schedule (no drift accumulation); a full
/// queue counts the frame as dropped and says so in the report.
pub fn run_livesim(
    cop: &ForecasterModel<f32>,
    toi: &ForecasterModel<f32>,
    config: &LivesimConfig,
) -> Result<Vec<FpsReport>> {
    if cop.config.task != Task::Cop || toi.config.task != Task::Toi {
        bail!(
            "model task mismatch: expected one cop and one toi model, got {} and {}",
            cop.config.task.name(),
            toi.config.task.name()
        );
    }
    if !(config.duration_s > 0.0) {
        bail!("duration must be > 0 s, got {}", config.duration_s);
    }
    // Replay a rendered approach clip in a loop as the frame source.
    let profile = SubjectProfile::noise_free(0);
    let clip = generate_trial(&profile, SpeedCategory::Medium, StrikeCategory::Mid, config.seed);
    let n_clip = clip.n_frames();
    let total_frames = (config.duration_s * 60.0).round() as usize;

    let mut reports = Vec::with_capacity(config.repeats);
    for trial in 0..config.repeats {
        let (tx, rx) = sync_channel::<(usize, Instant)>(2);
        let producer = thread::spawn(move || {
            let start = Instant::now();
            let mut dropped = 0usize;
            for i in 0..total_frames {
                let deadline = start + FRAME_PERIOD * i as u32;
                // Sleep coarse, then spin the last stretch for tight pacing.
                loop {
                    let now = Instant::now();
                    if now >= deadline {
                        break;
                    }
                    let left = deadline - now;
                    if left > Duration::from_micros(500) {
                        thread::sleep(left - Duration::from_micros(300));
                    } else {
                        std::hint::spin_loop();
                    }
                }
                match tx.try_send((i, Instant::now())) {
                    Ok(()) => {}
                    Err(TrySendError::Full(_)) => dropped += 1,
                    Err(TrySendError::Disconnected(_)) => break,
                }
            }
            dropped
        });

        let mut cop_state = StreamState::new(&cop.config, config.mode);
        let mut toi_state = StreamState::new(&toi.config, config.mode);
        let mut latencies_ns: Vec<u64> = Vec::with_capacity(total_frames);
        let mut processed = 0usize;
        let mut predictions = 0usize;
        let run_start = Instant::now();
        while let Ok((i, produced_at)) = rx.recv() {
            let frame = normalize_frame::<f32>(clip.frame_bytes(i % n_clip));
            let a = cop.stream_predict(&frame, &mut cop_state)?;
            let b = toi.stream_predict(&frame, &mut toi_state)?;
            if let Some(t) = config.throttle {
                thread::sleep(t);
            }
            predictions += usize::from(a.is_some()) + usize::from(b.is_some());
            latencies_ns.push(produced_at.elapsed().as_nanos() as u64);
            processed += 1;
        }
        let elapsed = run_start.elapsed().as_secs_f64();
        let dropped = producer.join().expect("producer thread");
        latencies_ns.sort_unstable();
        let pct = |p: f64| -> f64 {
            if latencies_ns.is_empty() {
                return 0.0;
            }
            let idx = ((latencies_ns.len() - 1) as f64 * p).round() as usize;
            latencies_ns[idx] as f64 / 1e6
        };
        reports.push(FpsReport {
            trial,
            duration_s: elapsed,
            frames_processed: processed,
            frames_dropped: dropped,
            effective_fps: processed as f64 / elapsed,
            predictions,
            p50_ms: pct(0.50),
            p99_ms: pct(0.99),
            max_ms: latencies_ns.last().map(|&n| n as f64 / 1e6).unwrap_or(0.0),
            mode: match config.mode {
                StreamMode::Windowed => "windowed".into(),
                StreamMode::Continuous => "continuous".into(),
            },
            models: "cop+toi".into(),
        });
    }
    Ok(reports)
}

#[cfg(test)]
mod tests {
    use super::*;
    use stride_core::ForecasterConfig;

    fn model(task: Task) -> ForecasterModel<f32> {
        ForecasterModel::init_random(ForecasterConfig::default_for(task), 7)
    }

    #[test]
    fn rejects_task_mismatch_and_zero_duration() {
        let cop = model(Task::Cop);
        let toi = model(Task::Toi);
        let mut cfg = LivesimConfig {
            duration_s: 1.0,
            repeats: 1,
            mode: StreamMode::Windowed,
            seed: 1,
            throttle: None,
        };
        assert!(run_livesim(&cop, &cop, &cfg).is_err());
        cfg.duration_s = 0.0;
        assert!(run_livesim(&cop, &toi, &cfg).is_err());
    }

    #[test]
    fn short_run_pacing_and_prediction_counts() {
        let cop = model(Task::Cop);
        let toi = model(Task::Toi);
        let cfg = LivesimConfig {
            duration_s: 2.0,
            repeats: 1,
            mode: StreamMode::Windowed,
            seed: 2,
            throttle: None,
        };
        let reports = run_livesim(&cop, &toi, &cfg).unwrap();
        let r = &reports[0];
        assert_eq!(r.frames_processed + r.frames_dropped, 120);
        // Windowed mode: predictions start at frame 15, for both models.
        assert_eq!(r.predictions, 2 * (r.frames_processed.saturating_sub(14)));
        assert!(r.effective_fps > 30.0, "fps {}", r.effective_fps);
        assert!(r.p50_ms <= r.p99_ms && r.p99_ms <= r.max_ms);
    }

    #[test]
    fn throttled_consumer_drops_frames_loudly() {
        let cop = model(Task::Cop);
        let toi = model(Task::Toi);
        let cfg = LivesimConfig {
            duration_s: 1.5,
            repeats: 1,
            mode: StreamMode::Continuous,
            seed: 3,
            throttle: Some(Duration::from_millis(40)),
        };
        let r = &run_livesim(&cop, &toi, &cfg).unwrap()[0];
        assert!(r.frames_dropped > 0, "drops must be counted");
        assert!(r.effective_fps < 60.0);
        // Nothing lost silently: every produced frame is accounted for.
        assert_eq!(r.frames_processed + r.frames_dropped, 90);
    }
}
