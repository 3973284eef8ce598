//! Whole-sequence processing: per-frame detection on a worker pool, then
//! tracking, median filtering and speed estimation in frame order.

use rayon::prelude::*;

use crate::confmap::ConfidenceMapStack;
use crate::error::{Error, Result};
use crate::grouping::{detect_frame, detect_frame_max_only, DetectParams};
use crate::model::ConstraintModel;
use crate::schema::{Sequence, TrackSummary};
use crate::skeleton::Frame;
use crate::temporal::{frames_from_tracks, track_and_filter, track_speed, TemporalParams, Track};

pub const DEFAULT_FPS: f64 = 12.0;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PipelineParams {
    pub detect: DetectParams,
    pub temporal: TemporalParams,
    pub fps: f64,
    /// Worker threads for per-frame detection; 0 uses every core.
    pub workers: usize,
}

impl Default for PipelineParams {
    fn default() -> Self {
        PipelineParams {
            detect: DetectParams::default(),
            temporal: TemporalParams::default(),
            fps: DEFAULT_FPS,
            workers: 0,
        }
    }
}

/// Output of [`run_sequence`].
#[derive(Debug, Clone, PartialEq)]
pub struct SequenceResult {
    /// Per-frame detections before tracking.
    pub raw: Vec<Frame>,
    /// Tracked and filtered detections, one entry per input frame.
    pub frames: Vec<Frame>,
    pub tracks: Vec<Track>,
    pub summaries: Vec<TrackSummary>,
}

impl SequenceResult {
    pub fn to_sequence(&self, width: usize, height: usize) -> Sequence {
        let mut s = Sequence::new(width, height, self.frames.clone());
        s.tracks = self.summaries.clone();
        s
    }
}

fn pool(workers: usize) -> Result<rayon::ThreadPool> {
    rayon::ThreadPoolBuilder::new()
        .num_threads(workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start worker pool: {e}")))
}

/// Runs `per_frame` on frames `0..n` on a bounded pool and returns the
/// results in frame order.
pub fn map_frames<T, F>(n: usize, workers: usize, per_frame: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(usize) -> Result<T> + Sync,
{
    pool(workers)?.install(|| (0..n).into_par_iter().map(&per_frame).collect())
}

/// Detects every frame produced by `source`, then tracks and filters.
///
/// `source(i)` returns the color and diff stacks of the `i`-th frame; frame
/// indices must increase with `i`.
pub fn run_sequence<F>(n: usize, source: F, model: &ConstraintModel, params: &PipelineParams) -> Result<SequenceResult>
where
    F: Fn(usize) -> Result<(ConfidenceMapStack, ConfidenceMapStack)> + Sync,
{
    let raw = map_frames(n, params.workers, |i| {
        let (color, diff) = source(i)?;
        let det = detect_frame(&color, &diff, model, &params.detect)?;
        log::debug!(
            "frame {}: {} cows, {} rejected clusters",
            color.frame_index,
            det.cows.len(),
            det.rejected_clusters.len()
        );
        Ok(Frame::new(color.frame_index, det.cows))
    })?;
    finish_sequence(raw, model, params)
}

/// Tracking and filtering stages on per-frame detections.
pub fn finish_sequence(raw: Vec<Frame>, model: &ConstraintModel, params: &PipelineParams) -> Result<SequenceResult> {
    let tracks = track_and_filter(&raw, model.body_length(), &params.temporal)?;
    let indices: Vec<u64> = raw.iter().map(|f| f.index).collect();
    let frames = frames_from_tracks(&indices, &tracks);
    let summaries = tracks
        .iter()
        .map(|t| TrackSummary {
            id: t.id,
            frames: [t.first_frame().unwrap_or(0), t.last_frame().unwrap_or(0)],
            speed_px_s: track_speed(t, params.fps).ok(),
        })
        .collect();
    Ok(SequenceResult {
        raw,
        frames,
        tracks,
        summaries,
    })
}

/// The one-point-per-map baseline over a whole sequence; no tracking.
pub fn run_max_only<F>(n: usize, source: F, threshold: f64, workers: usize) -> Result<Vec<Frame>>
where
    F: Fn(usize) -> Result<(ConfidenceMapStack, ConfidenceMapStack)> + Sync,
{
    map_frames(n, workers, |i| {
        let (color, diff) = source(i)?;
        Ok(Frame::new(
            color.frame_index,
            detect_frame_max_only(&color, &diff, threshold)?,
        ))
    })
}
