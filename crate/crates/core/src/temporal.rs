//! Sequence-level refinement: cross-frame matching into tracks, median
//! filtering of upper-body trajectories, and per-track speed.

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::joints::JointId;
use crate::skeleton::{CowSkeleton, Frame, JointObs, JointStatus};

pub const DEFAULT_GATE_FACTOR: f64 = 0.5;
pub const DEFAULT_MEDIAN_WINDOW: usize = 5;
pub const DEFAULT_OUTLIER_FACTOR: f64 = 0.15;
/// Tracks close after this many consecutive frames without a match.
pub const DEFAULT_MAX_MISSES: u64 = 15;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TrackStatus {
    Open,
    Closed,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Track {
    pub id: u64,
    /// One skeleton per frame, in strictly increasing frame order.
    pub skeletons: Vec<CowSkeleton>,
    pub status: TrackStatus,
}

impl Track {
    pub fn len(&self) -> usize {
        self.skeletons.len()
    }

    pub fn is_empty(&self) -> bool {
        self.skeletons.is_empty()
    }

    pub fn first_frame(&self) -> Option<u64> {
        self.skeletons.first().map(|s| s.frame_index)
    }

    pub fn last_frame(&self) -> Option<u64> {
        self.skeletons.last().map(|s| s.frame_index)
    }

    fn last_center(&self) -> Point {
        self.skeletons.last().expect("tracks are never empty").center
    }
}

/// Greedy nearest-center frame-to-frame matcher.
///
/// Frames must be fed in strictly increasing order.
#[derive(Debug, Clone)]
pub struct Tracker {
    pub gate: f64,
    pub max_misses: u64,
    open: Vec<Track>,
    closed: Vec<Track>,
    next_id: u64,
    last_frame: Option<u64>,
}

impl Tracker {
    pub fn new(gate: f64) -> Self {
        assert!(gate > 0.0, "gate must be positive");
        Tracker {
            gate,
            max_misses: DEFAULT_MAX_MISSES,
            open: Vec::new(),
            closed: Vec::new(),
            next_id: 0,
            last_frame: None,
        }
    }

    pub fn open_tracks(&self) -> &[Track] {
        &self.open
    }

    pub fn closed_tracks(&self) -> &[Track] {
        &self.closed
    }

    fn close_stale(&mut self, through_frame: u64) {
        let max_misses = self.max_misses;
        let (stale, keep): (Vec<Track>, Vec<Track>) = std::mem::take(&mut self.open)
            .into_iter()
            .partition(|t| through_frame.saturating_sub(t.last_frame().unwrap_or(0)) >= max_misses);
        self.open = keep;
        for mut t in stale {
            t.status = TrackStatus::Closed;
            self.closed.push(t);
        }
    }

    /// Matches one frame's detections to open tracks. Returns the track id of
    /// every detection, in input order.
    pub fn match_frame(&mut self, frame_index: u64, detections: &[CowSkeleton]) -> Result<Vec<u64>> {
        if let Some(last) = self.last_frame {
            if frame_index <= last {
                return Err(Error::OutOfOrder { last, got: frame_index });
            }
            self.close_stale(frame_index - 1);
        }
        self.last_frame = Some(frame_index);

        // canonical detection order makes ids independent of input order
        let mut order: Vec<usize> = (0..detections.len()).collect();
        order.sort_by(|&a, &b| {
            let (ca, cb) = (detections[a].center, detections[b].center);
            ca.x.total_cmp(&cb.x).then(ca.y.total_cmp(&cb.y))
        });

        let mut pairs: Vec<(f64, usize, usize)> = Vec::new();
        for (ti, t) in self.open.iter().enumerate() {
            for (rank, &di) in order.iter().enumerate() {
                let d = t.last_center().distance(detections[di].center);
                if d < self.gate {
                    pairs.push((d, ti, rank));
                }
            }
        }
        pairs.sort_by(|a, b| {
            a.0.total_cmp(&b.0)
                .then(self.open[a.1].id.cmp(&self.open[b.1].id))
                .then(a.2.cmp(&b.2))
        });

        let mut track_used = vec![false; self.open.len()];
        let mut assigned: Vec<Option<u64>> = vec![None; detections.len()];
        for &(_, ti, rank) in &pairs {
            let di = order[rank];
            if track_used[ti] || assigned[di].is_some() {
                continue;
            }
            track_used[ti] = true;
            let t = &mut self.open[ti];
            let mut s = detections[di].clone();
            s.frame_index = frame_index;
            s.track_id = Some(t.id);
            t.skeletons.push(s);
            assigned[di] = Some(t.id);
        }
        for &di in &order {
            if assigned[di].is_some() {
                continue;
            }
            let id = self.next_id;
            self.next_id += 1;
            let mut s = detections[di].clone();
            s.frame_index = frame_index;
            s.track_id = Some(id);
            self.open.push(Track {
                id,
                skeletons: vec![s],
                status: TrackStatus::Open,
            });
            assigned[di] = Some(id);
        }
        self.close_stale(frame_index);
        Ok(assigned
            .into_iter()
            .map(|a| a.expect("every detection assigned"))
            .collect())
    }

    /// All tracks, open and closed, ordered by id.
    pub fn finish(self) -> Vec<Track> {
        let mut all = self.closed;
        all.extend(self.open);
        all.sort_by_key(|t| t.id);
        all
    }
}

/// Sliding median with the window shrinking symmetrically at both ends.
pub fn sliding_median(values: &[f64], window: usize) -> Vec<f64> {
    let n = values.len();
    let half = window / 2;
    let mut buf = Vec::with_capacity(window);
    (0..n)
        .map(|i| {
            let h = half.min(i).min(n - 1 - i);
            buf.clear();
            buf.extend_from_slice(&values[i - h..=i + h]);
            buf.sort_by(f64::total_cmp);
            buf[h]
        })
        .collect()
}

/// Median-filters every upper-body trajectory of a track.
///
/// Points more than `outlier_distance` from their median are first replaced
/// by it and flagged predicted; the cleaned trajectory is then median
/// filtered again and every upper-body position takes that value. Monotone
/// stretches pass through unchanged. Leg/hoof joints are left as they are.
pub fn filter_track(track: &Track, window: usize, outlier_distance: f64) -> Result<Track> {
    if window == 0 || window % 2 == 0 {
        return Err(Error::BadWindow(window));
    }
    let mut out = track.clone();
    if track.len() < 2 {
        return Ok(out);
    }
    for j in JointId::UPPER {
        let idx: Vec<usize> = (0..track.len())
            .filter(|&i| track.skeletons[i].position(j).is_some())
            .collect();
        if idx.len() < 2 {
            continue;
        }
        let mut xs: Vec<f64> = idx.iter().map(|&i| track.skeletons[i].position(j).unwrap().x).collect();
        let mut ys: Vec<f64> = idx.iter().map(|&i| track.skeletons[i].position(j).unwrap().y).collect();
        let mx = sliding_median(&xs, window);
        let my = sliding_median(&ys, window);
        let mut outlier = vec![false; idx.len()];
        for k in 0..idx.len() {
            if Point::new(mx[k], my[k]).distance(Point::new(xs[k], ys[k])) > outlier_distance {
                outlier[k] = true;
                xs[k] = mx[k];
                ys[k] = my[k];
            }
        }
        let fx = sliding_median(&xs, window);
        let fy = sliding_median(&ys, window);
        for (k, &i) in idx.iter().enumerate() {
            let obs = *track.skeletons[i].get(j).expect("present");
            let status = if outlier[k] { JointStatus::Predicted } else { obs.status };
            out.skeletons[i].set(
                j,
                JointObs {
                    position: Point::new(fx[k], fy[k]),
                    status,
                    ..obs
                },
            );
        }
    }
    for s in &mut out.skeletons {
        s.recompute_center();
    }
    Ok(out)
}

/// Mean center speed in pixels per second.
pub fn track_speed(track: &Track, fps: f64) -> Result<f64> {
    if track.len() < 2 {
        return Err(Error::TrackTooShort(track.len()));
    }
    let steps: Vec<f64> = track
        .skeletons
        .windows(2)
        .map(|w| {
            let gap = w[1].frame_index.saturating_sub(w[0].frame_index).max(1) as f64;
            w[0].center.distance(w[1].center) / gap
        })
        .collect();
    Ok(steps.iter().sum::<f64>() / steps.len() as f64 * fps)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TemporalParams {
    /// Matching gate as a fraction of body length.
    pub gate_factor: f64,
    pub median_window: usize,
    /// Outlier distance as a fraction of body length.
    pub outlier_factor: f64,
}

impl Default for TemporalParams {
    fn default() -> Self {
        TemporalParams {
            gate_factor: DEFAULT_GATE_FACTOR,
            median_window: DEFAULT_MEDIAN_WINDOW,
            outlier_factor: DEFAULT_OUTLIER_FACTOR,
        }
    }
}

/// Tracks and filters a whole sequence of per-frame detections.
///
/// `frames` must be sorted by frame index. Returns the filtered tracks;
/// every skeleton carries its track id.
pub fn track_and_filter(frames: &[Frame], body_length: f64, params: &TemporalParams) -> Result<Vec<Track>> {
    let mut tracker = Tracker::new(params.gate_factor * body_length);
    for f in frames {
        tracker.match_frame(f.index, &f.cows)?;
    }
    tracker
        .finish()
        .iter()
        .map(|t| filter_track(t, params.median_window, params.outlier_factor * body_length))
        .collect()
}

/// Regroups track skeletons by frame, ordering cows by center x within a frame.
pub fn frames_from_tracks(frame_indices: &[u64], tracks: &[Track]) -> Vec<Frame> {
    frame_indices
        .iter()
        .map(|&f| {
            let mut cows: Vec<CowSkeleton> = tracks
                .iter()
                .filter_map(|t| t.skeletons.iter().find(|s| s.frame_index == f).cloned())
                .collect();
            cows.sort_by(|a, b| {
                a.center
                    .x
                    .total_cmp(&b.center.x)
                    .then(a.center.y.total_cmp(&b.center.y))
            });
            Frame::new(f, cows)
        })
        .collect()
}
