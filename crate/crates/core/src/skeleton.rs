use serde::{Deserialize, Serialize};

use crate::geometry::{Point, Rect};
use crate::joints::{JointId, NUM_JOINTS, NUM_UPPER};

/// Which confidence-map stream a candidate was extracted from.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MapSource {
    Color,
    Diff,
    Merged,
}

/// A scored location for one joint in one frame.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct KeypointCandidate {
    pub joint: JointId,
    pub position: Point,
    pub confidence: f64,
    pub source: MapSource,
}

impl KeypointCandidate {
    pub fn new(joint: JointId, position: Point, confidence: f64) -> Self {
        KeypointCandidate {
            joint,
            position,
            confidence,
            source: MapSource::Merged,
        }
    }

    /// Canonical processing order: joint, then row, then column, then score.
    pub fn canonical_cmp(&self, other: &Self) -> std::cmp::Ordering {
        self.joint
            .cmp(&other.joint)
            .then(self.position.y.total_cmp(&other.position.y))
            .then(self.position.x.total_cmp(&other.position.x))
            .then(other.confidence.total_cmp(&self.confidence))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum JointStatus {
    Detected,
    Predicted,
    Absent,
}

/// One joint of one skeleton.
///
/// Detector output never stores `Absent` entries. Ground-truth labels use
/// `Absent` with a known position for joints hidden behind an obstacle.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointObs {
    pub position: Point,
    pub confidence: f64,
    pub status: JointStatus,
}

impl JointObs {
    pub fn detected(position: Point, confidence: f64) -> Self {
        JointObs {
            position,
            confidence,
            status: JointStatus::Detected,
        }
    }

    pub fn predicted(position: Point) -> Self {
        JointObs {
            position,
            confidence: 0.0,
            status: JointStatus::Predicted,
        }
    }
}

/// One cow instance in one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct CowSkeleton {
    pub joints: [Option<JointObs>; NUM_JOINTS],
    pub center: Point,
    pub frame_index: u64,
    pub track_id: Option<u64>,
}

impl CowSkeleton {
    pub fn empty(frame_index: u64) -> Self {
        CowSkeleton {
            joints: [None; NUM_JOINTS],
            center: Point::ORIGIN,
            frame_index,
            track_id: None,
        }
    }

    pub fn get(&self, joint: JointId) -> Option<&JointObs> {
        self.joints[joint.index()].as_ref()
    }

    pub fn set(&mut self, joint: JointId, obs: JointObs) {
        self.joints[joint.index()] = Some(obs);
    }

    pub fn clear(&mut self, joint: JointId) {
        self.joints[joint.index()] = None;
    }

    pub fn status(&self, joint: JointId) -> JointStatus {
        self.get(joint).map_or(JointStatus::Absent, |o| o.status)
    }

    /// Position of a joint that is not absent.
    pub fn position(&self, joint: JointId) -> Option<Point> {
        self.get(joint)
            .filter(|o| o.status != JointStatus::Absent)
            .map(|o| o.position)
    }

    /// Any known position, including ground-truth positions of hidden joints.
    pub fn known_position(&self, joint: JointId) -> Option<Point> {
        self.get(joint).map(|o| o.position)
    }

    pub fn detected_upper_count(&self) -> usize {
        JointId::UPPER
            .iter()
            .filter(|&&j| self.status(j) == JointStatus::Detected)
            .count()
    }

    /// Mean of the upper-body joints that are not absent.
    pub fn upper_mean(&self) -> Option<Point> {
        Point::mean(JointId::UPPER.iter().filter_map(|&j| self.position(j)))
    }

    pub fn recompute_center(&mut self) {
        if let Some(c) = self.upper_mean() {
            self.center = c;
        }
    }

    /// Upper-body positions in contour order, or the first joint lacking one.
    pub fn contour(&self) -> Result<[Point; NUM_UPPER], JointId> {
        let mut out = [Point::ORIGIN; NUM_UPPER];
        for (slot, &j) in out.iter_mut().zip(JointId::CONTOUR.iter()) {
            *slot = self.known_position(j).ok_or(j)?;
        }
        Ok(out)
    }

    pub fn upper_bounds(&self) -> Option<Rect> {
        Rect::bounding(JointId::UPPER.iter().filter_map(|&j| self.known_position(j)))
    }

    pub fn translate(&self, v: Point) -> CowSkeleton {
        let mut out = self.clone();
        for obs in out.joints.iter_mut().flatten() {
            obs.position += v;
        }
        out.center += v;
        out
    }
}

/// All cows reported for one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Frame {
    pub index: u64,
    pub cows: Vec<CowSkeleton>,
}

impl Frame {
    pub fn new(index: u64, cows: Vec<CowSkeleton>) -> Self {
        Frame { index, cows }
    }
}
