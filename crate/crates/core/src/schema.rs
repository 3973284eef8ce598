//! JSON form of per-sequence detections and ground-truth labels.
//!
//! Both share one schema:
//! `{"width":W,"height":H,"frames":[{"frame":t,"cows":[{"track_id":k,"joints":{"NOSE":{"x":..,"y":..,"conf":..,"status":"detected"}}}]}]}`
//! with an optional `tracks` summary and an optional `config` echo.

use std::collections::BTreeMap;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::joints::JointId;
use crate::skeleton::{CowSkeleton, Frame, JointObs, JointStatus};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointRecord {
    pub x: f64,
    pub y: f64,
    #[serde(default = "one")]
    pub conf: f64,
    #[serde(default = "detected")]
    pub status: JointStatus,
}

fn one() -> f64 {
    1.0
}

fn detected() -> JointStatus {
    JointStatus::Detected
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CowRecord {
    #[serde(default)]
    pub track_id: Option<u64>,
    pub joints: BTreeMap<JointId, JointRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct FrameRecord {
    pub frame: u64,
    pub cows: Vec<CowRecord>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct TrackSummary {
    pub id: u64,
    pub frames: [u64; 2],
    /// `None` for single-frame tracks.
    pub speed_px_s: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SequenceRecord {
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub width: Option<usize>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub height: Option<usize>,
    pub frames: Vec<FrameRecord>,
    #[serde(default, skip_serializing_if = "Vec::is_empty")]
    pub tracks: Vec<TrackSummary>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

/// A decoded sequence of per-frame skeletons.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Sequence {
    pub width: Option<usize>,
    pub height: Option<usize>,
    pub frames: Vec<Frame>,
    pub tracks: Vec<TrackSummary>,
    pub config: Option<serde_json::Value>,
}

impl CowRecord {
    pub fn from_skeleton(s: &CowSkeleton) -> Self {
        let joints = JointId::ALL
            .iter()
            .filter_map(|&j| {
                s.get(j).map(|o| {
                    (
                        j,
                        JointRecord {
                            x: o.position.x,
                            y: o.position.y,
                            conf: o.confidence,
                            status: o.status,
                        },
                    )
                })
            })
            .collect();
        CowRecord {
            track_id: s.track_id,
            joints,
        }
    }

    /// The center is recomputed from the non-absent upper-body joints.
    pub fn to_skeleton(&self, frame_index: u64) -> CowSkeleton {
        let mut s = CowSkeleton::empty(frame_index);
        s.track_id = self.track_id;
        for (&j, r) in &self.joints {
            s.set(
                j,
                JointObs {
                    position: Point::new(r.x, r.y),
                    confidence: r.conf,
                    status: r.status,
                },
            );
        }
        s.recompute_center();
        s
    }
}

impl Sequence {
    pub fn new(width: usize, height: usize, frames: Vec<Frame>) -> Self {
        Sequence {
            width: Some(width),
            height: Some(height),
            frames,
            ..Default::default()
        }
    }

    pub fn size(&self) -> Option<(usize, usize)> {
        Some((self.width?, self.height?))
    }

    pub fn to_record(&self) -> SequenceRecord {
        SequenceRecord {
            width: self.width,
            height: self.height,
            frames: self
                .frames
                .iter()
                .map(|f| FrameRecord {
                    frame: f.index,
                    cows: f.cows.iter().map(CowRecord::from_skeleton).collect(),
                })
                .collect(),
            tracks: self.tracks.clone(),
            config: self.config.clone(),
        }
    }

    pub fn from_record(rec: SequenceRecord) -> Self {
        Sequence {
            width: rec.width,
            height: rec.height,
            frames: rec
                .frames
                .iter()
                .map(|f| Frame::new(f.frame, f.cows.iter().map(|c| c.to_skeleton(f.frame)).collect()))
                .collect(),
            tracks: rec.tracks,
            config: rec.config,
        }
    }

    pub fn to_json_string(&self) -> String {
        let mut s = serde_json::to_string_pretty(&self.to_record()).expect("sequence serializes");
        s.push('\n');
        s
    }

    pub fn from_json_str(text: &str, path: impl AsRef<Path>) -> Result<Self> {
        let rec: SequenceRecord = serde_json::from_str(text).map_err(|e| Error::json(path.as_ref(), e))?;
        Ok(Sequence::from_record(rec))
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Sequence::from_json_str(&text, path)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_json_string()).map_err(|e| Error::io(path, e))
    }

    /// Upper-body labels of every cow, for constraint fitting. Absent joints
    /// count as unlabelled.
    pub fn upper_labels(&self) -> Vec<crate::model::UpperLabels> {
        self.frames
            .iter()
            .flat_map(|f| f.cows.iter())
            .map(|c| {
                let mut out = [None; crate::joints::NUM_UPPER];
                for (slot, &j) in out.iter_mut().zip(JointId::UPPER.iter()) {
                    *slot = c.position(j);
                }
                out
            })
            .collect()
    }
}
