//! Keypoint constraint model.
//!
//! Each upper-body joint is described by a 2D Gaussian over its offset from
//! the cow center. The forward map sends a center to the Gaussian mode
//! (`center + mean`); the inverse map sends a joint position back to the
//! center it implies.

use std::collections::BTreeMap;
use std::f64::consts::PI;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::joints::{JointId, NUM_UPPER};
use crate::skeleton::KeypointCandidate;

/// Regularization added to every fitted covariance diagonal, in px².
pub const DEFAULT_EPSILON: f64 = 1.0;

/// Minimum number of fully labelled frames accepted by [`fit_constraints`].
pub const MIN_TRAINING_FRAMES: usize = 3;

/// Symmetric 2×2 matrix `[[xx, xy], [xy, yy]]`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Cov2 {
    pub xx: f64,
    pub xy: f64,
    pub yy: f64,
}

impl Cov2 {
    pub fn diagonal(v: f64) -> Self {
        Cov2 { xx: v, xy: 0.0, yy: v }
    }

    pub fn det(&self) -> f64 {
        self.xx * self.yy - self.xy * self.xy
    }

    pub fn eigenvalues(&self) -> (f64, f64) {
        let half_tr = 0.5 * (self.xx + self.yy);
        let disc = (0.25 * (self.xx - self.yy).powi(2) + self.xy * self.xy).sqrt();
        (half_tr - disc, half_tr + disc)
    }

    pub fn is_spd(&self) -> bool {
        self.xx.is_finite() && self.xy.is_finite() && self.yy.is_finite() && self.xx > 0.0 && self.det() > 0.0
    }

    /// `vᵀ Σ⁻¹ v`.
    pub fn mahalanobis_sq(&self, v: Point) -> f64 {
        let det = self.det();
        (self.yy * v.x * v.x - 2.0 * self.xy * v.x * v.y + self.xx * v.y * v.y) / det
    }

    pub fn frobenius(&self) -> f64 {
        (self.xx * self.xx + 2.0 * self.xy * self.xy + self.yy * self.yy).sqrt()
    }

    pub fn sub(&self, o: &Cov2) -> Cov2 {
        Cov2 {
            xx: self.xx - o.xx,
            xy: self.xy - o.xy,
            yy: self.yy - o.yy,
        }
    }
}

/// Offset distribution of one joint relative to the cow center.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct JointConstraint {
    pub mean: Point,
    pub cov: Cov2,
}

#[derive(Debug, Clone, PartialEq)]
pub struct ConstraintModel {
    /// Indexed by the joint's canonical index (upper-body joints come first).
    pub joints: [JointConstraint; NUM_UPPER],
    pub epsilon: f64,
    pub frames_used: usize,
}

fn upper_index(joint: JointId) -> Result<usize> {
    if joint.is_upper() {
        Ok(joint.index())
    } else {
        Err(Error::NotUpperBody(joint))
    }
}

/// Arithmetic mean of upper-body points.
pub fn body_center(points: &[(JointId, Point)]) -> Result<Point> {
    if points.iter().any(|(j, _)| !j.is_upper()) {
        return Err(Error::LegHoofInCenter);
    }
    Point::mean(points.iter().map(|&(_, p)| p)).ok_or(Error::NoUpperBodyPoints)
}

/// Upper-body labels of one cow in one frame, indexed by canonical joint index.
pub type UpperLabels = [Option<Point>; NUM_UPPER];

/// Estimates the per-joint offset Gaussians from single-cow labelings.
///
/// Frames that do not label all nine upper-body joints are skipped.
pub fn fit_constraints(frames: &[UpperLabels]) -> Result<ConstraintModel> {
    fit_constraints_with_epsilon(frames, DEFAULT_EPSILON)
}

pub fn fit_constraints_with_epsilon(frames: &[UpperLabels], epsilon: f64) -> Result<ConstraintModel> {
    let complete: Vec<[Point; NUM_UPPER]> = frames
        .iter()
        .filter_map(|f| {
            let mut out = [Point::ORIGIN; NUM_UPPER];
            for (slot, p) in out.iter_mut().zip(f.iter()) {
                *slot = (*p)?;
            }
            Some(out)
        })
        .collect();
    let n = complete.len();
    if n < MIN_TRAINING_FRAMES {
        return Err(Error::InsufficientLabels { usable: n });
    }
    if frames.len() > n {
        log::debug!("fit_constraints: skipped {} incomplete frames", frames.len() - n);
    }

    // offsets[f][j] = p_j - c
    let offsets: Vec<[Point; NUM_UPPER]> = complete
        .iter()
        .map(|pts| {
            let c = Point::mean(pts.iter().copied()).expect("nine points");
            let mut o = [Point::ORIGIN; NUM_UPPER];
            for (slot, &p) in o.iter_mut().zip(pts.iter()) {
                *slot = p - c;
            }
            o
        })
        .collect();

    let mut joints = [JointConstraint {
        mean: Point::ORIGIN,
        cov: Cov2::diagonal(epsilon),
    }; NUM_UPPER];
    for (j, jc) in joints.iter_mut().enumerate() {
        let mean = Point::mean(offsets.iter().map(|o| o[j])).expect("n >= 3");
        let (mut sxx, mut sxy, mut syy) = (0.0, 0.0, 0.0);
        for o in &offsets {
            let d = o[j] - mean;
            sxx += d.x * d.x;
            sxy += d.x * d.y;
            syy += d.y * d.y;
        }
        let dof = (n - 1) as f64;
        *jc = JointConstraint {
            mean,
            cov: Cov2 {
                xx: sxx / dof + epsilon,
                xy: sxy / dof,
                yy: syy / dof + epsilon,
            },
        };
    }
    Ok(ConstraintModel {
        joints,
        epsilon,
        frames_used: n,
    })
}

impl ConstraintModel {
    /// Model with the given mean offsets and isotropic covariance `epsilon·I`.
    pub fn from_offsets(offsets: [Point; NUM_UPPER], epsilon: f64) -> Self {
        let mut joints = [JointConstraint {
            mean: Point::ORIGIN,
            cov: Cov2::diagonal(epsilon),
        }; NUM_UPPER];
        for (jc, m) in joints.iter_mut().zip(offsets) {
            jc.mean = m;
        }
        ConstraintModel {
            joints,
            epsilon,
            frames_used: 0,
        }
    }

    pub fn constraint(&self, joint: JointId) -> Result<&JointConstraint> {
        Ok(&self.joints[upper_index(joint)?])
    }

    pub fn mean_offset(&self, joint: JointId) -> Result<Point> {
        Ok(self.constraint(joint)?.mean)
    }

    /// Distance between the nose and tailhead offsets.
    pub fn body_length(&self) -> f64 {
        self.joints[JointId::Nose.index()]
            .mean
            .distance(self.joints[JointId::Tailhead.index()].mean)
    }

    /// Forward map: the most likely position of `joint` for a cow centered at `center`.
    pub fn project_joint(&self, center: Point, joint: JointId) -> Result<Point> {
        Ok(center + self.mean_offset(joint)?)
    }

    /// Inverse map: the cow center implied by a candidate position.
    pub fn backproject(&self, joint: JointId, position: Point) -> Result<Point> {
        Ok(position - self.mean_offset(joint)?)
    }

    pub fn backproject_center(&self, candidate: &KeypointCandidate) -> Result<Point> {
        self.backproject(candidate.joint, candidate.position)
    }

    /// Bivariate normal density of `position - center` under the joint's Gaussian.
    pub fn density(&self, joint: JointId, center: Point, position: Point) -> Result<f64> {
        let jc = self.constraint(joint)?;
        if !jc.cov.is_spd() {
            return Err(Error::NotPositiveDefinite(joint));
        }
        let d = position - center - jc.mean;
        let m = jc.cov.mahalanobis_sq(d);
        Ok((-0.5 * m).exp() / (2.0 * PI * jc.cov.det().sqrt()))
    }

    pub fn joint_likelihood(&self, center: Point, candidate: &KeypointCandidate) -> Result<f64> {
        self.density(candidate.joint, center, candidate.position)
    }

    /// Squared Mahalanobis distance of `position` from the joint's predicted location.
    pub fn mahalanobis_sq(&self, joint: JointId, center: Point, position: Point) -> Result<f64> {
        let jc = self.constraint(joint)?;
        if !jc.cov.is_spd() {
            return Err(Error::NotPositiveDefinite(joint));
        }
        Ok(jc.cov.mahalanobis_sq(position - center - jc.mean))
    }

    /// Mean offsets in contour order.
    pub fn reference_contour(&self) -> [Point; NUM_UPPER] {
        let mut out = [Point::ORIGIN; NUM_UPPER];
        for (slot, j) in out.iter_mut().zip(JointId::CONTOUR) {
            *slot = self.joints[j.index()].mean;
        }
        out
    }

    pub fn validate(&self) -> Result<()> {
        for j in JointId::UPPER {
            let jc = &self.joints[j.index()];
            if !jc.mean.x.is_finite() || !jc.mean.y.is_finite() {
                return Err(Error::InvalidModel(format!("non-finite mean for {j}")));
            }
            if !jc.cov.is_spd() {
                return Err(Error::NotPositiveDefinite(j));
            }
        }
        if self.body_length() <= 0.0 {
            return Err(Error::InvalidModel("body length must be positive".into()));
        }
        Ok(())
    }

    pub fn to_json(&self) -> ModelJson {
        let joints = JointId::UPPER
            .iter()
            .map(|&j| {
                let jc = &self.joints[j.index()];
                (
                    j,
                    JointJson {
                        mu: [jc.mean.x, jc.mean.y],
                        sigma: [[jc.cov.xx, jc.cov.xy], [jc.cov.xy, jc.cov.yy]],
                    },
                )
            })
            .collect();
        ModelJson {
            joints,
            epsilon: self.epsilon,
            frames_used: self.frames_used,
            config: None,
        }
    }

    pub fn from_json(doc: &ModelJson) -> Result<Self> {
        let mut joints = [JointConstraint {
            mean: Point::ORIGIN,
            cov: Cov2::diagonal(doc.epsilon),
        }; NUM_UPPER];
        for (j, jj) in &doc.joints {
            if !j.is_upper() {
                return Err(Error::InvalidModel(format!("{j} is not an upper-body joint")));
            }
            if jj.sigma[0][1] != jj.sigma[1][0] {
                return Err(Error::InvalidModel(format!("sigma for {j} is not symmetric")));
            }
        }
        for (slot, j) in joints.iter_mut().zip(JointId::UPPER) {
            let jj = doc.joints.get(&j).ok_or(Error::MissingJoint(j))?;
            *slot = JointConstraint {
                mean: jj.mu.into(),
                cov: Cov2 {
                    xx: jj.sigma[0][0],
                    xy: jj.sigma[0][1],
                    yy: jj.sigma[1][1],
                },
            };
        }
        let model = ConstraintModel {
            joints,
            epsilon: doc.epsilon,
            frames_used: doc.frames_used,
        };
        model.validate()?;
        Ok(model)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let doc: ModelJson = serde_json::from_str(&text).map_err(|e| Error::json(path, e))?;
        ConstraintModel::from_json(&doc)
    }

    pub fn save(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        let text = serde_json::to_string_pretty(&self.to_json()).map_err(|e| Error::json(path, e))?;
        std::fs::write(path, text + "\n").map_err(|e| Error::io(path, e))
    }
}

/// On-disk form of a [`ConstraintModel`].
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ModelJson {
    pub joints: BTreeMap<JointId, JointJson>,
    pub epsilon: f64,
    pub frames_used: usize,
    /// Settings of the run that produced the model, kept for reference.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub config: Option<serde_json::Value>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct JointJson {
    pub mu: [f64; 2],
    pub sigma: [[f64; 2]; 2],
}
