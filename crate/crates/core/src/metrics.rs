//! Evaluation: Body F1, Leg-hoof F1, Valid Cow Percentage, Temporal
//! Consistency, and skeleton-to-mask conversion.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::geometry::{Point, Polygon, Span};
use crate::joints::{JointId, Limb, NUM_UPPER};
use crate::model::ConstraintModel;
use crate::skeleton::{CowSkeleton, Frame};
use crate::temporal::Track;

pub const DEFAULT_LEGHOOF_THRESHOLD: f64 = 30.0;
pub const DEFAULT_THETA_FACTOR: f64 = 0.35;
/// Half of the horizontal width a limb segment is expanded to in masks.
pub const LIMB_HALF_WIDTH: f64 = 10.0;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BinaryMask {
    pub width: usize,
    pub height: usize,
    pub data: Vec<bool>,
}

impl BinaryMask {
    pub fn new(width: usize, height: usize) -> Self {
        BinaryMask {
            width,
            height,
            data: vec![false; width * height],
        }
    }

    pub fn get(&self, x: usize, y: usize) -> bool {
        self.data[y * self.width + x]
    }

    pub fn set(&mut self, x: usize, y: usize, v: bool) {
        self.data[y * self.width + x] = v;
    }

    pub fn count(&self) -> usize {
        self.data.iter().filter(|&&b| b).count()
    }

    /// Sets every pixel covered by `spans`, ignoring out-of-range rows.
    pub fn fill_spans(&mut self, spans: &[Span]) {
        for s in spans {
            if s.y < 0 || s.y as usize >= self.height {
                continue;
            }
            let row = s.y as usize * self.width;
            let x0 = s.x0.clamp(0, self.width as i64) as usize;
            let x1 = s.x1.clamp(0, self.width as i64) as usize;
            self.data[row + x0..row + x1].iter_mut().for_each(|b| *b = true);
        }
    }

    pub fn from_polygon(poly: &Polygon, width: usize, height: usize) -> Self {
        let mut m = BinaryMask::new(width, height);
        m.fill_spans(&poly.spans(width, height));
        m
    }
}

/// `2|a∩b| / (|a|+|b|)`, or 1 when both masks are empty.
pub fn mask_dice(a: &BinaryMask, b: &BinaryMask) -> Result<f64> {
    if (a.width, a.height) != (b.width, b.height) {
        return Err(Error::DimensionMismatch(format!(
            "masks are {}x{} and {}x{}",
            a.width, a.height, b.width, b.height
        )));
    }
    let (mut inter, mut na, mut nb) = (0usize, 0usize, 0usize);
    for (&x, &y) in a.data.iter().zip(&b.data) {
        na += x as usize;
        nb += y as usize;
        inter += (x && y) as usize;
    }
    if na + nb == 0 {
        return Ok(1.0);
    }
    Ok(2.0 * inter as f64 / (na + nb) as f64)
}

/// Closed upper-body contour polygon.
pub fn body_polygon(skeleton: &CowSkeleton) -> Result<Polygon> {
    let pts = skeleton.contour().map_err(Error::IncompleteBody)?;
    Ok(Polygon::new(pts.to_vec()))
}

/// Pixel count of the intersection of two span lists sorted by `(y, x0)`.
fn span_overlap(a: &[Span], b: &[Span]) -> u64 {
    let mut total = 0u64;
    let mut j0 = 0usize;
    for sa in a {
        while j0 < b.len() && b[j0].y < sa.y {
            j0 += 1;
        }
        let mut j = j0;
        while j < b.len() && b[j].y == sa.y {
            let lo = sa.x0.max(b[j].x0);
            let hi = sa.x1.min(b[j].x1);
            if hi > lo {
                total += (hi - lo) as u64;
            }
            j += 1;
        }
    }
    total
}

fn span_area(s: &[Span]) -> u64 {
    s.iter().map(Span::len).sum()
}

fn body_spans(cow: &CowSkeleton, size: (usize, usize)) -> Vec<Span> {
    body_polygon(cow).map(|p| p.spans(size.0, size.1)).unwrap_or_default()
}

fn span_dice(a: &[Span], b: &[Span]) -> f64 {
    let (na, nb) = (span_area(a), span_area(b));
    if na + nb == 0 {
        return 0.0;
    }
    2.0 * span_overlap(a, b) as f64 / (na + nb) as f64
}

/// Body-polygon Dice between every detected and every true cow of a frame.
pub fn body_dice_matrix(detected: &[CowSkeleton], truth: &[CowSkeleton], size: (usize, usize)) -> Vec<Vec<f64>> {
    let ds: Vec<Vec<Span>> = detected.iter().map(|c| body_spans(c, size)).collect();
    let ts: Vec<Vec<Span>> = truth.iter().map(|c| body_spans(c, size)).collect();
    ds.iter()
        .map(|d| ts.iter().map(|t| span_dice(d, t)).collect())
        .collect()
}

/// Greedy pairing by descending Dice; only pairs with positive Dice are kept.
/// Returns `(detected index, truth index, dice)`.
pub fn pair_by_dice(dice: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    let mut cells: Vec<(f64, usize, usize)> = Vec::new();
    for (i, row) in dice.iter().enumerate() {
        for (j, &d) in row.iter().enumerate() {
            if d > 0.0 {
                cells.push((d, i, j));
            }
        }
    }
    cells.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let n_true = dice.first().map_or(0, Vec::len);
    let mut det_used = vec![false; dice.len()];
    let mut true_used = vec![false; n_true];
    let mut out = Vec::new();
    for (d, i, j) in cells {
        if det_used[i] || true_used[j] {
            continue;
        }
        det_used[i] = true;
        true_used[j] = true;
        out.push((i, j, d));
    }
    out
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FrameBodyStats {
    pub frame: u64,
    pub detected: usize,
    pub truth: usize,
    pub matched: usize,
    pub dice_sum: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BodyF1 {
    pub score: f64,
    pub mean_dice: f64,
    pub detection_f1: f64,
    pub detected: usize,
    pub truth: usize,
    pub matched: usize,
    pub per_frame: Vec<FrameBodyStats>,
}

fn harmonic_f1(matched: usize, detected: usize, labelled: usize) -> f64 {
    if detected == 0 && labelled == 0 {
        return 1.0;
    }
    if matched == 0 {
        return 0.0;
    }
    let p = matched as f64 / detected as f64;
    let r = matched as f64 / labelled as f64;
    2.0 * p * r / (p + r)
}

fn frames_by_index(frames: &[Frame]) -> BTreeMap<u64, &[CowSkeleton]> {
    frames.iter().map(|f| (f.index, f.cows.as_slice())).collect()
}

/// Body F1: mean body-polygon Dice over paired cows times the cow-count F1.
///
/// Detection frames are aligned to truth frames by index; a truth frame
/// without a detection frame counts as zero detections.
pub fn body_f1(detections: &[Frame], truth: &[Frame], size: (usize, usize)) -> Result<BodyF1> {
    if truth.is_empty() {
        return Err(Error::NoTruthFrames);
    }
    let det = frames_by_index(detections);
    let mut per_frame = Vec::with_capacity(truth.len());
    let (mut nd, mut nt, mut nm, mut dice_sum) = (0, 0, 0, 0.0);
    for tf in truth {
        let dcows = det.get(&tf.index).copied().unwrap_or(&[]);
        let pairs = pair_by_dice(&body_dice_matrix(dcows, &tf.cows, size));
        let s: f64 = pairs.iter().map(|p| p.2).sum();
        per_frame.push(FrameBodyStats {
            frame: tf.index,
            detected: dcows.len(),
            truth: tf.cows.len(),
            matched: pairs.len(),
            dice_sum: s,
        });
        nd += dcows.len();
        nt += tf.cows.len();
        nm += pairs.len();
        dice_sum += s;
    }
    let detection_f1 = harmonic_f1(nm, nd, nt);
    let mean_dice = if nm > 0 {
        dice_sum / nm as f64
    } else if nd == 0 && nt == 0 {
        1.0
    } else {
        0.0
    };
    Ok(BodyF1 {
        score: mean_dice * detection_f1,
        mean_dice,
        detection_f1,
        detected: nd,
        truth: nt,
        matched: nm,
        per_frame,
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LegHoofF1 {
    pub f1: f64,
    pub precision: f64,
    pub recall: f64,
    pub matched: usize,
    pub detected: usize,
    pub labelled: usize,
}

fn leg_joints_present(cow: &CowSkeleton) -> usize {
    JointId::LEG_HOOF.iter().filter(|&&j| cow.position(j).is_some()).count()
}

/// Leg-hoof F1 over cows paired as in [`body_f1`].
///
/// A detected leg/hoof joint matches the true joint with the same id when
/// they are closer than `threshold`. True joints marked absent are ignored.
pub fn leghoof_f1(detections: &[Frame], truth: &[Frame], threshold: f64, size: (usize, usize)) -> Result<LegHoofF1> {
    let det = frames_by_index(detections);
    let (mut matched, mut detected, mut labelled) = (0, 0, 0);
    for tf in truth {
        let dcows = det.get(&tf.index).copied().unwrap_or(&[]);
        detected += dcows.iter().map(leg_joints_present).sum::<usize>();
        labelled += tf.cows.iter().map(leg_joints_present).sum::<usize>();
        for (i, j, _) in pair_by_dice(&body_dice_matrix(dcows, &tf.cows, size)) {
            for leg in JointId::LEG_HOOF {
                if let (Some(d), Some(t)) = (dcows[i].position(leg), tf.cows[j].position(leg)) {
                    if d.distance(t) < threshold {
                        matched += 1;
                    }
                }
            }
        }
    }
    let precision = if detected > 0 {
        matched as f64 / detected as f64
    } else {
        0.0
    };
    let recall = if labelled > 0 {
        matched as f64 / labelled as f64
    } else {
        0.0
    };
    Ok(LegHoofF1 {
        f1: harmonic_f1(matched, detected, labelled),
        precision,
        recall,
        matched,
        detected,
        labelled,
    })
}

/// Discrete Fréchet distance with Euclidean ground distance.
pub fn discrete_frechet(p: &[Point], q: &[Point]) -> Result<f64> {
    if p.is_empty() || q.is_empty() {
        return Err(Error::EmptyPolyline);
    }
    let m = q.len();
    let mut prev = vec![0.0f64; m];
    let mut cur = vec![0.0f64; m];
    for (i, &pi) in p.iter().enumerate() {
        for (j, &qj) in q.iter().enumerate() {
            let d = pi.distance(qj);
            cur[j] = match (i, j) {
                (0, 0) => d,
                (0, _) => cur[j - 1].max(d),
                (_, 0) => prev[0].max(d),
                _ => prev[j].min(prev[j - 1]).min(cur[j - 1]).max(d),
            };
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    Ok(prev[m - 1])
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InvalidReason {
    IncompleteBody { joint: JointId },
    ContourMismatch { distance: f64 },
    LegAboveBody { joint: JointId },
    HoofAboveLeg { joint: JointId },
}

impl std::fmt::Display for InvalidReason {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            InvalidReason::IncompleteBody { joint } => write!(f, "missing {joint}"),
            InvalidReason::ContourMismatch { distance } => {
                write!(f, "contour too far from reference ({distance:.1} px)")
            }
            InvalidReason::LegAboveBody { joint } => write!(f, "{joint} above body"),
            InvalidReason::HoofAboveLeg { joint } => write!(f, "hoof above leg ({joint})"),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Validity {
    pub valid: bool,
    /// Fréchet distance between the centered contour and the reference.
    pub contour_distance: Option<f64>,
    pub reasons: Vec<InvalidReason>,
}

fn centered(points: &[Point]) -> Vec<Point> {
    let c = Point::mean(points.iter().copied()).unwrap_or(Point::ORIGIN);
    points.iter().map(|&p| p - c).collect()
}

/// Plausibility check of one skeleton against the constraint model.
///
/// Valid iff the centered upper-body contour is within `theta` of the
/// centered reference contour (discrete Fréchet), every present leg/hoof
/// point lies at or below the body center, and every present hoof lies
/// strictly below its leg.
pub fn validate_cow(skeleton: &CowSkeleton, model: &ConstraintModel, theta: f64) -> Validity {
    let mut reasons = Vec::new();
    let mut contour_distance = None;
    let contour = match skeleton.contour() {
        Ok(c) => Some(c),
        Err(joint) => {
            reasons.push(InvalidReason::IncompleteBody { joint });
            None
        }
    };
    if let Some(c) = contour {
        let reference: [Point; NUM_UPPER] = model.reference_contour();
        let d = discrete_frechet(&centered(&c), &centered(&reference)).expect("non-empty contours");
        contour_distance = Some(d);
        if d > theta {
            reasons.push(InvalidReason::ContourMismatch { distance: d });
        }
        let center_y = Point::mean(c.iter().copied()).expect("nine points").y;
        for j in JointId::LEG_HOOF {
            if let Some(p) = skeleton.position(j) {
                if p.y < center_y {
                    reasons.push(InvalidReason::LegAboveBody { joint: j });
                }
            }
        }
    }
    for limb in Limb::ALL {
        if let (Some(leg), Some(hoof)) = (skeleton.position(limb.leg()), skeleton.position(limb.hoof())) {
            if hoof.y <= leg.y {
                reasons.push(InvalidReason::HoofAboveLeg { joint: limb.hoof() });
            }
        }
    }
    Validity {
        valid: reasons.is_empty(),
        contour_distance,
        reasons,
    }
}

/// Valid Cow Percentage: valid skeletons over detected skeletons.
pub fn vcp<'a, I>(skeletons: I, model: &ConstraintModel, theta: f64) -> Result<f64>
where
    I: IntoIterator<Item = &'a CowSkeleton>,
{
    let (mut valid, mut total) = (0usize, 0usize);
    for s in skeletons {
        total += 1;
        valid += validate_cow(s, model, theta).valid as usize;
    }
    if total == 0 {
        return Err(Error::VcpUndefined);
    }
    Ok(valid as f64 / total as f64)
}

fn upper_positions(s: &CowSkeleton) -> Result<[Point; NUM_UPPER]> {
    let mut out = [Point::ORIGIN; NUM_UPPER];
    for (slot, j) in out.iter_mut().zip(JointId::UPPER) {
        *slot = s.position(j).ok_or(Error::IncompleteBody(j))?;
    }
    Ok(out)
}

/// Dispersion of the nine upper-body motion vectors between two skeletons:
/// `sqrt(var_x + var_y)` with population variances.
pub fn motion_dispersion(a: &CowSkeleton, b: &CowSkeleton) -> Result<f64> {
    let pa = upper_positions(a)?;
    let pb = upper_positions(b)?;
    let motion: Vec<Point> = pa.iter().zip(&pb).map(|(&p, &q)| q - p).collect();
    let mean = Point::mean(motion.iter().copied()).expect("nine vectors");
    let n = motion.len() as f64;
    let var_x = motion.iter().map(|m| (m.x - mean.x).powi(2)).sum::<f64>() / n;
    let var_y = motion.iter().map(|m| (m.y - mean.y).powi(2)).sum::<f64>() / n;
    Ok((var_x + var_y).sqrt())
}

/// Per-step dispersions of a track.
pub fn track_dispersions(track: &Track) -> Result<Vec<f64>> {
    if track.len() < 2 {
        return Err(Error::TrackTooShort(track.len()));
    }
    track
        .skeletons
        .windows(2)
        .map(|w| motion_dispersion(&w[0], &w[1]))
        .collect()
}

/// Temporal Consistency of one track: the mean motion dispersion.
pub fn temporal_consistency(track: &Track) -> Result<f64> {
    let d = track_dispersions(track)?;
    Ok(d.iter().sum::<f64>() / d.len() as f64)
}

/// Mean Temporal Consistency over tracks with at least two skeletons.
pub fn sequence_tc(tracks: &[Track]) -> Option<f64> {
    let tcs: Vec<f64> = tracks
        .iter()
        .filter(|t| t.len() >= 2)
        .filter_map(|t| temporal_consistency(t).ok())
        .collect();
    (!tcs.is_empty()).then(|| tcs.iter().sum::<f64>() / tcs.len() as f64)
}

/// Quadrilateral covering segment `a → b` expanded horizontally by `half_width`.
pub fn limb_segment_polygon(a: Point, b: Point, half_width: f64) -> Polygon {
    Polygon::new(vec![
        Point::new(a.x - half_width, a.y),
        Point::new(a.x + half_width, a.y),
        Point::new(b.x + half_width, b.y),
        Point::new(b.x - half_width, b.y),
    ])
}

/// Mask of the body polygon plus every limb that has both a leg and a hoof,
/// drawn as its anchor → leg → hoof polyline 20 px wide.
pub fn skeleton_to_mask(skeleton: &CowSkeleton, width: usize, height: usize) -> Result<BinaryMask> {
    let mut mask = BinaryMask::from_polygon(&body_polygon(skeleton)?, width, height);
    for limb in Limb::ALL {
        let anchor = skeleton.known_position(limb.end.anchor());
        let (Some(anchor), Some(leg), Some(hoof)) =
            (anchor, skeleton.position(limb.leg()), skeleton.position(limb.hoof()))
        else {
            continue;
        };
        for (a, b) in [(anchor, leg), (leg, hoof)] {
            mask.fill_spans(&limb_segment_polygon(a, b, LIMB_HALF_WIDTH).spans(width, height));
        }
    }
    Ok(mask)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EvalParams {
    pub leghoof_threshold: f64,
    /// Contour threshold as a fraction of body length.
    pub theta_factor: f64,
}

impl Default for EvalParams {
    fn default() -> Self {
        EvalParams {
            leghoof_threshold: DEFAULT_LEGHOOF_THRESHOLD,
            theta_factor: DEFAULT_THETA_FACTOR,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrackStats {
    pub id: u64,
    pub frames: [u64; 2],
    pub tc: Option<f64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub body_f1: f64,
    pub leghoof_f1: f64,
    /// `None` when nothing was detected.
    pub vcp: Option<f64>,
    /// `None` when no track spans two frames.
    pub tc: Option<f64>,
    pub detected_cows: usize,
    pub valid_cows: usize,
    pub truth_cows: usize,
    pub matched_cows: usize,
    pub matched_leghoof_joints: usize,
    pub body: BodyF1,
    pub leghoof: LegHoofF1,
    pub tracks: Vec<TrackStats>,
}

/// Rebuilds tracks from the `track_id` of every detected skeleton.
pub fn tracks_from_frames(frames: &[Frame]) -> Vec<Track> {
    let mut by_id: BTreeMap<u64, Vec<CowSkeleton>> = BTreeMap::new();
    for f in frames {
        for c in &f.cows {
            if let Some(id) = c.track_id {
                let mut s = c.clone();
                s.frame_index = f.index;
                by_id.entry(id).or_default().push(s);
            }
        }
    }
    by_id
        .into_iter()
        .map(|(id, mut skeletons)| {
            skeletons.sort_by_key(|s| s.frame_index);
            Track {
                id,
                skeletons,
                status: crate::temporal::TrackStatus::Closed,
            }
        })
        .collect()
}

/// Every metric at once.
pub fn evaluate(
    detections: &[Frame],
    truth: &[Frame],
    model: &ConstraintModel,
    params: &EvalParams,
    size: (usize, usize),
) -> Result<EvalReport> {
    let body = body_f1(detections, truth, size)?;
    let leghoof = leghoof_f1(detections, truth, params.leghoof_threshold, size)?;
    let theta = params.theta_factor * model.body_length();
    let all: Vec<&CowSkeleton> = detections.iter().flat_map(|f| f.cows.iter()).collect();
    let valid_cows = all.iter().filter(|c| validate_cow(c, model, theta).valid).count();
    let vcp = vcp(all.iter().copied(), model, theta).ok();
    let tracks = tracks_from_frames(detections);
    let track_stats = tracks
        .iter()
        .map(|t| TrackStats {
            id: t.id,
            frames: [t.first_frame().unwrap_or(0), t.last_frame().unwrap_or(0)],
            tc: temporal_consistency(t).ok(),
        })
        .collect();
    Ok(EvalReport {
        body_f1: body.score,
        leghoof_f1: leghoof.f1,
        vcp,
        tc: sequence_tc(&tracks),
        detected_cows: all.len(),
        valid_cows,
        truth_cows: body.truth,
        matched_cows: body.matched,
        matched_leghoof_joints: leghoof.matched,
        body,
        leghoof,
        tracks: track_stats,
    })
}

impl EvalReport {
    /// Aligned plain-text summary.
    pub fn to_table(&self) -> String {
        let opt = |v: Option<f64>, p: usize| v.map_or_else(|| "n/a".to_string(), |x| format!("{x:.p$}"));
        let rows = [
            ("Body F1", format!("{:.4}", self.body_f1)),
            ("Leg-hoof F1", format!("{:.4}", self.leghoof_f1)),
            ("VCP", opt(self.vcp, 4)),
            ("TC", opt(self.tc, 3)),
            ("detected cows", self.detected_cows.to_string()),
            ("valid cows", self.valid_cows.to_string()),
            ("truth cows", self.truth_cows.to_string()),
            ("matched cows", self.matched_cows.to_string()),
            ("matched leg/hoof joints", self.matched_leghoof_joints.to_string()),
            ("tracks", self.tracks.len().to_string()),
        ];
        let w = rows.iter().map(|r| r.0.len()).max().unwrap_or(0);
        let mut out = String::new();
        for (k, v) in rows {
            out.push_str(&format!("{k:<w$}  {v:>10}\n"));
        }
        out
    }
}
