//! Per-frame instance assembly.
//!
//! Every upper-body candidate votes for the cow center it implies under the
//! constraint model. Votes are clustered with flat-kernel mean-shift; each
//! cluster is refined against the model, cows with fewer than five supported
//! upper-body joints are dropped, missing upper-body joints are predicted,
//! and leg/hoof pairs are attached inside a search rectangle below the body.

use crate::confmap::{self, ConfidenceMapStack, DEFAULT_NMS_RADIUS, DEFAULT_NMS_THRESHOLD};
use crate::error::Result;
use crate::geometry::{Point, Rect};
use crate::joints::{JointId, Limb, LimbEnd, Side, NUM_UPPER};
use crate::model::ConstraintModel;
use crate::skeleton::{CowSkeleton, JointObs, JointStatus, KeypointCandidate, MapSource};

/// Accepted cows need at least this many detected upper-body joints.
pub const MIN_DETECTED_UPPER: usize = 5;
pub const DEFAULT_BANDWIDTH_FACTOR: f64 = 0.25;
/// 99.9% quantile of the chi-square distribution with two degrees of freedom.
pub const DEFAULT_SUPPORT_GATE: f64 = 13.815510557964274;

const SHIFT_TOLERANCE: f64 = 0.5;
const MAX_SHIFT_ITERATIONS: usize = 100;
const MAX_REFINE_ITERATIONS: usize = 20;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DetectParams {
    pub nms_radius: usize,
    pub nms_threshold: f64,
    /// Mean-shift bandwidth as a fraction of the model's body length.
    pub bandwidth_factor: f64,
    /// Squared Mahalanobis distance under which a candidate supports a cow.
    pub support_gate: f64,
}

impl Default for DetectParams {
    fn default() -> Self {
        DetectParams {
            nms_radius: DEFAULT_NMS_RADIUS,
            nms_threshold: DEFAULT_NMS_THRESHOLD,
            bandwidth_factor: DEFAULT_BANDWIDTH_FACTOR,
            support_gate: DEFAULT_SUPPORT_GATE,
        }
    }
}

/// A mode found by [`mean_shift`] and the indices of the points that reached it.
#[derive(Debug, Clone, PartialEq)]
pub struct Cluster {
    pub mode: Point,
    pub members: Vec<usize>,
}

fn shift_point(points: &[Point], start: Point, bandwidth: f64) -> Point {
    let bw2 = bandwidth * bandwidth;
    let mut x = start;
    for _ in 0..MAX_SHIFT_ITERATIONS {
        let next = Point::mean(points.iter().copied().filter(|p| {
            let d = *p - x;
            d.dot(d) <= bw2
        }));
        let Some(next) = next else { break };
        let moved = next.distance(x);
        x = next;
        if moved < SHIFT_TOLERANCE {
            break;
        }
    }
    x
}

/// Flat-kernel mean-shift started from every point.
///
/// Modes closer than half the bandwidth are merged. Clusters come back sorted
/// by mode x, then y.
pub fn mean_shift(points: &[Point], bandwidth: f64) -> Vec<Cluster> {
    assert!(bandwidth > 0.0, "bandwidth must be positive");
    let mut groups: Vec<(Vec<Point>, Vec<usize>)> = Vec::new();
    for (i, &p) in points.iter().enumerate() {
        let m = shift_point(points, p, bandwidth);
        let near = groups.iter_mut().find(|(modes, _)| {
            let rep = Point::mean(modes.iter().copied()).expect("non-empty group");
            rep.distance(m) < bandwidth / 2.0
        });
        match near {
            Some((modes, members)) => {
                modes.push(m);
                members.push(i);
            }
            None => groups.push((vec![m], vec![i])),
        }
    }
    let mut clusters: Vec<Cluster> = groups
        .into_iter()
        .map(|(modes, members)| Cluster {
            mode: Point::mean(modes).expect("non-empty group"),
            members,
        })
        .collect();
    clusters.sort_by(|a, b| a.mode.x.total_cmp(&b.mode.x).then(a.mode.y.total_cmp(&b.mode.y)));
    clusters
}

/// A cluster that did not become a cow.
#[derive(Debug, Clone, PartialEq)]
pub struct RejectedCluster {
    pub mode: Point,
    /// Distinct upper-body joints among the mean-shift members.
    pub member_joints: usize,
    /// Distinct upper-body joints consistent with the refined center.
    pub supported_joints: usize,
}

#[derive(Debug, Clone, Default, PartialEq)]
pub struct ClusterOutcome {
    /// Accepted cows with their detected upper-body joints only.
    pub drafts: Vec<CowSkeleton>,
    pub rejected: Vec<RejectedCluster>,
}

struct Vote {
    cand: KeypointCandidate,
    center: Point,
}

/// Log of `confidence × density` up to a per-joint constant.
fn log_score(model: &ConstraintModel, vote: &Vote, center: Point) -> Result<f64> {
    let m = model.mahalanobis_sq(vote.cand.joint, center, vote.cand.position)?;
    Ok(vote.cand.confidence.ln() - 0.5 * m)
}

/// Best vote per joint around `center` among `pool`.
fn best_per_joint(
    model: &ConstraintModel,
    votes: &[Vote],
    pool: &[usize],
    center: Point,
) -> Result<[Option<usize>; NUM_UPPER]> {
    let mut best: [Option<(usize, f64)>; NUM_UPPER] = [None; NUM_UPPER];
    for &i in pool {
        let s = log_score(model, &votes[i], center)?;
        let slot = &mut best[votes[i].cand.joint.index()];
        if slot.is_none_or(|(_, b)| s > b) {
            *slot = Some((i, s));
        }
    }
    Ok(best.map(|b| b.map(|(i, _)| i)))
}

/// Distinct joints with a vote consistent with `center`, and the summed
/// confidence of the best such vote per joint.
fn consensus(
    model: &ConstraintModel,
    votes: &[Vote],
    pool: &[usize],
    center: Point,
    gate: f64,
) -> Result<(usize, f64)> {
    let mut best = [0.0f64; NUM_UPPER];
    let mut seen = [false; NUM_UPPER];
    for &i in pool {
        let c = &votes[i].cand;
        if model.mahalanobis_sq(c.joint, center, c.position)? <= gate {
            let j = c.joint.index();
            seen[j] = true;
            best[j] = best[j].max(c.confidence);
        }
    }
    Ok((seen.iter().filter(|&&s| s).count(), best.iter().sum()))
}

/// Re-centers a cluster on the votes the model considers consistent with it.
///
/// Every vote near the mode is tried as a center hypothesis; the one with
/// the most consistent joints wins, then the center is moved to the mean of
/// its inlier votes until it settles. Returns the refined center and the
/// number of supported joints.
fn refine(model: &ConstraintModel, votes: &[Vote], start: Point, bandwidth: f64, gate: f64) -> Result<(Point, usize)> {
    let pool: Vec<usize> = (0..votes.len())
        .filter(|&i| votes[i].center.distance(start) <= bandwidth)
        .collect();
    let mut best: Option<(usize, f64, Point)> = None;
    for &h in &pool {
        let (n, conf) = consensus(model, votes, &pool, votes[h].center, gate)?;
        if best.is_none_or(|(bn, bc, _)| n > bn || (n == bn && conf > bc)) {
            best = Some((n, conf, votes[h].center));
        }
    }
    let Some((mut support, _, mut center)) = best else {
        return Ok((start, 0));
    };
    for _ in 0..MAX_REFINE_ITERATIONS {
        let chosen = best_per_joint(model, votes, &pool, center)?;
        let mut inliers = Vec::new();
        for i in chosen.into_iter().flatten() {
            if model.mahalanobis_sq(votes[i].cand.joint, center, votes[i].cand.position)? <= gate {
                inliers.push(votes[i].center);
            }
        }
        if inliers.len() < support {
            break;
        }
        support = inliers.len();
        let next = Point::mean(inliers).expect("non-empty");
        if next == center {
            break;
        }
        center = next;
    }
    Ok((center, support))
}

fn distinct_joints<'a>(cands: impl Iterator<Item = &'a KeypointCandidate>) -> usize {
    let mut seen = [false; NUM_UPPER];
    for c in cands {
        seen[c.joint.index()] = true;
    }
    seen.iter().filter(|&&s| s).count()
}

/// Groups upper-body candidates into draft cows.
///
/// Leg/hoof candidates in the input are ignored.
pub fn cluster_cows(
    candidates: &[KeypointCandidate],
    model: &ConstraintModel,
    params: &DetectParams,
    frame_index: u64,
) -> Result<ClusterOutcome> {
    let mut upper: Vec<KeypointCandidate> = candidates.iter().copied().filter(|c| c.joint.is_upper()).collect();
    upper.sort_by(KeypointCandidate::canonical_cmp);
    let votes: Vec<Vote> = upper
        .iter()
        .map(|&cand| {
            Ok(Vote {
                cand,
                center: model.backproject_center(&cand)?,
            })
        })
        .collect::<Result<_>>()?;
    if votes.is_empty() {
        return Ok(ClusterOutcome::default());
    }
    let bandwidth = params.bandwidth_factor * model.body_length();
    let centers: Vec<Point> = votes.iter().map(|v| v.center).collect();
    let clusters = mean_shift(&centers, bandwidth);

    struct Refined {
        mode: Point,
        center: Point,
        support: usize,
        member_joints: usize,
    }
    let mut refined = Vec::with_capacity(clusters.len());
    for cl in &clusters {
        let (center, support) = refine(model, &votes, cl.mode, bandwidth, params.support_gate)?;
        refined.push(Refined {
            mode: cl.mode,
            center,
            support,
            member_joints: distinct_joints(cl.members.iter().map(|&i| &votes[i].cand)),
        });
    }

    // Several clusters can refine onto the same cow; keep the best supported.
    let mut order: Vec<usize> = (0..refined.len()).collect();
    order.sort_by(|&a, &b| {
        refined[b]
            .support
            .cmp(&refined[a].support)
            .then(refined[a].center.x.total_cmp(&refined[b].center.x))
            .then(refined[a].center.y.total_cmp(&refined[b].center.y))
    });
    let mut rejected = Vec::new();
    let mut accepted: Vec<Point> = Vec::new();
    for &k in &order {
        let r = &refined[k];
        let duplicate = accepted.iter().any(|c| c.distance(r.center) < bandwidth / 2.0);
        if r.support < MIN_DETECTED_UPPER || duplicate {
            if !duplicate {
                rejected.push(RejectedCluster {
                    mode: r.mode,
                    member_joints: r.member_joints,
                    supported_joints: r.support,
                });
            }
            continue;
        }
        accepted.push(r.center);
    }

    // Greedy assignment by descending confidence × likelihood.
    let mut options: Vec<(f64, usize, usize)> = Vec::new();
    for (k, &c) in accepted.iter().enumerate() {
        for (i, v) in votes.iter().enumerate() {
            if v.center.distance(c) > bandwidth {
                continue;
            }
            if model.mahalanobis_sq(v.cand.joint, c, v.cand.position)? <= params.support_gate {
                let score = v.cand.confidence * model.joint_likelihood(c, &v.cand)?;
                options.push((score, k, i));
            }
        }
    }
    options.sort_by(|a, b| b.0.total_cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));
    let mut used = vec![false; votes.len()];
    let mut slots: Vec<[Option<usize>; NUM_UPPER]> = vec![[None; NUM_UPPER]; accepted.len()];
    for &(_, k, i) in &options {
        let j = votes[i].cand.joint.index();
        if used[i] || slots[k][j].is_some() {
            continue;
        }
        used[i] = true;
        slots[k][j] = Some(i);
    }

    let mut drafts = Vec::new();
    for (k, slot) in slots.iter().enumerate() {
        let assigned: Vec<usize> = slot.iter().flatten().copied().collect();
        if assigned.len() < MIN_DETECTED_UPPER {
            rejected.push(RejectedCluster {
                mode: accepted[k],
                member_joints: assigned.len(),
                supported_joints: assigned.len(),
            });
            continue;
        }
        let mut cow = CowSkeleton::empty(frame_index);
        for &i in &assigned {
            let c = &votes[i].cand;
            cow.set(c.joint, JointObs::detected(c.position, c.confidence));
        }
        cow.center = Point::mean(assigned.iter().map(|&i| votes[i].center)).expect("non-empty");
        drafts.push(cow);
    }
    drafts.sort_by(|a, b| {
        a.center
            .x
            .total_cmp(&b.center.x)
            .then(a.center.y.total_cmp(&b.center.y))
    });
    rejected.sort_by(|a, b| a.mode.x.total_cmp(&b.mode.x).then(a.mode.y.total_cmp(&b.mode.y)));
    Ok(ClusterOutcome { drafts, rejected })
}

/// Fills every absent upper-body joint with its model prediction from the
/// draft's center.
pub fn predict_missing(draft: &CowSkeleton, model: &ConstraintModel) -> Result<CowSkeleton> {
    let mut cow = draft.clone();
    let mut filled = false;
    for j in JointId::UPPER {
        if cow.status(j) == JointStatus::Absent {
            cow.set(j, JointObs::predicted(model.project_joint(draft.center, j)?));
            filled = true;
        }
    }
    if filled {
        cow.recompute_center();
    }
    Ok(cow)
}

/// Rectangle that may contain the cow's legs and hooves.
///
/// The upper-body bounding box is widened by one third (one sixth per side)
/// and spans from its vertical middle down to 1.2 box heights below its
/// bottom edge, clipped to `image_bottom` when given.
pub fn leg_search_region(draft: &CowSkeleton, image_bottom: Option<f64>) -> Result<Rect> {
    let pts = draft.contour().map_err(crate::Error::IncompleteBody)?;
    let body = Rect::bounding(pts).expect("nine points");
    if body.width() <= 0.0 || body.height() <= 0.0 {
        return Err(crate::Error::DegenerateBody);
    }
    let pad = body.width() / 6.0;
    let mut bottom = body.y1 + 1.2 * body.height();
    if let Some(b) = image_bottom {
        bottom = bottom.min(b);
    }
    Ok(Rect::new(
        body.x0 - pad,
        0.5 * (body.y0 + body.y1),
        body.x1 + pad,
        bottom,
    ))
}

/// Whether `anchor → leg → hoof` is an acceptable limb.
pub fn limb_is_plausible(anchor: Point, leg: Point, hoof: Point) -> bool {
    hoof.y > leg.y && leg.y > anchor.y && (anchor - leg).dot(hoof - leg) < 0.0
}

/// Attaches leg/hoof pairs to several cows at once.
///
/// Pairs from all cows compete greedily by summed confidence so that no
/// candidate is used twice. Returns the candidates left unassigned.
pub fn assign_limbs_many(
    cows: &mut [CowSkeleton],
    regions: &[Rect],
    leg_candidates: &[KeypointCandidate],
) -> Vec<KeypointCandidate> {
    let mut legs: Vec<KeypointCandidate> = leg_candidates.iter().copied().filter(|c| !c.joint.is_upper()).collect();
    legs.sort_by(KeypointCandidate::canonical_cmp);

    struct Pair {
        score: f64,
        cow: usize,
        end: LimbEnd,
        leg: usize,
        hoof: usize,
    }
    let mut pairs = Vec::new();
    for (k, (cow, region)) in cows.iter().zip(regions).enumerate() {
        for end in [LimbEnd::Front, LimbEnd::Back] {
            let Some(anchor) = cow.known_position(end.anchor()) else {
                continue;
            };
            let of_end = |c: &KeypointCandidate, hoof: bool| {
                c.joint.limb().is_some_and(|l| l.end == end) && c.joint.is_hoof() == hoof && region.contains(c.position)
            };
            for (li, leg) in legs.iter().enumerate().filter(|(_, c)| of_end(c, false)) {
                for (hi, hoof) in legs.iter().enumerate().filter(|(_, c)| of_end(c, true)) {
                    if limb_is_plausible(anchor, leg.position, hoof.position) {
                        pairs.push(Pair {
                            score: leg.confidence + hoof.confidence,
                            cow: k,
                            end,
                            leg: li,
                            hoof: hi,
                        });
                    }
                }
            }
        }
    }
    pairs.sort_by(|a, b| {
        b.score
            .total_cmp(&a.score)
            .then(a.cow.cmp(&b.cow))
            .then(a.end.cmp(&b.end))
            .then(a.leg.cmp(&b.leg))
            .then(a.hoof.cmp(&b.hoof))
    });

    let mut used = vec![false; legs.len()];
    let mut taken: Vec<[usize; 2]> = vec![[0, 0]; cows.len()];
    for p in &pairs {
        let slot = &mut taken[p.cow][p.end as usize];
        if *slot >= 2 || used[p.leg] || used[p.hoof] {
            continue;
        }
        // the stronger pair of an end is the camera-near limb
        let side = if *slot == 0 { Side::Right } else { Side::Left };
        *slot += 1;
        used[p.leg] = true;
        used[p.hoof] = true;
        let limb = Limb { end: p.end, side };
        let (leg, hoof) = (&legs[p.leg], &legs[p.hoof]);
        cows[p.cow].set(limb.leg(), JointObs::detected(leg.position, leg.confidence));
        cows[p.cow].set(limb.hoof(), JointObs::detected(hoof.position, hoof.confidence));
    }
    legs.into_iter().zip(used).filter(|(_, u)| !u).map(|(c, _)| c).collect()
}

/// Single-cow form of [`assign_limbs_many`].
pub fn assign_limbs(
    draft: &CowSkeleton,
    leg_candidates: &[KeypointCandidate],
    region: Rect,
) -> (CowSkeleton, Vec<KeypointCandidate>) {
    let mut cows = [draft.clone()];
    let unassigned = assign_limbs_many(&mut cows, &[region], leg_candidates);
    let [cow] = cows;
    (cow, unassigned)
}

/// Everything [`detect_frame`] produces, including what it discarded.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct FrameDetection {
    pub cows: Vec<CowSkeleton>,
    pub rejected_clusters: Vec<RejectedCluster>,
    pub unassigned_legs: Vec<KeypointCandidate>,
}

/// Grouping stages on an already extracted candidate list.
pub fn detect_candidates(
    candidates: &[KeypointCandidate],
    model: &ConstraintModel,
    params: &DetectParams,
    image_bottom: Option<f64>,
    frame_index: u64,
) -> Result<FrameDetection> {
    let outcome = cluster_cows(candidates, model, params, frame_index)?;
    let mut cows = Vec::with_capacity(outcome.drafts.len());
    let mut regions = Vec::with_capacity(outcome.drafts.len());
    for draft in &outcome.drafts {
        let cow = predict_missing(draft, model)?;
        regions.push(leg_search_region(&cow, image_bottom)?);
        cows.push(cow);
    }
    let legs: Vec<KeypointCandidate> = candidates.iter().copied().filter(|c| !c.joint.is_upper()).collect();
    let unassigned_legs = assign_limbs_many(&mut cows, &regions, &legs);
    Ok(FrameDetection {
        cows,
        rejected_clusters: outcome.rejected,
        unassigned_legs,
    })
}

/// Full single-frame pipeline: merge, extract, cluster, predict, attach limbs.
pub fn detect_frame(
    color: &ConfidenceMapStack,
    diff: &ConfidenceMapStack,
    model: &ConstraintModel,
    params: &DetectParams,
) -> Result<FrameDetection> {
    let merged = confmap::merge_maps(color, diff)?;
    let candidates = confmap::extract_candidates(&merged, params.nms_radius, params.nms_threshold);
    let bottom = color.height.saturating_sub(1) as f64;
    detect_candidates(&candidates, model, params, Some(bottom), color.frame_index)
}

/// Baseline selection: one point per confidence map (its global maximum),
/// assembled into at most one cow without any grouping or prediction.
pub fn detect_frame_max_only(
    color: &ConfidenceMapStack,
    diff: &ConfidenceMapStack,
    threshold: f64,
) -> Result<Vec<CowSkeleton>> {
    let merged = confmap::merge_maps(color, diff)?;
    let mut picks = confmap::argmax_extract(&merged.stack, threshold);
    for (k, &j) in JointId::LEG_HOOF.iter().enumerate() {
        if picks.iter().any(|c| c.joint == j) {
            continue;
        }
        if let Some((i, v)) = confmap::plane_argmax(&merged.leg_fallback[k]).filter(|&(_, v)| v as f64 > threshold) {
            picks.push(KeypointCandidate {
                joint: j,
                position: Point::new((i % color.width) as f64, (i / color.width) as f64),
                confidence: v as f64,
                source: MapSource::Diff,
            });
        }
    }
    if !picks.iter().any(|c| c.joint.is_upper()) {
        return Ok(Vec::new());
    }
    let mut cow = CowSkeleton::empty(color.frame_index);
    for c in picks {
        cow.set(c.joint, JointObs::detected(c.position, c.confidence));
    }
    cow.recompute_center();
    Ok(vec![cow])
}
