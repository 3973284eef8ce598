mod common;

use proptest::prelude::*;

use common::*;
use cowskel::confmap::{merge_maps, nms_plane, ConfidenceMapStack, Stream};
use cowskel::geometry::Point;
use cowskel::grouping::{detect_candidates, DetectParams};
use cowskel::metrics::{discrete_frechet, leghoof_f1, mask_dice, motion_dispersion, validate_cow, BinaryMask};
use cowskel::model::{fit_constraints, ConstraintModel, UpperLabels};
use cowskel::skeleton::{CowSkeleton, Frame, JointObs, KeypointCandidate};
use cowskel::synth::CowTemplate;
use cowskel::temporal::{filter_track, sliding_median};
use cowskel::JointId;

fn pt() -> impl Strategy<Value = Point> {
    (-200.0..200.0f64, -200.0..200.0f64).prop_map(|(x, y)| Point::new(x, y))
}

fn polyline(max: usize) -> impl Strategy<Value = Vec<Point>> {
    prop::collection::vec(pt(), 1..max)
}

/// Planes with values on a coarse grid, so ties and plateaus are common.
fn quantized_plane() -> impl Strategy<Value = (usize, usize, Vec<f32>)> {
    (2usize..18, 2usize..18).prop_flat_map(|(w, h)| {
        (
            Just(w),
            Just(h),
            prop::collection::vec((0u8..6).prop_map(|k| k as f32 / 5.0), w * h),
        )
    })
}

fn template_model() -> ConstraintModel {
    CowTemplate::default().to_constraint_model(1.0)
}

/// A template cow with each upper joint nudged by up to `amp` pixels.
fn perturbed_cow(center: Point, noise: &[(f64, f64)], amp: f64) -> CowSkeleton {
    let mut cow = template_cow(center, 0);
    for (j, &(dx, dy)) in JointId::ALL.iter().zip(noise) {
        let p = cow.position(*j).unwrap();
        cow.set(*j, JointObs::detected(p + Point::new(dx * amp, dy * amp), 1.0));
    }
    cow.recompute_center();
    cow
}

fn noise17() -> impl Strategy<Value = Vec<(f64, f64)>> {
    prop::collection::vec((-1.0..1.0f64, -1.0..1.0f64), 17)
}

fn cows_close(a: &[CowSkeleton], b: &[CowSkeleton], shift: Point, tol: f64) -> Result<(), TestCaseError> {
    prop_assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(b) {
        for j in JointId::ALL {
            match (x.get(j), y.get(j)) {
                (Some(p), Some(q)) => {
                    prop_assert!((p.position + shift - q.position).norm() < tol, "{} {:?} {:?}", j, p, q);
                    prop_assert_eq!(p.status, q.status);
                }
                (None, None) => {}
                _ => prop_assert!(false, "joint {} present in only one result", j),
            }
        }
    }
    Ok(())
}

/// Upper-body candidates of two template cows plus integer clutter.
fn grouping_input() -> impl Strategy<Value = Vec<KeypointCandidate>> {
    let clutter = prop::collection::vec((0usize..9, 0i32..1600, 0i32..600, 0.2..1.0f64), 0..25);
    let drop = prop::collection::vec(prop::bool::weighted(0.15), 18);
    (clutter, drop).prop_map(|(clutter, drop)| {
        let t = CowTemplate::default();
        let mut out = Vec::new();
        for (c, center) in [Point::new(400.0, 200.0), Point::new(1250.0, 260.0)].iter().enumerate() {
            for (k, j) in JointId::UPPER.iter().enumerate() {
                if drop[c * 9 + k] {
                    continue;
                }
                let p = *center + t.offset(*j);
                out.push(KeypointCandidate::new(*j, Point::new(p.x.round(), p.y.round()), 0.9));
            }
        }
        for (j, x, y, conf) in clutter {
            out.push(KeypointCandidate::new(
                JointId::UPPER[j],
                Point::new(x as f64, y as f64),
                conf,
            ));
        }
        out
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(128))]

    #[test]
    fn nms_agrees_with_exhaustive_scan((w, h, plane) in quantized_plane(), r in 1usize..4) {
        prop_assert_eq!(nms_plane(&plane, w, h, r, 0.1), nms_oracle(&plane, w, h, r, 0.1));
    }

    #[test]
    fn nms_peaks_are_farther_apart_than_radius((w, h, plane) in quantized_plane(), r in 1usize..4) {
        let peaks = nms_plane(&plane, w, h, r, 0.1);
        for (i, a) in peaks.iter().enumerate() {
            for b in &peaks[i + 1..] {
                let cheb = a.0.abs_diff(b.0).max(a.1.abs_diff(b.1));
                prop_assert!(cheb > r);
            }
        }
    }

    #[test]
    fn merge_keeps_the_stronger_upper_score(values in prop::collection::vec(0.0..1.0f32, 2 * 17 * 6 * 5)) {
        let (w, h) = (6, 5);
        let mut color = ConfidenceMapStack::zeros(w, h, Stream::Color, 0);
        let mut diff = ConfidenceMapStack::zeros(w, h, Stream::Diff, 0);
        for (k, j) in JointId::ALL.iter().enumerate() {
            color.plane_mut(*j).copy_from_slice(&values[k * w * h..(k + 1) * w * h]);
            diff.plane_mut(*j).copy_from_slice(&values[(17 + k) * w * h..(18 + k) * w * h]);
        }
        let merged = merge_maps(&color, &diff).unwrap();
        for j in JointId::ALL {
            for i in 0..w * h {
                let m = merged.stack.plane(j)[i];
                if j.is_upper() {
                    prop_assert!(m >= color.plane(j)[i] && m >= diff.plane(j)[i]);
                    prop_assert!(m == color.plane(j)[i] || m == diff.plane(j)[i]);
                } else {
                    prop_assert_eq!(m, color.plane(j)[i]);
                }
            }
        }
    }

    #[test]
    fn frechet_agrees_with_recursion(p in polyline(10), q in polyline(10)) {
        let f = discrete_frechet(&p, &q).unwrap();
        prop_assert!((f - frechet_oracle(&p, &q)).abs() < 1e-9);
        prop_assert!((f - discrete_frechet(&q, &p).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn frechet_between_hausdorff_and_max_pairwise(p in polyline(10), q in polyline(10)) {
        let f = discrete_frechet(&p, &q).unwrap();
        let directed = |a: &[Point], b: &[Point]| {
            a.iter().map(|x| b.iter().map(|y| x.distance(*y)).fold(f64::INFINITY, f64::min)).fold(0.0, f64::max)
        };
        let hausdorff = directed(&p, &q).max(directed(&q, &p));
        let widest = p.iter().flat_map(|x| q.iter().map(move |y| x.distance(*y))).fold(0.0, f64::max);
        let ends = p[0].distance(q[0]).max(p[p.len() - 1].distance(q[q.len() - 1]));
        prop_assert!(f >= hausdorff - 1e-9);
        prop_assert!(f >= ends - 1e-9);
        prop_assert!(f <= widest + 1e-9);
        prop_assert_eq!(discrete_frechet(&p, &p).unwrap(), 0.0);
    }

    #[test]
    fn dice_is_bounded_and_symmetric(a in prop::collection::vec(any::<bool>(), 48), b in prop::collection::vec(any::<bool>(), 48)) {
        let mask = |v: &[bool]| {
            let mut m = BinaryMask::new(8, 6);
            for (i, &on) in v.iter().enumerate() {
                m.set(i % 8, i / 8, on);
            }
            m
        };
        let (ma, mb) = (mask(&a), mask(&b));
        let d = mask_dice(&ma, &mb).unwrap();
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert_eq!(d, mask_dice(&mb, &ma).unwrap());
        prop_assert_eq!(mask_dice(&ma, &ma).unwrap(), 1.0);
        if a.iter().any(|&x| x) && b.iter().any(|&x| x) {
            prop_assert!((d - dice(&a, &b)).abs() < 1e-12);
        }
    }

    #[test]
    fn motion_dispersion_ignores_rigid_moves(n1 in noise17(), n2 in noise17(), v in pt(), u in pt()) {
        let a = perturbed_cow(Point::new(400.0, 200.0), &n1, 6.0);
        let b = perturbed_cow(Point::new(410.0, 203.0), &n2, 6.0);
        let d = motion_dispersion(&a, &b).unwrap();
        let moved = motion_dispersion(&a.translate(v), &b.translate(u)).unwrap();
        prop_assert!((d - moved).abs() < 1e-6, "{} vs {}", d, moved);
    }

    #[test]
    fn validity_ignores_translation(n in noise17(), amp in 0.0..120.0f64, v in pt()) {
        let model = template_model();
        let theta = 0.35 * model.body_length();
        let cow = perturbed_cow(Point::new(400.0, 200.0), &n, amp);
        let a = validate_cow(&cow, &model, theta);
        let b = validate_cow(&cow.translate(v), &model, theta);
        prop_assert_eq!(a.valid, b.valid);
        prop_assert_eq!(&a.reasons, &b.reasons);
        prop_assert!((a.contour_distance.unwrap() - b.contour_distance.unwrap()).abs() < 1e-6);
    }

    #[test]
    fn leghoof_matches_grow_with_threshold(noise in prop::collection::vec(noise17(), 1..4), t1 in 1.0..60.0f64, dt in 0.0..60.0f64) {
        let size = (1000, 700);
        let mut det = Vec::new();
        let mut truth = Vec::new();
        for (i, n) in noise.iter().enumerate() {
            let c = Point::new(400.0 + 5.0 * i as f64, 200.0);
            truth.push(Frame::new(i as u64, vec![template_cow(c, i as u64)]));
            let mut d = template_cow(c, i as u64);
            for (j, &(dx, dy)) in JointId::LEG_HOOF.iter().zip(n) {
                let p = d.position(*j).unwrap();
                d.set(*j, JointObs::detected(p + Point::new(dx * 80.0, dy * 80.0), 0.9));
            }
            det.push(Frame::new(i as u64, vec![d]));
        }
        let lo = leghoof_f1(&det, &truth, t1, size).unwrap();
        let hi = leghoof_f1(&det, &truth, t1 + dt, size).unwrap();
        prop_assert!(hi.matched >= lo.matched);
        prop_assert!(hi.f1 >= lo.f1);
        let brute: usize = det.iter().zip(&truth).map(|(d, t)| leghoof_matches(&d.cows[0], &t.cows[0], t1)).sum();
        prop_assert_eq!(lo.matched, brute);
    }

    #[test]
    fn project_and_backproject_are_inverse(p in pt(), k in 0usize..9) {
        let model = template_model();
        let j = JointId::UPPER[k];
        let c = model.backproject(j, p).unwrap();
        prop_assert!((model.project_joint(c, j).unwrap() - p).norm() < 1e-9);
    }

    #[test]
    fn fit_follows_translation(frames in prop::collection::vec(noise17(), 3..12), v in pt()) {
        let t = CowTemplate::default();
        let label = |n: &[(f64, f64)], shift: Point| -> UpperLabels {
            let mut out: UpperLabels = [None; 9];
            for (k, j) in JointId::UPPER.iter().enumerate() {
                out[k] = Some(Point::new(300.0, 200.0) + t.offset(*j) + Point::new(n[k].0 * 8.0, n[k].1 * 8.0) + shift);
            }
            out
        };
        let a: Vec<UpperLabels> = frames.iter().map(|n| label(n, Point::ORIGIN)).collect();
        let b: Vec<UpperLabels> = frames.iter().map(|n| label(n, v)).collect();
        let (ma, mb) = (fit_constraints(&a).unwrap(), fit_constraints(&b).unwrap());
        for (x, y) in ma.joints.iter().zip(&mb.joints) {
            prop_assert!((x.mean - y.mean).norm() < 1e-6);
            prop_assert!(x.cov.sub(&y.cov).frobenius() < 1e-6);
        }
    }

    #[test]
    fn sliding_median_matches_rank_oracle(v in prop::collection::vec((0u8..20).prop_map(f64::from), 1..30), half in 0usize..4) {
        prop_assert_eq!(sliding_median(&v, 2 * half + 1), median_oracle(&v, 2 * half + 1));
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(48))]

    #[test]
    fn grouping_follows_integer_shifts(cands in grouping_input(), dx in -50i32..50, dy in -50i32..50) {
        let model = template_model();
        let params = DetectParams::default();
        let shift = Point::new(dx as f64, dy as f64);
        let moved: Vec<KeypointCandidate> = cands.iter().map(|c| KeypointCandidate { position: c.position + shift, ..*c }).collect();
        let a = detect_candidates(&cands, &model, &params, None, 0).unwrap();
        let b = detect_candidates(&moved, &model, &params, None, 0).unwrap();
        prop_assert!(!a.cows.is_empty());
        cows_close(&a.cows, &b.cows, shift, 1e-6)?;
    }

    #[test]
    fn grouping_ignores_candidate_order(cands in grouping_input(), seed in any::<u64>()) {
        use rand::seq::SliceRandom;
        use rand::SeedableRng;
        let model = template_model();
        let params = DetectParams::default();
        let mut shuffled = cands.clone();
        shuffled.shuffle(&mut rand_chacha::ChaCha8Rng::seed_from_u64(seed));
        let a = detect_candidates(&cands, &model, &params, None, 0).unwrap();
        let b = detect_candidates(&shuffled, &model, &params, None, 0).unwrap();
        cows_close(&a.cows, &b.cows, Point::ORIGIN, 1e-9)?;
    }

    #[test]
    fn filter_is_idempotent_on_lines_with_spikes(
        n in 6usize..30,
        vel in (-5.0..5.0f64, -5.0..5.0f64),
        spikes in prop::collection::vec((1usize..29, 0usize..9, 60.0..200.0f64, any::<bool>()), 0..4),
    ) {
        let mut skel: Vec<CowSkeleton> = (0..n)
            .map(|i| template_cow(Point::new(400.0 + vel.0 * i as f64, 200.0 + vel.1 * i as f64), i as u64))
            .collect();
        let mut used: Vec<usize> = Vec::new();
        for (at, k, mag, up) in spikes {
            if at >= n - 1 || used.iter().any(|&u| u.abs_diff(at) < 5) {
                continue;
            }
            used.push(at);
            let j = JointId::UPPER[k];
            let p = skel[at].position(j).unwrap();
            skel[at].set(j, JointObs::detected(p + Point::new(0.0, if up { -mag } else { mag }), 1.0));
        }
        let once = filter_track(&track_of(skel), 5, 30.0).unwrap();
        let twice = filter_track(&once, 5, 30.0).unwrap();
        for (a, b) in once.skeletons.iter().zip(&twice.skeletons) {
            for j in JointId::UPPER {
                prop_assert!((a.position(j).unwrap() - b.position(j).unwrap()).norm() < 1e-9);
                prop_assert_eq!(a.status(j), b.status(j));
            }
        }
    }

    #[test]
    fn filter_is_a_plain_median_below_the_outlier_distance(n in 2usize..25, jitter in prop::collection::vec((-4.0..4.0f64, -4.0..4.0f64), 25 * 9)) {
        let skel: Vec<CowSkeleton> = (0..n)
            .map(|i| {
                let mut c = template_cow(Point::new(400.0 + 3.0 * i as f64, 200.0), i as u64);
                for (k, j) in JointId::UPPER.iter().enumerate() {
                    let (dx, dy) = jitter[i * 9 + k];
                    c.set(*j, JointObs::detected(c.position(*j).unwrap() + Point::new(dx, dy), 1.0));
                }
                c
            })
            .collect();
        let out = filter_track(&track_of(skel.clone()), 5, 1e6).unwrap();
        for j in JointId::UPPER {
            let xs: Vec<f64> = skel.iter().map(|c| c.position(j).unwrap().x).collect();
            let ys: Vec<f64> = skel.iter().map(|c| c.position(j).unwrap().y).collect();
            let (mx, my) = (median_oracle(&xs, 5), median_oracle(&ys, 5));
            for i in 0..n {
                prop_assert_eq!(out.skeletons[i].position(j).unwrap(), Point::new(mx[i], my[i]));
            }
        }
    }
}
