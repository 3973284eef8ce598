//! End-to-end acceptance checks. Prints one line per criterion and exits
//! non-zero when any of them fails.

mod common;

use std::path::Path;
use std::time::Instant;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};

use common::*;
use cowskel::commands::{cmd_detect, cmd_eval, cmd_fit, RunConfig};
use cowskel::confmap::{nms_extract, ConfidenceMapStack, Stream};
use cowskel::geometry::{Point, Rect};
use cowskel::metrics::{
    discrete_frechet, evaluate, leghoof_f1, mask_dice, skeleton_to_mask, temporal_consistency, vcp, EvalParams,
    EvalReport,
};
use cowskel::model::{fit_constraints, ConstraintModel, Cov2, UpperLabels};
use cowskel::pipeline::{run_max_only, run_sequence, PipelineParams, SequenceResult};
use cowskel::schema::Sequence;
use cowskel::skeleton::{CowSkeleton, Frame, JointObs, JointStatus};
use cowskel::synth::{write_dataset, CowSpec, CowTemplate, Scene, SceneConfig, TRUTH_FILE};
use cowskel::temporal::filter_track;
use cowskel::JointId;

type Outcome = (bool, String);

fn nms_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let (w, h) = (64, 64);
    let mut peaks = 0;
    for i in 0..100 {
        let joint = JointId::ALL[i % 17];
        let mut stack = ConfidenceMapStack::zeros(w, h, Stream::Color, 0);
        // every fourth plane is coarsely quantized so plateaus and ties occur
        let levels = if i % 4 == 0 { Some(4.0f32) } else { None };
        for v in stack.plane_mut(joint) {
            let x: f32 = rng.random();
            *v = levels.map_or(x, |l| (x * l).floor() / l);
        }
        let got: Vec<(usize, usize, f32)> = nms_extract(&stack, 2, 0.1)
            .iter()
            .map(|c| {
                assert_eq!(c.joint, joint);
                (c.position.x as usize, c.position.y as usize, c.confidence as f32)
            })
            .collect();
        let want = nms_oracle(stack.plane(joint), w, h, 2, 0.1);
        if got != want {
            return (
                false,
                format!("plane {i}: {} peaks vs oracle {}", got.len(), want.len()),
            );
        }
        peaks += want.len();
    }
    (true, format!("100 planes, {peaks} peaks identical"))
}

fn frechet_oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2);
    let line = |rng: &mut ChaCha8Rng| -> Vec<Point> {
        (0..9)
            .map(|_| Point::new(rng.random_range(-300.0..300.0), rng.random_range(-300.0..300.0)))
            .collect()
    };
    for i in 0..200 {
        let (p, q) = (line(&mut rng), line(&mut rng));
        let got = discrete_frechet(&p, &q).unwrap();
        let want = frechet_oracle(&p, &q);
        if got != want {
            return (false, format!("pair {i}: {got} vs {want}"));
        }
        if discrete_frechet(&p, &p).unwrap() != 0.0 {
            return (false, format!("pair {i}: identity distance is not 0"));
        }
    }
    let seg: Vec<Point> = (0..9).map(|k| Point::new(12.5 * k as f64, 40.0)).collect();
    let shifted: Vec<Point> = seg.iter().map(|p| *p + Point::new(0.0, 17.0)).collect();
    let offset = discrete_frechet(&seg, &shifted).unwrap();
    if offset != 17.0 {
        return (false, format!("parallel offset 17 gave {offset}"));
    }
    (true, "200 pairs identical, identity 0, parallel offset 17".into())
}

fn constraint_fit_recovery() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let normal = Normal::new(0.0, 1.0).unwrap();
    let tpl = CowTemplate::default();
    let mu: Vec<Point> = JointId::UPPER.iter().map(|&j| tpl.offset(j)).collect();
    let sigma: Vec<Cov2> = (0..9)
        .map(|k| {
            let (sx, sy) = (2.0 + 0.4 * k as f64, 1.5 + 0.25 * k as f64);
            let rho = if k % 2 == 0 { 0.4 } else { -0.3 };
            Cov2 {
                xx: sx * sx,
                xy: rho * sx * sy,
                yy: sy * sy,
            }
        })
        .collect();
    let labels: Vec<UpperLabels> = (0..500)
        .map(|_| {
            let c = Point::new(rng.random_range(300.0..1500.0), rng.random_range(100.0..400.0));
            let mut out: UpperLabels = [None; 9];
            for k in 0..9 {
                let s = &sigma[k];
                let l11 = s.xx.sqrt();
                let l21 = s.xy / l11;
                let l22 = (s.yy - l21 * l21).sqrt();
                let (z1, z2) = (normal.sample(&mut rng), normal.sample(&mut rng));
                out[k] = Some(c + mu[k] + Point::new(l11 * z1, l21 * z1 + l22 * z2));
            }
            out
        })
        .collect();
    let model = fit_constraints(&labels).unwrap();
    // the fit measures offsets from each sample's own centroid, so the
    // recovered covariance is that of n_j - mean(n), plus the epsilon ridge
    let total = sigma.iter().fold(
        Cov2 {
            xx: 0.0,
            xy: 0.0,
            yy: 0.0,
        },
        |a, s| Cov2 {
            xx: a.xx + s.xx,
            xy: a.xy + s.xy,
            yy: a.yy + s.yy,
        },
    );
    let mut worst_mu: f64 = 0.0;
    let mut worst_cov: f64 = 0.0;
    for k in 0..9 {
        let s = &sigma[k];
        let eps = model.epsilon;
        let want = Cov2 {
            xx: 7.0 / 9.0 * s.xx + total.xx / 81.0 + eps,
            xy: 7.0 / 9.0 * s.xy + total.xy / 81.0,
            yy: 7.0 / 9.0 * s.yy + total.yy / 81.0 + eps,
        };
        let jc = &model.joints[k];
        worst_mu = worst_mu.max(jc.mean.distance(mu[k]));
        worst_cov = worst_cov.max(jc.cov.sub(&want).frobenius() / want.frobenius());
    }
    (
        worst_mu <= 0.5 && worst_cov <= 0.10,
        format!(
            "max mean error {worst_mu:.3} px, max covariance error {:.1}%",
            100.0 * worst_cov
        ),
    )
}

fn clean_config() -> SceneConfig {
    let mut cfg = SceneConfig::clean(
        900,
        640,
        50,
        vec![CowSpec {
            start: Point::new(420.0, 160.0),
            speed: 4.0,
            phase: 0.0,
        }],
    );
    cfg.seed = 4;
    cfg
}

fn run_scene(scene: &Scene, model: &ConstraintModel) -> SequenceResult {
    run_sequence(
        scene.len(),
        |t| Ok(scene.render_frame(t)),
        model,
        &PipelineParams::default(),
    )
    .unwrap()
}

fn report(det: &[Frame], scene: &Scene, model: &ConstraintModel) -> EvalReport {
    let size = (scene.config.width, scene.config.height);
    evaluate(det, &scene.truth.frames, model, &EvalParams::default(), size).unwrap()
}

fn exact_counts(det: &[Frame], truth: &[Frame]) -> usize {
    det.iter()
        .zip(truth)
        .filter(|(d, t)| d.cows.len() == t.cows.len())
        .count()
}

fn clean_end_to_end() -> Outcome {
    let scene = Scene::new(clean_config()).unwrap();
    let model = scene.config.model();
    let res = run_scene(&scene, &model);
    let r = report(&res.frames, &scene, &model);
    let exact = exact_counts(&res.frames, &scene.truth.frames);
    let vcp = r.vcp.unwrap_or(0.0);
    (
        exact == 50 && r.body_f1 >= 0.97 && r.leghoof_f1 >= 0.95 && vcp == 1.0,
        format!(
            "exact count {exact}/50, Body F1 {:.4}, Leg-hoof F1 {:.4}, VCP {vcp:.3}",
            r.body_f1, r.leghoof_f1
        ),
    )
}

fn hard_config(frames: usize) -> SceneConfig {
    let bl = clean_config().body_length();
    let mut cfg = SceneConfig::clean(
        1800,
        640,
        frames,
        vec![
            CowSpec {
                start: Point::new(420.0, 160.0),
                speed: 3.0,
                phase: 0.0,
            },
            CowSpec {
                start: Point::new(420.0 + 1.3 * bl, 160.0),
                speed: 3.0,
                phase: 1.3,
            },
        ],
    );
    cfg.seed = 5;
    cfg.dropout = 0.2;
    cfg.spurious_per_plane = 10;
    cfg.fences = vec![Rect::new(0.0, 330.0, 1800.0, 380.0)];
    cfg.kappa = 0.0;
    cfg.jitter = 2.0;
    cfg
}

/// Ground truth of a separate, unoccluded run of the same herd.
fn training_labels() -> Sequence {
    let mut train = hard_config(200);
    train.seed = 99;
    train.dropout = 0.0;
    train.spurious_per_plane = 0;
    train.fences.clear();
    Scene::new(train).unwrap().truth.to_sequence()
}

fn hard_model() -> ConstraintModel {
    fit_constraints(&training_labels().upper_labels()).unwrap()
}

struct Hard {
    scene: Scene,
    model: ConstraintModel,
    res: SequenceResult,
}

fn hard_end_to_end(h: &Hard) -> Outcome {
    let r = report(&h.res.frames, &h.scene, &h.model);
    let n = h.scene.len();
    let exact = exact_counts(&h.res.frames, &h.scene.truth.frames);
    let (mut occluded, mut predicted) = (0, 0);
    for (f, t) in h.res.frames.iter().zip(&h.scene.truth.frames) {
        for truth in &t.cows {
            let Some(det) = f
                .cows
                .iter()
                .find(|d| d.center.distance(truth.center) < 0.25 * h.model.body_length())
            else {
                continue;
            };
            for j in JointId::UPPER {
                if truth.status(j) == JointStatus::Absent {
                    occluded += 1;
                    predicted += (det.status(j) == JointStatus::Predicted) as usize;
                }
            }
        }
    }
    (
        exact as f64 >= 0.9 * n as f64 && r.body_f1 >= 0.85 && occluded > 0 && predicted == occluded,
        format!(
            "exact count {exact}/{n}, Body F1 {:.4}, occluded upper joints predicted {predicted}/{occluded}",
            r.body_f1
        ),
    )
}

fn integer_cow(center: Point, frame: u64) -> CowSkeleton {
    let mut cow = template_cow(center, frame);
    for j in JointId::ALL {
        let p = cow.position(j).unwrap();
        cow.set(j, JointObs::detected(Point::new(p.x.round(), p.y.round()), 1.0));
    }
    cow.recompute_center();
    cow
}

fn temporal_consistency_properties() -> Outcome {
    let rigid = track_of(
        (0..30)
            .map(|t| integer_cow(Point::new(400.0 + 3.0 * t as f64, 200.0 + (t % 4) as f64), t))
            .collect(),
    );
    let tc_rigid = temporal_consistency(&rigid).unwrap();

    let mut cfg = clean_config();
    cfg.frames = 60;
    cfg.cows[0].speed = 3.0;
    cfg.jitter = 4.0;
    cfg.seed = 6;
    let scene = Scene::new(cfg).unwrap();
    let bl = scene.config.body_length();
    let track = track_of(scene.truth.frames.iter().map(|f| f.cows[0].clone()).collect());
    let before = temporal_consistency(&track).unwrap();
    let after = temporal_consistency(&filter_track(&track, 5, 0.15 * bl).unwrap()).unwrap();
    (
        tc_rigid == 0.0 && after <= 0.7 * before,
        format!(
            "rigid TC {tc_rigid}, jittered TC {before:.3} -> {after:.3} ({:.0}%)",
            100.0 * after / before
        ),
    )
}

fn post_processing_trend(h: &Hard) -> Outcome {
    let base = run_max_only(h.scene.len(), |t| Ok(h.scene.render_frame(t)), 0.1, 0).unwrap();
    let b = report(&base, &h.scene, &h.model);
    let p = report(&h.res.frames, &h.scene, &h.model);
    let (pv, bv) = (p.vcp.unwrap_or(0.0), b.vcp.unwrap_or(0.0));
    (
        pv > bv && p.body_f1 > b.body_f1,
        format!(
            "pipeline VCP {pv:.3} / Body F1 {:.3} vs max-only VCP {bv:.3} / Body F1 {:.3}",
            p.body_f1, b.body_f1
        ),
    )
}

/// Small cows so the pixel oracle stays cheap: upper body at 15% of the
/// template, legs hanging from their anchors.
fn small_cow(center: Point, frame: u64) -> CowSkeleton {
    use cowskel::joints::Limb;
    let tpl = CowTemplate::default();
    let mut cow = CowSkeleton::empty(frame);
    for j in JointId::UPPER {
        cow.set(j, JointObs::detected(center + tpl.offset(j) * 0.15, 1.0));
    }
    for (k, limb) in Limb::ALL.iter().enumerate() {
        let a = cow.position(limb.end.anchor()).unwrap();
        let dx = if k % 2 == 0 { 3.0 } else { -3.0 };
        cow.set(limb.leg(), JointObs::detected(a + Point::new(dx, 16.0), 0.9));
        cow.set(limb.hoof(), JointObs::detected(a + Point::new(dx, 33.0), 0.9));
    }
    cow.recompute_center();
    cow
}

fn brute_leghoof(det: &[Frame], truth: &[Frame], thr: f64, w: usize, h: usize) -> (usize, usize, usize) {
    let present = |c: &CowSkeleton| JointId::LEG_HOOF.iter().filter(|&&j| c.position(j).is_some()).count();
    let (mut matched, mut detected, mut labelled) = (0, 0, 0);
    for (d, t) in det.iter().zip(truth) {
        detected += d.cows.iter().map(present).sum::<usize>();
        labelled += t.cows.iter().map(present).sum::<usize>();
        let dm: Vec<Vec<bool>> = d.cows.iter().map(|c| body_mask(c, w, h)).collect();
        let tm: Vec<Vec<bool>> = t.cows.iter().map(|c| body_mask(c, w, h)).collect();
        let score: Vec<Vec<f64>> = dm.iter().map(|a| tm.iter().map(|b| dice(a, b)).collect()).collect();
        for (i, j, _) in best_pairing(&score) {
            matched += leghoof_matches(&d.cows[i], &t.cows[j], thr);
        }
    }
    (matched, detected, labelled)
}

fn metric_self_consistency() -> Outcome {
    let (w, h) = (420, 90);
    let cow = template_cow(Point::new(400.0, 220.0), 0);
    let mask = skeleton_to_mask(&cow, 900, 640).unwrap();
    let self_dice = mask_dice(&mask, &mask).unwrap();

    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let leg_noise = Normal::new(0.0, 25.0).unwrap();
    for corpus in 0..100 {
        let (mut det, mut truth) = (Vec::new(), Vec::new());
        for f in 0..rng.random_range(1..4u64) {
            let mut tf = Vec::new();
            let mut df = Vec::new();
            for slot in 0..rng.random_range(0..4usize) {
                let c = Point::new(60.0 + 130.0 * slot as f64 + rng.random_range(-5.0..5.0), 25.0);
                let mut t = small_cow(c, f);
                for j in JointId::LEG_HOOF {
                    if rng.random_bool(0.15) {
                        let p = t.position(j).unwrap();
                        t.set(
                            j,
                            JointObs {
                                position: p,
                                confidence: 1.0,
                                status: JointStatus::Absent,
                            },
                        );
                    }
                }
                if !rng.random_bool(0.2) {
                    let mut d = small_cow(
                        c + Point::new(rng.random_range(-4.0..4.0), rng.random_range(-3.0..3.0)),
                        f,
                    );
                    for j in JointId::LEG_HOOF {
                        if rng.random_bool(0.1) {
                            d.clear(j);
                        } else {
                            let p = d.position(j).unwrap();
                            d.set(
                                j,
                                JointObs::detected(
                                    p + Point::new(leg_noise.sample(&mut rng), leg_noise.sample(&mut rng)),
                                    0.8,
                                ),
                            );
                        }
                    }
                    df.push(d);
                }
                tf.push(t);
            }
            if rng.random_bool(0.2) {
                df.push(small_cow(Point::new(rng.random_range(40.0..380.0), 60.0), f));
            }
            truth.push(Frame::new(f, tf));
            det.push(Frame::new(f, df));
        }
        let got = leghoof_f1(&det, &truth, 30.0, (w, h)).unwrap();
        let (m, d, l) = brute_leghoof(&det, &truth, 30.0, w, h);
        let f1 = if d == 0 && l == 0 {
            1.0
        } else if m == 0 {
            0.0
        } else {
            let (p, r) = (m as f64 / d as f64, m as f64 / l as f64);
            2.0 * p * r / (p + r)
        };
        if (got.matched, got.detected, got.labelled) != (m, d, l) || got.f1 != f1 {
            return (
                false,
                format!("corpus {corpus}: {got:?} vs brute force matched {m} detected {d} labelled {l} f1 {f1}"),
            );
        }
    }

    let model = CowTemplate::default().to_constraint_model(1.0);
    let theta = 0.35 * model.body_length();
    let mut cows: Vec<CowSkeleton> = (0..5)
        .map(|k| template_cow(Point::new(400.0 + 50.0 * k as f64, 220.0), 0))
        .collect();
    let leg = cows[4].position(JointId::RightFrontLeg).unwrap();
    cows[4].set(
        JointId::RightFrontHoof,
        JointObs::detected(leg - Point::new(0.0, 30.0), 0.9),
    );
    let ratio = vcp(cows.iter(), &model, theta).unwrap();
    (
        self_dice == 1.0 && ratio == 0.8,
        format!("dice(x,x) {self_dice}, leghoof_f1 equals brute force on 100 corpora, VCP 4/5 = {ratio}"),
    )
}

fn read_all(dir: &Path) -> Vec<(String, Vec<u8>)> {
    let mut out: Vec<(String, Vec<u8>)> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| {
            let e = e.unwrap();
            (e.file_name().into_string().unwrap(), std::fs::read(e.path()).unwrap())
        })
        .collect();
    out.sort();
    out
}

fn determinism() -> Outcome {
    let root = tempfile::tempdir().unwrap();
    let cfg = RunConfig {
        workers: 4,
        ..RunConfig::default()
    };
    let mut runs = Vec::new();
    for run in ["a", "b"] {
        let dir = root.path().join(run);
        let data = dir.join("data");
        let scene = Scene::new(hard_config(8)).unwrap();
        write_dataset(&scene, &data).unwrap();
        let labels = dir.join("labels.json");
        training_labels().save(&labels).unwrap();
        let model = dir.join("model.json");
        cmd_fit(&labels, &model, &cfg).unwrap();
        let det = dir.join("detections.json");
        cmd_detect(&model, &data, &det, &cfg).unwrap();
        let rep = dir.join("report.json");
        cmd_eval(&det, &data.join(TRUTH_FILE), &model, &rep, &cfg).unwrap();
        let mut files = read_all(&data);
        files.push(("model.json".into(), std::fs::read(&model).unwrap()));
        runs.push((files, std::fs::read(&det).unwrap(), std::fs::read(&rep).unwrap()));
    }
    let (a, b) = (&runs[0], &runs[1]);
    let same = [a.0 == b.0, a.1 == b.1, a.2 == b.2];
    (
        same.iter().all(|&s| s),
        format!(
            "dataset ({} files) {}, detections {}, report {}",
            a.0.len(),
            ["differs", "identical"][same[0] as usize],
            ["differ", "identical"][same[1] as usize],
            ["differs", "identical"][same[2] as usize]
        ),
    )
}

fn main() {
    let start = Instant::now();
    let hard = {
        let model = hard_model();
        let scene = Scene::new(hard_config(50)).unwrap();
        let res = run_scene(&scene, &model);
        Hard { scene, model, res }
    };
    let criteria: Vec<(&str, Box<dyn Fn() -> Outcome + '_>)> = vec![
        ("NMS oracle equivalence", Box::new(nms_oracle_equivalence)),
        ("Frechet oracle equivalence", Box::new(frechet_oracle_equivalence)),
        ("constraint fit recovery", Box::new(constraint_fit_recovery)),
        ("clean end-to-end", Box::new(clean_end_to_end)),
        ("hard end-to-end", Box::new(|| hard_end_to_end(&hard))),
        ("temporal consistency", Box::new(temporal_consistency_properties)),
        (
            "post-processing beats max-only",
            Box::new(|| post_processing_trend(&hard)),
        ),
        ("metric self-consistency", Box::new(metric_self_consistency)),
        ("determinism", Box::new(determinism)),
    ];
    let mut failed = 0;
    for (k, (name, check)) in criteria.iter().enumerate() {
        let t = Instant::now();
        let (pass, detail) = check();
        failed += !pass as usize;
        println!(
            "criterion {}: {} {name}: {detail} [{:.1}s]",
            k + 1,
            if pass { "PASS" } else { "FAIL" },
            t.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} of {} passed in {:.1}s",
        criteria.len() - failed,
        criteria.len(),
        start.elapsed().as_secs_f64()
    );
    if failed > 0 {
        std::process::exit(1);
    }
}
