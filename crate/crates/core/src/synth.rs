//! Synthetic walking-cow scenes with known ground truth.
//!
//! Cows walk left to right at constant speed while their limbs swing. Every
//! visible joint is rendered as a Gaussian blob into its plane of a color
//! and a diff confidence-map stack, with optional dropout, spurious blobs,
//! fence attenuation and positional jitter.
//!
//! Randomness comes from ChaCha8 seeded with `seed`. Frame `t` draws its
//! ground-truth jitter from stream `2t` and its rendering noise from stream
//! `2t + 1`, so frames can be produced in any order.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::confmap::{cmap_file_name, write_cmap, ConfidenceMapStack, Stream};
use crate::error::{Error, Result};
use crate::geometry::{Point, Rect};
use crate::joints::{JointId, Limb, LimbEnd, Side, NUM_JOINTS, NUM_UPPER};
use crate::model::{body_center, ConstraintModel, DEFAULT_EPSILON};
use crate::schema::Sequence;
use crate::skeleton::{CowSkeleton, Frame, JointObs, JointStatus};

/// Body and gait geometry of the rendered cows, in template pixels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CowTemplate {
    /// Upper-body joint positions in `JointId::UPPER` order.
    pub upper: [Point; NUM_UPPER],
    pub thigh_length: f64,
    pub shin_length: f64,
    /// Shift of the far-side limbs relative to the near-side ones.
    pub far_offset: Point,
    pub swing_amplitude_deg: f64,
    pub knee_bend_deg: f64,
    /// Frames per gait cycle.
    pub gait_period: f64,
}

impl Default for CowTemplate {
    fn default() -> Self {
        let p = Point::new;
        CowTemplate {
            upper: [
                p(610.0, 200.0), // NOSE
                p(570.0, 70.0),  // HEAD
                p(480.0, 10.0),  // NECK_TOP
                p(490.0, 170.0), // NECK_BOTTOM
                p(380.0, -20.0), // SHOULDER
                p(200.0, -10.0), // SPINE
                p(0.0, 0.0),     // TAILHEAD
                p(60.0, 300.0),  // MID_THIGH
                p(390.0, 320.0), // SHOULDER_BOTTOM
            ],
            thigh_length: 110.0,
            shin_length: 110.0,
            far_offset: p(24.0, -8.0),
            swing_amplitude_deg: 20.0,
            knee_bend_deg: 30.0,
            gait_period: 24.0,
        }
    }
}

impl CowTemplate {
    /// Template whose upper body is the mean shape of a fitted model.
    pub fn from_model(model: &ConstraintModel) -> Self {
        let mut t = CowTemplate::default();
        for (slot, c) in t.upper.iter_mut().zip(model.joints.iter()) {
            *slot = c.mean;
        }
        t
    }

    pub fn center(&self) -> Point {
        Point::mean(self.upper.iter().copied()).expect("nine points")
    }

    pub fn offset(&self, joint: JointId) -> Point {
        self.upper[joint.index()] - self.center()
    }

    /// Constraint model with the template offsets and isotropic covariance.
    pub fn to_constraint_model(&self, scale: f64) -> ConstraintModel {
        let c = self.center();
        let offsets = self.upper.map(|p| (p - c) * scale);
        ConstraintModel::from_offsets(offsets, DEFAULT_EPSILON)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CowSpec {
    /// Body center at frame 0.
    pub start: Point,
    /// Pixels per frame along +x.
    pub speed: f64,
    /// Gait phase offset in radians.
    #[serde(default)]
    pub phase: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SceneConfig {
    pub width: usize,
    pub height: usize,
    pub frames: usize,
    #[serde(default)]
    pub seed: u64,
    pub cows: Vec<CowSpec>,
    #[serde(default = "default_blob_sigma")]
    pub blob_sigma: f64,
    /// Probability that a joint blob is not rendered, per stream.
    #[serde(default)]
    pub dropout: f64,
    /// Unit-peak blobs at uniform positions, per plane and stream.
    #[serde(default)]
    pub spurious_per_plane: usize,
    #[serde(default)]
    pub fences: Vec<Rect>,
    /// Multiplier applied to blobs centered inside a fence.
    #[serde(default = "default_kappa")]
    pub kappa: f64,
    /// Standard deviation of the per-joint ground-truth jitter, pixels.
    #[serde(default)]
    pub jitter: f64,
    #[serde(default = "default_scale")]
    pub template_scale: f64,
    #[serde(default)]
    pub template: CowTemplate,
}

fn default_blob_sigma() -> f64 {
    8.0
}

fn default_kappa() -> f64 {
    1.0
}

fn default_scale() -> f64 {
    1.0
}

impl SceneConfig {
    /// A noiseless scene with the given cows.
    pub fn clean(width: usize, height: usize, frames: usize, cows: Vec<CowSpec>) -> Self {
        SceneConfig {
            width,
            height,
            frames,
            seed: 0,
            cows,
            blob_sigma: default_blob_sigma(),
            dropout: 0.0,
            spurious_per_plane: 0,
            fences: Vec::new(),
            kappa: 1.0,
            jitter: 0.0,
            template_scale: 1.0,
            template: CowTemplate::default(),
        }
    }

    pub fn body_length(&self) -> f64 {
        self.model().body_length()
    }

    /// Constraint model matching the rendered template.
    pub fn model(&self) -> ConstraintModel {
        self.template.to_constraint_model(self.template_scale)
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::Config(m));
        if self.width == 0 || self.height == 0 {
            return bad(format!("image size {}x{} is empty", self.width, self.height));
        }
        if !(0.0..=1.0).contains(&self.dropout) {
            return bad(format!("dropout {} outside [0, 1]", self.dropout));
        }
        if !(0.0..=1.0).contains(&self.kappa) {
            return bad(format!("kappa {} outside [0, 1]", self.kappa));
        }
        if !(self.blob_sigma > 0.0) {
            return bad(format!("blob_sigma must be positive, got {}", self.blob_sigma));
        }
        if !(self.jitter >= 0.0) {
            return bad(format!("jitter must be non-negative, got {}", self.jitter));
        }
        if !(self.template_scale > 0.0) {
            return bad(format!("template_scale must be positive, got {}", self.template_scale));
        }
        if !(self.template.gait_period > 0.0) {
            return bad("gait_period must be positive".into());
        }
        let bl = self.body_length();
        for (i, a) in self.cows.iter().enumerate() {
            for (k, b) in self.cows.iter().enumerate().skip(i + 1) {
                if a.start.distance(b.start) < 0.5 * bl {
                    return bad(format!(
                        "cows {i} and {k} overlap at spawn: {:.1} px apart, minimum {:.1}",
                        a.start.distance(b.start),
                        0.5 * bl
                    ));
                }
            }
        }
        Ok(())
    }
}

/// True positions and occlusion flags of every cow in every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct GroundTruth {
    pub width: usize,
    pub height: usize,
    /// Cows carry their identity as `track_id`; occluded joints have status
    /// `Absent` but keep their true position.
    pub frames: Vec<Frame>,
}

impl GroundTruth {
    pub fn is_occluded(&self, frame: usize, cow: usize, joint: JointId) -> bool {
        self.frames[frame].cows[cow].status(joint) == JointStatus::Absent
    }

    pub fn to_sequence(&self) -> Sequence {
        Sequence::new(self.width, self.height, self.frames.clone())
    }
}

fn rng_for(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn rotate_down(angle: f64, length: f64) -> Point {
    // angle 0 points straight down; positive angles swing forward (+x)
    Point::new(length * angle.sin(), length * angle.cos())
}

fn limb_phase(limb: Limb) -> f64 {
    match (limb.end, limb.side) {
        (LimbEnd::Front, Side::Right) | (LimbEnd::Back, Side::Left) => 0.0,
        (LimbEnd::Front, Side::Left) | (LimbEnd::Back, Side::Right) => PI,
    }
}

/// A scene ready to be rendered frame by frame.
#[derive(Debug, Clone)]
pub struct Scene {
    pub config: SceneConfig,
    pub truth: GroundTruth,
}

impl Scene {
    pub fn new(config: SceneConfig) -> Result<Self> {
        config.validate()?;
        let frames = (0..config.frames)
            .map(|t| Frame::new(t as u64, ground_truth_frame(&config, t)))
            .collect();
        let truth = GroundTruth {
            width: config.width,
            height: config.height,
            frames,
        };
        Ok(Scene { config, truth })
    }

    pub fn len(&self) -> usize {
        self.config.frames
    }

    pub fn is_empty(&self) -> bool {
        self.config.frames == 0
    }

    /// Color and diff stacks of frame `t`.
    pub fn render_frame(&self, t: usize) -> (ConfidenceMapStack, ConfidenceMapStack) {
        render(&self.config, &self.truth.frames[t], t)
    }
}

/// Jitter-free joint positions of cow `spec` at (possibly negative) time `t`.
fn kinematics(cfg: &SceneConfig, spec: &CowSpec, t: f64) -> [Point; NUM_JOINTS] {
    let tpl = &cfg.template;
    let s = cfg.template_scale;
    let center = spec.start + Point::new(spec.speed * t, 0.0);
    let tc = tpl.center();
    let mut out = [Point::ORIGIN; NUM_JOINTS];
    for j in JointId::UPPER {
        out[j.index()] = center + (tpl.upper[j.index()] - tc) * s;
    }
    let w = 2.0 * PI / tpl.gait_period;
    for limb in Limb::ALL {
        let mut hip = out[limb.end.anchor().index()];
        if limb.side == Side::Left {
            hip += tpl.far_offset * s;
        }
        let theta = w * t + limb_phase(limb) + spec.phase;
        let swing = tpl.swing_amplitude_deg.to_radians() * theta.sin();
        // the knee flexes during the forward half of the swing
        let bend = tpl.knee_bend_deg.to_radians() * (0.5 + 0.5 * theta.cos());
        let leg = hip + rotate_down(swing, tpl.thigh_length * s);
        let hoof = leg + rotate_down(swing - bend, tpl.shin_length * s);
        out[limb.leg().index()] = leg;
        out[limb.hoof().index()] = hoof;
    }
    out
}

fn ground_truth_frame(cfg: &SceneConfig, t: usize) -> Vec<CowSkeleton> {
    let mut rng = rng_for(cfg.seed, 2 * t as u64);
    let noise = (cfg.jitter > 0.0).then(|| Normal::new(0.0, cfg.jitter).expect("finite jitter"));
    cfg.cows
        .iter()
        .enumerate()
        .map(|(k, spec)| {
            let pos = kinematics(cfg, spec, t as f64);
            let mut cow = CowSkeleton::empty(t as u64);
            cow.track_id = Some(k as u64);
            for j in JointId::ALL {
                let mut p = pos[j.index()];
                if let Some(n) = &noise {
                    p += Point::new(n.sample(&mut rng), n.sample(&mut rng));
                }
                let occluded = cfg.fences.iter().any(|f| f.contains(p));
                let status = if occluded {
                    JointStatus::Absent
                } else {
                    JointStatus::Detected
                };
                cow.set(
                    j,
                    JointObs {
                        position: p,
                        confidence: 1.0,
                        status,
                    },
                );
            }
            let upper: Vec<(JointId, Point)> = JointId::UPPER
                .iter()
                .map(|&j| (j, cow.known_position(j).expect("set")))
                .collect();
            cow.center = body_center(&upper).expect("nine upper points");
            cow
        })
        .collect()
}

/// Max-composes `peak · exp(-d² / 2σ²)` within 4σ of `at`.
pub fn draw_blob(plane: &mut [f32], width: usize, height: usize, at: Point, peak: f64, sigma: f64) {
    let r = 4.0 * sigma;
    let x0 = (at.x - r).floor().max(0.0) as usize;
    let y0 = (at.y - r).floor().max(0.0) as usize;
    let x1 = ((at.x + r).ceil().min(width as f64 - 1.0)).max(-1.0);
    let y1 = ((at.y + r).ceil().min(height as f64 - 1.0)).max(-1.0);
    if x1 < 0.0 || y1 < 0.0 {
        return;
    }
    let (x1, y1) = (x1 as usize, y1 as usize);
    let k = -0.5 / (sigma * sigma);
    for y in y0..=y1 {
        let dy = y as f64 - at.y;
        let row = &mut plane[y * width..(y + 1) * width];
        for (x, v) in row.iter_mut().enumerate().take(x1 + 1).skip(x0) {
            let dx = x as f64 - at.x;
            let val = (peak * (k * (dx * dx + dy * dy)).exp()) as f32;
            if val > *v {
                *v = val;
            }
        }
    }
}

fn render(cfg: &SceneConfig, truth: &Frame, t: usize) -> (ConfidenceMapStack, ConfidenceMapStack) {
    let (w, h) = (cfg.width, cfg.height);
    let mut color = ConfidenceMapStack::zeros(w, h, Stream::Color, t as u64);
    let mut diff = ConfidenceMapStack::zeros(w, h, Stream::Diff, t as u64);
    let mut rng = rng_for(cfg.seed, 2 * t as u64 + 1);
    let attenuation = |p: Point| {
        if cfg.fences.iter().any(|f| f.contains(p)) {
            cfg.kappa
        } else {
            1.0
        }
    };

    for (spec, cow) in cfg.cows.iter().zip(&truth.cows) {
        let now = kinematics(cfg, spec, t as f64);
        let before = kinematics(cfg, spec, t as f64 - 1.0);
        for j in JointId::ALL {
            let p = cow.known_position(j).expect("truth has every joint");
            let peak = match j.limb() {
                None => rng.random_range(0.7..1.0),
                Some(l) if l.side == Side::Right => rng.random_range(0.85..1.0),
                Some(_) => rng.random_range(0.7..0.85),
            };
            let keep_color = rng.random::<f64>() >= cfg.dropout;
            let keep_diff = rng.random::<f64>() >= cfg.dropout;
            let a = attenuation(p);
            if keep_color && a > 0.0 {
                draw_blob(color.plane_mut(j), w, h, p, peak * a, cfg.blob_sigma);
            }
            let moved = now[j.index()].distance(before[j.index()]) >= 1.0;
            if keep_diff && moved && a > 0.0 {
                let dpeak = if j.is_upper() { (1.2 * peak).min(1.0) } else { peak };
                draw_blob(diff.plane_mut(j), w, h, p, dpeak * a, cfg.blob_sigma);
            }
        }
    }
    for stack in [&mut color, &mut diff] {
        for j in JointId::ALL {
            for _ in 0..cfg.spurious_per_plane {
                let p = Point::new(rng.random_range(0.0..w as f64), rng.random_range(0.0..h as f64));
                let a = attenuation(p);
                if a > 0.0 {
                    draw_blob(stack.plane_mut(j), w, h, p, a, cfg.blob_sigma);
                }
            }
        }
    }
    (color, diff)
}

/// Ground truth plus every frame's stacks, fully materialized.
///
/// Large scenes are better rendered one frame at a time through [`Scene`].
pub fn generate_scene(config: &SceneConfig) -> Result<(GroundTruth, Vec<(ConfidenceMapStack, ConfidenceMapStack)>)> {
    let scene = Scene::new(config.clone())?;
    let stacks = (0..scene.len()).map(|t| scene.render_frame(t)).collect();
    Ok((scene.truth, stacks))
}

pub const TRUTH_FILE: &str = "truth.json";
pub const MANIFEST_FILE: &str = "manifest.json";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub seed: u64,
    pub frames: usize,
    pub width: usize,
    pub height: usize,
    pub body_length: f64,
    /// Every file of the dataset, relative to its directory.
    pub files: Vec<String>,
    pub config: SceneConfig,
}

/// Writes the cmap pairs, `truth.json` and `manifest.json` into `dir`.
pub fn write_dataset(scene: &Scene, dir: impl AsRef<Path>) -> Result<Manifest> {
    let dir = dir.as_ref();
    std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    let mut files = Vec::with_capacity(2 * scene.len() + 2);
    for t in 0..scene.len() {
        let (color, diff) = scene.render_frame(t);
        for stack in [&color, &diff] {
            let name = cmap_file_name(t as u64, stack.stream);
            write_cmap(stack, dir.join(&name))?;
            files.push(name);
        }
    }
    let mut truth = scene.truth.to_sequence();
    truth.config = Some(serde_json::to_value(&scene.config).expect("config serializes"));
    truth.save(dir.join(TRUTH_FILE))?;
    files.push(TRUTH_FILE.to_string());
    files.push(MANIFEST_FILE.to_string());
    let manifest = Manifest {
        seed: scene.config.seed,
        frames: scene.len(),
        width: scene.config.width,
        height: scene.config.height,
        body_length: scene.config.body_length(),
        files,
        config: scene.config.clone(),
    };
    let path: PathBuf = dir.join(MANIFEST_FILE);
    let mut text = serde_json::to_string_pretty(&manifest).expect("manifest serializes");
    text.push('\n');
    std::fs::write(&path, text).map_err(|e| Error::io(&path, e))?;
    Ok(manifest)
}

pub fn load_scene_config(path: impl AsRef<Path>) -> Result<SceneConfig> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|e| Error::json(path, e))
}
