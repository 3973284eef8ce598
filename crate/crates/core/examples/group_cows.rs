//! Group the candidates of one cluttered frame into cows: mean-shift on
//! back-projected centers, consensus refinement, prediction of missing
//! joints and limb assignment.

use cowskel::geometry::Rect;
use cowskel::grouping::{detect_frame, DetectParams};
use cowskel::skeleton::JointStatus;
use cowskel::synth::{CowSpec, Scene, SceneConfig};
use cowskel::{JointId, Point};

fn main() -> cowskel::Result<()> {
    let base = SceneConfig::clean(
        1800,
        640,
        1,
        vec![
            CowSpec {
                start: Point::new(420.0, 160.0),
                speed: 3.0,
                phase: 0.0,
            },
            CowSpec {
                start: Point::new(1260.0, 160.0),
                speed: 3.0,
                phase: 1.3,
            },
        ],
    );
    let model = base.model();
    let mut cfg = base;
    cfg.seed = 12;
    cfg.dropout = 0.2;
    cfg.spurious_per_plane = 8;
    cfg.fences = vec![Rect::new(0.0, 330.0, 1800.0, 380.0)];
    cfg.kappa = 0.0;
    let scene = Scene::new(cfg)?;
    let (color, diff) = scene.render_frame(0);

    let det = detect_frame(&color, &diff, &model, &DetectParams::default())?;
    println!(
        "{} cows, {} rejected clusters, {} unassigned leg candidates",
        det.cows.len(),
        det.rejected_clusters.len(),
        det.unassigned_legs.len()
    );
    for (k, cow) in det.cows.iter().enumerate() {
        println!(
            "cow {k}: center ({:.1}, {:.1}), {} upper joints detected",
            cow.center.x,
            cow.center.y,
            cow.detected_upper_count()
        );
        for j in JointId::ALL {
            match cow.get(j) {
                Some(o) if o.status == JointStatus::Predicted => println!(
                    "  {:<18} predicted at ({:.1}, {:.1})",
                    j.name(),
                    o.position.x,
                    o.position.y
                ),
                Some(_) => {}
                None => println!("  {:<18} missing", j.name()),
            }
        }
    }
    let mut rejected = det.rejected_clusters.clone();
    rejected.sort_by_key(|r| std::cmp::Reverse(r.member_joints));
    for r in rejected.iter().take(3) {
        println!(
            "rejected near ({:.0}, {:.0}): {} joints voted, {} inside the gate",
            r.mode.x, r.mode.y, r.member_joints, r.supported_joints
        );
    }
    Ok(())
}
