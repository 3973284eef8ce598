//! Fit the per-joint offset Gaussians from labelled frames, inspect them and
//! use them to predict joints from a single observation.

use cowskel::model::{fit_constraints, ConstraintModel};
use cowskel::synth::{CowSpec, Scene, SceneConfig};
use cowskel::{JointId, Point};

fn main() -> cowskel::Result<()> {
    // labels: ground truth of a jittered walk
    let mut cfg = SceneConfig::clean(
        900,
        640,
        120,
        vec![CowSpec {
            start: Point::new(420.0, 160.0),
            speed: 2.0,
            phase: 0.0,
        }],
    );
    cfg.jitter = 3.0;
    cfg.seed = 7;
    let labels = Scene::new(cfg)?.truth.to_sequence().upper_labels();

    let model = fit_constraints(&labels)?;
    println!(
        "fitted on {} frames, body length {:.1} px",
        model.frames_used,
        model.body_length()
    );
    for j in JointId::UPPER {
        let c = model.constraint(j)?;
        println!(
            "{:<16} mean ({:7.1}, {:7.1})  cov [{:5.2} {:5.2}; {:5.2} {:5.2}]",
            j.name(),
            c.mean.x,
            c.mean.y,
            c.cov.xx,
            c.cov.xy,
            c.cov.xy,
            c.cov.yy
        );
    }

    // one detected head is enough to place the whole upper body
    let head = Point::new(600.0, 120.0);
    let center = model.backproject(JointId::Head, head)?;
    println!("\nhead at {head:?} implies center {center:?}");
    for j in [JointId::Nose, JointId::Tailhead, JointId::MidThigh] {
        println!("  predicted {:<10} {:?}", j.name(), model.project_joint(center, j)?);
    }

    let path = std::env::temp_dir().join("cowskel-model.json");
    model.save(&path)?;
    let back = ConstraintModel::load(&path)?;
    println!("\nsaved to {} (round trip exact: {})", path.display(), back == model);
    Ok(())
}
