//! Score the pipeline and the one-peak-per-map baseline on the same
//! occluded, cluttered two-cow scene.

use cowskel::geometry::Rect;
use cowskel::metrics::{evaluate, EvalParams};
use cowskel::model::fit_constraints;
use cowskel::pipeline::{run_max_only, run_sequence, PipelineParams};
use cowskel::synth::{CowSpec, Scene, SceneConfig};
use cowskel::Point;

fn main() -> cowskel::Result<()> {
    let herd = vec![
        CowSpec {
            start: Point::new(420.0, 160.0),
            speed: 3.0,
            phase: 0.0,
        },
        CowSpec {
            start: Point::new(1255.0, 160.0),
            speed: 3.0,
            phase: 1.3,
        },
    ];
    let mut train = SceneConfig::clean(1800, 640, 150, herd.clone());
    train.jitter = 2.0;
    train.seed = 99;
    let model = fit_constraints(&Scene::new(train)?.truth.to_sequence().upper_labels())?;

    let mut cfg = SceneConfig::clean(1800, 640, 30, herd);
    cfg.seed = 5;
    cfg.dropout = 0.2;
    cfg.spurious_per_plane = 10;
    cfg.fences = vec![Rect::new(0.0, 330.0, 1800.0, 380.0)];
    cfg.kappa = 0.0;
    cfg.jitter = 2.0;
    let scene = Scene::new(cfg)?;
    let size = (scene.config.width, scene.config.height);
    let source = |t| Ok(scene.render_frame(t));

    let ours = run_sequence(scene.len(), source, &model, &PipelineParams::default())?;
    let base = run_max_only(scene.len(), source, 0.1, 0)?;
    let params = EvalParams::default();
    println!(
        "pipeline\n{}",
        evaluate(&ours.frames, &scene.truth.frames, &model, &params, size)?.to_table()
    );
    println!(
        "max-only baseline\n{}",
        evaluate(&base, &scene.truth.frames, &model, &params, size)?.to_table()
    );
    Ok(())
}
