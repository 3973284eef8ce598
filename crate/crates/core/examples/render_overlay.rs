//! Draw detections as PPM and SVG overlays; predicted joints are hollow.
//!
//!     cargo run --example render_overlay -- [OUT_DIR]

use cowskel::pipeline::{run_sequence, PipelineParams};
use cowskel::render::{frame_image_name, render_frame, render_svg};
use cowskel::synth::{CowSpec, Scene, SceneConfig};
use cowskel::Point;

fn main() -> cowskel::Result<()> {
    let out: std::path::PathBuf = std::env::args()
        .nth(1)
        .map(Into::into)
        .unwrap_or_else(|| std::env::temp_dir().join("cowskel-overlay"));
    std::fs::create_dir_all(&out).map_err(|e| cowskel::Error::io(&out, e))?;
    let mut cfg = SceneConfig::clean(
        900,
        640,
        4,
        vec![CowSpec {
            start: Point::new(420.0, 160.0),
            speed: 6.0,
            phase: 0.0,
        }],
    );
    cfg.dropout = 0.3;
    cfg.seed = 9;
    let model = cfg.model();
    let scene = Scene::new(cfg)?;
    let res = run_sequence(
        scene.len(),
        |t| Ok(scene.render_frame(t)),
        &model,
        &PipelineParams::default(),
    )?;
    for f in &res.frames {
        render_frame(f, 900, 640).write_ppm(out.join(frame_image_name(f.index, "ppm")))?;
        let svg = out.join(frame_image_name(f.index, "svg"));
        std::fs::write(&svg, render_svg(f, 900, 640)).map_err(|e| cowskel::Error::io(&svg, e))?;
    }
    println!("{} frames drawn to {}", res.frames.len(), out.display());
    Ok(())
}
