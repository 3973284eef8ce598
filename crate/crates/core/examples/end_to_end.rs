//! The command-line workflow driven through the library: synth, fit,
//! detect, eval and render in a scratch directory.
//!
//! The same steps from a shell:
//!
//!     cowskel synth  --input scene.json --output data --seed 42
//!     cowskel fit    --input data/truth.json --output model.json
//!     cowskel detect --model model.json --input data --output detections.json
//!     cowskel eval   --model model.json --input detections.json --truth data/truth.json --output report.json
//!     cowskel render --input detections.json --output overlays --svg

use cowskel::commands::{cmd_detect, cmd_eval, cmd_fit, cmd_render, cmd_synth, RunConfig};

const SCENE: &str = r#"{
  "width": 1000,
  "height": 640,
  "frames": 16,
  "cows": [{"start": [420.0, 160.0], "speed": 4.0, "phase": 0.0}],
  "dropout": 0.1,
  "spurious_per_plane": 4,
  "jitter": 1.0
}"#;

fn main() -> cowskel::Result<()> {
    let dir = std::env::temp_dir().join("cowskel-end-to-end");
    std::fs::create_dir_all(&dir).map_err(|e| cowskel::Error::io(&dir, e))?;
    let scene = dir.join("scene.json");
    std::fs::write(&scene, SCENE).map_err(|e| cowskel::Error::io(&scene, e))?;

    let cfg = RunConfig {
        seed: Some(42),
        svg: true,
        ..RunConfig::default()
    };
    let data = dir.join("data");
    let manifest = cmd_synth(&scene, &data, &cfg)?;
    println!("synth: {} files", manifest.files.len());

    let truth = data.join(cowskel::synth::TRUTH_FILE);
    let model_path = dir.join("model.json");
    let model = cmd_fit(&truth, &model_path, &cfg)?;
    println!(
        "fit: body length {:.1} px from {} frames",
        model.body_length(),
        model.frames_used
    );

    let det = dir.join("detections.json");
    let seq = cmd_detect(&model_path, &data, &det, &cfg)?;
    println!("detect: {} frames, {} tracks", seq.frames.len(), seq.tracks.len());

    let report = cmd_eval(&det, &truth, &model_path, &dir.join("report.json"), &cfg)?;
    print!("{}", report.to_table());

    let n = cmd_render(&det, &dir.join("overlays"), &cfg)?;
    println!("render: {n} overlays in {}", dir.join("overlays").display());
    Ok(())
}
