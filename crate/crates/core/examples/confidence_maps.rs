//! CMAP files, stream merging and peak extraction on one rendered frame.

use cowskel::confmap::{extract_candidates, merge_maps, read_cmap, write_cmap, CMAP_HEADER_LEN};
use cowskel::synth::{CowSpec, Scene, SceneConfig};
use cowskel::{JointId, Point};

fn main() -> cowskel::Result<()> {
    let mut cfg = SceneConfig::clean(
        900,
        640,
        3,
        vec![CowSpec {
            start: Point::new(420.0, 160.0),
            speed: 4.0,
            phase: 0.0,
        }],
    );
    cfg.spurious_per_plane = 2;
    cfg.dropout = 0.1;
    cfg.seed = 3;
    let scene = Scene::new(cfg)?;
    let (color, diff) = scene.render_frame(1);

    let dir = std::env::temp_dir();
    let path = dir.join("cowskel-frame.color.cmap");
    write_cmap(&color, &path)?;
    let bytes = std::fs::metadata(&path)
        .map_err(|e| cowskel::Error::io(&path, e))?
        .len();
    println!(
        "{}: {} bytes ({} header + 17 planes of {}x{} f32)",
        path.display(),
        bytes,
        CMAP_HEADER_LEN,
        color.width,
        color.height
    );
    assert_eq!(read_cmap(&path)?, color);

    let merged = merge_maps(&color, &diff)?;
    let candidates = extract_candidates(&merged, 5, 0.1);
    println!("{} candidates after NMS (radius 5, threshold 0.1)", candidates.len());
    let truth = &scene.truth.frames[1].cows[0];
    for j in JointId::ALL {
        let mine: Vec<_> = candidates.iter().filter(|c| c.joint == j).collect();
        let t = truth.known_position(j).unwrap();
        let best = mine
            .iter()
            .map(|c| c.position.distance(t))
            .fold(f64::INFINITY, f64::min);
        println!(
            "  {:<18} {:2} peaks, nearest to truth {:5.1} px",
            j.name(),
            mine.len(),
            best
        );
    }
    Ok(())
}
