//! Overlay drawing: body contour, limbs and joints per cow, colored by
//! track, written as binary PPM and optionally SVG.
//!
//! Detected joints are filled discs, predicted joints hollow rings.

use std::fmt::Write as _;
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::joints::{JointId, Limb};
use crate::skeleton::{CowSkeleton, Frame, JointStatus};

pub type Rgb = [u8; 3];

const PALETTE: [Rgb; 8] = [
    [230, 25, 75],
    [60, 180, 75],
    [0, 130, 200],
    [245, 130, 48],
    [145, 30, 180],
    [70, 240, 240],
    [240, 50, 230],
    [210, 245, 60],
];
const UNTRACKED: Rgb = [200, 200, 200];
const JOINT_RADIUS: f64 = 4.0;

pub fn track_color(track_id: Option<u64>) -> Rgb {
    track_id.map_or(UNTRACKED, |id| PALETTE[(id % PALETTE.len() as u64) as usize])
}

/// Row-major RGB image.
#[derive(Debug, Clone, PartialEq)]
pub struct RgbImage {
    pub width: usize,
    pub height: usize,
    pub data: Vec<u8>,
}

impl RgbImage {
    pub fn new(width: usize, height: usize) -> Self {
        RgbImage {
            width,
            height,
            data: vec![0; width * height * 3],
        }
    }

    pub fn pixel(&self, x: usize, y: usize) -> Rgb {
        let i = 3 * (y * self.width + x);
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    fn put(&mut self, x: i64, y: i64, c: Rgb) {
        if x < 0 || y < 0 || x >= self.width as i64 || y >= self.height as i64 {
            return;
        }
        let i = 3 * (y as usize * self.width + x as usize);
        self.data[i..i + 3].copy_from_slice(&c);
    }

    /// One-pixel line by uniform sampling along the longer axis.
    pub fn line(&mut self, a: Point, b: Point, c: Rgb) {
        let steps = (b.x - a.x).abs().max((b.y - a.y).abs()).ceil().max(1.0) as usize;
        for k in 0..=steps {
            let t = k as f64 / steps as f64;
            let p = a + (b - a) * t;
            self.put(p.x.round() as i64, p.y.round() as i64, c);
        }
    }

    pub fn disc(&mut self, at: Point, r: f64, c: Rgb, hollow: bool) {
        let ri = r.ceil() as i64;
        let (cx, cy) = (at.x.round() as i64, at.y.round() as i64);
        for dy in -ri..=ri {
            for dx in -ri..=ri {
                let d = ((dx * dx + dy * dy) as f64).sqrt();
                if d <= r && (!hollow || d > r - 1.5) {
                    self.put(cx + dx, cy + dy, c);
                }
            }
        }
    }

    pub fn to_ppm(&self) -> Vec<u8> {
        let mut out = format!("P6\n{} {}\n255\n", self.width, self.height).into_bytes();
        out.extend_from_slice(&self.data);
        out
    }

    pub fn write_ppm(&self, path: impl AsRef<Path>) -> Result<()> {
        let path = path.as_ref();
        std::fs::write(path, self.to_ppm()).map_err(|e| Error::io(path, e))
    }
}

fn limb_polyline(cow: &CowSkeleton, limb: Limb) -> Vec<Point> {
    [limb.end.anchor(), limb.leg(), limb.hoof()]
        .iter()
        .map_while(|&j| cow.position(j))
        .collect()
}

fn contour_polyline(cow: &CowSkeleton) -> Vec<Point> {
    let mut pts: Vec<Point> = JointId::CONTOUR.iter().filter_map(|&j| cow.position(j)).collect();
    if pts.len() == JointId::CONTOUR.len() {
        pts.push(pts[0]);
    }
    pts
}

pub fn draw_cow(img: &mut RgbImage, cow: &CowSkeleton) {
    let c = track_color(cow.track_id);
    for w in contour_polyline(cow).windows(2) {
        img.line(w[0], w[1], c);
    }
    for limb in Limb::ALL {
        for w in limb_polyline(cow, limb).windows(2) {
            img.line(w[0], w[1], c);
        }
    }
    for j in JointId::ALL {
        if let Some(o) = cow.get(j).filter(|o| o.status != JointStatus::Absent) {
            img.disc(o.position, JOINT_RADIUS, c, o.status == JointStatus::Predicted);
        }
    }
}

pub fn render_frame(frame: &Frame, width: usize, height: usize) -> RgbImage {
    let mut img = RgbImage::new(width, height);
    for cow in &frame.cows {
        draw_cow(&mut img, cow);
    }
    img
}

fn hex(c: Rgb) -> String {
    format!("#{:02x}{:02x}{:02x}", c[0], c[1], c[2])
}

fn svg_points(pts: &[Point]) -> String {
    let mut s = String::new();
    for (k, p) in pts.iter().enumerate() {
        if k > 0 {
            s.push(' ');
        }
        let _ = write!(s, "{:.2},{:.2}", p.x, p.y);
    }
    s
}

pub fn render_svg(frame: &Frame, width: usize, height: usize) -> String {
    let mut s = format!(
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width}\" height=\"{height}\" viewBox=\"0 0 {width} {height}\">\n<rect width=\"100%\" height=\"100%\" fill=\"black\"/>\n"
    );
    for cow in &frame.cows {
        let c = hex(track_color(cow.track_id));
        let _ = writeln!(
            s,
            "<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\"/>",
            svg_points(&contour_polyline(cow))
        );
        for limb in Limb::ALL {
            let pts = limb_polyline(cow, limb);
            if pts.len() > 1 {
                let _ = writeln!(
                    s,
                    "<polyline points=\"{}\" fill=\"none\" stroke=\"{c}\"/>",
                    svg_points(&pts)
                );
            }
        }
        for j in JointId::ALL {
            if let Some(o) = cow.get(j).filter(|o| o.status != JointStatus::Absent) {
                let fill = if o.status == JointStatus::Predicted {
                    "none"
                } else {
                    c.as_str()
                };
                let _ = writeln!(
                    s,
                    "<circle cx=\"{:.2}\" cy=\"{:.2}\" r=\"{JOINT_RADIUS}\" fill=\"{fill}\" stroke=\"{c}\"><title>{j}</title></circle>",
                    o.position.x, o.position.y
                );
            }
        }
    }
    s.push_str("</svg>\n");
    s
}

pub fn frame_image_name(frame_index: u64, ext: &str) -> String {
    format!("frame_{frame_index:06}.{ext}")
}
