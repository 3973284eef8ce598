//! Confidence-map stacks: the CMAP file format, frame differencing, merging
//! the color and frame-difference streams, and peak extraction.
//!
//! CMAP layout (little-endian):
//!
//! ```text
//! offset  size  field
//!      0     4  magic "CMAP"
//!      4     1  version = 1
//!      5     1  stream (0 = color, 1 = diff)
//!      6     2  padding = 0
//!      8     4  width
//!     12     4  height
//!     16     4  joints = 17
//!     20     8  frame_index
//!     28     …  17 planes of width×height f32, row-major
//! ```

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::geometry::Point;
use crate::joints::{JointId, NUM_JOINTS};
use crate::skeleton::{KeypointCandidate, MapSource};

pub const CMAP_MAGIC: &[u8; 4] = b"CMAP";
pub const CMAP_VERSION: u8 = 1;
pub const CMAP_HEADER_LEN: usize = 28;
/// Upper bound on `width × height` accepted by the reader.
pub const MAX_PIXELS: u64 = 1 << 28;

pub const DEFAULT_NMS_RADIUS: usize = 5;
pub const DEFAULT_NMS_THRESHOLD: f64 = 0.1;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Stream {
    Color,
    Diff,
}

impl Stream {
    pub fn code(self) -> u8 {
        match self {
            Stream::Color => 0,
            Stream::Diff => 1,
        }
    }

    pub fn from_code(code: u8) -> Option<Stream> {
        match code {
            0 => Some(Stream::Color),
            1 => Some(Stream::Diff),
            _ => None,
        }
    }

    pub fn extension(self) -> &'static str {
        match self {
            Stream::Color => "color",
            Stream::Diff => "diff",
        }
    }
}

/// File name of one frame's stack: `frame_%06d.{color|diff}.cmap`.
pub fn cmap_file_name(frame_index: u64, stream: Stream) -> String {
    format!("frame_{:06}.{}.cmap", frame_index, stream.extension())
}

/// Seventeen dense score planes for one frame of one stream.
#[derive(Debug, Clone, PartialEq)]
pub struct ConfidenceMapStack {
    pub width: usize,
    pub height: usize,
    pub stream: Stream,
    pub frame_index: u64,
    /// `planes[j]` belongs to `JointId::ALL[j]`; each is row-major `width × height`.
    pub planes: Vec<Vec<f32>>,
}

impl ConfidenceMapStack {
    pub fn zeros(width: usize, height: usize, stream: Stream, frame_index: u64) -> Self {
        ConfidenceMapStack {
            width,
            height,
            stream,
            frame_index,
            planes: vec![vec![0.0; width * height]; NUM_JOINTS],
        }
    }

    pub fn plane(&self, joint: JointId) -> &[f32] {
        &self.planes[joint.index()]
    }

    pub fn plane_mut(&mut self, joint: JointId) -> &mut [f32] {
        &mut self.planes[joint.index()]
    }

    #[inline]
    pub fn get(&self, joint: JointId, x: usize, y: usize) -> f32 {
        self.planes[joint.index()][y * self.width + x]
    }

    fn check_shape(&self) -> Result<()> {
        if self.planes.len() != NUM_JOINTS {
            return Err(Error::Format(format!(
                "stack has {} planes, expected {NUM_JOINTS}",
                self.planes.len()
            )));
        }
        let n = self.width * self.height;
        if let Some(bad) = self.planes.iter().position(|p| p.len() != n) {
            return Err(Error::Format(format!(
                "plane {bad} has {} values, expected {n}",
                self.planes[bad].len()
            )));
        }
        Ok(())
    }

    /// Serializes to CMAP bytes, clamping scores to `[0, 1]` (NaN becomes 0).
    pub fn to_bytes(&self) -> Result<Vec<u8>> {
        self.check_shape()?;
        let n = self.width * self.height;
        let mut out = Vec::with_capacity(CMAP_HEADER_LEN + NUM_JOINTS * n * 4);
        out.extend_from_slice(CMAP_MAGIC);
        out.push(CMAP_VERSION);
        out.push(self.stream.code());
        out.extend_from_slice(&0u16.to_le_bytes());
        out.extend_from_slice(&(self.width as u32).to_le_bytes());
        out.extend_from_slice(&(self.height as u32).to_le_bytes());
        out.extend_from_slice(&(NUM_JOINTS as u32).to_le_bytes());
        out.extend_from_slice(&self.frame_index.to_le_bytes());
        for plane in &self.planes {
            for &v in plane {
                out.extend_from_slice(&clamp_score(v).to_le_bytes());
            }
        }
        Ok(out)
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < CMAP_HEADER_LEN {
            return Err(Error::Truncated {
                offset: bytes.len(),
                expected: CMAP_HEADER_LEN,
            });
        }
        if &bytes[0..4] != CMAP_MAGIC {
            return Err(Error::Format(format!(
                "bad magic {:?}",
                String::from_utf8_lossy(&bytes[0..4])
            )));
        }
        if bytes[4] != CMAP_VERSION {
            return Err(Error::Format(format!("unsupported version {}", bytes[4])));
        }
        let stream =
            Stream::from_code(bytes[5]).ok_or_else(|| Error::Format(format!("unknown stream code {}", bytes[5])))?;
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let width = u32_at(8);
        let height = u32_at(12);
        let joints = u32_at(16);
        let frame_index = u64::from_le_bytes(bytes[20..28].try_into().unwrap());
        if joints as usize != NUM_JOINTS {
            return Err(Error::Format(format!("joint count {joints}, expected {NUM_JOINTS}")));
        }
        let pixels = width as u64 * height as u64;
        if pixels > MAX_PIXELS {
            return Err(Error::Format(format!(
                "dimensions {width}x{height} exceed the pixel limit"
            )));
        }
        let n = pixels as usize;
        let expected = CMAP_HEADER_LEN + NUM_JOINTS * n * 4;
        if bytes.len() < expected {
            return Err(Error::Truncated {
                offset: bytes.len(),
                expected,
            });
        }
        if bytes.len() > expected {
            return Err(Error::Format(format!(
                "{} trailing bytes after the last plane",
                bytes.len() - expected
            )));
        }
        let mut planes = Vec::with_capacity(NUM_JOINTS);
        for j in 0..NUM_JOINTS {
            let start = CMAP_HEADER_LEN + j * n * 4;
            let plane: Vec<f32> = bytes[start..start + n * 4]
                .chunks_exact(4)
                .map(|c| f32::from_le_bytes(c.try_into().unwrap()))
                .collect();
            planes.push(plane);
        }
        Ok(ConfidenceMapStack {
            width: width as usize,
            height: height as usize,
            stream,
            frame_index,
            planes,
        })
    }
}

#[inline]
fn clamp_score(v: f32) -> f32 {
    if v.is_nan() {
        0.0
    } else {
        v.clamp(0.0, 1.0)
    }
}

pub fn read_cmap(path: impl AsRef<Path>) -> Result<ConfidenceMapStack> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    ConfidenceMapStack::from_bytes(&bytes)
}

pub fn write_cmap(stack: &ConfidenceMapStack, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let bytes = stack.to_bytes()?;
    let file = File::create(path).map_err(|e| Error::io(path, e))?;
    let mut w = BufWriter::new(file);
    w.write_all(&bytes).map_err(|e| Error::io(path, e))?;
    w.flush().map_err(|e| Error::io(path, e))
}

/// Single-channel intensity image with values in `[0, 1]`.
#[derive(Debug, Clone, PartialEq)]
pub struct GrayFrame {
    pub width: usize,
    pub height: usize,
    pub data: Vec<f32>,
}

impl GrayFrame {
    pub fn new(width: usize, height: usize) -> Self {
        GrayFrame {
            width,
            height,
            data: vec![0.0; width * height],
        }
    }

    #[inline]
    pub fn get(&self, x: usize, y: usize) -> f32 {
        self.data[y * self.width + x]
    }

    #[inline]
    pub fn set(&mut self, x: usize, y: usize, v: f32) {
        self.data[y * self.width + x] = v;
    }
}

/// Reads a binary (`P5`) or ASCII (`P2`) PGM, scaling intensities to `[0, 1]`.
pub fn read_pgm(path: impl AsRef<Path>) -> Result<GrayFrame> {
    let path = path.as_ref();
    let bytes = std::fs::read(path).map_err(|e| Error::io(path, e))?;
    parse_pgm(&bytes)
}

pub fn parse_pgm(bytes: &[u8]) -> Result<GrayFrame> {
    let mut pos = 0usize;
    let mut token = |bytes: &[u8]| -> Result<String> {
        loop {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            break;
        }
        let start = pos;
        while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
            pos += 1;
        }
        if start == pos {
            return Err(Error::Pgm("unexpected end of header".into()));
        }
        Ok(String::from_utf8_lossy(&bytes[start..pos]).into_owned())
    };
    let magic = token(bytes)?;
    let num = |s: String| -> Result<usize> { s.parse().map_err(|_| Error::Pgm(format!("bad number {s:?}"))) };
    let width = num(token(bytes)?)?;
    let height = num(token(bytes)?)?;
    let maxval = num(token(bytes)?)?;
    if maxval == 0 || maxval > 65535 {
        return Err(Error::Pgm(format!("bad maxval {maxval}")));
    }
    let n = width * height;
    let scale = 1.0 / maxval as f32;
    let data = match magic.as_str() {
        "P5" => {
            // exactly one whitespace byte separates the header from the raster
            let start = pos + 1;
            let bpp = if maxval < 256 { 1 } else { 2 };
            let raster = bytes
                .get(start..start + n * bpp)
                .ok_or_else(|| Error::Pgm("truncated raster".into()))?;
            if bpp == 1 {
                raster.iter().map(|&b| b as f32 * scale).collect()
            } else {
                raster
                    .chunks_exact(2)
                    .map(|c| u16::from_be_bytes([c[0], c[1]]) as f32 * scale)
                    .collect()
            }
        }
        "P2" => {
            let mut v = Vec::with_capacity(n);
            for _ in 0..n {
                v.push(num(token(bytes)?)? as f32 * scale);
            }
            v
        }
        other => return Err(Error::Pgm(format!("unsupported magic {other:?}"))),
    };
    Ok(GrayFrame { width, height, data })
}

/// Writes an 8-bit binary PGM.
pub fn write_pgm(frame: &GrayFrame, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    let mut bytes = format!("P5\n{} {}\n255\n", frame.width, frame.height).into_bytes();
    bytes.extend(frame.data.iter().map(|&v| (clamp_score(v) * 255.0).round() as u8));
    std::fs::write(path, bytes).map_err(|e| Error::io(path, e))
}

/// Per-pixel `clamp(|cur − prev| + |cur − next|, 0, 1)`.
pub fn frame_difference(prev: &GrayFrame, cur: &GrayFrame, next: &GrayFrame) -> Result<GrayFrame> {
    for (name, f) in [("previous", prev), ("next", next)] {
        if (f.width, f.height) != (cur.width, cur.height) {
            return Err(Error::DimensionMismatch(format!(
                "{name} frame is {}x{}, current is {}x{}",
                f.width, f.height, cur.width, cur.height
            )));
        }
    }
    let data = cur
        .data
        .iter()
        .zip(prev.data.iter().zip(&next.data))
        .map(|(&c, (&p, &n))| ((c - p).abs() + (c - n).abs()).clamp(0.0, 1.0))
        .collect();
    Ok(GrayFrame {
        width: cur.width,
        height: cur.height,
        data,
    })
}

/// Color and frame-difference maps combined for extraction.
///
/// Upper-body planes of `stack` hold the per-pixel maximum of both streams;
/// leg-hoof planes hold the color planes. The diff leg planes are kept aside
/// and consulted only when a color leg plane yields no candidate.
#[derive(Debug, Clone, PartialEq)]
pub struct MergedMaps {
    pub stack: ConfidenceMapStack,
    /// Indexed like `JointId::LEG_HOOF`.
    pub leg_fallback: Vec<Vec<f32>>,
}

pub fn merge_maps(color: &ConfidenceMapStack, diff: &ConfidenceMapStack) -> Result<MergedMaps> {
    color.check_shape()?;
    diff.check_shape()?;
    if (color.width, color.height) != (diff.width, diff.height) {
        return Err(Error::DimensionMismatch(format!(
            "color stack is {}x{}, diff stack is {}x{}",
            color.width, color.height, diff.width, diff.height
        )));
    }
    if color.frame_index != diff.frame_index {
        return Err(Error::DimensionMismatch(format!(
            "color frame {} does not match diff frame {}",
            color.frame_index, diff.frame_index
        )));
    }
    let mut stack = color.clone();
    for j in JointId::UPPER {
        for (m, &d) in stack.planes[j.index()].iter_mut().zip(diff.plane(j)) {
            *m = m.max(d);
        }
    }
    let leg_fallback = JointId::LEG_HOOF.iter().map(|&j| diff.plane(j).to_vec()).collect();
    Ok(MergedMaps { stack, leg_fallback })
}

/// Local maxima of one plane as `(x, y, score)`, sorted by `(y, x)`.
///
/// A pixel is kept when its score exceeds `threshold`, no pixel within
/// Chebyshev distance `radius` scores higher, every equal-scoring neighbor
/// comes later in `(y, x)` order, and at least one neighbor scores lower.
pub fn nms_plane(
    plane: &[f32],
    width: usize,
    height: usize,
    radius: usize,
    threshold: f64,
) -> Vec<(usize, usize, f32)> {
    let mut out = Vec::new();
    for y in 0..height {
        let row = &plane[y * width..(y + 1) * width];
        for (x, &s) in row.iter().enumerate() {
            if (s as f64) <= threshold {
                continue;
            }
            if is_local_peak(plane, width, height, radius, x, y, s) {
                out.push((x, y, s));
            }
        }
    }
    out
}

fn is_local_peak(plane: &[f32], width: usize, height: usize, radius: usize, x: usize, y: usize, s: f32) -> bool {
    let y0 = y.saturating_sub(radius);
    let y1 = (y + radius).min(height - 1);
    let x0 = x.saturating_sub(radius);
    let x1 = (x + radius).min(width - 1);
    let mut has_lower = false;
    for qy in y0..=y1 {
        let row = &plane[qy * width..(qy + 1) * width];
        for (qx, &q) in row.iter().enumerate().take(x1 + 1).skip(x0) {
            if q > s {
                return false;
            }
            if q == s {
                if (qy, qx) < (y, x) {
                    return false;
                }
            } else {
                has_lower = true;
            }
        }
    }
    has_lower
}

fn plane_candidates(
    plane: &[f32],
    width: usize,
    height: usize,
    joint: JointId,
    source: MapSource,
    radius: usize,
    threshold: f64,
) -> Vec<KeypointCandidate> {
    nms_plane(plane, width, height, radius, threshold)
        .into_iter()
        .map(|(x, y, s)| KeypointCandidate {
            joint,
            position: Point::new(x as f64, y as f64),
            confidence: s as f64,
            source,
        })
        .collect()
}

fn stack_source(stream: Stream) -> MapSource {
    match stream {
        Stream::Color => MapSource::Color,
        Stream::Diff => MapSource::Diff,
    }
}

/// Peak extraction over all 17 planes, sorted by `(joint, y, x)`.
pub fn nms_extract(stack: &ConfidenceMapStack, radius: usize, threshold: f64) -> Vec<KeypointCandidate> {
    let source = stack_source(stack.stream);
    JointId::ALL
        .iter()
        .flat_map(|&j| plane_candidates(stack.plane(j), stack.width, stack.height, j, source, radius, threshold))
        .collect()
}

/// Peak extraction over merged maps, with the per-plane leg fallback to the
/// frame-difference stream.
pub fn extract_candidates(merged: &MergedMaps, radius: usize, threshold: f64) -> Vec<KeypointCandidate> {
    let s = &merged.stack;
    let mut out = Vec::new();
    for j in JointId::UPPER {
        out.extend(plane_candidates(
            s.plane(j),
            s.width,
            s.height,
            j,
            MapSource::Merged,
            radius,
            threshold,
        ));
    }
    for (k, &j) in JointId::LEG_HOOF.iter().enumerate() {
        let color = plane_candidates(s.plane(j), s.width, s.height, j, MapSource::Color, radius, threshold);
        if color.is_empty() {
            out.extend(plane_candidates(
                &merged.leg_fallback[k],
                s.width,
                s.height,
                j,
                MapSource::Diff,
                radius,
                threshold,
            ));
        } else {
            out.extend(color);
        }
    }
    out
}

/// Index and value of the first maximum of a plane.
pub fn plane_argmax(plane: &[f32]) -> Option<(usize, f32)> {
    let mut best: Option<(usize, f32)> = None;
    for (i, &v) in plane.iter().enumerate() {
        if best.is_none_or(|(_, b)| v > b) {
            best = Some((i, v));
        }
    }
    best
}

/// Selection rule of single-animal keypoint toolkits: the global maximum of
/// each plane, or nothing when the plane never exceeds `threshold`. Ties go
/// to the smallest `(y, x)`.
pub fn argmax_extract(stack: &ConfidenceMapStack, threshold: f64) -> Vec<KeypointCandidate> {
    let source = stack_source(stack.stream);
    let mut out = Vec::new();
    for j in JointId::ALL {
        if let Some((i, v)) = plane_argmax(stack.plane(j)).filter(|&(_, v)| v as f64 > threshold) {
            out.push(KeypointCandidate {
                joint: j,
                position: Point::new((i % stack.width) as f64, (i / stack.width) as f64),
                confidence: v as f64,
                source,
            });
        }
    }
    out
}
