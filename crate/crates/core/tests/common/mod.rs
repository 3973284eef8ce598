//! Slow reference implementations used as test oracles.
#![allow(dead_code)]

use std::collections::HashMap;

use cowskel::geometry::Point;
use cowskel::skeleton::{CowSkeleton, Frame};
use cowskel::JointId;

/// Exhaustive neighbourhood scan: a pixel survives when it beats the
/// threshold, nothing in its window is higher, every equal pixel in the
/// window is later in (y, x) order, and something in the window is lower.
pub fn nms_oracle(plane: &[f32], w: usize, h: usize, r: usize, thr: f64) -> Vec<(usize, usize, f32)> {
    let r = r as i64;
    let mut out = Vec::new();
    for y in 0..h as i64 {
        for x in 0..w as i64 {
            let v = plane[(y * w as i64 + x) as usize];
            if (v as f64) <= thr {
                continue;
            }
            let mut keep = true;
            let mut lower = false;
            for dy in -r..=r {
                for dx in -r..=r {
                    let (qx, qy) = (x + dx, y + dy);
                    if (dx, dy) == (0, 0) || qx < 0 || qy < 0 || qx >= w as i64 || qy >= h as i64 {
                        continue;
                    }
                    let q = plane[(qy * w as i64 + qx) as usize];
                    if q > v || (q == v && (qy, qx) < (y, x)) {
                        keep = false;
                    }
                    if q < v {
                        lower = true;
                    }
                }
            }
            if keep && lower {
                out.push((x as usize, y as usize, v));
            }
        }
    }
    out
}

/// Discrete Fréchet distance by memoized recursion.
pub fn frechet_oracle(p: &[Point], q: &[Point]) -> f64 {
    fn c(i: usize, j: usize, p: &[Point], q: &[Point], memo: &mut HashMap<(usize, usize), f64>) -> f64 {
        if let Some(&v) = memo.get(&(i, j)) {
            return v;
        }
        let d = (p[i].x - q[j].x).hypot(p[i].y - q[j].y);
        let v = if i == 0 && j == 0 {
            d
        } else if i == 0 {
            c(0, j - 1, p, q, memo).max(d)
        } else if j == 0 {
            c(i - 1, 0, p, q, memo).max(d)
        } else {
            let a = c(i - 1, j, p, q, memo);
            let b = c(i - 1, j - 1, p, q, memo);
            let e = c(i, j - 1, p, q, memo);
            a.min(b).min(e).max(d)
        };
        memo.insert((i, j), v);
        v
    }
    c(p.len() - 1, q.len() - 1, p, q, &mut HashMap::new())
}

/// Even-odd test of the point (px, py) with crossings counted strictly to
/// the right, rows half-open at vertices.
pub fn inside(poly: &[Point], px: f64, py: f64) -> bool {
    let n = poly.len();
    let mut odd = false;
    for i in 0..n {
        let (a, b) = (poly[i], poly[(i + 1) % n]);
        if (a.y <= py) != (b.y <= py) {
            let xc = a.x + (py - a.y) / (b.y - a.y) * (b.x - a.x);
            if xc > px {
                odd = !odd;
            }
        }
    }
    odd
}

/// Pixel-by-pixel body mask of a skeleton; empty when the contour is incomplete.
pub fn body_mask(cow: &CowSkeleton, w: usize, h: usize) -> Vec<bool> {
    let pts: Option<Vec<Point>> = JointId::CONTOUR.iter().map(|&j| cow.known_position(j)).collect();
    let mut m = vec![false; w * h];
    if let Some(pts) = pts {
        for y in 0..h {
            for x in 0..w {
                m[y * w + x] = inside(&pts, x as f64, y as f64);
            }
        }
    }
    m
}

pub fn dice(a: &[bool], b: &[bool]) -> f64 {
    let inter = a.iter().zip(b).filter(|(x, y)| **x && **y).count();
    let n = a.iter().filter(|x| **x).count() + b.iter().filter(|x| **x).count();
    if n == 0 {
        0.0
    } else {
        2.0 * inter as f64 / n as f64
    }
}

/// Best injective pairing of rows to columns by total score, trying all.
/// Returns the pairs with positive score.
pub fn best_pairing(score: &[Vec<f64>]) -> Vec<(usize, usize, f64)> {
    fn go(
        i: usize,
        score: &[Vec<f64>],
        used: &mut Vec<bool>,
        cur: &mut Vec<(usize, usize, f64)>,
        best: &mut (f64, Vec<(usize, usize, f64)>),
    ) {
        if i == score.len() {
            let total: f64 = cur.iter().map(|p| p.2).sum();
            if total > best.0 {
                *best = (total, cur.clone());
            }
            return;
        }
        go(i + 1, score, used, cur, best);
        for j in 0..used.len() {
            if !used[j] && score[i][j] > 0.0 {
                used[j] = true;
                cur.push((i, j, score[i][j]));
                go(i + 1, score, used, cur, best);
                cur.pop();
                used[j] = false;
            }
        }
    }
    let cols = score.first().map_or(0, Vec::len);
    let mut best = (0.0, Vec::new());
    go(0, score, &mut vec![false; cols], &mut Vec::new(), &mut best);
    best.1
}

/// Body F1 from pixel masks and exhaustive pairing.
pub fn body_f1_oracle(det: &[Frame], truth: &[Frame], w: usize, h: usize) -> f64 {
    let (mut nd, mut nt, mut nm, mut sum) = (0usize, 0usize, 0usize, 0.0);
    for tf in truth {
        let dcows: &[CowSkeleton] = det.iter().find(|f| f.index == tf.index).map_or(&[], |f| &f.cows);
        let dm: Vec<Vec<bool>> = dcows.iter().map(|c| body_mask(c, w, h)).collect();
        let tm: Vec<Vec<bool>> = tf.cows.iter().map(|c| body_mask(c, w, h)).collect();
        let score: Vec<Vec<f64>> = dm.iter().map(|a| tm.iter().map(|b| dice(a, b)).collect()).collect();
        let pairs = best_pairing(&score);
        nd += dcows.len();
        nt += tf.cows.len();
        nm += pairs.len();
        sum += pairs.iter().map(|p| p.2).sum::<f64>();
    }
    if nm == 0 {
        return if nd == 0 && nt == 0 { 1.0 } else { 0.0 };
    }
    let p = nm as f64 / nd as f64;
    let r = nm as f64 / nt as f64;
    (sum / nm as f64) * (2.0 * p * r / (p + r))
}

/// Leg/hoof matches between two already paired skeletons, by brute force.
pub fn leghoof_matches(det: &CowSkeleton, truth: &CowSkeleton, thr: f64) -> usize {
    let mut n = 0;
    for d in JointId::ALL.iter().filter(|j| !j.is_upper()) {
        for t in JointId::ALL.iter().filter(|j| !j.is_upper()) {
            if d != t {
                continue;
            }
            if let (Some(a), Some(b)) = (det.position(*d), truth.position(*t)) {
                if (a.x - b.x).hypot(a.y - b.y) < thr {
                    n += 1;
                }
            }
        }
    }
    n
}

/// Intersection of a polygon with a convex clip polygon of either
/// orientation, by Sutherland-Hodgman.
pub fn clip_convex(subject: &[Point], clip: &[Point]) -> Vec<Point> {
    let orient = if signed(clip) > 0.0 { 1.0 } else { -1.0 };
    let mut pts = subject.to_vec();
    let m = clip.len();
    for k in 0..m {
        let (c0, c1) = (clip[k], clip[(k + 1) % m]);
        let side = |p: Point| orient * ((c1.x - c0.x) * (p.y - c0.y) - (c1.y - c0.y) * (p.x - c0.x));
        let n = pts.len();
        let mut next = Vec::new();
        for i in 0..n {
            let (a, b) = (pts[i], pts[(i + 1) % n]);
            let (sa, sb) = (side(a), side(b));
            if sb >= 0.0 {
                if sa < 0.0 {
                    next.push(cross_at(a, b, sa, sb));
                }
                next.push(b);
            } else if sa >= 0.0 {
                next.push(cross_at(a, b, sa, sb));
            }
        }
        pts = next;
        if pts.is_empty() {
            break;
        }
    }
    pts
}

fn cross_at(a: Point, b: Point, sa: f64, sb: f64) -> Point {
    let t = sa / (sa - sb);
    Point::new(a.x + t * (b.x - a.x), a.y + t * (b.y - a.y))
}

fn signed(pts: &[Point]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| pts[i].x * pts[(i + 1) % n].y - pts[(i + 1) % n].x * pts[i].y)
        .sum::<f64>()
        / 2.0
}

pub fn rect(x0: f64, y0: f64, x1: f64, y1: f64) -> Vec<Point> {
    vec![
        Point::new(x0, y0),
        Point::new(x1, y0),
        Point::new(x1, y1),
        Point::new(x0, y1),
    ]
}

pub fn shoelace(pts: &[Point]) -> f64 {
    let n = pts.len();
    (0..n)
        .map(|i| pts[i].x * pts[(i + 1) % n].y - pts[(i + 1) % n].x * pts[i].y)
        .sum::<f64>()
        .abs()
        / 2.0
}

/// Upper body at the default template around `center`, legs hanging
/// straight down from their anchors.
pub fn template_cow(center: Point, frame: u64) -> CowSkeleton {
    use cowskel::joints::Limb;
    use cowskel::skeleton::JointObs;
    let t = cowskel::synth::CowTemplate::default();
    let mut cow = CowSkeleton::empty(frame);
    for j in JointId::UPPER {
        cow.set(j, JointObs::detected(center + t.offset(j), 1.0));
    }
    for (k, limb) in Limb::ALL.iter().enumerate() {
        let a = cow.position(limb.end.anchor()).unwrap();
        let dx = if k % 2 == 0 { 12.0 } else { -12.0 };
        cow.set(limb.leg(), JointObs::detected(a + Point::new(dx, 110.0), 0.9));
        cow.set(limb.hoof(), JointObs::detected(a + Point::new(dx, 220.0), 0.9));
    }
    cow.recompute_center();
    cow
}

pub fn track_of(skeletons: Vec<CowSkeleton>) -> cowskel::temporal::Track {
    cowskel::temporal::Track {
        id: 0,
        skeletons,
        status: cowskel::temporal::TrackStatus::Closed,
    }
}

/// Median of every odd window, shrinking at the ends, by counting ranks.
pub fn median_oracle(v: &[f64], window: usize) -> Vec<f64> {
    let n = v.len();
    (0..n)
        .map(|i| {
            let h = (window / 2).min(i).min(n - 1 - i);
            let w = &v[i - h..=i + h];
            *w.iter()
                .find(|&&c| {
                    let below = w.iter().filter(|&&o| o < c).count();
                    let equal = w.iter().filter(|&&o| o == c).count();
                    below <= h && h < below + equal
                })
                .unwrap()
        })
        .collect()
}
