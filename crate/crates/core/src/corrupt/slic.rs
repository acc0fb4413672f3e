//! SLIC superpixels: local k-means in CIELAB colour and image position,
//! followed by connectivity enforcement.

use serde::{Deserialize, Serialize};

use crate::error::CorruptError;
use crate::raster::{ImagePlanes, LabelMap};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SlicConfig {
    /// Requested number of superpixels.
    pub k: usize,
    pub compactness: f64,
    pub iterations: usize,
}

impl SlicConfig {
    pub fn new(k: usize) -> Self {
        Self { k, compactness: 10.0, iterations: 10 }
    }
}

fn srgb_to_linear(c: f64) -> f64 {
    if c <= 0.04045 {
        c / 12.92
    } else {
        ((c + 0.055) / 1.055).powf(2.4)
    }
}

fn lab_f(t: f64) -> f64 {
    const D: f64 = 6.0 / 29.0;
    if t > D * D * D {
        t.cbrt()
    } else {
        t / (3.0 * D * D) + 4.0 / 29.0
    }
}

/// sRGB in `[0, 1]` to CIELAB under D65.
pub fn rgb_to_lab(r: f64, g: f64, b: f64) -> [f64; 3] {
    let (r, g, b) = (srgb_to_linear(r), srgb_to_linear(g), srgb_to_linear(b));
    let x = 0.4124564 * r + 0.3575761 * g + 0.1804375 * b;
    let y = 0.2126729 * r + 0.7151522 * g + 0.0721750 * b;
    let z = 0.0193339 * r + 0.1191920 * g + 0.9503041 * b;
    let (fx, fy, fz) = (lab_f(x / 0.95047), lab_f(y), lab_f(z / 1.08883));
    [116.0 * fy - 16.0, 500.0 * (fx - fy), 200.0 * (fy - fz)]
}

#[derive(Clone, Copy, Debug)]
struct Center {
    lab: [f64; 3],
    x: f64,
    y: f64,
}

/// Segments `image` into roughly `cfg.k` superpixels labelled `1..=K'`.
///
/// Distance is `d_lab + (m / S) * d_xy` with `S = sqrt(N / k)`. Centres start
/// on a grid and move to the lowest-gradient pixel of their 3x3 neighbourhood.
/// Afterwards every 4-connected piece smaller than a quarter of the nominal
/// superpixel area is merged into its largest neighbour, and labels are
/// renumbered in row-major order of first appearance.
pub fn slic(image: &ImagePlanes, cfg: &SlicConfig) -> Result<LabelMap, CorruptError> {
    let (w, h) = image.dims();
    let n = w * h;
    if cfg.k < 2 || cfg.iterations == 0 {
        return Err(CorruptError::Config(format!("slic needs k >= 2 and iterations >= 1, got {cfg:?}")));
    }
    if n < cfg.k {
        return Err(CorruptError::ImageTooSmall { pixels: n, k: cfg.k });
    }
    let [r, g, b] = &image.channels;
    let lab: Vec<[f64; 3]> = (0..n)
        .map(|i| rgb_to_lab(r.as_slice()[i] as f64, g.as_slice()[i] as f64, b.as_slice()[i] as f64))
        .collect();

    let s = (n as f64 / cfg.k as f64).sqrt();
    let nx = ((cfg.k as f64 * w as f64 / h as f64).sqrt().ceil() as usize).clamp(1, w);
    let ny = ((cfg.k as f64 / nx as f64).round() as usize).clamp(1, h);
    let mut centers = initial_centers(&lab, w, h, nx, ny);

    let reach = s.max(w as f64 / nx as f64).max(h as f64 / ny as f64).ceil() as isize;
    let spatial = cfg.compactness / s;
    let mut labels = vec![u32::MAX; n];
    let mut best = vec![f64::INFINITY; n];
    for _ in 0..cfg.iterations {
        best.fill(f64::INFINITY);
        for (ci, c) in centers.iter().enumerate() {
            let (cx, cy) = (c.x.round() as isize, c.y.round() as isize);
            let (x0, x1) = ((cx - reach).max(0) as usize, ((cx + reach + 1).max(0) as usize).min(w));
            let (y0, y1) = ((cy - reach).max(0) as usize, ((cy + reach + 1).max(0) as usize).min(h));
            for y in y0..y1 {
                for x in x0..x1 {
                    let i = y * w + x;
                    let p = &lab[i];
                    let dc = ((p[0] - c.lab[0]).powi(2) + (p[1] - c.lab[1]).powi(2) + (p[2] - c.lab[2]).powi(2)).sqrt();
                    let ds = ((x as f64 - c.x).powi(2) + (y as f64 - c.y).powi(2)).sqrt();
                    let d = dc + spatial * ds;
                    if d < best[i] {
                        best[i] = d;
                        labels[i] = ci as u32;
                    }
                }
            }
        }
        let mut acc = vec![[0.0f64; 6]; centers.len()];
        for (i, &l) in labels.iter().enumerate() {
            if l == u32::MAX {
                continue;
            }
            let a = &mut acc[l as usize];
            a[0] += lab[i][0];
            a[1] += lab[i][1];
            a[2] += lab[i][2];
            a[3] += (i % w) as f64;
            a[4] += (i / w) as f64;
            a[5] += 1.0;
        }
        for (c, a) in centers.iter_mut().zip(&acc) {
            if a[5] > 0.0 {
                *c = Center { lab: [a[0] / a[5], a[1] / a[5], a[2] / a[5]], x: a[3] / a[5], y: a[4] / a[5] };
            }
        }
    }
    // Pixels no window ever reached join the nearest centre in the joint space.
    for i in 0..n {
        if labels[i] == u32::MAX {
            let (x, y) = ((i % w) as f64, (i / w) as f64);
            let nearest = centers
                .iter()
                .enumerate()
                .map(|(ci, c)| {
                    let p = &lab[i];
                    let dc = ((p[0] - c.lab[0]).powi(2) + (p[1] - c.lab[1]).powi(2) + (p[2] - c.lab[2]).powi(2)).sqrt();
                    (dc + spatial * ((x - c.x).powi(2) + (y - c.y).powi(2)).sqrt(), ci)
                })
                .min_by(|a, b| a.0.total_cmp(&b.0))
                .map(|(_, ci)| ci)
                .unwrap_or(0);
            labels[i] = nearest as u32;
        }
    }
    let min_size = ((n as f64 / cfg.k as f64) / 4.0).floor() as usize;
    let merged = enforce_connectivity(&labels, w, h, min_size);
    Ok(LabelMap::from_vec(w, h, merged)?)
}

fn initial_centers(lab: &[[f64; 3]], w: usize, h: usize, nx: usize, ny: usize) -> Vec<Center> {
    let grad = |x: usize, y: usize| -> f64 {
        let at = |x: usize, y: usize| lab[y * w + x];
        let (xl, xr) = (x.saturating_sub(1), (x + 1).min(w - 1));
        let (yu, yd) = (y.saturating_sub(1), (y + 1).min(h - 1));
        let d = |a: [f64; 3], b: [f64; 3]| (0..3).map(|k| (a[k] - b[k]).powi(2)).sum::<f64>();
        d(at(xr, y), at(xl, y)) + d(at(x, yd), at(x, yu))
    };
    let mut centers = Vec::with_capacity(nx * ny);
    for j in 0..ny {
        for i in 0..nx {
            let gx = (((i as f64 + 0.5) * w as f64 / nx as f64) as usize).min(w - 1);
            let gy = (((j as f64 + 0.5) * h as f64 / ny as f64) as usize).min(h - 1);
            let mut best = (grad(gx, gy), gx, gy);
            for y in gy.saturating_sub(1)..(gy + 2).min(h) {
                for x in gx.saturating_sub(1)..(gx + 2).min(w) {
                    let g = grad(x, y);
                    if g < best.0 {
                        best = (g, x, y);
                    }
                }
            }
            let (_, x, y) = best;
            centers.push(Center { lab: lab[y * w + x], x: x as f64, y: y as f64 });
        }
    }
    centers
}

/// 4-connected pieces of equal label, in row-major order of first pixel.
fn label_pieces(labels: &[u32], w: usize, h: usize) -> (Vec<usize>, Vec<Vec<usize>>) {
    let mut piece = vec![usize::MAX; labels.len()];
    let mut pixels: Vec<Vec<usize>> = Vec::new();
    let mut queue = std::collections::VecDeque::new();
    for start in 0..labels.len() {
        if piece[start] != usize::MAX {
            continue;
        }
        let id = pixels.len();
        let mut members = vec![start];
        piece[start] = id;
        queue.push_back(start);
        while let Some(i) = queue.pop_front() {
            let (x, y) = (i % w, i / w);
            let mut visit = |j: usize| {
                if piece[j] == usize::MAX && labels[j] == labels[i] {
                    piece[j] = id;
                    members.push(j);
                    queue.push_back(j);
                }
            };
            if x > 0 {
                visit(i - 1);
            }
            if x + 1 < w {
                visit(i + 1);
            }
            if y > 0 {
                visit(i - w);
            }
            if y + 1 < h {
                visit(i + w);
            }
        }
        pixels.push(members);
    }
    (piece, pixels)
}

fn enforce_connectivity(labels: &[u32], w: usize, h: usize, min_size: usize) -> Vec<u32> {
    let (piece, mut pixels) = label_pieces(labels, w, h);
    let count = pixels.len();
    let mut parent: Vec<usize> = (0..count).collect();
    fn find(parent: &mut [usize], mut a: usize) -> usize {
        while parent[a] != a {
            parent[a] = parent[parent[a]];
            a = parent[a];
        }
        a
    }
    for c in 0..count {
        let root = find(&mut parent, c);
        if pixels[root].len() >= min_size {
            continue;
        }
        let mut target: Option<(usize, usize)> = None;
        for &i in &pixels[root] {
            let (x, y) = (i % w, i / w);
            let neighbours = [
                (x > 0).then(|| i - 1),
                (x + 1 < w).then(|| i + 1),
                (y > 0).then(|| i - w),
                (y + 1 < h).then(|| i + w),
            ];
            for j in neighbours.into_iter().flatten() {
                let r = find(&mut parent, piece[j]);
                if r == root {
                    continue;
                }
                let size = pixels[r].len();
                if target.is_none_or(|(ts, tr)| size > ts || (size == ts && r < tr)) {
                    target = Some((size, r));
                }
            }
        }
        if let Some((_, t)) = target {
            parent[root] = t;
            let moved = std::mem::take(&mut pixels[root]);
            pixels[t].extend(moved);
        }
    }
    let mut relabel = vec![0u32; count];
    let mut next = 0u32;
    let mut out = vec![0u32; labels.len()];
    for i in 0..labels.len() {
        let r = find(&mut parent, piece[i]);
        if relabel[r] == 0 {
            next += 1;
            relabel[r] = next;
        }
        out[i] = relabel[r];
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::raster::ScalarMap;

    fn planes(w: usize, h: usize, f: impl Fn(usize, usize) -> [f32; 3]) -> ImagePlanes {
        let c = |k: usize| ScalarMap::from_fn(w, h, |x, y| f(x, y)[k]);
        ImagePlanes { channels: [c(0), c(1), c(2)] }
    }

    #[test]
    fn lab_reference_points() {
        let white = rgb_to_lab(1.0, 1.0, 1.0);
        assert!((white[0] - 100.0).abs() < 1e-3 && white[1].abs() < 1e-2 && white[2].abs() < 1e-2);
        assert_eq!(rgb_to_lab(0.0, 0.0, 0.0), [0.0, 0.0, 0.0]);
        let red = rgb_to_lab(1.0, 0.0, 0.0);
        assert!((red[0] - 53.24).abs() < 0.05 && (red[1] - 80.09).abs() < 0.05 && (red[2] - 67.20).abs() < 0.05);
    }

    #[test]
    fn constant_image_gives_grid_cells() {
        let img = planes(60, 60, |_, _| [0.5, 0.5, 0.5]);
        let labels = slic(&img, &SlicConfig::new(9)).unwrap();
        assert_eq!(labels.count(), 9);
        // Cell centres of the 3x3 grid are labelled distinctly.
        let mut seen: Vec<u32> = [10, 30, 50].iter().flat_map(|&y| [10, 30, 50].map(|x| labels.get(x, y))).collect();
        seen.sort();
        seen.dedup();
        assert_eq!(seen.len(), 9);
    }

    #[test]
    fn two_colour_split() {
        let img = planes(10, 10, |x, _| if x < 5 { [1.0, 0.0, 0.0] } else { [0.0, 0.0, 1.0] });
        let labels = slic(&img, &SlicConfig { k: 2, compactness: 1.0, iterations: 10 }).unwrap();
        assert_eq!(labels.count(), 2);
        for y in 0..10 {
            for x in 0..10 {
                assert_eq!(labels.get(x, y), if x < 5 { 1 } else { 2 });
            }
        }
    }

    #[test]
    fn too_small_image() {
        let img = planes(5, 5, |_, _| [0.0; 3]);
        assert!(matches!(slic(&img, &SlicConfig::new(50)), Err(CorruptError::ImageTooSmall { pixels: 25, k: 50 })));
    }

    #[test]
    fn merging_small_pieces() {
        // A 1-pixel island of label 2 inside label 1 merges into it.
        let mut labels = vec![1u32; 25];
        labels[12] = 2;
        let out = enforce_connectivity(&labels, 5, 5, 2);
        assert!(out.iter().all(|&l| l == 1));
    }
}
