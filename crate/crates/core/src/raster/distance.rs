//! Exact Euclidean distance transform (separable lower-envelope method).

use super::{BinaryMask, ScalarMap};

/// Squared Euclidean distance from every pixel to the nearest `seeds` pixel.
///
/// With `border_is_seed` the one-pixel ring surrounding the raster counts as
/// seeds. Pixels with no reachable seed get `f64::INFINITY`.
pub fn squared_distance_to(seeds: &BinaryMask, border_is_seed: bool) -> Vec<f64> {
    let (w, h) = seeds.dims();
    let pad = usize::from(border_is_seed);
    let (pw, ph) = (w + 2 * pad, h + 2 * pad);

    let mut grid = vec![f64::INFINITY; pw * ph];
    for y in 0..ph {
        for x in 0..pw {
            let seed = if border_is_seed && (x == 0 || y == 0 || x == pw - 1 || y == ph - 1) {
                true
            } else {
                seeds.get(x - pad, y - pad)
            };
            if seed {
                grid[y * pw + x] = 0.0;
            }
        }
    }

    let mut scratch = Scratch::new(pw.max(ph));
    let mut line = vec![0.0; pw.max(ph)];
    for x in 0..pw {
        for y in 0..ph {
            line[y] = grid[y * pw + x];
        }
        scratch.transform(&line[..ph]);
        for y in 0..ph {
            grid[y * pw + x] = scratch.out[y];
        }
    }
    for y in 0..ph {
        scratch.transform(&grid[y * pw..(y + 1) * pw]);
        grid[y * pw..(y + 1) * pw].copy_from_slice(&scratch.out[..pw]);
    }

    if pad == 0 {
        return grid;
    }
    let mut out = Vec::with_capacity(w * h);
    for y in 0..h {
        out.extend_from_slice(&grid[(y + 1) * pw + 1..(y + 1) * pw + 1 + w]);
    }
    out
}

/// Distance from each pixel to the nearest false pixel, where everything
/// outside the raster counts as false. Zero on false pixels.
pub fn distance_transform(mask: &BinaryMask) -> ScalarMap {
    let sq = squared_distance_to(&mask.not(), true);
    let (w, h) = mask.dims();
    ScalarMap { width: w, height: h, values: sq.into_iter().map(|d| d.sqrt() as f32).collect() }
}

struct Scratch {
    out: Vec<f64>,
    vertices: Vec<usize>,
    bounds: Vec<f64>,
}

impl Scratch {
    fn new(n: usize) -> Self {
        Self { out: vec![0.0; n], vertices: vec![0; n], bounds: vec![0.0; n + 1] }
    }

    /// 1D squared distance transform of the sampled function `f`.
    fn transform(&mut self, f: &[f64]) {
        let n = f.len();
        let finite: Vec<usize> = (0..n).filter(|&i| f[i].is_finite()).collect();
        if finite.is_empty() {
            self.out[..n].fill(f64::INFINITY);
            return;
        }
        let v = &mut self.vertices;
        let z = &mut self.bounds;
        let mut k = 0usize;
        v[0] = finite[0];
        z[0] = f64::NEG_INFINITY;
        z[1] = f64::INFINITY;
        for &q in &finite[1..] {
            let mut s = intersection(f, q, v[k]);
            // z[0] is -inf, so k never underflows
            while s <= z[k] {
                k -= 1;
                s = intersection(f, q, v[k]);
            }
            k += 1;
            v[k] = q;
            z[k] = s;
            z[k + 1] = f64::INFINITY;
        }
        let mut j = 0usize;
        for q in 0..n {
            while z[j + 1] < q as f64 {
                j += 1;
            }
            let d = q as f64 - v[j] as f64;
            self.out[q] = d * d + f[v[j]];
        }
    }
}

fn intersection(f: &[f64], q: usize, p: usize) -> f64 {
    ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2.0 * (q as f64 - p as f64))
}
