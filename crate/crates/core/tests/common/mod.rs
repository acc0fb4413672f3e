//! Brute-force reference implementations used as test oracles.

#![allow(dead_code)]

use cropseg::raster::Connectivity;
use cropseg::BinaryMask;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Depth-first flood fill, labels in row-major order of each component's
/// first pixel.
pub fn flood_fill_labels(mask: &BinaryMask, conn: Connectivity) -> Vec<u32> {
    let (w, h) = mask.dims();
    let mut labels = vec![0u32; w * h];
    let mut next = 0;
    for start in 0..w * h {
        if !mask.as_slice()[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        let mut stack = vec![start];
        labels[start] = next;
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for dy in -1isize..=1 {
                for dx in -1isize..=1 {
                    if (dx, dy) == (0, 0) || (conn == Connectivity::Four && dx != 0 && dy != 0) {
                        continue;
                    }
                    let (nx, ny) = (x + dx, y + dy);
                    if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                        continue;
                    }
                    let j = ny as usize * w + nx as usize;
                    if mask.as_slice()[j] && labels[j] == 0 {
                        labels[j] = next;
                        stack.push(j);
                    }
                }
            }
        }
    }
    labels
}

/// Distance from each true pixel to the nearest false pixel, where the ring
/// of pixels just outside the raster counts as false. O(N^2).
pub fn brute_distance(mask: &BinaryMask) -> Vec<f64> {
    let (w, h) = mask.dims();
    let (w, h) = (w as isize, h as isize);
    let mut background = Vec::new();
    for y in -1..=h {
        for x in -1..=w {
            let outside = x < 0 || y < 0 || x >= w || y >= h;
            if outside || !mask.get(x as usize, y as usize) {
                background.push((x, y));
            }
        }
    }
    let mut out = vec![0.0; (w * h) as usize];
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x as usize, y as usize) {
                continue;
            }
            let best = background
                .iter()
                .map(|&(bx, by)| ((bx - x).pow(2) + (by - y).pow(2)) as f64)
                .fold(f64::INFINITY, f64::min);
            out[(y * w + x) as usize] = best.sqrt();
        }
    }
    out
}

pub fn random_mask(rng: &mut ChaCha8Rng, w: usize, h: usize, density: f64) -> BinaryMask {
    BinaryMask::from_fn(w, h, |_, _| rng.random_bool(density))
}

/// A mask built from a few random discs and boxes; blobbier than iid noise.
pub fn random_blobs(rng: &mut ChaCha8Rng, w: usize, h: usize, n: usize) -> BinaryMask {
    let mut m = BinaryMask::new(w, h);
    for _ in 0..n {
        let cx = rng.random_range(0..w) as f64;
        let cy = rng.random_range(0..h) as f64;
        let r = rng.random_range(1.0..(w.min(h) as f64 / 4.0).max(1.5));
        let square = rng.random_bool(0.5);
        let add = rng.random_bool(0.75);
        for y in 0..h {
            for x in 0..w {
                let (dx, dy) = (x as f64 - cx, y as f64 - cy);
                let inside = if square { dx.abs() <= r && dy.abs() <= r } else { dx * dx + dy * dy <= r * r };
                if inside {
                    m.set(x, y, add);
                }
            }
        }
    }
    m
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}
