//! Connected-component labeling and component queries.

use super::{BBox, BinaryMask, LabelMap};

/// Pixel adjacency used for labeling.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Default)]
pub enum Connectivity {
    Four,
    #[default]
    Eight,
}

impl Connectivity {
    fn offsets(self) -> &'static [(isize, isize)] {
        const FOUR: [(isize, isize); 4] = [(0, -1), (-1, 0), (1, 0), (0, 1)];
        const EIGHT: [(isize, isize); 8] =
            [(-1, -1), (0, -1), (1, -1), (-1, 0), (1, 0), (-1, 1), (0, 1), (1, 1)];
        match self {
            Connectivity::Four => &FOUR,
            Connectivity::Eight => &EIGHT,
        }
    }
}

/// Labels the true pixels of `mask`. Labels are `1..=K`, assigned in the order
/// in which a row-major scan first touches each component.
pub fn connected_components(mask: &BinaryMask, connectivity: Connectivity) -> LabelMap {
    let (w, h) = mask.dims();
    let bits = mask.as_slice();
    let mut labels = vec![0u32; w * h];
    let mut next = 0u32;
    let mut stack = Vec::new();

    for start in 0..w * h {
        if !bits[start] || labels[start] != 0 {
            continue;
        }
        next += 1;
        labels[start] = next;
        stack.push(start);
        while let Some(i) = stack.pop() {
            let (x, y) = ((i % w) as isize, (i / w) as isize);
            for &(dx, dy) in connectivity.offsets() {
                let (nx, ny) = (x + dx, y + dy);
                if nx < 0 || ny < 0 || nx >= w as isize || ny >= h as isize {
                    continue;
                }
                let j = ny as usize * w + nx as usize;
                if bits[j] && labels[j] == 0 {
                    labels[j] = next;
                    stack.push(j);
                }
            }
        }
    }

    LabelMap { width: w, height: h, labels, count: next }
}

/// Label at `(x, y)`, or `None` on background.
pub fn component_containing(labels: &LabelMap, x: usize, y: usize) -> Option<u32> {
    match labels.get(x, y) {
        0 => None,
        l => Some(l),
    }
}

/// Pixel count per label; index 0 holds the background count.
pub fn component_sizes(labels: &LabelMap) -> Vec<usize> {
    let mut sizes = vec![0usize; labels.count() as usize + 1];
    for &l in labels.as_slice() {
        sizes[l as usize] += 1;
    }
    sizes
}

/// Label with the most pixels; ties go to the smaller label.
pub fn largest_component(labels: &LabelMap) -> Option<u32> {
    let sizes = component_sizes(labels);
    let mut best: Option<(u32, usize)> = None;
    for (label, &size) in sizes.iter().enumerate().skip(1) {
        if best.is_none_or(|(_, s)| size > s) {
            best = Some((label as u32, size));
        }
    }
    best.map(|(l, _)| l)
}

pub fn component_mask(labels: &LabelMap, label: u32) -> BinaryMask {
    BinaryMask {
        width: labels.width(),
        height: labels.height(),
        bits: labels.as_slice().iter().map(|&l| l == label).collect(),
    }
}

pub fn component_bbox(labels: &LabelMap, label: u32) -> Option<BBox> {
    let w = labels.width();
    let mut out: Option<BBox> = None;
    for (i, &l) in labels.as_slice().iter().enumerate() {
        if l == label {
            let b = BBox::pixel(i % w, i / w);
            out = Some(out.map_or(b, |o| o.union(&b)));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(w: usize, h: usize, pts: &[(usize, usize)]) -> BinaryMask {
        let mut m = BinaryMask::new(w, h);
        for &(x, y) in pts {
            m.set(x, y, true);
        }
        m
    }

    #[test]
    fn empty_mask_has_no_components() {
        let l = connected_components(&BinaryMask::new(4, 4), Connectivity::Eight);
        assert_eq!(l.count(), 0);
        assert!(l.as_slice().iter().all(|&v| v == 0));
        assert_eq!(largest_component(&l), None);
    }

    #[test]
    fn islands_are_labeled_in_scan_order() {
        let m = mask_from(4, 4, &[(0, 0), (3, 3)]);
        let l = connected_components(&m, Connectivity::Eight);
        assert_eq!(l.count(), 2);
        assert_eq!(l.get(0, 0), 1);
        assert_eq!(l.get(3, 3), 2);
        assert_eq!(component_containing(&l, 3, 3), Some(2));
        assert_eq!(component_containing(&l, 1, 1), None);
    }

    #[test]
    fn diagonal_pair_depends_on_connectivity() {
        let m = mask_from(2, 2, &[(0, 0), (1, 1)]);
        assert_eq!(connected_components(&m, Connectivity::Four).count(), 2);
        assert_eq!(connected_components(&m, Connectivity::Eight).count(), 1);
    }

    #[test]
    fn largest_component_and_tie_break() {
        // sizes {3, 5}
        let m = mask_from(8, 3, &[(0, 0), (1, 0), (2, 0), (5, 0), (6, 0), (7, 0), (5, 1), (5, 2)]);
        let l = connected_components(&m, Connectivity::Four);
        assert_eq!(component_sizes(&l)[1..], [3, 5]);
        assert_eq!(largest_component(&l), Some(2));

        // sizes {4, 4}
        let m = mask_from(6, 2, &[(0, 0), (1, 0), (0, 1), (1, 1), (4, 0), (5, 0), (4, 1), (5, 1)]);
        let l = connected_components(&m, Connectivity::Eight);
        assert_eq!(largest_component(&l), Some(1));
    }

    #[test]
    fn component_geometry() {
        let m = mask_from(5, 5, &[(1, 1), (2, 1), (2, 2), (4, 4)]);
        let l = connected_components(&m, Connectivity::Eight);
        assert_eq!(component_bbox(&l, 1), Some(BBox::new(1, 1, 3, 3)));
        assert_eq!(component_mask(&l, 2).count(), 1);
        assert_eq!(component_bbox(&l, 3), None);
    }
}
