use std::collections::VecDeque;

use crate::error::{Error, Result};
use crate::grid::BinaryMask;

/// Result of 4-connected component labeling. Background pixels carry label 0;
/// foreground components are numbered 1..=count in raster order of their
/// first pixel.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ComponentMap {
    width: usize,
    height: usize,
    labels: Vec<u32>,
    count: usize,
}

impl ComponentMap {
    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn height(&self) -> usize {
        self.height
    }

    #[inline]
    pub fn label(&self, x: usize, y: usize) -> u32 {
        self.labels[y * self.width + x]
    }

    pub fn count(&self) -> usize {
        self.count
    }

    pub fn labels(&self) -> &[u32] {
        &self.labels
    }

    /// Pixel count per component, indexed by label - 1.
    pub fn sizes(&self) -> Vec<usize> {
        let mut sizes = vec![0usize; self.count];
        for &l in &self.labels {
            if l > 0 {
                sizes[(l - 1) as usize] += 1;
            }
        }
        sizes
    }

    pub fn foreground_pixels(&self) -> usize {
        self.labels.iter().filter(|&&l| l > 0).count()
    }
}

/// Label 4-connected foreground components by breadth-first flood fill from
/// each unvisited foreground pixel, scanning in raster order.
pub fn label_components(mask: &BinaryMask) -> ComponentMap {
    let (w, h) = (mask.width(), mask.height());
    let mut labels = vec![0u32; w * h];
    let mut count = 0u32;
    let mut queue = VecDeque::new();
    for sy in 0..h {
        for sx in 0..w {
            if !mask.get(sx, sy) || labels[sy * w + sx] != 0 {
                continue;
            }
            count += 1;
            labels[sy * w + sx] = count;
            queue.push_back((sx, sy));
            while let Some((x, y)) = queue.pop_front() {
                let mut visit = |nx: usize, ny: usize| {
                    if mask.get(nx, ny) && labels[ny * w + nx] == 0 {
                        labels[ny * w + nx] = count;
                        queue.push_back((nx, ny));
                    }
                };
                if x > 0 {
                    visit(x - 1, y);
                }
                if x + 1 < w {
                    visit(x + 1, y);
                }
                if y > 0 {
                    visit(x, y - 1);
                }
                if y + 1 < h {
                    visit(x, y + 1);
                }
            }
        }
    }
    ComponentMap {
        width: w,
        height: h,
        labels,
        count: count as usize,
    }
}

/// Object-level overlap score. Each reference component is greedily matched
/// to the computed component sharing the most pixels (largest intersections
/// first, ties toward lower labels, each computed component used at most
/// once). With I the total matched intersection, unmatched reference pixels
/// count as misses and unmatched computed pixels as false alarms, giving
/// 2I / (2I + (|R| - I) + (|P| - I)) = 2I / (|P| + |R|).
pub fn overlap(computed: &ComponentMap, reference: &ComponentMap) -> Result<f64> {
    if computed.width != reference.width || computed.height != reference.height {
        return Err(Error::invalid_argument(format!(
            "component map geometry mismatch: {}x{} vs {}x{}",
            computed.width, computed.height, reference.width, reference.height
        )));
    }
    let p_total = computed.foreground_pixels();
    let r_total = reference.foreground_pixels();
    if p_total == 0 && r_total == 0 {
        return Err(Error::UndefinedMetric(
            "overlap of two empty instance maps".into(),
        ));
    }

    let pc = computed.count;
    let rc = reference.count;
    let mut inter = vec![0usize; rc * pc];
    for (cl, rl) in computed.labels.iter().zip(&reference.labels) {
        if *cl > 0 && *rl > 0 {
            inter[(*rl as usize - 1) * pc + (*cl as usize - 1)] += 1;
        }
    }

    let mut pairs: Vec<(usize, usize, usize)> = Vec::new();
    for r in 0..rc {
        for p in 0..pc {
            let i = inter[r * pc + p];
            if i > 0 {
                pairs.push((i, r, p));
            }
        }
    }
    pairs.sort_by(|a, b| b.0.cmp(&a.0).then(a.1.cmp(&b.1)).then(a.2.cmp(&b.2)));

    let mut ref_used = vec![false; rc];
    let mut comp_used = vec![false; pc];
    let mut matched = 0usize;
    for (i, r, p) in pairs {
        if !ref_used[r] && !comp_used[p] {
            ref_used[r] = true;
            comp_used[p] = true;
            matched += i;
        }
    }

    Ok(2.0 * matched as f64 / (p_total + r_total) as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::from_fn(w, h, |x, y| rows[y].as_bytes()[x] != b'.')
    }

    #[test]
    fn raster_order_labels_and_counts() {
        let m = mask_from(&[
            "xx..x", //
            "xx..x", //
            ".....", //
            "x...x", //
        ]);
        let c = label_components(&m);
        assert_eq!(c.count(), 4);
        assert_eq!(c.label(0, 0), 1);
        assert_eq!(c.label(1, 1), 1);
        assert_eq!(c.label(4, 0), 2);
        assert_eq!(c.label(0, 3), 3);
        assert_eq!(c.label(4, 3), 4);
        assert_eq!(c.sizes(), vec![4, 2, 1, 1]);
        assert_eq!(c.foreground_pixels(), 8);
    }

    #[test]
    fn diagonal_touch_is_two_components() {
        let m = mask_from(&[
            "x.", //
            ".x", //
        ]);
        assert_eq!(label_components(&m).count(), 2);
    }

    #[test]
    fn perfect_instance_match_scores_one() {
        let m = mask_from(&[
            "xx..", //
            "..xx", //
        ]);
        let c = label_components(&m);
        assert_eq!(overlap(&c, &c).unwrap(), 1.0);
    }

    #[test]
    fn no_overlap_scores_zero() {
        let p = label_components(&mask_from(&["x...", "...."]));
        let r = label_components(&mask_from(&["....", "...x"]));
        assert_eq!(overlap(&p, &r).unwrap(), 0.0);
    }

    #[test]
    fn one_prediction_split_across_two_references() {
        // One 11-pixel predicted bar bridges two 10-pixel reference blocks,
        // sharing 5 pixels with each. The prediction can be matched to only
        // one reference, so I = 5 and the score is 2*5 / (11 + 20) = 10/31.
        let p = label_components(&mask_from(&[
            "...........", //
            "xxxxxxxxxxx", //
        ]));
        let r = label_components(&mask_from(&[
            "xxxxx.xxxxx", //
            "xxxxx.xxxxx", //
        ]));
        assert_eq!(p.count(), 1);
        assert_eq!(r.count(), 2);
        assert_eq!(overlap(&p, &r).unwrap(), 10.0 / 31.0);
    }

    #[test]
    fn empty_maps_are_undefined_and_geometry_is_checked() {
        let empty = label_components(&BinaryMask::zeros(3, 3));
        assert!(matches!(
            overlap(&empty, &empty),
            Err(Error::UndefinedMetric(_))
        ));
        let nonempty = label_components(&mask_from(&["x..", "...", "..."]));
        assert_eq!(overlap(&empty, &nonempty).unwrap(), 0.0);
        let other = label_components(&BinaryMask::zeros(2, 3));
        assert!(overlap(&empty, &other).is_err());
    }
}
