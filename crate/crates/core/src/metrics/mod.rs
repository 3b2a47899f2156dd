//! Segmentation quality measures: pixel-wise overlap ratios, symmetric
//! boundary distance, and the object-level overlap score, plus the CSV
//! evaluation report.

mod components;
mod distance;
mod report;

pub use components::{label_components, overlap, ComponentMap};
pub use report::{AggregateScores, ImageScores, MetricsReport, TestGroup};

use crate::error::{Error, Result};
use crate::grid::BinaryMask;
use distance::squared_distances;

/// Pixels of a mask that touch the outside: at least one 4-neighbor is
/// background or lies beyond the image edge.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct BoundarySet {
    coords: Vec<(usize, usize)>,
}

impl BoundarySet {
    pub fn coordinates(&self) -> &[(usize, usize)] {
        &self.coords
    }

    pub fn len(&self) -> usize {
        self.coords.len()
    }

    pub fn is_empty(&self) -> bool {
        self.coords.is_empty()
    }
}

fn check_geometry(p: &BinaryMask, r: &BinaryMask) -> Result<()> {
    if !p.same_geometry(r) {
        return Err(Error::invalid_argument(format!(
            "mask geometry mismatch: {}x{} vs {}x{}",
            p.width(),
            p.height(),
            r.width(),
            r.height()
        )));
    }
    Ok(())
}

fn overlap_counts(p: &BinaryMask, r: &BinaryMask) -> Result<(usize, usize, usize)> {
    check_geometry(p, r)?;
    let mut inter = 0usize;
    let mut p_count = 0usize;
    let mut r_count = 0usize;
    for (a, b) in p.values().iter().zip(r.values()) {
        let a = *a != 0;
        let b = *b != 0;
        p_count += usize::from(a);
        r_count += usize::from(b);
        inter += usize::from(a && b);
    }
    if p_count == 0 && r_count == 0 {
        return Err(Error::UndefinedMetric(
            "pixel overlap of two empty masks".into(),
        ));
    }
    Ok((inter, p_count, r_count))
}

/// Intersection over union of two masks.
pub fn jaccard(p: &BinaryMask, r: &BinaryMask) -> Result<f64> {
    let (inter, p_count, r_count) = overlap_counts(p, r)?;
    Ok(inter as f64 / (p_count + r_count - inter) as f64)
}

/// Dice coefficient: twice the intersection over the summed mask sizes.
pub fn f1(p: &BinaryMask, r: &BinaryMask) -> Result<f64> {
    let (inter, p_count, r_count) = overlap_counts(p, r)?;
    Ok(2.0 * inter as f64 / (p_count + r_count) as f64)
}

pub fn boundary(mask: &BinaryMask) -> BoundarySet {
    let (w, h) = (mask.width(), mask.height());
    let mut coords = Vec::new();
    for y in 0..h {
        for x in 0..w {
            if !mask.get(x, y) {
                continue;
            }
            let exposed = x == 0
                || y == 0
                || x + 1 == w
                || y + 1 == h
                || !mask.get(x - 1, y)
                || !mask.get(x + 1, y)
                || !mask.get(x, y - 1)
                || !mask.get(x, y + 1);
            if exposed {
                coords.push((x, y));
            }
        }
    }
    BoundarySet { coords }
}

/// Average symmetric boundary distance: mean Euclidean distance from each
/// boundary pixel of one mask to the nearest boundary pixel of the other,
/// averaged over both directions.
pub fn abd(p: &BinaryMask, r: &BinaryMask) -> Result<f64> {
    check_geometry(p, r)?;
    let pb = boundary(p);
    let rb = boundary(r);
    if pb.is_empty() || rb.is_empty() {
        return Err(Error::UndefinedMetric(
            "boundary distance with an empty boundary set".into(),
        ));
    }
    Ok(0.5 * (mean_boundary_distance(&pb, &rb, p) + mean_boundary_distance(&rb, &pb, p)))
}

fn mean_boundary_distance(from: &BoundarySet, to: &BoundarySet, geometry: &BinaryMask) -> f64 {
    let (w, h) = (geometry.width(), geometry.height());
    let mut seed = vec![false; w * h];
    for &(x, y) in &to.coords {
        seed[y * w + x] = true;
    }
    let field = squared_distances(w, h, |x, y| seed[y * w + x]);
    let sum: f64 = from
        .coords
        .iter()
        .map(|&(x, y)| field[y * w + x].sqrt())
        .sum();
    sum / from.coords.len() as f64
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn mask_from(rows: &[&str]) -> BinaryMask {
        let h = rows.len();
        let w = rows[0].len();
        BinaryMask::from_fn(w, h, |x, y| rows[y].as_bytes()[x] != b'.')
    }

    #[test]
    fn identical_masks_score_perfectly() {
        let m = mask_from(&["xx..", ".xx.", "...."]);
        assert_eq!(jaccard(&m, &m).unwrap(), 1.0);
        assert_eq!(f1(&m, &m).unwrap(), 1.0);
        assert_eq!(abd(&m, &m).unwrap(), 0.0);
    }

    #[test]
    fn disjoint_masks_score_zero() {
        let p = mask_from(&["xx..", "...."]);
        let r = mask_from(&["..xx", "...."]);
        assert_eq!(jaccard(&p, &r).unwrap(), 0.0);
        assert_eq!(f1(&p, &r).unwrap(), 0.0);
    }

    #[test]
    fn half_overlap_arithmetic() {
        // |P| = |R| = 100 pixels with 50 shared.
        let p = BinaryMask::from_fn(150, 1, |x, _| x < 100);
        let r = BinaryMask::from_fn(150, 1, |x, _| (50..150).contains(&x));
        assert_eq!(jaccard(&p, &r).unwrap(), 1.0 / 3.0);
        assert_eq!(f1(&p, &r).unwrap(), 0.5);
    }

    #[test]
    fn empty_pair_is_undefined_and_geometry_checked() {
        let e = BinaryMask::zeros(4, 4);
        assert!(matches!(jaccard(&e, &e), Err(Error::UndefinedMetric(_))));
        assert!(matches!(f1(&e, &e), Err(Error::UndefinedMetric(_))));
        let p = mask_from(&["x..."]);
        assert_eq!(jaccard(&p, &BinaryMask::zeros(4, 1)).unwrap(), 0.0);
        assert!(jaccard(&p, &BinaryMask::zeros(3, 1)).is_err());
    }

    #[test]
    fn boundary_of_full_mask_is_border_ring() {
        let full = BinaryMask::from_fn(5, 4, |_, _| true);
        let b = boundary(&full);
        let expect: Vec<(usize, usize)> = (0..4)
            .flat_map(|y| (0..5).map(move |x| (x, y)))
            .filter(|&(x, y)| x == 0 || y == 0 || x == 4 || y == 3)
            .collect();
        assert_eq!(b.coordinates(), expect.as_slice());
    }

    #[test]
    fn boundary_of_single_pixel_is_that_pixel() {
        let m = mask_from(&["....", ".x..", "...."]);
        assert_eq!(boundary(&m).coordinates(), &[(1, 1)]);
    }

    #[test]
    fn solid_square_boundary_is_its_perimeter() {
        let m = mask_from(&[
            ".....", //
            ".xxx.", //
            ".xxx.", //
            ".xxx.", //
            ".....", //
        ]);
        let b = boundary(&m);
        assert_eq!(b.len(), 8);
        assert!(!b.coordinates().contains(&(2, 2)));
    }

    #[test]
    fn empty_mask_has_empty_boundary() {
        assert!(boundary(&BinaryMask::zeros(3, 3)).is_empty());
    }

    #[test]
    fn two_single_pixels_five_apart() {
        let p = BinaryMask::from_fn(10, 3, |x, y| x == 1 && y == 1);
        let r = BinaryMask::from_fn(10, 3, |x, y| x == 6 && y == 1);
        assert_eq!(abd(&p, &r).unwrap(), 5.0);
    }

    #[test]
    fn abd_requires_both_boundaries() {
        let p = mask_from(&["x...", "...."]);
        let e = BinaryMask::zeros(4, 2);
        assert!(matches!(abd(&p, &e), Err(Error::UndefinedMetric(_))));
        assert!(matches!(abd(&e, &p), Err(Error::UndefinedMetric(_))));
    }

    fn abd_brute_force(p: &BinaryMask, r: &BinaryMask) -> f64 {
        let pb = boundary(p);
        let rb = boundary(r);
        let mean = |from: &BoundarySet, to: &BoundarySet| {
            let sum: f64 = from
                .coordinates()
                .iter()
                .map(|&(x, y)| {
                    to.coordinates()
                        .iter()
                        .map(|&(u, v)| {
                            let dx = x as f64 - u as f64;
                            let dy = y as f64 - v as f64;
                            (dx * dx + dy * dy).sqrt()
                        })
                        .fold(f64::INFINITY, f64::min)
                })
                .sum();
            sum / from.len() as f64
        };
        0.5 * (mean(&pb, &rb) + mean(&rb, &pb))
    }

    fn random_mask(rng: &mut impl rand::Rng, w: usize, h: usize) -> BinaryMask {
        BinaryMask::from_fn(w, h, |_, _| rng.gen_bool(0.4))
    }

    #[test]
    fn abd_matches_all_pairs_oracle() {
        use rand::{Rng, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(21);
        let mut checked = 0;
        while checked < 40 {
            let w = rng.gen_range(2..14);
            let h = rng.gen_range(2..14);
            let p = random_mask(&mut rng, w, h);
            let r = random_mask(&mut rng, w, h);
            if boundary(&p).is_empty() || boundary(&r).is_empty() {
                continue;
            }
            let got = abd(&p, &r).unwrap();
            let want = abd_brute_force(&p, &r);
            assert!((got - want).abs() < 1e-9, "{got} vs {want}");
            assert_eq!(got, abd(&r, &p).unwrap());
            checked += 1;
        }
    }

    #[test]
    fn growing_intersection_never_hurts() {
        // |P| and |R| fixed at 100 while the shared run grows.
        let mut prev_ji = -1.0;
        let mut prev_f1 = -1.0;
        for shared in 0..=100usize {
            let p = BinaryMask::from_fn(200, 1, |x, _| x < 100);
            let r = BinaryMask::from_fn(200, 1, |x, _| (100 - shared..200 - shared).contains(&x));
            let ji = jaccard(&p, &r).unwrap();
            let f = f1(&p, &r).unwrap();
            assert!(ji >= prev_ji && f >= prev_f1);
            prev_ji = ji;
            prev_f1 = f;
        }
        assert_eq!(prev_ji, 1.0);
        assert_eq!(prev_f1, 1.0);
    }

    proptest! {
        #[test]
        fn f1_is_algebraic_function_of_jaccard(
            bits_p in proptest::collection::vec(any::<bool>(), 36),
            bits_r in proptest::collection::vec(any::<bool>(), 36),
        ) {
            let p = BinaryMask::from_fn(6, 6, |x, y| bits_p[y * 6 + x]);
            let r = BinaryMask::from_fn(6, 6, |x, y| bits_r[y * 6 + x]);
            prop_assume!(p.count_ones() + r.count_ones() > 0);
            let ji = jaccard(&p, &r).unwrap();
            let f = f1(&p, &r).unwrap();
            prop_assert!((f - 2.0 * ji / (1.0 + ji)).abs() < 1e-12);
            prop_assert!((0.0..=1.0).contains(&ji));
            prop_assert!((0.0..=1.0).contains(&f));
            prop_assert_eq!(ji, jaccard(&r, &p).unwrap());
        }
    }
}
