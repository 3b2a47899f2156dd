//! Exact Euclidean distance transform via the two-pass parabola
//! lower-envelope method: one 1D transform down every column, then one
//! across every row of the intermediate field.

/// Stand-in for "no seed here". Large enough to dominate any real squared
/// distance, small enough that parabola intersections stay finite.
const FAR: f64 = 1e20;

/// Squared distance to the nearest seed pixel, for every pixel, row-major.
/// All arithmetic on integer-valued inputs stays exact in doubles.
pub fn squared_distances(
    width: usize,
    height: usize,
    mut is_seed: impl FnMut(usize, usize) -> bool,
) -> Vec<f64> {
    let mut field = vec![0.0; width * height];
    for y in 0..height {
        for x in 0..width {
            field[y * width + x] = if is_seed(x, y) { 0.0 } else { FAR };
        }
    }

    let mut f = Vec::new();
    let mut d = Vec::new();
    let mut v = Vec::new();
    let mut z = Vec::new();

    for x in 0..width {
        f.clear();
        f.extend((0..height).map(|y| field[y * width + x]));
        transform_1d(&f, &mut d, &mut v, &mut z);
        for y in 0..height {
            field[y * width + x] = d[y];
        }
    }
    for y in 0..height {
        f.clear();
        f.extend_from_slice(&field[y * width..(y + 1) * width]);
        transform_1d(&f, &mut d, &mut v, &mut z);
        field[y * width..(y + 1) * width].copy_from_slice(&d);
    }
    field
}

/// `d[q] = min_p (q - p)^2 + f[p]` for a single scanline.
fn transform_1d(f: &[f64], d: &mut Vec<f64>, v: &mut Vec<usize>, z: &mut Vec<f64>) {
    let n = f.len();
    d.clear();
    d.resize(n, 0.0);
    v.clear();
    v.resize(n, 0);
    z.clear();
    z.resize(n + 1, 0.0);

    let mut k = 0usize;
    v[0] = 0;
    z[0] = f64::NEG_INFINITY;
    z[1] = f64::INFINITY;
    for q in 1..n {
        loop {
            let p = v[k];
            let s = ((f[q] + (q * q) as f64) - (f[p] + (p * p) as f64)) / (2 * (q - p)) as f64;
            if s <= z[k] && k > 0 {
                k -= 1;
            } else {
                k += 1;
                v[k] = q;
                z[k] = s;
                z[k + 1] = f64::INFINITY;
                break;
            }
        }
    }

    k = 0;
    for q in 0..n {
        while z[k + 1] < q as f64 {
            k += 1;
        }
        let p = v[k];
        let diff = q as f64 - p as f64;
        d[q] = diff * diff + f[p];
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn brute_force(width: usize, height: usize, seeds: &[(usize, usize)]) -> Vec<f64> {
        let mut out = vec![f64::INFINITY; width * height];
        for y in 0..height {
            for x in 0..width {
                for &(sx, sy) in seeds {
                    let dx = x as f64 - sx as f64;
                    let dy = y as f64 - sy as f64;
                    let d2 = dx * dx + dy * dy;
                    let cell = &mut out[y * width + x];
                    if d2 < *cell {
                        *cell = d2;
                    }
                }
            }
        }
        out
    }

    #[test]
    fn single_seed_matches_direct_formula() {
        let got = squared_distances(7, 5, |x, y| x == 3 && y == 2);
        for y in 0..5 {
            for x in 0..7 {
                let expect = ((x as f64 - 3.0).powi(2)) + ((y as f64 - 2.0).powi(2));
                assert_eq!(got[y * 7 + x], expect);
            }
        }
    }

    #[test]
    fn random_seed_sets_match_all_pairs_search() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..30 {
            let w = rng.gen_range(1..20);
            let h = rng.gen_range(1..20);
            let count = rng.gen_range(1..=(w * h).min(12));
            let mut seeds = Vec::new();
            while seeds.len() < count {
                let p = (rng.gen_range(0..w), rng.gen_range(0..h));
                if !seeds.contains(&p) {
                    seeds.push(p);
                }
            }
            let got = squared_distances(w, h, |x, y| seeds.contains(&(x, y)));
            let want = brute_force(w, h, &seeds);
            for (g, w) in got.iter().zip(&want) {
                assert!((g - w).abs() < 1e-9, "{g} vs {w}");
            }
        }
    }

    #[test]
    fn all_seeds_give_zero_everywhere() {
        let got = squared_distances(4, 3, |_, _| true);
        assert!(got.iter().all(|&v| v == 0.0));
    }
}
