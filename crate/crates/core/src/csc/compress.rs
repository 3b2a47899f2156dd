use nalgebra::{DMatrix, SymmetricEigen};

use super::FeatureMaps;
use crate::error::{Error, Result};

/// Per-pixel linear compressor: centers a channel vector and projects it onto
/// the leading principal directions of the fitting sample.
#[derive(Debug, Clone, PartialEq)]
pub struct Compressor {
    mean: Vec<f64>,
    /// Row-major `out_channels x in_channels` projection matrix with
    /// orthonormal rows.
    components: Vec<f64>,
    in_channels: usize,
    out_channels: usize,
}

impl Compressor {
    const ROW_NORM_TOL: f64 = 1e-6;

    pub fn from_parts(mean: Vec<f64>, components: Vec<f64>, out_channels: usize) -> Result<Self> {
        let in_channels = mean.len();
        if in_channels == 0 || out_channels == 0 {
            return Err(Error::invalid_argument("compressor dimensions must be positive"));
        }
        if out_channels > in_channels {
            return Err(Error::invalid_argument(format!(
                "cannot keep {out_channels} channels out of {in_channels}"
            )));
        }
        if components.len() != out_channels * in_channels {
            return Err(Error::invalid_argument(format!(
                "projection matrix has {} entries, expected {}",
                components.len(),
                out_channels * in_channels
            )));
        }
        if !mean.iter().chain(components.iter()).all(|v| v.is_finite()) {
            return Err(Error::invalid_argument("compressor parameters must be finite"));
        }
        for r in 0..out_channels {
            let row = &components[r * in_channels..(r + 1) * in_channels];
            let norm_sq: f64 = row.iter().map(|v| v * v).sum();
            if (norm_sq - 1.0).abs() > Self::ROW_NORM_TOL {
                return Err(Error::invalid_argument(format!(
                    "projection row {r} is not unit-norm (|row|^2 = {norm_sq})"
                )));
            }
        }
        Ok(Self {
            mean,
            components,
            in_channels,
            out_channels,
        })
    }

    pub fn in_channels(&self) -> usize {
        self.in_channels
    }

    pub fn out_channels(&self) -> usize {
        self.out_channels
    }

    pub fn mean(&self) -> &[f64] {
        &self.mean
    }

    /// Row-major `out_channels x in_channels` projection entries.
    pub fn components(&self) -> &[f64] {
        &self.components
    }

    /// Writes `projection * (row - mean)` into `out`.
    pub fn project_row(&self, row: &[f64], out: &mut [f64]) {
        debug_assert_eq!(row.len(), self.in_channels);
        debug_assert_eq!(out.len(), self.out_channels);
        for (k, slot) in out.iter_mut().enumerate() {
            let comp = &self.components[k * self.in_channels..(k + 1) * self.in_channels];
            let mut acc = 0.0;
            for j in 0..self.in_channels {
                acc += comp[j] * (row[j] - self.mean[j]);
            }
            *slot = acc;
        }
    }
}

/// Fits mean and the top `out_channels` principal directions of the per-pixel
/// channel vectors in `pool`.
pub fn fit_compressor(pool: &FeatureMaps, out_channels: usize) -> Result<Compressor> {
    let d = pool.channels;
    let n = pool.width * pool.height;
    if out_channels == 0 {
        return Err(Error::invalid_argument("out_channels must be positive"));
    }
    if out_channels > d {
        return Err(Error::invalid_argument(format!(
            "cannot keep {out_channels} channels out of {d}"
        )));
    }
    if n < out_channels {
        return Err(Error::invalid_argument(format!(
            "fitting sample has {n} pixels, need at least {out_channels}"
        )));
    }
    if !pool.codes.iter().all(|v| v.is_finite()) {
        return Err(Error::invalid_input("fitting sample contains non-finite values"));
    }

    let mut mean = vec![0.0; d];
    for px in 0..n {
        let row = &pool.codes[px * d..(px + 1) * d];
        for (m, v) in mean.iter_mut().zip(row) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n as f64;
    }

    let mut centered = DMatrix::<f64>::zeros(n, d);
    for px in 0..n {
        let row = &pool.codes[px * d..(px + 1) * d];
        for j in 0..d {
            centered[(px, j)] = row[j] - mean[j];
        }
    }
    let cov = centered.transpose() * &centered / n as f64;
    let eigen = SymmetricEigen::new(cov);

    let mut order: Vec<usize> = (0..d).collect();
    order.sort_by(|&a, &b| {
        eigen.eigenvalues[b]
            .total_cmp(&eigen.eigenvalues[a])
            .then(a.cmp(&b))
    });

    let mut components = Vec::with_capacity(out_channels * d);
    for &idx in order.iter().take(out_channels) {
        let col = eigen.eigenvectors.column(idx);
        // Fix the sign so the largest-magnitude coordinate is positive.
        let mut anchor = 0;
        for j in 1..d {
            if col[j].abs() > col[anchor].abs() {
                anchor = j;
            }
        }
        let flip = if col[anchor] < 0.0 { -1.0 } else { 1.0 };
        components.extend(col.iter().map(|v| v * flip));
    }

    Compressor::from_parts(mean, components, out_channels)
}

/// Projects every pixel vector of `pool`, preserving geometry.
pub fn apply_compressor(comp: &Compressor, pool: &FeatureMaps) -> Result<FeatureMaps> {
    if pool.channels != comp.in_channels {
        return Err(Error::invalid_argument(format!(
            "pool has {} channels but the compressor expects {}",
            pool.channels, comp.in_channels
        )));
    }
    let n = pool.width * pool.height;
    let mut out = FeatureMaps::zeros(pool.width, pool.height, comp.out_channels, pool.layer_index);
    for px in 0..n {
        let row = &pool.codes[px * comp.in_channels..(px + 1) * comp.in_channels];
        let dst = &mut out.codes[px * comp.out_channels..(px + 1) * comp.out_channels];
        comp.project_row(row, dst);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn maps_from_rows(rows: &[Vec<f64>]) -> FeatureMaps {
        let d = rows[0].len();
        let mut maps = FeatureMaps::zeros(rows.len(), 1, d, 1);
        for (px, row) in rows.iter().enumerate() {
            maps.codes[px * d..(px + 1) * d].copy_from_slice(row);
        }
        maps
    }

    fn random_rows(n: usize, d: usize, seed: u64) -> Vec<Vec<f64>> {
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        (0..n)
            .map(|_| (0..d).map(|_| rng.gen_range(-1.0..1.0)).collect())
            .collect()
    }

    /// Cyclic Jacobi eigensolver, kept independent of the nalgebra path.
    fn jacobi_eigen(mut a: Vec<Vec<f64>>) -> (Vec<f64>, Vec<Vec<f64>>) {
        let d = a.len();
        let mut v = vec![vec![0.0; d]; d];
        for (i, row) in v.iter_mut().enumerate() {
            row[i] = 1.0;
        }
        for _ in 0..100 {
            let mut off = 0.0;
            for p in 0..d {
                for q in (p + 1)..d {
                    off += a[p][q] * a[p][q];
                }
            }
            if off <= 1e-24 {
                break;
            }
            for p in 0..d {
                for q in (p + 1)..d {
                    if a[p][q].abs() <= 1e-18 {
                        continue;
                    }
                    let theta = 0.5 * (a[q][q] - a[p][p]) / a[p][q];
                    let t = theta.signum() / (theta.abs() + (theta * theta + 1.0).sqrt());
                    let c = 1.0 / (t * t + 1.0).sqrt();
                    let s = t * c;
                    for k in 0..d {
                        let akp = a[k][p];
                        let akq = a[k][q];
                        a[k][p] = c * akp - s * akq;
                        a[k][q] = s * akp + c * akq;
                    }
                    for k in 0..d {
                        let apk = a[p][k];
                        let aqk = a[q][k];
                        a[p][k] = c * apk - s * aqk;
                        a[q][k] = s * apk + c * aqk;
                    }
                    for row in v.iter_mut() {
                        let vp = row[p];
                        let vq = row[q];
                        row[p] = c * vp - s * vq;
                        row[q] = s * vp + c * vq;
                    }
                }
            }
        }
        let values = (0..d).map(|i| a[i][i]).collect();
        (values, v)
    }

    fn population_cov(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<Vec<f64>>) {
        let n = rows.len();
        let d = rows[0].len();
        let mut mean = vec![0.0; d];
        for row in rows {
            for (m, v) in mean.iter_mut().zip(row) {
                *m += v / n as f64;
            }
        }
        let mut cov = vec![vec![0.0; d]; d];
        for row in rows {
            for i in 0..d {
                for j in 0..d {
                    cov[i][j] += (row[i] - mean[i]) * (row[j] - mean[j]) / n as f64;
                }
            }
        }
        (mean, cov)
    }

    #[test]
    fn rank_one_pool_reconstructs_exactly_from_one_component() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let rows: Vec<Vec<f64>> = (0..40)
            .map(|_| {
                let v: f64 = rng.gen_range(-2.0..2.0);
                vec![v; 5]
            })
            .collect();
        let pool = maps_from_rows(&rows);
        let comp = fit_compressor(&pool, 1).unwrap();
        let projected = apply_compressor(&comp, &pool).unwrap();
        for (px, row) in rows.iter().enumerate() {
            let coord = projected.codes[px];
            for j in 0..5 {
                let rebuilt = comp.mean()[j] + comp.components()[j] * coord;
                assert!((rebuilt - row[j]).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn full_rank_projection_is_orthonormal_and_invertible() {
        let rows = random_rows(60, 6, 11);
        let pool = maps_from_rows(&rows);
        let comp = fit_compressor(&pool, 6).unwrap();
        let d = 6;
        for r in 0..d {
            for s in 0..d {
                let dot: f64 = (0..d)
                    .map(|j| comp.components()[r * d + j] * comp.components()[s * d + j])
                    .sum();
                let expect = if r == s { 1.0 } else { 0.0 };
                assert!((dot - expect).abs() <= 1e-9, "row {r} . row {s} = {dot}");
            }
        }
        let projected = apply_compressor(&comp, &pool).unwrap();
        for (px, row) in rows.iter().enumerate() {
            for j in 0..d {
                let rebuilt: f64 = (0..d)
                    .map(|k| comp.components()[k * d + j] * projected.codes[px * d + k])
                    .sum();
                assert!((rebuilt - (row[j] - comp.mean()[j])).abs() <= 1e-9);
            }
        }
    }

    #[test]
    fn captured_variance_matches_jacobi_oracle() {
        let rows = random_rows(200, 7, 29);
        let pool = maps_from_rows(&rows);
        let keep = 3;
        let comp = fit_compressor(&pool, keep).unwrap();
        let projected = apply_compressor(&comp, &pool).unwrap();
        let n = rows.len() as f64;
        let mut captured = 0.0;
        for px in 0..rows.len() {
            for k in 0..keep {
                let v = projected.codes[px * keep + k];
                captured += v * v / n;
            }
        }
        let (_, cov) = population_cov(&rows);
        let (mut values, _) = jacobi_eigen(cov);
        values.sort_by(|a, b| b.total_cmp(a));
        let oracle: f64 = values.iter().take(keep).sum();
        assert!(
            (captured - oracle).abs() <= 1e-8,
            "captured {captured} vs oracle {oracle}"
        );
    }

    #[test]
    fn principal_directions_match_jacobi_oracle_up_to_sign() {
        let rows = random_rows(150, 5, 41);
        let pool = maps_from_rows(&rows);
        let comp = fit_compressor(&pool, 5).unwrap();
        let (_, cov) = population_cov(&rows);
        let (values, vectors) = jacobi_eigen(cov);
        let mut order: Vec<usize> = (0..5).collect();
        order.sort_by(|&a, &b| values[b].total_cmp(&values[a]));
        for (k, &idx) in order.iter().enumerate() {
            let dot: f64 = (0..5)
                .map(|j| comp.components()[k * 5 + j] * vectors[j][idx])
                .sum();
            assert!((dot.abs() - 1.0).abs() <= 1e-6, "component {k}: |dot| = {}", dot.abs());
        }
    }

    #[test]
    fn mean_vector_projects_to_zero() {
        let rows = random_rows(30, 4, 55);
        let pool = maps_from_rows(&rows);
        let comp = fit_compressor(&pool, 2).unwrap();
        let mut out = vec![9.0; 2];
        comp.project_row(&comp.mean().to_vec(), &mut out);
        assert_eq!(out, vec![0.0, 0.0]);
    }

    #[test]
    fn apply_matches_double_loop_oracle() {
        let rows = random_rows(25, 6, 67);
        let pool = maps_from_rows(&rows);
        let comp = fit_compressor(&pool, 4).unwrap();
        let projected = apply_compressor(&comp, &pool).unwrap();
        for (px, row) in rows.iter().enumerate() {
            for k in 0..4 {
                let mut acc = 0.0;
                for j in 0..6 {
                    acc += comp.components()[k * 6 + j] * (row[j] - comp.mean()[j]);
                }
                assert!((acc - projected.codes[px * 4 + k]).abs() <= 1e-12);
            }
        }
    }

    #[test]
    fn invalid_requests_are_rejected() {
        let pool = maps_from_rows(&random_rows(10, 3, 5));
        assert!(matches!(
            fit_compressor(&pool, 4),
            Err(crate::error::Error::InvalidArgument(_))
        ));
        assert!(matches!(
            fit_compressor(&pool, 0),
            Err(crate::error::Error::InvalidArgument(_))
        ));
        let tiny = maps_from_rows(&random_rows(2, 5, 5));
        assert!(fit_compressor(&tiny, 3).is_err());
        let comp = fit_compressor(&pool, 2).unwrap();
        let mismatched = maps_from_rows(&random_rows(10, 4, 6));
        assert!(apply_compressor(&comp, &mismatched).is_err());
    }

    #[test]
    fn fitting_is_deterministic() {
        let pool = maps_from_rows(&random_rows(80, 8, 91));
        let a = fit_compressor(&pool, 3).unwrap();
        let b = fit_compressor(&pool, 3).unwrap();
        assert_eq!(a, b);
    }
}
