use rayon::prelude::*;

use super::patch::{stamp_add, WindowMap};
use super::{FeatureMaps, LocalDictionary, SparseCodingConfig};
use crate::error::{Error, Result};
use crate::grid::Grid;

/// Slack allowed on the per-sweep objective monotonicity check; covers
/// accumulated floating-point drift of the incrementally maintained residual.
const OBJECTIVE_SLACK: f64 = 1e-9;

/// Encode result plus solver diagnostics.
#[derive(Debug, Clone)]
pub struct EncodeOutcome {
    pub maps: FeatureMaps,
    /// Penalty actually used; doubled from the configured value as many
    /// times as the sparsity ceiling required.
    pub effective_lambda: f64,
    /// Objective value before the first sweep and after each sweep.
    pub objective_trace: Vec<f64>,
    pub sweeps: usize,
}

#[inline]
pub(crate) fn soft_threshold(rho: f64, lambda: f64) -> f64 {
    if rho > lambda {
        rho - lambda
    } else if rho < -lambda {
        rho + lambda
    } else {
        0.0
    }
}

/// Sparse-code an image against a local dictionary.
pub fn encode(image: &Grid, dict: &LocalDictionary, cfg: &SparseCodingConfig) -> Result<FeatureMaps> {
    encode_detailed(image, dict, cfg).map(|o| o.maps)
}

/// Like [`encode`] but reporting the effective penalty and objective trace.
pub fn encode_detailed(
    image: &Grid,
    dict: &LocalDictionary,
    cfg: &SparseCodingConfig,
) -> Result<EncodeOutcome> {
    cfg.validate()?;
    let side = dict.filter_side();
    if side > image.width() || side > image.height() {
        return Err(Error::invalid_argument(format!(
            "filter side {side} exceeds image dimensions {}x{}",
            image.width(),
            image.height()
        )));
    }
    if !image.all_finite() {
        return Err(Error::invalid_input("image contains non-finite values"));
    }
    let mut lambda = cfg.lambda;
    loop {
        let (maps, objective_trace, sweeps) = solve(image, dict, cfg, lambda)?;
        if maps.nonzero_fraction() <= cfg.sparsity_ceiling {
            return Ok(EncodeOutcome {
                maps,
                effective_lambda: lambda,
                objective_trace,
                sweeps,
            });
        }
        lambda *= 2.0;
        if !lambda.is_finite() {
            return Err(Error::internal(
                "sparsity ceiling unreachable even as the penalty diverges",
            ));
        }
    }
}

struct TileResult {
    halo: (usize, usize, usize, usize),
    buffer: Vec<f64>,
    rect: (usize, usize, usize, usize),
    codes: Vec<f64>,
    max_delta: f64,
}

fn solve(
    image: &Grid,
    dict: &LocalDictionary,
    cfg: &SparseCodingConfig,
    lambda: f64,
) -> Result<(FeatureMaps, Vec<f64>, usize)> {
    let (w, h) = (image.width(), image.height());
    let n = w * h;
    let c = dict.atom_count();
    let side = dict.filter_side();
    let half = side / 2;

    let mut codes = vec![0.0f64; n * c];
    let mut residual = image.values().to_vec();

    // Gauss-Seidel updates run tile-by-tile in a four-color schedule: tiles
    // of one color are at least a window apart, so their read/write regions
    // are disjoint and the result is independent of thread count.
    let tile = side.max(16);
    let tiles_x = w.div_ceil(tile);
    let tiles_y = h.div_ceil(tile);
    let mut color_tiles: [Vec<(usize, usize)>; 4] = Default::default();
    for ty in 0..tiles_y {
        for tx in 0..tiles_x {
            color_tiles[(ty % 2) * 2 + tx % 2].push((tx, ty));
        }
    }

    let mut objective_trace = Vec::with_capacity(cfg.max_inner_iters + 1);
    let mut prev = objective(&residual, &codes, lambda);
    objective_trace.push(prev);
    let mut sweeps = 0;

    for _ in 0..cfg.max_inner_iters {
        let mut max_delta = 0.0f64;
        for tiles in &color_tiles {
            let results: Vec<TileResult> = tiles
                .par_iter()
                .map(|&(tx, ty)| {
                    sweep_tile(
                        &residual, &codes, image, dict, lambda, tile, tx, ty, half,
                    )
                })
                .collect();
            for r in results {
                let (hx0, hy0, hx1, _hy1) = r.halo;
                let bw = hx1 - hx0;
                for (row, chunk) in r.buffer.chunks_exact(bw).enumerate() {
                    let off = (hy0 + row) * w + hx0;
                    residual[off..off + bw].copy_from_slice(chunk);
                }
                let (x0, y0, x1, _y1) = r.rect;
                let rw = x1 - x0;
                for (row, chunk) in r.codes.chunks_exact(rw * c).enumerate() {
                    let off = ((y0 + row) * w + x0) * c;
                    codes[off..off + rw * c].copy_from_slice(chunk);
                }
                max_delta = max_delta.max(r.max_delta);
            }
        }
        sweeps += 1;
        let obj = objective(&residual, &codes, lambda);
        objective_trace.push(obj);
        if obj > prev + OBJECTIVE_SLACK * prev.abs().max(1.0) {
            return Err(Error::internal(format!(
                "coordinate descent objective increased from {prev} to {obj}"
            )));
        }
        let decrease = prev - obj;
        prev = obj;
        if max_delta == 0.0 || decrease <= cfg.tol * prev.abs() {
            break;
        }
    }

    let maps = FeatureMaps {
        width: w,
        height: h,
        channels: c,
        layer_index: 0,
        codes,
    };
    Ok((maps, objective_trace, sweeps))
}

#[allow(clippy::too_many_arguments)]
fn sweep_tile(
    residual: &[f64],
    codes: &[f64],
    image: &Grid,
    dict: &LocalDictionary,
    lambda: f64,
    tile: usize,
    tx: usize,
    ty: usize,
    half: usize,
) -> TileResult {
    let (w, h) = (image.width(), image.height());
    let c = dict.atom_count();
    let side = dict.filter_side();

    let x0 = tx * tile;
    let y0 = ty * tile;
    let x1 = (x0 + tile).min(w);
    let y1 = (y0 + tile).min(h);
    let hx0 = x0.saturating_sub(half);
    let hy0 = y0.saturating_sub(half);
    let hx1 = (x1 + half).min(w);
    let hy1 = (y1 + half).min(h);
    let bw = hx1 - hx0;

    let mut buffer = Vec::with_capacity(bw * (hy1 - hy0));
    for y in hy0..hy1 {
        buffer.extend_from_slice(&residual[y * w + hx0..y * w + hx1]);
    }
    let rw = x1 - x0;
    let mut tile_codes = Vec::with_capacity(rw * (y1 - y0) * c);
    for y in y0..y1 {
        tile_codes.extend_from_slice(&codes[(y * w + x0) * c..(y * w + x1) * c]);
    }

    let mut wmap = WindowMap::new(side);
    let mut fold_scratch = vec![0.0f64; side * side];
    let mut max_delta = 0.0f64;

    for y in y0..y1 {
        for x in x0..x1 {
            let code_off = ((y - y0) * rw + (x - x0)) * c;
            wmap.fill(w, h, hx0, hy0, bw, x, y);
            if wmap.interior {
                let base = (y - half - hy0) * bw + (x - half - hx0);
                for j in 0..c {
                    let atom = dict.atom(j);
                    let mut corr = 0.0;
                    for r in 0..side {
                        let row = &buffer[base + r * bw..base + r * bw + side];
                        let arow = &atom[r * side..(r + 1) * side];
                        for k in 0..side {
                            corr += arow[k] * row[k];
                        }
                    }
                    let a_old = tile_codes[code_off + j];
                    let a_new = soft_threshold(corr + a_old, lambda);
                    let delta = a_new - a_old;
                    if delta != 0.0 {
                        for r in 0..side {
                            let row = &mut buffer[base + r * bw..base + r * bw + side];
                            let arow = &atom[r * side..(r + 1) * side];
                            for k in 0..side {
                                row[k] -= delta * arow[k];
                            }
                        }
                        tile_codes[code_off + j] = a_new;
                        max_delta = max_delta.max(delta.abs());
                    }
                }
            } else {
                for j in 0..c {
                    let atom = dict.atom(j);
                    let col_norm_sq = wmap.folded_column_norm_sq(atom, &mut fold_scratch);
                    let mut corr = 0.0;
                    for (k, &t) in wmap.targets.iter().enumerate() {
                        corr += atom[k] * buffer[t];
                    }
                    let a_old = tile_codes[code_off + j];
                    let a_new = if col_norm_sq < 1e-12 {
                        0.0
                    } else {
                        soft_threshold(corr + col_norm_sq * a_old, lambda) / col_norm_sq
                    };
                    let delta = a_new - a_old;
                    if delta != 0.0 {
                        for (k, &t) in wmap.targets.iter().enumerate() {
                            buffer[t] -= delta * atom[k];
                        }
                        tile_codes[code_off + j] = a_new;
                        max_delta = max_delta.max(delta.abs());
                    }
                }
            }
        }
    }

    TileResult {
        halo: (hx0, hy0, hx1, hy1),
        buffer,
        rect: (x0, y0, x1, y1),
        codes: tile_codes,
        max_delta,
    }
}

fn objective(residual: &[f64], codes: &[f64], lambda: f64) -> f64 {
    let data: f64 = residual.iter().map(|v| v * v).sum();
    let penalty: f64 = codes.iter().map(|v| v.abs()).sum();
    0.5 * data + lambda * penalty
}

/// Superpose every pixel's coded window back into image geometry.
pub fn reconstruct(maps: &FeatureMaps, dict: &LocalDictionary) -> Result<Grid> {
    if maps.channels != dict.atom_count() {
        return Err(Error::invalid_argument(format!(
            "maps carry {} channels but dictionary has {} atoms",
            maps.channels,
            dict.atom_count()
        )));
    }
    if maps.width == 0 || maps.height == 0 {
        return Err(Error::invalid_argument("empty feature maps"));
    }
    let side = dict.filter_side();
    let mut out = Grid::zeros(maps.width, maps.height);
    let (w, h) = (maps.width, maps.height);
    for y in 0..h {
        for x in 0..w {
            let code = maps.code(y * w + x);
            for (j, &a) in code.iter().enumerate() {
                if a != 0.0 {
                    stamp_add(out.values_mut(), w, h, x, y, dict.atom(j), side, a);
                }
            }
        }
    }
    Ok(out)
}

/// Largest violation of the stationarity certificate for `maps` as a
/// solution of the encoding problem at penalty `lambda`: zero codes must
/// have window correlation within `lambda`, active codes must match
/// `lambda * sign` exactly.
pub fn kkt_violation(
    image: &Grid,
    dict: &LocalDictionary,
    maps: &FeatureMaps,
    lambda: f64,
) -> Result<f64> {
    if image.width() != maps.width || image.height() != maps.height {
        return Err(Error::invalid_argument("image and maps geometry differ"));
    }
    let recon = reconstruct(maps, dict)?;
    let (w, h) = (image.width(), image.height());
    let residual: Vec<f64> = image
        .values()
        .iter()
        .zip(recon.values())
        .map(|(x, r)| x - r)
        .collect();
    let side = dict.filter_side();
    let mut wmap = WindowMap::new(side);
    let mut worst = 0.0f64;
    for y in 0..h {
        for x in 0..w {
            wmap.fill(w, h, 0, 0, w, x, y);
            let code = maps.code(y * w + x);
            for j in 0..dict.atom_count() {
                let atom = dict.atom(j);
                let mut corr = 0.0;
                for (k, &t) in wmap.targets.iter().enumerate() {
                    corr += atom[k] * residual[t];
                }
                let a = code[j];
                let v = if a != 0.0 {
                    (corr - lambda * a.signum()).abs()
                } else {
                    (corr.abs() - lambda).max(0.0)
                };
                worst = worst.max(v);
            }
        }
    }
    Ok(worst)
}
