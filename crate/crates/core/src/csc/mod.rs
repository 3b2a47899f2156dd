//! Convolutional sparse coding over a local dictionary.
//!
//! The global banded dictionary is never materialized: every pixel owns a
//! small code vector, and reconstruction superposes `filter_side` sized
//! windows stamped at each pixel with mirror handling at the borders.

mod compress;
mod context;
mod dict;
mod encode;
mod patch;

pub use compress::{apply_compressor, fit_compressor, Compressor};
pub use context::build_context_features;
pub use dict::{learn_dictionary, DictionaryLearning};
pub use encode::{encode, encode_detailed, kkt_violation, reconstruct, EncodeOutcome};
pub use patch::extract_patch;

use crate::error::{Error, Result};

/// Filter bank shared by all pixels of one layer. Atoms are stored
/// contiguously, one `filter_side * filter_side` window each, unit norm.
#[derive(Debug, Clone, PartialEq)]
pub struct LocalDictionary {
    filter_side: usize,
    atom_count: usize,
    atoms: Vec<f64>,
}

impl LocalDictionary {
    pub const UNIT_NORM_TOL: f64 = 1e-9;

    pub fn new(filter_side: usize, atom_count: usize, atoms: Vec<f64>) -> Result<Self> {
        if filter_side == 0 || filter_side % 2 == 0 {
            return Err(Error::invalid_argument(format!(
                "filter side must be odd and positive, got {filter_side}"
            )));
        }
        let d = filter_side * filter_side;
        if atom_count == 0 || atoms.len() != atom_count * d {
            return Err(Error::invalid_argument(format!(
                "expected {atom_count} atoms of {d} samples, got {} values",
                atoms.len()
            )));
        }
        if !atoms.iter().all(|v| v.is_finite()) {
            return Err(Error::invalid_input("dictionary contains non-finite values"));
        }
        for j in 0..atom_count {
            let norm = atoms[j * d..(j + 1) * d]
                .iter()
                .map(|v| v * v)
                .sum::<f64>()
                .sqrt();
            if (norm - 1.0).abs() > Self::UNIT_NORM_TOL {
                return Err(Error::invalid_argument(format!(
                    "atom {j} has norm {norm}, expected 1 within {}",
                    Self::UNIT_NORM_TOL
                )));
            }
        }
        Ok(LocalDictionary {
            filter_side,
            atom_count,
            atoms,
        })
    }

    /// Normalize each window to unit norm, then build the dictionary.
    /// Windows with near-zero energy are rejected.
    pub fn from_unnormalized(filter_side: usize, atom_count: usize, mut atoms: Vec<f64>) -> Result<Self> {
        let d = filter_side * filter_side;
        if atoms.len() != atom_count * d {
            return Err(Error::invalid_argument(
                "atom buffer length does not match atom count and filter side",
            ));
        }
        for j in 0..atom_count {
            let col = &mut atoms[j * d..(j + 1) * d];
            let norm = col.iter().map(|v| v * v).sum::<f64>().sqrt();
            if !norm.is_finite() || norm < 1e-12 {
                return Err(Error::invalid_input(format!(
                    "atom {j} is degenerate (norm {norm})"
                )));
            }
            for v in col.iter_mut() {
                *v /= norm;
            }
        }
        LocalDictionary::new(filter_side, atom_count, atoms)
    }

    #[inline]
    pub fn filter_side(&self) -> usize {
        self.filter_side
    }

    #[inline]
    pub fn atom_count(&self) -> usize {
        self.atom_count
    }

    #[inline]
    pub fn patch_len(&self) -> usize {
        self.filter_side * self.filter_side
    }

    #[inline]
    pub fn atom(&self, j: usize) -> &[f64] {
        let d = self.patch_len();
        &self.atoms[j * d..(j + 1) * d]
    }

    #[inline]
    pub fn atoms_flat(&self) -> &[f64] {
        &self.atoms
    }
}

/// Per-pixel code vectors for one layer, pixel-major: the codes of pixel
/// `(x, y)` occupy `codes[(y*width + x)*channels ..][..channels]`.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMaps {
    pub width: usize,
    pub height: usize,
    pub channels: usize,
    pub layer_index: usize,
    pub codes: Vec<f64>,
}

impl FeatureMaps {
    pub fn zeros(width: usize, height: usize, channels: usize, layer_index: usize) -> Self {
        FeatureMaps {
            width,
            height,
            channels,
            layer_index,
            codes: vec![0.0; width * height * channels],
        }
    }

    #[inline]
    pub fn pixel_count(&self) -> usize {
        self.width * self.height
    }

    #[inline]
    pub fn code(&self, pixel: usize) -> &[f64] {
        &self.codes[pixel * self.channels..(pixel + 1) * self.channels]
    }

    #[inline]
    pub fn code_mut(&mut self, pixel: usize) -> &mut [f64] {
        &mut self.codes[pixel * self.channels..(pixel + 1) * self.channels]
    }

    #[inline]
    pub fn code_at(&self, x: usize, y: usize) -> &[f64] {
        self.code(y * self.width + x)
    }

    #[inline]
    pub fn code_at_mut(&mut self, x: usize, y: usize) -> &mut [f64] {
        self.code_mut(y * self.width + x)
    }

    /// Concatenate the channels of several same-geometry maps, in order.
    /// The result carries the layer index of the last part.
    pub fn concat(parts: &[&FeatureMaps]) -> Result<FeatureMaps> {
        let first = parts
            .first()
            .ok_or_else(|| Error::invalid_argument("cannot concatenate zero maps"))?;
        let channels: usize = parts.iter().map(|m| m.channels).sum();
        for m in parts {
            if m.width != first.width || m.height != first.height {
                return Err(Error::invalid_argument(format!(
                    "geometry mismatch: {}x{} vs {}x{}",
                    m.width, m.height, first.width, first.height
                )));
            }
        }
        let layer_index = parts.last().unwrap().layer_index;
        let mut out = FeatureMaps::zeros(first.width, first.height, channels, layer_index);
        for p in 0..first.pixel_count() {
            let dst = out.code_mut(p);
            let mut at = 0;
            for m in parts {
                dst[at..at + m.channels].copy_from_slice(m.code(p));
                at += m.channels;
            }
        }
        Ok(out)
    }

    pub fn nonzero_fraction(&self) -> f64 {
        if self.codes.is_empty() {
            return 0.0;
        }
        let nnz = self.codes.iter().filter(|v| **v != 0.0).count();
        nnz as f64 / self.codes.len() as f64
    }

    /// Extract channel `j` as a standalone grid.
    pub fn channel_plane(&self, j: usize) -> crate::grid::Grid {
        let mut g = crate::grid::Grid::zeros(self.width, self.height);
        for p in 0..self.pixel_count() {
            g.values_mut()[p] = self.codes[p * self.channels + j];
        }
        g
    }
}

/// Knobs for encoding and dictionary learning.
#[derive(Debug, Clone, PartialEq)]
pub struct SparseCodingConfig {
    /// L1 penalty weight on the codes.
    pub lambda: f64,
    /// Maximum coordinate-descent sweeps per encode.
    pub max_inner_iters: usize,
    /// Stop once the objective decrease per sweep falls below
    /// `tol * |objective|`.
    pub tol: f64,
    /// Upper bound on the fraction of nonzero code entries; the penalty is
    /// doubled and the solve repeated until the bound holds.
    pub sparsity_ceiling: f64,
    /// Alternation epochs for dictionary learning.
    pub dict_epochs: usize,
    /// Gradient sample size per epoch.
    pub patches_per_epoch: usize,
    /// Base gradient step; decays as 1/epoch.
    pub step_size: f64,
    pub seed: u64,
}

impl Default for SparseCodingConfig {
    fn default() -> Self {
        SparseCodingConfig {
            lambda: 0.15,
            max_inner_iters: 60,
            tol: 1e-5,
            sparsity_ceiling: 0.25,
            dict_epochs: 20,
            patches_per_epoch: 2048,
            step_size: 1.0,
            seed: 42,
        }
    }
}

impl SparseCodingConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda.is_finite() && self.lambda > 0.0) {
            return Err(Error::invalid_argument("lambda must be positive and finite"));
        }
        if self.max_inner_iters == 0 {
            return Err(Error::invalid_argument("max_inner_iters must be at least 1"));
        }
        if !(self.tol.is_finite() && self.tol >= 0.0) {
            return Err(Error::invalid_argument("tol must be non-negative and finite"));
        }
        if !(self.sparsity_ceiling > 0.0 && self.sparsity_ceiling <= 1.0) {
            return Err(Error::invalid_argument(
                "sparsity_ceiling must lie in (0, 1]",
            ));
        }
        if self.dict_epochs == 0 {
            return Err(Error::invalid_argument("dict_epochs must be at least 1"));
        }
        if self.patches_per_epoch == 0 {
            return Err(Error::invalid_argument(
                "patches_per_epoch must be at least 1",
            ));
        }
        if !(self.step_size.is_finite() && self.step_size > 0.0) {
            return Err(Error::invalid_argument(
                "step_size must be positive and finite",
            ));
        }
        Ok(())
    }
}
