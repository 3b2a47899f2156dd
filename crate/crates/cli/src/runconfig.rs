//! Plain key=value run configuration. Every key has a default, so an empty
//! or absent file is valid; unknown or repeated keys are rejected. Keys and
//! defaults:
//!
//! ```text
//! layer_count          = 4
//! filter_sides         = 17,29,29,29
//! atom_counts          = 32,32,32,32
//! compressed_channels  = 16,16,16,16
//! context_radii        = 2,4,8
//! samples_per_layer    = 50000
//! threshold            = 0.5
//! color_mode           = luminance        (or per_channel)
//! seed                 = 42
//! output_dir           = .
//! sparse.lambda        = 0.15
//! sparse.max_inner_iters = 60
//! sparse.tol           = 1e-5
//! sparse.sparsity_ceiling = 0.25
//! sparse.dict_epochs   = 20
//! sparse.patches_per_epoch = 2048
//! sparse.step_size     = 1.0
//! ensemble.tree_count  = 30
//! ensemble.xi          = 1.0
//! ensemble.zeta        = 1e-3
//! ensemble.max_depth   = 6
//! ensemble.subsample_ratio = 0.5
//! ensemble.min_samples_leaf = 8
//! ensemble.mode        = additive         (or averaged)
//! ```

use std::collections::HashSet;
use std::fs;
use std::path::{Path, PathBuf};

use scd2te::pipeline::{compass_offsets, ColorMode, ModelConfig};
use scd2te::{Error, Result};

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub output_dir: PathBuf,
    /// True when the file set `seed` explicitly; the --seed flag still wins.
    pub seed_from_file: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            output_dir: PathBuf::from("."),
            seed_from_file: false,
        }
    }
}

pub fn load_runconfig(path: &Path) -> Result<RunConfig> {
    let text = fs::read_to_string(path)?;
    parse_runconfig(&text)
}

pub fn parse_runconfig(text: &str) -> Result<RunConfig> {
    let mut rc = RunConfig::default();
    let mut seen = HashSet::new();
    for (number, raw) in text.lines().enumerate() {
        let line = raw.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (key, value) = line.split_once('=').ok_or_else(|| {
            Error::invalid_argument(format!("config line {}: expected key=value", number + 1))
        })?;
        let key = key.trim();
        let value = value.trim();
        if !seen.insert(key.to_string()) {
            return Err(Error::invalid_argument(format!(
                "config line {}: key '{key}' repeated",
                number + 1
            )));
        }
        apply(&mut rc, key, value).map_err(|e| {
            Error::invalid_argument(format!("config line {}: {e}", number + 1))
        })?;
    }
    Ok(rc)
}

fn apply(rc: &mut RunConfig, key: &str, value: &str) -> Result<()> {
    let m = &mut rc.model;
    match key {
        "layer_count" => m.layer_count = int(key, value)?,
        "filter_sides" => m.filter_sides = int_list(key, value)?,
        "atom_counts" => m.atom_counts = int_list(key, value)?,
        "compressed_channels" => m.compressed_channels = int_list(key, value)?,
        "context_radii" => {
            let radii: Vec<i32> = value
                .split(',')
                .map(|v| parse_scalar(key, v.trim()))
                .collect::<Result<_>>()?;
            m.context_offsets = compass_offsets(&radii);
        }
        "samples_per_layer" => m.samples_per_layer = int(key, value)?,
        "threshold" => m.threshold = float(key, value)?,
        "color_mode" => m.color_mode = ColorMode::from_name(value)?,
        "seed" => {
            m.seed = parse_scalar(key, value)?;
            rc.seed_from_file = true;
        }
        "output_dir" => rc.output_dir = PathBuf::from(value),

        "sparse.lambda" => m.sparse.lambda = float(key, value)?,
        "sparse.max_inner_iters" => m.sparse.max_inner_iters = int(key, value)?,
        "sparse.tol" => m.sparse.tol = float(key, value)?,
        "sparse.sparsity_ceiling" => m.sparse.sparsity_ceiling = float(key, value)?,
        "sparse.dict_epochs" => m.sparse.dict_epochs = int(key, value)?,
        "sparse.patches_per_epoch" => m.sparse.patches_per_epoch = int(key, value)?,
        "sparse.step_size" => m.sparse.step_size = float(key, value)?,

        "ensemble.tree_count" => m.ensemble.tree_count = int(key, value)?,
        "ensemble.xi" => m.ensemble.xi = float(key, value)?,
        "ensemble.zeta" => m.ensemble.zeta = float(key, value)?,
        "ensemble.max_depth" => m.ensemble.max_depth = int(key, value)?,
        "ensemble.subsample_ratio" => m.ensemble.subsample_ratio = float(key, value)?,
        "ensemble.min_samples_leaf" => m.ensemble.min_samples_leaf = int(key, value)?,
        "ensemble.mode" => m.ensemble.mode = scd2te::boosting::VoteMode::from_name(value)?,

        other => {
            return Err(Error::invalid_argument(format!("unknown key '{other}'")));
        }
    }
    Ok(())
}

fn parse_scalar<T: std::str::FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::invalid_argument(format!("cannot parse '{value}' for {key}")))
}

fn int(key: &str, value: &str) -> Result<usize> {
    parse_scalar(key, value)
}

fn float(key: &str, value: &str) -> Result<f64> {
    parse_scalar(key, value)
}

fn int_list(key: &str, value: &str) -> Result<Vec<usize>> {
    value
        .split(',')
        .map(|v| parse_scalar(key, v.trim()))
        .collect()
}
