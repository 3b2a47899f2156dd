use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::tree::{fit_tree, DecisionTree};
use super::{EnsembleConfig, SampleSet, VoteMode};
use crate::error::{Error, Result};
use crate::util::{derive_seed, seed_tags};

/// Boosted tree ensemble: `base` plus weighted tree votes.
#[derive(Debug, Clone, PartialEq)]
pub struct TreeEnsemble {
    pub base: f64,
    pub trees: Vec<DecisionTree>,
    pub mode: VoteMode,
}

impl TreeEnsemble {
    /// Per-tree vote weight implied by the mode.
    pub fn vote_weight(&self) -> f64 {
        match self.mode {
            VoteMode::Additive => 1.0,
            VoteMode::Averaged => {
                if self.trees.is_empty() {
                    0.0
                } else {
                    1.0 / self.trees.len() as f64
                }
            }
        }
    }

    pub fn predict_row(&self, row: &[f64]) -> Result<f64> {
        if let Some(max_feature) = self.max_feature_index() {
            if max_feature >= row.len() {
                return Err(Error::invalid_argument(format!(
                    "row has {} features but the ensemble splits on feature {max_feature}",
                    row.len()
                )));
            }
        }
        Ok(self.predict_row_unchecked(row))
    }

    #[inline]
    pub(crate) fn predict_row_unchecked(&self, row: &[f64]) -> f64 {
        let w = self.vote_weight();
        let mut score = self.base;
        for tree in &self.trees {
            score += w * tree.predict_row(row);
        }
        score
    }

    /// Predict every row of `samples` (base_scores are ignored).
    pub fn predict(&self, samples: &SampleSet) -> Result<Vec<f64>> {
        if let Some(max_feature) = self.max_feature_index() {
            if max_feature >= samples.width() {
                return Err(Error::invalid_argument(format!(
                    "samples have width {} but the ensemble splits on feature {max_feature}",
                    samples.width()
                )));
            }
        }
        Ok((0..samples.len())
            .map(|i| self.predict_row_unchecked(samples.row(i)))
            .collect())
    }

    pub fn max_feature_index(&self) -> Option<usize> {
        self.trees.iter().filter_map(|t| t.max_feature_index()).max()
    }

    pub fn tree_count(&self) -> usize {
        self.trees.len()
    }
}

/// Fit result with the running training scores and loss trace retained.
#[derive(Debug, Clone)]
pub struct FitDetail {
    pub ensemble: TreeEnsemble,
    /// Final running score of every training row (all trees at full weight).
    pub training_scores: Vec<f64>,
    /// Sum of squared residuals after initialization and after each tree.
    pub sse_trace: Vec<f64>,
}

pub fn fit_ensemble(samples: &SampleSet, cfg: &EnsembleConfig) -> Result<TreeEnsemble> {
    fit_ensemble_detailed(samples, cfg).map(|d| d.ensemble)
}

/// Stagewise fit: each tree regresses the residuals of the running scores on
/// a seeded row subsample, then updates the running scores of all rows.
pub fn fit_ensemble_detailed(samples: &SampleSet, cfg: &EnsembleConfig) -> Result<FitDetail> {
    cfg.validate()?;
    let t = samples.len();
    if t == 0 {
        return Err(Error::invalid_argument("cannot fit on an empty sample set"));
    }

    // Constant initialization: the mean residual against the incoming scores.
    let base = (0..t).map(|i| samples.residual(i)).sum::<f64>() / t as f64;
    let mut scores: Vec<f64> = (0..t).map(|i| samples.base_score(i) + base).collect();

    let mut working = samples.clone();
    let sse = |scores: &[f64]| -> f64 {
        scores
            .iter()
            .enumerate()
            .map(|(i, s)| {
                let r = samples.target(i) - s;
                r * r
            })
            .sum()
    };

    let mut sse_trace = Vec::with_capacity(cfg.tree_count + 1);
    sse_trace.push(sse(&scores));

    let draw = ((cfg.subsample_ratio * t as f64).ceil() as usize).clamp(1, t);
    let mut trees = Vec::with_capacity(cfg.tree_count);
    for m in 0..cfg.tree_count {
        working.set_base_scores(&scores)?;
        let rows = subsample_rows(t, draw, derive_seed(cfg.seed, seed_tags::ENSEMBLE, m as u64));
        let tree = fit_tree(&working, rows, cfg)?;
        for (i, s) in scores.iter_mut().enumerate() {
            *s += tree.predict_row(samples.row(i));
        }
        sse_trace.push(sse(&scores));
        trees.push(tree);
    }

    Ok(FitDetail {
        ensemble: TreeEnsemble {
            base,
            trees,
            mode: cfg.mode,
        },
        training_scores: scores,
        sse_trace,
    })
}

/// Draw `take` distinct row indices, returned in ascending order.
fn subsample_rows(t: usize, take: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut indices: Vec<usize> = (0..t).collect();
    for i in 0..take {
        let j = rng.gen_range(i..t);
        indices.swap(i, j);
    }
    indices.truncate(take);
    indices.sort_unstable();
    indices
}
