//! Regression-tree boosting on squared loss with unit per-sample curvature.
//!
//! Residual and curvature sums are kept per node; leaf responses and split
//! scores follow the closed forms `G / (H + xi/2)` and
//! `-G^2 / (H + xi/2)`, with a flat charge `zeta` per split.

mod ensemble;
mod tree;

pub use ensemble::{fit_ensemble, fit_ensemble_detailed, FitDetail, TreeEnsemble};
pub use tree::{find_best_split, fit_tree, DecisionTree, SplitCandidate, TreeNode};

use crate::error::{Error, Result};

/// Rows of features with regression targets and running per-row scores.
#[derive(Debug, Clone, PartialEq)]
pub struct SampleSet {
    features: Vec<f64>,
    width: usize,
    targets: Vec<f64>,
    base_scores: Vec<f64>,
}

impl SampleSet {
    pub fn new(
        features: Vec<f64>,
        width: usize,
        targets: Vec<f64>,
        base_scores: Vec<f64>,
    ) -> Result<Self> {
        if width == 0 {
            return Err(Error::invalid_argument("feature width must be at least 1"));
        }
        if features.len() != targets.len() * width {
            return Err(Error::invalid_argument(format!(
                "{} feature values do not form {} rows of width {width}",
                features.len(),
                targets.len()
            )));
        }
        if base_scores.len() != targets.len() {
            return Err(Error::invalid_argument(
                "base_scores length does not match targets",
            ));
        }
        if !features.iter().all(|v| v.is_finite())
            || !targets.iter().all(|v| v.is_finite())
            || !base_scores.iter().all(|v| v.is_finite())
        {
            return Err(Error::invalid_input("sample set contains non-finite values"));
        }
        Ok(SampleSet {
            features,
            width,
            targets,
            base_scores,
        })
    }

    pub fn from_rows(rows: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let width = rows.first().map_or(0, Vec::len);
        let mut flat = Vec::with_capacity(rows.len() * width);
        for r in rows {
            if r.len() != width {
                return Err(Error::invalid_argument("ragged feature rows"));
            }
            flat.extend_from_slice(r);
        }
        let base = vec![0.0; targets.len()];
        SampleSet::new(flat, width, targets, base)
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    #[inline]
    pub fn width(&self) -> usize {
        self.width
    }

    #[inline]
    pub fn row(&self, i: usize) -> &[f64] {
        &self.features[i * self.width..(i + 1) * self.width]
    }

    #[inline]
    pub fn feature(&self, i: usize, j: usize) -> f64 {
        self.features[i * self.width + j]
    }

    #[inline]
    pub fn target(&self, i: usize) -> f64 {
        self.targets[i]
    }

    #[inline]
    pub fn base_score(&self, i: usize) -> f64 {
        self.base_scores[i]
    }

    /// Regression residual of row `i` against the running score.
    #[inline]
    pub fn residual(&self, i: usize) -> f64 {
        self.targets[i] - self.base_scores[i]
    }

    pub fn set_base_scores(&mut self, scores: &[f64]) -> Result<()> {
        if scores.len() != self.targets.len() {
            return Err(Error::invalid_argument(
                "base_scores length does not match targets",
            ));
        }
        self.base_scores.copy_from_slice(scores);
        Ok(())
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn base_scores(&self) -> &[f64] {
        &self.base_scores
    }
}

/// How tree votes combine at prediction time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum VoteMode {
    /// Every tree contributes its full response.
    Additive,
    /// Tree responses are averaged.
    Averaged,
}

impl VoteMode {
    pub fn name(self) -> &'static str {
        match self {
            VoteMode::Additive => "additive",
            VoteMode::Averaged => "averaged",
        }
    }

    pub fn from_name(name: &str) -> Result<Self> {
        match name {
            "additive" => Ok(VoteMode::Additive),
            "averaged" => Ok(VoteMode::Averaged),
            other => Err(Error::invalid_argument(format!(
                "unknown vote mode '{other}' (expected additive or averaged)"
            ))),
        }
    }
}

/// Boosting hyper-parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleConfig {
    pub tree_count: usize,
    /// Response shrinkage; appears as `xi/2` next to every curvature sum.
    pub xi: f64,
    /// Flat loss charge per split.
    pub zeta: f64,
    /// Maximum leaf depth; zero keeps every tree a single leaf.
    pub max_depth: usize,
    /// Fraction of rows drawn (without replacement) per tree.
    pub subsample_ratio: f64,
    pub min_samples_leaf: usize,
    pub mode: VoteMode,
    pub seed: u64,
}

impl Default for EnsembleConfig {
    fn default() -> Self {
        EnsembleConfig {
            tree_count: 30,
            xi: 1.0,
            zeta: 1e-3,
            max_depth: 6,
            subsample_ratio: 0.5,
            min_samples_leaf: 8,
            mode: VoteMode::Additive,
            seed: 42,
        }
    }
}

impl EnsembleConfig {
    pub fn validate(&self) -> Result<()> {
        if self.tree_count == 0 {
            return Err(Error::invalid_argument("tree_count must be at least 1"));
        }
        if !(self.xi.is_finite() && self.xi >= 0.0) {
            return Err(Error::invalid_argument("xi must be non-negative and finite"));
        }
        if !(self.zeta.is_finite() && self.zeta >= 0.0) {
            return Err(Error::invalid_argument(
                "zeta must be non-negative and finite",
            ));
        }
        if !(self.subsample_ratio > 0.0 && self.subsample_ratio <= 1.0) {
            return Err(Error::invalid_argument(
                "subsample_ratio must lie in (0, 1]",
            ));
        }
        if self.min_samples_leaf == 0 {
            return Err(Error::invalid_argument(
                "min_samples_leaf must be at least 1",
            ));
        }
        Ok(())
    }
}

/// Build bookkeeping for one node: which rows it holds, their residual and
/// curvature sums, and its depth.
#[derive(Debug, Clone)]
pub struct NodeBuildState {
    pub instances: Vec<usize>,
    pub grad_sum: f64,
    pub hess_sum: f64,
    pub depth: usize,
}

impl NodeBuildState {
    pub fn from_instances(samples: &SampleSet, instances: Vec<usize>, depth: usize) -> Result<Self> {
        let mut grad_sum = 0.0;
        for &i in &instances {
            if i >= samples.len() {
                return Err(Error::invalid_argument(format!(
                    "instance {i} out of range for {} rows",
                    samples.len()
                )));
            }
            grad_sum += samples.residual(i);
        }
        let hess_sum = instances.len() as f64;
        Ok(NodeBuildState {
            instances,
            grad_sum,
            hess_sum,
            depth,
        })
    }
}

/// Optimal constant response for a node: `G / (H + xi/2)`.
pub fn leaf_weight(grad_sum: f64, hess_sum: f64, xi: f64) -> Result<f64> {
    if hess_sum <= 0.0 {
        return Err(Error::invalid_argument(
            "leaf weight requires a positive curvature sum",
        ));
    }
    Ok(grad_sum / (hess_sum + 0.5 * xi))
}

/// Node contribution to the training loss at its optimal response:
/// `-G^2 / (H + xi/2)`.
pub fn node_loss(grad_sum: f64, hess_sum: f64, xi: f64) -> Result<f64> {
    if hess_sum <= 0.0 {
        return Err(Error::invalid_argument(
            "node loss requires a positive curvature sum",
        ));
    }
    Ok(-(grad_sum * grad_sum) / (hess_sum + 0.5 * xi))
}

#[inline]
pub(crate) fn gain_from_sums(
    gl: f64,
    hl: f64,
    gr: f64,
    hr: f64,
    gp: f64,
    hp: f64,
    xi: f64,
    zeta: f64,
) -> f64 {
    let half_xi = 0.5 * xi;
    gl * gl / (hl + half_xi) + gr * gr / (hr + half_xi) - gp * gp / (hp + half_xi) - zeta
}

/// Loss reduction of splitting `parent` into `left` and `right`, minus the
/// per-split charge `zeta`. The two children must partition the parent.
pub fn split_gain(
    parent: &NodeBuildState,
    left: &NodeBuildState,
    right: &NodeBuildState,
    xi: f64,
    zeta: f64,
) -> Result<f64> {
    if left.instances.is_empty() || right.instances.is_empty() {
        return Err(Error::invalid_argument("split sides must be nonempty"));
    }
    if left.instances.len() + right.instances.len() != parent.instances.len() {
        return Err(Error::invalid_argument(
            "children do not partition the parent node",
        ));
    }
    let mut merged: Vec<usize> = left
        .instances
        .iter()
        .chain(right.instances.iter())
        .copied()
        .collect();
    merged.sort_unstable();
    let mut parent_sorted = parent.instances.clone();
    parent_sorted.sort_unstable();
    if merged != parent_sorted {
        return Err(Error::invalid_argument(
            "children do not partition the parent node",
        ));
    }
    Ok(gain_from_sums(
        left.grad_sum,
        left.hess_sum,
        right.grad_sum,
        right.hess_sum,
        parent.grad_sum,
        parent.hess_sum,
        xi,
        zeta,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn state_of(samples: &SampleSet, idx: Vec<usize>) -> NodeBuildState {
        NodeBuildState::from_instances(samples, idx, 0).unwrap()
    }

    #[test]
    fn leaf_weight_matches_closed_form_examples() {
        assert_eq!(leaf_weight(2.0 + 4.0, 2.0, 0.0).unwrap(), 3.0);
        assert_eq!(leaf_weight(1.0, 1.0, 2.0).unwrap(), 0.5);
        assert!(leaf_weight(1.0, 0.0, 0.0).is_err());
    }

    #[test]
    fn leaf_weight_is_scan_optimal() {
        // A dense scan around the closed form must never find a lower value
        // of the per-leaf quadratic -2 w G + w^2 (H + xi/2).
        let mut rng = ChaCha8Rng::seed_from_u64(31);
        for _ in 0..50 {
            let n = rng.gen_range(1..20);
            let residuals: Vec<f64> = (0..n).map(|_| rng.gen_range(-3.0..3.0)).collect();
            let xi: f64 = rng.gen_range(0.0..4.0);
            let g: f64 = residuals.iter().sum();
            let h = n as f64;
            let w_hat = leaf_weight(g, h, xi).unwrap();
            let loss = |w: f64| -2.0 * w * g + w * w * (h + 0.5 * xi);
            let at_hat = loss(w_hat);
            let mut w = w_hat - 1.0;
            while w <= w_hat + 1.0 {
                assert!(loss(w) >= at_hat - 1e-8);
                w += 1e-4;
            }
        }
    }

    #[test]
    fn node_loss_examples_and_consistency() {
        assert_eq!(node_loss(2.0, 2.0, 0.0).unwrap(), -2.0);
        let mut rng = ChaCha8Rng::seed_from_u64(37);
        for _ in 0..100 {
            let n = rng.gen_range(1..30);
            let residuals: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let xi: f64 = rng.gen_range(0.0..3.0);
            let g: f64 = residuals.iter().sum();
            let h = n as f64;
            let w = leaf_weight(g, h, xi).unwrap();
            let quad = -2.0 * w * g + w * w * (h + 0.5 * xi);
            let loss = node_loss(g, h, xi).unwrap();
            assert!((loss - quad).abs() <= 1e-9 * loss.abs().max(1.0));
        }
    }

    #[test]
    fn sign_split_gain_is_four() {
        let samples = SampleSet::from_rows(
            &[vec![0.0], vec![1.0], vec![2.0], vec![3.0]],
            vec![-1.0, -1.0, 1.0, 1.0],
        )
        .unwrap();
        let parent = state_of(&samples, vec![0, 1, 2, 3]);
        let left = state_of(&samples, vec![0, 1]);
        let right = state_of(&samples, vec![2, 3]);
        assert_eq!(split_gain(&parent, &left, &right, 0.0, 0.0).unwrap(), 4.0);
    }

    #[test]
    fn gain_equals_loss_difference() {
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        for _ in 0..100 {
            let n = rng.gen_range(2..40);
            let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-2.0..2.0)).collect();
            let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
            let samples = SampleSet::from_rows(&rows, targets).unwrap();
            let cut = rng.gen_range(1..n);
            let parent = state_of(&samples, (0..n).collect());
            let left = state_of(&samples, (0..cut).collect());
            let right = state_of(&samples, (cut..n).collect());
            let xi: f64 = rng.gen_range(0.0..2.0);
            let zeta: f64 = rng.gen_range(0.0..0.5);
            let gain = split_gain(&parent, &left, &right, xi, zeta).unwrap();
            let diff = node_loss(parent.grad_sum, parent.hess_sum, xi).unwrap()
                - node_loss(left.grad_sum, left.hess_sum, xi).unwrap()
                - node_loss(right.grad_sum, right.hess_sum, xi).unwrap()
                - zeta;
            assert!((gain - diff).abs() <= 1e-9 * gain.abs().max(1.0));
        }
    }

    #[test]
    fn non_partition_is_rejected() {
        let samples = SampleSet::from_rows(
            &[vec![0.0], vec![1.0], vec![2.0]],
            vec![1.0, 2.0, 3.0],
        )
        .unwrap();
        let parent = state_of(&samples, vec![0, 1, 2]);
        let left = state_of(&samples, vec![0]);
        let bad_right = state_of(&samples, vec![0, 2]);
        assert!(split_gain(&parent, &left, &bad_right, 0.0, 0.0).is_err());
        let empty = state_of(&samples, vec![]);
        let full = state_of(&samples, vec![0, 1, 2]);
        assert!(split_gain(&parent, &empty, &full, 0.0, 0.0).is_err());
    }

    #[test]
    fn node_state_sums_match_recomputation() {
        let mut rng = ChaCha8Rng::seed_from_u64(43);
        let n = 25;
        let rows: Vec<Vec<f64>> = (0..n).map(|_| vec![rng.gen_range(0.0..1.0)]).collect();
        let targets: Vec<f64> = (0..n).map(|_| rng.gen_range(-1.0..1.0)).collect();
        let mut samples = SampleSet::from_rows(&rows, targets).unwrap();
        let base: Vec<f64> = (0..n).map(|_| rng.gen_range(-0.5..0.5)).collect();
        samples.set_base_scores(&base).unwrap();
        let state = state_of(&samples, (0..n).collect());
        let g: f64 = (0..n).map(|i| samples.target(i) - samples.base_score(i)).sum();
        assert!((state.grad_sum - g).abs() <= 1e-9);
        assert_eq!(state.hess_sum, n as f64);
    }

    #[test]
    fn sample_set_validates_shape_and_values() {
        assert!(SampleSet::new(vec![1.0, 2.0], 2, vec![0.0], vec![0.0]).is_ok());
        assert!(SampleSet::new(vec![1.0, 2.0, 3.0], 2, vec![0.0], vec![0.0]).is_err());
        assert!(SampleSet::new(vec![f64::NAN, 2.0], 2, vec![0.0], vec![0.0]).is_err());
        assert!(SampleSet::new(vec![1.0], 1, vec![0.0], vec![]).is_err());
    }
}
