use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rayon::prelude::*;

use super::{gain_from_sums, leaf_weight, EnsembleConfig, NodeBuildState, SampleSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub enum TreeNode {
    Branch {
        feature: u32,
        threshold: f64,
        left: u32,
        right: u32,
    },
    Leaf {
        response: f64,
    },
}

/// Binary regression tree; the root sits at index 0 and rows route left when
/// `row[feature] < threshold`.
#[derive(Debug, Clone, PartialEq)]
pub struct DecisionTree {
    nodes: Vec<TreeNode>,
}

impl DecisionTree {
    /// Rebuild from a node table, checking linkage: every node reachable
    /// exactly once from the root and leaf count = branch count + 1.
    pub fn from_nodes(nodes: Vec<TreeNode>) -> Result<Self> {
        if nodes.is_empty() {
            return Err(Error::invalid_argument("a tree needs at least one node"));
        }
        let mut visited = vec![false; nodes.len()];
        let mut stack = vec![0usize];
        let mut branches = 0usize;
        let mut leaves = 0usize;
        while let Some(i) = stack.pop() {
            if i >= nodes.len() || visited[i] {
                return Err(Error::invalid_argument("malformed tree linkage"));
            }
            visited[i] = true;
            match &nodes[i] {
                TreeNode::Branch {
                    threshold,
                    left,
                    right,
                    ..
                } => {
                    if !threshold.is_finite() {
                        return Err(Error::invalid_input("non-finite split threshold"));
                    }
                    branches += 1;
                    stack.push(*left as usize);
                    stack.push(*right as usize);
                }
                TreeNode::Leaf { response } => {
                    if !response.is_finite() {
                        return Err(Error::invalid_input("non-finite leaf response"));
                    }
                    leaves += 1;
                }
            }
        }
        if visited.iter().any(|v| !v) || leaves != branches + 1 {
            return Err(Error::invalid_argument("malformed tree linkage"));
        }
        Ok(DecisionTree { nodes })
    }

    #[inline]
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut i = 0usize;
        loop {
            match &self.nodes[i] {
                TreeNode::Branch {
                    feature,
                    threshold,
                    left,
                    right,
                } => {
                    i = if row[*feature as usize] < *threshold {
                        *left as usize
                    } else {
                        *right as usize
                    };
                }
                TreeNode::Leaf { response } => return *response,
            }
        }
    }

    pub fn nodes(&self) -> &[TreeNode] {
        &self.nodes
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    pub fn leaf_count(&self) -> usize {
        self.nodes
            .iter()
            .filter(|n| matches!(n, TreeNode::Leaf { .. }))
            .count()
    }

    /// Largest feature index referenced by any split, if the tree splits.
    pub fn max_feature_index(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                TreeNode::Branch { feature, .. } => Some(*feature as usize),
                TreeNode::Leaf { .. } => None,
            })
            .max()
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[TreeNode], i: usize) -> usize {
            match &nodes[i] {
                TreeNode::Leaf { .. } => 0,
                TreeNode::Branch { left, right, .. } => {
                    1 + walk(nodes, *left as usize).max(walk(nodes, *right as usize))
                }
            }
        }
        walk(&self.nodes, 0)
    }
}

/// Best split found for one node.
#[derive(Debug, Clone, PartialEq)]
pub struct SplitCandidate {
    pub feature: usize,
    pub threshold: f64,
    pub gain: f64,
}

/// Exact greedy search over all features and all midpoints between adjacent
/// distinct values. Ties prefer the lower feature index, then the lower
/// threshold. Returns `None` when no candidate has positive gain or the node
/// is too small to split.
pub fn find_best_split(
    samples: &SampleSet,
    node: &NodeBuildState,
    cfg: &EnsembleConfig,
) -> Option<SplitCandidate> {
    let n = node.instances.len();
    if n < 2 * cfg.min_samples_leaf {
        return None;
    }
    let per_feature: Vec<Option<(f64, f64)>> = (0..samples.width())
        .into_par_iter()
        .map(|feature| best_split_on_feature(samples, node, cfg, feature))
        .collect();
    let mut best: Option<SplitCandidate> = None;
    for (feature, cand) in per_feature.into_iter().enumerate() {
        if let Some((threshold, gain)) = cand {
            if best.as_ref().map_or(true, |b| gain > b.gain) {
                best = Some(SplitCandidate {
                    feature,
                    threshold,
                    gain,
                });
            }
        }
    }
    best.filter(|b| b.gain > 0.0)
}

fn best_split_on_feature(
    samples: &SampleSet,
    node: &NodeBuildState,
    cfg: &EnsembleConfig,
    feature: usize,
) -> Option<(f64, f64)> {
    let n = node.instances.len();
    // Sort by value with the row index as a deterministic tie key.
    let mut order: Vec<(f64, usize)> = node
        .instances
        .iter()
        .map(|&i| (samples.feature(i, feature), i))
        .collect();
    order.sort_unstable_by(|a, b| {
        a.0.partial_cmp(&b.0)
            .expect("finite features")
            .then_with(|| a.1.cmp(&b.1))
    });

    let mut best: Option<(f64, f64)> = None;
    let mut gl = 0.0f64;
    let msl = cfg.min_samples_leaf;
    for k in 0..n - 1 {
        gl += samples.residual(order[k].1);
        let (a, b) = (order[k].0, order[k + 1].0);
        if a == b {
            continue;
        }
        let left_count = k + 1;
        let right_count = n - left_count;
        if left_count < msl || right_count < msl {
            continue;
        }
        let threshold = 0.5 * (a + b);
        // Guard against midpoint rounding onto the lower value, which would
        // route it to the wrong side.
        if !(threshold > a) {
            continue;
        }
        let gain = gain_from_sums(
            gl,
            left_count as f64,
            node.grad_sum - gl,
            right_count as f64,
            node.grad_sum,
            node.hess_sum,
            cfg.xi,
            cfg.zeta,
        );
        if best.map_or(true, |(_, bg)| gain > bg) {
            best = Some((threshold, gain));
        }
    }
    best
}

struct FrontierEntry {
    gain: f64,
    seq: u64,
    node: usize,
    split: SplitCandidate,
    state: NodeBuildState,
}

impl PartialEq for FrontierEntry {
    fn eq(&self, other: &Self) -> bool {
        self.gain.total_cmp(&other.gain) == Ordering::Equal && self.seq == other.seq
    }
}

impl Eq for FrontierEntry {}

impl PartialOrd for FrontierEntry {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for FrontierEntry {
    fn cmp(&self, other: &Self) -> Ordering {
        // Max-heap on gain; earlier insertions win ties.
        self.gain
            .total_cmp(&other.gain)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// Grow a tree best-first: the frontier node with the highest split gain is
/// materialized next, until no node has positive gain or depth runs out.
pub fn fit_tree(samples: &SampleSet, instances: Vec<usize>, cfg: &EnsembleConfig) -> Result<DecisionTree> {
    cfg.validate()?;
    if instances.is_empty() {
        return Err(Error::invalid_argument("cannot fit a tree on zero rows"));
    }
    {
        let mut sorted = instances.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(Error::invalid_argument("duplicate instance index"));
        }
    }

    let root_state = NodeBuildState::from_instances(samples, instances, 0)?;
    let mut nodes = vec![TreeNode::Leaf {
        response: leaf_weight(root_state.grad_sum, root_state.hess_sum, cfg.xi)?,
    }];
    let mut heap: BinaryHeap<FrontierEntry> = BinaryHeap::new();
    let mut seq = 0u64;

    if root_state.depth < cfg.max_depth {
        if let Some(split) = find_best_split(samples, &root_state, cfg) {
            heap.push(FrontierEntry {
                gain: split.gain,
                seq,
                node: 0,
                split,
                state: root_state,
            });
            seq += 1;
        }
    }

    while let Some(entry) = heap.pop() {
        let FrontierEntry {
            node, split, state, ..
        } = entry;
        let mut left_rows = Vec::new();
        let mut right_rows = Vec::new();
        for &i in &state.instances {
            if samples.feature(i, split.feature) < split.threshold {
                left_rows.push(i);
            } else {
                right_rows.push(i);
            }
        }
        let left_state = NodeBuildState::from_instances(samples, left_rows, state.depth + 1)?;
        let right_state = NodeBuildState::from_instances(samples, right_rows, state.depth + 1)?;

        let left_idx = nodes.len();
        let right_idx = nodes.len() + 1;
        nodes.push(TreeNode::Leaf {
            response: leaf_weight(left_state.grad_sum, left_state.hess_sum, cfg.xi)?,
        });
        nodes.push(TreeNode::Leaf {
            response: leaf_weight(right_state.grad_sum, right_state.hess_sum, cfg.xi)?,
        });
        nodes[node] = TreeNode::Branch {
            feature: split.feature as u32,
            threshold: split.threshold,
            left: left_idx as u32,
            right: right_idx as u32,
        };

        for (child_idx, child_state) in [(left_idx, left_state), (right_idx, right_state)] {
            if child_state.depth < cfg.max_depth {
                if let Some(split) = find_best_split(samples, &child_state, cfg) {
                    heap.push(FrontierEntry {
                        gain: split.gain,
                        seq,
                        node: child_idx,
                        split,
                        state: child_state,
                    });
                    seq += 1;
                }
            }
        }
    }

    Ok(DecisionTree { nodes })
}
