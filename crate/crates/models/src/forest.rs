//! Random forest of Gini-split decision trees with bootstrap sampling and
//! soft (probability-averaged) voting.

use crate::ModelError;
use nalgebra::DVector;
use rand::seq::index::sample;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    pub max_depth: usize,
    pub min_samples_split: usize,
    /// Features tried per split; `None` means `sqrt(feature_dim)`.
    pub mtry: Option<usize>,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self { n_trees: 100, max_depth: 16, min_samples_split: 2, mtry: None, seed: 0 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub enum Node {
    Split { feature: usize, threshold: f64, left: usize, right: usize },
    /// Class histogram of the bootstrap rows that reached this leaf.
    Leaf { counts: Vec<u32> },
}

/// Nodes are stored in creation order; children always have larger indices
/// than their parent.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf_for(&self, x: &[f64]) -> &[u32] {
        let mut i = 0;
        loop {
            match &self.nodes[i] {
                Node::Split { feature, threshold, left, right } => {
                    i = if x[*feature] <= *threshold { *left } else { *right };
                }
                Node::Leaf { counts } => return counts,
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn go(nodes: &[Node], i: usize) -> usize {
            match &nodes[i] {
                Node::Split { left, right, .. } => 1 + go(nodes, *left).max(go(nodes, *right)),
                Node::Leaf { .. } => 0,
            }
        }
        go(&self.nodes, 0)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForestModel {
    pub trees: Vec<Tree>,
    pub feature_dim: usize,
    pub n_classes: usize,
}

impl ForestModel {
    pub fn predict(&self, x: &[f64]) -> Result<DVector<f64>, ModelError> {
        if x.len() != self.feature_dim {
            return Err(ModelError::Shape(format!("forest expects {} features, got {}", self.feature_dim, x.len())));
        }
        let mut p = DVector::zeros(self.n_classes);
        for tree in &self.trees {
            let counts = tree.leaf_for(x);
            let n: u32 = counts.iter().sum();
            for (k, &c) in counts.iter().enumerate() {
                p[k] += c as f64 / n as f64;
            }
        }
        Ok(p / self.trees.len() as f64)
    }
}

struct Builder<'a> {
    x: &'a [Vec<f64>],
    y: &'a [usize],
    n_classes: usize,
    mtry: usize,
    cfg: &'a ForestConfig,
    nodes: Vec<Node>,
}

fn gini(counts: &[u32], n: u32) -> f64 {
    if n == 0 {
        return 0.0;
    }
    let n = n as f64;
    1.0 - counts.iter().map(|&c| (c as f64 / n).powi(2)).sum::<f64>()
}

impl Builder<'_> {
    fn histogram(&self, rows: &[usize]) -> Vec<u32> {
        let mut h = vec![0u32; self.n_classes];
        rows.iter().for_each(|&r| h[self.y[r]] += 1);
        h
    }

    /// Best (feature, threshold, weighted child impurity) over `mtry` random
    /// features.
    fn best_split(&self, rows: &[usize], rng: &mut ChaCha8Rng) -> Option<(usize, f64, f64)> {
        let dim = self.x[0].len();
        let total = self.histogram(rows);
        let n = rows.len() as u32;
        let mut best: Option<(usize, f64, f64)> = None;
        let mut sorted: Vec<(f64, usize)> = Vec::with_capacity(rows.len());
        for feature in sample(rng, dim, self.mtry.min(dim)).into_iter() {
            sorted.clear();
            sorted.extend(rows.iter().map(|&r| (self.x[r][feature], self.y[r])));
            sorted.sort_by(|a, b| a.0.total_cmp(&b.0));
            let mut left = vec![0u32; self.n_classes];
            for i in 0..sorted.len() - 1 {
                left[sorted[i].1] += 1;
                if sorted[i].0 == sorted[i + 1].0 {
                    continue;
                }
                let nl = i as u32 + 1;
                let right: Vec<u32> = total.iter().zip(&left).map(|(t, l)| t - l).collect();
                let score = (nl as f64 * gini(&left, nl) + (n - nl) as f64 * gini(&right, n - nl)) / n as f64;
                if best.map_or(true, |b| score < b.2) {
                    best = Some((feature, 0.5 * (sorted[i].0 + sorted[i + 1].0), score));
                }
            }
        }
        best
    }

    fn grow(&mut self, rows: Vec<usize>, depth: usize, rng: &mut ChaCha8Rng) -> usize {
        let id = self.nodes.len();
        let counts = self.histogram(&rows);
        let pure = counts.iter().filter(|&&c| c > 0).count() <= 1;
        self.nodes.push(Node::Leaf { counts: counts.clone() });
        if pure || depth >= self.cfg.max_depth || rows.len() < self.cfg.min_samples_split.max(2) {
            return id;
        }
        let parent = gini(&counts, rows.len() as u32);
        let Some((feature, threshold, score)) = self.best_split(&rows, rng) else {
            return id;
        };
        if score >= parent {
            return id;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| self.x[i][feature] <= threshold);
        let left = self.grow(l, depth + 1, rng);
        let right = self.grow(r, depth + 1, rng);
        self.nodes[id] = Node::Split { feature, threshold, left, right };
        id
    }
}

pub fn train_forest(features: &[Vec<f64>], labels: &[usize], n_classes: usize, cfg: &ForestConfig) -> Result<ForestModel, ModelError> {
    let dim = features.first().ok_or(ModelError::Empty)?.len();
    if features.len() != labels.len() {
        return Err(ModelError::Shape(format!("{} rows but {} labels", features.len(), labels.len())));
    }
    if dim == 0 {
        return Err(ModelError::Shape("zero-length feature vectors".into()));
    }
    if let Some(row) = features.iter().find(|r| r.len() != dim) {
        return Err(ModelError::Shape(format!("feature row of length {} (expected {dim})", row.len())));
    }
    if let Some(&label) = labels.iter().find(|&&l| l >= n_classes) {
        return Err(ModelError::Label { label, n_classes });
    }
    if cfg.n_trees == 0 {
        return Err(ModelError::Config("n_trees must be positive".into()));
    }
    let mtry = cfg.mtry.unwrap_or_else(|| (dim as f64).sqrt().round() as usize).clamp(1, dim);
    let n = features.len();
    let trees = (0..cfg.n_trees)
        .map(|t| {
            let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_mul(1_000_003).wrapping_add(t as u64));
            let rows: Vec<usize> = (0..n).map(|_| rng.gen_range(0..n)).collect();
            let mut b = Builder { x: features, y: labels, n_classes, mtry, cfg, nodes: Vec::new() };
            b.grow(rows, 0, &mut rng);
            Tree { nodes: b.nodes }
        })
        .collect();
    Ok(ForestModel { trees, feature_dim: dim, n_classes })
}
