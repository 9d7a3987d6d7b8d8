//! CART classification tree with weighted Gini impurity.
//!
//! Defaults follow the common library defaults: no depth limit, two samples
//! to split, every impure node is split as long as some feature takes two
//! distinct values (zero-gain splits included). Candidate thresholds are
//! midpoints between consecutive distinct values; ties in impurity go to the
//! lowest feature index, then the lowest threshold.

use ndarray::ArrayView2;
use serde::{Deserialize, Serialize};

use super::Predictor;
use crate::dataset::Dataset;
use crate::error::{Error, Result};

pub const TREE_FORMAT_VERSION: u32 = 1;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TreeConfig {
    /// Only `"gini"` is supported.
    pub criterion: String,
    pub min_samples_split: usize,
    pub max_depth: Option<usize>,
}

impl Default for TreeConfig {
    fn default() -> Self {
        Self {
            criterion: "gini".into(),
            min_samples_split: 2,
            max_depth: None,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Node {
    /// Rows with `x[feature] <= threshold` go left.
    Split {
        feature: usize,
        threshold: f64,
        left: usize,
        right: usize,
    },
    /// Weighted positive fraction of the training rows that reached it.
    Leaf { value: f64, samples: usize },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecisionTree {
    pub version: u32,
    pub n_features: usize,
    pub seed: u64,
    pub config: TreeConfig,
    /// Node 0 is the root.
    pub nodes: Vec<Node>,
}

struct Pending {
    node: usize,
    rows: Vec<usize>,
    depth: usize,
}

pub fn train_tree(ds: &Dataset, config: &TreeConfig, seed: u64) -> Result<DecisionTree> {
    if config.criterion != "gini" {
        return Err(Error::arg(format!(
            "unsupported split criterion `{}`",
            config.criterion
        )));
    }
    let labels = ds.labels().ok_or_else(|| Error::arg("tree training requires labels"))?;
    if ds.len() < 2 {
        return Err(Error::arg("tree training requires at least two samples"));
    }
    let x = ds.rows().view();
    let w = ds.weights();

    let mut nodes = vec![Node::Leaf { value: 0.0, samples: 0 }];
    let mut stack = vec![Pending {
        node: 0,
        rows: (0..ds.len()).collect(),
        depth: 0,
    }];

    while let Some(Pending { node, rows, depth }) = stack.pop() {
        let (pos, tot) = weighted_counts(&rows, labels, w);
        let pure = pos == 0.0 || pos == tot;
        let depth_ok = config.max_depth.is_none_or(|d| depth < d);
        let split = if !pure && depth_ok && rows.len() >= config.min_samples_split {
            best_split(x, labels, w, &rows)
        } else {
            None
        };
        match split {
            Some((feature, threshold)) => {
                let (l, r): (Vec<usize>, Vec<usize>) = rows.iter().partition(|&&i| x[[i, feature]] <= threshold);
                let left = nodes.len();
                let right = left + 1;
                nodes.push(Node::Leaf { value: 0.0, samples: 0 });
                nodes.push(Node::Leaf { value: 0.0, samples: 0 });
                nodes[node] = Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                };
                // right first so the left subtree is expanded first
                stack.push(Pending {
                    node: right,
                    rows: r,
                    depth: depth + 1,
                });
                stack.push(Pending {
                    node: left,
                    rows: l,
                    depth: depth + 1,
                });
            }
            None => {
                let value = if tot > 0.0 {
                    pos / tot
                } else {
                    // all-zero weights: fall back to the plain fraction
                    rows.iter().filter(|&&i| labels[i]).count() as f64 / rows.len() as f64
                };
                nodes[node] = Node::Leaf {
                    value,
                    samples: rows.len(),
                };
            }
        }
    }

    Ok(DecisionTree {
        version: TREE_FORMAT_VERSION,
        n_features: ds.n_features(),
        seed,
        config: config.clone(),
        nodes,
    })
}

fn weighted_counts(rows: &[usize], labels: &[bool], w: &[f64]) -> (f64, f64) {
    rows.iter().fold((0.0, 0.0), |(p, t), &i| {
        (if labels[i] { p + w[i] } else { p }, t + w[i])
    })
}

/// `total * gini`, i.e. the node's weighted impurity mass.
fn impurity_mass(pos: f64, tot: f64) -> f64 {
    if tot <= 0.0 {
        return 0.0;
    }
    let neg = tot - pos;
    tot - (pos * pos + neg * neg) / tot
}

fn best_split(x: ArrayView2<'_, f64>, labels: &[bool], w: &[f64], rows: &[usize]) -> Option<(usize, f64)> {
    let (pos_all, tot_all) = weighted_counts(rows, labels, w);
    let tol = 1e-12 * tot_all.max(1.0);
    let mut best: Option<(f64, usize, f64)> = None;
    let mut sorted = rows.to_vec();
    for feature in 0..x.ncols() {
        sorted.sort_by(|&a, &b| x[[a, feature]].total_cmp(&x[[b, feature]]).then(a.cmp(&b)));
        let (mut pos_l, mut tot_l) = (0.0, 0.0);
        for k in 0..sorted.len() - 1 {
            let i = sorted[k];
            tot_l += w[i];
            if labels[i] {
                pos_l += w[i];
            }
            let (here, next) = (x[[i, feature]], x[[sorted[k + 1], feature]]);
            if here == next {
                continue;
            }
            let score = impurity_mass(pos_l, tot_l) + impurity_mass(pos_all - pos_l, tot_all - tot_l);
            if best.is_none_or(|(b, _, _)| score < b - tol) {
                best = Some((score, feature, midpoint(here, next)));
            }
        }
    }
    best.map(|(_, f, t)| (f, t))
}

fn midpoint(a: f64, b: f64) -> f64 {
    let mid = a + (b - a) / 2.0;
    // guard against rounding up to `b` for adjacent floats
    if mid >= b {
        a
    } else {
        mid
    }
}

impl DecisionTree {
    pub fn predict_row(&self, row: &[f64]) -> f64 {
        let mut id = 0;
        loop {
            match &self.nodes[id] {
                Node::Leaf { value, .. } => return *value,
                Node::Split {
                    feature,
                    threshold,
                    left,
                    right,
                } => id = if row[*feature] <= *threshold { *left } else { *right },
            }
        }
    }

    pub fn depth(&self) -> usize {
        fn walk(nodes: &[Node], id: usize) -> usize {
            match &nodes[id] {
                Node::Leaf { .. } => 0,
                Node::Split { left, right, .. } => 1 + walk(nodes, *left).max(walk(nodes, *right)),
            }
        }
        walk(&self.nodes, 0)
    }

    pub fn to_json(&self) -> Result<String> {
        Ok(serde_json::to_string_pretty(self)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let tree: DecisionTree = serde_json::from_str(text)?;
        if tree.version != TREE_FORMAT_VERSION {
            return Err(Error::arg(format!("unsupported tree format version {}", tree.version)));
        }
        tree.check_structure()?;
        Ok(tree)
    }

    /// Every node reachable exactly once from the root, children in range.
    fn check_structure(&self) -> Result<()> {
        if self.nodes.is_empty() {
            return Err(Error::arg("tree has no nodes"));
        }
        let mut seen = vec![false; self.nodes.len()];
        let mut stack = vec![0usize];
        while let Some(id) = stack.pop() {
            if id >= self.nodes.len() || std::mem::replace(&mut seen[id], true) {
                return Err(Error::arg("tree nodes do not form a tree"));
            }
            match &self.nodes[id] {
                Node::Split {
                    feature, left, right, ..
                } => {
                    if *feature >= self.n_features {
                        return Err(Error::arg("split feature out of range"));
                    }
                    stack.extend([*left, *right]);
                }
                Node::Leaf { value, .. } => {
                    if !(0.0..=1.0).contains(value) {
                        return Err(Error::arg("leaf value outside [0, 1]"));
                    }
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return Err(Error::arg("tree has unreachable nodes"));
        }
        Ok(())
    }
}

impl Predictor for DecisionTree {
    fn n_features(&self) -> usize {
        self.n_features
    }

    fn predict_batch(&self, rows: ArrayView2<'_, f64>) -> Result<Vec<f64>> {
        Ok(rows
            .rows()
            .into_iter()
            .map(|r| match r.as_slice() {
                Some(s) => self.predict_row(s),
                None => self.predict_row(&r.to_vec()),
            })
            .collect())
    }
}
