//! Random regression forest with variance-reduction splits.
//!
//! Training is deterministic in the seed and independent of sample order:
//! bootstrap weights are Poisson(1) draws seeded by each sample's content, the
//! per-node feature subsets are seeded by the node's position in the tree, and
//! every node keeps its samples in a content-derived order.

use std::fmt::Write as _;

use rand::seq::SliceRandom;
use rand_distr::{Distribution, Poisson};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::{derive, hash_f64s, rng};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ForestConfig {
    pub n_trees: usize,
    /// `None` grows until leaves are pure or too small.
    pub max_depth: Option<usize>,
    pub min_leaf: usize,
    /// `None` means ⌈√d⌉.
    pub features_per_split: Option<usize>,
    pub bootstrap: bool,
    pub seed: u64,
}

impl Default for ForestConfig {
    fn default() -> Self {
        Self {
            n_trees: 100,
            max_depth: Some(12),
            min_leaf: 2,
            features_per_split: None,
            bootstrap: true,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
enum Node {
    Split { feature: usize, threshold: f64, right: usize },
    Leaf { value: f64 },
}

/// Nodes in pre-order; a split's left child directly follows it.
#[derive(Debug, Clone, PartialEq)]
pub struct Tree {
    nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64) -> Self {
        Self {
            nodes: vec![Node::Leaf { value }],
        }
    }

    pub fn predict(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            match self.nodes[i] {
                Node::Leaf { value } => return value,
                Node::Split {
                    feature,
                    threshold,
                    right,
                } => i = if x[feature] <= threshold { i + 1 } else { right },
            }
        }
    }

    pub fn node_count(&self) -> usize {
        self.nodes.len()
    }

    fn max_feature(&self) -> Option<usize> {
        self.nodes
            .iter()
            .filter_map(|n| match n {
                Node::Split { feature, .. } => Some(*feature),
                Node::Leaf { .. } => None,
            })
            .max()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct ForestModel {
    n_features: usize,
    trees: Vec<Tree>,
    importances: Vec<f64>,
}

impl ForestModel {
    pub fn from_trees(n_features: usize, trees: Vec<Tree>, importances: Vec<f64>) -> Result<Self> {
        if trees.is_empty() {
            return Err(Error::Data("a forest needs at least one tree".into()));
        }
        if importances.len() != n_features || importances.iter().any(|v| !(*v >= 0.0)) {
            return Err(Error::Data("importances must be non-negative, one per feature".into()));
        }
        if trees.iter().filter_map(Tree::max_feature).any(|f| f >= n_features) {
            return Err(Error::Data("a split references a missing feature".into()));
        }
        Ok(Self {
            n_features,
            trees,
            importances,
        })
    }

    pub fn n_features(&self) -> usize {
        self.n_features
    }

    pub fn trees(&self) -> &[Tree] {
        &self.trees
    }

    /// Total variance reduction per feature, normalized to sum to 1 (all zero
    /// when no split was made).
    pub fn importances(&self) -> &[f64] {
        &self.importances
    }

    pub fn predict(&self, x: &[f64]) -> Result<f64> {
        if x.len() != self.n_features {
            return Err(Error::Shape(format!(
                "model expects {} features, got {}",
                self.n_features,
                x.len()
            )));
        }
        Ok(self.trees.iter().map(|t| t.predict(x)).sum::<f64>() / self.trees.len() as f64)
    }

    /// Plain-text model: a header, the importances, then each tree in pre-order
    /// with `S <feature> <threshold>` and `L <value>` lines.
    pub fn to_text(&self) -> String {
        let mut s = String::from("bogwatch-forest 1\n");
        let _ = writeln!(s, "features {}", self.n_features);
        let imp: Vec<String> = self.importances.iter().map(|v| format!("{v:?}")).collect();
        let _ = writeln!(s, "importances {}", imp.join(" "));
        let _ = writeln!(s, "trees {}", self.trees.len());
        for t in &self.trees {
            let _ = writeln!(s, "tree {}", t.nodes.len());
            for n in &t.nodes {
                match n {
                    Node::Split { feature, threshold, .. } => {
                        let _ = writeln!(s, "S {feature} {threshold:?}");
                    }
                    Node::Leaf { value } => {
                        let _ = writeln!(s, "L {value:?}");
                    }
                }
            }
        }
        s
    }

    pub fn from_text(text: &str) -> Result<Self> {
        let mut lines = text.lines().enumerate().filter(|(_, l)| !l.trim().is_empty());
        let mut next = |what: &str| -> Result<(usize, Vec<&str>)> {
            let (i, line) = lines
                .next()
                .ok_or_else(|| Error::Data(format!("forest file ends before {what}")))?;
            Ok((i + 1, line.split_whitespace().collect()))
        };
        let bad = |line: usize, msg: &str| Error::Data(format!("forest file line {line}: {msg}"));
        let num = |line: usize, s: &str| -> Result<f64> { s.parse().map_err(|_| bad(line, "bad number")) };
        let int = |line: usize, s: &str| -> Result<usize> { s.parse().map_err(|_| bad(line, "bad integer")) };

        let (l, h) = next("header")?;
        if h != ["bogwatch-forest", "1"] {
            return Err(bad(l, "not a forest model file"));
        }
        let (l, f) = next("feature count")?;
        if f.len() != 2 || f[0] != "features" {
            return Err(bad(l, "expected `features <n>`"));
        }
        let n_features = int(l, f[1])?;
        let (l, imp) = next("importances")?;
        if imp.first() != Some(&"importances") {
            return Err(bad(l, "expected importances"));
        }
        let importances = imp[1..].iter().map(|v| num(l, v)).collect::<Result<Vec<_>>>()?;
        let (l, t) = next("tree count")?;
        if t.len() != 2 || t[0] != "trees" {
            return Err(bad(l, "expected `trees <n>`"));
        }
        let n_trees = int(l, t[1])?;
        let mut trees = Vec::with_capacity(n_trees);
        for _ in 0..n_trees {
            let (l, th) = next("tree header")?;
            if th.len() != 2 || th[0] != "tree" {
                return Err(bad(l, "expected `tree <nodes>`"));
            }
            let count = int(l, th[1])?;
            let mut raw = Vec::with_capacity(count);
            for _ in 0..count {
                let (l, n) = next("tree node")?;
                raw.push(match n.as_slice() {
                    ["S", feat, thr] => (l, Some((int(l, feat)?, num(l, thr)?)), 0.0),
                    ["L", v] => (l, None, num(l, v)?),
                    _ => return Err(bad(l, "expected `S <feature> <threshold>` or `L <value>`")),
                });
            }
            trees.push(Tree {
                nodes: link_preorder(&raw)?,
            });
        }
        if next("end").is_ok() {
            return Err(Error::Data("trailing content after the last tree".into()));
        }
        Self::from_trees(n_features, trees, importances)
    }
}

/// Parsed node line: depth, optional (feature, threshold), value.
type RawNode = (usize, Option<(usize, f64)>, f64);

/// Resolves right-child indices of a pre-order node list.
fn link_preorder(raw: &[RawNode]) -> Result<Vec<Node>> {
    fn walk(raw: &[RawNode], i: usize, out: &mut Vec<Node>) -> Result<usize> {
        let Some(&(_, split, value)) = raw.get(i) else {
            return Err(Error::Data("tree node list is truncated".into()));
        };
        match split {
            None => {
                out[i] = Node::Leaf { value };
                Ok(i + 1)
            }
            Some((feature, threshold)) => {
                let right = walk(raw, i + 1, out)?;
                out[i] = Node::Split {
                    feature,
                    threshold,
                    right,
                };
                walk(raw, right, out)
            }
        }
    }
    let mut out = vec![Node::Leaf { value: 0.0 }; raw.len()];
    let end = walk(raw, 0, &mut out)?;
    if end != raw.len() {
        return Err(Error::Data(format!("tree has {} unreachable nodes", raw.len() - end)));
    }
    Ok(out)
}

pub(crate) fn check_training_data(x: &[Vec<f64>], y: &[f64]) -> Result<usize> {
    if x.len() != y.len() {
        return Err(Error::Shape(format!("{} feature rows for {} targets", x.len(), y.len())));
    }
    if x.len() < 2 {
        return Err(Error::Data(format!("need at least 2 samples, got {}", x.len())));
    }
    let d = x[0].len();
    if d == 0 || x.iter().any(|r| r.len() != d) {
        return Err(Error::Shape("feature rows must share a non-zero length".into()));
    }
    if y.iter().any(|v| !v.is_finite()) || x.iter().flatten().any(|v| !v.is_finite()) {
        return Err(Error::Data("features and targets must be finite".into()));
    }
    Ok(d)
}

struct Grower<'a> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    w: Vec<f64>,
    key: Vec<u64>,
    cfg: &'a ForestConfig,
    mtry: usize,
    tree_seed: u64,
    nodes: Vec<Node>,
    gains: Vec<f64>,
}

struct Best {
    feature: usize,
    threshold: f64,
    gain: f64,
}

impl Grower<'_> {
    fn leaf_value(&self, idx: &[usize]) -> f64 {
        let (sw, swy) = idx.iter().fold((0.0, 0.0), |(a, b), &i| (a + self.w[i], b + self.w[i] * self.y[i]));
        swy / sw
    }

    fn sse(&self, idx: &[usize]) -> f64 {
        let mean = self.leaf_value(idx);
        idx.iter().map(|&i| self.w[i] * (self.y[i] - mean).powi(2)).sum()
    }

    fn best_split(&self, idx: &[usize], node_id: u64, parent_sse: f64) -> Option<Best> {
        let d = self.x[0].len();
        let mut features: Vec<usize> = (0..d).collect();
        let mut r = rng(self.tree_seed, node_id);
        let (chosen, _) = features.partial_shuffle(&mut r, self.mtry);
        let mut chosen = chosen.to_vec();
        chosen.sort_unstable();

        let min_leaf = self.cfg.min_leaf.max(1) as f64;
        let (tw, twy, twyy) = idx.iter().fold((0.0, 0.0, 0.0), |(a, b, c), &i| {
            let (w, y) = (self.w[i], self.y[i]);
            (a + w, b + w * y, c + w * y * y)
        });
        let mut best: Option<Best> = None;
        let mut order = idx.to_vec();
        for &f in &chosen {
            order.sort_by(|&a, &b| {
                self.x[a][f]
                    .total_cmp(&self.x[b][f])
                    .then(self.y[a].total_cmp(&self.y[b]))
                    .then(self.key[a].cmp(&self.key[b]))
            });
            let (mut lw, mut lwy, mut lwyy) = (0.0, 0.0, 0.0);
            for k in 0..order.len() - 1 {
                let i = order[k];
                let (w, y) = (self.w[i], self.y[i]);
                lw += w;
                lwy += w * y;
                lwyy += w * y * y;
                let (v, v_next) = (self.x[i][f], self.x[order[k + 1]][f]);
                if v == v_next || lw < min_leaf || tw - lw < min_leaf {
                    continue;
                }
                let (rw, rwy, rwyy) = (tw - lw, twy - lwy, twyy - lwyy);
                let sse = (lwyy - lwy * lwy / lw).max(0.0) + (rwyy - rwy * rwy / rw).max(0.0);
                let gain = parent_sse - sse;
                if best.as_ref().is_none_or(|b| gain > b.gain) {
                    let mut threshold = v + (v_next - v) / 2.0;
                    if threshold >= v_next {
                        threshold = v;
                    }
                    best = Some(Best {
                        feature: f,
                        threshold,
                        gain,
                    });
                }
            }
        }
        best.filter(|b| b.gain > 1e-12 * parent_sse.max(1e-12))
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize, node_id: u64) {
        let at = self.nodes.len();
        let value = self.leaf_value(&idx);
        self.nodes.push(Node::Leaf { value });
        let total_w: f64 = idx.iter().map(|&i| self.w[i]).sum();
        if self.cfg.max_depth.is_some_and(|m| depth >= m) || total_w < 2.0 * self.cfg.min_leaf.max(1) as f64 {
            return;
        }
        let parent_sse = self.sse(&idx);
        if parent_sse <= 0.0 {
            return;
        }
        let Some(best) = self.best_split(&idx, node_id, parent_sse) else {
            return;
        };
        // Exact SSE of the chosen split, not the running-sum estimate.
        let (left, right): (Vec<usize>, Vec<usize>) =
            idx.into_iter().partition(|&i| self.x[i][best.feature] <= best.threshold);
        let gain = (parent_sse - self.sse(&left) - self.sse(&right)).max(0.0);
        self.gains[best.feature] += gain;
        self.grow(left, depth + 1, derive(node_id, 1));
        let right_at = self.nodes.len();
        self.nodes[at] = Node::Split {
            feature: best.feature,
            threshold: best.threshold,
            right: right_at,
        };
        self.grow(right, depth + 1, derive(node_id, 2));
    }
}

pub fn train_random_forest(x: &[Vec<f64>], y: &[f64], cfg: &ForestConfig) -> Result<ForestModel> {
    let d = check_training_data(x, y)?;
    if cfg.n_trees == 0 {
        return Err(Error::InvalidParameter("forest needs at least one tree".into()));
    }
    let mtry = cfg
        .features_per_split
        .unwrap_or_else(|| (d as f64).sqrt().ceil() as usize)
        .clamp(1, d);
    let key: Vec<u64> = x
        .iter()
        .zip(y)
        .map(|(row, &t)| hash_f64s(row.iter().copied().chain(std::iter::once(t))))
        .collect();
    // Content-derived base order so results do not depend on input order.
    let mut base: Vec<usize> = (0..x.len()).collect();
    base.sort_by(|&a, &b| key[a].cmp(&key[b]).then(y[a].total_cmp(&y[b])));
    let poisson = Poisson::new(1.0).expect("valid rate");

    let grown: Vec<(Tree, Vec<f64>)> = (0..cfg.n_trees)
        .into_par_iter()
        .map(|t| {
            let tree_seed = derive(cfg.seed, t as u64);
            let w: Vec<f64> = if cfg.bootstrap {
                key.iter().map(|&k| poisson.sample(&mut rng(tree_seed, k))).collect()
            } else {
                vec![1.0; x.len()]
            };
            let idx: Vec<usize> = base.iter().copied().filter(|&i| w[i] > 0.0).collect();
            let mut g = Grower {
                x,
                y,
                w,
                key: key.clone(),
                cfg,
                mtry,
                tree_seed,
                nodes: Vec::new(),
                gains: vec![0.0; d],
            };
            if idx.is_empty() {
                let mean = y.iter().sum::<f64>() / y.len() as f64;
                return (Tree::leaf(mean), g.gains);
            }
            g.grow(idx, 0, 1);
            (Tree { nodes: g.nodes }, g.gains)
        })
        .collect();

    let mut gains = vec![0.0; d];
    let mut trees = Vec::with_capacity(grown.len());
    for (tree, g) in grown {
        for (a, b) in gains.iter_mut().zip(g) {
            *a += b;
        }
        trees.push(tree);
    }
    let total: f64 = gains.iter().sum();
    if total > 0.0 {
        for g in &mut gains {
            *g /= total;
        }
    }
    ForestModel::from_trees(d, trees, gains)
}

/// Feature names by descending importance; ties keep index order.
pub fn rank_features(importances: &[f64], names: &[&str]) -> Result<Vec<String>> {
    if importances.len() != names.len() {
        return Err(Error::Shape(format!(
            "{} importances for {} feature names",
            importances.len(),
            names.len()
        )));
    }
    let mut order: Vec<usize> = (0..names.len()).collect();
    order.sort_by(|&a, &b| importances[b].total_cmp(&importances[a]).then(a.cmp(&b)));
    Ok(order.into_iter().map(|i| names[i].to_string()).collect())
}
