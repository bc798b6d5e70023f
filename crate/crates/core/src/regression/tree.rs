//! Greedy CART regression trees stored as flat node arrays.
//!
//! JSON layout of one tree:
//!
//! ```json
//! {"nodes": [
//!   {"value": 5.0, "cover": 4.0,
//!    "split": {"feature_index": 0, "threshold": 2.5, "left": 1, "right": 2, "gain": 100.0}},
//!   {"value": 0.0, "cover": 2.0},
//!   {"value": 10.0, "cover": 2.0}
//! ]}
//! ```
//!
//! Node 0 is the root. A row goes left when `x[feature_index] <= threshold`.
//! `value` is the mean training target routed to the node and `cover` the
//! number of training samples (bootstrap duplicates counted).

use rand::seq::index::sample;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{check_xy, HyperParams, RegressionError};
use crate::seed;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Split {
    pub feature_index: usize,
    pub threshold: f64,
    pub left: usize,
    pub right: usize,
    /// SSE reduction achieved by the split.
    #[serde(default)]
    pub gain: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Node {
    pub value: f64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cover: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub split: Option<Split>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Tree {
    pub nodes: Vec<Node>,
}

impl Tree {
    pub fn leaf(value: f64, cover: f64) -> Self {
        Self {
            nodes: vec![Node {
                value,
                cover: Some(cover),
                split: None,
            }],
        }
    }

    pub fn predict_row(&self, x: &[f64]) -> f64 {
        let mut i = 0;
        loop {
            let node = &self.nodes[i];
            match node.split {
                Some(s) => i = if x[s.feature_index] <= s.threshold { s.left } else { s.right },
                None => return node.value,
            }
        }
    }

    /// Index of the leaf that `x` lands in.
    pub fn leaf_index(&self, x: &[f64]) -> usize {
        let mut i = 0;
        while let Some(s) = self.nodes[i].split {
            i = if x[s.feature_index] <= s.threshold { s.left } else { s.right };
        }
        i
    }

    pub fn depth(&self) -> usize {
        fn go(t: &Tree, i: usize) -> usize {
            match t.nodes[i].split {
                Some(s) => 1 + go(t, s.left).max(go(t, s.right)),
                None => 0,
            }
        }
        go(self, 0)
    }

    /// Structural checks for trees read from disk: children point forward,
    /// every node is reached once and features are in range.
    pub fn validate(&self, n_features: usize) -> Result<(), RegressionError> {
        let bad = |m: String| Err(RegressionError::MalformedModel(m));
        if self.nodes.is_empty() {
            return bad("tree has no nodes".into());
        }
        let mut seen = vec![false; self.nodes.len()];
        seen[0] = true;
        for (i, n) in self.nodes.iter().enumerate() {
            if let Some(s) = n.split {
                if s.feature_index >= n_features {
                    return bad(format!("node {i} splits on feature {} of {n_features}", s.feature_index));
                }
                for c in [s.left, s.right] {
                    if c <= i || c >= self.nodes.len() || seen[c] {
                        return bad(format!("node {i} has invalid child {c}"));
                    }
                    seen[c] = true;
                }
            }
        }
        if seen.iter().any(|s| !s) {
            return bad("unreachable nodes".into());
        }
        Ok(())
    }
}

struct Builder<'a, R> {
    x: &'a [Vec<f64>],
    y: &'a [f64],
    params: &'a HyperParams,
    n_candidates: usize,
    rng: &'a mut R,
    nodes: Vec<Node>,
}

struct Best {
    gain: f64,
    feature: usize,
    threshold: f64,
}

impl<R: Rng> Builder<'_, R> {
    fn candidates(&mut self) -> Vec<usize> {
        let d = self.x[0].len();
        if self.n_candidates >= d {
            return (0..d).collect();
        }
        let mut f = sample(self.rng, d, self.n_candidates).into_vec();
        f.sort_unstable();
        f
    }

    fn best_split(&mut self, idx: &[usize]) -> Option<Best> {
        let m = idx.len();
        let msl = self.params.min_samples_leaf;
        let total: f64 = idx.iter().map(|&i| self.y[i]).sum();
        let base = total * total / m as f64;
        // Gains closer than this are ties, resolved by (feature, threshold).
        let tie = 1e-12 * idx.iter().map(|&i| self.y[i] * self.y[i]).sum::<f64>();
        let mut best: Option<Best> = None;
        let mut order = idx.to_vec();
        for f in self.candidates() {
            let x = self.x;
            order.sort_by(|&a, &b| x[a][f].total_cmp(&x[b][f]));
            let mut left = 0.0;
            for k in 0..m - 1 {
                left += self.y[order[k]];
                let nl = k + 1;
                let nr = m - nl;
                let (a, b) = (x[order[k]][f], x[order[k + 1]][f]);
                if nl < msl || nr < msl || a == b {
                    continue;
                }
                let right = total - left;
                let gain = left * left / nl as f64 + right * right / nr as f64 - base;
                if best.as_ref().is_none_or(|bst| gain > bst.gain + tie) {
                    best = Some(Best {
                        gain,
                        feature: f,
                        threshold: 0.5 * (a + b),
                    });
                }
            }
        }
        best
    }

    fn grow(&mut self, idx: Vec<usize>, depth: usize) -> usize {
        let m = idx.len();
        let mean = idx.iter().map(|&i| self.y[i]).sum::<f64>() / m as f64;
        let me = self.nodes.len();
        self.nodes.push(Node {
            value: mean,
            cover: Some(m as f64),
            split: None,
        });
        let sse: f64 = idx.iter().map(|&i| (self.y[i] - mean).powi(2)).sum();
        let depth_ok = self.params.max_depth.is_none_or(|d| depth < d);
        if !depth_ok || m < 2 * self.params.min_samples_leaf || sse <= 0.0 {
            return me;
        }
        let Some(best) = self.best_split(&idx) else {
            return me;
        };
        if !(best.gain > 1e-12 * sse) {
            return me;
        }
        let (l, r): (Vec<usize>, Vec<usize>) = idx
            .into_iter()
            .partition(|&i| self.x[i][best.feature] <= best.threshold);
        let left = self.grow(l, depth + 1);
        let right = self.grow(r, depth + 1);
        self.nodes[me].split = Some(Split {
            feature_index: best.feature,
            threshold: best.threshold,
            left,
            right,
            gain: best.gain,
        });
        me
    }
}

/// Grows a tree on the rows listed in `idx` (repeats allowed).
pub(crate) fn grow_tree<R: Rng>(x: &[Vec<f64>], y: &[f64], idx: Vec<usize>, params: &HyperParams, rng: &mut R) -> Tree {
    let mut b = Builder {
        x,
        y,
        params,
        n_candidates: params.candidate_count(x[0].len()),
        rng,
        nodes: Vec::new(),
    };
    b.grow(idx, 0);
    Tree { nodes: b.nodes }
}

/// Fits one CART tree on all rows. Candidate features per split are drawn
/// from the stream `(seed, 0)`, matching tree 0 of an unbootstrapped forest.
pub fn fit_tree(x: &[Vec<f64>], y: &[f64], params: &HyperParams, seed: u64) -> Result<Tree, RegressionError> {
    check_xy(x, y)?;
    params.validate()?;
    let mut rng = seed::rng(seed, &[0]);
    Ok(grow_tree(x, y, (0..x.len()).collect(), params, &mut rng))
}

#[cfg(test)]
pub(crate) mod oracle {
    //! Exhaustive root-split search: every feature, every midpoint between
    //! consecutive distinct values, SSE computed directly from the partition.

    pub fn best_root_split(x: &[Vec<f64>], y: &[f64], min_leaf: usize) -> Option<(usize, f64, f64)> {
        let sse = |v: &[f64]| {
            let m = v.iter().sum::<f64>() / v.len() as f64;
            v.iter().map(|a| (a - m).powi(2)).sum::<f64>()
        };
        let parent = sse(y);
        let mut all: Vec<(usize, f64, f64)> = Vec::new();
        for f in 0..x[0].len() {
            let mut vals: Vec<f64> = x.iter().map(|r| r[f]).collect();
            vals.sort_by(f64::total_cmp);
            vals.dedup();
            for w in vals.windows(2) {
                let t = 0.5 * (w[0] + w[1]);
                let (l, r): (Vec<f64>, Vec<f64>) = {
                    let mut l = Vec::new();
                    let mut r = Vec::new();
                    for (row, &t_) in x.iter().zip(y) {
                        if row[f] <= t { l.push(t_) } else { r.push(t_) }
                    }
                    (l, r)
                };
                if l.len() < min_leaf || r.len() < min_leaf {
                    continue;
                }
                all.push((f, t, parent - sse(&l) - sse(&r)));
            }
        }
        // Equal gains up to rounding go to the lowest (feature, threshold).
        let top = all.iter().map(|c| c.2).fold(f64::NEG_INFINITY, f64::max);
        let tie = 1e-12 * y.iter().map(|v| v * v).sum::<f64>();
        all.into_iter()
            .filter(|c| c.2 >= top - tie)
            .min_by(|a, b| a.0.cmp(&b.0).then(a.1.total_cmp(&b.1)))
    }
}
